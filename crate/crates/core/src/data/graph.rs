use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{DataError, Vocab};

/// Adjacency lists over vocabulary indices. Lists are sorted and free of
/// duplicates and self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SocialGraph {
    adjacency: Vec<Vec<usize>>,
    directed: bool,
    edges: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraphLoadStats {
    pub lines: usize,
    pub dropped_unknown: usize,
    pub self_loops: usize,
}

impl SocialGraph {
    /// Builds a graph on `n` nodes. Undirected graphs store each edge in
    /// both endpoint lists.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        directed: bool,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            if u == v {
                continue;
            }
            adjacency[u].push(v);
            if !directed {
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let total: usize = adjacency.iter().map(Vec::len).sum();
        let edges = if directed { total } else { total / 2 };
        SocialGraph {
            adjacency,
            directed,
            edges,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Each edge once: `u < v` for undirected graphs.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edges);
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list {
                if self.directed || u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }
}

/// Parses `u v` edge lines against `vocab`. Edges touching unknown users
/// are dropped and counted; `#` lines are comments.
pub fn parse_graph(
    reader: impl BufRead,
    vocab: &Vocab,
    directed: bool,
) -> Result<(SocialGraph, GraphLoadStats), DataError> {
    let mut stats = GraphLoadStats::default();
    let mut edges = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| DataError::parse(lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        stats.lines += 1;
        let mut parts = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(DataError::parse(
                lineno,
                format!("expected two user ids, got `{trimmed}`"),
            ));
        };
        let (Some(u), Some(v)) = (vocab.get(a), vocab.get(b)) else {
            stats.dropped_unknown += 1;
            continue;
        };
        if u == v {
            stats.self_loops += 1;
            continue;
        }
        edges.push((u, v));
    }
    if stats.dropped_unknown > 0 {
        log::warn!(
            "dropped {} edges with users outside the vocabulary",
            stats.dropped_unknown
        );
    }
    Ok((SocialGraph::from_edges(vocab.len(), edges, directed), stats))
}

pub fn load_graph(
    path: &Path,
    vocab: &Vocab,
    directed: bool,
) -> Result<(SocialGraph, GraphLoadStats), DataError> {
    let f = File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_graph(BufReader::new(f), vocab, directed)
}
