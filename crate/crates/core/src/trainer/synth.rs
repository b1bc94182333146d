use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::data::{Cascade, CascadeCorpus, DataError, Event, SocialGraph, Vocab};

/// Synthetic cascades with the true trigger of every activation.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub corpus: CascadeCorpus,
    /// Planted parent positions, parallel to `corpus.cascades`.
    pub parents: Vec<Vec<Option<usize>>>,
    /// Simulation runs whose cascade never left the seed node.
    pub dropped: usize,
}

/// Erdős–Rényi graph on `n` nodes, each undirected edge present with
/// probability `p`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> SocialGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    SocialGraph::from_edges(n, edges, false)
}

/// Preferential-attachment graph: starts from a clique on `m + 1` nodes,
/// then each new node links to `m` distinct earlier nodes drawn with
/// probability proportional to their degree.
pub fn preferential_graph(n: usize, m: usize, seed: u64) -> SocialGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = (m + 1).min(n);
    let mut edges = Vec::new();
    // Every edge endpoint once per incidence; sampling from it is
    // degree-proportional.
    let mut ends = Vec::new();
    for a in 0..core {
        for b in a + 1..core {
            edges.push((a, b));
            ends.extend([a, b]);
        }
    }
    for v in core..n {
        let mut picked: Vec<usize> = Vec::with_capacity(m);
        while picked.len() < m {
            let u = ends[rng.random_range(0..ends.len())];
            if !picked.contains(&u) {
                picked.push(u);
            }
        }
        for u in picked {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    SocialGraph::from_edges(n, edges, false)
}

#[derive(PartialEq)]
struct Pending {
    time: f64,
    node: usize,
    parent: usize,
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.node.cmp(&other.node))
            .then(self.parent.cmp(&other.parent))
    }
}

/// Continuous-time independent cascades: `runs` simulations, each from a
/// uniformly drawn seed node at time 0. When a node activates, each of
/// its neighbours gets one chance, with probability `prob`, to be
/// activated after an Exp(1) delay; the earliest successful attempt wins
/// and its source is recorded as the parent. Cascades stop growing at
/// `max_len` activations. Runs that stay at one activation are dropped.
///
/// Node `k` has raw id `k` in the returned vocabulary.
pub fn synth_generate(
    graph: &SocialGraph,
    prob: f64,
    max_len: usize,
    runs: usize,
    seed: u64,
) -> SynthCorpus {
    simulate(graph, prob, max_len, seed, runs, usize::MAX)
}

/// Like [`synth_generate`] but keeps simulating until `count` cascades of
/// length at least 2 exist, giving up after `1000 * count` runs.
pub fn synth_cascades(
    graph: &SocialGraph,
    prob: f64,
    max_len: usize,
    count: usize,
    seed: u64,
) -> SynthCorpus {
    simulate(
        graph,
        prob,
        max_len,
        seed,
        count.saturating_mul(1000),
        count,
    )
}

fn simulate(
    graph: &SocialGraph,
    prob: f64,
    max_len: usize,
    seed: u64,
    max_runs: usize,
    keep: usize,
) -> SynthCorpus {
    let n = graph.num_nodes();
    let vocab = Vocab::from_ids((0..n).map(|k| k.to_string()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cascades = Vec::new();
    let mut parents = Vec::new();
    let mut dropped = 0;
    for run in 0..max_runs {
        if n == 0 || cascades.len() >= keep {
            break;
        }
        let (events, tree) = one_cascade(graph, prob, max_len, &mut rng);
        if events.len() < 2 {
            dropped += 1;
            continue;
        }
        cascades.push(Cascade {
            id: format!("s{run}"),
            events,
        });
        parents.push(tree);
    }
    SynthCorpus {
        corpus: CascadeCorpus::new(cascades, vocab),
        parents,
        dropped,
    }
}

fn one_cascade(
    graph: &SocialGraph,
    prob: f64,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Event>, Vec<Option<usize>>) {
    let n = graph.num_nodes();
    let start = rng.random_range(0..n);
    let mut position = vec![usize::MAX; n];
    let mut events = Vec::new();
    let mut tree = Vec::new();
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Pending {
        time: 0.0,
        node: start,
        parent: usize::MAX,
    }));
    while let Some(Reverse(next)) = heap.pop() {
        if position[next.node] != usize::MAX {
            continue;
        }
        position[next.node] = events.len();
        tree.push((next.parent != usize::MAX).then(|| position[next.parent]));
        events.push(Event {
            user: next.node,
            time: next.time,
        });
        if events.len() >= max_len {
            break;
        }
        for &v in graph.neighbors(next.node) {
            if position[v] == usize::MAX && rng.random_bool(prob) {
                let delay: f64 = rng.sample(Exp1);
                heap.push(Reverse(Pending {
                    time: next.time + delay,
                    node: v,
                    parent: next.node,
                }));
            }
        }
    }
    (events, tree)
}

/// `cascade_id<TAB>p_0 p_1 ...` with `-` marking the root.
pub fn write_trees(synth: &SynthCorpus, mut w: impl Write) -> std::io::Result<()> {
    for (c, tree) in synth.corpus.cascades.iter().zip(&synth.parents) {
        let cells: Vec<String> = tree
            .iter()
            .map(|p| p.map_or_else(|| "-".to_string(), |p| p.to_string()))
            .collect();
        writeln!(w, "{}\t{}", c.id, cells.join(" "))?;
    }
    Ok(())
}

/// A cascade id with the parent position of every event.
pub type PlantedTree = (String, Vec<Option<usize>>);

/// Reads what [`write_trees`] wrote.
pub fn read_trees(reader: impl BufRead) -> Result<Vec<PlantedTree>, DataError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::parse(n + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| DataError::parse(n + 1, "expected `id<TAB>parents`"))?;
        let parents = rest
            .split_whitespace()
            .map(|tok| match tok {
                "-" => Ok(None),
                t => t
                    .parse()
                    .map(Some)
                    .map_err(|_| DataError::parse(n + 1, format!("bad parent `{t}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push((id.to_string(), parents));
    }
    Ok(out)
}
