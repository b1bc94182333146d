use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::data::SocialGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            p: 1.0,
            q: 1.0,
            walk_length: 80,
            walks_per_node: 10,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(EmbedError::Config(format!(
                "p and q must be positive (p={}, q={})",
                self.p, self.q
            )));
        }
        if self.walk_length < 2 {
            return Err(EmbedError::Config(format!(
                "walk_length must be at least 2, got {}",
                self.walk_length
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walks {
    pub walks: Vec<Vec<usize>>,
    pub isolated_skipped: usize,
}

/// Unnormalized second-order weights for stepping from `cur` having
/// arrived from `prev`, aligned with `graph.neighbors(cur)`.
///
/// Returning to `prev` weighs `1/p`, a neighbor also adjacent to `prev`
/// weighs 1, anything farther weighs `1/q`.
pub fn transition_weights(
    graph: &SocialGraph,
    prev: usize,
    cur: usize,
    p: f64,
    q: f64,
) -> Vec<f64> {
    graph
        .neighbors(cur)
        .iter()
        .map(|&x| {
            if x == prev {
                1.0 / p
            } else if graph.has_edge(prev, x) {
                1.0
            } else {
                1.0 / q
            }
        })
        .collect()
}

fn sample_weighted(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

fn walk_from(
    graph: &SocialGraph,
    start: usize,
    cfg: &WalkConfig,
    uniform: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    while walk.len() < cfg.walk_length {
        let cur = *walk.last().expect("non-empty");
        let nbrs = graph.neighbors(cur);
        if nbrs.is_empty() {
            break;
        }
        let next = if walk.len() == 1 || uniform {
            nbrs[rng.random_range(0..nbrs.len())]
        } else {
            let prev = walk[walk.len() - 2];
            nbrs[sample_weighted(&transition_weights(graph, prev, cur, cfg.p, cfg.q), rng)]
        };
        walk.push(next);
    }
    walk
}

/// Generates `walks_per_node` biased walks from every node with at least
/// one neighbor. Each start node draws from its own generator seeded with
/// `seed ^ node`, so the output does not depend on thread scheduling.
/// Walks are ordered round by round, nodes ascending within a round.
pub fn node2vec_walks(graph: &SocialGraph, cfg: &WalkConfig) -> Result<Walks, EmbedError> {
    cfg.validate()?;
    let uniform = cfg.p == 1.0 && cfg.q == 1.0;
    let per_node: Vec<Option<Vec<Vec<usize>>>> = (0..graph.num_nodes())
        .into_par_iter()
        .map(|node| {
            if graph.degree(node) == 0 {
                return None;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ node as u64);
            Some(
                (0..cfg.walks_per_node)
                    .map(|_| walk_from(graph, node, cfg, uniform, &mut rng))
                    .collect(),
            )
        })
        .collect();
    let isolated_skipped = per_node.iter().filter(|w| w.is_none()).count();
    if isolated_skipped > 0 {
        log::info!("skipped {isolated_skipped} isolated nodes");
    }
    let mut walks = Vec::new();
    for round in 0..cfg.walks_per_node {
        for w in per_node.iter().flatten() {
            walks.push(w[round].clone());
        }
    }
    Ok(Walks {
        walks,
        isolated_skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_derived_weights() {
        // triangle a=0,b=1,c=2 plus pendant d=3 on a
        let g = SocialGraph::from_edges(4, [(0, 1), (1, 2), (0, 2), (0, 3)], false);
        let w = transition_weights(&g, 0, 1, 0.25, 4.0);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(w, vec![4.0, 1.0]);
    }

    #[test]
    fn length_two_walks() {
        let g = SocialGraph::from_edges(3, [(0, 1), (1, 2)], false);
        let cfg = WalkConfig {
            walk_length: 2,
            walks_per_node: 3,
            ..Default::default()
        };
        let w = node2vec_walks(&g, &cfg).unwrap();
        assert_eq!(w.walks.len(), 9);
        for walk in &w.walks {
            assert_eq!(walk.len(), 2);
            assert!(g.has_edge(walk[0], walk[1]));
        }
    }

    #[test]
    fn isolated_nodes_skipped() {
        let g = SocialGraph::from_edges(3, [(0, 1)], false);
        let w = node2vec_walks(
            &g,
            &WalkConfig {
                walks_per_node: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(w.isolated_skipped, 1);
        assert_eq!(w.walks.len(), 4);
    }

    #[test]
    fn directed_walk_stops_at_sink() {
        let g = SocialGraph::from_edges(3, [(0, 1), (1, 2)], true);
        let cfg = WalkConfig {
            walk_length: 10,
            walks_per_node: 1,
            ..Default::default()
        };
        let w = node2vec_walks(&g, &cfg).unwrap();
        assert_eq!(w.walks[0], vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_config() {
        let g = SocialGraph::from_edges(2, [(0, 1)], false);
        assert!(node2vec_walks(
            &g,
            &WalkConfig {
                p: 0.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(node2vec_walks(
            &g,
            &WalkConfig {
                walk_length: 1,
                ..Default::default()
            }
        )
        .is_err());
    }
}
