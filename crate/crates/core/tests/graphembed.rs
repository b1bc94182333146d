use std::collections::HashMap;

use tandrud::data::SocialGraph;
use tandrud::graphembed::{
    context_pairs, cosine_similarity_matrix, embed_graph, node2vec_walks, train_sgns, SgnsConfig,
    WalkConfig,
};
use tandrud::numeric::Tensor;

/// Frequencies of the node following `prev -> cur` across all walks.
fn next_frequencies(walks: &[Vec<usize>], prev: usize, cur: usize) -> (HashMap<usize, f64>, usize) {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    let mut total = 0;
    for w in walks {
        for t in w.windows(3) {
            if t[0] == prev && t[1] == cur {
                *counts.entry(t[2]).or_default() += 1;
                total += 1;
            }
        }
    }
    (
        counts
            .into_iter()
            .map(|(k, v)| (k, v as f64 / total as f64))
            .collect(),
        total,
    )
}

fn walk_cfg(p: f64, q: f64, walk_length: usize, walks_per_node: usize) -> WalkConfig {
    WalkConfig {
        p,
        q,
        walk_length,
        walks_per_node,
        seed: 17,
    }
}

#[test]
fn biased_transitions_on_triangle_with_pendant() {
    // a=0, b=1, c=2, d=3; triangle a-b-c plus d-a.
    let g = SocialGraph::from_edges(4, [(0, 1), (1, 2), (2, 0), (3, 0)], false);
    let walks = node2vec_walks(&g, &walk_cfg(0.25, 4.0, 80, 8000)).unwrap();
    let (freq, total) = next_frequencies(&walks.walks, 0, 1);
    assert!(total >= 100_000, "only {total} draws");
    assert!((freq[&0] - 0.8).abs() < 0.01, "{freq:?}");
    assert!((freq[&2] - 0.2).abs() < 0.01, "{freq:?}");
    assert!(!freq.contains_key(&3));
}

#[test]
fn biased_transitions_on_five_nodes() {
    let g = SocialGraph::from_edges(5, [(0, 1), (1, 2), (1, 4), (2, 4), (2, 3)], false);
    let walks = node2vec_walks(&g, &walk_cfg(2.0, 0.5, 80, 4000)).unwrap();

    // at 1 from 0: {0: 1/p, 2: 1/q, 4: 1/q}
    let (freq, total) = next_frequencies(&walks.walks, 0, 1);
    assert!(total >= 50_000, "only {total} draws");
    assert!((freq[&0] - 1.0 / 9.0).abs() < 0.01);
    assert!((freq[&2] - 4.0 / 9.0).abs() < 0.01);
    assert!((freq[&4] - 4.0 / 9.0).abs() < 0.01);

    // at 2 from 1: {1: 1/p, 3: 1/q, 4: 1 (also a neighbour of 1)}
    let (freq, total) = next_frequencies(&walks.walks, 1, 2);
    assert!(total >= 50_000, "only {total} draws");
    assert!((freq[&1] - 1.0 / 7.0).abs() < 0.01);
    assert!((freq[&3] - 4.0 / 7.0).abs() < 0.01);
    assert!((freq[&4] - 2.0 / 7.0).abs() < 0.01);
}

#[test]
fn unbiased_walks_are_uniform() {
    let g = SocialGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)], false);
    let walks = node2vec_walks(&g, &walk_cfg(1.0, 1.0, 100, 500)).unwrap();
    let mut counts = [[0usize; 4]; 4];
    for w in &walks.walks {
        for s in w.windows(2) {
            counts[s[0]][s[1]] += 1;
        }
    }
    let steps: usize = counts.iter().flatten().sum();
    assert!(steps >= 100_000);
    let mut chi2 = 0.0;
    let mut df = 0;
    for (u, row) in counts.iter().enumerate() {
        let nbrs = g.neighbors(u);
        let n: usize = nbrs.iter().map(|&v| row[v]).sum();
        let expected = n as f64 / nbrs.len() as f64;
        for &v in nbrs {
            chi2 += (row[v] as f64 - expected).powi(2) / expected;
            assert!((row[v] as f64 / n as f64 - 1.0 / nbrs.len() as f64).abs() < 0.01);
        }
        df += nbrs.len() - 1;
    }
    // Upper 1% point of chi-square with 2 degrees of freedom.
    assert_eq!(df, 2);
    assert!(chi2 < 9.2103, "chi2 = {chi2}");
}

#[test]
fn two_step_walks_are_start_and_neighbor() {
    let g = SocialGraph::from_edges(5, [(0, 1), (0, 2), (3, 4)], false);
    let walks = node2vec_walks(&g, &walk_cfg(1.0, 1.0, 2, 3)).unwrap();
    assert_eq!(walks.walks.len(), 15);
    for w in &walks.walks {
        assert_eq!(w.len(), 2);
        assert!(g.has_edge(w[0], w[1]));
    }
}

fn cliques(k: usize) -> SocialGraph {
    let mut edges = Vec::new();
    for base in [0, k] {
        for a in 0..k {
            for b in a + 1..k {
                edges.push((base + a, base + b));
            }
        }
    }
    SocialGraph::from_edges(2 * k, edges, false)
}

#[test]
fn cliques_separate_in_embedding_space() {
    let g = cliques(6);
    let sg = SgnsConfig {
        dim: 16,
        epochs: 5,
        ..SgnsConfig::default()
    };
    let (emb, report) = embed_graph(&g, &walk_cfg(1.0, 1.0, 20, 10), &sg).unwrap();
    let e = cosine_similarity_matrix(&emb.values);
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for a in 0..12 {
        for b in 0..12 {
            if a == b {
                continue;
            }
            if (a < 6) == (b < 6) {
                intra += e.get(a, b);
                ni += 1;
            } else {
                inter += e.get(a, b);
                nx += 1;
            }
        }
    }
    let (intra, inter) = (intra / ni as f64, inter / nx as f64);
    assert!(intra > inter, "intra {intra} inter {inter}");
    assert_eq!(report.epoch_loss.len(), 5);
}

#[test]
fn sgns_loss_trends_down() {
    let g = cliques(8);
    let walks = node2vec_walks(&g, &walk_cfg(1.0, 1.0, 30, 5)).unwrap();
    let cfg = SgnsConfig {
        dim: 16,
        epochs: 8,
        lr: 0.025,
        ..SgnsConfig::default()
    };
    let (_, report) = train_sgns(&walks.walks, 16, &cfg);
    let l = &report.epoch_loss;
    assert_eq!(l.len(), 8);
    assert!(l.last().unwrap() < l.first().unwrap(), "{l:?}");
    let n = l.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = l.iter().sum::<f64>() / n;
    let slope: f64 = l
        .iter()
        .enumerate()
        .map(|(x, y)| (x as f64 - mean_x) * (y - mean_y))
        .sum::<f64>();
    assert!(slope < 0.0, "{l:?}");
}

#[test]
fn embedding_is_deterministic() {
    let g = cliques(5);
    let sg = SgnsConfig {
        dim: 8,
        epochs: 2,
        seed: 4,
        ..SgnsConfig::default()
    };
    let w = walk_cfg(1.0, 2.0, 15, 4);
    let (a, _) = embed_graph(&g, &w, &sg).unwrap();
    let (b, _) = embed_graph(&g, &w, &sg).unwrap();
    let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.values), bits(&b.values));
}

#[test]
fn window_one_pairs_are_adjacent_positions() {
    let walk = [4, 1, 7, 7, 2];
    let pairs = context_pairs(&walk, 1);
    assert_eq!(pairs.len(), 2 * (walk.len() - 1));
    assert_eq!(
        pairs,
        vec![
            (4, 1),
            (1, 4),
            (1, 7),
            (7, 1),
            (7, 7),
            (7, 7),
            (7, 2),
            (2, 7)
        ]
    );
}

#[test]
fn single_node_graph_gives_zero_row() {
    let g = SocialGraph::from_edges(1, [], false);
    let (emb, _) = embed_graph(
        &g,
        &WalkConfig::default(),
        &SgnsConfig {
            dim: 4,
            ..SgnsConfig::default()
        },
    )
    .unwrap();
    assert!(emb.trained);
    assert_eq!(emb.row(0), &[0.0; 4]);
    assert!(emb.isolated[0]);
}

#[test]
fn similarity_is_symmetric_and_bounded() {
    let mut state = 12345u64;
    for _ in 0..50 {
        let values: Vec<f64> = (0..6 * 5)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 2001) as f64 / 1000.0 - 1.0
            })
            .collect();
        let e = cosine_similarity_matrix(&Tensor::matrix(6, 5, values).unwrap());
        for a in 0..6 {
            for b in 0..6 {
                assert_eq!(e.get(a, b), e.get(b, a));
                assert!(e.get(a, b).abs() <= 1.0 + 1e-12);
            }
        }
    }
}
