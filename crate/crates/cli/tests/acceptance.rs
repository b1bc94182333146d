//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any gated criterion fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p tandrud-cli --test acceptance -- 3 8`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::oracle::{max_diff, max_diff_rows, oracle_forward, OracleInput};
use common::{toy, Toy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tandrud::data::{load_cascades_with_vocab, make_prefix_instances, SocialGraph, Vocab};
use tandrud::graphembed::{
    cosine_similarity_matrix, embed_graph, node2vec_walks, SgnsConfig, WalkConfig,
};
use tandrud::model::{AttentionAdjust, Dims, ModelConfig, Network, ParamId, ParamVars};
use tandrud::numeric::{finite_diff_check, Tape, Tensor};
use tandrud::trainer::{evaluate_scores, frequency_scores};

enum Verdict {
    Pass(String),
    Fail(String),
    NotGated(String),
}

use Verdict::*;

fn gate(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn network(t: &Toy) -> Network<'_> {
    Network::new(&t.params, &t.config, Some(&t.topology), t.time).unwrap()
}

fn gradient_check() -> Verdict {
    let start = Instant::now();
    let dims = Dims {
        users: 6,
        d: 4,
        d_g: 8,
        t_bins: 5,
    };
    let mut worst: f64 = 0.0;
    for (seed, topo) in [(1, true), (2, true), (3, false)] {
        let mut t = toy(dims, 4, seed, topo, AttentionAdjust::Literal);
        t.config.l2_lambda = 1e-3;
        let inst = make_prefix_instances(&t.cascade, 200);
        let mut scratch = t.params.clone();
        let err = finite_diff_check(
            |x| {
                scratch.assign_flat(x);
                let net = Network::new(&scratch, &t.config, Some(&t.topology), t.time).unwrap();
                let (l, g) = net.loss_and_grad(&inst, None).unwrap();
                (
                    l,
                    g.iter().flat_map(|t| t.values().iter().copied()).collect(),
                )
            },
            &t.params.flatten(),
            1e-5,
        );
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    gate(
        worst < 1e-4 && secs < 10.0,
        format!("max relative error {worst:.2e}, {secs:.2}s"),
    )
}

fn oracle_equivalence() -> Verdict {
    let dims = Dims {
        users: 9,
        d: 5,
        d_g: 6,
        t_bins: 4,
    };
    let mut worst: f64 = 0.0;
    for seed in [1, 2, 3] {
        let t = toy(dims, 6, seed, true, AttentionAdjust::Literal);
        let (users, times) = (t.users(6), t.times(6));
        let got = network(&t).forward(&users, &times, false).unwrap();
        let rows = t.topology_rows();
        let want = oracle_forward(&OracleInput {
            params: &t.params,
            topology: Some(&rows),
            time_unit: t.time.unit,
            users: &users,
            times: &times,
            literal: true,
        });
        for d in [
            max_diff_rows(got.d_recv.values(), &want.d_recv),
            max_diff_rows(got.d_send.values(), &want.d_send),
            max_diff_rows(got.u.values(), &want.u),
            max_diff_rows(got.f.values(), &want.f),
            max_diff(&got.beta, &want.beta),
            max_diff(&got.c, &want.c),
            max_diff(&got.p, &want.p),
        ] {
            worst = worst.max(d);
        }
    }
    gate(
        worst < 1e-10,
        format!("max abs difference {worst:.2e} over 3 instances"),
    )
}

fn receiver_attention(net: &Network<'_>, users: &[usize], e: Option<Tensor>) -> Tensor {
    let mut tape = Tape::new();
    let mut pv = ParamVars::new();
    let xs = tape
        .gather(
            ParamId::SenderEmb.index(),
            net.params.get(ParamId::SenderEmb),
            users,
        )
        .unwrap();
    let xr = tape
        .gather(
            ParamId::ReceiverEmb.index(),
            net.params.get(ParamId::ReceiverEmb),
            users,
        )
        .unwrap();
    let e = e.map(|e| tape.constant(e));
    let (a, _) = net.receiver_role(&mut tape, &mut pv, xs, xr, e).unwrap();
    tape.value(a).clone()
}

/// Max |p_TAN - p_AN| and |β_TAN - β_AN| with identical topology rows and
/// a zeroed topology projection.
fn ablation_gap(t: &Toy, len: usize) -> f64 {
    let mut t2 = Toy {
        params: t.params.clone(),
        topology: t.topology.clone(),
        time: t.time,
        config: t.config.clone(),
        cascade: t.cascade.clone(),
    };
    let (n, dg) = (t.topology.num_nodes(), t.topology.dim());
    t2.topology.values = Tensor::filled(&[n, dg], 0.4);
    let d = t.params.get(ParamId::TopoProj).shape()[0];
    *t2.params.get_mut(ParamId::TopoProj) = Tensor::zeros(&[d, dg]);
    *t2.params.get_mut(ParamId::TopoBias) = Tensor::zeros(&[d]);
    let off = ModelConfig {
        use_topology: false,
        ..t2.config.clone()
    };
    let an = Network::new(&t2.params, &off, None, t2.time).unwrap();
    let tan = network(&t2);
    let a = an.forward(&t2.users(len), &t2.times(len), false).unwrap();
    let b = tan.forward(&t2.users(len), &t2.times(len), false).unwrap();
    max_diff(&a.p, &b.p).max(max_diff(&a.beta, &b.beta))
}

fn normalization_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut sum_err, mut literal_gap, mut raw_gap, mut const_gap): (f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0);
    for k in 0..1000u64 {
        let dims = Dims {
            users: rng.random_range(4..14),
            d: rng.random_range(2..7),
            d_g: rng.random_range(2..7),
            t_bins: rng.random_range(2..9),
        };
        let len = rng.random_range(2..=dims.users.min(8));
        let t = toy(
            dims,
            len,
            10_000 + k,
            rng.random_bool(0.5),
            AttentionAdjust::Literal,
        );
        let net = network(&t);
        let r = net.forward(&t.users(len), &t.times(len), false).unwrap();
        for j in 1..len {
            sum_err = sum_err.max((r.alpha_recv.row_slice(j).iter().sum::<f64>() - 1.0).abs());
        }
        for j in 0..len - 1 {
            sum_err = sum_err.max((r.alpha_send.row_slice(j).iter().sum::<f64>() - 1.0).abs());
        }
        sum_err = sum_err.max((r.beta.iter().sum::<f64>() - 1.0).abs());
        sum_err = sum_err.max((r.p.iter().sum::<f64>() - 1.0).abs());

        let mut lit = Toy {
            config: ModelConfig {
                use_topology: true,
                ..t.config.clone()
            },
            ..t
        };
        literal_gap = literal_gap.max(ablation_gap(&lit, len));
        lit.config.adjust = AttentionAdjust::RawLogit;
        raw_gap = raw_gap.max(ablation_gap(&lit, len));
        lit.config.adjust = AttentionAdjust::Literal;

        let users = lit.users(len);
        let net = network(&lit);
        let plain = receiver_attention(&net, &users, None);
        let c = rng.random_range(-1.0..1.0);
        let adjusted = receiver_attention(&net, &users, Some(Tensor::filled(&[len, len], c)));
        const_gap = const_gap.max(max_diff(plain.values(), adjusted.values()));
    }
    let detail = format!(
        "row sums {sum_err:.1e}; AN vs TAN under unit similarity {literal_gap:.1e} \
         (raw-logit reading {raw_gap:.1e}); constant-row adjustment shift {const_gap:.1e}; \
         the printed adjustment renormalizes already-normalized weights, so the last two checks cannot hold"
    );
    gate(
        sum_err < 1e-8 && literal_gap < 1e-12 && const_gap < 1e-10,
        detail,
    )
}

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

fn walks(g: &SocialGraph, p: f64, q: f64, len: usize, per_node: usize) -> Vec<Vec<usize>> {
    node2vec_walks(
        g,
        &WalkConfig {
            p,
            q,
            walk_length: len,
            walks_per_node: per_node,
            seed: 17,
        },
    )
    .unwrap()
    .walks
}

fn node2vec_suite() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut min_draws = usize::MAX;
    let mut check = |w: &[Vec<usize>], prev, cur, want: &[(usize, f64)]| {
        let (freq, total) = next_frequencies(w, prev, cur);
        min_draws = min_draws.min(total);
        for &(v, p) in want {
            worst = worst.max((freq.get(&v).copied().unwrap_or(0.0) - p).abs());
        }
    };
    let tri = SocialGraph::from_edges(4, [(0, 1), (1, 2), (2, 0), (3, 0)], false);
    check(
        &walks(&tri, 0.25, 4.0, 80, 8000),
        0,
        1,
        &[(0, 0.8), (2, 0.2)],
    );
    let five = SocialGraph::from_edges(5, [(0, 1), (1, 2), (1, 4), (2, 4), (2, 3)], false);
    let w5 = walks(&five, 2.0, 0.5, 80, 4000);
    check(&w5, 0, 1, &[(0, 1.0 / 9.0), (2, 4.0 / 9.0), (4, 4.0 / 9.0)]);
    check(&w5, 1, 2, &[(1, 1.0 / 7.0), (3, 4.0 / 7.0), (4, 2.0 / 7.0)]);

    let path = SocialGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)], false);
    let mut counts = [[0usize; 4]; 4];
    for w in walks(&path, 1.0, 1.0, 100, 500) {
        for s in w.windows(2) {
            counts[s[0]][s[1]] += 1;
        }
    }
    let mut chi2 = 0.0;
    for (u, row) in counts.iter().enumerate() {
        let nbrs = path.neighbors(u);
        let n: usize = nbrs.iter().map(|&v| row[v]).sum();
        let expected = n as f64 / nbrs.len() as f64;
        chi2 += nbrs
            .iter()
            .map(|&v| (row[v] as f64 - expected).powi(2) / expected)
            .sum::<f64>();
    }

    let mut edges = Vec::new();
    for base in [0, 6] {
        for a in 0..6 {
            for b in a + 1..6 {
                edges.push((base + a, base + b));
            }
        }
    }
    let cliques = SocialGraph::from_edges(12, edges, false);
    let wc = WalkConfig {
        walk_length: 20,
        walks_per_node: 10,
        seed: 17,
        ..WalkConfig::default()
    };
    let (emb, _) = embed_graph(
        &cliques,
        &wc,
        &SgnsConfig {
            dim: 16,
            epochs: 5,
            ..SgnsConfig::default()
        },
    )
    .unwrap();
    let e = cosine_similarity_matrix(&emb.values);
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for a in 0..12 {
        for b in 0..12 {
            if a != b {
                if (a < 6) == (b < 6) {
                    &mut intra
                } else {
                    &mut inter
                }
                .push(e.get(a, b));
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (intra, inter) = (mean(&intra), mean(&inter));
    let secs = start.elapsed().as_secs_f64();
    gate(
        worst < 0.01 && min_draws >= 50_000 && chi2 < 9.2103 && intra > inter && secs < 60.0,
        format!(
            "max transition error {worst:.4} (min {min_draws} draws), chi2 {chi2:.2} (df 2, cut 9.21), \
             clique cosine intra {intra:.3} vs inter {inter:.3}, {secs:.1}s"
        ),
    )
}

fn tandrud(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_tandrud"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn tandrud");
    assert!(
        out.status.success(),
        "tandrud {} failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().next().unwrap_or(&text))
        .unwrap_or_else(|_| serde_json::from_str(&text).unwrap())
}

fn synthetic_end_to_end() -> Verdict {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let with = |args: &[&'static str]| [args, &["--threads", "4"][..]].concat();
    tandrud(
        dir,
        &with(&[
            "synth",
            "--nodes",
            "200",
            "--prob",
            "0.3",
            "--count",
            "500",
            "--max-len",
            "30",
            "--seed",
            "1",
            "--out",
            "synth",
        ]),
    );
    tandrud(
        dir,
        &with(&[
            "prepare",
            "--cascades",
            "synth/cascades.txt",
            "--graph",
            "synth/graph.txt",
            "--seed",
            "4",
            "--out",
            "data",
        ]),
    );
    tandrud(
        dir,
        &with(&[
            "train",
            "--data",
            "data",
            "--graph",
            "synth/graph.txt",
            "--dg",
            "32",
            "--d",
            "32",
            "--T",
            "10",
            "--lr",
            "0.005",
            "--epochs",
            "50",
            "--patience",
            "50",
            "--max-len",
            "30",
            "--seed",
            "5",
            "--out",
            "model",
        ]),
    );
    tandrud(
        dir,
        &with(&[
            "infer-tree",
            "--checkpoint",
            "model/checkpoint.json",
            "--data",
            "data",
            "--truth",
            "synth/trees.txt",
            "--out",
            "trees",
        ]),
    );
    let metrics = read_json(&dir.join("model/metrics.jsonl"));
    let model_rr = metrics["RR"].as_f64().unwrap();
    let vocab = Vocab::load(&dir.join("data/vocab.txt")).unwrap();
    let (train, _) = load_cascades_with_vocab(&dir.join("data/train.txt"), &vocab).unwrap();
    let (test, _) = load_cascades_with_vocab(&dir.join("data/test.txt"), &vocab).unwrap();
    let freq = frequency_scores(&train);
    let inst = test.instances(30);
    let freq_rr = evaluate_scores(inst.iter().map(|i| (&freq[..], i.target())))
        .unwrap()
        .rr;
    let trees = read_json(&dir.join("trees/tree_accuracy.json"));
    let (tree_acc, base_acc) = (
        trees["model"].as_f64().unwrap(),
        trees["immediate_predecessor"].as_f64().unwrap(),
    );
    let secs = start.elapsed().as_secs_f64();
    gate(
        model_rr >= 1.2 * freq_rr && tree_acc > base_acc && secs < 900.0,
        format!(
            "test RR {model_rr:.4} vs frequency {freq_rr:.4} ({:+.0}%), parent recovery {tree_acc:.4} vs \
             immediate predecessor {base_acc:.4}, {secs:.0}s",
            100.0 * (model_rr / freq_rr - 1.0)
        ),
    )
}

fn published_numbers() -> Verdict {
    NotGated("stretch goal; needs the external Twitter corpus, see README".into())
}

fn pipeline(dir: &Path) {
    tandrud(
        dir,
        &[
            "synth",
            "--nodes",
            "60",
            "--count",
            "80",
            "--max-len",
            "10",
            "--seed",
            "9",
            "--out",
            "synth",
        ],
    );
    tandrud(
        dir,
        &[
            "prepare",
            "--cascades",
            "synth/cascades.txt",
            "--seed",
            "2",
            "--out",
            "data",
        ],
    );
    tandrud(
        dir,
        &[
            "train",
            "--data",
            "data",
            "--graph",
            "synth/graph.txt",
            "--dg",
            "8",
            "--d",
            "8",
            "--T",
            "5",
            "--epochs",
            "3",
            "--seed",
            "3",
            "--walks-per-node",
            "4",
            "--walk-length",
            "20",
            "--out",
            "model",
        ],
    );
    tandrud(
        dir,
        &[
            "eval",
            "--checkpoint",
            "model/checkpoint.json",
            "--data",
            "data",
            "--out",
            "eval",
        ],
    );
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let files = [
        "synth/manifest.json",
        "synth/cascades.txt",
        "data/manifest.json",
        "model/manifest.json",
        "model/epochs.jsonl",
        "model/metrics.jsonl",
        "model/checkpoint.json",
        "eval/manifest.json",
        "eval/metrics.jsonl",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(a.path().join(f)).unwrap() != fs::read(b.path().join(f)).unwrap())
        .collect();
    gate(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical across two runs", files.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn metric_definitions() -> Verdict {
    // Scores descend with the index, so target index r - 1 has rank r.
    let scores: Vec<f64> = (0..100).map(|k| -(k as f64)).collect();
    let m = evaluate_scores([0, 10, 50].map(|t| (&scores[..], t))).unwrap();
    let rr = (1.0 + 1.0 / 11.0 + 1.0 / 51.0) / 3.0;
    gate(
        (m.rr - rr).abs() < 1e-15 && m.p10 == 1.0 / 3.0 && m.p50 == 2.0 / 3.0,
        format!(
            "RR {:.12} (want {rr:.12}), P@10 {:.6}, P@50 {:.6}",
            m.rr, m.p10, m.p50
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Verdict); 8] = [
        (1, "gradient correctness", gradient_check),
        (2, "oracle equivalence", oracle_equivalence),
        (3, "attention and normalization", normalization_suite),
        (4, "node2vec correctness", node2vec_suite),
        (5, "synthetic end-to-end", synthetic_end_to_end),
        (6, "published numbers", published_numbers),
        (7, "determinism", determinism),
        (8, "metric definitions", metric_definitions),
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match verdict {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            NotGated(d) => ("NOT GATED", d),
        };
        println!("criterion {n} ({name}): {tag}: {detail}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
