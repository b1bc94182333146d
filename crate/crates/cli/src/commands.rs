use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tandrud::data::{
    load_cascades, load_cascades_with_vocab, load_graph, split_corpus, CascadeCorpus, SocialGraph,
    TimeBinning, Vocab,
};
use tandrud::graphembed::{
    embed_graph, load_embeddings, save_embeddings, EmbeddingMatrix, SgnsConfig, WalkConfig,
};
use tandrud::model::{AttentionAdjust, Checkpoint, Dims, ModelConfig, ModelParams, Network};
use tandrud::trainer::{
    self, evaluate, infer_tree as infer, parent_accuracy, predecessor_baseline, preferential_graph,
    random_graph, read_trees, synth_cascades, write_trees, MaskMode, Metrics, TrainConfig,
    TrainInputs,
};

use crate::manifest::RunManifest;
use crate::{EmbedArgs, EvalArgs, InferTreeArgs, PrepareArgs, SynthArgs, TrainArgs, WalkArgs};

const VOCAB: &str = "vocab.txt";
const SPLITS: [&str; 3] = ["train", "valid", "test"];

fn split_file(data: &Path, split: &str) -> PathBuf {
    data.join(format!("{split}.txt"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_vocab(data: &Path) -> Result<Vocab> {
    Ok(Vocab::load(&data.join(VOCAB))?)
}

fn load_split(data: &Path, split: &str, vocab: &Vocab) -> Result<CascadeCorpus> {
    if !SPLITS.contains(&split) {
        bail!("unknown split `{split}`; expected one of {SPLITS:?}");
    }
    let (corpus, _) = load_cascades_with_vocab(&split_file(data, split), vocab)?;
    Ok(corpus)
}

fn walk_configs(w: &WalkArgs, seed: u64) -> (WalkConfig, SgnsConfig) {
    (
        WalkConfig {
            p: w.p,
            q: w.q,
            walk_length: w.walk_length,
            walks_per_node: w.walks_per_node,
            seed,
        },
        SgnsConfig {
            dim: w.dg,
            window: w.window,
            negatives: w.negatives,
            epochs: w.sgns_epochs,
            lr: w.sgns_lr,
            seed,
        },
    )
}

fn learn_embeddings(
    graph_path: &Path,
    vocab: &Vocab,
    w: &WalkArgs,
    seed: u64,
) -> Result<(EmbeddingMatrix, Vec<f64>)> {
    let (graph, stats) = load_graph(graph_path, vocab, w.directed_walks)?;
    log::info!(
        "graph: {} nodes, {} edges ({} dropped as unknown, {} self-loops)",
        graph.num_nodes(),
        graph.num_edges(),
        stats.dropped_unknown,
        stats.self_loops
    );
    let (walk, sgns) = walk_configs(w, seed);
    let (emb, report) = embed_graph(&graph, &walk, &sgns)?;
    Ok((emb, report.epoch_loss))
}

#[derive(Serialize)]
struct PrepareSummary {
    users: usize,
    cascades: usize,
    t_max: f64,
    lines: usize,
    duplicate_activations: usize,
    dropped_short: usize,
    train: usize,
    valid: usize,
    test: usize,
    graph_edges: Option<usize>,
    graph_dropped_unknown: Option<usize>,
}

pub fn prepare(a: &PrepareArgs) -> Result<()> {
    let mut m = RunManifest::new("prepare", a, Some(a.seed))?;
    m.input(&a.cascades)?;
    if let Some(g) = &a.graph {
        m.input(g)?;
    }
    m.outputs([VOCAB, "train.txt", "valid.txt", "test.txt", "summary.json"]);
    m.write(&a.out)?;

    let (corpus, stats) = load_cascades(&a.cascades)?;
    let ratios = [a.ratios[0], a.ratios[1], a.ratios[2]];
    let (train, valid, test) = split_corpus(&corpus, ratios, a.seed)?;
    corpus.vocab.save(&a.out.join(VOCAB))?;
    for (name, part) in SPLITS.iter().zip([&train, &valid, &test]) {
        part.save(&split_file(&a.out, name))?;
    }
    let graph = match &a.graph {
        Some(g) => Some(load_graph(g, &corpus.vocab, false)?),
        None => None,
    };
    let summary = PrepareSummary {
        users: corpus.num_users(),
        cascades: corpus.len(),
        t_max: corpus.t_max(),
        lines: stats.lines,
        duplicate_activations: stats.duplicate_activations,
        dropped_short: stats.dropped_short,
        train: train.len(),
        valid: valid.len(),
        test: test.len(),
        graph_edges: graph.as_ref().map(|(g, _)| g.num_edges()),
        graph_dropped_unknown: graph.as_ref().map(|(_, s)| s.dropped_unknown),
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    println!(
        "{} users, {} cascades -> train {} / valid {} / test {}",
        summary.users, summary.cascades, summary.train, summary.valid, summary.test
    );
    Ok(())
}

pub fn embed(a: &EmbedArgs) -> Result<()> {
    let mut m = RunManifest::new("embed", a, Some(a.seed))?;
    m.input(&a.graph)?;
    m.input(&a.vocab)?;
    m.outputs(["embeddings.txt", "sgns_loss.jsonl"]);
    m.write(&a.out)?;

    let vocab = Vocab::load(&a.vocab)?;
    let (emb, losses) = learn_embeddings(&a.graph, &vocab, &a.walk, a.seed)?;
    save_embeddings(&emb, &vocab, &a.out.join("embeddings.txt"))?;
    let mut w = create(&a.out.join("sgns_loss.jsonl"))?;
    for (epoch, loss) in losses.iter().enumerate() {
        writeln!(
            w,
            "{}",
            serde_json::json!({ "epoch": epoch + 1, "loss": loss })
        )?;
    }
    w.flush()?;
    let isolated = emb.isolated.iter().filter(|&&b| b).count();
    println!(
        "{} × {} embeddings, {} isolated users",
        emb.num_nodes(),
        emb.dim(),
        isolated
    );
    Ok(())
}

fn run_name(base: &str, ext: &str, run: usize, runs: usize) -> String {
    if runs == 1 {
        format!("{base}.{ext}")
    } else {
        format!("{base}.r{run}.{ext}")
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    if a.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let mut m = RunManifest::new("train", a, Some(a.seed))?;
    m.input(&a.data.join(VOCAB))?;
    for s in SPLITS {
        m.input(&split_file(&a.data, s))?;
    }
    if let Some(p) = a.embeddings.as_ref().or(a.graph.as_ref()) {
        m.input(p)?;
    }
    for r in 0..a.runs {
        m.outputs([
            run_name("checkpoint", "json", r, a.runs),
            run_name("epochs", "jsonl", r, a.runs),
            run_name("timing", "jsonl", r, a.runs),
        ]);
    }
    m.outputs(["metrics.jsonl"]);
    if a.embeddings.is_none() && a.graph.is_some() {
        m.outputs(["embeddings.txt"]);
    }
    m.write(&a.out)?;

    let vocab = load_vocab(&a.data)?;
    let train = load_split(&a.data, "train", &vocab)?;
    let valid = load_split(&a.data, "valid", &vocab)?;
    let test = load_split(&a.data, "test", &vocab)?;

    let topology = if a.no_topology {
        None
    } else if let Some(p) = &a.embeddings {
        Some(load_embeddings(p, &vocab)?)
    } else if let Some(g) = &a.graph {
        let (emb, _) = learn_embeddings(g, &vocab, &a.walk, a.seed)?;
        save_embeddings(&emb, &vocab, &a.out.join("embeddings.txt"))?;
        Some(emb)
    } else {
        bail!("topology is enabled but neither --embeddings nor --graph was given (use --no-topology to train without it)");
    };

    let config = ModelConfig {
        use_topology: topology.is_some(),
        dropout_keep: a.dropout_keep,
        l2_lambda: a.l2,
        max_len: a.max_len,
        adjust: if a.raw_logit_adjust {
            AttentionAdjust::RawLogit
        } else {
            AttentionAdjust::Literal
        },
    };
    config.validate()?;
    let dims = Dims {
        users: vocab.len(),
        d: a.d,
        d_g: topology.as_ref().map_or(1, EmbeddingMatrix::dim),
        t_bins: a.t,
    };
    if dims.d == 0 || dims.t_bins == 0 {
        bail!("--d and --T must be positive");
    }
    let time = TimeBinning::new(train.t_max(), a.t);
    let mask = MaskMode::from_flag(a.mask_observed);
    let train_inst = train.instances(a.max_len);
    let valid_inst = valid.instances(a.max_len);
    let test_inst = test.instances(a.max_len);
    log::info!(
        "{} users, {} train / {} valid / {} test prefixes",
        dims.users,
        train_inst.len(),
        valid_inst.len(),
        test_inst.len()
    );
    let inputs = TrainInputs {
        train: &train_inst,
        valid: &valid_inst,
        config: &config,
        topology: topology.as_ref(),
        time,
        mask,
    };

    let mut metrics_out = create(&a.out.join("metrics.jsonl"))?;
    let mut results: Vec<Metrics> = Vec::new();
    for run in 0..a.runs {
        let seed = a.seed + run as u64;
        let tcfg = TrainConfig {
            lr: a.lr,
            epochs: a.epochs,
            patience: a.patience,
            batch: a.batch,
            seed,
        };
        let mut epochs = create(&a.out.join(run_name("epochs", "jsonl", run, a.runs)))?;
        let mut timing = create(&a.out.join(run_name("timing", "jsonl", run, a.runs)))?;
        let mut io_err = None;
        let outcome = trainer::train(
            &inputs,
            ModelParams::init(dims, seed),
            &tcfg,
            |rec, secs| {
                let res = serde_json::to_writer(&mut epochs, rec)
                    .map_err(std::io::Error::from)
                    .and_then(|_| writeln!(epochs))
                    .and_then(|_| epochs.flush())
                    .and_then(|_| {
                        writeln!(
                            timing,
                            "{}",
                            serde_json::json!({ "epoch": rec.epoch, "seconds": secs })
                        )
                    })
                    .and_then(|_| timing.flush());
                if let Err(e) = res {
                    io_err.get_or_insert(e);
                }
            },
        )?;
        if let Some(e) = io_err {
            return Err(e).context("cannot write epoch log");
        }
        let ck = Checkpoint {
            params: outcome.best,
            config: config.clone(),
            time,
            topology: topology.clone(),
            vocab_digest: vocab.digest(),
        };
        ck.save(&a.out.join(run_name("checkpoint", "json", run, a.runs)))?;
        if let Some(reason) = outcome.aborted {
            bail!(
                "run {run} aborted ({reason}); best checkpoint from epoch {} kept",
                outcome.best_epoch
            );
        }
        let net = Network::new(&ck.params, &ck.config, ck.topology.as_ref(), ck.time)?;
        let metrics = evaluate(&test_inst, &net, mask)?;
        writeln!(
            metrics_out,
            "{}",
            serde_json::to_string(&metrics.record("test", mask))?
        )?;
        println!(
            "run {run} (seed {seed}, best epoch {}):\n{metrics}",
            outcome.best_epoch
        );
        results.push(metrics);
    }
    metrics_out.flush()?;
    if results.len() > 1 {
        let pick = |f: fn(&Metrics) -> f64| mean_std(&results.iter().map(f).collect::<Vec<_>>());
        println!(
            "mean ± std over {} runs ({}):",
            results.len(),
            mask.as_str()
        );
        for (name, (mu, sd)) in [
            ("RR", pick(|m| m.rr)),
            ("P@10", pick(|m| m.p10)),
            ("P@50", pick(|m| m.p50)),
            ("P@100", pick(|m| m.p100)),
        ] {
            println!("{name:<6}{:>8.2} ± {:.2}", 100.0 * mu, 100.0 * sd);
        }
    }
    Ok(())
}

fn load_checkpoint(path: &Path, vocab: &Vocab) -> Result<Checkpoint> {
    Ok(Checkpoint::load_for(path, &vocab.digest())?)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut m = RunManifest::new("eval", a, None)?;
    m.input(&a.checkpoint)?;
    m.input(&a.data.join(VOCAB))?;
    m.input(&split_file(&a.data, &a.split))?;
    m.outputs(["metrics.jsonl"]);
    m.write(&a.out)?;

    let vocab = load_vocab(&a.data)?;
    let ck = load_checkpoint(&a.checkpoint, &vocab)?;
    let corpus = load_split(&a.data, &a.split, &vocab)?;
    let net = Network::new(&ck.params, &ck.config, ck.topology.as_ref(), ck.time)?;
    let mask = MaskMode::from_flag(a.mask_observed);
    let metrics = evaluate(&corpus.instances(ck.config.max_len), &net, mask)?;
    let record = serde_json::to_string(&metrics.record(&a.split, mask))?;
    let mut w = create(&a.out.join("metrics.jsonl"))?;
    writeln!(w, "{record}")?;
    w.flush()?;
    println!("{record}");
    println!("{metrics}");
    Ok(())
}

#[derive(Serialize)]
struct TreeAccuracy {
    model: f64,
    immediate_predecessor: f64,
    cascades: usize,
}

pub fn infer_tree(a: &InferTreeArgs) -> Result<()> {
    let mut m = RunManifest::new("infer-tree", a, None)?;
    m.input(&a.checkpoint)?;
    m.input(&a.data.join(VOCAB))?;
    m.input(&split_file(&a.data, &a.split))?;
    m.outputs(["trees.tsv", "edges.txt"]);
    if let Some(t) = &a.truth {
        m.input(t)?;
        m.outputs(["tree_accuracy.json"]);
    }
    m.write(&a.out)?;

    let vocab = load_vocab(&a.data)?;
    let ck = load_checkpoint(&a.checkpoint, &vocab)?;
    let corpus = load_split(&a.data, &a.split, &vocab)?;
    let net = Network::new(&ck.params, &ck.config, ck.topology.as_ref(), ck.time)?;
    let mut trees = Vec::with_capacity(corpus.len());
    let mut pos = create(&a.out.join("trees.tsv"))?;
    let mut edges = create(&a.out.join("edges.txt"))?;
    for c in &corpus.cascades {
        let tree = infer(c, &net)?;
        writeln!(pos, "# {}", c.id)?;
        tree.write_positions(&mut pos)?;
        writeln!(edges, "# {}", c.id)?;
        tree.write_edges(c, &vocab, &mut edges)?;
        trees.push(tree);
    }
    pos.flush()?;
    edges.flush()?;
    println!("inferred {} trees", trees.len());

    if let Some(path) = &a.truth {
        let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let planted: HashMap<String, Vec<Option<usize>>> =
            read_trees(BufReader::new(f))?.into_iter().collect();
        let mut truth = Vec::with_capacity(trees.len());
        for c in &corpus.cascades {
            let t = planted
                .get(&c.id)
                .with_context(|| format!("no planted tree for cascade `{}`", c.id))?;
            if t.len() != c.len() {
                bail!(
                    "planted tree for `{}` has {} positions, cascade has {}",
                    c.id,
                    t.len(),
                    c.len()
                );
            }
            truth.push(t.as_slice());
        }
        let base: Vec<_> = corpus.cascades.iter().map(predecessor_baseline).collect();
        let acc = TreeAccuracy {
            model: parent_accuracy(trees.iter().zip(truth.iter().copied())),
            immediate_predecessor: parent_accuracy(base.iter().zip(truth.iter().copied())),
            cascades: trees.len(),
        };
        write_json(&a.out.join("tree_accuracy.json"), &acc)?;
        println!(
            "parent recovery: model {:.4}, immediate predecessor {:.4}",
            acc.model, acc.immediate_predecessor
        );
    }
    Ok(())
}

/// Edge file over raw ids; the vocabulary is built in first-seen order.
fn read_raw_graph(path: &Path) -> Result<(SocialGraph, Vocab)> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut vocab = Vocab::new();
    let mut edges = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 2 {
            bail!("{}:{}: expected two user ids", path.display(), n + 1);
        }
        edges.push((vocab.intern(parts[0]), vocab.intern(parts[1])));
    }
    Ok((SocialGraph::from_edges(vocab.len(), edges, false), vocab))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut m = RunManifest::new("synth", a, Some(a.seed))?;
    if let Some(g) = &a.graph {
        m.input(g)?;
    }
    m.outputs(["cascades.txt", "graph.txt", "trees.txt"]);
    m.write(&a.out)?;

    let (graph, vocab) = match &a.graph {
        Some(path) => read_raw_graph(path)?,
        None => {
            let g = match a.graph_model.as_str() {
                "ba" => preferential_graph(a.nodes, a.attach, a.seed),
                "er" => random_graph(a.nodes, a.edge_prob, a.seed),
                other => bail!("unknown graph model `{other}` (expected `ba` or `er`)"),
            };
            (g, Vocab::from_ids((0..a.nodes).map(|k| k.to_string())))
        }
    };
    if !(0.0..=1.0).contains(&a.prob) {
        bail!("activation probability must lie in [0, 1]");
    }
    let mut synth = synth_cascades(&graph, a.prob, a.max_len, a.count, a.seed.wrapping_add(1));
    synth.corpus.vocab = vocab;
    synth.corpus.save(&a.out.join("cascades.txt"))?;
    let mut w = create(&a.out.join("graph.txt"))?;
    for (u, v) in graph.edge_list() {
        writeln!(
            w,
            "{} {}",
            synth.corpus.vocab.raw(u),
            synth.corpus.vocab.raw(v)
        )?;
    }
    w.flush()?;
    let mut w = create(&a.out.join("trees.txt"))?;
    write_trees(&synth, &mut w)?;
    w.flush()?;
    let mean_len = if synth.corpus.is_empty() {
        0.0
    } else {
        synth.corpus.cascades.iter().map(|c| c.len()).sum::<usize>() as f64
            / synth.corpus.len() as f64
    };
    println!(
        "{} cascades ({} single-activation runs discarded), mean length {:.2}, graph {} nodes / {} edges",
        synth.corpus.len(),
        synth.dropped,
        mean_len,
        graph.num_nodes(),
        graph.num_edges()
    );
    Ok(())
}
