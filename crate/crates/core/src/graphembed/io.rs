use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{EmbedError, EmbeddingMatrix};
use crate::data::Vocab;
use crate::numeric::Tensor;

/// Header `N d_g`, then `raw_id v1 ... v_dg` per node in index order.
/// Values use the shortest decimal form that parses back exactly.
pub fn write_embeddings(
    emb: &EmbeddingMatrix,
    vocab: &Vocab,
    mut w: impl Write,
) -> std::io::Result<()> {
    writeln!(w, "{} {}", emb.num_nodes(), emb.dim())?;
    for u in 0..emb.num_nodes() {
        write!(w, "{}", vocab.raw(u))?;
        for v in emb.row(u) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_embeddings(
    emb: &EmbeddingMatrix,
    vocab: &Vocab,
    path: &Path,
) -> Result<(), EmbedError> {
    let io_err = |source| EmbedError::Io {
        path: path.to_path_buf(),
        source,
    };
    let f = File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(f);
    write_embeddings(emb, vocab, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Reads an embedding file, placing each row at its vocabulary index.
/// The node count must equal the vocabulary size and every vocabulary
/// user must appear exactly once.
pub fn read_embeddings(reader: impl BufRead, vocab: &Vocab) -> Result<EmbeddingMatrix, EmbedError> {
    let fmt = |line: usize, message: String| EmbedError::Format { line, message };
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| fmt(1, "missing header".into()))?
        .map_err(|e| fmt(1, e.to_string()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| fmt(1, format!("bad header `{header}`")))?;
    let [n, dim] = dims[..] else {
        return Err(fmt(1, format!("bad header `{header}`")));
    };
    if n != vocab.len() {
        return Err(fmt(
            1,
            format!("file has {n} nodes but vocabulary has {}", vocab.len()),
        ));
    }
    let mut values = vec![0.0; n * dim];
    let mut seen = HashSet::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let line = line.map_err(|e| fmt(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let raw = parts.next().expect("non-empty line");
        let u = vocab
            .get(raw)
            .ok_or_else(|| fmt(lineno, format!("user `{raw}` not in vocabulary")))?;
        if !seen.insert(u) {
            return Err(fmt(lineno, format!("duplicate row for `{raw}`")));
        }
        let row: Vec<f64> = parts
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| fmt(lineno, "non-numeric value".into()))?;
        if row.len() != dim {
            return Err(fmt(
                lineno,
                format!("expected {dim} values, got {}", row.len()),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(fmt(lineno, "non-finite value".into()));
        }
        values[u * dim..(u + 1) * dim].copy_from_slice(&row);
    }
    if seen.len() != n {
        return Err(fmt(
            0,
            format!("{} of {n} vocabulary users have no row", n - seen.len()),
        ));
    }
    let isolated = (0..n)
        .map(|u| values[u * dim..(u + 1) * dim].iter().all(|&v| v == 0.0))
        .collect();
    Ok(EmbeddingMatrix {
        values: Tensor::new(vec![n, dim], values).expect("shape"),
        trained: true,
        isolated,
    })
}

pub fn load_embeddings(path: &Path, vocab: &Vocab) -> Result<EmbeddingMatrix, EmbedError> {
    let f = File::open(path).map_err(|source| EmbedError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_embeddings(BufReader::new(f), vocab)
}
