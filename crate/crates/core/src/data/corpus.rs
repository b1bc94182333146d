use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::DataError;

/// Bidirectional map between raw user ids and dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Vocab::default()
    }

    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::new();
        for id in ids {
            v.intern(&id.into());
        }
        v
    }

    /// Index of `raw`, assigning the next free index on first sight.
    pub fn intern(&mut self, raw: &str) -> usize {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(raw.to_string());
        self.index.insert(raw.to_string(), i);
        i
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// SHA-256 over the raw ids in index order, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.ids {
            h.update(id.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// One raw id per line, in index order.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for id in &self.ids {
            writeln!(w, "{id}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let f = File::open(path).map_err(|e| DataError::io(path, e))?;
        let mut v = Vocab::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| DataError::io(path, e))?;
            let id = line.trim();
            if id.is_empty() {
                continue;
            }
            if v.get(id).is_some() {
                return Err(DataError::parse(
                    n + 1,
                    format!("duplicate vocabulary entry `{id}`"),
                ));
            }
            v.intern(id);
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub user: usize,
    pub time: f64,
}

/// Chronologically ordered activations of one piece of information.
#[derive(Clone, Debug, PartialEq)]
pub struct Cascade {
    pub id: String,
    pub events: Vec<Event>,
}

impl Cascade {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn users(&self) -> impl Iterator<Item = usize> + '_ {
        self.events.iter().map(|e| e.user)
    }

    pub fn span(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.time - a.time,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    pub duplicate_activations: usize,
    pub dropped_short: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeCorpus {
    pub cascades: Vec<Cascade>,
    pub vocab: Vocab,
}

impl CascadeCorpus {
    pub fn new(cascades: Vec<Cascade>, vocab: Vocab) -> Self {
        CascadeCorpus { cascades, vocab }
    }

    /// User count N.
    pub fn num_users(&self) -> usize {
        self.vocab.len()
    }

    /// Cascade count M.
    pub fn len(&self) -> usize {
        self.cascades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cascades.is_empty()
    }

    /// Largest within-cascade time span.
    pub fn t_max(&self) -> f64 {
        self.cascades.iter().map(Cascade::span).fold(0.0, f64::max)
    }

    pub fn instances(&self, max_len: usize) -> Vec<PrefixInstance<'_>> {
        self.cascades
            .iter()
            .flat_map(|c| make_prefix_instances(c, max_len))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        write_cascades(self, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| DataError::io(path, e))
    }
}

/// Parses `id<TAB>user,time user,time ...` lines.
///
/// Events are stably sorted by time, a user's repeat activations after the
/// first are discarded, and cascades left with fewer than two events are
/// dropped. With `grow == false` every user must already be in `vocab`.
pub fn parse_cascades(
    reader: impl BufRead,
    vocab: &mut Vocab,
    grow: bool,
) -> Result<(Vec<Cascade>, LoadStats), DataError> {
    let mut stats = LoadStats::default();
    let mut cascades = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| DataError::parse(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| DataError::parse(lineno, "expected `id<TAB>events`"))?;
        let mut raw_events: Vec<(&str, f64)> = Vec::new();
        for token in rest.split_whitespace() {
            let (user, ts) = token
                .rsplit_once(',')
                .ok_or_else(|| DataError::parse(lineno, format!("malformed event `{token}`")))?;
            if user.is_empty() {
                return Err(DataError::parse(lineno, format!("empty user in `{token}`")));
            }
            let t: f64 = ts
                .parse()
                .map_err(|_| DataError::parse(lineno, format!("non-numeric timestamp `{ts}`")))?;
            if !t.is_finite() || t < 0.0 {
                return Err(DataError::parse(
                    lineno,
                    format!("invalid timestamp `{ts}`"),
                ));
            }
            raw_events.push((user, t));
        }
        raw_events.sort_by(|a, b| a.1.total_cmp(&b.1));

        let mut seen = HashSet::new();
        let mut events = Vec::with_capacity(raw_events.len());
        for (user, time) in raw_events {
            if !seen.insert(user) {
                stats.duplicate_activations += 1;
                continue;
            }
            let idx = if grow {
                vocab.intern(user)
            } else {
                vocab
                    .get(user)
                    .ok_or_else(|| DataError::UnknownUser(user.to_string()))?
            };
            events.push(Event { user: idx, time });
        }
        if events.len() < 2 {
            stats.dropped_short += 1;
            continue;
        }
        cascades.push(Cascade {
            id: id.to_string(),
            events,
        });
    }
    if stats.dropped_short > 0 {
        log::warn!(
            "dropped {} cascades shorter than 2 events",
            stats.dropped_short
        );
    }
    Ok((cascades, stats))
}

/// Loads a cascade file, building the vocabulary in first-seen order.
pub fn load_cascades(path: &Path) -> Result<(CascadeCorpus, LoadStats), DataError> {
    let f = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut vocab = Vocab::new();
    let (cascades, stats) = parse_cascades(BufReader::new(f), &mut vocab, true)?;
    Ok((CascadeCorpus::new(cascades, vocab), stats))
}

/// Loads a cascade file against a fixed vocabulary.
pub fn load_cascades_with_vocab(
    path: &Path,
    vocab: &Vocab,
) -> Result<(CascadeCorpus, LoadStats), DataError> {
    let f = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut vocab = vocab.clone();
    let (cascades, stats) = parse_cascades(BufReader::new(f), &mut vocab, false)?;
    Ok((CascadeCorpus::new(cascades, vocab), stats))
}

pub fn write_cascades(corpus: &CascadeCorpus, mut w: impl Write) -> std::io::Result<()> {
    for c in &corpus.cascades {
        write!(w, "{}\t", c.id)?;
        for (k, e) in c.events.iter().enumerate() {
            if k > 0 {
                write!(w, " ")?;
            }
            write!(w, "{},{}", corpus.vocab.raw(e.user), e.time)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Cascade-level shuffle-and-split. Sizes are `floor(M·r0/Σr)`,
/// `floor(M·r1/Σr)` and the remainder.
pub fn split_corpus(
    corpus: &CascadeCorpus,
    ratios: [usize; 3],
    seed: u64,
) -> Result<(CascadeCorpus, CascadeCorpus, CascadeCorpus), DataError> {
    let total: usize = ratios.iter().sum();
    if total == 0 {
        return Err(DataError::BadRatios(ratios));
    }
    let m = corpus.len();
    if m < 10 {
        return Err(DataError::TooFewCascades {
            needed: 10,
            have: m,
        });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = m * ratios[0] / total;
    let n_valid = m * ratios[1] / total;
    let pick = |idx: &[usize]| {
        CascadeCorpus::new(
            idx.iter().map(|&i| corpus.cascades[i].clone()).collect(),
            corpus.vocab.clone(),
        )
    };
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_valid]),
        pick(&order[n_train + n_valid..]),
    ))
}

/// One training example: the first `len` events of a cascade and the
/// user activated next.
#[derive(Clone, Copy, Debug)]
pub struct PrefixInstance<'a> {
    pub cascade: &'a Cascade,
    pub len: usize,
}

impl<'a> PrefixInstance<'a> {
    pub fn events(&self) -> &'a [Event] {
        &self.cascade.events[..self.len]
    }

    pub fn users(&self) -> Vec<usize> {
        self.events().iter().map(|e| e.user).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.events().iter().map(|e| e.time).collect()
    }

    pub fn target(&self) -> usize {
        self.cascade.events[self.len].user
    }
}

/// Prefixes of lengths `1..min(n, max_len)`, each paired with the next
/// real activation.
pub fn make_prefix_instances(cascade: &Cascade, max_len: usize) -> Vec<PrefixInstance<'_>> {
    let n = cascade.len().min(max_len);
    (1..n).map(|len| PrefixInstance { cascade, len }).collect()
}
