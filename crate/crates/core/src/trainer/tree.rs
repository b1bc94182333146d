use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Cascade, Vocab};
use crate::model::{ModelError, Network};

/// Inferred trigger of every activation in one cascade. `parents[k]` is
/// the position of the user that triggered position `k`; the first
/// position is the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffusionTree {
    pub cascade_id: String,
    pub parents: Vec<Option<usize>>,
}

impl DiffusionTree {
    /// One root, and every parent strictly precedes its child.
    pub fn is_valid(&self) -> bool {
        let roots = self.parents.iter().filter(|p| p.is_none()).count();
        roots == 1
            && self.parents.first() == Some(&None)
            && self
                .parents
                .iter()
                .enumerate()
                .skip(1)
                .all(|(k, p)| matches!(p, Some(q) if *q < k))
    }

    /// `child_position<TAB>parent_position` lines, root omitted.
    pub fn write_positions(&self, mut w: impl Write) -> std::io::Result<()> {
        for (k, p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                writeln!(w, "{k}\t{p}")?;
            }
        }
        Ok(())
    }

    /// `parent_raw_id child_raw_id` lines.
    pub fn write_edges(
        &self,
        cascade: &Cascade,
        vocab: &Vocab,
        mut w: impl Write,
    ) -> std::io::Result<()> {
        for (k, p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                writeln!(
                    w,
                    "{} {}",
                    vocab.raw(cascade.events[*p].user),
                    vocab.raw(cascade.events[k].user)
                )?;
            }
        }
        Ok(())
    }
}

/// Assigns each activation to the earlier user with the highest
/// cascade-level attention on the preceding prefix. Ties go to the
/// earliest position.
pub fn infer_tree(cascade: &Cascade, net: &Network<'_>) -> Result<DiffusionTree, ModelError> {
    let n = cascade.len();
    if n < 2 {
        return Err(ModelError::Contract(format!(
            "cascade `{}` has fewer than two events",
            cascade.id
        )));
    }
    let users: Vec<usize> = cascade.users().collect();
    let times: Vec<f64> = cascade.events.iter().map(|e| e.time).collect();
    let mut parents = vec![None; n];
    for i in 1..n {
        let beta = net.beta(&users[..i], &times[..i])?;
        let mut best = 0;
        for (j, &b) in beta.iter().enumerate() {
            if b > beta[best] {
                best = j;
            }
        }
        parents[i] = Some(best);
    }
    Ok(DiffusionTree {
        cascade_id: cascade.id.clone(),
        parents,
    })
}

/// Tree that attaches every activation to the one right before it.
pub fn predecessor_baseline(cascade: &Cascade) -> DiffusionTree {
    DiffusionTree {
        cascade_id: cascade.id.clone(),
        parents: (0..cascade.len()).map(|k| k.checked_sub(1)).collect(),
    }
}

/// Fraction of non-root positions whose parent matches `truth`, pooled
/// over all pairs.
pub fn parent_accuracy<'t>(
    pairs: impl IntoIterator<Item = (&'t DiffusionTree, &'t [Option<usize>])>,
) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for (tree, truth) in pairs {
        for (got, want) in tree.parents.iter().zip(truth).skip(1) {
            total += 1;
            hit += usize::from(got == want);
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}
