//! Forward pass of the two-level attention network for one cascade prefix.
//!
//! Positions are 0-based rows throughout: row `j` of every `i × ·` matrix
//! belongs to the `j`-th activated user of the prefix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{AttentionAdjust, ModelConfig, ModelError, ModelParams, ParamId};
use crate::data::{PrefixInstance, TimeBinning};
use crate::graphembed::{cosine_similarity_matrix, EmbeddingMatrix};
use crate::numeric::{log_sum_exp, masked_softmax, Gradients, Tape, Tensor, Var};

/// Instances per tape when computing batch gradients. Fixed so that the
/// reduction order, and therefore the result, never depends on the
/// number of worker threads.
const CHUNK: usize = 4;

/// Read-only view binding parameters, configuration and frozen inputs.
#[derive(Clone, Copy)]
pub struct Network<'a> {
    pub params: &'a ModelParams,
    pub config: &'a ModelConfig,
    pub topology: Option<&'a EmbeddingMatrix>,
    pub time: TimeBinning,
}

/// Parameters registered on one tape. Transposes are built lazily, once
/// per tape.
pub struct ParamVars {
    vars: [Option<Var>; 19],
    transposed: [Option<Var>; 19],
}

impl ParamVars {
    pub fn new() -> Self {
        ParamVars {
            vars: [None; 19],
            transposed: [None; 19],
        }
    }
}

impl Default for ParamVars {
    fn default() -> Self {
        ParamVars::new()
    }
}

/// Node handles for every intermediate quantity of one prefix.
#[derive(Clone, Copy, Debug)]
pub struct PrefixVars {
    /// Receiver-side attention, `i × i`, row `j` over predecessors `k < j`.
    pub alpha_recv: Var,
    /// Sender-side attention, `i × i`, row `j` over successors `k > j`.
    pub alpha_send: Var,
    pub d_recv: Var,
    pub d_send: Var,
    pub u: Var,
    pub f: Var,
    /// `1 × i`.
    pub beta: Var,
    /// `1 × d`.
    pub c: Var,
    /// `1 × N`.
    pub logits: Var,
}

/// Evaluation-mode outputs for one prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardResult {
    pub p: Vec<f64>,
    pub beta: Vec<f64>,
    pub c: Vec<f64>,
    pub d_recv: Tensor,
    pub d_send: Tensor,
    pub u: Tensor,
    pub f: Tensor,
    pub alpha_recv: Tensor,
    pub alpha_send: Tensor,
}

/// Inverted-dropout masks drawn per call.
pub struct Dropout<'r> {
    pub keep: f64,
    pub rng: &'r mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn mask(&mut self, rows: usize, cols: usize) -> Tensor {
        let scale = 1.0 / self.keep;
        let values = (0..rows * cols)
            .map(|_| {
                if self.rng.random::<f64>() < self.keep {
                    scale
                } else {
                    0.0
                }
            })
            .collect();
        Tensor::matrix(rows, cols, values).expect("shape")
    }
}

fn causal_mask(i: usize, predecessors: bool) -> Vec<bool> {
    let mut m = vec![false; i * i];
    for j in 0..i {
        for k in 0..i {
            m[j * i + k] = if predecessors { k < j } else { k > j };
        }
    }
    m
}

impl<'a> Network<'a> {
    pub fn new(
        params: &'a ModelParams,
        config: &'a ModelConfig,
        topology: Option<&'a EmbeddingMatrix>,
        time: TimeBinning,
    ) -> Result<Self, ModelError> {
        if config.use_topology {
            let topo = topology.ok_or(ModelError::MissingTopology)?;
            if topo.num_nodes() != params.dims.users || topo.dim() != params.dims.d_g {
                return Err(ModelError::Contract(format!(
                    "topological embeddings are {}×{}, model expects {}×{}",
                    topo.num_nodes(),
                    topo.dim(),
                    params.dims.users,
                    params.dims.d_g
                )));
            }
        }
        if time.bins != params.dims.t_bins {
            return Err(ModelError::Contract(format!(
                "time binning has {} intervals, model has {}",
                time.bins, params.dims.t_bins
            )));
        }
        Ok(Network {
            params,
            config,
            topology,
            time,
        })
    }

    fn var(&self, tape: &mut Tape<'a>, pv: &mut ParamVars, id: ParamId) -> Var {
        *pv.vars[id.index()].get_or_insert_with(|| tape.param(id.index(), self.params.get(id)))
    }

    fn var_t(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        id: ParamId,
    ) -> Result<Var, ModelError> {
        if let Some(v) = pv.transposed[id.index()] {
            return Ok(v);
        }
        let v = self.var(tape, pv, id);
        let t = tape.transpose(v)?;
        pv.transposed[id.index()] = Some(t);
        Ok(t)
    }

    /// `x · Wᵀ` for every row `x` of `rows`.
    fn project(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        rows: Var,
        w: ParamId,
    ) -> Result<Var, ModelError> {
        let wt = self.var_t(tape, pv, w)?;
        Ok(tape.matmul(rows, wt)?)
    }

    /// Cosine similarity of the prefix users' topological embeddings.
    pub fn similarity(&self, users: &[usize]) -> Option<Tensor> {
        if !self.config.use_topology {
            return None;
        }
        self.topology
            .map(|t| cosine_similarity_matrix(&t.gather(users)))
    }

    /// Similarity-adjusted attention over the support given by `mask`.
    fn attend(
        &self,
        tape: &mut Tape<'a>,
        logits: Var,
        mask: &[bool],
        similarity: Option<Var>,
    ) -> Result<Var, ModelError> {
        let Some(e) = similarity else {
            return Ok(tape.softmax_rows(logits, Some(mask))?);
        };
        let adjusted = match self.config.adjust {
            AttentionAdjust::Literal => {
                let first = tape.softmax_rows(logits, Some(mask))?;
                tape.mul(first, e)?
            }
            AttentionAdjust::RawLogit => tape.mul(logits, e)?,
        };
        Ok(tape.softmax_rows(adjusted, Some(mask))?)
    }

    /// Receiver-role representations `d^r` for every position (rows), and
    /// the attention over predecessors' sender embeddings that built them.
    /// The first position has no predecessors, so its row is its own
    /// receiver embedding.
    pub fn receiver_role(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        xs: Var,
        xr: Var,
        similarity: Option<Var>,
    ) -> Result<(Var, Var), ModelError> {
        let i = tape.value(xs).rows();
        let query = self.project(tape, pv, xr, ParamId::RecvCtx)?;
        let key = self.project(tape, pv, xs, ParamId::SendOut)?;
        let key_t = tape.transpose(key)?;
        let logits = tape.matmul(query, key_t)?;
        let alpha = self.attend(tape, logits, &causal_mask(i, true), similarity)?;
        let pooled = tape.matmul(alpha, xs)?;
        let d = tape.add(pooled, xr)?;
        Ok((alpha, d))
    }

    /// Sender-role representations `d^s`: attention over successors'
    /// receiver embeddings plus the user's own sender embedding. The last
    /// position has no successors within the prefix.
    pub fn sender_role(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        xs: Var,
        xr: Var,
        similarity: Option<Var>,
    ) -> Result<(Var, Var), ModelError> {
        let i = tape.value(xs).rows();
        let query = self.project(tape, pv, xs, ParamId::SendCtx)?;
        let key = self.project(tape, pv, xr, ParamId::RecvOut)?;
        let key_t = tape.transpose(key)?;
        let logits = tape.matmul(query, key_t)?;
        let alpha = self.attend(tape, logits, &causal_mask(i, false), similarity)?;
        let pooled = tape.matmul(alpha, xr)?;
        let d = tape.add(pooled, xs)?;
        Ok((alpha, d))
    }

    /// Forget-gate fusion `u = (1 - m) ⊙ d^s + (1 - n) ⊙ d^r`.
    pub fn fuse_gate(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        d_send: Var,
        d_recv: Var,
    ) -> Result<Var, ModelError> {
        let gate =
            |tape: &mut Tape<'a>, pv: &mut ParamVars, ws: ParamId, wr: ParamId, b: ParamId| {
                let a = self.project(tape, pv, d_send, ws)?;
                let r = self.project(tape, pv, d_recv, wr)?;
                let sum = tape.add(a, r)?;
                let bias = self.var(tape, pv, b);
                let pre = tape.add_row(sum, bias)?;
                let g = tape.sigmoid(pre)?;
                Ok::<Var, ModelError>(tape.one_minus(g)?)
            };
        let keep_send = gate(
            tape,
            pv,
            ParamId::GateMSend,
            ParamId::GateMRecv,
            ParamId::GateMBias,
        )?;
        let keep_recv = gate(
            tape,
            pv,
            ParamId::GateNSend,
            ParamId::GateNRecv,
            ParamId::GateNBias,
        )?;
        let s = tape.mul(keep_send, d_send)?;
        let r = tape.mul(keep_recv, d_recv)?;
        Ok(tape.add(s, r)?)
    }

    /// `tanh(W_g g + b_g)` for every raw topological row.
    pub fn project_topology(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        raw: Var,
    ) -> Result<Var, ModelError> {
        if !self.config.use_topology {
            return Err(ModelError::Contract(
                "topology projection requested with topology disabled".into(),
            ));
        }
        let proj = self.project(tape, pv, raw, ParamId::TopoProj)?;
        let bias = self.var(tape, pv, ParamId::TopoBias);
        let pre = tape.add_row(proj, bias)?;
        Ok(tape.tanh(pre)?)
    }

    /// One-hot interval encodings (`i × T`) for a prefix's timestamps,
    /// measured back from the prefix's last activation.
    pub fn time_onehots(&self, times: &[f64]) -> Result<Tensor, ModelError> {
        let last = *times
            .last()
            .ok_or_else(|| ModelError::Contract("empty prefix".into()))?;
        let t = self.time.bins;
        let mut oh = Tensor::zeros(&[times.len(), t]);
        for (j, &tj) in times.iter().enumerate() {
            let bin = self.time.bin(last - tj)?;
            oh.set(j, bin, 1.0);
        }
        Ok(oh)
    }

    /// Time-decay gates `λ = σ(W_t t + b_t)` from one-hot rows.
    pub fn time_gate(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        onehots: Tensor,
    ) -> Result<Var, ModelError> {
        if onehots.cols() != self.time.bins {
            return Err(ModelError::Contract(format!(
                "time encodings have {} columns, expected {}",
                onehots.cols(),
                self.time.bins
            )));
        }
        for r in 0..onehots.rows() {
            let row = onehots.row_slice(r);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(ModelError::Contract(format!(
                    "time encoding row {r} is not one-hot"
                )));
            }
        }
        let oh = tape.constant(onehots);
        let proj = self.project(tape, pv, oh, ParamId::TimeProj)?;
        let bias = self.var(tape, pv, ParamId::TimeBias);
        let pre = tape.add_row(proj, bias)?;
        Ok(tape.sigmoid(pre)?)
    }

    /// Cascade-level attention: `f_j = λ_j ⊙ (g_j + u_j)` (or `λ_j ⊙ u_j`
    /// without topology), `β = softmax(⟨w, f_j⟩)`, `c = Σ β_j f_j`.
    /// Returns `(f, β, c)`.
    pub fn cascade_encode(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        u: Var,
        topo: Option<Var>,
        lambda: Var,
        dropout: &mut Option<Dropout<'_>>,
    ) -> Result<(Var, Var, Var), ModelError> {
        let inner = match topo {
            Some(g) => tape.add(g, u)?,
            None => u,
        };
        let mut f = tape.mul(lambda, inner)?;
        if let Some(dr) = dropout.as_mut() {
            let v = tape.value(f);
            let m = dr.mask(v.rows(), v.cols());
            let m = tape.constant(m);
            f = tape.mul(f, m)?;
        }
        let w = self.var_t(tape, pv, ParamId::CascadeAttn)?;
        let scores = tape.matmul(f, w)?;
        let scores = tape.transpose(scores)?;
        let beta = tape.softmax_rows(scores, None)?;
        let c = tape.matmul(beta, f)?;
        Ok((f, beta, c))
    }

    /// Output logits `W_c c + b_c` over all users.
    pub fn predict_logits(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        c: Var,
    ) -> Result<Var, ModelError> {
        let proj = self.project(tape, pv, c, ParamId::OutProj)?;
        let bias = self.var(tape, pv, ParamId::OutBias);
        Ok(tape.add_row(proj, bias)?)
    }

    /// Records the full forward computation for one prefix.
    pub fn build(
        &self,
        tape: &mut Tape<'a>,
        pv: &mut ParamVars,
        users: &[usize],
        times: &[f64],
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<PrefixVars, ModelError> {
        if users.is_empty() || users.len() != times.len() {
            return Err(ModelError::Contract(format!(
                "prefix has {} users and {} timestamps",
                users.len(),
                times.len()
            )));
        }
        let n = self.params.dims.users;
        if let Some(&bad) = users.iter().find(|&&u| u >= n) {
            return Err(ModelError::Contract(format!(
                "user index {bad} outside vocabulary of {n}"
            )));
        }
        let xs = tape.gather(
            ParamId::SenderEmb.index(),
            self.params.get(ParamId::SenderEmb),
            users,
        )?;
        let xr = tape.gather(
            ParamId::ReceiverEmb.index(),
            self.params.get(ParamId::ReceiverEmb),
            users,
        )?;
        let similarity = self.similarity(users).map(|e| tape.constant(e));

        let (alpha_recv, d_recv) = self.receiver_role(tape, pv, xs, xr, similarity)?;
        let (alpha_send, d_send) = self.sender_role(tape, pv, xs, xr, similarity)?;
        let mut u = self.fuse_gate(tape, pv, d_send, d_recv)?;
        if let Some(dr) = dropout.as_mut() {
            let m = dr.mask(users.len(), self.params.dims.d);
            let m = tape.constant(m);
            u = tape.mul(u, m)?;
        }

        let topo = match (self.config.use_topology, self.topology) {
            (true, Some(t)) => {
                let raw = tape.constant(t.gather(users));
                Some(self.project_topology(tape, pv, raw)?)
            }
            _ => None,
        };
        let lambda = self.time_gate(tape, pv, self.time_onehots(times)?)?;
        let (f, beta, c) = self.cascade_encode(tape, pv, u, topo, lambda, &mut dropout)?;
        let logits = self.predict_logits(tape, pv, c)?;
        Ok(PrefixVars {
            alpha_recv,
            alpha_send,
            d_recv,
            d_send,
            u,
            f,
            beta,
            c,
            logits,
        })
    }

    /// Evaluation-mode forward pass (no dropout). With `mask_observed`,
    /// users already in the prefix get probability 0 and the rest are
    /// renormalized.
    pub fn forward(
        &self,
        users: &[usize],
        times: &[f64],
        mask_observed: bool,
    ) -> Result<ForwardResult, ModelError> {
        let mut tape = Tape::new();
        let mut pv = ParamVars::new();
        let v = self.build(&mut tape, &mut pv, users, times, None)?;
        let logits = tape.value(v.logits).values();
        let p = output_distribution(logits, users, mask_observed);
        Ok(ForwardResult {
            p,
            beta: tape.value(v.beta).values().to_vec(),
            c: tape.value(v.c).values().to_vec(),
            d_recv: tape.value(v.d_recv).clone(),
            d_send: tape.value(v.d_send).clone(),
            u: tape.value(v.u).clone(),
            f: tape.value(v.f).clone(),
            alpha_recv: tape.value(v.alpha_recv).clone(),
            alpha_send: tape.value(v.alpha_send).clone(),
        })
    }

    /// Output logits only; cheaper to keep than the full result when ranking.
    pub fn logits(&self, users: &[usize], times: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let mut pv = ParamVars::new();
        let v = self.build(&mut tape, &mut pv, users, times, None)?;
        Ok(tape.value(v.logits).values().to_vec())
    }

    /// Cascade-level attention weights for a prefix.
    pub fn beta(&self, users: &[usize], times: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let mut pv = ParamVars::new();
        let v = self.build(&mut tape, &mut pv, users, times, None)?;
        Ok(tape.value(v.beta).values().to_vec())
    }

    fn chunk_loss(
        &self,
        chunk: &[PrefixInstance<'_>],
        dropout_seed: Option<u64>,
        first_index: usize,
    ) -> Result<(f64, Gradients), ModelError> {
        let mut tape = Tape::new();
        let mut pv = ParamVars::new();
        let mut total: Option<Var> = None;
        for (k, inst) in chunk.iter().enumerate() {
            let mut rng;
            let dropout = match dropout_seed {
                Some(seed) if self.config.dropout_keep < 1.0 => {
                    rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((first_index + k) as u64);
                    Some(Dropout {
                        keep: self.config.dropout_keep,
                        rng: &mut rng,
                    })
                }
                _ => None,
            };
            let v = self.build(&mut tape, &mut pv, &inst.users(), &inst.times(), dropout)?;
            let ce = tape.cross_entropy(v.logits, inst.target())?;
            total = Some(match total {
                Some(t) => tape.add(t, ce)?,
                None => ce,
            });
        }
        let total = total.ok_or_else(|| ModelError::Contract("empty chunk".into()))?;
        let value = tape.value(total).item();
        let grads = tape.backward(total)?.into_params();
        Ok((value, grads))
    }

    /// Mean cross-entropy over `batch` plus `λ Σ‖θ‖²` (biases excluded),
    /// with dense gradients for every parameter in [`ParamId::ALL`] order.
    ///
    /// `dropout_seed = None` evaluates deterministically without dropout.
    pub fn loss_and_grad(
        &self,
        batch: &[PrefixInstance<'_>],
        dropout_seed: Option<u64>,
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Contract("empty batch".into()));
        }
        let parts: Vec<Result<(f64, Gradients), ModelError>> = batch
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| self.chunk_loss(chunk, dropout_seed, ci * CHUNK))
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.params.zeros_like();
        let mut ce = 0.0;
        for part in parts {
            let (v, g) = part?;
            ce += v;
            g.accumulate_into(&mut grads, scale);
        }
        let mut loss = ce * scale;
        let lambda = self.config.l2_lambda;
        if lambda > 0.0 {
            loss += lambda * self.params.l2_norm_sq();
            for id in ParamId::ALL.iter().filter(|id| !id.is_bias()) {
                let p = self.params.get(*id);
                for (g, &x) in grads[id.index()].values_mut().iter_mut().zip(p.values()) {
                    *g += 2.0 * lambda * x;
                }
            }
        }
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        Ok((loss, grads))
    }

    /// Deterministic loss without gradients.
    pub fn loss(&self, batch: &[PrefixInstance<'_>]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Contract("empty batch".into()));
        }
        let ce: Result<Vec<f64>, ModelError> = batch
            .par_iter()
            .map(|inst| {
                let z = self.logits(&inst.users(), &inst.times())?;
                Ok(log_sum_exp(&z) - z[inst.target()])
            })
            .collect();
        let loss = ce?.iter().sum::<f64>() / batch.len() as f64
            + self.config.l2_lambda * self.params.l2_norm_sq();
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        Ok(loss)
    }
}

/// Softmax of `logits`, optionally excluding `observed` users. Falls back
/// to the unmasked distribution when every user is observed.
pub fn output_distribution(logits: &[f64], observed: &[usize], mask_observed: bool) -> Vec<f64> {
    if mask_observed {
        let mut support = vec![true; logits.len()];
        for &u in observed {
            support[u] = false;
        }
        if let Ok(p) = masked_softmax(logits, &support) {
            return p;
        }
    }
    masked_softmax(logits, &vec![true; logits.len()]).expect("non-empty support")
}
