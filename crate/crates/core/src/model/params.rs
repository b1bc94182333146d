use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numeric::Tensor;

/// Every trainable tensor of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamId {
    /// Sender embeddings `X^s`, `N × d`.
    SenderEmb,
    /// Receiver embeddings `X^r`, `N × d`.
    ReceiverEmb,
    /// `W_s^o`: projects predecessors' sender embeddings.
    SendOut,
    /// `W_r^c`: projects the attending user's receiver embedding.
    RecvCtx,
    /// `W_r^o`: projects successors' receiver embeddings.
    RecvOut,
    /// `W_s^c`: projects the attending user's sender embedding.
    SendCtx,
    GateMSend,
    GateMRecv,
    GateMBias,
    GateNSend,
    GateNRecv,
    GateNBias,
    /// `W_g`, `d × d_g`.
    TopoProj,
    TopoBias,
    /// `W_t`, `d × T`.
    TimeProj,
    TimeBias,
    /// Cascade-level attention vector `w`.
    CascadeAttn,
    /// Output matrix `W_c`, `N × d`.
    OutProj,
    /// Output bias `b_c`, length `N`.
    OutBias,
}

impl ParamId {
    pub const ALL: [ParamId; 19] = [
        ParamId::SenderEmb,
        ParamId::ReceiverEmb,
        ParamId::SendOut,
        ParamId::RecvCtx,
        ParamId::RecvOut,
        ParamId::SendCtx,
        ParamId::GateMSend,
        ParamId::GateMRecv,
        ParamId::GateMBias,
        ParamId::GateNSend,
        ParamId::GateNRecv,
        ParamId::GateNBias,
        ParamId::TopoProj,
        ParamId::TopoBias,
        ParamId::TimeProj,
        ParamId::TimeBias,
        ParamId::CascadeAttn,
        ParamId::OutProj,
        ParamId::OutBias,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ParamId> {
        ParamId::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamId::SenderEmb => "X_s",
            ParamId::ReceiverEmb => "X_r",
            ParamId::SendOut => "W_s_o",
            ParamId::RecvCtx => "W_r_c",
            ParamId::RecvOut => "W_r_o",
            ParamId::SendCtx => "W_s_c",
            ParamId::GateMSend => "W_m_s",
            ParamId::GateMRecv => "W_m_r",
            ParamId::GateMBias => "b_m",
            ParamId::GateNSend => "W_n_s",
            ParamId::GateNRecv => "W_n_r",
            ParamId::GateNBias => "b_n",
            ParamId::TopoProj => "W_g",
            ParamId::TopoBias => "b_g",
            ParamId::TimeProj => "W_t",
            ParamId::TimeBias => "b_t",
            ParamId::CascadeAttn => "w",
            ParamId::OutProj => "W_c",
            ParamId::OutBias => "b_c",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamId> {
        ParamId::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn is_bias(self) -> bool {
        matches!(
            self,
            ParamId::GateMBias
                | ParamId::GateNBias
                | ParamId::TopoBias
                | ParamId::TimeBias
                | ParamId::OutBias
        )
    }

    /// Shape for `n` users, width `d`, topology width `dg`, `t` time bins.
    pub fn shape(self, n: usize, d: usize, dg: usize, t: usize) -> Vec<usize> {
        match self {
            ParamId::SenderEmb | ParamId::ReceiverEmb | ParamId::OutProj => vec![n, d],
            ParamId::SendOut
            | ParamId::RecvCtx
            | ParamId::RecvOut
            | ParamId::SendCtx
            | ParamId::GateMSend
            | ParamId::GateMRecv
            | ParamId::GateNSend
            | ParamId::GateNRecv => vec![d, d],
            ParamId::GateMBias
            | ParamId::GateNBias
            | ParamId::TopoBias
            | ParamId::TimeBias
            | ParamId::CascadeAttn => {
                vec![d]
            }
            ParamId::TopoProj => vec![d, dg],
            ParamId::TimeProj => vec![d, t],
            ParamId::OutBias => vec![n],
        }
    }
}

/// Model dimensions fixed at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub users: usize,
    pub d: usize,
    pub d_g: usize,
    pub t_bins: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Glorot-uniform weights in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases. Deterministic under `seed`.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = ParamId::ALL
            .iter()
            .map(|&id| {
                let shape = id.shape(dims.users, dims.d, dims.d_g, dims.t_bins);
                if id.is_bias() {
                    return Tensor::zeros(&shape);
                }
                let (fan_out, fan_in) = match shape[..] {
                    [r, c] => (r, c),
                    [r] => (r, 1),
                    _ => unreachable!("parameters are 1-D or 2-D"),
                };
                let a = glorot_bound(fan_in, fan_out);
                let size = shape.iter().product();
                let values = (0..size).map(|_| rng.random_range(-a..=a)).collect();
                Tensor::new(shape, values).expect("shape")
            })
            .collect();
        ModelParams { dims, tensors }
    }

    pub fn zeros(dims: Dims) -> Self {
        let tensors = ParamId::ALL
            .iter()
            .map(|id| Tensor::zeros(&id.shape(dims.users, dims.d, dims.d_g, dims.t_bins)))
            .collect();
        ModelParams { dims, tensors }
    }

    /// Rebuilds parameters from tensors in [`ParamId::ALL`] order, checking shapes.
    pub fn from_tensors(dims: Dims, tensors: Vec<Tensor>) -> Result<Self, String> {
        if tensors.len() != ParamId::ALL.len() {
            return Err(format!(
                "expected {} tensors, got {}",
                ParamId::ALL.len(),
                tensors.len()
            ));
        }
        for (id, t) in ParamId::ALL.iter().zip(&tensors) {
            let want = id.shape(dims.users, dims.d, dims.d_g, dims.t_bins);
            if t.shape() != want.as_slice() {
                return Err(format!(
                    "{}: shape {:?}, expected {:?}",
                    id.name(),
                    t.shape(),
                    want
                ));
            }
        }
        Ok(ModelParams { dims, tensors })
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.index()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.index()]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors.iter_mut().collect()
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// All parameters flattened in [`ParamId::ALL`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.values().iter().copied())
            .collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_scalars(), "flat parameter length");
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// Squared L2 norm over weights and embeddings; biases are excluded.
    pub fn l2_norm_sq(&self) -> f64 {
        ParamId::ALL
            .iter()
            .filter(|id| !id.is_bias())
            .map(|&id| self.get(id).sum_squares())
            .sum()
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
