#![allow(dead_code)]

pub mod oracle;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tandrud::data::{Cascade, Event, TimeBinning};
use tandrud::graphembed::EmbeddingMatrix;
use tandrud::model::{AttentionAdjust, Dims, ModelConfig, ModelParams, ParamId};
use tandrud::numeric::Tensor;

pub struct Toy {
    pub params: ModelParams,
    pub topology: EmbeddingMatrix,
    pub time: TimeBinning,
    pub config: ModelConfig,
    pub cascade: Cascade,
}

impl Toy {
    pub fn topology_rows(&self) -> Vec<Vec<f64>> {
        (0..self.topology.num_nodes())
            .map(|u| self.topology.row(u).to_vec())
            .collect()
    }

    pub fn users(&self, len: usize) -> Vec<usize> {
        self.cascade.events[..len].iter().map(|e| e.user).collect()
    }

    pub fn times(&self, len: usize) -> Vec<f64> {
        self.cascade.events[..len].iter().map(|e| e.time).collect()
    }
}

/// Overwrites every parameter, biases included, with uniform noise in
/// `[-scale, scale]`.
pub fn randomize(params: &mut ModelParams, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in ParamId::ALL {
        for v in params.get_mut(id).values_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

/// Random parameters, topology and a cascade of `len` distinct users with
/// increasing timestamps.
pub fn toy(dims: Dims, len: usize, seed: u64, use_topology: bool, adjust: AttentionAdjust) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(dims, seed);
    randomize(&mut params, seed.wrapping_add(1), 0.8);
    let topo_values: Vec<f64> = (0..dims.users * dims.d_g)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let topology = EmbeddingMatrix {
        values: Tensor::matrix(dims.users, dims.d_g, topo_values).unwrap(),
        trained: true,
        isolated: vec![false; dims.users],
    };
    let mut users: Vec<usize> = (0..dims.users).collect();
    users.shuffle(&mut rng);
    let mut t = 0.0;
    let events = users[..len]
        .iter()
        .map(|&user| {
            let e = Event { user, time: t };
            t += rng.random_range(0.1..3.0);
            e
        })
        .collect::<Vec<_>>();
    let span = events.last().unwrap().time;
    Toy {
        params,
        topology,
        time: TimeBinning::new(span, dims.t_bins),
        config: ModelConfig {
            use_topology,
            dropout_keep: 1.0,
            l2_lambda: 0.0,
            max_len: 200,
            adjust,
        },
        cascade: Cascade {
            id: format!("toy{seed}"),
            events,
        },
    }
}
