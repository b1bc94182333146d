//! Straight-line scalar re-implementation of the network's forward pass.
//!
//! Deliberately shares nothing with the library's tape code: plain nested
//! loops over `Vec<f64>`, one position at a time, written directly from
//! the model equations. Only the raw parameter buffers are read from the
//! library types.

#![allow(dead_code)]

use tandrud::model::{ModelParams, ParamId};

pub struct OracleOut {
    pub alpha_recv: Vec<Vec<f64>>,
    pub alpha_send: Vec<Vec<f64>>,
    pub d_recv: Vec<Vec<f64>>,
    pub d_send: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub c: Vec<f64>,
    pub p: Vec<f64>,
}

pub struct OracleInput<'a> {
    pub params: &'a ModelParams,
    /// Topological embedding per user (all N rows), or `None` for the
    /// topology-free variant.
    pub topology: Option<&'a [Vec<f64>]>,
    pub time_unit: f64,
    pub users: &'a [usize],
    pub times: &'a [f64],
    /// Adjust by `softmax(α'·e)` on normalized attention (true) or on raw
    /// logits (false).
    pub literal: bool,
}

fn mat(params: &ModelParams, id: ParamId) -> (usize, usize, Vec<f64>) {
    let t = params.get(id);
    let shape = t.shape();
    let (r, c) = if shape.len() == 2 {
        (shape[0], shape[1])
    } else {
        (1, shape[0])
    };
    (r, c, t.values().to_vec())
}

fn matvec(w: &(usize, usize, Vec<f64>), x: &[f64]) -> Vec<f64> {
    let (r, c, v) = w;
    assert_eq!(*c, x.len());
    let mut out = vec![0.0; *r];
    for a in 0..*r {
        let mut s = 0.0;
        for b in 0..*c {
            s += v[a * c + b] * x[b];
        }
        out[a] = s;
    }
    out
}

fn row(w: &(usize, usize, Vec<f64>), i: usize) -> Vec<f64> {
    w.2[i * w.1..(i + 1) * w.1].to_vec()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

pub fn oracle_forward(inp: &OracleInput<'_>) -> OracleOut {
    let p = inp.params;
    let i = inp.users.len();
    let d = p.dims.d;
    let t_bins = p.dims.t_bins;

    let xs_tab = mat(p, ParamId::SenderEmb);
    let xr_tab = mat(p, ParamId::ReceiverEmb);
    let xs: Vec<Vec<f64>> = inp.users.iter().map(|&u| row(&xs_tab, u)).collect();
    let xr: Vec<Vec<f64>> = inp.users.iter().map(|&u| row(&xr_tab, u)).collect();

    let w_so = mat(p, ParamId::SendOut);
    let w_rc = mat(p, ParamId::RecvCtx);
    let w_ro = mat(p, ParamId::RecvOut);
    let w_sc = mat(p, ParamId::SendCtx);

    let e = |k: usize, j: usize| -> f64 {
        let g = inp.topology.unwrap();
        cosine(&g[inp.users[k]], &g[inp.users[j]])
    };

    let adjust = |logits: &[f64], ks: &[usize], j: usize| -> Vec<f64> {
        let first = softmax(logits);
        match inp.topology {
            None => first,
            Some(_) => {
                let base = if inp.literal { first } else { logits.to_vec() };
                let scaled: Vec<f64> = ks.iter().zip(&base).map(|(&k, &a)| a * e(k, j)).collect();
                softmax(&scaled)
            }
        }
    };

    // receiver role
    let mut alpha_recv = vec![vec![0.0; i]; i];
    let mut d_recv = Vec::with_capacity(i);
    for j in 0..i {
        let ctx = matvec(&w_rc, &xr[j]);
        let ks: Vec<usize> = (0..j).collect();
        let mut dj = xr[j].clone();
        if !ks.is_empty() {
            let logits: Vec<f64> = ks
                .iter()
                .map(|&k| dot(&matvec(&w_so, &xs[k]), &ctx))
                .collect();
            let a = adjust(&logits, &ks, j);
            for (n, &k) in ks.iter().enumerate() {
                alpha_recv[j][k] = a[n];
                for z in 0..d {
                    dj[z] += a[n] * xs[k][z];
                }
            }
        }
        d_recv.push(dj);
    }

    // sender role
    let mut alpha_send = vec![vec![0.0; i]; i];
    let mut d_send = Vec::with_capacity(i);
    for j in 0..i {
        let ctx = matvec(&w_sc, &xs[j]);
        let ks: Vec<usize> = (j + 1..i).collect();
        let mut dj = xs[j].clone();
        if !ks.is_empty() {
            let logits: Vec<f64> = ks
                .iter()
                .map(|&k| dot(&matvec(&w_ro, &xr[k]), &ctx))
                .collect();
            let a = adjust(&logits, &ks, j);
            for (n, &k) in ks.iter().enumerate() {
                alpha_send[j][k] = a[n];
                for z in 0..d {
                    dj[z] += a[n] * xr[k][z];
                }
            }
        }
        d_send.push(dj);
    }

    // forget gate
    let w_ms = mat(p, ParamId::GateMSend);
    let w_mr = mat(p, ParamId::GateMRecv);
    let b_m = p.get(ParamId::GateMBias).values().to_vec();
    let w_ns = mat(p, ParamId::GateNSend);
    let w_nr = mat(p, ParamId::GateNRecv);
    let b_n = p.get(ParamId::GateNBias).values().to_vec();
    let mut u = Vec::with_capacity(i);
    for j in 0..i {
        let a = matvec(&w_ms, &d_send[j]);
        let b = matvec(&w_mr, &d_recv[j]);
        let c = matvec(&w_ns, &d_send[j]);
        let e2 = matvec(&w_nr, &d_recv[j]);
        let mut uj = vec![0.0; d];
        for z in 0..d {
            let m = sig(a[z] + b[z] + b_m[z]);
            let n = sig(c[z] + e2[z] + b_n[z]);
            uj[z] = (1.0 - m) * d_send[j][z] + (1.0 - n) * d_recv[j][z];
        }
        u.push(uj);
    }

    // cascade level
    let w_g = mat(p, ParamId::TopoProj);
    let b_g = p.get(ParamId::TopoBias).values().to_vec();
    let w_t = mat(p, ParamId::TimeProj);
    let b_t = p.get(ParamId::TimeBias).values().to_vec();
    let w = p.get(ParamId::CascadeAttn).values().to_vec();
    let t_last = inp.times[i - 1];
    let mut f = Vec::with_capacity(i);
    for j in 0..i {
        let dt = t_last - inp.times[j];
        let mut n = (dt / inp.time_unit).ceil() as i64;
        if n < 1 {
            n = 1;
        }
        if n > t_bins as i64 {
            n = t_bins as i64;
        }
        let col = (n - 1) as usize;
        let g: Vec<f64> = match inp.topology {
            Some(tab) => {
                let proj = matvec(&w_g, &tab[inp.users[j]]);
                (0..d).map(|z| (proj[z] + b_g[z]).tanh()).collect()
            }
            None => vec![0.0; d],
        };
        let mut fj = vec![0.0; d];
        for z in 0..d {
            let lam = sig(w_t.2[z * t_bins + col] + b_t[z]);
            fj[z] = lam * (g[z] + u[j][z]);
        }
        f.push(fj);
    }
    let scores: Vec<f64> = f.iter().map(|fj| dot(&w, fj)).collect();
    let beta = softmax(&scores);
    let mut c = vec![0.0; d];
    for j in 0..i {
        for z in 0..d {
            c[z] += beta[j] * f[j][z];
        }
    }
    let w_c = mat(p, ParamId::OutProj);
    let b_c = p.get(ParamId::OutBias).values().to_vec();
    let logits: Vec<f64> = (0..p.dims.users)
        .map(|r| dot(&row(&w_c, r), &c) + b_c[r])
        .collect();
    let probs = softmax(&logits);
    OracleOut {
        alpha_recv,
        alpha_send,
        d_recv,
        d_send,
        u,
        f,
        beta,
        c,
        p: probs,
    }
}

/// Largest absolute difference between a row-major buffer and nested rows.
pub fn max_diff_rows(flat: &[f64], rows: &[Vec<f64>]) -> f64 {
    let joined: Vec<f64> = rows.iter().flatten().copied().collect();
    assert_eq!(flat.len(), joined.len());
    flat.iter()
        .zip(&joined)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
