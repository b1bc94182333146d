use crate::numeric::Tensor;

/// Pairwise row cosine similarity of an `i × d_g` matrix.
///
/// A zero row has similarity 0 with everything, itself included.
pub fn cosine_similarity_matrix(rows: &Tensor) -> Tensor {
    let n = rows.rows();
    let norms: Vec<f64> = (0..n)
        .map(|r| rows.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut out = Tensor::zeros(&[n, n]);
    for k in 0..n {
        if norms[k] == 0.0 {
            continue;
        }
        out.set(k, k, 1.0);
        for l in (k + 1)..n {
            if norms[l] == 0.0 {
                continue;
            }
            let dot: f64 = rows
                .row_slice(k)
                .iter()
                .zip(rows.row_slice(l))
                .map(|(a, b)| a * b)
                .sum();
            let e = (dot / (norms[k] * norms[l])).clamp(-1.0, 1.0);
            out.set(k, l, e);
            out.set(l, k, e);
        }
    }
    out
}
