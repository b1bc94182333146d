/// Largest relative discrepancy between an analytic gradient and central
/// differences of `f` around `params`.
///
/// `f` returns the value together with its analytic gradient. The
/// relative error of each coordinate is `|a - n| / max(1, |a|, |n|)`.
pub fn finite_diff_check<F>(mut f: F, params: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let mut x = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x).0;
        x[i] = orig - h;
        let down = f(&x).0;
        x[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = 1.0_f64.max(analytic[i].abs()).max(numeric.abs());
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
