//! Small numeric helpers shared by the engines.

/// Shannon entropy of a two-outcome distribution in nats, with `0·ln 0 = 0`.
/// Tiny negative inputs from roundoff are clamped to zero.
pub(crate) fn shannon_from_probs(p0: f64, p1: f64) -> f64 {
    let term = |p: f64| {
        let p = p.clamp(0.0, 1.0);
        if p <= 0.0 {
            0.0
        } else {
            -p * p.ln()
        }
    };
    term(p0) + term(p1)
}

/// Binary entropy `−p ln p − (1−p) ln(1−p)` in nats.
pub(crate) fn binary_entropy(p: f64) -> f64 {
    shannon_from_probs(p, 1.0 - p)
}

/// Ordinary least-squares slope of `y` against `x`.
pub(crate) fn lsq_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
