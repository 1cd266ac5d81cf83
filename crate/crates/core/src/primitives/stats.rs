//! Summary statistics learned by primitives. All functions skip missing (`NaN`) values.

pub fn observed(values: &[f64]) -> Vec<f64> {
    values.iter().copied().filter(|v| !v.is_nan()).collect()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    let obs = observed(values);
    if obs.is_empty() {
        return None;
    }
    Some(obs.iter().sum::<f64>() / obs.len() as f64)
}

/// Population variance (divisor `n`).
pub fn variance(values: &[f64]) -> Option<f64> {
    let obs = observed(values);
    let m = mean(&obs)?;
    Some(obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / obs.len() as f64)
}

/// Adjusted Fisher-Pearson sample skewness
/// `G1 = sqrt(n (n - 1)) / (n - 2) * m3 / m2^(3/2)` with central moments
/// `m_k = (1/n) sum (x - mean)^k`. Zero when `n < 3` or the values are constant.
pub fn skewness(values: &[f64]) -> f64 {
    let obs = observed(values);
    let n = obs.len();
    if n < 3 {
        return 0.0;
    }
    let nf = n as f64;
    let m = obs.iter().sum::<f64>() / nf;
    let m2 = obs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf;
    let m3 = obs.iter().map(|v| (v - m).powi(3)).sum::<f64>() / nf;
    if m2 == 0.0 {
        return 0.0;
    }
    (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * m3 / m2.powf(1.5)
}

/// Linear-interpolation quantile (Hyndman-Fan type 7): with sorted values
/// `x[0..n]`, `h = (n - 1) q` and `Q = x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h])`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    let mut obs = observed(values);
    if obs.is_empty() {
        return None;
    }
    obs.sort_by(f64::total_cmp);
    let h = (obs.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(obs.len() - 1);
    Some(obs[lo] + (h - lo as f64) * (obs[hi] - obs[lo]))
}

pub fn missing_fraction(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| v.is_nan()).count() as f64 / values.len() as f64
}
