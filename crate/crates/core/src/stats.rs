//! Sample mean and standard error with a fixed accumulation order.

/// Returns `(mean, standard error)`; the standard error is the sample
/// standard deviation (n − 1 denominator) over √n. Summation runs in slice
/// order so results are reproducible.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    (mean, sd / (n as f64).sqrt())
}

/// √(Σ sᵢ²) for independent estimates.
pub fn combine_se(parts: &[f64]) -> f64 {
    parts.iter().map(|s| s * s).sum::<f64>().sqrt()
}
