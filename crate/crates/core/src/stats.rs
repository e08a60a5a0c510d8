//! Small summary statistics for Monte Carlo checks.

/// Median of a non-empty sample; NaNs sort last.
pub fn median(sample: &[f64]) -> f64 {
    assert!(!sample.is_empty(), "median of an empty sample");
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Unbiased sample variance.
pub fn variance(sample: &[f64]) -> f64 {
    let m = mean(sample);
    sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (sample.len() - 1) as f64
}

/// `(p - 1)!!`, the p-th absolute moment of a standard Gaussian for even p.
pub fn gaussian_abs_moment(p: u32) -> f64 {
    (1..p).step_by(2).map(f64::from).product()
}

pub fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}
