//! Fractional Brownian motion by circulant embedding of the fractional Gaussian noise
//! covariance, with a Cholesky fallback.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Cholesky factors are dense, so the fallback is limited to modest grids.
const CHOLESKY_LIMIT: usize = 1 << 11;

/// Eigenvalues below `-EIGEN_TOLERANCE * max` count as negative.
const EIGEN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbmMethod {
    Circulant,
    Cholesky,
}

/// Reusable sampler for fBM on a fixed dyadic grid.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    hurst: f64,
    increments: usize,
    scale: f64,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    /// Square roots of the circulant eigenvalues, already divided by the FFT length.
    Circulant { sqrt_eigen: Vec<f64> },
    /// Row-major lower-triangular factor of the noise covariance.
    Cholesky { lower: Vec<f64> },
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub(crate) fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

impl FbmSampler {
    /// Circulant embedding; falls back to Cholesky if an eigenvalue is negative.
    pub fn new(hurst: f64, n_max: u32, horizon: f64) -> Result<Self> {
        validate_hurst(hurst)?;
        let n = 1usize << n_max;
        let scale = (horizon / n as f64).powf(hurst);
        match circulant_roots(hurst, n) {
            Some(sqrt_eigen) => {
                Ok(FbmSampler { hurst, increments: n, scale, kind: Kind::Circulant { sqrt_eigen } })
            }
            None => {
                log::info!("circulant embedding not positive for H={hurst}, n={n}; using Cholesky");
                Self::cholesky(hurst, n_max, horizon)
            }
        }
    }

    /// Dense Cholesky factorisation of the noise covariance.
    pub fn cholesky(hurst: f64, n_max: u32, horizon: f64) -> Result<Self> {
        validate_hurst(hurst)?;
        let n = 1usize << n_max;
        if n > CHOLESKY_LIMIT {
            return Err(Error::Generation(format!(
                "Cholesky fallback limited to {CHOLESKY_LIMIT} increments, requested {n}"
            )));
        }
        let scale = (horizon / n as f64).powf(hurst);
        let gamma: Vec<f64> = (0..n).map(|k| fgn_autocovariance(hurst, k)).collect();
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = gamma[i - j];
                for k in 0..j {
                    s -= lower[i * n + k] * lower[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Generation(
                            "noise covariance is not positive definite".into(),
                        ));
                    }
                    lower[i * n + i] = s.sqrt();
                } else {
                    lower[i * n + j] = s / lower[j * n + j];
                }
            }
        }
        Ok(FbmSampler { hurst, increments: n, scale, kind: Kind::Cholesky { lower } })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn method(&self) -> FbmMethod {
        match self.kind {
            Kind::Circulant { .. } => FbmMethod::Circulant,
            Kind::Cholesky { .. } => FbmMethod::Cholesky,
        }
    }

    /// Path values `B(k T / n)`, `k = 0..=n`, starting at 0.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let noise = self.sample_noise(rng);
        let mut values = Vec::with_capacity(self.increments + 1);
        let mut acc = 0.0;
        values.push(acc);
        for x in noise {
            acc += self.scale * x;
            values.push(acc);
        }
        values
    }

    /// Unit-step fractional Gaussian noise of length n.
    fn sample_noise<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.increments;
        match &self.kind {
            Kind::Circulant { sqrt_eigen } => {
                let len = 2 * n;
                let mut w = vec![Complex64::new(0.0, 0.0); len];
                w[0] = Complex64::new(sqrt_eigen[0] * rng.sample::<f64, _>(StandardNormal), 0.0);
                w[n] = Complex64::new(sqrt_eigen[n] * rng.sample::<f64, _>(StandardNormal), 0.0);
                for k in 1..n {
                    let s = sqrt_eigen[k] * std::f64::consts::FRAC_1_SQRT_2;
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    w[k] = Complex64::new(s * re, s * im);
                    w[len - k] = w[k].conj();
                }
                FftPlanner::new().plan_fft_forward(len).process(&mut w);
                w[..n].iter().map(|c| c.re).collect()
            }
            Kind::Cholesky { lower } => {
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                (0..n).map(|i| (0..=i).map(|k| lower[i * n + k] * z[k]).sum()).collect()
            }
        }
    }
}

fn validate_hurst(hurst: f64) -> Result<()> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::parameter("hurst", format!("must lie in (0, 1), got {hurst}")));
    }
    Ok(())
}

/// `sqrt(lambda_k / 2n)` for the minimal circulant embedding, or `None` when the
/// embedding has a genuinely negative eigenvalue.
fn circulant_roots(hurst: f64, n: usize) -> Option<Vec<f64>> {
    let len = 2 * n;
    let mut row = vec![Complex64::new(0.0, 0.0); len];
    for (k, r) in row.iter_mut().enumerate().take(n + 1) {
        *r = Complex64::new(fgn_autocovariance(hurst, k), 0.0);
    }
    for k in 1..n {
        row[len - k] = row[k];
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut row);
    let max = row.iter().map(|c| c.re).fold(0.0, f64::max);
    if row.iter().any(|c| c.re < -EIGEN_TOLERANCE * max) {
        return None;
    }
    Some(row.iter().map(|c| (c.re.max(0.0) / len as f64).sqrt()).collect())
}
