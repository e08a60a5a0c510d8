//! Sampled paths on a dyadic time grid and their generators.

mod fbm;
mod ingest;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fbm::{FbmMethod, FbmSampler};
pub use ingest::{ingest_csv, write_path_csv, ResampleInfo};

/// Largest supported grid exponent. Keeps a single path below 2^26 samples.
pub const MAX_RESOLUTION: u32 = 26;

/// Where a path came from. Some checks only make sense for particular generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathOrigin {
    Fbm { hurst: f64 },
    Brownian,
    Linear { slope: f64 },
    Triangle { peak_time: f64, peak_value: f64 },
    Constant { value: f64 },
    Csv(ResampleInfo),
    Derived,
    Custom,
}

impl PathOrigin {
    /// Hurst index when the path is a fractional (or standard) Brownian sample.
    pub fn hurst(&self) -> Option<f64> {
        match self {
            PathOrigin::Fbm { hurst } => Some(*hurst),
            PathOrigin::Brownian => Some(0.5),
            _ => None,
        }
    }
}

/// A continuous path sampled at `2^n_max + 1` equally spaced times on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    horizon: f64,
    n_max: u32,
    values: Vec<f64>,
    origin: PathOrigin,
}

impl SampledPath {
    pub fn new(horizon: f64, n_max: u32, values: Vec<f64>) -> Result<Self> {
        Self::with_origin(horizon, n_max, values, PathOrigin::Custom)
    }

    pub fn with_origin(
        horizon: f64,
        n_max: u32,
        values: Vec<f64>,
        origin: PathOrigin,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::parameter("horizon", format!("must be positive, got {horizon}")));
        }
        if n_max == 0 || n_max > MAX_RESOLUTION {
            return Err(Error::parameter(
                "n_max",
                format!("must lie in 1..={MAX_RESOLUTION}, got {n_max}"),
            ));
        }
        let expected = (1usize << n_max) + 1;
        if values.len() != expected {
            return Err(Error::parameter(
                "values",
                format!("expected {expected} samples for n_max={n_max}, got {}", values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Generation(format!("non-finite sample at index {i}")));
        }
        Ok(SampledPath { horizon, n_max, values, origin })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin(&self) -> &PathOrigin {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / (1u64 << self.n_max) as f64
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.step()
    }

    /// Nearest grid index to time `t`, clamped to `[0, T]`.
    pub fn index_at(&self, t: f64) -> usize {
        let k = (t / self.step()).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.last_index())
        }
    }

    /// Smallest and largest sample over the whole horizon.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn same_grid(&self, other: &SampledPath) -> bool {
        self.n_max == other.n_max && self.horizon == other.horizon
    }

    /// Applies `f` sample by sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<SampledPath> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self::with_origin(self.horizon, self.n_max, values, PathOrigin::Derived)
    }

    /// Combines two paths on the same grid sample by sample.
    pub fn zip_with(
        &self,
        other: &SampledPath,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<SampledPath> {
        if !self.same_grid(other) {
            return Err(Error::MismatchedGrids(format!(
                "(T={}, n_max={}) vs (T={}, n_max={})",
                self.horizon, self.n_max, other.horizon, other.n_max
            )));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::with_origin(self.horizon, self.n_max, values, PathOrigin::Derived)
    }
}

/// Path family requested in a [`PathSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathKind {
    Fbm { hurst: f64 },
    Bm,
    Linear { slope: f64 },
    Triangle { peak_time: f64, peak_value: f64 },
    Constant { value: f64 },
    Csv { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    #[serde(flatten)]
    pub kind: PathKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub n_max: u32,
}

fn default_horizon() -> f64 {
    1.0
}

impl PathSpec {
    pub fn new(kind: PathKind, n_max: u32) -> Self {
        PathSpec { kind, seed: 0, horizon: 1.0, n_max }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Random stream `stream` of seed `seed`. ChaCha streams are independent counters, so
/// replicates can be generated in any order or in parallel with identical results.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates a path from stream 0 of the spec's seed.
pub fn generate(spec: &PathSpec) -> Result<SampledPath> {
    generate_stream(spec, 0)
}

/// Generates a path from a given stream of the spec's seed; used for systems of
/// independent paths sharing one seed.
pub fn generate_stream(spec: &PathSpec, stream: u64) -> Result<SampledPath> {
    let n_max = spec.n_max;
    if n_max == 0 || n_max > MAX_RESOLUTION {
        return Err(Error::parameter("n_max", format!("must lie in 1..={MAX_RESOLUTION}")));
    }
    let t_end = spec.horizon;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::parameter("horizon", "must be positive"));
    }
    let n = 1usize << n_max;
    let grid = |k: usize| k as f64 * t_end / n as f64;
    let (values, origin) = match &spec.kind {
        PathKind::Fbm { hurst } => {
            let sampler = FbmSampler::new(*hurst, n_max, t_end)?;
            let mut rng = stream_rng(spec.seed, stream);
            (sampler.sample(&mut rng), PathOrigin::Fbm { hurst: *hurst })
        }
        PathKind::Bm => {
            let mut rng = stream_rng(spec.seed, stream);
            let scale = (t_end / n as f64).sqrt();
            let mut values = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            values.push(acc);
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += scale * z;
                values.push(acc);
            }
            (values, PathOrigin::Brownian)
        }
        PathKind::Linear { slope } => {
            ((0..=n).map(|k| slope * grid(k)).collect(), PathOrigin::Linear { slope: *slope })
        }
        PathKind::Triangle { peak_time, peak_value } => {
            let (tp, vp) = (*peak_time, *peak_value);
            if !(tp > 0.0 && tp < t_end) {
                return Err(Error::parameter("peak_time", "must lie strictly inside (0, T)"));
            }
            let values = (0..=n)
                .map(|k| {
                    let t = grid(k);
                    if t <= tp {
                        vp * t / tp
                    } else {
                        vp * (t_end - t) / (t_end - tp)
                    }
                })
                .collect();
            (values, PathOrigin::Triangle { peak_time: tp, peak_value: vp })
        }
        PathKind::Constant { value } => {
            (vec![*value; n + 1], PathOrigin::Constant { value: *value })
        }
        PathKind::Csv { file } => {
            let (path, _) = ingest_csv(file, Some(n_max))?;
            return Ok(path);
        }
    };
    SampledPath::with_origin(t_end, n_max, values, origin)
}

/// Warns when an fBM experiment uses a Hurst index other than `1/p`.
pub fn check_hurst_for_order(hurst: f64, p: u32) {
    if (hurst - 1.0 / p as f64).abs() > 1e-12 {
        log::warn!("fbm hurst {hurst} differs from 1/p = {} for p = {p}", 1.0 / p as f64);
    }
}

/// Prefix minimum and maximum of the samples.
pub fn running_extrema(path: &SampledPath) -> (Vec<f64>, Vec<f64>) {
    let mut lo = Vec::with_capacity(path.len());
    let mut hi = Vec::with_capacity(path.len());
    let (mut m, mut big_m) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in path.values() {
        m = m.min(v);
        big_m = big_m.max(v);
        lo.push(m);
        hi.push(big_m);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_path_is_flat() {
        let p = generate(&PathSpec::new(PathKind::Constant { value: 2.0 }, 3)).unwrap();
        assert_eq!(p.values(), &[2.0; 9]);
        let (lo, hi) = running_extrema(&p);
        assert!(lo.iter().chain(&hi).all(|&v| v == 2.0));
    }

    #[test]
    fn linear_path_samples_identity() {
        let p = generate(&PathSpec::new(PathKind::Linear { slope: 1.0 }, 2)).unwrap();
        assert_eq!(p.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let (lo, hi) = running_extrema(&p);
        assert!(lo.iter().all(|&v| v == 0.0));
        assert_eq!(hi, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn triangle_maximum_saturates_after_peak() {
        let spec = PathSpec::new(PathKind::Triangle { peak_time: 0.5, peak_value: 1.0 }, 4);
        let p = generate(&spec).unwrap();
        let (_, hi) = running_extrema(&p);
        for (j, &m) in hi.iter().enumerate() {
            if j >= 8 {
                assert_eq!(m, 1.0);
            } else {
                assert!(m < 1.0);
            }
        }
    }

    #[test]
    fn generation_is_reproducible_and_seed_sensitive() {
        let spec = PathSpec::new(PathKind::Fbm { hurst: 0.3 }, 8).seed(11);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_ne!(generate(&spec).unwrap(), generate(&spec.clone().seed(12)).unwrap());
        assert_ne!(generate_stream(&spec, 0).unwrap(), generate_stream(&spec, 1).unwrap());
    }

    #[test]
    fn rejects_bad_triangle_and_resolution() {
        let spec = PathSpec::new(PathKind::Triangle { peak_time: 1.0, peak_value: 1.0 }, 3);
        assert!(generate(&spec).is_err());
        assert!(generate(&PathSpec::new(PathKind::Bm, 0)).is_err());
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        let err = SampledPath::new(1.0, 1, vec![0.0, f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
    }
}
