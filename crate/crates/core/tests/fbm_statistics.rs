//! Monte Carlo checks of the fBM generators against the exact covariance
//! `R(s, t) = (s^2H + t^2H - |t - s|^2H) / 2`.

use pathwise::paths::{stream_rng, FbmMethod, FbmSampler};

const SEEDS: u64 = 10_000;

fn covariance(h: f64, s: f64, t: f64) -> f64 {
    0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
}

fn check(method: FbmMethod, hurst: f64) {
    let n_max = 5;
    let sampler = match method {
        FbmMethod::Circulant => FbmSampler::new(hurst, n_max, 2.0).unwrap(),
        FbmMethod::Cholesky => FbmSampler::cholesky(hurst, n_max, 2.0).unwrap(),
    };
    let pairs = [(8usize, 8usize), (8, 24), (16, 32), (3, 29)];
    let step = 2.0 / 32.0;
    let mut products = vec![Vec::with_capacity(SEEDS as usize); pairs.len()];
    let mut endpoints = Vec::with_capacity(SEEDS as usize);
    for seed in 0..SEEDS {
        let values = sampler.sample(&mut stream_rng(seed, 0));
        assert_eq!(values[0], 0.0);
        endpoints.push(values[32]);
        for (acc, &(i, j)) in products.iter_mut().zip(&pairs) {
            acc.push(values[i] * values[j]);
        }
    }
    let n = SEEDS as f64;
    let mean = endpoints.iter().sum::<f64>() / n;
    let var = endpoints.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() <= 4.0 * (var / n).sqrt(), "{method:?} H={hurst}: mean {mean}");
    for (acc, &(i, j)) in products.iter().zip(&pairs) {
        let m = acc.iter().sum::<f64>() / n;
        let v = acc.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let exact = covariance(hurst, i as f64 * step, j as f64 * step);
        let se = (v / n).sqrt();
        assert!(
            (m - exact).abs() <= 3.0 * se,
            "{method:?} H={hurst} ({i},{j}): {m} vs {exact} (se {se})"
        );
    }
}

#[test]
fn circulant_embedding_matches_the_covariance() {
    for h in [0.25, 0.5, 0.75] {
        check(FbmMethod::Circulant, h);
    }
}

#[test]
fn cholesky_matches_the_covariance() {
    for h in [0.25, 0.5, 0.75] {
        check(FbmMethod::Cholesky, h);
    }
}
