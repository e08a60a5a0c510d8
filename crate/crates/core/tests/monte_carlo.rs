//! Statistical limits over 20 seeds: medians of per-path statistics against closed forms.

use pathwise::integrate::{modified_follmer_integral, Exp, DEFAULT_SCHEDULE};
use pathwise::localtime::{
    occupation_density_local_time, proper_order_report, uniform_convergence_report, OrderTrend,
};
use pathwise::paths::generate_stream;
use pathwise::ranks::simplified_cross_term;
use pathwise::stats::{gaussian_abs_moment, median};
use pathwise::tanaka::{
    identity_suite, ito_residual, scaling_check, ITO_TOLERANCE, LIMIT_TOLERANCE,
};
use pathwise::variation::variation_convergence_report;
use pathwise::{
    build_rank_system, discrete_local_time, dyadic_hierarchy, pth_variation, tanaka_class,
    IdentityReport, PathKind, PathSpec, SampledPath, SpaceGrid, TestFunction,
};
use rayon::prelude::*;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=20;

fn fbm(hurst: f64, n_max: u32, seed: u64, stream: u64) -> SampledPath {
    generate_stream(&PathSpec::new(PathKind::Fbm { hurst }, n_max).seed(seed), stream).unwrap()
}

/// Median over the seeds of a per-seed statistic.
fn median_over_seeds(stat: impl Fn(u64) -> f64 + Sync + Send) -> f64 {
    let values: Vec<f64> = SEEDS.into_par_iter().map(stat).collect();
    median(&values)
}

fn finest(report: &IdentityReport) -> f64 {
    report.finest().unwrap().residual
}

#[test]
fn fourth_variation_of_rough_fbm() {
    let values: Vec<f64> = SEEDS
        .into_par_iter()
        .map(|seed| {
            let s = fbm(0.25, 14, seed, 0);
            let h = dyadic_hierarchy(&s, 14).unwrap();
            *pth_variation(&s, &h, 4, &[s.last_index()]).unwrap().per_level[14].last().unwrap()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let expected = gaussian_abs_moment(4);
    assert!((mean - expected).abs() <= 0.1 * expected, "{mean}");
}

#[test]
fn quadratic_variation_settles() {
    let sup = median_over_seeds(|seed| {
        let s = fbm(0.5, 12, seed, 0);
        let h = dyadic_hierarchy(&s, 12).unwrap();
        let cps: Vec<usize> = (1..=16).map(|k| k * s.last_index() / 16).collect();
        let curve = pth_variation(&s, &h, 2, &cps).unwrap();
        *variation_convergence_report(&curve).unwrap().sup_differences.last().unwrap()
    });
    assert!(sup < 0.1, "{sup}");
}

#[test]
fn occupation_density_has_mass_one_half() {
    let mass = median_over_seeds(|seed| {
        let s = fbm(0.5, 14, seed, 0);
        let grid = SpaceGrid::covering(&s, 200).unwrap();
        occupation_density_local_time(&s, 2, &grid, &[s.last_index()]).unwrap().total_mass(0)
    });
    assert!((mass - 0.5).abs() <= 0.05, "{mass}");
}

#[test]
fn weak_differences_shrink() {
    // median over seeds of each successive difference of the constant test integral
    let per_seed: Vec<Vec<f64>> = SEEDS
        .into_par_iter()
        .map(|seed| {
            let s = fbm(0.5, 12, seed, 0);
            let h = dyadic_hierarchy(&s, 12).unwrap();
            let grid = SpaceGrid::covering(&s, 100).unwrap();
            let field = discrete_local_time(&s, &h, 2, &grid, &[s.last_index()]).unwrap();
            uniform_convergence_report(&field).weak[0].differences.clone()
        })
        .collect();
    let medians: Vec<f64> = (0..per_seed[0].len())
        .map(|i| median(&per_seed.iter().map(|d| d[i]).collect::<Vec<_>>()))
        .collect();
    let x: Vec<f64> = (0..medians.len()).map(|i| i as f64).collect();
    let y: Vec<f64> = medians.iter().map(|m| m.log2()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / x.len() as f64, y.iter().sum::<f64>() / y.len() as f64);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    // single steps are noisy; the trend over the levels is not
    assert!(slope < 0.0, "{medians:?}");
    assert!(medians[medians.len() - 1] < 0.1 * medians[0], "{medians:?}");
}

#[test]
fn proper_order_of_brownian_local_time() {
    let trends: Vec<(OrderTrend, OrderTrend)> = SEEDS
        .into_par_iter()
        .map(|seed| {
            let s = fbm(0.5, 12, seed, 0);
            let h = dyadic_hierarchy(&s, 12).unwrap();
            let grid = SpaceGrid::covering(&s, 50).unwrap();
            let report = proper_order_report(&s, &h, &[2, 4], &grid).unwrap();
            (report.rows[0].trend, report.rows[1].trend)
        })
        .collect();
    let stable = trends.iter().filter(|t| t.0 == OrderTrend::Stable).count();
    let vanishing = trends.iter().filter(|t| t.1 == OrderTrend::Vanishing).count();
    assert!(stable > SEEDS.count() / 2, "{trends:?}");
    assert!(vanishing > SEEDS.count() / 2, "{trends:?}");
}

#[test]
fn mollified_follmer_error_falls_with_m() {
    let per_seed: Vec<Vec<f64>> = SEEDS
        .into_par_iter()
        .map(|seed| {
            let s = fbm(0.5, 10, seed, 0);
            let h = dyadic_hierarchy(&s, 10).unwrap();
            let grid = SpaceGrid::covering(&s, 200).unwrap();
            let f = tanaka_class("abs_pow", &[0.0], 2).unwrap();
            let report =
                modified_follmer_integral(&s, &h, 2, &f, s.last_index(), &DEFAULT_SCHEDULE, &grid)
                    .unwrap();
            report.finest_errors().into_iter().map(|(_, e)| e).collect()
        })
        .collect();
    let medians: Vec<f64> = (0..DEFAULT_SCHEDULE.len())
        .map(|i| median(&per_seed.iter().map(|e| e[i]).collect::<Vec<_>>()))
        .collect();
    assert!(medians.last().unwrap() < medians.first().unwrap(), "{medians:?}");
}

#[test]
fn ito_formula_for_the_fourth_power() {
    let x4 = TestFunction::polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0], "x^4");
    let residual = median_over_seeds(|seed| {
        let s = fbm(0.5, 14, seed, 0);
        let h = dyadic_hierarchy(&s, 14).unwrap();
        finest(&ito_residual(&s, &h, 2, &x4, s.last_index()).unwrap())
    });
    assert!(residual < ITO_TOLERANCE, "{residual}");
}

#[test]
fn nonnegative_zero_set_identity_on_reflected_fbm() {
    let residual = median_over_seeds(|seed| {
        let x = fbm(0.5, 14, seed, 0).map(f64::abs).unwrap();
        let y = fbm(0.5, 14, seed, 1);
        let h = dyadic_hierarchy(&x, 14).unwrap();
        let suite = identity_suite(&x, &y, &h, 2).unwrap();
        assert_eq!(suite[1].name, "nonneg_zero_set/band");
        finest(&suite[1])
    });
    assert!(residual <= LIMIT_TOLERANCE, "{residual}");
}

/// With `Y = -X` the maximum is `|X|`, which touches 0 only from above. Half-open cells
/// never count such touches, so the left side is nearly 0 while the right side is
/// `2 L^X(0)`: the per-level gaps are reported, and sit near 1.
#[test]
fn max_plus_min_of_a_path_and_its_reflection() {
    let x = fbm(0.5, 14, 1, 0);
    let y = x.map(|v| -v).unwrap();
    let h = dyadic_hierarchy(&x, 14).unwrap();
    let suite = identity_suite(&x, &y, &h, 2).unwrap();
    let report = suite.last().unwrap();
    assert_eq!(report.rows.len(), 15);
    for row in &report.rows {
        assert!(row.residual.is_finite() && row.lhs <= row.rhs, "{row:?}");
    }
    assert!(finest(report) > 0.9, "{:?}", report.finest());
}

#[test]
fn exponential_scaling_at_zero() {
    let residual = median_over_seeds(|seed| {
        let s = fbm(0.5, 14, seed, 0);
        let h = dyadic_hierarchy(&s, 14).unwrap();
        finest(&scaling_check(&s, &Exp, 0.0, &h, 2).unwrap())
    });
    assert!(residual <= 0.15, "{residual}");
}

/// The per-level gap between the simplified and full cross terms for `p = 4`.
///
/// Rank switches occur in about `N^(1-H)` cells, and on each of them the discarded terms
/// `v^l dX^q` with `l + q < p` are of order one in total, so the gap grows with the level
/// instead of vanishing.
#[test]
#[ignore = "the median gap grows with the level (2.8, 3.7, 4.2 at levels 12 to 14), so it does not decrease at the two finest levels"]
fn simplified_cross_term_gap_decreases() {
    let f = tanaka_class("x_pow_pm1", &[], 4).unwrap();
    let per_seed: Vec<Vec<f64>> = SEEDS
        .into_par_iter()
        .map(|seed| {
            let paths = [fbm(0.25, 14, seed, 0), fbm(0.25, 14, seed, 1)];
            let sys = build_rank_system(&paths).unwrap();
            let h = dyadic_hierarchy(&paths[0], 14).unwrap();
            let rows = simplified_cross_term(&sys, 1, &h, 4, &f, &[paths[0].last_index()]).unwrap();
            rows.iter().map(|r| r.gap).collect()
        })
        .collect();
    let medians: Vec<f64> =
        (0..=14).map(|n| median(&per_seed.iter().map(|g| g[n]).collect::<Vec<_>>())).collect();
    assert!(medians[14] < medians[13] && medians[13] < medians[12], "{medians:?}");
}
