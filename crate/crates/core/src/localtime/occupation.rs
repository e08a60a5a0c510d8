//! Histogram estimators: occupation-density local time, occupation time, and the
//! time-weighted variant for fractional Brownian motion.

use super::SpaceGrid;
use crate::error::{check_order, Error, Result};
use crate::partitions::normalize_checkpoints;
use crate::paths::SampledPath;
use crate::stats::gaussian_abs_moment;

/// Cells with less than this fraction of the horizon in occupation time are left out of
/// the unweighted Berman average.
pub const BERMAN_MIN_OCCUPATION: f64 = 0.01;

/// Histogram density per checkpoint: `values[c][i]` on cell `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationLocalTime {
    /// Variation order for `d[S]^p / p` densities; `None` for time densities.
    pub order: Option<u32>,
    pub grid: SpaceGrid,
    pub checkpoints: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl OccupationLocalTime {
    /// `width * sum_i values[c][i]`.
    pub fn total_mass(&self, checkpoint: usize) -> f64 {
        self.grid.width() * self.values[checkpoint].iter().sum::<f64>()
    }
}

/// Bins `weight(j)` by the cell holding `S(t_j)` over grid steps `j` with `t_j <= t`.
fn histogram(
    path: &SampledPath,
    grid: &SpaceGrid,
    checkpoints: &[usize],
    scale: f64,
    weight: impl Fn(usize) -> f64,
) -> Result<Vec<Vec<f64>>> {
    let v = path.values();
    let mut bins = vec![0.0; grid.cells()];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for (j, &value) in v.iter().enumerate().take(path.last_index()) {
        while next < checkpoints.len() && checkpoints[next] < j {
            out.push(bins.iter().map(|m| m / scale).collect());
            next += 1;
        }
        if next == checkpoints.len() {
            break;
        }
        let cell = grid.cell_of(value).ok_or_else(|| {
            let (min, max) = path.range();
            Error::Coverage { lo: grid.lo(), hi: grid.hi(), min, max }
        })?;
        bins[cell] += weight(j);
    }
    while out.len() < checkpoints.len() {
        out.push(bins.iter().map(|m| m / scale).collect());
    }
    Ok(out)
}

/// Density of `d[S]^p / p` at the finest grid: `|dS|^p` is binned by the left value and
/// divided by `p * width`.
pub fn occupation_density_local_time(
    path: &SampledPath,
    p: u32,
    grid: &SpaceGrid,
    checkpoints: &[usize],
) -> Result<OccupationLocalTime> {
    check_order(p)?;
    let checkpoints = normalize_checkpoints(path, checkpoints)?;
    let v = path.values();
    let scale = p as f64 * grid.width();
    let values =
        histogram(path, grid, &checkpoints, scale, |j| (v[j + 1] - v[j]).abs().powi(p as i32))?;
    Ok(OccupationLocalTime { order: Some(p), grid: *grid, checkpoints, values })
}

/// Time spent per cell divided by the cell width.
pub fn occupation_time_density(
    path: &SampledPath,
    grid: &SpaceGrid,
    checkpoints: &[usize],
) -> Result<OccupationLocalTime> {
    let checkpoints = normalize_checkpoints(path, checkpoints)?;
    let dt = path.step();
    let values = histogram(path, grid, &checkpoints, grid.width(), |_| dt)?;
    Ok(OccupationLocalTime { order: None, grid: *grid, checkpoints, values })
}

/// Occupation density of the time measure `2H s^(2H-1) ds`. Each grid step carries its
/// exact weight `t_{j+1}^(2H) - t_j^(2H)`, so the total mass telescopes to `T^(2H)`.
pub fn weighted_occupation_local_time(
    path: &SampledPath,
    hurst: f64,
    grid: &SpaceGrid,
    checkpoints: &[usize],
) -> Result<OccupationLocalTime> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::parameter("hurst", format!("must lie in (0, 1), got {hurst}")));
    }
    let checkpoints = normalize_checkpoints(path, checkpoints)?;
    let h2 = 2.0 * hurst;
    let values = histogram(path, grid, &checkpoints, grid.width(), |j| {
        path.time(j + 1).powf(h2) - path.time(j).powf(h2)
    })?;
    Ok(OccupationLocalTime { order: None, grid: *grid, checkpoints, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BermanReport {
    pub p: u32,
    /// `(p-1)!! / p`.
    pub expected: f64,
    /// Ratio of total masses; the occupation-time-weighted spatial average of the ratio.
    pub weighted_ratio: f64,
    /// Plain average of the per-cell ratio over sufficiently occupied cells.
    pub mean_ratio: f64,
    pub occupied_cells: usize,
    pub per_cell: Vec<Option<f64>>,
}

/// Compares the occupation-density local time with the occupation-time density on an
/// fBM path with `H = 1/p`; their ratio should approach `(p-1)!!/p`.
pub fn berman_ratio_check(path: &SampledPath, p: u32, grid: &SpaceGrid) -> Result<BermanReport> {
    check_order(p)?;
    match path.origin().hurst() {
        Some(h) if (h - 1.0 / p as f64).abs() < 1e-12 => {}
        _ => {
            return Err(Error::Precondition(format!(
                "the Berman ratio needs an fBM path with H = 1/{p}"
            )))
        }
    }
    let end = [path.last_index()];
    let lt = occupation_density_local_time(path, p, grid, &end)?;
    let occ = occupation_time_density(path, grid, &end)?;
    let min_density = BERMAN_MIN_OCCUPATION * path.horizon() / grid.width();
    let per_cell: Vec<Option<f64>> = lt.values[0]
        .iter()
        .zip(&occ.values[0])
        .map(|(&l, &o)| (o >= min_density && o > 0.0).then(|| l / o))
        .collect();
    let used: Vec<f64> = per_cell.iter().flatten().copied().collect();
    let mean_ratio =
        if used.is_empty() { f64::NAN } else { used.iter().sum::<f64>() / used.len() as f64 };
    Ok(BermanReport {
        p,
        expected: gaussian_abs_moment(p) / p as f64,
        weighted_ratio: lt.total_mass(0) / occ.total_mass(0),
        mean_ratio,
        occupied_cells: used.len(),
        per_cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{generate, PathKind, PathSpec};

    #[test]
    fn mass_identity() {
        let p = generate(&PathSpec::new(PathKind::Fbm { hurst: 0.25 }, 10).seed(5)).unwrap();
        let g = SpaceGrid::covering(&p, 40).unwrap();
        let cps = [0, 333, 1024];
        let lt = occupation_density_local_time(&p, 4, &g, &cps).unwrap();
        let v = p.values();
        for (c, &t) in cps.iter().enumerate() {
            let total: f64 = (0..=t.min(1023)).map(|j| (v[j + 1] - v[j]).powi(4)).sum();
            let mass = 4.0 * lt.total_mass(c);
            assert!((mass - total).abs() <= total * 2f64.powi(-40));
        }
    }

    #[test]
    fn identity_path_density_is_small() {
        let p = generate(&PathSpec::new(PathKind::Linear { slope: 1.0 }, 12)).unwrap();
        let g = SpaceGrid::covering(&p, 20).unwrap();
        let lt = occupation_density_local_time(&p, 2, &g, &[p.last_index()]).unwrap();
        let bound = 2f64.powi(-12) / (2.0 * g.width());
        assert!(lt.values[0].iter().all(|&v| v <= bound * (1.0 + 1e-12)));
    }

    #[test]
    fn weighted_time_masses() {
        let p =
            generate(&PathSpec::new(PathKind::Constant { value: 0.3 }, 6).horizon(2.0)).unwrap();
        let g = SpaceGrid::new(0.0, 1.0, 10).unwrap();
        let end = [p.last_index()];
        let w = weighted_occupation_local_time(&p, 0.25, &g, &end).unwrap();
        assert!((w.total_mass(0) - 2f64.sqrt()).abs() < 1e-12);
        let cell = g.cell_of(0.3).unwrap();
        assert!(w.values[0].iter().enumerate().all(|(i, &v)| (i == cell) == (v > 0.0)));
        let half = weighted_occupation_local_time(&p, 0.5, &g, &end).unwrap();
        assert!((half.total_mass(0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn half_weight_is_plain_occupation_time() {
        let p = generate(&PathSpec::new(PathKind::Bm, 10).seed(1)).unwrap();
        let g = SpaceGrid::covering(&p, 30).unwrap();
        let a = weighted_occupation_local_time(&p, 0.5, &g, &[512, 1024]).unwrap();
        let b = occupation_time_density(&p, &g, &[512, 1024]).unwrap();
        for (ra, rb) in a.values.iter().zip(&b.values) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn berman_needs_matching_fbm() {
        let lin = generate(&PathSpec::new(PathKind::Linear { slope: 1.0 }, 6)).unwrap();
        let g = SpaceGrid::covering(&lin, 10).unwrap();
        assert!(matches!(berman_ratio_check(&lin, 2, &g), Err(Error::Precondition(_))));
        let fbm = generate(&PathSpec::new(PathKind::Fbm { hurst: 0.25 }, 8)).unwrap();
        let g = SpaceGrid::covering(&fbm, 10).unwrap();
        assert!(berman_ratio_check(&fbm, 2, &g).is_err());
        let r = berman_ratio_check(&fbm, 4, &g).unwrap();
        assert_eq!(r.expected, 0.75);
    }
}
