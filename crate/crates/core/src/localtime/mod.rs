//! Discrete local times of order p, occupation densities, and their diagnostics.
//!
//! The discrete local time of level `n` at `x` sums `|S(t_{j+1}) - x|^(p-1)` over cells
//! whose half-open value range `(min, max]` contains `x`.

mod diagnostics;
mod occupation;

use std::io::Write;

use rayon::prelude::*;

use crate::error::{check_order, Error, Result};
use crate::partitions::{accumulate, cells_through, normalize_checkpoints, PartitionHierarchy};
use crate::paths::SampledPath;

pub use diagnostics::{
    proper_order_report, uniform_convergence_report, OrderRow, OrderTrend, ProperOrderReport,
    UniformConvergenceReport, WeakSeries, PROPER_ORDER_WINDOW,
};
pub use occupation::{
    berman_ratio_check, occupation_density_local_time, occupation_time_density,
    weighted_occupation_local_time, BermanReport, OccupationLocalTime, BERMAN_MIN_OCCUPATION,
};

/// Uniform spatial grid; local times are evaluated at cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    lo: f64,
    hi: f64,
    cells: usize,
}

impl SpaceGrid {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::parameter("grid", format!("need finite lo < hi, got [{lo}, {hi}]")));
        }
        if cells == 0 {
            return Err(Error::parameter("cells", "must be positive"));
        }
        Ok(SpaceGrid { lo, hi, cells })
    }

    /// `cells` cells spanning the path range plus one cell on each side.
    pub fn covering(path: &SampledPath, cells: usize) -> Result<Self> {
        if cells < 3 {
            return Err(Error::parameter("cells", "a covering grid needs at least 3 cells"));
        }
        let (m, big_m) = path.range();
        let span = if big_m > m { big_m - m } else { 1.0 };
        let w = span / (cells - 2) as f64;
        let mid = 0.5 * (m + big_m);
        SpaceGrid::new(mid - 0.5 * span - w, mid + 0.5 * span + w, cells)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == self.cells {
            self.hi
        } else {
            self.lo + i as f64 * self.width()
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Cell `[edge(i), edge(i+1))` holding `x`; `hi` itself belongs to the last cell.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut i = (((x - self.lo) / self.width()).floor() as usize).min(self.cells - 1);
        while i > 0 && x < self.edge(i) {
            i -= 1;
        }
        while i + 1 < self.cells && x >= self.edge(i + 1) {
            i += 1;
        }
        Some(i)
    }

    /// Indices of the centers lying in `(lo, hi]`.
    fn centers_in(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let w = self.width();
        let guess =
            |x: f64| ((x - self.lo) / w - 0.5).ceil().clamp(0.0, self.cells as f64) as usize;
        let mut first = guess(lo);
        while first > 0 && self.center(first - 1) > lo {
            first -= 1;
        }
        while first < self.cells && self.center(first) <= lo {
            first += 1;
        }
        let mut end = guess(hi).max(first);
        while end > first && self.center(end - 1) > hi {
            end -= 1;
        }
        while end < self.cells && self.center(end) <= hi {
            end += 1;
        }
        first..end
    }

    pub(crate) fn check_covers(&self, path: &SampledPath) -> Result<()> {
        let (min, max) = path.range();
        if self.lo > min || self.hi < max {
            return Err(Error::Coverage { lo: self.lo, hi: self.hi, min, max });
        }
        Ok(())
    }
}

/// Contribution of one cell with endpoint values `a -> b` to the local time at `x`.
#[inline]
pub fn cell_local_time(a: f64, b: f64, x: f64, p: u32) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if lo < x && x <= hi {
        (b - x).abs().powi(p as i32 - 1)
    } else {
        0.0
    }
}

/// Discrete local time of one level at a single level `x`, up to grid index `t`.
pub fn local_time_at(path: &SampledPath, level: &[usize], p: u32, x: f64, t: usize) -> f64 {
    let v = path.values();
    let cells = cells_through(level, t);
    level[..=cells].windows(2).map(|w| cell_local_time(v[w[0]], v[w[1]], x, p)).sum()
}

/// Per-cell contributions to the local time at `x` (one entry per cell of the level).
pub fn local_time_increments(path: &SampledPath, level: &[usize], p: u32, x: f64) -> Vec<f64> {
    let v = path.values();
    level.windows(2).map(|w| cell_local_time(v[w[0]], v[w[1]], x, p)).collect()
}

/// Right limit `lim_{y -> x+}` of the discrete local time: cells whose range `[min, max)`
/// contains `x`. For a non-negative path at 0 this is the only non-trivial reading.
pub fn local_time_right_limit(
    path: &SampledPath,
    level: &[usize],
    p: u32,
    x: f64,
    t: usize,
) -> f64 {
    let v = path.values();
    let cells = cells_through(level, t);
    level[..=cells]
        .windows(2)
        .map(|w| {
            let (a, b) = (v[w[0]], v[w[1]]);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if lo <= x && x < hi {
                (b - x).abs().powi(p as i32 - 1)
            } else {
                0.0
            }
        })
        .sum()
}

/// Local-time mass at `a` charged while the path sat more than `band` below and above `a`
/// at the left endpoint of a cell. Both vanish whenever `band >= osc(S, level)`.
pub fn off_level_mass(
    path: &SampledPath,
    level: &[usize],
    p: u32,
    a: f64,
    band: f64,
) -> (f64, f64) {
    let v = path.values();
    let incs = local_time_increments(path, level, p, a);
    let mut below = 0.0;
    let mut above = 0.0;
    for (w, inc) in level.windows(2).zip(incs) {
        let s = v[w[0]];
        if s < a - band {
            below += inc;
        } else if s > a + band {
            above += inc;
        }
    }
    (below, above)
}

/// Discrete local times `per_level[n][c][x]` on a space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeField {
    pub p: u32,
    pub grid: SpaceGrid,
    pub checkpoints: Vec<usize>,
    pub times: Vec<f64>,
    pub per_level: Vec<Vec<Vec<f64>>>,
}

/// Bytes needed for a `levels x checkpoints x cells` tensor of f64.
pub fn field_bytes(levels: usize, checkpoints: usize, cells: usize) -> u128 {
    levels as u128 * checkpoints as u128 * cells as u128 * 8
}

pub fn discrete_local_time(
    path: &SampledPath,
    hierarchy: &PartitionHierarchy,
    p: u32,
    grid: &SpaceGrid,
    checkpoints: &[usize],
) -> Result<LocalTimeField> {
    check_order(p)?;
    grid.check_covers(path)?;
    let checkpoints = normalize_checkpoints(path, checkpoints)?;
    let v = path.values();
    let per_level = hierarchy
        .levels()
        .par_iter()
        .map(|level| {
            let mut acc = vec![0.0; grid.cells()];
            let mut out = Vec::with_capacity(checkpoints.len());
            let mut next = 0;
            for w in level.windows(2) {
                while next < checkpoints.len() && checkpoints[next] < w[0] {
                    out.push(acc.clone());
                    next += 1;
                }
                if next == checkpoints.len() {
                    break;
                }
                let (a, b) = (v[w[0]], v[w[1]]);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                if lo < hi {
                    for i in grid.centers_in(lo, hi) {
                        acc[i] += (b - grid.center(i)).abs().powi(p as i32 - 1);
                    }
                }
            }
            out.resize(checkpoints.len(), acc);
            out
        })
        .collect();
    let times = checkpoints.iter().map(|&c| path.time(c)).collect();
    Ok(LocalTimeField { p, grid: *grid, checkpoints, times, per_level })
}

/// CSV with columns `level,t,x,value`.
pub fn write_local_time_csv<W: Write>(field: &LocalTimeField, out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "level,t,x,value")?;
    let centers = field.grid.centers();
    for (n, rows) in field.per_level.iter().enumerate() {
        for (t, row) in field.times.iter().zip(rows) {
            for (x, val) in centers.iter().zip(row) {
                writeln!(w, "{n},{t},{x},{val}")?;
            }
        }
    }
    w.flush()
}

/// A local-time profile in space at a fixed time, on a grid, with pointwise evaluation.
pub trait SpatialSlice {
    fn grid(&self) -> &SpaceGrid;
    /// Values at the grid centers.
    fn grid_values(&self) -> &[f64];
    /// Value at an arbitrary level inside the grid.
    fn value_at(&self, x: f64) -> f64;
}

/// Discrete local time of one level at one checkpoint. Off-center values are recomputed
/// exactly from the path.
#[derive(Debug, Clone)]
pub struct DiscreteSlice<'a> {
    path: &'a SampledPath,
    level: &'a [usize],
    p: u32,
    t: usize,
    grid: SpaceGrid,
    values: Vec<f64>,
}

impl<'a> DiscreteSlice<'a> {
    pub fn new(
        path: &'a SampledPath,
        level: &'a [usize],
        p: u32,
        t: usize,
        grid: SpaceGrid,
    ) -> Self {
        let values =
            grid.centers().into_iter().map(|x| local_time_at(path, level, p, x, t)).collect();
        DiscreteSlice { path, level, p, t, grid, values }
    }
}

impl SpatialSlice for DiscreteSlice<'_> {
    fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    fn grid_values(&self) -> &[f64] {
        &self.values
    }

    fn value_at(&self, x: f64) -> f64 {
        local_time_at(self.path, self.level, self.p, x, self.t)
    }
}

/// A histogram density: constant on each cell.
#[derive(Debug, Clone)]
pub struct HistogramSlice {
    pub grid: SpaceGrid,
    pub values: Vec<f64>,
}

impl SpatialSlice for HistogramSlice {
    fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    fn grid_values(&self) -> &[f64] {
        &self.values
    }

    fn value_at(&self, x: f64) -> f64 {
        self.grid.cell_of(x).map_or(0.0, |i| self.values[i])
    }
}

/// Per-level discrete local time at `x` for every checkpoint.
pub fn local_time_curves(
    path: &SampledPath,
    hierarchy: &PartitionHierarchy,
    p: u32,
    x: f64,
    checkpoints: &[usize],
) -> Vec<Vec<f64>> {
    let v = path.values();
    hierarchy
        .levels()
        .iter()
        .map(|level| accumulate(level, checkpoints, |l, r| cell_local_time(v[l], v[r], x, p)))
        .collect()
}
