//! Level-to-level diagnostics for discrete local times.

use super::{local_time_at, LocalTimeField, SpaceGrid};
use crate::error::{check_order, Result};
use crate::partitions::PartitionHierarchy;
use crate::paths::SampledPath;

/// Number of levels spanned when classifying growth in [`proper_order_report`].
pub const PROPER_ORDER_WINDOW: usize = 8;

/// Growth factor across the window at or above which a candidate order is diverging.
const DIVERGING: f64 = 10.0;
/// Growth factor at or below which a candidate order is vanishing.
const VANISHING: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeakSeries {
    pub name: String,
    /// `integral L_n(T, x) g(x) dx` per level.
    pub integrals: Vec<f64>,
    /// Absolute differences between consecutive levels.
    pub differences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformConvergenceReport {
    /// `sup_{t,x} |L_{n+1} - L_n|` for consecutive levels.
    pub sup_differences: Vec<f64>,
    pub library: String,
    pub weak: Vec<WeakSeries>,
}

/// Gaussian bumps at the quartiles of the grid with width a tenth of its span, plus the
/// constant function; integrals use the midpoint rule on the grid cells.
/// Named test functions of the weak-convergence diagnostic.
type WeakLibrary = Vec<(String, Box<dyn Fn(f64) -> f64>)>;

fn weak_library(grid: &SpaceGrid) -> WeakLibrary {
    let span = grid.hi() - grid.lo();
    let sigma = 0.1 * span;
    let mut lib: WeakLibrary = vec![("constant".to_string(), Box::new(|_| 1.0))];
    for q in [0.25, 0.5, 0.75] {
        let c = grid.lo() + q * span;
        lib.push((
            format!("gauss(center={c},sigma={sigma})"),
            Box::new(move |x: f64| (-0.5 * ((x - c) / sigma).powi(2)).exp()),
        ));
    }
    lib
}

pub fn uniform_convergence_report(field: &LocalTimeField) -> UniformConvergenceReport {
    let sup_differences = field
        .per_level
        .windows(2)
        .map(|w| {
            w[0].iter()
                .flatten()
                .zip(w[1].iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let centers = field.grid.centers();
    let width = field.grid.width();
    let weak = weak_library(&field.grid)
        .into_iter()
        .map(|(name, g)| {
            let integrals: Vec<f64> = field
                .per_level
                .iter()
                .map(|rows| {
                    let last = rows.last().map(Vec::as_slice).unwrap_or(&[]);
                    width * centers.iter().zip(last).map(|(&x, &l)| l * g(x)).sum::<f64>()
                })
                .collect();
            let differences = integrals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            WeakSeries { name, integrals, differences }
        })
        .collect();
    UniformConvergenceReport {
        sup_differences,
        library: "constant and three Gaussian bumps at the grid quartiles, sigma = span/10, \
                  integrated at t = last checkpoint by the cell midpoint rule"
            .to_string(),
        weak,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderTrend {
    Diverging,
    Vanishing,
    Stable,
    /// Fewer than two levels.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderRow {
    pub order: u32,
    /// `sup_x L_n(T, x)` over the grid centers, per level.
    pub sup_by_level: Vec<f64>,
    /// Finest-level value over the value `window` levels earlier.
    pub growth: Option<f64>,
    pub trend: OrderTrend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProperOrderReport {
    pub window: usize,
    pub rows: Vec<OrderRow>,
}

/// Classifies candidate orders by how `sup_x L_n(T, x)` evolves over the trailing
/// [`PROPER_ORDER_WINDOW`] levels: orders below the proper one blow up, orders above
/// it vanish.
pub fn proper_order_report(
    path: &SampledPath,
    hierarchy: &PartitionHierarchy,
    candidates: &[u32],
    grid: &SpaceGrid,
) -> Result<ProperOrderReport> {
    for &r in candidates {
        check_order(r)?;
    }
    grid.check_covers(path)?;
    let t = path.last_index();
    let centers = grid.centers();
    let finest = hierarchy.finest_level();
    let window = PROPER_ORDER_WINDOW.min(finest);
    let rows = candidates
        .iter()
        .map(|&r| {
            let sup_by_level: Vec<f64> = hierarchy
                .levels()
                .iter()
                .map(|level| {
                    centers.iter().map(|&x| local_time_at(path, level, r, x, t)).fold(0.0, f64::max)
                })
                .collect();
            let (growth, trend) = if window == 0 {
                (None, OrderTrend::Undetermined)
            } else {
                let (early, late) = (sup_by_level[finest - window], sup_by_level[finest]);
                if early == 0.0 && late == 0.0 {
                    (None, OrderTrend::Stable)
                } else {
                    let g = late / early;
                    let trend = if g >= DIVERGING {
                        OrderTrend::Diverging
                    } else if g <= VANISHING {
                        OrderTrend::Vanishing
                    } else {
                        OrderTrend::Stable
                    };
                    (Some(g), trend)
                }
            };
            OrderRow { order: r, sup_by_level, growth, trend }
        })
        .collect();
    Ok(ProperOrderReport { window, rows })
}
