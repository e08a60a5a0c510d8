//! Change-of-variable, Tanaka–Meyer and local-time identities evaluated level by level.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_order, Error, Result};
use crate::integrate::{
    discrete_measure_pairing, follmer_terms, tanaka_meyer_terms, PathFunction, TanakaMeyerVariant,
    TestFunction,
};
use crate::localtime::{
    cell_local_time, local_time_at, local_time_right_limit, occupation_density_local_time,
    SpaceGrid,
};
use crate::partitions::{oscillation, sum_through, telescoping_end, PartitionHierarchy};
use crate::paths::SampledPath;
use crate::stats::factorial;

/// Relative gate for identities that hold exactly at every level.
pub const EXACT_THRESHOLD: f64 = 1e-9;
/// Relative gate at the finest level for identities that only hold in the limit.
pub const LIMIT_TOLERANCE: f64 = 0.1;
/// Relative gate for the scaling law with a non-affine map.
pub const SCALING_TOLERANCE: f64 = 0.15;
/// Absolute gate for the Itô residual at the finest level.
pub const ITO_TOLERANCE: f64 = 0.05;

/// Samples used to check strict monotonicity and to estimate Lipschitz constants.
const DENSE_SAMPLES: usize = 1025;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    ExactPerLevel,
    LimitOnly,
}

impl Exactness {
    /// Value of the `class` column.
    pub fn label(self) -> &'static str {
        match self {
            Exactness::ExactPerLevel => "exact",
            Exactness::LimitOnly => "limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityRow {
    pub level: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub exactness: Exactness,
    pub residual_kind: ResidualKind,
    pub threshold: f64,
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    fn new(
        name: impl Into<String>,
        exactness: Exactness,
        residual_kind: ResidualKind,
        threshold: f64,
        rows: Vec<IdentityRow>,
    ) -> Self {
        IdentityReport { name: name.into(), exactness, residual_kind, threshold, rows }
    }

    pub fn finest(&self) -> Option<&IdentityRow> {
        self.rows.last()
    }

    /// Largest residual over the levels; NaN if any residual is NaN.
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, |m, r| if r.is_nan() { r } else { m.max(r) })
    }

    /// Exact identities must meet the threshold at every level, limit identities at the
    /// finest level only.
    pub fn passed(&self) -> bool {
        match self.exactness {
            Exactness::ExactPerLevel => self.rows.iter().all(|r| r.residual <= self.threshold),
            Exactness::LimitOnly => self.finest().is_some_and(|r| r.residual <= self.threshold),
        }
    }
}

/// Both sides of a single-level identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub lhs: f64,
    pub rhs: f64,
    pub absolute: f64,
    /// `absolute` divided by the sum of the magnitudes of every summed term.
    pub relative: f64,
}

impl Residual {
    fn new(lhs: f64, rhs: f64, scale: f64) -> Self {
        let absolute = (lhs - rhs).abs();
        Residual { lhs, rhs, absolute, relative: ratio(absolute, scale) }
    }

    fn row(self, level: usize) -> IdentityRow {
        IdentityRow { level, lhs: self.lhs, rhs: self.rhs, residual: self.relative }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den.max(f64::MIN_POSITIVE)
    }
}

/// `|lhs - rhs| / max(|lhs|, |rhs|)`.
fn gap_row(level: usize, lhs: f64, rhs: f64) -> IdentityRow {
    let residual = ratio((lhs - rhs).abs(), lhs.abs().max(rhs.abs()));
    IdentityRow { level, lhs, rhs, residual }
}

/// `f(S_t) - f(S_0)` against the Föllmer sum plus `1/(p-1)!` times the pairing of the
/// discrete local time with `d f^(p-1)`. Holds exactly at every level; `S_t` is read at
/// the right end of the last counted cell.
pub fn finite_n_identity(
    path: &SampledPath,
    level: &[usize],
    p: u32,
    f: &TestFunction,
    t: usize,
) -> Result<Residual> {
    check_order(p)?;
    f.check_tanaka_class(p)?;
    let v = path.values();
    let end = telescoping_end(level, t);
    let (sum, sum_abs) = follmer_terms(path, level, p, f, t)?;
    let mu = f.stieltjes_measure(p as usize - 1);
    let (pairing, pairing_abs) = discrete_measure_pairing(path, level, p, t, &mu);
    let c = factorial(p - 1);
    let (f_end, f_start) = (f.eval_derivative(0, v[end]), f.eval_derivative(0, v[0]));
    let scale = sum_abs + pairing_abs / c + f_end.abs() + f_start.abs();
    Ok(Residual::new(f_end - f_start, sum + pairing / c, scale))
}

/// [`finite_n_identity`] on every level of a hierarchy.
pub fn finite_n_report(
    path: &SampledPath,
    hierarchy: &PartitionHierarchy,
    p: u32,
    f: &TestFunction,
    t: usize,
) -> Result<IdentityReport> {
    let rows = hierarchy
        .levels()
        .iter()
        .enumerate()
        .map(|(n, level)| finite_n_identity(path, level, p, f, t).map(|r| r.row(n)))
        .collect::<Result<_>>()?;
    Ok(IdentityReport::new(
        format!("finite_n/{}", f.label()),
        Exactness::ExactPerLevel,
        ResidualKind::Relative,
        EXACT_THRESHOLD,
        rows,
    ))
}

/// `((S_t - a)^+)^(p-1) - ((S_0 - a)^+)^(p-1)` minus the plus-variant Tanaka–Meyer sum,
/// against the discrete local time at `a`. Exact unless a left cell endpoint equals `a`.
pub fn tanaka_meyer_identity(
    path: &SampledPath,
    hierarchy: &PartitionHierarchy,
    p: u32,
    a: f64,
    t: usize,
) -> Result<IdentityReport> {
    check_order(p)?;
    let v = path.values();
    let e = p as i32 - 1;
    let g = |x: f64| (x - a).max(0.0).powi(e);
    let rows = hierarchy
        .levels()
        .iter()
        .enumerate()
        .map(|(n, level)| {
            let end = telescoping_end(level, t);
            let (sum, sum_abs) = tanaka_meyer_terms(path, level, p, a, TanakaMeyerVariant::Plus, t);
            let (g_end, g_start) = (g(v[end]), g(v[0]));
            let local = local_time_at(path, level, p, a, t);
            let scale = sum_abs + g_end + g_start + local;
            Residual::new(g_end - g_start - sum, local, scale).row(n)
        })
        .collect();
    Ok(IdentityReport::new(
        format!("tanaka_meyer/a={a}"),
        Exactness::ExactPerLevel,
        ResidualKind::Relative,
        EXACT_THRESHOLD,
        rows,
    ))
}

/// Absolute residual of the smooth change-of-variable formula with the `d[S]^p` term
/// discretized on the same level.
pub fn ito_residual(
    path: &SampledPath,
    hierarchy: &PartitionHierarchy,
    p: u32,
    f: &dyn PathFunction,
    t: usize,
) -> Result<IdentityReport> {
    check_order(p)?;
    let v = path.values();
    let c = factorial(p);
    let mut rows = Vec::with_capacity(hierarchy.len());
    for (n, level) in hierarchy.levels().iter().enumerate() {
        let (sum, _) = follmer_terms(path, level, p, f, t)?;
        let mut missing = false;
        let (bracket, _) = sum_through(level, t, |l, r| match f.derivative(p as usize, v[l]) {
            Some(d) => d / c * (v[r] - v[l]).abs().powi(p as i32),
            None => {
                missing = true;
                0.0
            }
        });
        if missing {
            return Err(Error::DerivativeUnavailable { order: p as usize });
        }
        let end = telescoping_end(level, t);
        let lhs = f.value(v[end]) - f.value(v[0]);
        let rhs = sum + bracket;
        rows.push(IdentityRow { level: n, lhs, rhs, residual: (lhs - rhs).abs() });
    }
    Ok(IdentityReport::new(
        "ito",
        Exactness::LimitOnly,
        ResidualKind::Absolute,
        ITO_TOLERANCE,
        rows,
    ))
}

/// Evaluates both sides of the zero-set and max/min identities for local times at 0 on
/// every level, at the horizon.
///
/// Indicators of `{X = 0}` are evaluated literally and on the band `|X| <= osc(X, level)`
/// (`osc` is the larger of the two paths' oscillations for pair identities). Only the
/// literal non-negative identity is exact per level; the rest are limit identities
/// whose residual is `|lhs - rhs| / max(|lhs|, |rhs|)`, except `signed_zero_set`,
/// whose left side is 0 and whose residual is normalized by `L^X(0)`.
pub fn identity_suite(
    x: &SampledPath,
    y: &SampledPath,
    hierarchy: &PartitionHierarchy,
    p: u32,
) -> Result<Vec<IdentityReport>> {
    check_order(p)?;
    let maximum = x.zip_with(y, f64::max)?;
    let minimum = x.zip_with(y, f64::min)?;
    let nonneg = if x.values().iter().any(|&v| v < 0.0) { x.map(f64::abs)? } else { x.clone() };
    let (xv, yv, nv) = (x.values(), y.values(), nonneg.values());
    let t = x.last_index();
    let e = p as i32 - 1;
    let pos = |v: f64| v.max(0.0);
    let neg = |v: f64| (-v).max(0.0);

    const NAMES: [&str; 13] = [
        "nonneg_zero_set/literal",
        "nonneg_zero_set/band",
        "positive_part/literal",
        "positive_part/band",
        "negative_part/literal",
        "negative_part/band",
        "signed_zero_set/literal",
        "signed_zero_set/band",
        "max_decomposition/literal",
        "max_decomposition/band",
        "min_decomposition/literal",
        "min_decomposition/band",
        "max_plus_min",
    ];
    let mut rows: Vec<Vec<IdentityRow>> = vec![Vec::with_capacity(hierarchy.len()); NAMES.len()];

    for (n, level) in hierarchy.levels().iter().enumerate() {
        let dx = oscillation(x, level);
        let dn = oscillation(&nonneg, level);
        let d = dx.max(oscillation(y, level));
        let lx = local_time_at(x, level, p, 0.0, t);
        let ly = local_time_at(y, level, p, 0.0, t);
        let lmax = local_time_at(&maximum, level, p, 0.0, t);
        let lmin = local_time_at(&minimum, level, p, 0.0, t);

        // Single pass over the cells accumulating every right-hand side.
        let mut s = [0.0f64; 12];
        for w in level.windows(2) {
            let (l, r) = (w[0], w[1]);
            let (x0, x1, y0, y1, n0, n1) = (xv[l], xv[r], yv[l], yv[r], nv[l], nv[r]);
            if n0 == 0.0 {
                s[0] += n1.powi(e);
            }
            if n0 <= dn {
                s[1] += n1.powi(e) - n0.powi(e);
            }
            let dpos = (pos(x1) - pos(x0)).powi(e);
            let dneg = (neg(x1) - neg(x0)).powi(e);
            let dx_inc = (x1 - x0).powi(e);
            if x0 == 0.0 {
                s[2] += dpos;
                s[4] += dneg;
                s[6] += dx_inc;
            }
            if x0.abs() <= dx {
                s[3] += dpos;
                s[5] += dneg;
                s[7] += dx_inc;
            }
            let lx_cell = cell_local_time(x0, x1, 0.0, p);
            let ly_cell = cell_local_time(y0, y1, 0.0, p);
            let dmax_pos = (pos(x1).max(pos(y1)) - pos(x0).max(pos(y0))).powi(e);
            let dmin_pos = (pos(x1).min(pos(y1)) - pos(x0).min(pos(y0))).powi(e);
            // max: literal then band
            if y0 < 0.0 {
                s[8] += lx_cell;
            }
            if x0 < 0.0 {
                s[8] += ly_cell;
            }
            if x0 == 0.0 && y0 == 0.0 {
                s[8] += dmax_pos;
                s[10] += dmin_pos;
            }
            if y0 < -d {
                s[9] += lx_cell;
            }
            if x0 < -d {
                s[9] += ly_cell;
            }
            let joint_band = x0.abs() <= d && y0.abs() <= d;
            if joint_band {
                s[9] += dmax_pos;
                s[11] += dmin_pos;
            }
            // min
            if y0 > 0.0 {
                s[10] += lx_cell;
            }
            if x0 > 0.0 {
                s[10] += ly_cell;
            }
            if y0 > d {
                s[11] += lx_cell;
            }
            if x0 > d {
                s[11] += ly_cell;
            }
        }

        let right_limit = local_time_right_limit(&nonneg, level, p, 0.0, t);
        rows[0].push(Residual::new(right_limit, s[0], right_limit + s[0]).row(n));
        rows[1].push(gap_row(n, local_time_at(&nonneg, level, p, dn, t), s[1]));
        for k in 2..6 {
            rows[k].push(gap_row(n, lx, s[k]));
        }
        for k in 6..8 {
            let residual = ratio(s[k].abs(), lx.max(s[k].abs()));
            rows[k].push(IdentityRow { level: n, lhs: 0.0, rhs: s[k], residual });
        }
        rows[8].push(gap_row(n, lmax, s[8]));
        rows[9].push(gap_row(n, lmax, s[9]));
        rows[10].push(gap_row(n, lmin, s[10]));
        rows[11].push(gap_row(n, lmin, s[11]));
        rows[12].push(gap_row(n, lmax + lmin, lx + ly));
    }

    Ok(NAMES
        .iter()
        .zip(rows)
        .enumerate()
        .map(|(k, (name, rows))| {
            if k == 0 {
                IdentityReport::new(
                    *name,
                    Exactness::ExactPerLevel,
                    ResidualKind::Relative,
                    EXACT_THRESHOLD,
                    rows,
                )
            } else {
                IdentityReport::new(
                    *name,
                    Exactness::LimitOnly,
                    ResidualKind::Relative,
                    LIMIT_TOLERANCE,
                    rows,
                )
            }
        })
        .collect())
}

/// Fails unless `f` is strictly monotone on `[lo, hi]`, judged on a dense sample.
fn check_strictly_monotone(f: &dyn PathFunction, lo: f64, hi: f64) -> Result<()> {
    if lo == hi {
        return Ok(());
    }
    let step = (hi - lo) / (DENSE_SAMPLES - 1) as f64;
    let values: Vec<f64> = (0..DENSE_SAMPLES).map(|i| f.value(lo + step * i as f64)).collect();
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    if increasing || decreasing {
        Ok(())
    } else {
        Err(Error::NotMonotone { lo, hi })
    }
}

/// `L^{f(S)}(f(a))` against `|f'(a)|^(p-1) L^S(a)` on every level at the horizon. Exact per
/// level when `f` is affine.
pub fn scaling_check(
    path: &SampledPath,
    f: &dyn PathFunction,
    a: f64,
    hierarchy: &PartitionHierarchy,
    p: u32,
) -> Result<IdentityReport> {
    check_order(p)?;
    let (lo, hi) = path.range();
    check_strictly_monotone(f, lo.min(a), hi.max(a))?;
    let slope = f.derivative(1, a).ok_or(Error::DerivativeUnavailable { order: 1 })?;
    let image = path.map(|v| f.value(v))?;
    let factor = slope.abs().powi(p as i32 - 1);
    let fa = f.value(a);
    let t = path.last_index();
    let rows = hierarchy
        .levels()
        .iter()
        .enumerate()
        .map(|(n, level)| {
            let lhs = local_time_at(&image, level, p, fa, t);
            gap_row(n, lhs, factor * local_time_at(path, level, p, a, t))
        })
        .collect();
    let (exactness, threshold) = if f.is_affine() {
        (Exactness::ExactPerLevel, EXACT_THRESHOLD)
    } else {
        (Exactness::LimitOnly, SCALING_TOLERANCE)
    };
    Ok(IdentityReport::new(
        format!("scaling/a={a}"),
        exactness,
        ResidualKind::Relative,
        threshold,
        rows,
    ))
}

/// Scaling law for `S = Y^(1/r)` at `a = 0` with `Y = |y|`: both sides vanish.
pub fn power_corollary_check(
    y: &SampledPath,
    r: f64,
    hierarchy: &PartitionHierarchy,
    p: u32,
) -> Result<IdentityReport> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::parameter("r", "must lie in (0, 1)"));
    }
    let base = y.map(f64::abs)?;
    let f = crate::integrate::PositivePower { exponent: 1.0 / r };
    let mut report = scaling_check(&base, &f, 0.0, hierarchy, p)?;
    report.name = format!("power_corollary/r={r}");
    Ok(report)
}

/// Whether `g` is constant on every cell of `grid`.
fn is_cell_piecewise_constant(g: &TestFunction, grid: &SpaceGrid) -> bool {
    let pw = g.derivative_pw(0);
    let w = grid.width();
    pw.max_degree() == 0
        && pw.breakpoints.iter().all(|&b| {
            let k = ((b - grid.lo()) / w).round();
            b <= grid.lo() || b >= grid.hi() || (grid.lo() + k * w - b).abs() <= 1e-9 * w
        })
}

/// `sum_{t_j <= t} g(S_j) |dS_j|^p` on the finest grid against
/// `p * width * sum_x g(x) occupation_density(x)`. Exact when `g` is constant on every
/// cell; otherwise the gate is `2 Lip(g) width [S]^p(t)` on the absolute difference.
pub fn occupation_check(
    path: &SampledPath,
    p: u32,
    g: &TestFunction,
    grid: &SpaceGrid,
    t: usize,
) -> Result<IdentityReport> {
    check_order(p)?;
    let density = occupation_density_local_time(path, p, grid, &[t])?;
    let v = path.values();
    let cells = (t + 1).min(path.last_index());
    let (mut lhs, mut lhs_abs, mut variation) = (0.0, 0.0, 0.0);
    for j in 0..cells {
        let inc = (v[j + 1] - v[j]).abs().powi(p as i32);
        let term = g.eval_derivative(0, v[j]) * inc;
        lhs += term;
        lhs_abs += term.abs();
        variation += inc;
    }
    let w = grid.width();
    let rhs = p as f64
        * w
        * density.values[0]
            .iter()
            .enumerate()
            .map(|(i, &l)| g.eval_derivative(0, grid.center(i)) * l)
            .sum::<f64>();
    let level = path.n_max() as usize;
    let name = format!("occupation/{}", g.label());
    if is_cell_piecewise_constant(g, grid) {
        let row = Residual::new(lhs, rhs, lhs_abs).row(level);
        return Ok(IdentityReport::new(
            name,
            Exactness::ExactPerLevel,
            ResidualKind::Relative,
            EXACT_THRESHOLD,
            vec![row],
        ));
    }
    let step = (grid.hi() - grid.lo()) / (DENSE_SAMPLES - 1) as f64;
    let lip = (0..DENSE_SAMPLES)
        .map(|i| g.eval_derivative(1, grid.lo() + step * i as f64).abs())
        .fold(0.0, f64::max);
    let row = IdentityRow { level, lhs, rhs, residual: (lhs - rhs).abs() };
    Ok(IdentityReport::new(
        name,
        Exactness::LimitOnly,
        ResidualKind::Absolute,
        2.0 * lip * w * variation,
        vec![row],
    ))
}

/// CSV with columns `identity,level,lhs,rhs,residual,class`.
pub fn write_identity_csv<W: Write>(reports: &[IdentityReport], out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "identity,level,lhs,rhs,residual,class")?;
    for report in reports {
        for r in &report.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                report.name,
                r.level,
                r.lhs,
                r.rhs,
                r.residual,
                report.exactness.label()
            )?;
        }
    }
    w.flush()
}
