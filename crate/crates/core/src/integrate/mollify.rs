//! The standard bump mollifier, mollified test functions, and the modified Föllmer
//! integral.

use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::{stieltjes_pairing, taylor_stencil, PathFunction, TestFunction};
use crate::error::{Error, Result};
use crate::localtime::{occupation_density_local_time, HistogramSlice, SpaceGrid};
use crate::partitions::{sum_through, PartitionHierarchy};
use crate::paths::SampledPath;
use crate::quadrature::{integrate_adaptive, integrate_piecewise};
use crate::stats::factorial;

/// Absolute tolerance for every mollifier quadrature.
pub const MOLLIFIER_TOLERANCE: f64 = 1e-10;

pub const DEFAULT_SCHEDULE: [u32; 5] = [2, 4, 8, 16, 32];
/// Second schedule used to cross-check independence from the approximating sequence.
pub const ALTERNATE_SCHEDULE: [u32; 5] = [3, 6, 12, 24, 48];

/// Below this exponent `exp(1/(x^2-1))` and all its derivatives are negligible.
const UNDERFLOW_EXPONENT: f64 = -700.0;

/// `1 / integral_{-1}^{1} exp(1/(x^2-1)) dx`.
pub fn bump_normalization() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| {
        let q = integrate_adaptive(raw_bump, -1.0, 1.0, 1e-15, 400);
        1.0 / q.value
    })
}

fn raw_bump(x: f64) -> f64 {
    let q = x * x - 1.0;
    if q >= 0.0 {
        0.0
    } else {
        (1.0 / q).exp()
    }
}

/// Normalized bump `phi(x)` supported on `(-1, 1)`.
pub fn bump(x: f64) -> f64 {
    bump_normalization() * raw_bump(x)
}

/// `phi^(order)(x)`, from the Taylor coefficients of `exp(1/((x+h)^2 - 1))` in `h`.
pub fn bump_derivative(order: usize, x: f64) -> f64 {
    let q0 = x * x - 1.0;
    if q0 >= 0.0 || 1.0 / q0 < UNDERFLOW_EXPONENT {
        return 0.0;
    }
    // (x+h)^2 - 1 = q0 + 2x h + h^2; reciprocal series r, then exp series e.
    let (q1, q2) = (2.0 * x, 1.0);
    let mut r = vec![0.0; order + 1];
    r[0] = 1.0 / q0;
    for k in 1..=order {
        let prev2 = if k >= 2 { r[k - 2] } else { 0.0 };
        r[k] = -(q1 * r[k - 1] + q2 * prev2) / q0;
    }
    let mut e = vec![0.0; order + 1];
    e[0] = r[0].exp();
    for k in 1..=order {
        e[k] = (1..=k).map(|j| j as f64 * r[j] * e[k - j]).sum::<f64>() / k as f64;
    }
    bump_normalization() * factorial(order as u32) * e[order]
}

/// `phi_m(y) = m phi(m y)`, supported on `[-1/m, 1/m]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mollifier {
    m: u32,
}

impl Mollifier {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::parameter("m", "mollifier order must be >= 1"));
        }
        Ok(Mollifier { m })
    }

    pub fn order(&self) -> u32 {
        self.m
    }

    pub fn radius(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn eval(&self, y: f64) -> f64 {
        let m = self.m as f64;
        m * bump(m * y)
    }

    pub fn derivative(&self, order: usize, y: f64) -> f64 {
        let m = self.m as f64;
        m.powi(order as i32 + 1) * bump_derivative(order, m * y)
    }

    /// Numerical mass of the kernel; equals 1 to the quadrature tolerance.
    pub fn mass(&self) -> f64 {
        let r = self.radius();
        integrate_adaptive(|y| self.eval(y), -r, r, MOLLIFIER_TOLERANCE, 400).value
    }
}

/// `f_m = f * phi_m` with derivatives of every order.
#[derive(Debug, Clone)]
pub struct Mollified<'a> {
    f: &'a TestFunction,
    kernel: Mollifier,
}

pub fn mollify(f: &TestFunction, m: u32) -> Result<Mollified<'_>> {
    Ok(Mollified { f, kernel: Mollifier::new(m)? })
}

impl Mollified<'_> {
    pub fn kernel(&self) -> Mollifier {
        self.kernel
    }

    /// `f_m^(k)(x) = integral f^(j)(x - y) phi_m^(k-j)(y) dy`, moving to the kernel only the
    /// derivatives that `f` does not have as functions.
    pub fn eval_derivative(&self, k: usize, x: f64) -> f64 {
        let on_f = (self.f.smoothness().saturating_add(1)).max(0) as usize;
        let j = k.min(on_f);
        let r = self.kernel.radius();
        let splits: Vec<f64> = self.f.breakpoints().iter().map(|b| x - b).collect();
        integrate_piecewise(
            |y| self.f.eval_derivative(j, x - y) * self.kernel.derivative(k - j, y),
            -r,
            r,
            &splits,
            MOLLIFIER_TOLERANCE,
        )
        .value
    }
}

impl PathFunction for Mollified<'_> {
    fn value(&self, x: f64) -> f64 {
        self.eval_derivative(0, x)
    }

    fn derivative(&self, order: usize, x: f64) -> Option<f64> {
        Some(self.eval_derivative(order, x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollmerRow {
    pub m: u32,
    pub level: usize,
    pub value: f64,
    pub target: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedFollmerReport {
    pub p: u32,
    pub t: usize,
    /// `f(S_t) - f(S_0) - I/(p-1)!` with `I` the pairing of `d f^(p-1)` against the
    /// occupation-density local time.
    pub target: f64,
    pub pairing: f64,
    pub rows: Vec<FollmerRow>,
    /// Finest-level values for [`ALTERNATE_SCHEDULE`].
    pub alternate: Vec<(u32, f64)>,
    /// Finest-level difference between the last members of the two schedules.
    pub schedule_gap: f64,
}

impl ModifiedFollmerReport {
    /// Finest-level `|sum_m - target|` in schedule order.
    pub fn finest_errors(&self) -> Vec<(u32, f64)> {
        let finest = self.rows.iter().map(|r| r.level).max().unwrap_or(0);
        self.rows.iter().filter(|r| r.level == finest).map(|r| (r.m, r.abs_err)).collect()
    }
}

/// Föllmer sums of `f_m` on every level for each `m`, against the closed-form target.
pub fn modified_follmer_integral(
    path: &SampledPath,
    hierarchy: &PartitionHierarchy,
    p: u32,
    f: &TestFunction,
    t: usize,
    schedule: &[u32],
    grid: &SpaceGrid,
) -> Result<ModifiedFollmerReport> {
    f.check_tanaka_class(p)?;
    if schedule.is_empty() {
        return Err(Error::parameter("m_schedule", "must not be empty"));
    }
    let v = path.values();
    let t = t.min(path.last_index());
    let occupation = occupation_density_local_time(path, p, grid, &[t])?;
    let slice = HistogramSlice { grid: *grid, values: occupation.values[0].clone() };
    let pairing = stieltjes_pairing(&slice, &f.stieltjes_measure(p as usize - 1))?;
    let target =
        f.eval_derivative(0, v[t]) - f.eval_derivative(0, v[0]) - pairing / factorial(p - 1);

    // f_m derivatives are needed only at grid samples; tabulate them once per m.
    let order = p as usize - 1;
    let table = |m: u32| -> Result<Vec<Vec<f64>>> {
        let fm = mollify(f, m)?;
        Ok(v.par_iter()
            .map(|&x| {
                let mut fact = 1.0;
                (1..=order)
                    .map(|k| {
                        fact *= k as f64;
                        fm.eval_derivative(k, x) / fact
                    })
                    .collect()
            })
            .collect())
    };
    let sums = |tab: &[Vec<f64>], level: &[usize]| {
        sum_through(level, t, |l, r| taylor_stencil(&tab[l], v[r] - v[l])).0
    };

    let mut rows = Vec::new();
    for &m in schedule {
        let tab = table(m)?;
        for (n, level) in hierarchy.levels().iter().enumerate() {
            let value = sums(&tab, level);
            rows.push(FollmerRow { m, level: n, value, target, abs_err: (value - target).abs() });
        }
    }
    let mut alternate = Vec::new();
    for &m in &ALTERNATE_SCHEDULE {
        alternate.push((m, sums(&table(m)?, hierarchy.finest())));
    }
    let last_default = rows.last().map(|r| r.value).unwrap_or(f64::NAN);
    let schedule_gap = (last_default - alternate.last().unwrap().1).abs();
    Ok(ModifiedFollmerReport { p, t, target, pairing, rows, alternate, schedule_gap })
}

/// CSV with columns `m,level,value,target,abs_err`.
pub fn write_follmer_csv<W: Write>(report: &ModifiedFollmerReport, out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "m,level,value,target,abs_err")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{},{}", r.m, r.level, r.value, r.target, r.abs_err)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::tanaka_class;

    #[test]
    fn kernel_mass_is_one() {
        for m in [1, 2, 4, 8, 16, 32, 48] {
            let k = Mollifier::new(m).unwrap();
            assert!((k.mass() - 1.0).abs() <= MOLLIFIER_TOLERANCE, "m={m}");
            assert_eq!(k.eval(1.0 / m as f64), 0.0);
        }
        assert!(Mollifier::new(0).is_err());
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        for &x in &[-0.7, -0.2, 0.0, 0.35, 0.8] {
            for order in 1..=3 {
                let h = 1e-5;
                let fd = (bump_derivative(order - 1, x + h) - bump_derivative(order - 1, x - h))
                    / (2.0 * h);
                let exact = bump_derivative(order, x);
                assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "x={x} order={order}");
            }
        }
        assert_eq!(bump_derivative(2, 1.0), 0.0);
        assert_eq!(bump_derivative(0, 0.3), bump(0.3));
    }

    #[test]
    fn constants_and_identity_are_preserved() {
        let c = TestFunction::polynomial(vec![2.5], "c");
        let id = TestFunction::polynomial(vec![0.0, 1.0], "x");
        for m in [1, 3, 16] {
            assert!((mollify(&c, m).unwrap().value(0.4) - 2.5).abs() < 1e-9);
            let fm = mollify(&id, m).unwrap();
            assert!((fm.value(-0.7) + 0.7).abs() < 1e-9);
            assert!((fm.eval_derivative(1, 0.2) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn positive_part_smoothing() {
        let f = tanaka_class("pos_part_pow", &[0.0], 2).unwrap();
        let mut prev = f64::INFINITY;
        for m in [1, 2, 4, 8, 16, 32] {
            let fm = mollify(&f, m).unwrap();
            let at0 = fm.value(0.0);
            assert!(at0 > 0.0 && at0 < 0.5 / m as f64, "m={m}");
            let err = (fm.value(0.03) - 0.03).abs();
            assert!(err <= prev);
            prev = err;
            // f_m'' is the kernel itself for x^+.
            assert!((fm.eval_derivative(2, 0.01) - fm.kernel().eval(0.01)).abs() < 1e-8);
        }
        assert!(prev < 1e-3);
    }
}
