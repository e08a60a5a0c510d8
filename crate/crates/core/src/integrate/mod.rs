//! Föllmer sums of order p, Tanaka–Meyer sums, and pairings of local times with
//! Stieltjes measures.

mod mollify;
mod testfn;

use crate::error::{check_order, Error, Result};
use crate::localtime::{cell_local_time, local_time_at, SpatialSlice};
use crate::partitions::sum_through;
use crate::paths::SampledPath;
use crate::quadrature::gauss_legendre;

pub use mollify::{
    bump, bump_derivative, bump_normalization, modified_follmer_integral, mollify,
    write_follmer_csv, FollmerRow, ModifiedFollmerReport, Mollified, Mollifier, ALTERNATE_SCHEDULE,
    DEFAULT_SCHEDULE, MOLLIFIER_TOLERANCE,
};
pub use testfn::{
    kink_atom_mass, tanaka_class, PiecewisePolynomial, Polynomial, StieltjesMeasure, TestFunction,
    TestFunctionSpec, SMOOTH,
};

/// A function of the path value with right-continuous derivatives.
pub trait PathFunction: Sync {
    fn value(&self, x: f64) -> f64;
    /// `f^(order)(x)`, or `None` when this order is not available.
    fn derivative(&self, order: usize, x: f64) -> Option<f64>;
    /// Whether `f'` is constant, which makes the local-time scaling law exact per level.
    fn is_affine(&self) -> bool {
        false
    }
}

impl PathFunction for TestFunction {
    fn value(&self, x: f64) -> f64 {
        self.eval_derivative(0, x)
    }

    fn derivative(&self, order: usize, x: f64) -> Option<f64> {
        Some(self.eval_derivative(order, x))
    }

    fn is_affine(&self) -> bool {
        self.is_polynomial_of_degree(1)
    }
}

/// `exp(x)`.
#[derive(Debug, Clone, Copy)]
pub struct Exp;

impl PathFunction for Exp {
    fn value(&self, x: f64) -> f64 {
        x.exp()
    }

    fn derivative(&self, _order: usize, x: f64) -> Option<f64> {
        Some(x.exp())
    }
}

/// `slope * x + intercept`.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl PathFunction for Affine {
    fn value(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    fn derivative(&self, order: usize, x: f64) -> Option<f64> {
        Some(match order {
            0 => self.value(x),
            1 => self.slope,
            _ => 0.0,
        })
    }

    fn is_affine(&self) -> bool {
        true
    }
}

/// `x^exponent` on `x >= 0` (zero below); first derivative only.
#[derive(Debug, Clone, Copy)]
pub struct PositivePower {
    pub exponent: f64,
}

impl PathFunction for PositivePower {
    fn value(&self, x: f64) -> f64 {
        x.max(0.0).powf(self.exponent)
    }

    fn derivative(&self, order: usize, x: f64) -> Option<f64> {
        match order {
            0 => Some(self.value(x)),
            1 => Some(self.exponent * x.max(0.0).powf(self.exponent - 1.0)),
            _ => None,
        }
    }
}

/// Taylor stencil `sum_{k=1}^{p-1} f^(k)(x)/k! * h^k` evaluated by Horner's rule.
pub(crate) fn taylor_stencil(derivs: &[f64], h: f64) -> f64 {
    // derivs[k-1] = f^(k)(x) / k!
    derivs.iter().rev().fold(0.0, |acc, &d| (acc + d) * h)
}

/// Scaled derivatives `f^(k)(x)/k!` for `k = 1..=order`.
pub(crate) fn scaled_derivatives(f: &dyn PathFunction, order: usize, x: f64) -> Result<Vec<f64>> {
    let mut fact = 1.0;
    (1..=order)
        .map(|k| {
            fact *= k as f64;
            f.derivative(k, x).map(|d| d / fact).ok_or(Error::DerivativeUnavailable { order: k })
        })
        .collect()
}

/// Föllmer sum and the sum of absolute values of its terms.
pub(crate) fn follmer_terms(
    path: &SampledPath,
    level: &[usize],
    p: u32,
    f: &dyn PathFunction,
    t: usize,
) -> Result<(f64, f64)> {
    check_order(p)?;
    let v = path.values();
    let order = p as usize - 1;
    let mut failure = None;
    let sums = sum_through(level, t, |l, r| match scaled_derivatives(f, order, v[l]) {
        Ok(d) => taylor_stencil(&d, v[r] - v[l]),
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(sums),
    }
}

/// `sum_{t_j <= t} sum_{k=1}^{p-1} f^(k)(S(t_j))/k! (S(t_{j+1}) - S(t_j))^k` on one level;
/// `t` is a grid index.
pub fn follmer_sum(
    path: &SampledPath,
    level: &[usize],
    p: u32,
    f: &dyn PathFunction,
    t: usize,
) -> Result<f64> {
    follmer_terms(path, level, p, f, t).map(|(s, _)| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TanakaMeyerVariant {
    /// Indicator of `(a, inf)`.
    Plus,
    /// Indicator of `(-inf, a)`.
    Minus,
    /// `sign(S - a)` with `sign(0) = +1`.
    Sign,
}

/// Tanaka–Meyer compensated sum and the sum of absolute values of its terms.
pub(crate) fn tanaka_meyer_terms(
    path: &SampledPath,
    level: &[usize],
    p: u32,
    a: f64,
    variant: TanakaMeyerVariant,
    t: usize,
) -> (f64, f64) {
    let v = path.values();
    let e = p as i32 - 1;
    sum_through(level, t, |l, r| {
        let weight = match variant {
            TanakaMeyerVariant::Plus => f64::from(u8::from(v[l] > a)),
            TanakaMeyerVariant::Minus => f64::from(u8::from(v[l] < a)),
            TanakaMeyerVariant::Sign => {
                if v[l] >= a {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        if weight == 0.0 {
            0.0
        } else {
            weight * ((v[r] - a).powi(e) - (v[l] - a).powi(e))
        }
    })
}

/// `sum_{t_j <= t} w(S(t_j)) {(S(t_{j+1}) - a)^(p-1) - (S(t_j) - a)^(p-1)}` with the
/// variant's weight `w`.
pub fn tanaka_meyer_sum(
    path: &SampledPath,
    level: &[usize],
    p: u32,
    a: f64,
    variant: TanakaMeyerVariant,
    t: usize,
) -> f64 {
    tanaka_meyer_terms(path, level, p, a, variant, t).0
}

/// Pairs a grid local-time profile with a measure: atoms use the exact value of the
/// profile at the atom, the density uses the midpoint rule on the grid cells.
pub fn stieltjes_pairing(slice: &impl SpatialSlice, mu: &StieltjesMeasure) -> Result<f64> {
    let grid = slice.grid();
    let mut total = 0.0;
    for &(x, mass) in &mu.atoms {
        if !grid.contains(x) {
            return Err(Error::OutsideGrid { x, lo: grid.lo(), hi: grid.hi() });
        }
        total += mass * slice.value_at(x);
    }
    if !mu.density.is_zero() {
        let w = grid.width();
        total += slice
            .grid_values()
            .iter()
            .enumerate()
            .map(|(i, &l)| w * l * mu.density.eval(grid.center(i)))
            .sum::<f64>();
    }
    Ok(total)
}

/// `integral L_t^{level}(x) mu(dx)` computed exactly from the path: atoms by direct
/// evaluation, the density by Gauss–Legendre rules of sufficient degree on each cell.
/// Returns the value and the sum of absolute contributions.
pub fn discrete_measure_pairing(
    path: &SampledPath,
    level: &[usize],
    p: u32,
    t: usize,
    mu: &StieltjesMeasure,
) -> (f64, f64) {
    let mut total = 0.0;
    let mut abs = 0.0;
    for &(x, mass) in &mu.atoms {
        let c = mass * local_time_at(path, level, p, x, t);
        total += c;
        abs += c.abs();
    }
    if mu.density.is_zero() {
        return (total, abs);
    }
    let degree = p as usize - 1 + mu.density.max_degree();
    let (nodes, weights) = gauss_legendre(degree / 2 + 1);
    let v = path.values();
    let (s, a) = sum_through(level, t, |l, r| {
        let (sa, sb) = (v[l], v[r]);
        let (lo, hi) = if sa <= sb { (sa, sb) } else { (sb, sa) };
        if lo == hi {
            return 0.0;
        }
        let mut cuts = vec![lo];
        cuts.extend(mu.density.breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
        cuts.push(hi);
        cuts.windows(2)
            .map(|seg| {
                let (c, h) = (0.5 * (seg[0] + seg[1]), 0.5 * (seg[1] - seg[0]));
                let piece = &mu.density.pieces[mu.density.breakpoints.partition_point(|&b| b <= c)];
                h * nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&z, &w)| {
                        let x = c + h * z;
                        w * (sb - x).abs().powi(p as i32 - 1) * piece.eval(x)
                    })
                    .sum::<f64>()
            })
            .sum()
    });
    (total + s, abs + a)
}

/// Per-cell contribution of one cell to the discrete pairing with a single atom, exposed
/// for oracle tests.
pub fn atom_cell_term(a: f64, b: f64, x: f64, p: u32, mass: f64) -> f64 {
    mass * cell_local_time(a, b, x, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localtime::{DiscreteSlice, SpaceGrid};

    fn two_point(a: f64, b: f64) -> SampledPath {
        SampledPath::new(1.0, 1, vec![a, 0.5 * (a + b), b]).unwrap()
    }

    #[test]
    fn identity_function_telescopes() {
        let s = SampledPath::new(1.0, 2, vec![0.1, -0.4, 0.9, 0.2, 0.5]).unwrap();
        let f = TestFunction::polynomial(vec![0.0, 1.0], "x");
        for level in [&[0usize, 4][..], &[0, 2, 4], &[0, 1, 2, 3, 4]] {
            assert!((follmer_sum(&s, level, 2, &f, 4).unwrap() - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn square_leaves_quadratic_variation() {
        let s = SampledPath::new(1.0, 2, vec![0.1, -0.4, 0.9, 0.2, 0.5]).unwrap();
        let f = TestFunction::polynomial(vec![0.0, 0.0, 1.0], "x^2");
        let level = [0, 1, 2, 3, 4];
        let qv: f64 = [0.5f64, 1.3, 0.7, 0.3].iter().map(|d| d * d).sum();
        let expected = 0.25 - 0.01 - qv;
        assert!((follmer_sum(&s, &level, 2, &f, 4).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn tanaka_meyer_hand_values() {
        let up = two_point(0.0, 1.0);
        let down = two_point(1.0, 0.0);
        let lvl = [0, 2];
        assert_eq!(tanaka_meyer_sum(&up, &lvl, 2, 0.5, TanakaMeyerVariant::Plus, 2), 0.0);
        assert_eq!(tanaka_meyer_sum(&down, &lvl, 2, 0.5, TanakaMeyerVariant::Plus, 2), -1.0);
        assert_eq!(tanaka_meyer_sum(&up, &lvl, 2, 0.5, TanakaMeyerVariant::Minus, 2), 1.0);
        assert_eq!(tanaka_meyer_sum(&up, &lvl, 2, 0.5, TanakaMeyerVariant::Sign, 2), -1.0);
        let below = two_point(-2.0, -1.0);
        assert_eq!(tanaka_meyer_sum(&below, &[0, 1, 2], 4, 0.0, TanakaMeyerVariant::Plus, 2), 0.0);
    }

    #[test]
    fn pairing_examples() {
        let s = two_point(0.0, 1.0);
        let level = [0usize, 2];
        let grid = SpaceGrid::new(-0.25, 1.25, 300).unwrap();
        let slice = DiscreteSlice::new(&s, &level, 2, 2, grid);
        assert_eq!(stieltjes_pairing(&slice, &StieltjesMeasure::zero()).unwrap(), 0.0);
        let atom = StieltjesMeasure::atom(0.3, 6.0);
        assert_eq!(stieltjes_pairing(&slice, &atom).unwrap(), 6.0 * (1.0 - 0.3));
        let flat = StieltjesMeasure::density(PiecewisePolynomial::polynomial(Polynomial::new(
            0.0,
            vec![2.0],
        )));
        let v = stieltjes_pairing(&slice, &flat).unwrap();
        assert!((v - 1.0).abs() <= 2.0 * grid.width());
        assert!((discrete_measure_pairing(&s, &level, 2, 2, &flat).0 - 1.0).abs() < 1e-15);
        let far = StieltjesMeasure::atom(5.0, 1.0);
        assert!(matches!(stieltjes_pairing(&slice, &far), Err(Error::OutsideGrid { .. })));
    }

    #[test]
    fn missing_derivatives_are_reported() {
        let s = two_point(0.5, 1.0);
        let f = PositivePower { exponent: 2.0 };
        assert!(matches!(
            follmer_sum(&s, &[0, 2], 4, &f, 2),
            Err(Error::DerivativeUnavailable { order: 2 })
        ));
        assert!(follmer_sum(&s, &[0, 2], 2, &f, 2).is_ok());
    }
}
