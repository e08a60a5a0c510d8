//! Piecewise-polynomial test functions and their Stieltjes measures.

use serde::{Deserialize, Serialize};

use crate::error::{check_order, Error, Result};
use crate::stats::factorial;

/// `sum_i coeffs[i] * (x - origin)^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub origin: f64,
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(origin: f64, coeffs: Vec<f64>) -> Self {
        let mut p = Polynomial { origin, coeffs };
        while p.coeffs.last() == Some(&0.0) {
            p.coeffs.pop();
        }
        p
    }

    pub fn zero(origin: f64) -> Self {
        Polynomial { origin, coeffs: Vec::new() }
    }

    /// `scale * (x - origin)^degree`.
    pub fn monomial(origin: f64, degree: usize, scale: f64) -> Self {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = scale;
        Polynomial::new(origin, coeffs)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = x - self.origin;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn derivative(&self) -> Polynomial {
        let coeffs = self.coeffs.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect();
        Polynomial::new(self.origin, coeffs)
    }

    /// Degree, with the zero polynomial reported as 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Polynomial pieces on `(-inf, b_1), [b_1, b_2), ..., [b_r, inf)`; right-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolynomial {
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<Polynomial>,
}

impl PiecewisePolynomial {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Polynomial>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::parameter("pieces", "need exactly one more piece than breakpoints"));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::parameter("breakpoints", "must be finite and strictly increasing"));
        }
        Ok(PiecewisePolynomial { breakpoints, pieces })
    }

    pub fn polynomial(p: Polynomial) -> Self {
        PiecewisePolynomial { breakpoints: Vec::new(), pieces: vec![p] }
    }

    fn piece_right(&self, x: f64) -> &Polynomial {
        &self.pieces[self.breakpoints.partition_point(|&b| b <= x)]
    }

    fn piece_left(&self, x: f64) -> &Polynomial {
        &self.pieces[self.breakpoints.partition_point(|&b| b < x)]
    }

    /// Right-continuous value.
    pub fn eval(&self, x: f64) -> f64 {
        self.piece_right(x).eval(x)
    }

    pub fn left_limit(&self, x: f64) -> f64 {
        self.piece_left(x).eval(x)
    }

    pub fn derivative(&self) -> PiecewisePolynomial {
        PiecewisePolynomial {
            breakpoints: self.breakpoints.clone(),
            pieces: self.pieces.iter().map(Polynomial::derivative).collect(),
        }
    }

    /// `(location, right value - left limit)` at every breakpoint with a non-zero jump.
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        self.breakpoints
            .iter()
            .zip(self.pieces.windows(2))
            .map(|(&b, w)| (b, w[1].eval(b) - w[0].eval(b)))
            .filter(|&(_, j)| j != 0.0)
            .collect()
    }

    pub fn max_degree(&self) -> usize {
        self.pieces.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().all(Polynomial::is_zero)
    }
}

/// Declared smoothness of a function with no breakpoints.
pub const SMOOTH: i32 = i32::MAX;

/// A piecewise-polynomial function with exact right-continuous derivatives of every order.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    /// `derivatives[k]` is `f^(k)`; orders past the end are identically zero.
    derivatives: Vec<PiecewisePolynomial>,
    /// `f` is `C^smoothness` across its breakpoints; `-1` allows jumps in `f` itself.
    smoothness: i32,
    label: String,
}

impl TestFunction {
    /// Validates the declared smoothness by comparing one-sided derivative values at every
    /// breakpoint.
    pub fn new(pw: PiecewisePolynomial, smoothness: i32, label: impl Into<String>) -> Result<Self> {
        if smoothness < -1 {
            return Err(Error::parameter("smoothness", "must be >= -1"));
        }
        let top = pw.max_degree() + 1;
        let mut derivatives = vec![pw];
        for k in 1..=top {
            derivatives.push(derivatives[k - 1].derivative());
        }
        let f = TestFunction { derivatives, smoothness, label: label.into() };
        let checked =
            if f.derivatives[0].breakpoints.is_empty() { -1 } else { smoothness.min(top as i32) };
        for k in 0..=checked {
            let d = &f.derivatives[k as usize];
            for &b in &d.breakpoints {
                let (l, r) = (d.left_limit(b), d.eval(b));
                if (l - r).abs() > 1e-9 * (1.0 + l.abs().max(r.abs())) {
                    return Err(Error::OutsideClass(format!(
                        "derivative {k} jumps at {b} ({l} -> {r}) but C^{smoothness} was declared"
                    )));
                }
            }
        }
        Ok(f)
    }

    pub fn polynomial(coeffs: Vec<f64>, label: impl Into<String>) -> Self {
        let pw = PiecewisePolynomial::polynomial(Polynomial::new(0.0, coeffs));
        TestFunction::new(pw, SMOOTH, label).expect("polynomials are smooth")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smoothness(&self) -> i32 {
        self.smoothness
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.derivatives[0].breakpoints
    }

    /// `f^(order)` as a piecewise polynomial.
    pub fn derivative_pw(&self, order: usize) -> PiecewisePolynomial {
        match self.derivatives.get(order) {
            Some(d) => d.clone(),
            None => {
                let base = &self.derivatives[0];
                PiecewisePolynomial {
                    breakpoints: base.breakpoints.clone(),
                    pieces: base.pieces.iter().map(|p| Polynomial::zero(p.origin)).collect(),
                }
            }
        }
    }

    /// Right-continuous `f^(order)(x)`.
    pub fn eval_derivative(&self, order: usize, x: f64) -> f64 {
        self.derivatives.get(order).map_or(0.0, |d| d.eval(x))
    }

    /// The Stieltjes measure `d f^(order)`.
    pub fn stieltjes_measure(&self, order: usize) -> StieltjesMeasure {
        let g = self.derivative_pw(order);
        StieltjesMeasure { atoms: g.jumps(), density: g.derivative() }
    }

    /// Tanaka class for order p: `C^(p-2)` with a right-continuous BV `f^(p-1)`.
    pub fn check_tanaka_class(&self, p: u32) -> Result<()> {
        check_order(p)?;
        if self.smoothness < p as i32 - 2 {
            return Err(Error::OutsideClass(format!(
                "{} is C^{} but order {p} needs C^{}",
                self.label,
                self.smoothness,
                p - 2
            )));
        }
        Ok(())
    }

    /// True when `f` is a single polynomial of degree at most `degree`.
    pub fn is_polynomial_of_degree(&self, degree: usize) -> bool {
        let base = &self.derivatives[0];
        self.stieltjes_measure(degree).is_zero() && base.pieces.iter().all(|p| p.degree() <= degree)
    }
}

/// Atoms plus a piecewise-polynomial density.
#[derive(Debug, Clone, PartialEq)]
pub struct StieltjesMeasure {
    pub atoms: Vec<(f64, f64)>,
    pub density: PiecewisePolynomial,
}

impl StieltjesMeasure {
    pub fn zero() -> Self {
        StieltjesMeasure {
            atoms: Vec::new(),
            density: PiecewisePolynomial::polynomial(Polynomial::zero(0.0)),
        }
    }

    pub fn atom(location: f64, mass: f64) -> Self {
        StieltjesMeasure { atoms: vec![(location, mass)], ..StieltjesMeasure::zero() }
    }

    pub fn density(density: PiecewisePolynomial) -> Self {
        StieltjesMeasure { atoms: Vec::new(), density }
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.density.is_zero()
    }
}

/// A named member of the built-in Tanaka-class families, as written in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

/// Builds a named test function for order `p`:
/// `pos_part_pow(a)` = `((x-a)^+)^(p-1)`, `neg_part_pow(a)` = `((x-a)^-)^(p-1)`,
/// `abs_pow(a)` = `|x-a|^(p-1)`, `poly(c0, c1, ...)` and `x_pow_pm1` = `x^(p-1)`.
pub fn tanaka_class(name: &str, params: &[f64], p: u32) -> Result<TestFunction> {
    check_order(p)?;
    let d = (p - 1) as usize;
    let one_param = || -> Result<f64> {
        match params {
            [a] if a.is_finite() => Ok(*a),
            _ => Err(Error::parameter("params", format!("{name} takes one finite level"))),
        }
    };
    let kink = |a: f64, left: f64, right: f64, label: String| {
        let pw = PiecewisePolynomial::new(
            vec![a],
            vec![Polynomial::monomial(a, d, left), Polynomial::monomial(a, d, right)],
        )?;
        TestFunction::new(pw, p as i32 - 2, label)
    };
    // (a - x)^(p-1) = -(x - a)^(p-1) because p - 1 is odd.
    match name {
        "pos_part_pow" => {
            let a = one_param()?;
            kink(a, 0.0, 1.0, format!("pos_part_pow({a})"))
        }
        "neg_part_pow" => {
            let a = one_param()?;
            kink(a, -1.0, 0.0, format!("neg_part_pow({a})"))
        }
        "abs_pow" => {
            let a = one_param()?;
            kink(a, -1.0, 1.0, format!("abs_pow({a})"))
        }
        "poly" => {
            if params.is_empty() || params.iter().any(|c| !c.is_finite()) {
                return Err(Error::parameter("params", "poly needs finite coefficients"));
            }
            Ok(TestFunction::polynomial(params.to_vec(), format!("poly{params:?}")))
        }
        "x_pow_pm1" => {
            Ok(TestFunction::polynomial(Polynomial::monomial(0.0, d, 1.0).coeffs, format!("x^{d}")))
        }
        other => Err(Error::UnknownTestFunction(other.to_string())),
    }
}

/// Mass of the atom of `d f^(p-1)` for the kink families, used by tests and reports.
pub fn kink_atom_mass(name: &str, p: u32) -> Option<f64> {
    let base = factorial(p - 1);
    match name {
        "pos_part_pow" | "neg_part_pow" => Some(base),
        "abs_pow" => Some(2.0 * base),
        _ => None,
    }
}
