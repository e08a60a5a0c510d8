//! Cumulative p-th variation along each partition level.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{check_order, Error, Result};
use crate::partitions::{accumulate, normalize_checkpoints, PartitionHierarchy};
use crate::paths::SampledPath;

#[derive(Debug, Clone, PartialEq)]
pub struct VariationCurve {
    pub p: u32,
    /// Grid indices.
    pub checkpoints: Vec<usize>,
    pub times: Vec<f64>,
    /// `per_level[n][c]`: variation of level `n` up to checkpoint `c`.
    pub per_level: Vec<Vec<f64>>,
}

/// `sum |dS|^exponent` over cells with left endpoint `<= t`, for any positive exponent.
pub fn power_variation(
    path: &SampledPath,
    level: &[usize],
    exponent: u32,
    checkpoints: &[usize],
) -> Vec<f64> {
    let v = path.values();
    accumulate(level, checkpoints, |l, r| (v[r] - v[l]).abs().powi(exponent as i32))
}

/// p-th variation of every level at the given checkpoints (grid indices).
pub fn pth_variation(
    path: &SampledPath,
    hierarchy: &PartitionHierarchy,
    p: u32,
    checkpoints: &[usize],
) -> Result<VariationCurve> {
    check_order(p)?;
    let checkpoints = normalize_checkpoints(path, checkpoints)?;
    let per_level = hierarchy
        .levels()
        .par_iter()
        .map(|level| power_variation(path, level, p, &checkpoints))
        .collect();
    let times = checkpoints.iter().map(|&c| path.time(c)).collect();
    Ok(VariationCurve { p, checkpoints, times, per_level })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationConvergence {
    /// `sup_t |V_{n+1}(t) - V_n(t)|` for consecutive levels.
    pub sup_differences: Vec<f64>,
    /// Whether the sup-differences never increase.
    pub monotone: bool,
}

pub fn variation_convergence_report(curve: &VariationCurve) -> Result<VariationConvergence> {
    if curve.per_level.len() < 2 {
        return Err(Error::parameter("levels", "convergence needs at least two levels"));
    }
    let sup_differences: Vec<f64> = curve
        .per_level
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let monotone = sup_differences.windows(2).all(|w| w[1] <= w[0]);
    Ok(VariationConvergence { sup_differences, monotone })
}

/// CSV with columns `level,t,value`.
pub fn write_variation_csv<W: Write>(curve: &VariationCurve, out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "level,t,value")?;
    for (n, row) in curve.per_level.iter().enumerate() {
        for (t, v) in curve.times.iter().zip(row) {
            writeln!(w, "{n},{t},{v}")?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::dyadic_hierarchy;
    use crate::paths::{generate, PathKind, PathSpec};

    #[test]
    fn identity_path_quadratic_variation_halves() {
        let p = generate(&PathSpec::new(PathKind::Linear { slope: 1.0 }, 10)).unwrap();
        let h = dyadic_hierarchy(&p, 10).unwrap();
        let c = pth_variation(&p, &h, 2, &[p.last_index()]).unwrap();
        for n in 0..=10 {
            assert_eq!(c.per_level[n][0], (-(n as f64)).exp2());
        }
        let r = variation_convergence_report(&c).unwrap();
        for (n, d) in r.sup_differences.iter().enumerate() {
            assert_eq!(*d, (-(n as f64 + 1.0)).exp2());
        }
        assert!(r.monotone);
    }

    #[test]
    fn first_checkpoint_sees_only_the_first_increment() {
        let p = generate(&PathSpec::new(PathKind::Linear { slope: 2.0 }, 3)).unwrap();
        let h = dyadic_hierarchy(&p, 1).unwrap();
        let c = pth_variation(&p, &h, 2, &[0, 3, 8]).unwrap();
        assert_eq!(c.per_level[1], vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn odd_order_is_rejected() {
        let p = generate(&PathSpec::new(PathKind::Bm, 3)).unwrap();
        let h = dyadic_hierarchy(&p, 2).unwrap();
        for bad in [0, 1, 3] {
            assert!(pth_variation(&p, &h, bad, &[8]).is_err());
        }
    }

    #[test]
    fn constant_path_rows_vanish() {
        let p = generate(&PathSpec::new(PathKind::Constant { value: 3.0 }, 6)).unwrap();
        let h = dyadic_hierarchy(&p, 6).unwrap();
        let c = pth_variation(&p, &h, 4, &[10, 64]).unwrap();
        assert!(c.per_level.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_schema() {
        let p = generate(&PathSpec::new(PathKind::Linear { slope: 1.0 }, 2)).unwrap();
        let c = pth_variation(&p, &dyadic_hierarchy(&p, 1).unwrap(), 2, &[4]).unwrap();
        let mut buf = Vec::new();
        write_variation_csv(&c, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "level,t,value\n0,1,1\n1,1,0.5\n");
    }
}
