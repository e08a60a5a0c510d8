//! Ranked paths, collision local times, and the integration-along-ranks decomposition.

use std::io::Write;

use crate::error::{check_order, Error, Result};
use crate::integrate::TestFunction;
use crate::localtime::local_time_at;
use crate::partitions::{accumulate, normalize_checkpoints, PartitionHierarchy};
use crate::paths::SampledPath;
use crate::stats::factorial;
use crate::tanaka::{
    Exactness, IdentityReport, IdentityRow, ResidualKind, EXACT_THRESHOLD, LIMIT_TOLERANCE,
};

/// `m` paths on a shared grid with their descending order statistics. Ranks are 1-based,
/// path indices 0-based.
#[derive(Debug, Clone)]
pub struct RankSystem {
    paths: Vec<SampledPath>,
    ranked: Vec<SampledPath>,
    /// `counts[k-1][t] = N_t(k)`, the number of paths at rank `k` at grid time `t`.
    counts: Vec<Vec<u32>>,
}

/// Sorts the paths in descending order at every grid time; ties use exact equality.
pub fn build_rank_system(paths: &[SampledPath]) -> Result<RankSystem> {
    let first = paths.first().ok_or_else(|| Error::parameter("paths", "need at least one"))?;
    if let Some(bad) = paths.iter().find(|s| !s.same_grid(first)) {
        return Err(Error::MismatchedGrids(format!(
            "(T={}, n_max={}) vs (T={}, n_max={})",
            first.horizon(),
            first.n_max(),
            bad.horizon(),
            bad.n_max()
        )));
    }
    let m = paths.len();
    let len = first.len();
    let mut ranked = vec![Vec::with_capacity(len); m];
    let mut counts = vec![Vec::with_capacity(len); m];
    let mut column = vec![0.0; m];
    for t in 0..len {
        for (c, s) in column.iter_mut().zip(paths) {
            *c = s.values()[t];
        }
        let mut sorted = column.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for (k, &value) in sorted.iter().enumerate() {
            ranked[k].push(value);
            counts[k].push(column.iter().filter(|&&c| c == value).count() as u32);
        }
    }
    let ranked = ranked
        .into_iter()
        .map(|values| SampledPath::new(first.horizon(), first.n_max(), values))
        .collect::<Result<_>>()?;
    Ok(RankSystem { paths: paths.to_vec(), ranked, counts })
}

impl RankSystem {
    pub fn m(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[SampledPath] {
        &self.paths
    }

    /// `X_(k)` for `k` in `1..=m`.
    pub fn ranked(&self, k: usize) -> &SampledPath {
        &self.ranked[k - 1]
    }

    /// `N_t(k)`.
    pub fn count(&self, k: usize, t: usize) -> u32 {
        self.counts[k - 1][t]
    }

    /// `S_t(k)`: indices of the paths sitting at rank `k` at grid time `t`.
    pub fn rank_set(&self, k: usize, t: usize) -> Vec<usize> {
        let value = self.ranked(k).values()[t];
        (0..self.m()).filter(|&i| self.paths[i].values()[t] == value).collect()
    }

    /// `X_(k) - X_(h)`.
    pub fn ranked_gap(&self, k: usize, h: usize) -> Result<SampledPath> {
        self.ranked(k).zip_with(self.ranked(h), |a, b| a - b)
    }

    /// Checks descending order, `sum_i 1{X_i = X_(k)} / N(k) = 1`, and that ranking keeps
    /// the multiset of values, at every grid time.
    pub fn check_invariants(&self) -> bool {
        let m = self.m();
        (0..self.paths[0].len()).all(|t| {
            let ranked: Vec<f64> = (1..=m).map(|k| self.ranked(k).values()[t]).collect();
            let mut original: Vec<f64> = self.paths.iter().map(|s| s.values()[t]).collect();
            original.sort_by(|a, b| b.total_cmp(a));
            let sorted = ranked.windows(2).all(|w| w[0] >= w[1]);
            let normalized = (1..=m).all(|k| {
                let n = self.count(k, t) as f64;
                let total: f64 = self.rank_set(k, t).iter().map(|_| 1.0 / n).sum();
                (total - 1.0).abs() <= 1e-12
            });
            sorted && normalized && ranked == original
        })
    }
}

fn check_rank(system: &RankSystem, k: usize) -> Result<()> {
    if k == 0 || k > system.m() {
        return Err(Error::parameter("k", format!("rank must lie in 1..={}", system.m())));
    }
    Ok(())
}

/// Right-limit discrete local time at 0 of the non-negative gap `X_(k) - X_(h)`, per level
/// and checkpoint. The half-open convention would make it vanish identically.
pub fn collision_local_time(
    system: &RankSystem,
    k: usize,
    h: usize,
    hierarchy: &PartitionHierarchy,
    p: u32,
    checkpoints: &[usize],
) -> Result<Vec<Vec<f64>>> {
    check_order(p)?;
    if !(1 <= k && k < h && h <= system.m()) {
        return Err(Error::parameter("k, h", format!("need 1 <= k < h <= {}", system.m())));
    }
    let gap = system.ranked_gap(k, h)?;
    let checkpoints = normalize_checkpoints(&gap, checkpoints)?;
    let v = gap.values();
    let e = p as i32 - 1;
    Ok(hierarchy
        .levels()
        .iter()
        .map(|level| {
            accumulate(level, &checkpoints, |l, r| {
                let (lo, hi) = (v[l].min(v[r]), v[l].max(v[r]));
                if lo <= 0.0 && 0.0 < hi {
                    v[r].abs().powi(e)
                } else {
                    0.0
                }
            })
        })
        .collect())
}

/// `sum_k L^{X_(k)}(0)` against `sum_i L^{X_i}(0)` per level at the horizon; the residual
/// is the gap relative to the second sum.
pub fn rank_sum_identity(
    system: &RankSystem,
    hierarchy: &PartitionHierarchy,
    p: u32,
) -> Result<IdentityReport> {
    check_order(p)?;
    let t = system.paths[0].last_index();
    let rows = hierarchy
        .levels()
        .iter()
        .enumerate()
        .map(|(n, level)| {
            let lhs: f64 = system.ranked.iter().map(|s| local_time_at(s, level, p, 0.0, t)).sum();
            let rhs: f64 = system.paths.iter().map(|s| local_time_at(s, level, p, 0.0, t)).sum();
            let gap = (lhs - rhs).abs();
            let residual = if gap == 0.0 { 0.0 } else { gap / rhs.abs().max(f64::MIN_POSITIVE) };
            IdentityRow { level: n, lhs, rhs, residual }
        })
        .collect();
    Ok(IdentityReport {
        name: "rank_sum".into(),
        exactness: Exactness::LimitOnly,
        residual_kind: ResidualKind::Relative,
        threshold: LIMIT_TOLERANCE,
        rows,
    })
}

/// The four partial sums of the compensated Riemann sum of `X_(k)` at one level and
/// checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionRow {
    pub k: usize,
    pub level: usize,
    pub t: usize,
    /// Compensated sum of `f` along `X_(k)`.
    pub a: f64,
    /// Rank-occupation weighted compensated sums along the original paths.
    pub b: f64,
    /// Cross terms between path increments and rank gaps.
    pub c: f64,
    /// Collision sum, equal to `d_plus - d_minus`.
    pub d: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    /// `|A - (B + C + D)|` over the sum of the magnitudes of all cell contributions.
    pub residual: f64,
}

impl DecompositionRow {
    pub fn passed(&self) -> bool {
        self.residual <= EXACT_THRESHOLD
    }
}

/// Per-cell contributions: `[A, B, C, D, D+, D-, C_simplified]`.
type CellTerms = [f64; 7];

/// Running per-cell sums along rank `k` and the running sum of magnitudes of `A..D`, read
/// at each checkpoint.
fn scan_rank_cells(
    system: &RankSystem,
    k: usize,
    level: &[usize],
    p: u32,
    f: &TestFunction,
    checkpoints: &[usize],
) -> Vec<(CellTerms, f64)> {
    let order = p as usize - 1;
    let xk = system.ranked(k).values();
    let inv_fact: Vec<f64> = (0..=order).map(|r| 1.0 / factorial(r as u32)).collect();
    let mut derivs = vec![0.0; order + 1];
    let mut sums = [0.0; 7];
    let mut scale = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for w in level.windows(2) {
        let (l, r) = (w[0], w[1]);
        while next < checkpoints.len() && checkpoints[next] < l {
            out.push((sums, scale));
            next += 1;
        }
        if next == checkpoints.len() {
            break;
        }
        let x = xk[l];
        for (q, d) in derivs.iter_mut().enumerate().skip(1) {
            *d = f.eval_derivative(q, x);
        }
        let dk = xk[r] - x;
        let a: f64 = (1..=order).map(|q| derivs[q] * inv_fact[q] * dk.powi(q as i32)).sum();
        let mut cell = [a, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let weight = 1.0 / system.count(k, l) as f64;
        for s in &system.paths {
            let xi = s.values();
            if xi[l] != x {
                continue;
            }
            let u = xi[r] - xi[l];
            let v = xk[r] - xi[r];
            cell[1] += weight
                * (1..=order).map(|q| derivs[q] * inv_fact[q] * u.powi(q as i32)).sum::<f64>();
            let mut cross = 0.0;
            let mut simplified = 0.0;
            for ell in 1..order {
                let v_ell = v.powi(ell as i32);
                for q in ell..=order {
                    cross += derivs[q]
                        * inv_fact[ell]
                        * inv_fact[q - ell]
                        * u.powi((q - ell) as i32)
                        * v_ell;
                }
                simplified += derivs[ell] * inv_fact[ell] * v_ell;
            }
            cell[2] += weight * cross;
            let top = weight * derivs[order] * inv_fact[order];
            cell[3] += top * v.powi(order as i32);
            cell[4] += top * v.max(0.0).powi(order as i32);
            cell[5] += top * (-v).max(0.0).powi(order as i32);
            cell[6] += weight * simplified;
        }
        for (acc, term) in sums.iter_mut().zip(cell) {
            *acc += term;
        }
        scale += cell[..4].iter().map(|c| c.abs()).sum::<f64>();
    }
    out.resize(checkpoints.len(), (sums, scale));
    out
}

/// Splits the compensated sum of `f` along `X_(k)` into the occupation-weighted sums `B`,
/// the cross terms `C` and the collision sum `D` on every level and checkpoint. The split
/// is an exact rearrangement: `A = B + C + D`.
pub fn rank_decomposition(
    system: &RankSystem,
    k: usize,
    hierarchy: &PartitionHierarchy,
    p: u32,
    f: &TestFunction,
    checkpoints: &[usize],
) -> Result<Vec<DecompositionRow>> {
    check_rank(system, k)?;
    f.check_tanaka_class(p)?;
    let checkpoints = normalize_checkpoints(&system.paths[0], checkpoints)?;
    let mut rows = Vec::with_capacity(hierarchy.len() * checkpoints.len());
    for (n, level) in hierarchy.levels().iter().enumerate() {
        let scans = scan_rank_cells(system, k, level, p, f, &checkpoints);
        for (&t, (s, scale)) in checkpoints.iter().zip(scans) {
            let gap = (s[0] - (s[1] + s[2] + s[3])).abs();
            let residual = if gap == 0.0 { 0.0 } else { gap / scale.max(f64::MIN_POSITIVE) };
            rows.push(DecompositionRow {
                k,
                level: n,
                t,
                a: s[0],
                b: s[1],
                c: s[2],
                d: s[3],
                d_plus: s[4],
                d_minus: s[5],
                residual,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTermRow {
    pub k: usize,
    pub level: usize,
    pub t: usize,
    /// Cross-term sum with only `f^(l)(X_i(t_j)) / l!` kept.
    pub simplified: f64,
    /// Full cross-term sum `C` of [`rank_decomposition`].
    pub full: f64,
    pub gap: f64,
}

/// Simplified cross-term sum, valid when `f^(p)` vanishes, against the full `C`.
pub fn simplified_cross_term(
    system: &RankSystem,
    k: usize,
    hierarchy: &PartitionHierarchy,
    p: u32,
    f: &TestFunction,
    checkpoints: &[usize],
) -> Result<Vec<CrossTermRow>> {
    check_rank(system, k)?;
    check_order(p)?;
    if !f.is_polynomial_of_degree(p as usize - 1) {
        return Err(Error::OutsideClass(format!(
            "{} must be a polynomial of degree at most {}",
            f.label(),
            p - 1
        )));
    }
    let checkpoints = normalize_checkpoints(&system.paths[0], checkpoints)?;
    let mut rows = Vec::with_capacity(hierarchy.len() * checkpoints.len());
    for (n, level) in hierarchy.levels().iter().enumerate() {
        let scans = scan_rank_cells(system, k, level, p, f, &checkpoints);
        for (&t, (s, _)) in checkpoints.iter().zip(scans) {
            rows.push(CrossTermRow {
                k,
                level: n,
                t,
                simplified: s[6],
                full: s[2],
                gap: (s[6] - s[2]).abs(),
            });
        }
    }
    Ok(rows)
}

/// CSV with columns `k,level,t,A,B,C,D,residual`; `t` is a time.
pub fn write_ranks_csv<W: Write>(
    path: &SampledPath,
    rows: &[DecompositionRow],
    out: W,
) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "k,level,t,A,B,C,D,residual")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.k,
            r.level,
            path.time(r.t),
            r.a,
            r.b,
            r.c,
            r.d,
            r.residual
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::tanaka_class;
    use crate::partitions::dyadic_hierarchy;
    use crate::paths::{generate, PathKind, PathSpec};

    fn path(n_max: u32, values: Vec<f64>) -> SampledPath {
        SampledPath::new(1.0, n_max, values).unwrap()
    }

    fn crossing(n_max: u32) -> RankSystem {
        let up = generate(&PathSpec::new(PathKind::Linear { slope: 1.0 }, n_max)).unwrap();
        let down = up.map(|v| 1.0 - v).unwrap();
        build_rank_system(&[up, down]).unwrap()
    }

    #[test]
    fn single_path_is_its_own_rank() {
        let s = path(2, vec![0.0, 1.0, -1.0, 0.5, 0.2]);
        let sys = build_rank_system(std::slice::from_ref(&s)).unwrap();
        assert_eq!(sys.ranked(1).values(), s.values());
        assert!(sys.check_invariants());
    }

    #[test]
    fn two_paths_sorted_by_hand() {
        // the two hand-sorted grid times sit at indices 0 and 2, with a tie in between
        let sys = build_rank_system(&[path(1, vec![1.0, 2.0, 3.0]), path(1, vec![2.0, 2.0, 2.0])])
            .unwrap();
        assert_eq!(sys.ranked(1).values(), &[2.0, 2.0, 3.0]);
        assert_eq!(sys.ranked(2).values(), &[1.0, 2.0, 2.0]);
        assert_eq!(sys.rank_set(1, 0), vec![1]);
        assert_eq!(sys.count(1, 1), 2);
        assert!(sys.check_invariants());
    }

    #[test]
    fn total_tie_groups_both_paths() {
        let s = path(1, vec![0.0, 0.5, 1.0]);
        let sys = build_rank_system(&[s.clone(), s]).unwrap();
        for t in 0..3 {
            assert_eq!((sys.count(1, t), sys.count(2, t)), (2, 2));
            assert_eq!(sys.rank_set(2, t), vec![0, 1]);
        }
        assert!(sys.check_invariants());
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let err = build_rank_system(&[path(1, vec![0.0; 3]), path(2, vec![0.0; 5])]);
        assert!(matches!(err, Err(Error::MismatchedGrids(_))));
        assert!(build_rank_system(&[]).is_err());
    }

    #[test]
    fn ranked_gap_signs() {
        let paths: Vec<_> = (0..3)
            .map(|i| generate(&PathSpec::new(PathKind::Fbm { hurst: 0.5 }, 8).seed(i)).unwrap())
            .collect();
        let sys = build_rank_system(&paths).unwrap();
        for k in 1..=3 {
            for h in 1..=3 {
                let gap = sys.ranked_gap(k, h).unwrap();
                for &g in gap.values() {
                    if h > k {
                        assert!(g >= 0.0 && g.max(0.0) == g);
                    } else {
                        assert_eq!(g.max(0.0), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn crossing_lines_collision_local_time() {
        let sys = crossing(4);
        let h = dyadic_hierarchy(sys.ranked(1), 4).unwrap();
        let curves = collision_local_time(&sys, 1, 2, &h, 2, &[16]).unwrap();
        for (n, level) in h.levels().iter().enumerate() {
            // gap |2t - 1| sampled on the level; brute-force cell sum
            let g = |i: usize| (2.0 * i as f64 / 16.0 - 1.0f64).abs();
            let oracle: f64 = level
                .windows(2)
                .filter(|w| g(w[0]).min(g(w[1])) <= 0.0 && 0.0 < g(w[0]).max(g(w[1])))
                .map(|w| g(w[1]))
                .sum();
            assert!((curves[n][0] - oracle).abs() < 1e-15, "level {n}");
        }
        // the gap touches 0 only at t = 1/2, reached by every level from 1 on
        assert_eq!(curves[0][0], 0.0);
        assert!((curves[4][0] - 0.125).abs() < 1e-15);
        assert!(collision_local_time(&sys, 2, 1, &h, 2, &[16]).is_err());
    }

    #[test]
    fn separated_paths_have_no_collisions() {
        let a = path(2, vec![0.0, 0.1, 0.2, 0.1, 0.0]);
        let b = a.map(|v| v + 5.0).unwrap();
        let sys = build_rank_system(&[a, b]).unwrap();
        let h = dyadic_hierarchy(sys.ranked(1), 2).unwrap();
        for row in collision_local_time(&sys, 1, 2, &h, 4, &[1, 4]).unwrap() {
            assert_eq!(row, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn single_path_decomposition() {
        let s = generate(&PathSpec::new(PathKind::Fbm { hurst: 0.25 }, 8).seed(9)).unwrap();
        let sys = build_rank_system(&[s]).unwrap();
        let h = dyadic_hierarchy(sys.ranked(1), 8).unwrap();
        let f = tanaka_class("abs_pow", &[0.1], 4).unwrap();
        for row in rank_decomposition(&sys, 1, &h, 4, &f, &[128, 256]).unwrap() {
            assert_eq!(row.a, row.b);
            assert_eq!((row.c, row.d), (0.0, 0.0));
        }
        let rs = rank_sum_identity(&sys, &h, 4).unwrap();
        assert!(rs.rows.iter().all(|r| r.residual == 0.0));
    }

    #[test]
    fn crossing_lines_decomposition_brute_force() {
        let sys = crossing(3);
        let h = dyadic_hierarchy(sys.ranked(1), 3).unwrap();
        let f = TestFunction::polynomial(vec![0.0, 1.0], "x");
        let rows = rank_decomposition(&sys, 1, &h, 2, &f, &[8]).unwrap();
        for (row, level) in rows.iter().zip(h.levels()) {
            let (x1, x2) = (sys.paths()[0].values(), sys.paths()[1].values());
            let top = sys.ranked(1).values();
            let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
            for w in level.windows(2) {
                let (l, r) = (w[0], w[1]);
                a += top[r] - top[l];
                let members: Vec<&[f64]> =
                    [x1, x2].into_iter().filter(|x| x[l] == top[l]).collect();
                for x in &members {
                    b += (x[r] - x[l]) / members.len() as f64;
                    d += (top[r] - x[r]) / members.len() as f64;
                }
            }
            assert!((row.a - a).abs() < 1e-15 && (row.b - b).abs() < 1e-15);
            assert!((row.d - d).abs() < 1e-15);
            assert_eq!(row.c, 0.0);
            assert!(row.passed());
        }
    }

    #[test]
    fn decomposition_is_exact_for_fbm_systems() {
        let paths: Vec<_> = (0..3)
            .map(|i| generate(&PathSpec::new(PathKind::Fbm { hurst: 0.25 }, 9).seed(i)).unwrap())
            .collect();
        let sys = build_rank_system(&paths).unwrap();
        let h = dyadic_hierarchy(sys.ranked(1), 9).unwrap();
        let f = TestFunction::polynomial(vec![0.0, 0.0, 0.0, 1.0], "x^3");
        for k in 1..=3 {
            for row in rank_decomposition(&sys, k, &h, 4, &f, &[100, 512]).unwrap() {
                assert!(row.passed(), "{row:?}");
                assert!((row.d - (row.d_plus - row.d_minus)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simplified_cross_term_edge_cases() {
        let sys = crossing(3);
        let h = dyadic_hierarchy(sys.ranked(1), 3).unwrap();
        let x = TestFunction::polynomial(vec![0.0, 1.0], "x");
        for row in simplified_cross_term(&sys, 1, &h, 2, &x, &[8]).unwrap() {
            assert_eq!((row.simplified, row.full, row.gap), (0.0, 0.0, 0.0));
        }
        let kink = tanaka_class("pos_part_pow", &[0.0], 4).unwrap();
        assert!(matches!(
            simplified_cross_term(&sys, 1, &h, 4, &kink, &[8]),
            Err(Error::OutsideClass(_))
        ));
    }

    #[test]
    fn csv_schema() {
        let sys = crossing(1);
        let h = dyadic_hierarchy(sys.ranked(1), 1).unwrap();
        let f = TestFunction::polynomial(vec![0.0, 1.0], "x");
        let rows = rank_decomposition(&sys, 1, &h, 2, &f, &[2]).unwrap();
        let mut out = Vec::new();
        write_ranks_csv(sys.ranked(1), &rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("k,level,t,A,B,C,D,residual\n1,0,1,"));
        assert_eq!(text.lines().count(), 3);
    }
}
