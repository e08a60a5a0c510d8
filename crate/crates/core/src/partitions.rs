//! Partition hierarchies as index subsets of the path grid.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::paths::SampledPath;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionKind {
    Dyadic,
    /// Level `n` places a point whenever the path has moved `2^-n` since the last one.
    Lebesgue,
}

/// Levels `0..=L` of a refining sequence of partitions. Every level starts at index 0
/// and ends at the last grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionHierarchy {
    levels: Vec<Vec<usize>>,
    nested: bool,
    kind: PartitionKind,
}

impl PartitionHierarchy {
    /// Builds a hierarchy from explicit index arrays, checking the endpoint convention.
    pub fn from_levels(path: &SampledPath, levels: Vec<Vec<usize>>) -> Result<Self> {
        let last = path.last_index();
        for (n, level) in levels.iter().enumerate() {
            let ok = level.len() >= 2
                && level[0] == 0
                && *level.last().unwrap() == last
                && level.windows(2).all(|w| w[0] < w[1]);
            if !ok {
                return Err(Error::parameter(
                    "levels",
                    format!("level {n} must increase strictly from 0 to {last}"),
                ));
            }
        }
        let nested = is_nested(&levels);
        Ok(PartitionHierarchy { levels, nested, kind: PartitionKind::Dyadic })
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> &[usize] {
        &self.levels[n]
    }

    pub fn finest(&self) -> &[usize] {
        self.levels.last().expect("hierarchy has at least one level")
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn nested(&self) -> bool {
        self.nested
    }

    pub fn kind(&self) -> &PartitionKind {
        &self.kind
    }

    /// Keeps only levels `0..=finest`.
    pub fn truncated(&self, finest: usize) -> PartitionHierarchy {
        let levels = self.levels[..=finest.min(self.finest_level())].to_vec();
        PartitionHierarchy { levels, nested: self.nested, kind: self.kind.clone() }
    }
}

fn is_nested(levels: &[Vec<usize>]) -> bool {
    levels.windows(2).all(|w| {
        let (coarse, fine) = (&w[0], &w[1]);
        coarse.iter().all(|i| fine.binary_search(i).is_ok())
    })
}

/// Dyadic levels `0..=levels`: level `n` holds indices `k * 2^(n_max - n)`.
pub fn dyadic_hierarchy(path: &SampledPath, levels: u32) -> Result<PartitionHierarchy> {
    let n_max = path.n_max();
    if levels > n_max {
        return Err(Error::Resolution { requested: levels, available: n_max });
    }
    let levels = (0..=levels)
        .map(|n| {
            let stride = 1usize << (n_max - n);
            (0..=(1usize << n)).map(|k| k * stride).collect()
        })
        .collect();
    Ok(PartitionHierarchy { levels, nested: true, kind: PartitionKind::Dyadic })
}

/// Lebesgue levels `0..=levels`: starting from index 0, the next point is the first grid
/// index at which `|S - S(previous point)| >= 2^-n`. The final index is always appended.
/// Nestedness is checked, not assumed.
pub fn lebesgue_hierarchy(path: &SampledPath, levels: u32) -> Result<PartitionHierarchy> {
    let (lo, hi) = path.range();
    if lo == hi {
        return Err(Error::Precondition("Lebesgue partitions need a non-constant path".into()));
    }
    let values = path.values();
    let last = path.last_index();
    let levels: Vec<Vec<usize>> = (0..=levels)
        .map(|n| {
            let threshold = (-(n as f64)).exp2();
            let mut points = vec![0];
            let mut anchor = values[0];
            for (i, &v) in values.iter().enumerate().skip(1) {
                if (v - anchor).abs() >= threshold {
                    points.push(i);
                    anchor = v;
                }
            }
            if *points.last().unwrap() != last {
                points.push(last);
            }
            points
        })
        .collect();
    let nested = is_nested(&levels);
    Ok(PartitionHierarchy { levels, nested, kind: PartitionKind::Lebesgue })
}

/// Largest range of the samples inside any closed cell of the level.
pub fn oscillation(path: &SampledPath, level: &[usize]) -> f64 {
    let values = path.values();
    level
        .windows(2)
        .map(|w| {
            let cell = &values[w[0]..=w[1]];
            let (lo, hi) = cell
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Number of cells whose left endpoint is at or before grid index `t`.
pub fn cells_through(level: &[usize], t: usize) -> usize {
    let cells = level.len() - 1;
    level[..cells].partition_point(|&i| i <= t)
}

/// Right endpoint of the last cell counted by [`cells_through`]: the index at which the
/// compensated sums up to `t` telescope.
pub fn telescoping_end(level: &[usize], t: usize) -> usize {
    level[cells_through(level, t)]
}

/// Running sums of `term(left, right)` over the cells of a level, read at each checkpoint
/// (cells with left endpoint `<= t` count towards checkpoint `t`). Checkpoints must be
/// sorted.
pub fn accumulate<F>(level: &[usize], checkpoints: &[usize], mut term: F) -> Vec<f64>
where
    F: FnMut(usize, usize) -> f64,
{
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut acc = 0.0;
    let mut next = 0;
    for w in level.windows(2) {
        while next < checkpoints.len() && checkpoints[next] < w[0] {
            out.push(acc);
            next += 1;
        }
        if next == checkpoints.len() {
            break;
        }
        acc += term(w[0], w[1]);
    }
    out.resize(checkpoints.len(), acc);
    out
}

/// Sum and sum of absolute values of `term` over the cells counted at checkpoint `t`.
pub fn sum_through<F>(level: &[usize], t: usize, mut term: F) -> (f64, f64)
where
    F: FnMut(usize, usize) -> f64,
{
    let cells = cells_through(level, t);
    let mut sum = 0.0;
    let mut abs = 0.0;
    for w in level[..=cells].windows(2) {
        let v = term(w[0], w[1]);
        sum += v;
        abs += v.abs();
    }
    (sum, abs)
}

/// Sorted, deduplicated checkpoint indices. Rejects indices beyond the grid.
pub fn normalize_checkpoints(path: &SampledPath, checkpoints: &[usize]) -> Result<Vec<usize>> {
    if let Some(&bad) = checkpoints.iter().find(|&&c| c > path.last_index()) {
        return Err(Error::parameter("checkpoints", format!("index {bad} beyond the grid")));
    }
    let mut cps = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    Ok(cps)
}

/// `count` checkpoints at `T/count, 2T/count, ..., T`, snapped to the grid.
pub fn uniform_checkpoints(path: &SampledPath, count: usize) -> Vec<usize> {
    let count = count.max(1);
    let mut cps: Vec<usize> =
        (1..=count).map(|k| path.index_at(path.horizon() * k as f64 / count as f64)).collect();
    cps.dedup();
    cps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{generate, PathKind, PathSpec};

    fn linear(n_max: u32) -> SampledPath {
        generate(&PathSpec::new(PathKind::Linear { slope: 1.0 }, n_max)).unwrap()
    }

    #[test]
    fn dyadic_levels_match_definition() {
        let h = dyadic_hierarchy(&linear(3), 2).unwrap();
        assert_eq!(h.level(1), &[0, 4, 8]);
        assert_eq!(h.level(2), &[0, 2, 4, 6, 8]);
        assert!(h.nested());
        for n in 0..=2 {
            assert_eq!(h.level(n).len(), (1 << n) + 1);
        }
    }

    #[test]
    fn too_many_levels_is_a_resolution_error() {
        assert!(matches!(
            dyadic_hierarchy(&linear(3), 4),
            Err(Error::Resolution { requested: 4, available: 3 })
        ));
    }

    #[test]
    fn lebesgue_on_identity_path_spaces_points_by_threshold() {
        let p = linear(8);
        let h = lebesgue_hierarchy(&p, 5).unwrap();
        for n in 0..=5usize {
            let stride = 1 << (8 - n);
            let expected: Vec<usize> = (0..=(1 << n)).map(|k| k * stride).collect();
            assert_eq!(h.level(n), expected.as_slice(), "level {n}");
        }
        assert!(h.nested());
    }

    #[test]
    fn lebesgue_rejects_constant_path() {
        let p = generate(&PathSpec::new(PathKind::Constant { value: 1.0 }, 3)).unwrap();
        assert!(matches!(lebesgue_hierarchy(&p, 2), Err(Error::Precondition(_))));
    }

    #[test]
    fn oscillation_examples() {
        let flat = generate(&PathSpec::new(PathKind::Constant { value: 1.0 }, 4)).unwrap();
        assert_eq!(oscillation(&flat, dyadic_hierarchy(&flat, 3).unwrap().level(3)), 0.0);
        let p = linear(6);
        let h = dyadic_hierarchy(&p, 6).unwrap();
        for n in 0..=6 {
            assert_eq!(oscillation(&p, h.level(n)), (-(n as f64)).exp2());
        }
        let tri =
            generate(&PathSpec::new(PathKind::Triangle { peak_time: 0.5, peak_value: 1.0 }, 4))
                .unwrap();
        assert_eq!(oscillation(&tri, dyadic_hierarchy(&tri, 0).unwrap().level(0)), 1.0);
    }

    #[test]
    fn accumulate_uses_left_endpoint_attribution() {
        let level = [0, 2, 4, 6, 8];
        let sums = accumulate(&level, &[0, 1, 2, 5, 8], |l, _| l as f64 + 1.0);
        // cells start at 0,2,4,6 with terms 1,3,5,7
        assert_eq!(sums, vec![1.0, 1.0, 4.0, 9.0, 16.0]);
        assert_eq!(cells_through(&level, 0), 1);
        assert_eq!(cells_through(&level, 8), 4);
        assert_eq!(telescoping_end(&level, 3), 4);
        assert_eq!(telescoping_end(&level, 8), 8);
        assert_eq!(sum_through(&level, 5, |l, _| l as f64 + 1.0), (9.0, 9.0));
    }
}
