//! Seeded replication of a config: per-replicate CSVs and a JSON summary.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pathwise::integrate::{modified_follmer_integral, write_follmer_csv, DEFAULT_SCHEDULE};
use pathwise::localtime::write_local_time_csv;
use pathwise::partitions::uniform_checkpoints;
use pathwise::paths::generate_stream;
use pathwise::ranks::{rank_decomposition, rank_sum_identity, write_ranks_csv};
use pathwise::tanaka::{
    finite_n_report, identity_suite, occupation_check, tanaka_meyer_identity, write_identity_csv,
};
use pathwise::variation::write_variation_csv;
use pathwise::{
    build_rank_system, discrete_local_time, dyadic_hierarchy, lebesgue_hierarchy, pth_variation,
    stats, tanaka_class, Exactness, IdentityReport, PartitionHierarchy, SampledPath, SpaceGrid,
    TestFunction,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, PartitionChoice};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "PATHWISE_THREADS";

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub replicates: Vec<ReplicateSummary>,
    /// Cross-replicate statistics of every limit-class identity.
    pub limit_trends: Vec<LimitTrend>,
    pub exact_failures: usize,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.exact_failures == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSummary {
    pub seed: u64,
    pub identities: Vec<IdentityOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityOutcome {
    pub name: String,
    pub class: &'static str,
    pub passed: bool,
    pub finest_residual: f64,
    pub max_residual: f64,
    /// Least-squares slope of `log2(residual)` against level; `None` with fewer than two
    /// positive residuals.
    pub log2_slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitTrend {
    pub name: String,
    pub replicates: usize,
    pub pass_rate: f64,
    pub median_finest_residual: f64,
    pub median_log2_slope: Option<f64>,
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn log2_slope(report: &IdentityReport) -> Option<f64> {
    let points: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.residual > 0.0 && r.residual.is_finite())
        .map(|r| (r.level as f64, r.residual.log2()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl IdentityOutcome {
    fn from_report(report: &IdentityReport) -> Self {
        IdentityOutcome {
            name: report.name.clone(),
            class: report.exactness.label(),
            passed: report.passed(),
            finest_residual: report.finest().map_or(f64::NAN, |r| r.residual),
            max_residual: report.max_residual(),
            log2_slope: log2_slope(report),
        }
    }
}

/// Test functions of a config, or `pos_part_pow(0)` and `x^(p-1)` when none are listed.
pub fn test_functions(config: &ExperimentConfig) -> Result<Vec<TestFunction>> {
    let p = config.analysis.p;
    if config.test_functions.is_empty() {
        return Ok(vec![
            tanaka_class("pos_part_pow", &[0.0], p)?,
            tanaka_class("x_pow_pm1", &[], p)?,
        ]);
    }
    config.test_functions.iter().map(|s| Ok(tanaka_class(&s.name, &s.params, p)?)).collect()
}

/// The smallest float `>= a` that is not a sample of the path; the Tanaka–Meyer identity
/// is exact only away from such ties.
pub fn off_sample_level(path: &SampledPath, a: f64) -> f64 {
    let mut a = a;
    while path.values().contains(&a) {
        a = a.next_up();
    }
    a
}

pub fn hierarchy(
    path: &SampledPath,
    choice: PartitionChoice,
    levels: u32,
) -> Result<PartitionHierarchy> {
    Ok(match choice {
        PartitionChoice::Dyadic => dyadic_hierarchy(path, levels)?,
        PartitionChoice::Lebesgue => lebesgue_hierarchy(path, levels)?,
    })
}

fn create(file: &Path) -> Result<File> {
    File::create(file).with_context(|| format!("cannot create {}", file.display()))
}

fn replicate(config: &ExperimentConfig, r: u32, out: &Path) -> Result<ReplicateSummary> {
    let seed = config.seeds.base + u64::from(r);
    let a = &config.analysis;
    let ids = &config.identities;
    let dir = out.join(format!("seed_{seed}"));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let paths = config
        .paths
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut spec = spec.clone();
            spec.seed = spec.seed.wrapping_add(seed);
            Ok(generate_stream(&spec, i as u64)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let functions = test_functions(config)?;
    let mut reports = Vec::new();
    let mut extra = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let h = hierarchy(path, a.partition, a.levels)?;
        let cps = uniform_checkpoints(path, a.checkpoints);
        let grid = SpaceGrid::covering(path, config.grid.cells)?;
        let pdir = dir.join(format!("path_{i}"));
        std::fs::create_dir_all(&pdir)?;
        write_variation_csv(
            &pth_variation(path, &h, a.p, &cps)?,
            create(&pdir.join("variation.csv"))?,
        )?;
        let field = discrete_local_time(path, &h, a.p, &grid, &cps)?;
        write_local_time_csv(&field, create(&pdir.join("local_time.csv"))?)?;
        drop(field);
        let t = path.last_index();
        let prefix = |mut report: IdentityReport| {
            report.name = format!("path{i}/{}", report.name);
            report
        };
        if ids.finite_n {
            for f in &functions {
                reports.push(prefix(finite_n_report(path, &h, a.p, f, t)?));
            }
        }
        for &level in &ids.tanaka_meyer {
            let level = off_sample_level(path, level);
            reports.push(prefix(tanaka_meyer_identity(path, &h, a.p, level, t)?));
        }
        if ids.occupation {
            for f in &functions {
                reports.push(prefix(occupation_check(path, a.p, f, &grid, t)?));
            }
        }
        if ids.follmer {
            let report = modified_follmer_integral(
                path,
                &h,
                a.p,
                &functions[0],
                t,
                &DEFAULT_SCHEDULE,
                &grid,
            )?;
            write_follmer_csv(&report, create(&pdir.join("follmer.csv"))?)?;
        }
    }
    let h0 = hierarchy(&paths[0], a.partition, a.levels)?;
    if ids.suite && paths.len() >= 2 {
        reports.extend(identity_suite(&paths[0], &paths[1], &h0, a.p)?);
    }
    if ids.ranks {
        let system = build_rank_system(&paths)?;
        let cps = uniform_checkpoints(&paths[0], a.checkpoints);
        let mut rows = Vec::new();
        for k in 1..=system.m() {
            let decomposition = rank_decomposition(&system, k, &h0, a.p, &functions[0], &cps)?;
            extra.push(IdentityOutcome {
                name: format!("rank_decomposition/k={k}"),
                class: Exactness::ExactPerLevel.label(),
                passed: decomposition.iter().all(|r| r.passed()),
                finest_residual: decomposition.last().map_or(f64::NAN, |r| r.residual),
                max_residual: decomposition.iter().map(|r| r.residual).fold(0.0, f64::max),
                log2_slope: None,
            });
            rows.extend(decomposition);
        }
        write_ranks_csv(&paths[0], &rows, create(&dir.join("ranks.csv"))?)?;
        if system.m() >= 2 {
            reports.push(rank_sum_identity(&system, &h0, a.p)?);
        }
    }
    write_identity_csv(&reports, create(&dir.join("identities.csv"))?)?;
    let mut identities: Vec<IdentityOutcome> =
        reports.iter().map(IdentityOutcome::from_report).collect();
    identities.extend(extra);
    Ok(ReplicateSummary { seed, identities })
}

fn limit_trends(replicates: &[ReplicateSummary]) -> Vec<LimitTrend> {
    let Some(first) = replicates.first() else { return Vec::new() };
    first
        .identities
        .iter()
        .enumerate()
        .filter(|(_, o)| o.class == Exactness::LimitOnly.label())
        .map(|(j, o)| {
            let outcomes: Vec<&IdentityOutcome> =
                replicates.iter().map(|r| &r.identities[j]).collect();
            let finest: Vec<f64> = outcomes.iter().map(|o| o.finest_residual).collect();
            let slopes: Vec<f64> = outcomes.iter().filter_map(|o| o.log2_slope).collect();
            let passes = outcomes.iter().filter(|o| o.passed).count();
            LimitTrend {
                name: o.name.clone(),
                replicates: outcomes.len(),
                pass_rate: passes as f64 / outcomes.len() as f64,
                median_finest_residual: stats::median(&finest),
                median_log2_slope: (!slopes.is_empty()).then(|| stats::median(&slopes)),
            }
        })
        .collect()
}

/// Runs every replicate of a validated config into `out`, writing `summary.json` last.
/// Replicates run in parallel; each writes only its own files, so outputs do not depend
/// on the worker count.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<Summary> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let replicates = (0..config.seeds.count)
        .into_par_iter()
        .map(|r| replicate(config, r, out))
        .collect::<Result<Vec<_>>>()?;
    let exact_failures = replicates
        .iter()
        .flat_map(|r| &r.identities)
        .filter(|o| o.class == Exactness::ExactPerLevel.label() && !o.passed)
        .count();
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        config: config.clone(),
        limit_trends: limit_trends(&replicates),
        replicates,
        exact_failures,
    };
    let file = out.join("summary.json");
    serde_json::to_writer_pretty(create(&file)?, &summary)?;
    Ok(summary)
}

/// Output directory of a config, resolved against the config file's directory.
pub fn output_dir(config: &ExperimentConfig, config_file: &Path) -> PathBuf {
    let dir = &config.output.dir;
    if dir.is_absolute() {
        dir.clone()
    } else {
        config_file.parent().unwrap_or(Path::new(".")).join(dir)
    }
}
