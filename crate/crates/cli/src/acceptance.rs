//! The ten acceptance criteria. Each criterion writes its raw numbers as CSV; criterion 10
//! reruns criteria 1 to 9 on a single worker and compares the CSV bytes.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use pathwise::integrate::{Affine, Exp};
use pathwise::localtime::berman_ratio_check;
use pathwise::paths::generate_stream;
use pathwise::ranks::{rank_decomposition, rank_sum_identity, write_ranks_csv};
use pathwise::stats::{gaussian_abs_moment, median};
use pathwise::tanaka::{
    finite_n_report, identity_suite, occupation_check, scaling_check, tanaka_meyer_identity,
    write_identity_csv, EXACT_THRESHOLD, LIMIT_TOLERANCE, SCALING_TOLERANCE,
};
use pathwise::variation::power_variation;
use pathwise::{
    build_rank_system, dyadic_hierarchy, tanaka_class, IdentityReport, PathKind, PathSpec,
    PiecewisePolynomial, Polynomial, SampledPath, SpaceGrid, TestFunction,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::run::{off_sample_level, with_threads, SUMMARY_SCHEMA_VERSION};

/// Finest level of the exactness criteria.
pub const EXACT_LEVEL: u32 = 12;
/// Resolution of the statistical criteria.
pub const STATISTICAL_LEVEL: u32 = 14;
pub const DEFAULT_SEEDS: u64 = 20;
/// Cell counts of the nested grids for the smooth occupation check.
pub const OCCUPATION_CELLS: [usize; 4] = [10, 20, 40, 80];

#[derive(Debug, Clone)]
pub struct AcceptanceOptions {
    pub base_seed: u64,
    pub seeds: u64,
    pub out: PathBuf,
    /// Worker count of the first run; the second always uses one worker.
    pub threads: Option<usize>,
}

impl AcceptanceOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        AcceptanceOptions { base_seed: 1, seeds: DEFAULT_SEEDS, out: out.into(), threads: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {status} {}: {}", self.id, self.title, self.detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceSummary {
    pub schema_version: u32,
    pub base_seed: u64,
    pub seeds: u64,
    pub criteria: Vec<CriterionOutcome>,
}

fn fbm(hurst: f64, n_max: u32, seed: u64, stream: u64) -> Result<SampledPath> {
    Ok(generate_stream(&PathSpec::new(PathKind::Fbm { hurst }, n_max).seed(seed), stream)?)
}

fn create(dir: &Path, name: &str) -> Result<File> {
    let file = dir.join(name);
    File::create(&file).with_context(|| format!("cannot create {}", file.display()))
}

fn rename(mut report: IdentityReport, prefix: &str) -> IdentityReport {
    report.name = format!("{prefix}/{}", report.name);
    report
}

/// Constant, linear, triangle and three fBM paths with `H = 1/p`.
fn exactness_paths(p: u32, base_seed: u64) -> Result<Vec<(String, SampledPath)>> {
    let kinds = [
        ("constant", PathKind::Constant { value: 0.0 }),
        ("linear", PathKind::Linear { slope: 1.0 }),
        ("triangle", PathKind::Triangle { peak_time: 0.5, peak_value: 1.0 }),
    ];
    let mut out = Vec::new();
    for (name, kind) in kinds {
        out.push((name.to_string(), generate_stream(&PathSpec::new(kind, EXACT_LEVEL), 0)?));
    }
    for s in 0..3 {
        let seed = base_seed + s;
        out.push((format!("fbm_seed{seed}"), fbm(1.0 / p as f64, EXACT_LEVEL, seed, 0)?));
    }
    Ok(out)
}

fn exactness_functions(p: u32) -> Result<Vec<TestFunction>> {
    let coeffs = [0.5, -1.0, 0.25, 1.0];
    Ok(vec![
        tanaka_class("pos_part_pow", &[0.0], p)?,
        tanaka_class("neg_part_pow", &[0.0], p)?,
        tanaka_class("abs_pow", &[0.0], p)?,
        tanaka_class("poly", &coeffs[..p as usize], p)?,
    ])
}

fn worst(reports: &[IdentityReport]) -> (usize, f64, Option<String>) {
    let failures: Vec<&IdentityReport> = reports.iter().filter(|r| !r.passed()).collect();
    let max = reports.iter().map(|r| r.max_residual()).fold(0.0, f64::max);
    (failures.len(), max, failures.first().map(|r| r.name.clone()))
}

fn exact_outcome(
    id: u8,
    title: &'static str,
    reports: &[IdentityReport],
    started: Instant,
) -> CriterionOutcome {
    let (failures, max, first) = worst(reports);
    let mut detail = format!(
        "{} reports, max relative residual {max:.2e} (gate {EXACT_THRESHOLD:.0e}), {:.1} s",
        reports.len(),
        started.elapsed().as_secs_f64()
    );
    if let Some(name) = first {
        detail.push_str(&format!(", {failures} failing, first {name}"));
    }
    CriterionOutcome { id, title, passed: failures == 0, detail }
}

fn finite_identity(opts: &AcceptanceOptions, dir: &Path) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let mut reports = Vec::new();
    for p in [2, 4] {
        let functions = exactness_functions(p)?;
        for (name, path) in exactness_paths(p, opts.base_seed)? {
            let h = dyadic_hierarchy(&path, EXACT_LEVEL)?;
            let batch: Vec<IdentityReport> = functions
                .par_iter()
                .map(|f| finite_n_report(&path, &h, p, f, path.last_index()))
                .collect::<pathwise::Result<_>>()?;
            reports.extend(batch.into_iter().map(|r| rename(r, &format!("p{p}/{name}"))));
        }
    }
    write_identity_csv(&reports, create(dir, "c1_finite_identity.csv")?)?;
    Ok(exact_outcome(1, "finite-n change of variable", &reports, started))
}

fn tanaka_meyer(opts: &AcceptanceOptions, dir: &Path) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let mut reports = Vec::new();
    for p in [2, 4] {
        for (name, path) in exactness_paths(p, opts.base_seed)? {
            let h = dyadic_hierarchy(&path, EXACT_LEVEL)?;
            let (lo, hi) = path.range();
            for q in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let a = off_sample_level(&path, lo + q * (hi - lo));
                let report = tanaka_meyer_identity(&path, &h, p, a, path.last_index())?;
                reports.push(rename(report, &format!("p{p}/{name}")));
            }
        }
    }
    write_identity_csv(&reports, create(dir, "c2_tanaka_meyer.csv")?)?;
    Ok(exact_outcome(2, "Tanaka-Meyer per level", &reports, started))
}

/// Per-seed numbers of the statistical criteria.
#[derive(Debug, Clone)]
struct SeedRow {
    seed: u64,
    variation_p2: f64,
    variation_p4: f64,
    rank_sum: f64,
    exp_scaling: f64,
    max_plus_min: f64,
    berman: f64,
    berman_weighted: f64,
    berman_p4: f64,
}

fn seed_row(seed: u64) -> Result<SeedRow> {
    let n = STATISTICAL_LEVEL;
    let paths: Vec<SampledPath> = (0..3).map(|i| fbm(0.5, n, seed, i)).collect::<Result<_>>()?;
    let rough = fbm(0.25, n, seed, 0)?;
    let x = &paths[0];
    let h = dyadic_hierarchy(x, n)?;
    let end = [x.last_index()];
    let variation_p2 = power_variation(x, h.finest(), 2, &end)[0];
    let variation_p4 = power_variation(&rough, h.finest(), 4, &end)[0];
    let system = build_rank_system(&paths)?;
    let finest = |r: &IdentityReport| r.finest().map_or(f64::NAN, |row| row.residual);
    let rank_sum = finest(&rank_sum_identity(&system, &h, 2)?);
    let exp_scaling = finest(&scaling_check(x, &Exp, 0.0, &h, 2)?);
    let suite = identity_suite(x, &paths[1], &h, 2)?;
    let max_plus_min = finest(suite.last().expect("suite is non-empty"));
    let berman = berman_ratio_check(x, 2, &SpaceGrid::covering(x, 200)?)?;
    let berman_p4 = berman_ratio_check(&rough, 4, &SpaceGrid::covering(&rough, 200)?)?;
    Ok(SeedRow {
        seed,
        variation_p2,
        variation_p4,
        rank_sum,
        exp_scaling,
        max_plus_min,
        berman: berman.mean_ratio,
        berman_weighted: berman.weighted_ratio,
        berman_p4: berman_p4.mean_ratio,
    })
}

fn seed_rows(opts: &AcceptanceOptions, dir: &Path) -> Result<Vec<SeedRow>> {
    let rows = (opts.base_seed..opts.base_seed + opts.seeds)
        .into_par_iter()
        .map(seed_row)
        .collect::<Result<Vec<_>>>()?;
    let mut w = std::io::BufWriter::new(create(dir, "statistics.csv")?);
    writeln!(
        w,
        "seed,variation_p2,variation_p4,rank_sum,exp_scaling,max_plus_min,berman,berman_weighted,berman_p4"
    )?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.variation_p2,
            r.variation_p4,
            r.rank_sum,
            r.exp_scaling,
            r.max_plus_min,
            r.berman,
            r.berman_weighted,
            r.berman_p4
        )?;
    }
    w.flush()?;
    Ok(rows)
}

fn column(rows: &[SeedRow], f: impl Fn(&SeedRow) -> f64) -> f64 {
    median(&rows.iter().map(f).collect::<Vec<_>>())
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

fn variation_limit(rows: &[SeedRow], started: Instant) -> CriterionOutcome {
    let v2 = column(rows, |r| r.variation_p2);
    let v4 = column(rows, |r| r.variation_p4);
    let c4 = gaussian_abs_moment(4);
    CriterionOutcome {
        id: 3,
        title: "fBM p-th variation limit",
        passed: within(v2, 1.0, 0.05) && within(v4, c4, 0.10),
        detail: format!(
            "median [S]^2(1) = {v2:.4} (1 +/- 5%), median [S]^4(1) = {v4:.4} ({c4} +/- 10%), {} seeds, {:.1} s",
            rows.len(),
            started.elapsed().as_secs_f64()
        ),
    }
}

/// Least-squares slope of `log2(y)` against `log2(x)`.
fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log2()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn occupation(opts: &AcceptanceOptions, dir: &Path) -> Result<CriterionOutcome> {
    let s = fbm(0.5, STATISTICAL_LEVEL, opts.base_seed, 0)?;
    let t = s.last_index();
    let mut w = std::io::BufWriter::new(create(dir, "c4_occupation.csv")?);
    writeln!(w, "g,cells,lhs,rhs,discrepancy,threshold")?;

    let grid = SpaceGrid::covering(&s, 40)?;
    let indicator = PiecewisePolynomial::new(
        vec![grid.edge(10), grid.edge(30)],
        vec![Polynomial::zero(0.0), Polynomial::new(0.0, vec![1.0]), Polynomial::zero(0.0)],
    )?;
    let indicator = TestFunction::new(indicator, -1, "indicator")?;
    let exact = occupation_check(&s, 2, &indicator, &grid, t)?;
    let row = exact.finest().expect("one row");
    writeln!(w, "indicator,40,{},{},{},{}", row.lhs, row.rhs, row.residual, exact.threshold)?;

    let square = TestFunction::polynomial(vec![0.0, 0.0, 1.0], "x^2");
    let base = SpaceGrid::covering(&s, OCCUPATION_CELLS[0])?;
    let mut errors = Vec::new();
    let mut bounded = true;
    for cells in OCCUPATION_CELLS {
        let grid = SpaceGrid::new(base.lo(), base.hi(), cells)?;
        let report = occupation_check(&s, 2, &square, &grid, t)?;
        let row = report.finest().expect("one row");
        writeln!(w, "x^2,{cells},{},{},{},{}", row.lhs, row.rhs, row.residual, report.threshold)?;
        bounded &= report.passed();
        errors.push(row.residual);
    }
    w.flush()?;
    let cells: Vec<f64> = OCCUPATION_CELLS.iter().map(|&c| c as f64).collect();
    let slope = log_log_slope(&cells, &errors);
    let ratios: Vec<String> = errors.windows(2).map(|e| format!("{:.2}", e[1] / e[0])).collect();
    Ok(CriterionOutcome {
        id: 4,
        title: "occupation density formula",
        passed: exact.passed() && slope <= -1.0,
        detail: format!(
            "indicator residual {:.2e}; x^2 discrepancy rate {slope:.2} per doubling (gate <= -1), step ratios [{}], within Lipschitz bound: {bounded}",
            row.residual,
            ratios.join(", ")
        ),
    })
}

fn rank_decompositions(opts: &AcceptanceOptions, dir: &Path) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let (mut rows_checked, mut failures, mut max_residual) = (0usize, 0usize, 0.0f64);
    let mut cross_terms_vanish = true;
    for m in [2u64, 3] {
        for p in [2u32, 4] {
            let paths: Vec<SampledPath> = (0..m)
                .map(|i| fbm(1.0 / p as f64, EXACT_LEVEL, opts.base_seed, i))
                .collect::<Result<_>>()?;
            let system = build_rank_system(&paths)?;
            let h = dyadic_hierarchy(&paths[0], EXACT_LEVEL)?;
            let last = paths[0].last_index();
            let functions =
                [tanaka_class("poly", &[0.0, 1.0], p)?, tanaka_class("x_pow_pm1", &[], p)?];
            for (j, f) in functions.iter().enumerate() {
                let mut rows = Vec::new();
                for k in 1..=system.m() {
                    rows.extend(rank_decomposition(&system, k, &h, p, f, &[last / 2, last])?);
                }
                rows_checked += rows.len();
                failures += rows.iter().filter(|r| !r.passed()).count();
                max_residual = rows.iter().map(|r| r.residual).fold(max_residual, f64::max);
                if p == 2 {
                    cross_terms_vanish &= rows.iter().all(|r| r.c == 0.0);
                }
                write_ranks_csv(
                    &paths[0],
                    &rows,
                    create(dir, &format!("c5_ranks_m{m}_p{p}_f{j}.csv"))?,
                )?;
            }
        }
    }
    Ok(CriterionOutcome {
        id: 5,
        title: "rank decomposition per level",
        passed: failures == 0 && cross_terms_vanish,
        detail: format!(
            "{rows_checked} rows, {failures} failing, max relative residual {max_residual:.2e}, C = 0 for p = 2: {cross_terms_vanish}, {:.1} s",
            started.elapsed().as_secs_f64()
        ),
    })
}

fn median_gate(id: u8, title: &'static str, value: f64, gate: f64, what: &str) -> CriterionOutcome {
    CriterionOutcome {
        id,
        title,
        passed: value <= gate,
        detail: format!("median {what} {value:.4} (gate <= {gate})"),
    }
}

fn scaling(opts: &AcceptanceOptions, rows: &[SeedRow]) -> Result<CriterionOutcome> {
    let s = fbm(0.5, STATISTICAL_LEVEL, opts.base_seed, 0)?;
    let h = dyadic_hierarchy(&s, STATISTICAL_LEVEL)?;
    let a = off_sample_level(&s, 0.1);
    let affine = scaling_check(&s, &Affine { slope: 2.0, intercept: -0.5 }, a, &h, 2)?;
    let exp = column(rows, |r| r.exp_scaling);
    Ok(CriterionOutcome {
        id: 7,
        title: "scaling law",
        passed: affine.passed() && exp <= SCALING_TOLERANCE,
        detail: format!(
            "affine max residual {:.2e} (gate {EXACT_THRESHOLD:.0e}); e^x median side gap {exp:.4} (gate <= {SCALING_TOLERANCE})",
            affine.max_residual()
        ),
    })
}

fn berman(rows: &[SeedRow]) -> CriterionOutcome {
    let ratio = column(rows, |r| r.berman);
    let weighted = column(rows, |r| r.berman_weighted);
    let rough = column(rows, |r| r.berman_p4);
    let expected = gaussian_abs_moment(2) / 2.0;
    CriterionOutcome {
        id: 9,
        title: "Berman ratio",
        passed: within(ratio, expected, 0.15),
        detail: format!(
            "median mean ratio {ratio:.4} (0.5 +/- 15%), weighted {weighted:.4}; informational H = 1/4, p = 4: {rough:.4} vs {}",
            gaussian_abs_moment(4) / 4.0
        ),
    }
}

/// Criteria 1 to 9, writing every CSV into `dir`.
pub fn run_criteria(opts: &AcceptanceOptions, dir: &Path) -> Result<Vec<CriterionOutcome>> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut out = vec![finite_identity(opts, dir)?, tanaka_meyer(opts, dir)?];
    let started = Instant::now();
    let rows = seed_rows(opts, dir)?;
    out.push(variation_limit(&rows, started));
    out.push(occupation(opts, dir)?);
    out.push(rank_decompositions(opts, dir)?);
    out.push(median_gate(
        6,
        "rank local-time sum",
        column(&rows, |r| r.rank_sum),
        LIMIT_TOLERANCE,
        "relative gap",
    ));
    out.push(scaling(opts, &rows)?);
    out.push(median_gate(
        8,
        "max plus min identity",
        column(&rows, |r| r.max_plus_min),
        LIMIT_TOLERANCE,
        "relative gap",
    ));
    out.push(berman(&rows));
    Ok(out)
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> =
        std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    files.retain(|f| f.extension().is_some_and(|e| e == "csv"));
    files.sort();
    Ok(files)
}

/// Whether two directories hold the same CSV names with identical bytes.
pub fn identical_csvs(a: &Path, b: &Path) -> Result<(usize, Vec<String>)> {
    let (fa, fb) = (csv_files(a)?, csv_files(b)?);
    let names = |fs: &[PathBuf]| -> Vec<String> {
        fs.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect()
    };
    let mut differing: Vec<String> = Vec::new();
    if names(&fa) != names(&fb) {
        differing.push("file sets differ".into());
    }
    for (x, y) in fa.iter().zip(&fb) {
        if std::fs::read(x)? != std::fs::read(y)? {
            differing.push(x.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    Ok((fa.len(), differing))
}

/// Runs criteria 1 to 9 twice, first on the configured pool and then on one worker, and
/// adds criterion 10 from the CSV comparison. Writes `acceptance.json` into `opts.out`.
pub fn run_acceptance(opts: &AcceptanceOptions) -> Result<Vec<CriterionOutcome>> {
    let (first, second) = (opts.out.join("run1"), opts.out.join("run2"));
    let mut outcomes = with_threads(opts.threads, || run_criteria(opts, &first))?;
    with_threads(Some(1), || run_criteria(opts, &second))?;
    let (count, differing) = identical_csvs(&first, &second)?;
    outcomes.push(CriterionOutcome {
        id: 10,
        title: "determinism",
        passed: differing.is_empty() && count > 0,
        detail: if differing.is_empty() {
            format!("{count} CSVs byte-identical across two runs (second on one worker)")
        } else {
            format!("differing: {}", differing.join(", "))
        },
    });
    let summary = AcceptanceSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        base_seed: opts.base_seed,
        seeds: opts.seeds,
        criteria: outcomes.clone(),
    };
    serde_json::to_writer_pretty(File::create(opts.out.join("acceptance.json"))?, &summary)?;
    Ok(outcomes)
}
