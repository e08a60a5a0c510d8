//! TOML experiment configs with line-numbered validation errors.

use std::path::{Path, PathBuf};

use pathwise::integrate::TestFunctionSpec;
use pathwise::localtime::field_bytes;
use pathwise::paths::MAX_RESOLUTION;
use pathwise::{tanaka_class, PathKind, PathSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: invalid `{field}`: {reason}")]
    Invalid { line: usize, field: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One or more paths; with several, replicate `r` draws path `i` from stream `i`.
    pub paths: Vec<PathSpec>,
    #[serde(default)]
    pub seeds: Seeds,
    pub analysis: Analysis,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionSpec>,
    #[serde(default)]
    pub identities: IdentitySelection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Replicate `r` uses seed `base + r`, offset by each path's own `seed`.
    #[serde(default = "default_base_seed")]
    pub base: u64,
    #[serde(default = "default_seed_count")]
    pub count: u32,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { base: default_base_seed(), count: default_seed_count() }
    }
}

fn default_base_seed() -> u64 {
    1
}

fn default_seed_count() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionChoice {
    Dyadic,
    Lebesgue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    pub p: u32,
    #[serde(default = "default_partition")]
    pub partition: PartitionChoice,
    /// Finest level; levels `0..=levels` are analysed.
    pub levels: u32,
    /// Number of uniformly spaced checkpoints in `(0, T]`.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
}

fn default_partition() -> PartitionChoice {
    PartitionChoice::Dyadic
}

fn default_checkpoints() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cells of the space grid covering each path's range.
    #[serde(default = "default_cells")]
    pub cells: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { cells: default_cells() }
    }
}

fn default_cells() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySelection {
    #[serde(default = "yes")]
    pub finite_n: bool,
    /// Levels `a` for the Tanaka–Meyer identity.
    #[serde(default = "default_levels_a")]
    pub tanaka_meyer: Vec<f64>,
    #[serde(default = "yes")]
    pub occupation: bool,
    /// Zero-set and max/min identities on the first two paths.
    #[serde(default = "yes")]
    pub suite: bool,
    /// Rank decomposition and rank sum identity over all paths.
    #[serde(default = "yes")]
    pub ranks: bool,
    #[serde(default)]
    pub follmer: bool,
}

impl Default for IdentitySelection {
    fn default() -> Self {
        IdentitySelection {
            finite_n: true,
            tanaka_meyer: default_levels_a(),
            occupation: true,
            suite: true,
            ranks: true,
            follmer: false,
        }
    }
}

fn yes() -> bool {
    true
}

fn default_levels_a() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    /// Cap on the `levels x checkpoints x cells` local-time tensor.
    #[serde(default = "default_max_tensor_bytes")]
    pub max_tensor_bytes: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            format: default_format(),
            max_tensor_bytes: default_max_tensor_bytes(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("pathwise-out")
}

fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

fn default_max_tensor_bytes() -> u64 {
    1 << 30
}

impl ExperimentConfig {
    pub fn load(file: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(file)
            .map_err(|source| ConfigError::Read { path: file.to_path_buf(), source })?;
        Self::parse(&source)
    }

    /// Parses and validates a config document.
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(source).map_err(|e| ConfigError::Syntax {
            line: e.span().map_or(1, |s| line_at(source, s.start)),
            message: e.message().to_string(),
        })?;
        config.validate(source)?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    fn validate(&self, source: &str) -> Result<(), ConfigError> {
        let invalid = |table: &str, index: usize, key: &str, reason: String| ConfigError::Invalid {
            line: line_of(source, table, index, key),
            field: if table == "paths" {
                format!("paths[{index}].{key}")
            } else {
                format!("{table}.{key}")
            },
            reason,
        };
        let a = &self.analysis;
        if a.p < 2 || !a.p.is_multiple_of(2) {
            return Err(invalid(
                "analysis",
                0,
                "p",
                format!("must be an even integer >= 2, got {}", a.p),
            ));
        }
        if self.paths.is_empty() {
            return Err(ConfigError::Invalid {
                line: 1,
                field: "paths".into(),
                reason: "at least one [[paths]] table is required".into(),
            });
        }
        for (i, spec) in self.paths.iter().enumerate() {
            if spec.n_max == 0 || spec.n_max > MAX_RESOLUTION {
                return Err(invalid(
                    "paths",
                    i,
                    "n_max",
                    format!("must lie in 1..={MAX_RESOLUTION}"),
                ));
            }
            if a.levels > spec.n_max {
                return Err(invalid(
                    "analysis",
                    0,
                    "levels",
                    format!("{} exceeds n_max = {} of paths[{i}]", a.levels, spec.n_max),
                ));
            }
            if !(spec.horizon.is_finite() && spec.horizon > 0.0) {
                return Err(invalid("paths", i, "horizon", "must be positive".into()));
            }
            if let PathKind::Fbm { hurst } = spec.kind {
                if !(hurst > 0.0 && hurst < 1.0) {
                    return Err(invalid(
                        "paths",
                        i,
                        "hurst",
                        format!("must lie in (0, 1), got {hurst}"),
                    ));
                }
            }
            if spec.n_max != self.paths[0].n_max || spec.horizon != self.paths[0].horizon {
                return Err(invalid("paths", i, "n_max", "all paths must share one grid".into()));
            }
        }
        if self.seeds.count == 0 {
            return Err(invalid("seeds", 0, "count", "must be at least 1".into()));
        }
        if a.checkpoints == 0 {
            return Err(invalid("analysis", 0, "checkpoints", "must be at least 1".into()));
        }
        if self.grid.cells == 0 {
            return Err(invalid("grid", 0, "cells", "must be at least 1".into()));
        }
        for (i, spec) in self.test_functions.iter().enumerate() {
            if let Err(e) = tanaka_class(&spec.name, &spec.params, a.p) {
                return Err(ConfigError::Invalid {
                    line: line_of(source, "test_functions", i, "name"),
                    field: format!("test_functions[{i}]"),
                    reason: e.to_string(),
                });
            }
        }
        if let Some(x) = self.identities.tanaka_meyer.iter().find(|x| !x.is_finite()) {
            return Err(invalid("identities", 0, "tanaka_meyer", format!("non-finite level {x}")));
        }
        let bytes = field_bytes(a.levels as usize + 1, a.checkpoints, self.grid.cells);
        if bytes > u128::from(self.output.max_tensor_bytes) {
            return Err(invalid(
                "output",
                0,
                "max_tensor_bytes",
                format!(
                    "the local-time tensor needs {bytes} bytes, above the cap of {}",
                    self.output.max_tensor_bytes
                ),
            ));
        }
        Ok(())
    }
}

/// 1-based line of a byte offset.
fn line_at(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Line of `key` inside the `index`-th occurrence of `[table]` or `[[table]]`; falls back
/// to the table header, then to line 1.
fn line_of(source: &str, table: &str, index: usize, key: &str) -> usize {
    let mut current = String::new();
    let mut seen = 0usize;
    let mut header = None;
    for (n, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table {
                seen += 1;
                if seen == index + 1 {
                    header = Some(n + 1);
                }
            }
            continue;
        }
        if current == table && seen == index + 1 {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return n + 1;
                }
            }
        }
    }
    header.unwrap_or(1)
}
