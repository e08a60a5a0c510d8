//! User CSV paths: header `t,value`, strictly increasing times from 0 to T.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PathOrigin, SampledPath, MAX_RESOLUTION};
use crate::error::{Error, Result};

/// How a CSV path was mapped onto the dyadic grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleInfo {
    pub source: PathBuf,
    pub source_rows: usize,
    pub n_max: u32,
    /// False when the input already sat exactly on the dyadic grid.
    pub interpolated: bool,
}

/// Reads a CSV path and linearly interpolates it onto `2^n_max + 1` grid points.
/// Without an explicit `n_max` the dyadic grid closest in size to the input is used.
pub fn ingest_csv(file: &Path, n_max: Option<u32>) -> Result<(SampledPath, ResampleInfo)> {
    let fail = |reason: String| Error::Ingestion { path: file.to_path_buf(), reason };
    let mut reader = csv::Reader::from_path(file).map_err(|e| fail(e.to_string()))?;
    let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    if headers.len() != 2 || headers[0].trim() != "t" || headers[1].trim() != "value" {
        return Err(fail(format!("expected header `t,value`, found `{}`", headers.as_slice())));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            let v: f64 = record[i]
                .trim()
                .parse()
                .map_err(|_| fail(format!("row {}: cannot parse `{}`", row + 2, &record[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(fail(format!("row {}: non-finite entry", row + 2)))
            }
        };
        times.push(parse(0)?);
        values.push(parse(1)?);
    }
    if times.len() < 2 {
        return Err(fail("need at least two rows".into()));
    }
    if times[0] != 0.0 {
        return Err(fail(format!("first time must be 0, found {}", times[0])));
    }
    if let Some(w) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(fail(format!("times not strictly increasing at row {}", w + 3)));
    }
    let horizon = *times.last().unwrap();
    let intervals = times.len() - 1;
    let n_max = match n_max {
        Some(n) => n,
        None => ((intervals as f64).log2().round() as u32).clamp(1, MAX_RESOLUTION),
    };
    let n = 1usize << n_max;
    // same rounding as `SampledPath::time`
    let step = horizon / n as f64;
    let on_grid = intervals == n && times.iter().enumerate().all(|(k, &t)| t == k as f64 * step);
    let grid_values = if on_grid {
        values.clone()
    } else {
        let mut seg = 0;
        (0..=n)
            .map(|k| {
                let t = k as f64 * step;
                while seg + 1 < intervals && times[seg + 1] <= t {
                    seg += 1;
                }
                let (t0, t1) = (times[seg], times[seg + 1]);
                let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                values[seg] + w * (values[seg + 1] - values[seg])
            })
            .collect()
    };
    let info = ResampleInfo {
        source: file.to_path_buf(),
        source_rows: times.len(),
        n_max,
        interpolated: !on_grid,
    };
    let path =
        SampledPath::with_origin(horizon, n_max, grid_values, PathOrigin::Csv(info.clone()))?;
    Ok((path, info))
}

/// CSV with columns `t,value`, readable by [`ingest_csv`] without interpolation.
pub fn write_path_csv<W: Write>(path: &SampledPath, out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "t,value")?;
    for (k, v) in path.values().iter().enumerate() {
        writeln!(w, "{},{v}", path.time(k))?;
    }
    w.flush()
}
