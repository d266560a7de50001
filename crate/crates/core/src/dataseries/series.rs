use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::scalar::Scalar;

use super::DataError;

/// Longest run of missing samples that forward-fill will repair.
pub const MAX_FILL_RUN: usize = 4;

/// Uniformly sampled multivariate series. Values are stored row-major,
/// `n` rows of `F` features.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T> {
    name: String,
    timestamps: Vec<i64>,
    spacing: i64,
    values: Vec<T>,
    feature_names: Vec<String>,
    target_index: usize,
}

impl<T: Scalar> TimeSeries<T> {
    /// Builds a series from unix-second timestamps and row-major values.
    pub fn new(
        name: impl Into<String>,
        timestamps: Vec<i64>,
        spacing: i64,
        values: Vec<T>,
        feature_names: Vec<String>,
        target_index: usize,
    ) -> Result<Self, DataError> {
        let f = feature_names.len();
        if timestamps.is_empty() {
            return Err(DataError::EmptySeries);
        }
        if f == 0 || target_index >= f {
            return Err(DataError::InvalidArgument(format!(
                "target index {target_index} with {f} features"
            )));
        }
        if values.len() != timestamps.len() * f {
            return Err(DataError::IncompatibleShape(format!(
                "{} values for {} rows of {f} features",
                values.len(),
                timestamps.len()
            )));
        }
        if spacing <= 0 || timestamps.windows(2).any(|w| w[1] - w[0] != spacing) {
            return Err(DataError::IrregularSpacing(
                "timestamps must advance by a constant positive step".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidArgument("non-finite sample".into()));
        }
        Ok(Self {
            name: name.into(),
            timestamps,
            spacing,
            values,
            feature_names,
            target_index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    /// Sample spacing in seconds.
    pub fn spacing(&self) -> i64 {
        self.spacing
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        let f = self.n_features();
        &self.values[i * f..(i + 1) * f]
    }

    /// Values of one feature, in time order.
    pub fn column(&self, j: usize) -> Vec<T> {
        self.values
            .chunks(self.n_features())
            .map(|r| r[j])
            .collect()
    }
}

/// How a CSV file maps onto a [`TimeSeries`].
#[derive(Clone, Debug)]
pub struct CsvSchema {
    /// Timestamp column; the first column when `None`.
    pub timestamp_column: Option<String>,
    /// Numeric feature columns; every non-timestamp column when empty.
    pub feature_columns: Vec<String>,
    /// Predicted feature; the first feature when `None`.
    pub target_column: Option<String>,
    pub delimiter: u8,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp_column: None,
            feature_columns: Vec::new(),
            target_column: None,
            delimiter: b',',
        }
    }
}

/// Parses an ISO-8601 instant into unix seconds. Offsets are honoured;
/// naive timestamps are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    const NAIVE: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    for fmt in NAIVE {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

pub fn load_csv<T: Scalar>(path: &Path, schema: &CsvSchema) -> Result<TimeSeries<T>, DataError> {
    let file = std::fs::File::open(path)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, schema, name)
}

/// Reads a CSV stream. Missing cells (and missing grid rows) are
/// forward-filled when their run is at most [`MAX_FILL_RUN`]; longer or
/// leading runs are dropped, and a drop in the interior of the series is an
/// [`DataError::IrregularSpacing`] error.
pub fn read_csv<T: Scalar, R: Read>(
    reader: R,
    schema: &CsvSchema,
    name: impl Into<String>,
) -> Result<TimeSeries<T>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::MalformedRow { line: 1, reason: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |col: &str| {
        headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| DataError::InvalidArgument(format!("no column named {col:?}")))
    };
    let ts_idx = match &schema.timestamp_column {
        Some(c) => find(c)?,
        None => 0,
    };
    let feature_idx: Vec<usize> = if schema.feature_columns.is_empty() {
        (0..headers.len()).filter(|&i| i != ts_idx).collect()
    } else {
        schema
            .feature_columns
            .iter()
            .map(|c| find(c))
            .collect::<Result<_, _>>()?
    };
    if feature_idx.is_empty() {
        return Err(DataError::InvalidArgument("no numeric feature columns".into()));
    }
    let feature_names: Vec<String> = feature_idx.iter().map(|&i| headers[i].clone()).collect();
    let target_index = match &schema.target_column {
        Some(c) => feature_names
            .iter()
            .position(|n| n == c)
            .ok_or_else(|| DataError::InvalidArgument(format!("target {c:?} is not a feature")))?,
        None => 0,
    };

    let f = feature_idx.len();
    let mut stamps = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| DataError::MalformedRow { line, reason: e.to_string() })?;
        let ts_cell = rec.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(ts_cell).ok_or_else(|| DataError::MalformedRow {
            line,
            reason: format!("bad timestamp {ts_cell:?}"),
        })?;
        if let Some(&prev) = stamps.last() {
            if ts <= prev {
                return Err(DataError::IrregularSpacing(format!(
                    "line {line}: timestamps not strictly increasing"
                )));
            }
        }
        stamps.push(ts);
        for &i in &feature_idx {
            let cell = rec.get(i).unwrap_or("");
            if is_missing(cell) {
                cells.push(None);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| DataError::MalformedRow {
                    line,
                    reason: format!("bad number {cell:?}"),
                })?;
                cells.push(v.is_finite().then_some(v));
            }
        }
    }
    if stamps.is_empty() {
        return Err(DataError::EmptySeries);
    }

    // Lay the rows onto a regular grid, inserting empty rows for skipped instants.
    let spacing = stamps
        .windows(2)
        .map(|w| w[1] - w[0])
        .min()
        .unwrap_or(1);
    let t0 = stamps[0];
    let n_grid = ((stamps[stamps.len() - 1] - t0) / spacing) as usize + 1;
    let mut grid: Vec<Option<f64>> = vec![None; n_grid * f];
    for (r, &ts) in stamps.iter().enumerate() {
        if (ts - t0) % spacing != 0 {
            return Err(DataError::IrregularSpacing(format!(
                "timestamp {ts} is off the {spacing}s grid"
            )));
        }
        let g = ((ts - t0) / spacing) as usize;
        grid[g * f..(g + 1) * f].copy_from_slice(&cells[r * f..(r + 1) * f]);
    }

    let mut keep = vec![true; n_grid];
    for j in 0..f {
        let mut last: Option<f64> = None;
        let mut g = 0;
        while g < n_grid {
            if grid[g * f + j].is_some() {
                last = grid[g * f + j];
                g += 1;
                continue;
            }
            let start = g;
            while g < n_grid && grid[g * f + j].is_none() {
                g += 1;
            }
            let run = g - start;
            match last {
                Some(v) if run <= MAX_FILL_RUN => {
                    for r in start..g {
                        grid[r * f + j] = Some(v);
                    }
                }
                _ => keep[start..g].iter_mut().for_each(|k| *k = false),
            }
        }
    }

    let first = keep.iter().position(|&k| k).ok_or(DataError::EmptySeries)?;
    let last = keep.iter().rposition(|&k| k).unwrap_or(first);
    if let Some(gap) = (first..=last).find(|&g| !keep[g]) {
        return Err(DataError::IrregularSpacing(format!(
            "unrepairable gap of more than {MAX_FILL_RUN} samples at {}",
            t0 + gap as i64 * spacing
        )));
    }
    let timestamps = (first..=last).map(|g| t0 + g as i64 * spacing).collect();
    let values = grid[first * f..(last + 1) * f]
        .iter()
        .map(|v| T::of(v.expect("filled")))
        .collect();
    TimeSeries::new(name, timestamps, spacing, values, feature_names, target_index)
}

/// Per-feature aggregation used by [`resample`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggPolicy {
    Mean,
    Last,
}

/// Aggregates blocks of `k = out_spacing / spacing` consecutive samples.
/// Output rows carry the timestamp of their block's first sample; a trailing
/// partial block is discarded.
pub fn resample<T: Scalar>(
    series: &TimeSeries<T>,
    out_spacing: i64,
    policy: &[AggPolicy],
) -> Result<TimeSeries<T>, DataError> {
    if out_spacing <= 0 || out_spacing % series.spacing != 0 {
        return Err(DataError::NonIntegerRatio {
            from: series.spacing,
            to: out_spacing,
        });
    }
    let f = series.n_features();
    if policy.len() != f {
        return Err(DataError::IncompatibleShape(format!(
            "{} policies for {f} features",
            policy.len()
        )));
    }
    let k = (out_spacing / series.spacing) as usize;
    let n_out = series.len() / k;
    if n_out == 0 {
        return Err(DataError::EmptySeries);
    }
    let kk = T::of_usize(k);
    let mut values = Vec::with_capacity(n_out * f);
    for b in 0..n_out {
        for (j, p) in policy.iter().enumerate() {
            let block = (b * k..(b + 1) * k).map(|i| series.row(i)[j]);
            values.push(match p {
                AggPolicy::Mean => block.sum::<T>() / kk,
                AggPolicy::Last => series.row((b + 1) * k - 1)[j],
            });
        }
    }
    let timestamps = (0..n_out).map(|b| series.timestamps[b * k]).collect();
    TimeSeries::new(
        series.name.clone(),
        timestamps,
        out_spacing,
        values,
        series.feature_names.clone(),
        series.target_index,
    )
}
