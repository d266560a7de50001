use std::fmt::Write as _;
use std::io::Write;

use super::{EvalError, ForgettingReport, MetricsReport, PredictionRow};

pub const METRICS_HEADER: [&str; 7] = [
    "domain",
    "model",
    "n_windows",
    "rmse",
    "mae",
    "rmse_norm",
    "mae_norm",
];

fn io(e: csv::Error) -> EvalError {
    EvalError::Io(e.to_string())
}

fn real(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER).map_err(io)?;
    for r in reports {
        w.write_record([
            r.domain.clone(),
            r.model.clone(),
            r.n_windows.to_string(),
            real(r.rmse),
            real(r.mae),
            opt(r.rmse_norm),
            opt(r.mae_norm),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

pub fn write_predictions_csv<W: Write>(rows: &[PredictionRow], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_index", "step", "actual", "predicted"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.window_index.to_string(),
            r.step.to_string(),
            real(r.actual),
            real(r.predicted),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

pub fn write_forgetting_csv<W: Write>(report: &ForgettingReport, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source_domain", "model", "rmse", "source_rmse", "delta"]).map_err(io)?;
    for r in &report.rows {
        w.write_record([
            report.source_domain.clone(),
            r.model.clone(),
            real(r.rmse),
            real(report.source_rmse),
            real(r.delta),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

/// One `key=value` line per report, e.g.
/// `metrics domain=T model=one_step n_windows=30 rmse=0.41 mae=0.33 rmse_norm=… mae_norm=…`.
pub fn summary_text(reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = write!(
            s,
            "metrics domain={} model={} n_windows={} rmse={} mae={}",
            r.domain,
            r.model,
            r.n_windows,
            real(r.rmse),
            real(r.mae)
        );
        if let (Some(a), Some(b)) = (r.rmse_norm, r.mae_norm) {
            let _ = write!(s, " rmse_norm={} mae_norm={}", real(a), real(b));
        }
        s.push('\n');
    }
    s
}
