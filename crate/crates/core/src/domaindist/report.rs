use std::io::Write;

use crate::scalar::Scalar;

use super::{median_heuristic, mmd2, DistError, DomainSample, Kernel, Rbf, DEFAULT_CAP};

/// Mixing fraction for targets far from the source.
pub const HIGH_MMD_PCT: f64 = 0.05;
/// Mixing fraction for targets close to the source.
pub const LOW_MMD_PCT: f64 = 0.20;

pub const REPORT_HEADER: [&str; 8] = [
    "source",
    "target",
    "mmd2",
    "sqrt_mmd2",
    "recommended_pct",
    "sigma",
    "subsample_n",
    "seed",
];

/// `mmd ≥ threshold` gives 5%, anything below 20%.
pub fn mix_pct_rule(mmd: f64, threshold: f64) -> f64 {
    if mmd >= threshold {
        HIGH_MMD_PCT
    } else {
        LOW_MMD_PCT
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmdConfig {
    /// Per-domain subsample cap.
    pub cap: usize,
    pub seed: u64,
    /// Fixed RBF bandwidth; the pooled median heuristic when unset.
    pub sigma: Option<f64>,
    /// Mixing threshold; the median of the report's values when unset.
    pub threshold: Option<f64>,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            seed: 0,
            sigma: None,
            threshold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmdRow {
    pub target: String,
    pub mmd2: f64,
    pub recommended_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmdReport {
    pub source: String,
    /// Sorted by ascending `mmd2`.
    pub rows: Vec<MmdRow>,
    pub kernel: String,
    pub sigma: f64,
    pub threshold: f64,
    pub subsample_n: usize,
    pub seed: u64,
}

impl MmdReport {
    pub fn row(&self, target: &str) -> Option<&MmdRow> {
        self.rows.iter().find(|r| r.target == target)
    }
}

/// Scores every target against the source with one RBF bandwidth taken from
/// the pooled samples, sorts ascending and attaches mixing recommendations.
pub fn rank_targets<T: Scalar>(
    source: &DomainSample<T>,
    targets: &[DomainSample<T>],
    cfg: &MmdConfig,
) -> Result<MmdReport, DistError> {
    if targets.is_empty() {
        return Err(DistError::NoTargets);
    }
    let sigma = match cfg.sigma {
        Some(s) => T::of(s),
        None => {
            let pooled: Vec<Vec<T>> = std::iter::once(source)
                .chain(targets)
                .flat_map(|s| s.vectors.iter().cloned())
                .collect();
            median_heuristic(&pooled, cfg.seed)?
        }
    };
    let kernel = Rbf::new(sigma)?;
    let mut rows = targets
        .iter()
        .map(|t| {
            Ok(MmdRow {
                target: t.domain.clone(),
                mmd2: mmd2(source, t, &kernel)?.as_f64(),
                recommended_pct: 0.0,
            })
        })
        .collect::<Result<Vec<_>, DistError>>()?;
    rows.sort_by(|a, b| a.mmd2.total_cmp(&b.mmd2).then_with(|| a.target.cmp(&b.target)));
    let threshold = match cfg.threshold {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(DistError::InvalidArgument(format!("threshold {t} must be positive"))),
        None => {
            let k = rows.len();
            let median = if k % 2 == 1 {
                rows[k / 2].mmd2
            } else {
                (rows[k / 2 - 1].mmd2 + rows[k / 2].mmd2) / 2.0
            };
            median.max(f64::MIN_POSITIVE)
        }
    };
    for r in &mut rows {
        r.recommended_pct = mix_pct_rule(r.mmd2, threshold);
    }
    Ok(MmdReport {
        source: source.domain.clone(),
        rows,
        kernel: kernel.describe(),
        sigma: sigma.as_f64(),
        threshold,
        subsample_n: cfg.cap,
        seed: cfg.seed,
    })
}

pub fn write_report_csv<W: Write>(report: &MmdReport, out: W) -> Result<(), DistError> {
    let io = |e: csv::Error| DistError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER).map_err(io)?;
    for r in &report.rows {
        w.write_record([
            report.source.clone(),
            r.target.clone(),
            format!("{:?}", r.mmd2),
            format!("{:?}", r.mmd2.sqrt()),
            format!("{:?}", r.recommended_pct),
            format!("{:?}", report.sigma),
            report.subsample_n.to_string(),
            report.seed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| DistError::Io(e.to_string()))
}
