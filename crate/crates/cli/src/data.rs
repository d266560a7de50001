use tsft_core::dataseries::{
    load_csv, make_windows, resample, split_chronological, synth_generate, CsvSchema,
};
use tsft_core::{Series, Windows};

use crate::config::{parse_policy, LoadedConfig};
use crate::{runtime, CliError};

/// Raw-unit windows of one domain.
#[derive(Clone, Debug)]
pub struct DomainData {
    pub id: String,
    pub all: Windows,
    pub train: Windows,
    pub test: Windows,
}

pub fn load_series(cfg: &LoadedConfig, id: &str) -> Result<Series, CliError> {
    let d = cfg.domain(id)?;
    let series = if let Some(s) = &d.synthetic {
        synth_generate(&cfg.synthetic_spec(d, s)).map_err(runtime)?
    } else {
        let path = cfg.resolve(d.csv.as_deref().expect("validated domain"));
        let schema = CsvSchema {
            timestamp_column: d.timestamp_column.clone(),
            feature_columns: d.feature_columns.clone(),
            target_column: d.target_column.clone(),
            delimiter: d.delimiter.map(|c| c as u8).unwrap_or(b','),
        };
        load_csv(&path, &schema).map_err(|e| runtime(format!("{}: {e}", path.display())))?
    };
    let series = match d.resample_secs {
        Some(secs) => {
            let policies = if d.aggregation.is_empty() {
                vec![tsft_core::dataseries::AggPolicy::Mean; series.n_features()]
            } else {
                d.aggregation
                    .iter()
                    .map(|a| parse_policy(a).map_err(CliError::Config))
                    .collect::<Result<Vec<_>, _>>()?
            };
            resample(&series, secs, &policies).map_err(runtime)?
        }
        None => series,
    };
    Ok(series.renamed(id))
}

pub fn load_domain(cfg: &LoadedConfig, id: &str) -> Result<DomainData, CliError> {
    let series = load_series(cfg, id)?;
    let data = &cfg.config.data;
    let mut all = make_windows(&series, data.lookback, data.horizon, data.stride)
        .map_err(|e| runtime(format!("domain {id}: {e}")))?;
    all.domain = id.to_string();
    let (train, test) =
        split_chronological(&all, data.train_ratio).map_err(|e| runtime(format!("domain {id}: {e}")))?;
    Ok(DomainData {
        id: id.to_string(),
        all,
        train,
        test,
    })
}
