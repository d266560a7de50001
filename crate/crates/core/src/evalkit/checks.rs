use crate::dataseries::WindowedDataset;
use crate::scalar::Scalar;
use crate::tsformer::{predict_batch, Checkpoint};

use super::{mae, rmse, EvalError, MetricsReport};

const EVAL_BATCH: usize = 256;

/// One forecast step in original units.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRow {
    pub window_index: usize,
    pub step: usize,
    pub actual: f64,
    pub predicted: f64,
}

fn check_layout<T: Scalar>(ckpt: &Checkpoint<T>, test: &WindowedDataset<T>) -> Result<(), EvalError> {
    let c = &ckpt.config;
    if c.lookback != test.lookback || c.horizon != test.horizon || c.features != test.features {
        return Err(EvalError::ConfigMismatch(format!(
            "model m={}, h={}, F={} vs {} windows m={}, h={}, F={}",
            c.lookback, c.horizon, c.features, test.domain, test.lookback, test.horizon, test.features
        )));
    }
    if ckpt.normalizer.features() != test.features {
        return Err(EvalError::ConfigMismatch("normalizer width differs from the data".into()));
    }
    Ok(())
}

/// Scores `ckpt` on raw-unit `test` windows. The checkpoint's normalizer is
/// applied before the forward pass; metrics are reported in both spaces and
/// every prediction is returned in original units.
pub fn evaluate<T: Scalar>(
    ckpt: &Checkpoint<T>,
    test: &WindowedDataset<T>,
    model_id: &str,
) -> Result<(MetricsReport, Vec<PredictionRow>), EvalError> {
    check_layout(ckpt, test)?;
    if test.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let norm = ckpt.normalizer.apply(test)?;
    let mut pred_norm = Vec::with_capacity(test.len());
    for chunk in norm.inputs.chunks(EVAL_BATCH) {
        let refs: Vec<&[T]> = chunk.iter().map(Vec::as_slice).collect();
        pred_norm.extend(predict_batch(&ckpt.params, &ckpt.config, &refs)?);
    }
    let pred: Vec<Vec<T>> = pred_norm
        .iter()
        .map(|p| ckpt.normalizer.invert_target(test.target_index, p))
        .collect();
    let dump = test
        .targets
        .iter()
        .zip(&pred)
        .enumerate()
        .flat_map(|(w, (a, p))| {
            a.iter().zip(p).enumerate().map(move |(step, (&x, &y))| PredictionRow {
                window_index: w,
                step,
                actual: x.as_f64(),
                predicted: y.as_f64(),
            })
        })
        .collect();
    let report = MetricsReport {
        domain: test.domain.clone(),
        model: model_id.to_string(),
        rmse: rmse(&test.targets, &pred)?.as_f64(),
        mae: mae(&test.targets, &pred)?.as_f64(),
        rmse_norm: Some(rmse(&norm.targets, &pred_norm)?.as_f64()),
        mae_norm: Some(mae(&norm.targets, &pred_norm)?.as_f64()),
        n_windows: test.len(),
    };
    Ok((report, dump))
}

/// Repeats each window's last observed target value over the horizon.
pub fn persistence_baseline<T: Scalar>(test: &WindowedDataset<T>) -> Result<MetricsReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let pred: Vec<Vec<T>> = (0..test.len())
        .map(|j| vec![test.last_observed(j); test.horizon])
        .collect();
    Ok(MetricsReport {
        domain: test.domain.clone(),
        model: "persistence".into(),
        rmse: rmse(&test.targets, &pred)?.as_f64(),
        mae: mae(&test.targets, &pred)?.as_f64(),
        rmse_norm: None,
        mae_norm: None,
        n_windows: test.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForgettingRow {
    pub model: String,
    pub rmse: f64,
    /// Fine-tuned RMSE minus the source model's RMSE.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForgettingReport {
    pub source_domain: String,
    pub source_rmse: f64,
    pub rows: Vec<ForgettingRow>,
}

/// Evaluates the source model and every fine-tuned model on the same source
/// test windows.
pub fn forgetting_check<T: Scalar>(
    source_ckpt: &Checkpoint<T>,
    finetuned: &[(&str, &Checkpoint<T>)],
    source_test: &WindowedDataset<T>,
) -> Result<ForgettingReport, EvalError> {
    for (id, c) in finetuned {
        if c.config != source_ckpt.config {
            return Err(EvalError::ConfigMismatch(format!(
                "model {id} does not share the source model's configuration"
            )));
        }
    }
    let (base, _) = evaluate(source_ckpt, source_test, "source")?;
    let rows = finetuned
        .iter()
        .map(|(id, c)| {
            let (r, _) = evaluate(c, source_test, id)?;
            Ok(ForgettingRow {
                model: id.to_string(),
                rmse: r.rmse,
                delta: r.rmse - base.rmse,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(ForgettingReport {
        source_domain: source_test.domain.clone(),
        source_rmse: base.rmse,
        rows,
    })
}

/// Cross-evaluates every checkpoint on every domain without further training;
/// `result[i][j]` is checkpoint `i` on domain `j`.
pub fn shift_check<T: Scalar>(
    ckpts: &[(&str, &Checkpoint<T>)],
    unseen: &[&WindowedDataset<T>],
) -> Result<Vec<Vec<MetricsReport>>, EvalError> {
    for (id, c) in ckpts {
        for ds in unseen {
            check_layout(c, ds).map_err(|e| EvalError::ConfigMismatch(format!("{id}: {e}")))?;
        }
    }
    ckpts
        .iter()
        .map(|(id, c)| unseen.iter().map(|ds| Ok(evaluate(c, ds, id)?.0)).collect())
        .collect()
}
