//! Traditional single-task regressors — MLP, GP, gradient-boosted trees and
//! a random forest — all consuming the same hypercube featurization.

mod features;
mod gp;
mod mlp;
mod trees;

pub use features::{featurize, featurize_with_layout, FeatureLayout, MISSING};
pub use gp::{
    gp_fit_map, gp_fit_with, gp_posterior, gp_predict, y_warp, GpHyperparams, GpModel, YWarper,
    LOG_BOUND,
};
pub use mlp::{
    mlp_fit, mlp_flat_params, mlp_loss_and_flat_grad, mlp_predict, MlpConfig, MlpModel,
};
pub use trees::{
    gbt_fit, gbt_grid_search, gbt_predict, rf_fit, rf_grid_search, rf_predict, validation_rmse,
    GbtGrid, GbtModel, GbtParams, RfModel, RfParams,
};

use crate::decode::PredictionRecord;
use crate::error::{Error, Result};
use crate::study::{Split, Study};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Mlp,
    Gp,
    Gbt,
    Rf,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Self::Mlp),
            "gp" => Ok(Self::Gp),
            "gbt" => Ok(Self::Gbt),
            "rf" => Ok(Self::Rf),
            other => Err(Error::InvalidConfig(format!("unknown baseline {other}"))),
        }
    }
}

fn split_features(
    study: &Study,
    split: Split,
) -> Result<(Vec<(Vec<f64>, f64)>, Vec<usize>)> {
    let layout = FeatureLayout::new(&study.space);
    let mut rows = vec![];
    let mut indices = vec![];
    for (i, t) in study.trials.iter().enumerate() {
        if t.split != split {
            continue;
        }
        let Some(y) = t.y.feasible() else { continue };
        rows.push((featurize_with_layout(&study.space, &layout, &t.x)?, y));
        indices.push(i);
    }
    Ok((rows, indices))
}

/// Fits one baseline on a study's train split (validation split feeds the
/// tree grid searches) and predicts its test split. Returns prediction dumps
/// in the shared JSONL shape; the GP also fills the uncertainty field.
pub fn fit_predict_study(
    study: &Study,
    kind: BaselineKind,
    seed: u64,
) -> Result<Vec<PredictionRecord>> {
    let (train, _) = split_features(study, Split::Train)?;
    let (val, _) = split_features(study, Split::Val)?;
    let (test, test_idx) = split_features(study, Split::Test)?;
    if train.is_empty() {
        return Err(Error::Data(format!("study {} has no feasible train trials", study.id)));
    }
    let predict: Box<dyn Fn(&[f64], u64) -> (f64, Option<f64>)> = match kind {
        BaselineKind::Mlp => {
            let model = mlp_fit(&train, &MlpConfig { seed, ..Default::default() })?;
            Box::new(move |fv, _| (mlp_predict(&model, fv), None))
        }
        BaselineKind::Gp => {
            let model = gp_fit_map(&train, seed)?;
            Box::new(move |fv, s| {
                let (mean, sd) = gp_predict(&model, fv, s);
                (mean, Some(sd))
            })
        }
        BaselineKind::Gbt => {
            let holdout = if val.is_empty() { train.clone() } else { val.clone() };
            let (model, _, _) = gbt_grid_search(&train, &holdout, &GbtGrid::default(), seed)?;
            Box::new(move |fv, _| (gbt_predict(&model, fv), None))
        }
        BaselineKind::Rf => {
            let holdout = if val.is_empty() { train.clone() } else { val.clone() };
            let grid = [
                RfParams::default(),
                RfParams { max_depth: 6, ..Default::default() },
            ];
            let (model, _, _) = rf_grid_search(&train, &holdout, &grid, seed)?;
            Box::new(move |fv, _| (rf_predict(&model, fv), None))
        }
    };
    Ok(test
        .iter()
        .zip(&test_idx)
        .map(|((fv, _), &trial_index)| {
            let (value, sd) = predict(fv, seed.wrapping_add(trial_index as u64));
            PredictionRecord {
                study_id: study.id.clone(),
                trial_index,
                samples: vec![],
                aggregate: value,
                uncertainty: sd,
            }
        })
        .collect())
}
