//! Shared x-preprocessing for the traditional regressors: every parameter is
//! mapped into the unit hypercube (numerics scaled by their configured
//! scaling, categoricals one-hot), with inactive conditional parameters
//! marked MISSING (NaN) or routed to an out-of-vocabulary slot.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::study::{
    validate_trial, ParameterConfig, ParameterKind, ParameterValue, Scaling, SearchSpace, Value,
};

/// NaN is the MISSING marker throughout the baseline stack.
pub const MISSING: f64 = f64::NAN;

/// Deterministic per-parameter slice layout for a search space.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    /// (parameter name, start, width) in space order.
    pub slices: Vec<(String, usize, usize)>,
    pub dim: usize,
    /// Conditional spaces get an extra out-of-vocabulary slot per
    /// categorical, used when the parameter is inactive.
    pub conditional: bool,
}

impl FeatureLayout {
    pub fn new(space: &SearchSpace) -> Self {
        let conditional = space.parameters().iter().any(|p| p.parent.is_some());
        let mut slices = vec![];
        let mut dim = 0;
        for p in space.parameters() {
            let width = match p.kind {
                ParameterKind::Categorical => {
                    p.feasible_categories.len() + usize::from(conditional)
                }
                _ => 1,
            };
            slices.push((p.name.clone(), dim, width));
            dim += width;
        }
        Self { slices, dim, conditional }
    }
}

fn scale_numeric(p: &ParameterConfig, v: f64) -> Result<f64> {
    let (lo, hi) = match p.kind {
        ParameterKind::Discrete => {
            let lo = p.feasible_reals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = p.feasible_reals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
        _ => p
            .bounds
            .ok_or_else(|| Error::InvalidSpace(format!("parameter {} has no bounds", p.name)))?,
    };
    if hi <= lo {
        return Ok(0.0);
    }
    let t = match p.scaling {
        Scaling::Linear => (v - lo) / (hi - lo),
        Scaling::Log => {
            if lo <= 0.0 {
                return Err(Error::InvalidSpace(format!(
                    "log scaling needs positive bounds on {}",
                    p.name
                )));
            }
            (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
        }
        Scaling::ReverseLog => {
            if lo <= 0.0 {
                return Err(Error::InvalidSpace(format!(
                    "reverse-log scaling needs positive bounds on {}",
                    p.name
                )));
            }
            1.0 - ((hi + lo - v).ln() - lo.ln()) / (hi.ln() - lo.ln())
        }
    };
    Ok(t.clamp(0.0, 1.0))
}

/// Maps a valid trial assignment into the unit hypercube (plus MISSING).
pub fn featurize(space: &SearchSpace, x: &[ParameterValue]) -> Result<Vec<f64>> {
    if let crate::study::TrialVerdict::Invalid(why) = validate_trial(space, x) {
        return Err(Error::InvalidTrial(why));
    }
    let layout = FeatureLayout::new(space);
    featurize_with_layout(space, &layout, x)
}

/// Same as [`featurize`] but reuses a precomputed layout (grid search and
/// forest fitting call this in a loop).
pub fn featurize_with_layout(
    space: &SearchSpace,
    layout: &FeatureLayout,
    x: &[ParameterValue],
) -> Result<Vec<f64>> {
    let by_name: HashMap<&str, &Value> =
        x.iter().map(|pv| (pv.name.as_str(), &pv.value)).collect();
    let active: Vec<&str> = space.active_parameters(&by_name);
    let mut out = vec![0.0; layout.dim];
    for ((name, start, width), p) in layout.slices.iter().zip(space.parameters()) {
        debug_assert_eq!(name, &p.name);
        let is_active = active.contains(&p.name.as_str());
        match p.kind {
            ParameterKind::Categorical => {
                let slot = if !is_active {
                    None
                } else {
                    match by_name.get(p.name.as_str()) {
                        Some(Value::Str(s)) => {
                            p.feasible_categories.iter().position(|c| c == s)
                        }
                        _ => None,
                    }
                };
                match slot {
                    Some(i) => out[start + i] = 1.0,
                    None => {
                        if layout.conditional {
                            // Inactive (or out-of-vocabulary): flag the extra slot.
                            out[start + width - 1] = 1.0;
                        } else {
                            return Err(Error::InvalidTrial(format!(
                                "categorical {} has no valid assignment",
                                p.name
                            )));
                        }
                    }
                }
            }
            _ => {
                if !is_active {
                    out[*start] = MISSING;
                } else {
                    let v = by_name
                        .get(p.name.as_str())
                        .and_then(|v| v.as_f64())
                        .ok_or_else(|| {
                            Error::InvalidTrial(format!("missing numeric value for {}", p.name))
                        })?;
                    out[*start] = scale_numeric(p, v)?;
                }
            }
        }
    }
    Ok(out)
}
