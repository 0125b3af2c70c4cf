//! Multi-task benchmark generators.
//!
//! Produces the shifted-BBOB study corpus (one task per random shift of a
//! BBOB function) and a synthetic conditional-space corpus standing in for
//! real-world conditional tuning data.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bbob::{bbob_eval, BBOBTaskSpec, FunctionClass, ALL_FUNCTIONS};
use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::study::{
    split_study, ParameterConfig, ParameterValue, Scaling, SearchSpace, Study, StudyMetadata,
    Trial, DEFAULT_SPLIT_RATIOS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialSampling {
    /// Inputs drawn uniformly over the domain.
    Uniform,
    /// All proposals of a keep-best local random search, mimicking the
    /// trajectory of an optimization loop.
    RandomSearchTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGenConfig {
    pub num_studies: usize,
    pub trials_per_study: usize,
    /// Per-dimension input interval.
    pub domain: (f64, f64),
    /// Per-dimension shift interval; must lie strictly inside the domain.
    pub shift_range: (f64, f64),
    pub seed: u64,
    pub sampling: TrialSampling,
    /// Inclusive dimension range to sample from.
    pub dim_range: (usize, usize),
    /// Restrict generation to these classes; `None` means all 24.
    pub function_classes: Option<Vec<FunctionClass>>,
    /// Probability of flipping the objective sign per study. The flip is
    /// never rendered into metadata, so flipped tasks look identical to
    /// their unflipped twins on the text side.
    pub sign_flip_prob: f64,
    /// Decimal places kept on sampled inputs.
    pub input_decimals: u32,
}

impl TaskGenConfig {
    pub fn new(num_studies: usize, seed: u64) -> Self {
        Self {
            num_studies,
            trials_per_study: 30,
            domain: (-5.0, 5.0),
            shift_range: (-2.0, 2.0),
            seed,
            sampling: TrialSampling::Uniform,
            dim_range: (2, 6),
            function_classes: None,
            sign_flip_prob: 0.0,
            input_decimals: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_study < 3 {
            return Err(Error::InvalidConfig("trials_per_study must be >= 3".into()));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(Error::InvalidConfig("domain must be a proper interval".into()));
        }
        if !(self.shift_range.0 > self.domain.0 && self.shift_range.1 < self.domain.1) {
            return Err(Error::InvalidConfig(
                "shift_range must lie inside the domain interior".into(),
            ));
        }
        if !(self.dim_range.0 >= 1 && self.dim_range.0 <= self.dim_range.1) {
            return Err(Error::InvalidConfig("bad dim_range".into()));
        }
        Ok(())
    }

    fn classes(&self) -> Vec<FunctionClass> {
        self.function_classes
            .clone()
            .unwrap_or_else(|| ALL_FUNCTIONS.to_vec())
    }
}

fn round_to(v: f64, decimals: u32) -> f64 {
    let p = 10f64.powi(decimals as i32);
    (v * p).round() / p
}

/// Renders a float at 4 significant digits for metadata text.
fn sig4(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (3 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn bbob_space(dim: usize, domain: (f64, f64)) -> SearchSpace {
    let params = (0..dim)
        .map(|i| ParameterConfig::double(format!("x{i}"), domain.0, domain.1))
        .collect();
    SearchSpace::new(params).expect("bbob space is always valid")
}

pub fn bbob_metadata(spec: &BBOBTaskSpec) -> StudyMetadata {
    let shift_text: Vec<String> = spec.shift.iter().map(|&c| sig4(c)).collect();
    StudyMetadata::new(
        &format!("bbob {} {}d", spec.function_class.name(), spec.dim),
        "taskgen",
        &format!(
            "function:{},dim:{},shift:({})",
            spec.function_class.name(),
            spec.dim,
            shift_text.join(",")
        ),
        "value",
    )
}

fn sample_trials(
    spec: &BBOBTaskSpec,
    config: &TaskGenConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Trial>> {
    let (lo, hi) = config.domain;
    let dim = spec.dim;
    let sample_x = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        (0..dim)
            .map(|_| round_to(rng.gen_range(lo..hi), config.input_decimals))
            .collect()
    };
    let mut trials = Vec::with_capacity(config.trials_per_study);
    match config.sampling {
        TrialSampling::Uniform => {
            for _ in 0..config.trials_per_study {
                let x = sample_x(rng);
                let y = bbob_eval(spec, &x)?;
                trials.push(make_trial(&x, y));
            }
        }
        TrialSampling::RandomSearchTrajectory => {
            let normal = Normal::new(0.0, 0.5).expect("valid sd");
            let mut best_x = sample_x(rng);
            let mut best_y = bbob_eval(spec, &best_x)?;
            trials.push(make_trial(&best_x, best_y));
            for _ in 1..config.trials_per_study {
                let x: Vec<f64> = best_x
                    .iter()
                    .map(|&b| {
                        round_to(
                            (b + normal.sample(rng)).clamp(lo, hi),
                            config.input_decimals,
                        )
                    })
                    .collect();
                let y = bbob_eval(spec, &x)?;
                trials.push(make_trial(&x, y));
                if y < best_y {
                    best_y = y;
                    best_x = x;
                }
            }
        }
    }
    Ok(trials)
}

fn make_trial(x: &[f64], y: f64) -> Trial {
    let values = x
        .iter()
        .enumerate()
        .map(|(i, &v)| ParameterValue::real(format!("x{i}"), v))
        .collect();
    Trial::new(values, y)
}

fn build_study(
    id: String,
    spec: &BBOBTaskSpec,
    config: &TaskGenConfig,
    rng: &mut impl Rng,
) -> Result<Study> {
    let study = Study {
        id,
        space: bbob_space(spec.dim, config.domain),
        metadata: bbob_metadata(spec),
        trials: sample_trials(spec, config, rng)?,
    };
    split_study(&study, DEFAULT_SPLIT_RATIOS, config.seed)
}

fn sample_spec(config: &TaskGenConfig, rng: &mut impl Rng) -> BBOBTaskSpec {
    let classes = config.classes();
    let function_class = classes[rng.gen_range(0..classes.len())];
    let dim = rng.gen_range(config.dim_range.0..=config.dim_range.1);
    let shift: Vec<f64> = (0..dim)
        .map(|_| round_to(rng.gen_range(config.shift_range.0..config.shift_range.1), 4))
        .collect();
    let sign_flip = config.sign_flip_prob > 0.0 && rng.gen_bool(config.sign_flip_prob);
    BBOBTaskSpec { function_class, dim, shift, sign_flip }
}

/// Generates `config.num_studies` shifted-BBOB studies. Each study derives
/// its RNG stream from (seed, study index), so the output is a pure function
/// of the config.
pub fn generate_bbob_dataset(config: &TaskGenConfig) -> Result<Vec<Study>> {
    config.validate()?;
    let mut studies = Vec::with_capacity(config.num_studies);
    for i in 0..config.num_studies {
        let mut rng = derive_rng(config.seed, &[1, i as u64]);
        let spec = sample_spec(config, &mut rng);
        let id = format!("bbob-{}-{i:05}", config.seed);
        studies.push(build_study(id, &spec, config, &mut rng)?);
    }
    Ok(studies)
}

fn parse_shift_from_description(desc: &str) -> Option<(String, usize, Vec<f64>)> {
    let func = desc.strip_prefix("function:")?;
    let (class, rest) = func.split_once(",dim:")?;
    let (dim, rest) = rest.split_once(",shift:(")?;
    let shift_text = rest.strip_suffix(')')?;
    let shift: Option<Vec<f64>> = shift_text.split(',').map(|s| s.parse().ok()).collect();
    Some((class.to_string(), dim.parse().ok()?, shift?))
}

/// Emits studies whose (function class, dimension) pairs appear in the
/// training set but whose shift vectors differ from every training shift.
pub fn generate_unseen_shift_tasks(
    config: &TaskGenConfig,
    train_set: &[Study],
) -> Result<Vec<Study>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidConfig("train_set must be nonempty".into()));
    }
    let mut seen: Vec<(String, usize, Vec<f64>)> = vec![];
    for s in train_set {
        if let Some(parsed) = parse_shift_from_description(&s.metadata.description) {
            seen.push(parsed);
        }
    }
    if seen.is_empty() {
        return Err(Error::Data("train_set carries no bbob metadata".into()));
    }
    let shifts_equal = |a: &[f64], b: &[f64]| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
    };
    let mut studies = Vec::with_capacity(config.num_studies);
    for i in 0..config.num_studies {
        let mut rng = derive_rng(config.seed, &[2, i as u64]);
        let (class_name, dim, _) = seen[rng.gen_range(0..seen.len())].clone();
        let class = FunctionClass::from_name(&class_name)
            .ok_or_else(|| Error::Data(format!("unknown class {class_name}")))?;
        let shift = loop {
            let candidate: Vec<f64> = (0..dim)
                .map(|_| round_to(rng.gen_range(config.shift_range.0..config.shift_range.1), 4))
                .collect();
            if !seen.iter().any(|(_, d, s)| *d == dim && shifts_equal(s, &candidate)) {
                break candidate;
            }
        };
        let sign_flip = config.sign_flip_prob > 0.0 && rng.gen_bool(config.sign_flip_prob);
        let spec = BBOBTaskSpec { function_class: class, dim, shift, sign_flip };
        let id = format!("bbob-unseen-{}-{i:05}", config.seed);
        studies.push(build_study(id, &spec, config, &mut rng)?);
    }
    Ok(studies)
}

/// Per-study coefficients of the conditional synthetic objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCoeffs {
    pub curvature: f64,
    pub log_lr_center: f64,
    pub beta_weight: f64,
    pub offset: f64,
}

/// Closed form of the conditional objective:
///
/// - adam branch: `curvature * (ln(lr) - log_lr_center)^2
///   + beta_weight * (beta - 0.9)^2 + offset`
/// - sgd branch:  `curvature * (ln(lr) - log_lr_center)^2 - offset`
pub fn conditional_objective(
    coeffs: &ConditionalCoeffs,
    optimizer: &str,
    lr: f64,
    beta: Option<f64>,
) -> f64 {
    let base = coeffs.curvature * (lr.ln() - coeffs.log_lr_center).powi(2);
    match optimizer {
        "adam" => base + coeffs.beta_weight * (beta.unwrap_or(0.9) - 0.9).powi(2) + coeffs.offset,
        _ => base - coeffs.offset,
    }
}

pub fn conditional_space() -> SearchSpace {
    SearchSpace::new(vec![
        ParameterConfig::categorical("optimizer", vec!["adam", "sgd"]),
        ParameterConfig::double("beta", 0.5, 0.999).with_parent("optimizer", vec!["adam"]),
        ParameterConfig::double("learning_rate", 1e-4, 1.0).with_scaling(Scaling::Log),
    ])
    .expect("conditional space is always valid")
}

/// Generates conditional two-branch studies with study-specific coefficients
/// of the documented closed form.
pub fn generate_conditional_dataset(num_studies: usize, seed: u64) -> Result<Vec<Study>> {
    generate_conditional_dataset_sized(num_studies, 30, seed)
}

pub fn generate_conditional_dataset_sized(
    num_studies: usize,
    trials_per_study: usize,
    seed: u64,
) -> Result<Vec<Study>> {
    let space = conditional_space();
    let mut studies = Vec::with_capacity(num_studies);
    for i in 0..num_studies {
        let mut rng = derive_rng(seed, &[3, i as u64]);
        let coeffs = ConditionalCoeffs {
            curvature: round_to(rng.gen_range(0.2..3.0), 3),
            log_lr_center: round_to(rng.gen_range(-7.0..-1.0), 3),
            beta_weight: round_to(rng.gen_range(1.0..20.0), 3),
            offset: round_to(rng.gen_range(-2.0..2.0), 3),
        };
        let mut trials = Vec::with_capacity(trials_per_study);
        for _ in 0..trials_per_study {
            let adam = rng.gen_bool(0.5);
            let lr = round_to(10f64.powf(rng.gen_range(-4.0..0.0)), 6).max(1e-4);
            let mut x = vec![ParameterValue::str("optimizer", if adam { "adam" } else { "sgd" })];
            let beta = if adam {
                let b = round_to(rng.gen_range(0.5..0.999), 3);
                x.push(ParameterValue::real("beta", b));
                Some(b)
            } else {
                None
            };
            x.push(ParameterValue::real("learning_rate", lr));
            let y = conditional_objective(
                &coeffs,
                if adam { "adam" } else { "sgd" },
                lr,
                beta,
            );
            trials.push(Trial::new(x, y));
        }
        let study = Study {
            id: format!("cond-{seed}-{i:05}"),
            space: space.clone(),
            metadata: StudyMetadata::new(
                &format!("conditional tuning {i}"),
                "taskgen",
                &format!(
                    "optimizer sweep,curvature:{},center:{},beta_weight:{},offset:{}",
                    sig4(coeffs.curvature),
                    sig4(coeffs.log_lr_center),
                    sig4(coeffs.beta_weight),
                    sig4(coeffs.offset)
                ),
                "loss",
            ),
            trials,
        };
        studies.push(split_study(&study, DEFAULT_SPLIT_RATIOS, seed)?);
    }
    Ok(studies)
}

/// Manifest describing how a dataset file was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub suite: String,
    pub config: TaskGenConfig,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{validate_trial, Split};
    use std::collections::HashSet;

    #[test]
    fn bbob_generation_is_deterministic() {
        let config = TaskGenConfig::new(2, 7);
        let a = generate_bbob_dataset(&config).unwrap();
        let b = generate_bbob_dataset(&config).unwrap();
        let lines_a: Vec<_> = a.iter().map(|s| s.to_jsonl_line().unwrap()).collect();
        let lines_b: Vec<_> = b.iter().map(|s| s.to_jsonl_line().unwrap()).collect();
        assert_eq!(lines_a, lines_b);
    }

    #[test]
    fn bbob_studies_are_valid_and_sized() {
        let config = TaskGenConfig::new(20, 3);
        let studies = generate_bbob_dataset(&config).unwrap();
        assert_eq!(studies.len(), 20);
        for s in &studies {
            assert_eq!(s.trials.len(), 30);
            for t in &s.trials {
                assert!(validate_trial(&s.space, &t.x).is_valid());
            }
            assert!(!s.trials_in(Split::Val).is_empty());
            assert!(!s.trials_in(Split::Test).is_empty());
        }
    }

    #[test]
    fn all_classes_present_in_large_sample() {
        let mut config = TaskGenConfig::new(1000, 5);
        config.trials_per_study = 3;
        let studies = generate_bbob_dataset(&config).unwrap();
        let classes: HashSet<String> = studies
            .iter()
            .map(|s| {
                parse_shift_from_description(&s.metadata.description)
                    .unwrap()
                    .0
            })
            .collect();
        assert_eq!(classes.len(), 24);
    }

    #[test]
    fn trajectory_sampling_produces_valid_studies() {
        let mut config = TaskGenConfig::new(3, 11);
        config.sampling = TrialSampling::RandomSearchTrajectory;
        let studies = generate_bbob_dataset(&config).unwrap();
        for s in &studies {
            assert_eq!(s.trials.len(), 30);
            for t in &s.trials {
                assert!(validate_trial(&s.space, &t.x).is_valid());
            }
        }
    }

    #[test]
    fn unseen_shift_tasks_avoid_training_shifts() {
        let train_cfg = TaskGenConfig::new(10, 1);
        let train = generate_bbob_dataset(&train_cfg).unwrap();
        let mut unseen_cfg = TaskGenConfig::new(10, 2);
        unseen_cfg.trials_per_study = 5;
        let unseen = generate_unseen_shift_tasks(&unseen_cfg, &train).unwrap();
        assert_eq!(unseen.len(), 10);

        let train_meta: Vec<_> = train
            .iter()
            .map(|s| parse_shift_from_description(&s.metadata.description).unwrap())
            .collect();
        let train_pairs: HashSet<(String, usize)> = train_meta
            .iter()
            .map(|(c, d, _)| (c.clone(), *d))
            .collect();
        for s in &unseen {
            let (class, dim, shift) =
                parse_shift_from_description(&s.metadata.description).unwrap();
            assert!(train_pairs.contains(&(class.clone(), dim)));
            for (_, d, train_shift) in &train_meta {
                if *d == dim {
                    let equal = shift
                        .iter()
                        .zip(train_shift)
                        .all(|(a, b)| (a - b).abs() <= 1e-12);
                    assert!(!equal, "unseen shift collides with training shift");
                }
            }
        }

        let again = generate_unseen_shift_tasks(&unseen_cfg, &train).unwrap();
        assert_eq!(unseen, again);
    }

    #[test]
    fn conditional_dataset_activation_and_closed_form() {
        let studies = generate_conditional_dataset(5, 9).unwrap();
        for s in &studies {
            for t in &s.trials {
                assert!(validate_trial(&s.space, &t.x).is_valid());
                let has_beta = t.value("beta").is_some();
                let is_adam = t.value("optimizer").and_then(|v| v.as_str()) == Some("adam");
                assert_eq!(has_beta, is_adam);
            }
        }
        // Pinned input against the documented closed form.
        let coeffs = ConditionalCoeffs {
            curvature: 1.0,
            log_lr_center: -2.0,
            beta_weight: 10.0,
            offset: 0.5,
        };
        let lr = (-2.0f64).exp();
        let adam = conditional_objective(&coeffs, "adam", lr, Some(1.0));
        assert!((adam - (10.0 * 0.01 + 0.5)).abs() < 1e-12);
        let sgd = conditional_objective(&coeffs, "sgd", lr, None);
        assert!((sgd - (-0.5)).abs() < 1e-12);

        // Different seeds give different coefficients.
        let other = generate_conditional_dataset(5, 10).unwrap();
        assert_ne!(
            studies[0].metadata.description,
            other[0].metadata.description
        );
    }

    #[test]
    fn sign_flip_prob_hides_flip_from_metadata() {
        let mut config = TaskGenConfig::new(30, 13);
        config.sign_flip_prob = 0.5;
        config.function_classes = Some(vec![FunctionClass::Sphere]);
        config.trials_per_study = 5;
        let studies = generate_bbob_dataset(&config).unwrap();
        // Some studies must contain negative sphere values (flipped).
        let any_flipped = studies.iter().any(|s| {
            s.trials
                .iter()
                .any(|t| t.y.feasible().map(|y| y < 0.0).unwrap_or(false))
        });
        let any_plain = studies.iter().any(|s| {
            s.trials
                .iter()
                .all(|t| t.y.feasible().map(|y| y >= 0.0).unwrap_or(true))
        });
        assert!(any_flipped && any_plain);
        for s in &studies {
            assert!(!s.metadata.description.contains("flip"));
        }
    }
}
