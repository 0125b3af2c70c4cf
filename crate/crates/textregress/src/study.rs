//! Study, trial and search-space data model.
//!
//! Mirrors OSS Vizier semantics: a space is a list of typed parameters
//! (double / integer / discrete / categorical), optionally log-scaled,
//! optionally conditional on a categorical parent. A study is an ordered
//! collection of evaluated trials plus task-level metadata, with a
//! train/validation/test split tag per trial.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParameterKind {
    Double,
    Integer,
    Discrete,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    Linear,
    Log,
    ReverseLog,
}

/// Conditional activation: the owning parameter is active only when the
/// parent categorical takes one of the trigger values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentSpec {
    pub parent_name: String,
    pub trigger_values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterConfig {
    pub name: String,
    pub kind: ParameterKind,
    /// [low, high] for DOUBLE / INTEGER.
    pub bounds: Option<(f64, f64)>,
    /// Strictly increasing feasible reals for DISCRETE.
    pub feasible_reals: Vec<f64>,
    /// Distinct feasible strings for CATEGORICAL.
    pub feasible_categories: Vec<String>,
    pub scaling: Scaling,
    pub parent: Option<ParentSpec>,
}

impl ParameterConfig {
    pub fn double(name: impl Into<String>, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            kind: ParameterKind::Double,
            bounds: Some((low, high)),
            feasible_reals: vec![],
            feasible_categories: vec![],
            scaling: Scaling::Linear,
            parent: None,
        }
    }

    pub fn integer(name: impl Into<String>, low: i64, high: i64) -> Self {
        Self {
            name: name.into(),
            kind: ParameterKind::Integer,
            bounds: Some((low as f64, high as f64)),
            feasible_reals: vec![],
            feasible_categories: vec![],
            scaling: Scaling::Linear,
            parent: None,
        }
    }

    pub fn discrete(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: ParameterKind::Discrete,
            bounds: None,
            feasible_reals: values,
            feasible_categories: vec![],
            scaling: Scaling::Linear,
            parent: None,
        }
    }

    pub fn categorical(name: impl Into<String>, values: Vec<&str>) -> Self {
        Self {
            name: name.into(),
            kind: ParameterKind::Categorical,
            bounds: None,
            feasible_reals: vec![],
            feasible_categories: values.into_iter().map(String::from).collect(),
            scaling: Scaling::Linear,
            parent: None,
        }
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn with_parent(mut self, parent_name: impl Into<String>, triggers: Vec<&str>) -> Self {
        self.parent = Some(ParentSpec {
            parent_name: parent_name.into(),
            trigger_values: triggers.into_iter().map(String::from).collect(),
        });
        self
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidSpace(format!("{}: {}", self.name, msg)));
        match self.kind {
            ParameterKind::Double | ParameterKind::Integer => {
                let (low, high) = self
                    .bounds
                    .ok_or_else(|| Error::InvalidSpace(format!("{}: missing bounds", self.name)))?;
                if !(low < high) {
                    return err(format!("bounds must satisfy low < high, got [{low}, {high}]"));
                }
                if self.scaling != Scaling::Linear && low <= 0.0 {
                    return err("log scaling requires low > 0".into());
                }
            }
            ParameterKind::Discrete => {
                if self.feasible_reals.is_empty() {
                    return err("discrete parameter needs feasible values".into());
                }
                if !self.feasible_reals.windows(2).all(|w| w[0] < w[1]) {
                    return err("discrete values must be strictly increasing".into());
                }
                if self.scaling != Scaling::Linear && self.feasible_reals[0] <= 0.0 {
                    return err("log scaling requires positive values".into());
                }
            }
            ParameterKind::Categorical => {
                if self.feasible_categories.is_empty() {
                    return err("categorical parameter needs feasible values".into());
                }
                let distinct: HashSet<_> = self.feasible_categories.iter().collect();
                if distinct.len() != self.feasible_categories.len() {
                    return err("categorical values must be distinct".into());
                }
                if self.scaling != Scaling::Linear {
                    return err("scaling only applies to numeric kinds".into());
                }
            }
        }
        Ok(())
    }
}

/// An ordered list of parameter configs forming the search space.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    parameters: Vec<ParameterConfig>,
}

impl SearchSpace {
    pub fn new(parameters: Vec<ParameterConfig>) -> Result<Self> {
        let mut names = HashSet::new();
        for p in &parameters {
            p.validate()?;
            if !names.insert(p.name.clone()) {
                return Err(Error::InvalidSpace(format!("duplicate parameter name {}", p.name)));
            }
        }
        let by_name: HashMap<_, _> = parameters.iter().map(|p| (p.name.as_str(), p)).collect();
        for p in &parameters {
            if let Some(parent) = &p.parent {
                let pc = by_name.get(parent.parent_name.as_str()).ok_or_else(|| {
                    Error::InvalidSpace(format!(
                        "{}: unknown parent {}",
                        p.name, parent.parent_name
                    ))
                })?;
                if pc.kind != ParameterKind::Categorical {
                    return Err(Error::InvalidSpace(format!(
                        "{}: parent {} is not categorical",
                        p.name, parent.parent_name
                    )));
                }
                for t in &parent.trigger_values {
                    if !pc.feasible_categories.contains(t) {
                        return Err(Error::InvalidSpace(format!(
                            "{}: trigger value {t:?} not feasible for parent {}",
                            p.name, parent.parent_name
                        )));
                    }
                }
            }
        }
        // Parent references must form a forest (no cycles).
        for p in &parameters {
            let mut seen = HashSet::new();
            let mut cur = p;
            while let Some(parent) = &cur.parent {
                if !seen.insert(parent.parent_name.clone()) {
                    return Err(Error::InvalidSpace(format!(
                        "cycle in parent references at {}",
                        parent.parent_name
                    )));
                }
                cur = by_name[parent.parent_name.as_str()];
            }
        }
        Ok(Self { parameters })
    }

    pub fn parameters(&self) -> &[ParameterConfig] {
        &self.parameters
    }

    pub fn get(&self, name: &str) -> Option<&ParameterConfig> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Names of parameters active under the given assignment, in space order.
    pub fn active_parameters(&self, values: &HashMap<&str, &Value>) -> Vec<&str> {
        self.parameters
            .iter()
            .filter(|p| self.is_active(p, values))
            .map(|p| p.name.as_str())
            .collect()
    }

    fn is_active(&self, p: &ParameterConfig, values: &HashMap<&str, &Value>) -> bool {
        match &p.parent {
            None => true,
            Some(parent) => {
                let Some(pc) = self.get(&parent.parent_name) else {
                    return false;
                };
                if !self.is_active(pc, values) {
                    return false;
                }
                match values.get(parent.parent_name.as_str()) {
                    Some(Value::Str(s)) => parent.trigger_values.iter().any(|t| t == s),
                    _ => false,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            Value::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterValue {
    pub name: String,
    pub value: Value,
}

impl ParameterValue {
    pub fn real(name: impl Into<String>, v: f64) -> Self {
        Self { name: name.into(), value: Value::Real(v) }
    }
    pub fn int(name: impl Into<String>, v: i64) -> Self {
        Self { name: name.into(), value: Value::Int(v) }
    }
    pub fn str(name: impl Into<String>, v: impl Into<String>) -> Self {
        Self { name: name.into(), value: Value::Str(v.into()) }
    }
}

/// Objective value of a trial. Infeasible trials are removed by
/// preprocessing, never learned from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Feasible(f64),
    Infeasible,
}

impl Objective {
    pub fn feasible(&self) -> Option<f64> {
        match self {
            Objective::Feasible(v) => Some(*v),
            Objective::Infeasible => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub x: Vec<ParameterValue>,
    pub y: Objective,
    pub split: Split,
}

impl Trial {
    pub fn new(x: Vec<ParameterValue>, y: f64) -> Self {
        Self { x, y: Objective::Feasible(y), split: Split::Train }
    }

    pub fn infeasible(x: Vec<ParameterValue>) -> Self {
        Self { x, y: Objective::Infeasible, split: Split::Train }
    }

    pub fn value(&self, name: &str) -> Option<&Value> {
        self.x.iter().find(|pv| pv.name == name).map(|pv| &pv.value)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyMetadata {
    pub title: String,
    pub user: String,
    pub description: String,
    pub objective_name: String,
    /// Extra key/value pairs, keys unique, order preserved.
    pub extra: Vec<(String, String)>,
}

impl StudyMetadata {
    pub fn new(title: &str, user: &str, description: &str, objective_name: &str) -> Self {
        Self {
            title: title.into(),
            user: user.into(),
            description: description.into(),
            objective_name: objective_name.into(),
            extra: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub id: String,
    pub space: SearchSpace,
    pub metadata: StudyMetadata,
    pub trials: Vec<Trial>,
}

/// Outcome of validating one trial against a space.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialVerdict {
    Valid,
    Invalid(String),
}

impl TrialVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, TrialVerdict::Valid)
    }
}

/// Checks that `x` names exactly the active parameters for its conditional
/// assignment and that every value is in range / vocabulary. Returns the
/// first violation found.
pub fn validate_trial(space: &SearchSpace, x: &[ParameterValue]) -> TrialVerdict {
    let invalid = |msg: String| TrialVerdict::Invalid(msg);
    let mut seen = HashSet::new();
    for pv in x {
        if !seen.insert(pv.name.as_str()) {
            return invalid(format!("duplicate parameter {}", pv.name));
        }
        if space.get(&pv.name).is_none() {
            return invalid(format!("unknown parameter {}", pv.name));
        }
    }
    let values: HashMap<&str, &Value> = x.iter().map(|pv| (pv.name.as_str(), &pv.value)).collect();
    let active: HashSet<&str> = space.active_parameters(&values).into_iter().collect();
    for pv in x {
        if !active.contains(pv.name.as_str()) {
            return invalid(format!("{} inactive", pv.name));
        }
    }
    for name in &active {
        if !values.contains_key(name) {
            return invalid(format!("{name} active but missing"));
        }
    }
    for pv in x {
        let cfg = space.get(&pv.name).expect("checked above");
        match cfg.kind {
            ParameterKind::Double => match pv.value.as_f64() {
                Some(v) => {
                    let (low, high) = cfg.bounds.unwrap();
                    if !(v >= low && v <= high) {
                        return invalid(format!("{}: {v} out of bounds [{low}, {high}]", pv.name));
                    }
                }
                None => return invalid(format!("{}: expected real value", pv.name)),
            },
            ParameterKind::Integer => match &pv.value {
                Value::Int(v) => {
                    let (low, high) = cfg.bounds.unwrap();
                    let v = *v as f64;
                    if !(v >= low && v <= high) {
                        return invalid(format!("{}: {v} out of bounds [{low}, {high}]", pv.name));
                    }
                }
                _ => return invalid(format!("{}: expected integer value", pv.name)),
            },
            ParameterKind::Discrete => match pv.value.as_f64() {
                Some(v) => {
                    if !cfg.feasible_reals.iter().any(|&f| f == v) {
                        return invalid(format!("{}: {v} not a feasible value", pv.name));
                    }
                }
                None => return invalid(format!("{}: expected real value", pv.name)),
            },
            ParameterKind::Categorical => match pv.value.as_str() {
                Some(s) => {
                    if !cfg.feasible_categories.iter().any(|f| f == s) {
                        return invalid(format!("{}: {s:?} not a feasible value", pv.name));
                    }
                }
                None => return invalid(format!("{}: expected string value", pv.name)),
            },
        }
    }
    TrialVerdict::Valid
}

/// Default trial-count hard limit applied during preprocessing.
pub const DEFAULT_MAX_TRIALS: usize = 1000;

/// Truncates to the first `max_trials` trials, then removes infeasible
/// trials. Order is preserved; the result must be nonempty.
pub fn preprocess_study(raw: &Study, max_trials: usize) -> Result<Study> {
    if max_trials == 0 {
        return Err(Error::InvalidConfig("max_trials must be >= 1".into()));
    }
    let trials: Vec<Trial> = raw
        .trials
        .iter()
        .take(max_trials)
        .filter(|t| matches!(t.y, Objective::Feasible(_)))
        .cloned()
        .collect();
    if trials.is_empty() {
        return Err(Error::DegenerateStudy(format!(
            "study {} has no feasible trials",
            raw.id
        )));
    }
    Ok(Study { trials, ..raw.clone() })
}

/// Default train/validation/test split ratios.
pub const DEFAULT_SPLIT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Shuffles trials deterministically (keyed by seed and study id) and tags
/// them train/val/test by floor partition, remainder to TRAIN. When floor
/// partitioning would leave VALIDATION or TEST empty and the study has at
/// least 3 trials, one trial each is moved out of TRAIN.
pub fn split_study(study: &Study, ratios: (f64, f64, f64), seed: u64) -> Result<Study> {
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv <= 0.0 || rs <= 0.0 {
        return Err(Error::InvalidConfig("split ratios must be positive".into()));
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig("split ratios must sum to 1".into()));
    }
    let n = study.trials.len();
    if n < 3 {
        return Err(Error::DegenerateStudy(format!(
            "study {} has {n} trials, need >= 3 to split",
            study.id
        )));
    }
    let mut id_hash = 0u64;
    for b in study.id.as_bytes() {
        id_hash = id_hash.wrapping_mul(131).wrapping_add(*b as u64);
    }
    let mut rng = derive_rng(seed, &[0x51717, id_hash]);
    let mut trials = study.trials.clone();
    trials.shuffle(&mut rng);

    let mut n_train = (rt * n as f64).floor() as usize;
    let mut n_val = (rv * n as f64).floor() as usize;
    let n_test = (rs * n as f64).floor() as usize;
    n_train += n - n_train - n_val - n_test;
    if n_val == 0 {
        n_train -= 1;
        n_val = 1;
    }
    if n_test == 0 {
        // Steal one trial from TRAIN; everything past train+val is TEST.
        n_train -= 1;
    }
    for (i, t) in trials.iter_mut().enumerate() {
        t.split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(Study { trials, ..study.clone() })
}

impl Study {
    pub fn trials_in(&self, split: Split) -> Vec<&Trial> {
        self.trials.iter().filter(|t| t.split == split).collect()
    }

    /// (y_min, y_max) over all feasible trials, irrespective of split.
    pub fn y_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for t in &self.trials {
            if let Objective::Feasible(y) = t.y {
                range = Some(match range {
                    None => (y, y),
                    Some((lo, hi)) => (lo.min(y), hi.max(y)),
                });
            }
        }
        range
    }
}

// ---------------------------------------------------------------------------
// JSONL study file format. Numeric values are stored as decimal strings to
// avoid binary-float drift across languages.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ParentJson {
    parent_name: String,
    trigger_values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ParameterJson {
    name: String,
    kind: ParameterKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    feasible_values: Vec<String>,
    #[serde(default)]
    scaling: Scaling,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent: Option<ParentJson>,
}

#[derive(Serialize, Deserialize)]
struct SpaceJson {
    parameters: Vec<ParameterJson>,
}

#[derive(Serialize, Deserialize)]
struct MetadataJson {
    title: String,
    user: String,
    description: String,
    objective: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extra: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct TrialJson {
    x: BTreeMap<String, String>,
    y: String,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct StudyJson {
    id: String,
    space: SpaceJson,
    metadata: MetadataJson,
    trials: Vec<TrialJson>,
}

fn fmt_decimal(v: f64) -> String {
    format!("{v}")
}

fn parse_decimal(s: &str, ctx: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Data(format!("{ctx}: bad decimal string {s:?}")))
}

impl Study {
    pub fn to_json(&self) -> StudyJsonOwned {
        let parameters = self
            .space
            .parameters()
            .iter()
            .map(|p| ParameterJson {
                name: p.name.clone(),
                kind: p.kind,
                bounds: p.bounds.map(|(lo, hi)| [fmt_decimal(lo), fmt_decimal(hi)]),
                feasible_values: match p.kind {
                    ParameterKind::Discrete => {
                        p.feasible_reals.iter().map(|v| fmt_decimal(*v)).collect()
                    }
                    ParameterKind::Categorical => p.feasible_categories.clone(),
                    _ => vec![],
                },
                scaling: p.scaling,
                parent: p.parent.as_ref().map(|pp| ParentJson {
                    parent_name: pp.parent_name.clone(),
                    trigger_values: pp.trigger_values.clone(),
                }),
            })
            .collect();
        let trials = self
            .trials
            .iter()
            .map(|t| TrialJson {
                x: t.x
                    .iter()
                    .map(|pv| {
                        let s = match &pv.value {
                            Value::Real(v) => fmt_decimal(*v),
                            Value::Int(v) => format!("{v}"),
                            Value::Str(s) => s.clone(),
                        };
                        (pv.name.clone(), s)
                    })
                    .collect(),
                y: match t.y {
                    Objective::Feasible(v) => fmt_decimal(v),
                    Objective::Infeasible => "infeasible".into(),
                },
                split: t.split,
            })
            .collect();
        StudyJsonOwned(StudyJson {
            id: self.id.clone(),
            space: SpaceJson { parameters },
            metadata: MetadataJson {
                title: self.metadata.title.clone(),
                user: self.metadata.user.clone(),
                description: self.metadata.description.clone(),
                objective: self.metadata.objective_name.clone(),
                extra: self.metadata.extra.clone(),
            },
            trials,
        })
    }

    pub fn to_jsonl_line(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_json().0)?)
    }

    pub fn from_jsonl_line(line: &str) -> Result<Study> {
        let raw: StudyJson = serde_json::from_str(line)?;
        let mut parameters = Vec::with_capacity(raw.space.parameters.len());
        for p in &raw.space.parameters {
            let bounds = match &p.bounds {
                Some([lo, hi]) => Some((
                    parse_decimal(lo, &p.name)?,
                    parse_decimal(hi, &p.name)?,
                )),
                None => None,
            };
            let mut feasible_reals = vec![];
            let mut feasible_categories = vec![];
            match p.kind {
                ParameterKind::Discrete => {
                    for v in &p.feasible_values {
                        feasible_reals.push(parse_decimal(v, &p.name)?);
                    }
                }
                ParameterKind::Categorical => {
                    feasible_categories = p.feasible_values.clone();
                }
                _ => {}
            }
            parameters.push(ParameterConfig {
                name: p.name.clone(),
                kind: p.kind,
                bounds,
                feasible_reals,
                feasible_categories,
                scaling: p.scaling,
                parent: p.parent.as_ref().map(|pp| ParentSpec {
                    parent_name: pp.parent_name.clone(),
                    trigger_values: pp.trigger_values.clone(),
                }),
            });
        }
        let space = SearchSpace::new(parameters)?;
        let mut trials = Vec::with_capacity(raw.trials.len());
        for tj in &raw.trials {
            // Reconstruct x in space order so loads are canonical.
            let mut x = Vec::with_capacity(tj.x.len());
            for p in space.parameters() {
                if let Some(s) = tj.x.get(&p.name) {
                    let value = match p.kind {
                        ParameterKind::Double | ParameterKind::Discrete => {
                            Value::Real(parse_decimal(s, &p.name)?)
                        }
                        ParameterKind::Integer => Value::Int(
                            s.parse::<i64>()
                                .map_err(|_| Error::Data(format!("{}: bad integer {s:?}", p.name)))?,
                        ),
                        ParameterKind::Categorical => Value::Str(s.clone()),
                    };
                    x.push(ParameterValue { name: p.name.clone(), value });
                }
            }
            if x.len() != tj.x.len() {
                return Err(Error::Data(format!(
                    "study {}: trial has parameters outside the space",
                    raw.id
                )));
            }
            let y = if tj.y == "infeasible" {
                Objective::Infeasible
            } else {
                Objective::Feasible(parse_decimal(&tj.y, "y")?)
            };
            trials.push(Trial { x, y, split: tj.split });
        }
        Ok(Study {
            id: raw.id,
            space,
            metadata: StudyMetadata {
                title: raw.metadata.title,
                user: raw.metadata.user,
                description: raw.metadata.description,
                objective_name: raw.metadata.objective,
                extra: raw.metadata.extra,
            },
            trials,
        })
    }
}

/// Opaque serializable form of a study (one JSONL object).
pub struct StudyJsonOwned(StudyJson);

pub fn write_studies_jsonl(path: &Path, studies: &[Study]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for s in studies {
        writeln!(w, "{}", s.to_jsonl_line()?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_studies_jsonl(path: &Path) -> Result<Vec<Study>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut studies = vec![];
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        studies.push(Study::from_jsonl_line(&line)?);
    }
    Ok(studies)
}

#[cfg(test)]
pub(crate) fn fig2_space() -> SearchSpace {
    SearchSpace::new(vec![
        ParameterConfig::categorical("optimizer", vec!["adam", "sgd"]),
        ParameterConfig::double("beta", 0.0, 1.0).with_parent("optimizer", vec!["adam"]),
        ParameterConfig::double("lr", 1e-4, 1.0).with_scaling(Scaling::Log),
    ])
    .unwrap()
}
