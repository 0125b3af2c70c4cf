use crate::error::{Error, Result};
use crate::study::{validate_trial, ParameterValue, SearchSpace, StudyMetadata, TrialVerdict, Value};

/// Joins the serialized `x` and `m` halves of a prompt.
pub const PROMPT_SEPARATOR: &str = "&";

fn render_value(v: &Value) -> String {
    match v {
        // `{}` on f64 is the shortest decimal that round-trips.
        Value::Real(r) => format!("{r}"),
        Value::Int(i) => format!("{i}"),
        Value::Str(s) => format!("'{s}'"),
    }
}

/// Renders a valid assignment as comma-joined `name:value` pairs, names
/// sorted lexicographically. Inactive conditional parameters must already be
/// absent from `x` (that is what makes it valid), so they never appear. The
/// space itself — bounds, choices — is deliberately not serialized.
pub fn serialize_x(space: &SearchSpace, x: &[ParameterValue]) -> Result<String> {
    if let TrialVerdict::Invalid(reason) = validate_trial(space, x) {
        return Err(Error::InvalidTrial(reason));
    }
    let mut pairs: Vec<(&str, String)> = x
        .iter()
        .map(|pv| (pv.name.as_str(), render_value(&pv.value)))
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(b.0));
    Ok(pairs
        .into_iter()
        .map(|(name, value)| format!("{name}:{value}"))
        .collect::<Vec<_>>()
        .join(","))
}

/// Renders metadata in the fixed order title, user, description, objective,
/// then any extra pairs in stored order; all values single-quoted.
pub fn serialize_m(m: &StudyMetadata) -> String {
    let mut out = format!(
        "title:'{}',user:'{}',description:'{}',objective:'{}'",
        m.title, m.user, m.description, m.objective_name
    );
    for (k, v) in &m.extra {
        out.push_str(&format!(",{k}:'{v}'"));
    }
    out
}

/// The full prompt for one trial: `x_text & m_text`.
pub fn render_prompt(space: &SearchSpace, x: &[ParameterValue], m: &StudyMetadata) -> Result<String> {
    Ok(format!(
        "{}{}{}",
        serialize_x(space, x)?,
        PROMPT_SEPARATOR,
        serialize_m(m)
    ))
}
