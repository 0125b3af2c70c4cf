use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::study::{ParameterValue, SearchSpace, Study, Value};

/// Which textual surfaces get replaced by study-keyed hashes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnonymizeMode {
    /// Only the metadata strings (title, user, description, objective,
    /// extras) are hashed; parameter names and values stay readable.
    MetadataOnly,
    /// Metadata plus parameter names, categorical choices and string trial
    /// values — everything textual except numbers.
    NamesAndStrings,
}

/// First 16 hex characters of sha256(study_id || 0x00 || s). Keying by
/// study id keeps the map injective per study while making the same string
/// hash differently across studies, so studies stay distinguishable without
/// leaking shared text.
fn study_hash(study_id: &str, s: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(study_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(s.as_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Returns a copy of `study` with targeted strings replaced by hashes.
/// Structure is untouched: trial count, split tags and all numeric values
/// are identical to the input.
pub fn anonymize_study(study: &Study, mode: AnonymizeMode) -> Result<Study> {
    let h = |s: &str| study_hash(&study.id, s);
    let mut out = study.clone();

    out.metadata.title = h(&out.metadata.title);
    out.metadata.user = h(&out.metadata.user);
    out.metadata.description = h(&out.metadata.description);
    out.metadata.objective_name = h(&out.metadata.objective_name);
    for (k, v) in &mut out.metadata.extra {
        *k = h(k);
        *v = h(v);
    }
    if mode == AnonymizeMode::MetadataOnly {
        return Ok(out);
    }

    let mut params = study.space.parameters().to_vec();
    for p in &mut params {
        p.name = h(&p.name);
        for c in &mut p.feasible_categories {
            *c = h(c);
        }
        if let Some(parent) = &mut p.parent {
            parent.parent_name = h(&parent.parent_name);
            for t in &mut parent.trigger_values {
                *t = h(t);
            }
        }
    }
    out.space = SearchSpace::new(params)?;
    for trial in &mut out.trials {
        trial.x = trial
            .x
            .iter()
            .map(|pv| ParameterValue {
                name: h(&pv.name),
                value: match &pv.value {
                    Value::Str(s) => Value::Str(h(s)),
                    v => v.clone(),
                },
            })
            .collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::{
        validate_trial, ParameterValue, Split, StudyMetadata, Trial,
    };

    fn sample_study(id: &str) -> Study {
        let space = crate::study::fig2_space();
        let mut t1 = Trial::new(
            vec![
                ParameterValue::str("optimizer", "adam"),
                ParameterValue::real("beta", 0.9),
                ParameterValue::real("lr", 0.01),
            ],
            1.5,
        );
        t1.split = Split::Train;
        let mut t2 = Trial::new(
            vec![
                ParameterValue::str("optimizer", "sgd"),
                ParameterValue::real("lr", 0.1),
            ],
            -2.0,
        );
        t2.split = Split::Test;
        let trials = vec![t1, t2];
        Study {
            id: id.into(),
            space,
            metadata: StudyMetadata::new("title", "user", "desc", "obj"),
            trials,
        }
    }

    #[test]
    fn metadata_fields_all_change() {
        let study = sample_study("s1");
        let anon = anonymize_study(&study, AnonymizeMode::MetadataOnly).unwrap();
        assert_ne!(anon.metadata.title, study.metadata.title);
        assert_ne!(anon.metadata.user, study.metadata.user);
        assert_ne!(anon.metadata.description, study.metadata.description);
        assert_ne!(anon.metadata.objective_name, study.metadata.objective_name);
        assert_eq!(anon.metadata.title.len(), 16);
        // Space and trials untouched in this mode.
        assert_eq!(anon.space, study.space);
        assert_eq!(anon.trials, study.trials);
    }

    #[test]
    fn same_string_same_study_same_hash() {
        let mut study = sample_study("s1");
        study.metadata.user = study.metadata.title.clone();
        let anon = anonymize_study(&study, AnonymizeMode::MetadataOnly).unwrap();
        assert_eq!(anon.metadata.title, anon.metadata.user);
    }

    #[test]
    fn same_string_different_studies_differ() {
        let a = anonymize_study(&sample_study("s1"), AnonymizeMode::MetadataOnly).unwrap();
        let b = anonymize_study(&sample_study("s2"), AnonymizeMode::MetadataOnly).unwrap();
        assert_ne!(a.metadata.title, b.metadata.title);
    }

    #[test]
    fn names_and_strings_rewrites_consistently() {
        let study = sample_study("s1");
        let anon = anonymize_study(&study, AnonymizeMode::NamesAndStrings).unwrap();
        // Renamed trials still validate against the renamed space.
        for trial in &anon.trials {
            assert!(validate_trial(&anon.space, &trial.x).is_valid());
        }
        // Parent references follow the renamed categorical.
        let beta = anon
            .space
            .parameters()
            .iter()
            .find(|p| p.parent.is_some())
            .unwrap();
        let parent = beta.parent.as_ref().unwrap();
        assert!(anon.space.get(&parent.parent_name).is_some());
        assert_ne!(parent.parent_name, "optimizer");
    }

    #[test]
    fn numbers_splits_and_counts_preserved() {
        let study = sample_study("s1");
        let anon = anonymize_study(&study, AnonymizeMode::NamesAndStrings).unwrap();
        assert_eq!(anon.trials.len(), study.trials.len());
        for (a, o) in anon.trials.iter().zip(&study.trials) {
            assert_eq!(a.y, o.y);
            assert_eq!(a.split, o.split);
            for (apv, opv) in a.x.iter().zip(&o.x) {
                match (&apv.value, &opv.value) {
                    (Value::Real(x), Value::Real(y)) => assert_eq!(x, y),
                    (Value::Int(x), Value::Int(y)) => assert_eq!(x, y),
                    (Value::Str(x), Value::Str(y)) => assert_ne!(x, y),
                    other => panic!("kind changed: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let study = sample_study("s1");
        let a = anonymize_study(&study, AnonymizeMode::NamesAndStrings).unwrap();
        let b = anonymize_study(&study, AnonymizeMode::NamesAndStrings).unwrap();
        assert_eq!(a.metadata, b.metadata);
        assert_eq!(a.trials, b.trials);
    }

    #[test]
    fn anonymized_study_still_serializes() {
        let study = sample_study("s1");
        let anon = anonymize_study(&study, AnonymizeMode::NamesAndStrings).unwrap();
        for trial in &anon.trials {
            let prompt =
                crate::textio::render_prompt(&anon.space, &trial.x, &anon.metadata).unwrap();
            assert!(prompt.contains('&'));
        }
    }
}
