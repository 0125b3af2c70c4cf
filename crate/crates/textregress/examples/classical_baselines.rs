//! Fit the classical single-task regressors (MLP, GP, GBT, RF) on one study
//! and compare their normalized study errors.
//!
//! Run with: cargo run --release --example classical_baselines

use textregress::baselines::{featurize, fit_predict_study, BaselineKind, FeatureLayout};
use textregress::eval::study_error;
use textregress::taskgen::{generate_bbob_dataset, TaskGenConfig};

fn main() -> textregress::Result<()> {
    let mut gen = TaskGenConfig::new(1, 17);
    gen.trials_per_study = 60;
    let studies = generate_bbob_dataset(&gen)?;
    let study = &studies[0];
    let (y_min, y_max) = study.y_range().unwrap();
    println!(
        "study {} ({}), y in [{y_min:.2}, {y_max:.2}]",
        study.id, study.metadata.title
    );

    // All baselines share one featurization: numerics scaled into [0,1],
    // categoricals one-hot, inactive conditional parameters marked missing.
    let layout = FeatureLayout::new(&study.space);
    let fv = featurize(&study.space, &study.trials[0].x)?;
    println!("feature dim {} ({} parameters): {fv:.3?}\n", layout.dim, layout.slices.len());

    println!("baseline    study_error");
    for kind in [BaselineKind::Mlp, BaselineKind::Gp, BaselineKind::Gbt, BaselineKind::Rf] {
        let records = fit_predict_study(study, kind, 17)?;
        let preds: Vec<f64> = records.iter().map(|r| r.aggregate).collect();
        let ys: Vec<f64> = records
            .iter()
            .map(|r| study.trials[r.trial_index].y.feasible().unwrap())
            .collect();
        let err = study_error(&preds, &ys, y_min, y_max)?;
        println!("{kind:>8?}    {err:.4}");
    }

    // The GP also reports a posterior standard deviation per prediction.
    let gp = fit_predict_study(study, BaselineKind::Gp, 17)?;
    println!("\nGP predictions with uncertainty (first 5 test trials):");
    for r in gp.iter().take(5) {
        let y = study.trials[r.trial_index].y.feasible().unwrap();
        println!(
            "  trial {:>2}: pred {:>9.3} +/- {:>7.3}   true {:>9.3}",
            r.trial_index,
            r.aggregate,
            r.uncertainty.unwrap(),
            y
        );
    }
    Ok(())
}
