//! Run a miniature task-scaling experiment end to end, then rerun it to show
//! the content-hash cache skipping retraining.
//!
//! Run with: cargo run --release --example experiment_suite

use textregress::experiments::{run_scaling_experiment, ExperimentPlan};
use textregress::lm::{TrainConfig, TransformerConfig};

fn main() -> textregress::Result<()> {
    let out = std::env::temp_dir().join("textregress_example_experiments");
    let mut plan = ExperimentPlan::new("scaling-demo", &out, 11);
    // Shrunk far below the defaults so the demo finishes quickly.
    plan.num_studies_levels = vec![2, 6];
    plan.trials_per_study = 15;
    plan.eval_studies = 3;
    plan.eval_samples = 4;
    plan.model_config = TransformerConfig {
        enc_layers: 1,
        dec_layers: 1,
        heads: 2,
        head_dim: 8,
        embed_dim: 16,
        mlp_dim: 32,
        max_prompt_len: 96,
        max_target_len: 8,
        dropout: 0.0,
    };
    plan.train_config = TrainConfig {
        max_steps: 60,
        batch_size: 8,
        eval_every: 20,
        ..TrainConfig::pretrain(11)
    };
    plan.validate()?;
    println!("plan hash {}, run dir {}", plan.hash(), plan.run_dir().display());

    let start = std::time::Instant::now();
    let report = run_scaling_experiment(&plan)?;
    println!("\nfirst run ({:.1?}):", start.elapsed());
    println!("num_studies  mean_study_error");
    for (n, err) in &report.curve {
        println!("{n:>11}  {err:.4}");
    }
    println!("baseline references:");
    for (name, err) in &report.baseline_refs {
        println!("{name:>11}  {err:.4}");
    }

    // Same plan, same run directory: the finished report is loaded instead
    // of retraining anything.
    let start = std::time::Instant::now();
    let cached = run_scaling_experiment(&plan)?;
    println!(
        "\nsecond run ({:.1?}): from_cache = {}",
        start.elapsed(),
        cached.from_cache
    );
    Ok(())
}
