//! Grammar-constrained sampling: draw numeric samples from a trained model
//! and aggregate them into a point prediction with uncertainty.
//!
//! Run with: cargo run --release --example sample_predictions

use textregress::decode::{sample_predictions, AggregateMethod, SampleConfig};
use textregress::lm::{init_model, pretrain, TrainConfig, TransformerConfig};
use textregress::study::Split;
use textregress::taskgen::{generate_bbob_dataset, TaskGenConfig};
use textregress::textio::{build_vocabulary, render_prompt, FloatTokenization};

fn main() -> textregress::Result<()> {
    let mut gen = TaskGenConfig::new(6, 3);
    gen.trials_per_study = 20;
    let studies = generate_bbob_dataset(&gen)?;
    let vocab = build_vocabulary(&studies, 1024, FloatTokenization::default())?;
    let model_cfg = TransformerConfig {
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
    let train_cfg = TrainConfig {
        max_steps: 200,
        batch_size: 8,
        eval_every: 50,
        ..TrainConfig::pretrain(3)
    };
    let start = init_model(&model_cfg, &vocab, 3)?;
    let (ckpt, _) = pretrain(&start, &studies, &train_cfg)?;

    let study = &studies[0];
    let trial = study.trials_in(Split::Test)[0];
    let prompt = render_prompt(&study.space, &trial.x, &study.metadata)?;
    println!("true y = {:.4}\n", trial.y.feasible().unwrap());

    // Every emitted sequence is grammatical by construction: at each step
    // only tokens the float grammar allows are considered.
    for (label, method) in [
        ("median", AggregateMethod::Median),
        ("mean", AggregateMethod::Mean),
        ("max-likelihood", AggregateMethod::MaxLikelihood),
    ] {
        let cfg = SampleConfig { n: 16, aggregate_method: method, ..Default::default() };
        let pred = sample_predictions(&ckpt, &prompt, &cfg)?;
        println!(
            "{label:>14}: {:>10.4}  (uncertainty {:.4}, {:?})",
            pred.aggregate, pred.uncertainty, pred.uncertainty_kind
        );
    }

    // Temperature 0 is a deterministic greedy decode.
    let greedy = SampleConfig { n: 1, temperature: 0.0, ..Default::default() };
    let pred = sample_predictions(&ckpt, &prompt, &greedy)?;
    println!("{:>14}: {:>10.4}", "greedy", pred.aggregate);

    let cfg = SampleConfig { n: 8, ..Default::default() };
    let pred = sample_predictions(&ckpt, &prompt, &cfg)?;
    println!("\n8 raw samples (value, logprob):");
    for (value, logprob) in &pred.samples {
        println!("  {value:>12.4}  {logprob:>8.3}");
    }
    Ok(())
}
