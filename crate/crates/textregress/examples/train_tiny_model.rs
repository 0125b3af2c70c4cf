//! Pretrain a tiny model on a handful of studies and watch the loss fall.
//!
//! Run with: cargo run --release --example train_tiny_model

use textregress::lm::{init_model, pretrain, TrainConfig, TransformerConfig};
use textregress::taskgen::{generate_bbob_dataset, TaskGenConfig};
use textregress::textio::{build_vocabulary, FloatTokenization};

fn main() -> textregress::Result<()> {
    let mut gen = TaskGenConfig::new(8, 1);
    gen.trials_per_study = 20;
    let studies = generate_bbob_dataset(&gen)?;
    let vocab = build_vocabulary(&studies, 1024, FloatTokenization::default())?;

    // Deliberately small so the example finishes in seconds; the default
    // TransformerConfig is the full desk-scale model.
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
        max_steps: 150,
        batch_size: 8,
        eval_every: 25,
        ..TrainConfig::pretrain(1)
    };

    let start = init_model(&model_cfg, &vocab, 1)?;
    println!(
        "model: {} parameters, vocab {}",
        start.num_parameters(),
        vocab.size()
    );

    let (ckpt, report) = pretrain(&start, &studies, &train_cfg)?;
    println!("\nstep   train_loss  val_loss");
    for &(step, val) in &report.val_losses {
        let train = report
            .train_losses
            .iter()
            .rev()
            .find(|&&(s, _)| s <= step)
            .map(|&(_, t)| t)
            .unwrap_or(f64::NAN);
        println!("{step:>5}  {train:>10.4}  {val:>8.4}");
    }
    println!(
        "\nbest val loss {:.4} at step {} (early stopped: {})",
        report.best_val_loss, report.best_step, report.early_stopped
    );

    // Checkpoints round-trip bit-identically through disk.
    let dir = std::env::temp_dir().join("textregress_example_ckpt");
    ckpt.save(&dir)?;
    let reloaded = textregress::lm::LMCheckpoint::load(&dir)?;
    println!("checkpoint saved to {} and reloaded: step {}", dir.display(), reloaded.step);
    Ok(())
}
