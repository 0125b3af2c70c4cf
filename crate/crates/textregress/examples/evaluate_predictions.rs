//! Evaluation metrics: study error, rank correlations, and the multi-task
//! gain report.
//!
//! Run with: cargo run --example evaluate_predictions

use rand::{Rng, SeedableRng};
use textregress::eval::{
    evaluate_study, multitask_gain_report, ranking_metrics, study_error, summarize,
};

fn main() -> textregress::Result<()> {
    // Study error is the mean per-trial |pred - y| normalized by the study's
    // y-range, with each trial's contribution clipped at 1.
    let ys = [0.0, 1.0, 2.0, 4.0];
    let preds = [0.0, 2.0, 2.0, 0.0];
    println!("study_error = {}", study_error(&preds, &ys, 0.0, 4.0)?);

    let ranks = ranking_metrics(&preds, &ys)?;
    println!(
        "kendall tau-b = {:.4}, spearman = {:.4}",
        ranks.kendall_tau, ranks.spearman
    );

    // Per-study results roll up into an aggregate summary.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut results = vec![];
    for i in 0..10 {
        let ys: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let preds: Vec<f64> =
            ys.iter().map(|y| y + rng.gen_range(-0.5..0.5)).collect();
        results.push(evaluate_study(&format!("study-{i}"), &preds, &ys, -3.0, 3.0)?);
    }
    let summary = summarize(&results)?;
    println!(
        "\n{} studies: mean error {:.4}, mean tau {:.4}, mean spearman {:.4}",
        summary.n_studies,
        summary.mean_study_error,
        summary.mean_kendall_tau,
        summary.mean_spearman
    );

    // The gain report bins multi-task improvement over single-task models by
    // how much training data the single-task model had.
    let single: Vec<(String, f64, usize)> = (0..60)
        .map(|i| {
            let n = [2usize, 5, 20, 80, 250, 800][i % 6];
            let err = 0.5 / (n as f64).sqrt() + rng.gen_range(0.0..0.1);
            (format!("s{i}"), err, n)
        })
        .collect();
    let multi: Vec<(String, f64)> =
        single.iter().map(|(id, err, _)| (id.clone(), err * 0.6)).collect();
    let bins = multitask_gain_report(&single, &multi, &[1, 3, 10, 30, 100, 300, 1000])?;
    println!("\ntrials_bin      n   gain_p10   gain_p50   gain_p90");
    for b in &bins {
        println!(
            "({:>4},{:>4}] {:>3}   {:>8.4}   {:>8.4}   {:>8.4}",
            b.lo, b.hi, b.count, b.p10, b.p50, b.p90
        );
    }
    Ok(())
}
