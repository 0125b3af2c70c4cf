//! Generate a small shifted-BBOB dataset and peek at its contents.
//!
//! Run with: cargo run --example generate_dataset

use textregress::study::Split;
use textregress::taskgen::{generate_bbob_dataset, generate_conditional_dataset, TaskGenConfig};

fn main() -> textregress::Result<()> {
    let mut config = TaskGenConfig::new(5, 42);
    config.trials_per_study = 20;
    let studies = generate_bbob_dataset(&config)?;

    println!("generated {} BBOB studies", studies.len());
    for study in &studies {
        let (y_min, y_max) = study.y_range().unwrap();
        println!(
            "  {}: {:40} dim={} train/val/test = {}/{}/{}  y in [{y_min:.2}, {y_max:.2}]",
            study.id,
            study.metadata.title,
            study.space.parameters().len(),
            study.trials_in(Split::Train).len(),
            study.trials_in(Split::Val).len(),
            study.trials_in(Split::Test).len(),
        );
    }

    // Studies serialize one-per-line; this is the on-disk dataset format.
    let line = studies[0].to_jsonl_line()?;
    println!("\nfirst study as JSONL ({} bytes):\n{}...", line.len(), &line[..200.min(line.len())]);

    // The conditional suite exercises parent-gated parameters.
    let conditional = generate_conditional_dataset(2, 7)?;
    let space = &conditional[0].space;
    println!("\nconditional study parameters:");
    for p in space.parameters() {
        match &p.parent {
            Some(parent) => println!(
                "  {} (active when {} in {:?})",
                p.name, parent.parent_name, parent.trigger_values
            ),
            None => println!("  {}", p.name),
        }
    }
    Ok(())
}
