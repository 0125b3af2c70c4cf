//! Float tokenization and prompt serialization: how numbers and trials
//! become token sequences.
//!
//! Run with: cargo run --example tokenize_floats

use textregress::taskgen::{generate_bbob_dataset, TaskGenConfig};
use textregress::textio::{build_vocabulary, render_prompt, FloatTokenization, TokenScheme};

fn render(codec: &FloatTokenization, value: f64) -> String {
    let tokens = codec.tokenize(value).unwrap();
    tokens.iter().map(|t| t.render(codec.num_digits)).collect()
}

fn main() -> textregress::Result<()> {
    let codec = FloatTokenization::default();
    println!("default scheme, {} mantissa digits:", codec.num_digits);
    for value in [72.5, 123.4, -0.0012345, 6.022e23, 0.0] {
        let tokens = codec.tokenize(value)?;
        let back = codec.detokenize(&tokens)?;
        println!("  {value:>14e}  ->  {:28}  ->  {back:e}", render(&codec, value));
    }

    println!("\nsame value under each scheme:");
    for scheme in [
        TokenScheme::SignDigitsExp,
        TokenScheme::MergedMantissa,
        TokenScheme::ExpBeforeMantissa,
    ] {
        let c = FloatTokenization::with_scheme(scheme);
        println!("  {scheme:?}: {}", render(&c, 123.4));
    }

    // Prompts serialize (metadata, x) pairs; a vocabulary maps them to ids.
    let studies = generate_bbob_dataset(&TaskGenConfig::new(2, 11))?;
    let study = &studies[0];
    let trial = &study.trials[0];
    let prompt = render_prompt(&study.space, &trial.x, &study.metadata)?;
    println!("\nprompt for one trial:\n{prompt}");

    let vocab = build_vocabulary(&studies, 1024, codec)?;
    let ids = vocab.encode_text(&prompt);
    println!(
        "\nvocabulary: {} tokens; prompt encodes to {} ids, round-trips: {}",
        vocab.size(),
        ids.len(),
        vocab.decode_text(&ids)? == prompt
    );
    let y = trial.y.feasible().unwrap();
    println!("y = {y:.4} encodes to ids {:?}", vocab.encode_y(y)?);
    Ok(())
}
