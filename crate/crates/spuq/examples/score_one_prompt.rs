//! Score a single prompt with perturbation sampling and compare it against
//! plain resampling, using the scripted offline mock from
//! `fixtures/confidently_wrong.toml`.
//!
//! The mock answers the original question with a confident "No", but its
//! scripted paraphrases answer Yes/No/Yes/No — the classic confidently-
//! wrong case. Perturbation sampling exposes it; resampling does not.
//!
//! Run with: `cargo run --example score_one_prompt`

use std::path::Path;

use spuq::config::RunConfig;
use spuq::gateway::ModelInput;
use spuq::similarity::SimilarityMetric;
use spuq::SpuqRunner;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = RunConfig::load(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/confidently_wrong.toml"),
    )?;
    let provider = config.build_provider("mock")?;
    let runner = SpuqRunner::new(provider.as_ref());

    let question = "Will Jay-Z reach the age of 60 before Kendrick Lamar?";
    let input = ModelInput::new(question, config.request.temperature);

    let result = runner.run_spuq(&input, &config.spuq)?;
    println!("question: {question}");
    println!("answer:   {}", result.original_output);
    println!();
    for v in &result.variants {
        println!(
            "variant {}: {:<62} -> {}  (s={:.1})",
            v.variant.index,
            v.variant.input.user_prompt,
            v.sample.as_ref().map(|s| s.text.as_str()).unwrap_or("-"),
            v.diagnostics.similarity_to_original.unwrap_or(0.0),
        );
    }
    println!();
    println!(
        "spuq confidence:     {:.2}  (half the paraphrases disagree)",
        result.confidence
    );

    let baseline = runner.run_baseline_sampling(&input, 4, SimilarityMetric::exact_match())?;
    println!(
        "sampling confidence: {:.2}  (resampling the same prompt just repeats the answer)",
        baseline.confidence
    );
    Ok(())
}
