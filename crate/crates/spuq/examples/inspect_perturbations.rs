//! Walk through every perturbation mode on one prompt: fixed temperature
//! offsets, random temperatures, dummy tokens, system-message swaps, and
//! paraphrasing (against a scripted mock paraphraser).
//!
//! Run with: `cargo run --example inspect_perturbations`

use spuq::gateway::{Matcher, MockChoice, MockProvider, MockScript, ModelInput, ProviderProfile};
use spuq::perturb::{PerturbationConfig, PerturbationSets, Perturber, PromptMode, TemperatureMode};
use spuq::similarity::{MetricScorer, SimilarityMetric};

fn show(perturber: &Perturber<'_>, input: &ModelInput, config: PerturbationConfig, label: &str) {
    println!("-- {label} (k={})", config.k);
    match perturber.perturb(input, &config, 4) {
        Ok(variants) => {
            for v in variants {
                println!(
                    "   {} T={:.2} w={:.3} system={:?} prompt={:?}",
                    v.index,
                    v.input.temperature,
                    v.prompt_weight,
                    v.input.system_message.as_deref().unwrap_or("-"),
                    v.input.user_prompt,
                );
            }
        }
        Err(e) => println!("   error: {e}"),
    }
    println!();
}

fn main() {
    let profile = ProviderProfile::chat("demo");
    // A paraphraser that answers any paraphrase request with four canned
    // rewrites of the example question.
    let paraphrases = serde_json::json!({
        "paraphrased": [
            "Is rain expected for tomorrow?",
            "Is it going to rain tomorrow?",
            "Tomorrow, will there be rain?",
            "Do you expect rain tomorrow?",
        ]
    });
    let paraphraser = MockProvider::chat(MockScript::new(1).rule(
        Matcher::Contains("paraphrase the text in triple quotes".into()),
        vec![MockChoice::text(paraphrases.to_string())],
    ));

    let scorer = MetricScorer::new(SimilarityMetric::rouge_l());
    let sets = PerturbationSets::default();
    let perturber = Perturber {
        profile: &profile,
        paraphraser: Some(&paraphraser),
        weight_scorer: &scorer,
        sets: &sets,
    };

    let input = ModelInput::new("Will it rain tomorrow?", 0.7)
        .with_system_message("You are a helpful assistant");
    println!("original: T=0.70 {:?}\n", input.user_prompt);

    show(
        &perturber,
        &input,
        PerturbationConfig {
            k: 4,
            temperature_mode: TemperatureMode::FixedOffset(0.3),
            prompt_mode: PromptMode::None,
        },
        "temperature offset +0.3",
    );
    show(
        &perturber,
        &input,
        PerturbationConfig {
            k: 4,
            temperature_mode: TemperatureMode::RandomUniform,
            prompt_mode: PromptMode::None,
        },
        "random temperatures over the provider range",
    );
    show(
        &perturber,
        &input,
        PerturbationConfig {
            k: 4,
            temperature_mode: TemperatureMode::None,
            prompt_mode: PromptMode::DummyTokens,
        },
        "dummy tokens (affix edits only; weights from ROUGE-L)",
    );
    show(
        &perturber,
        &input,
        PerturbationConfig {
            k: 4,
            temperature_mode: TemperatureMode::None,
            prompt_mode: PromptMode::SystemMessages,
        },
        "system-message swaps (user prompt untouched)",
    );
    show(
        &perturber,
        &input,
        PerturbationConfig {
            k: 4,
            temperature_mode: TemperatureMode::FixedOffset(0.3),
            prompt_mode: PromptMode::Paraphrasing,
        },
        "paraphrasing plus +0.3 (one paraphraser call for all k)",
    );
}
