//! Score a prompt against a real OpenAI-compatible endpoint.
//!
//! Needs three environment variables; without them the example explains
//! itself and exits cleanly:
//!
//! ```text
//! SPUQ_LIVE_ENDPOINT=https://api.openai.com/v1 \
//! SPUQ_LIVE_MODEL=gpt-4o-mini \
//! SPUQ_API_KEY=sk-... \
//! SPUQ_CACHE_DIR=/tmp/spuq-cache \
//!     cargo run --example live_endpoint
//! ```
//!
//! Responses are cached under `SPUQ_CACHE_DIR` (if set), so re-runs are
//! free and reproducible.

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Ok(endpoint) = std::env::var("SPUQ_LIVE_ENDPOINT") else {
        eprintln!("SPUQ_LIVE_ENDPOINT is not set; nothing to do.");
        eprintln!("Set SPUQ_LIVE_ENDPOINT, SPUQ_LIVE_MODEL and SPUQ_API_KEY to run live.");
        return Ok(());
    };
    let model = std::env::var("SPUQ_LIVE_MODEL")?;
    let api_key = std::env::var("SPUQ_API_KEY").ok();

    use spuq::aggregation::{AggregationConfig, WeightScheme};
    use spuq::gateway::openai::OpenAiClient;
    use spuq::gateway::{ModelInput, ProviderProfile, ResponseCache};
    use spuq::perturb::{PerturbationConfig, PromptMode, TemperatureMode};
    use spuq::similarity::SimilarityMetric;
    use spuq::{FailurePolicy, SpuqConfig, SpuqRunner};

    let client = OpenAiClient::new(endpoint, model, api_key, ProviderProfile::chat("live"))
        .with_cache(ResponseCache::from_env()?);
    let runner = SpuqRunner::new(&client);

    let config = SpuqConfig {
        perturbation: PerturbationConfig {
            k: 5,
            temperature_mode: TemperatureMode::FixedOffset(0.3),
            prompt_mode: PromptMode::Paraphrasing,
        },
        aggregation: AggregationConfig::InterSample {
            metric: SimilarityMetric::rouge_l(),
            weights: WeightScheme::SameAsMetric,
        },
        seed: 7,
        failure_policy: FailurePolicy::FailRun,
    };

    let input = ModelInput::new(
        "Answer with a single word: will Jay-Z reach the age of 60 before Kendrick Lamar?",
        0.7,
    );
    let result = runner.run_spuq(&input, &config)?;
    println!("answer: {}", result.original_output);
    for v in &result.variants {
        println!(
            "  variant {} (T={:.2}, w={:.3}): {:?} -> {:?}",
            v.variant.index,
            v.variant.input.temperature,
            v.variant.prompt_weight,
            v.variant.input.user_prompt,
            v.sample.as_ref().map(|s| s.text.as_str()).unwrap_or("-"),
        );
    }
    println!("confidence: {:.3}", result.confidence);
    Ok(())
}
