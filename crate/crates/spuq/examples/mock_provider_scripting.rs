//! Tour of the scripted mock provider: exact and pattern matchers,
//! precedence, temperature bands, weighted choices with seeded
//! determinism, paraphrase echoing, and scripted token logprobs.
//!
//! Run with: `cargo run --example mock_provider_scripting`

use spuq::gateway::{
    Matcher, MockChoice, MockProvider, MockScript, ModelInput, TempBand, TextGenerator,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let script = MockScript::new(42)
        // Exact rules always win over pattern rules.
        .exact("What is 2+2?", "4")
        // Temperature bands select different behavior for the same prompt.
        .rule_in_band(
            Matcher::Contains("story".into()),
            TempBand { min: 0.0, max: 0.9 },
            vec![MockChoice::text("Once upon a time, the end.")],
        )
        .rule_in_band(
            Matcher::Contains("story".into()),
            TempBand { min: 0.9, max: 2.0 },
            vec![
                MockChoice::weighted("A wild tale of dragons!", 0.5),
                MockChoice::weighted("An unexpected saga of toasters!", 0.5),
            ],
        )
        // Paraphrase requests are echoed back as JSON.
        .paraphrase_echo_rule()
        // Catch-all with scripted logprobs.
        .rule(
            Matcher::Any,
            vec![MockChoice::text("I am not sure.").with_logprobs(vec![-0.9, -1.1, -0.4])],
        );
    let mock = MockProvider::chat(script);

    println!(
        "exact rule:     {}",
        mock.generate(&ModelInput::new("What is 2+2?", 0.7), 0)?
            .text
    );
    println!(
        "cool story:     {}",
        mock.generate(&ModelInput::new("Tell me a story", 0.2), 0)?
            .text
    );
    println!(
        "hot story:      {}",
        mock.generate(&ModelInput::new("Tell me a story", 1.8), 0)?
            .text
    );

    // Identical (input, ordinal) always reproduces the same draw; new
    // ordinals are fresh draws.
    let hot = ModelInput::new("Tell me a story", 1.8);
    assert_eq!(mock.generate(&hot, 5)?.text, mock.generate(&hot, 5)?.text);
    let draws: Vec<String> = (0..6)
        .map(|i| mock.generate(&hot, i).unwrap().text)
        .collect();
    println!("six hot draws:  {draws:?}");

    let paraphrase_request = spuq::perturb::paraphrase_prompt("Will it rain tomorrow?", 3);
    println!(
        "paraphrase echo: {}",
        mock.generate(&ModelInput::new(paraphrase_request, 0.7), 0)?
            .text
    );

    let with_logprobs = mock.generate(
        &ModelInput::new("Anything else?", 0.7).with_logprobs(true),
        0,
    )?;
    println!(
        "logprobs:       {:?} -> likelihood {:.4}",
        with_logprobs.token_logprobs,
        spuq::aggregation::likelihood_confidence(&with_logprobs)?,
    );
    Ok(())
}
