//! Compare the text-similarity metrics used for output agreement and
//! prompt weights: exact match, ROUGE-L, and embedding cosine (here backed
//! by the basis-vector mock embedder).
//!
//! Run with: `cargo run --example similarity_metrics`

use spuq::gateway::MockEmbedder;
use spuq::similarity::{similarity, MetricScorer, Normalization, SimilarityMetric, TextSimilarity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = [
        ("the cat sat on the mat", "the cat sat on the mat"),
        ("the cat sat on the mat", "the cat is on the mat"),
        ("the cat sat on the mat", "a dog slept in the yard"),
        ("No", "No."),
        ("Paris", "in Paris, France"),
    ];

    println!(
        "{:<26} {:<26} {:>11} {:>8} {:>7}",
        "a", "b", "exact_match", "rouge_l", "cosine"
    );
    let embedder = MockEmbedder::default();
    let cosine = MetricScorer::with_embedder(SimilarityMetric::embedding_cosine(), &embedder);
    for (a, b) in pairs {
        let exact = similarity(a, b, SimilarityMetric::exact_match())?;
        let rouge = similarity(a, b, SimilarityMetric::rouge_l())?;
        let cos = cosine.score(a, b)?;
        println!("{a:<26} {b:<26} {exact:>11.2} {rouge:>8.4} {cos:>7.2}");
    }

    // Normalization is configurable; stripping punctuation makes
    // "No" == "No.".
    let stripped = SimilarityMetric {
        kind: spuq::similarity::MetricKind::ExactMatch,
        normalization: Normalization {
            lowercase: true,
            strip_punctuation: true,
        },
    };
    println!(
        "\nexact_match(\"No\", \"No.\") with punctuation stripped: {}",
        similarity("No", "No.", stripped)?
    );

    // Prompt weights discount heavy rewrites more than light ones.
    let original = "Will it rain tomorrow?";
    for variant in [
        "Will it rain tomorrow??",
        "Is rain expected for tomorrow?",
        "What is the capital of France?",
    ] {
        let w = similarity(original, variant, SimilarityMetric::rouge_l())?;
        println!("w = {w:.4} for {variant:?}");
    }
    Ok(())
}
