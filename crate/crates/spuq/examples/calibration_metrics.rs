//! Calibration metrics on synthetic confidence/accuracy pairs: expected
//! calibration error under both weightings, Pearson correlation, the
//! confidence histogram, and the ASCII reliability diagram.
//!
//! Run with: `cargo run --example calibration_metrics`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spuq::evaluation::{
    confidence_histogram, expected_calibration_error, pearson_correlation, CalibrationReport,
    EvalOutcome, Weighting,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // An overconfident population: confidence concentrates near 1.0 while
    // accuracy is a coin flip at the top.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let overconfident: Vec<EvalOutcome> = (0..400)
        .map(|_| {
            let confidence = 0.85 + 0.15 * rng.random_range(0.0..1.0);
            let accuracy = if rng.random_range(0.0..1.0) < 0.55 {
                1.0
            } else {
                0.0
            };
            EvalOutcome {
                confidence,
                accuracy,
            }
        })
        .collect();
    // A calibrated population: accuracy tracks confidence.
    let calibrated: Vec<EvalOutcome> = (0..400)
        .map(|i| {
            let confidence = ((i % 10) as f64 + rng.random_range(0.0..1.0)) / 10.0;
            let accuracy = if rng.random_range(0.0..1.0) < confidence {
                1.0
            } else {
                0.0
            };
            EvalOutcome {
                confidence,
                accuracy,
            }
        })
        .collect();

    for (label, outcomes) in [
        ("overconfident", &overconfident),
        ("calibrated", &calibrated),
    ] {
        println!("== {label} population (n={})", outcomes.len());
        let report = CalibrationReport::from_outcomes(outcomes, 10, Weighting::Unweighted)?;
        print!("{}", report.reliability_diagram());
        println!(
            "ece(unweighted)={:.4} ece(population)={:.4} rho={}",
            report.ece,
            expected_calibration_error(outcomes, 10, Weighting::Population)?,
            pearson_correlation(outcomes)?
                .map(|r| format!("{r:.4}"))
                .unwrap_or_else(|| "undefined".into()),
        );
        println!("histogram: {:?}\n", confidence_histogram(outcomes, 10));
    }
    Ok(())
}
