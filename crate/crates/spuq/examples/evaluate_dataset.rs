//! Evaluate perturbation sampling and the baselines over the bundled
//! yes/no fixture dataset, then print a reliability diagram and the
//! calibration numbers side by side.
//!
//! Run with: `cargo run --example evaluate_dataset`

use std::path::Path;

use spuq::config::RunConfig;
use spuq::dataset::{load_jsonl, TaskType};
use spuq::evaluation::{CalibrationReport, Weighting};
use spuq::harness::{run_method, Method};
use spuq::similarity::SimilarityMetric;
use spuq::SpuqRunner;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let config = RunConfig::load(root.join("fixtures/mock_eval.toml"))?;
    let records = load_jsonl(
        root.join("fixtures/binary_qa.jsonl"),
        TaskType::Classification,
    )?;
    let provider = config.build_provider("mock")?;
    let runner = SpuqRunner::new(provider.as_ref());

    let methods = [
        Method::Spuq(config.spuq.clone()),
        Method::Sampling {
            k: 4,
            metric: SimilarityMetric::exact_match(),
        },
        Method::Verbalized(spuq::aggregation::VerbalizedStyle::Words),
    ];

    // Population weighting keeps the tiny desk-scale buckets comparable;
    // pass --buckets/--weighting to the CLI for the other variants.
    for method in methods {
        let run = run_method(
            &records,
            &method,
            &runner,
            &config.request,
            config.spuq.seed,
        )?;
        let report = CalibrationReport::from_outcomes(&run.outcomes, 10, Weighting::Population)?;
        println!("== {}", method.name());
        print!("{}", report.reliability_diagram());
        println!(
            "ece={:.4} rho={}",
            report.ece,
            report
                .pearson_rho
                .map(|r| format!("{r:.4}"))
                .unwrap_or_else(|| "undefined".into())
        );
        println!();
    }
    Ok(())
}
