// Fits the logarithmic throughput model in both forms.
//
//     cargo run --example fit_throughput

use std::error::Error;

use ftcost::catalog::load_samples_csv;
use ftcost::synth_workload::SampleLabels;
use ftcost::{fit_throughput, generate_samples, RooflineParams, ThroughputForm};

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let samples = load_samples_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mixtral_cs_sparse.csv"))?;
    let fit = fit_throughput(&samples, ThroughputForm::Literal)?;
    let c = fit.coeffs;
    println!("Mixtral CS sparse, literal: c2={:.4} c3={} c4={:.4} rmse={:.4}", c.c2, c.c3, c.c4, fit.rmse);
    for r in &fit.residuals {
        println!(
            "  bs={:<2} measured {:.3}  predicted {:.3}",
            r.sample.batch_size, r.sample.throughput_qps, r.predicted
        );
    }

    // A single sparsity cannot identify c3; a two-sparsity grid can.
    if let Err(e) = fit_throughput(&samples, ThroughputForm::Power) {
        println!("  power form on the same data: {e}");
    }
    let grid = generate_samples(
        &RooflineParams::default(),
        &SampleLabels::default(),
        &[1, 2, 4, 8, 16],
        &[0.25, 1.0],
        0.05,
        42,
    )?;
    let fit = fit_throughput(&grid, ThroughputForm::Power)?;
    let mean = grid.iter().map(|s| s.throughput_qps).sum::<f64>() / grid.len() as f64;
    let c = fit.coeffs;
    println!(
        "synthetic grid, power: c2={:.4} c3={:.4} c4={:.4} rmse={:.3} ({:.1}% of mean)",
        c.c2,
        c.c3,
        c.c4,
        fit.rmse,
        100.0 * fit.rmse / mean
    );
    for w in &fit.warnings {
        println!("  warning: {w}");
    }
    Ok(())
}
