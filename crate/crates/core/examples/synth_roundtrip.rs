// Generates synthetic profile samples from a roofline, writes them as CSV,
// reads them back and fits the throughput model.
//
//     cargo run --example synth_roundtrip

use std::error::Error;

use ftcost::catalog::{read_samples_csv, write_samples_csv};
use ftcost::synth_workload::SampleLabels;
use ftcost::{fit_throughput, generate_samples, simulate_throughput, RooflineParams, ThroughputForm};

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let params = RooflineParams::default();
    for s in [1.0, 0.25] {
        match params.crossover_batch(s) {
            Some(b) => println!("s={s}: compute bound beyond batch {b:.1}"),
            None => println!("s={s}: memory bound at every batch size"),
        }
        println!("  ceiling {:.2} qps", params.throughput_ceiling(s));
    }
    for b in [1u64, 2, 4, 8, 16, 32, 64] {
        println!(
            "  b={b:<3} dense {:>6.2}  sparse {:>6.2}",
            simulate_throughput(&params, b, 1.0)?,
            simulate_throughput(&params, b, 0.25)?
        );
    }

    let samples = generate_samples(&params, &SampleLabels::default(), &[1, 2, 4, 8, 16], &[0.25, 1.0], 0.05, 7)?;
    let mut buf = Vec::new();
    write_samples_csv(&samples, &mut buf)?;
    let back = read_samples_csv(buf.as_slice())?;
    assert_eq!(back, samples);
    println!("\nwrote and re-read {} samples ({} bytes of CSV)", back.len(), buf.len());

    let fit = fit_throughput(&back, ThroughputForm::Power)?;
    let mean = back.iter().map(|s| s.throughput_qps).sum::<f64>() / back.len() as f64;
    println!("power fit rmse {:.3} qps, {:.1}% of mean", fit.rmse, 100.0 * fit.rmse / mean);
    Ok(())
}
