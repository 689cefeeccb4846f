// Splits a training step into stages and into MoE versus other layers.
//
//     cargo run --example stage_breakdown

use std::error::Error;

use ftcost::{simulate_throughput, stage_breakdown, RooflineParams, StageShares};

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let params = RooflineParams::default();
    let batch = 8;
    let step_s = batch as f64 / simulate_throughput(&params, batch, 0.25)?;
    let shares = StageShares {
        forward: 0.3,
        backward: 0.6,
        optimizer: 0.1,
        moe_layer_share: 0.85,
        full_finetune: false,
    };
    let b = stage_breakdown(&shares, step_s)?;
    println!("step of {batch} queries: {:.3} s", b.total_s);
    for (name, secs) in b.stage_rows() {
        println!("  {name:<10} {secs:>7.3} s  {:>5.1}%", 100.0 * secs / b.total_s);
    }
    println!("by layer:");
    for (name, secs) in b.layer_rows() {
        println!("  {name:<10} {secs:>7.3} s  {:>5.1}%", 100.0 * secs / b.total_s);
    }

    let bad = StageShares {
        forward: 0.5,
        backward: 0.4,
        full_finetune: true,
        ..shares
    };
    if let Err(e) = stage_breakdown(&bad, step_s) {
        println!("rejected: {e}");
    }
    Ok(())
}
