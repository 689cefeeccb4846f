// Projects Mixtral's maximum batch size onto larger GPUs.
//
//     cargo run --example project_batch

use std::error::Error;

use ftcost::batch_model::project_max_batch;
use ftcost::BatchCoeffs;

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let coeffs = BatchCoeffs::new(8.0, 0.93)?;
    let grid = [24.0, 40.0, 48.0, 80.0, 96.0, 141.0, 192.0];
    println!("{:>8}  {:>6}  {:>6}", "GiB", "dense", "sparse");
    let dense = project_max_batch(&coeffs, 23.35, 79, 1.0, &grid)?;
    let sparse = project_max_batch(&coeffs, 23.35, 79, 0.25, &grid)?;
    for ((mem, d), (_, s)) in dense.iter().zip(&sparse) {
        println!("{mem:>8}  {d:>6}  {s:>6}");
    }
    Ok(())
}
