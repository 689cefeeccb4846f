// Calibrates batch-size coefficients for both fixture models and shows why
// BlackMamba cannot be matched exactly.
//
//     cargo run --example calibrate_batch

use std::error::Error;

use ftcost::batch_model::calibrate_batch_coeffs;

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/catalog.json");
    let catalog = ftcost::load_catalog(path)?;

    for model in ["Mixtral", "BlackMamba"] {
        let obs: Vec<_> = catalog.batch_observations.iter().filter(|o| o.model == model).cloned().collect();
        let report = calibrate_batch_coeffs(&obs, &catalog)?;
        println!(
            "{model}: c0={:.4} c1={:.4}  exact {}/{}  max|residual| {}",
            report.coeffs.c0,
            report.coeffs.c1,
            report.exact_matches,
            obs.len(),
            report.max_abs_residual
        );
        for e in &report.residuals {
            let o = &e.observation;
            println!(
                "  {:<5} s={:<4}  observed {:>3}  predicted {:>3}",
                o.dataset, o.sparsity, o.observed_max_bs, e.predicted
            );
        }
        if let Some(p) = catalog.model(model).and_then(|m| m.published_batch_coeffs) {
            println!("  published c0={} c1={}", p.c0, p.c1);
        }
    }

    // For a fixed sparsity the prediction is proportional to 1/seq_len, so the
    // MATH estimate is always the CS estimate scaled by 79/174.
    let cs = catalog.dataset("CS").ok_or("CS missing")?.median_seq_len as f64;
    let math = catalog.dataset("MATH").ok_or("MATH missing")?.median_seq_len as f64;
    let ratio = cs / math;
    println!("\nBlackMamba sparse rows: CS observed 20, MATH observed 8");
    let (lo, hi) = (20.0 * ratio, 21.0 * ratio);
    println!("  CS raw in [20, 21) forces MATH raw in [{lo:.3}, {hi:.3}), which floors to 9, never 8");
    Ok(())
}
