// Ranks GPUs by the cost of a Mixtral fine-tuning job, then rescales the
// cheapest option to a two-million-query dataset.
//
//     cargo run --example cost_comparison

use std::error::Error;

use ftcost::{compare_gpus, scale_by_dataset, CostQuery};

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let catalog = ftcost::load_catalog(concat!(env!("CARGO_MANIFEST_DIR"), "/data/pricing_catalog.json"))?;
    let mut query = CostQuery::new("Mixtral", "MATH", "", 0.25, 10);
    query.override_queries = Some(15_000);
    let ranked = compare_gpus(&catalog, &query, &["A40", "A100-80GB", "H100"])?;

    println!("{:<10} {:>4} {:>7} {:>7} {:>8} {:>8}", "gpu", "mbs", "qps", "$/h", "hours", "usd");
    for (gpu, e) in &ranked {
        println!(
            "{gpu:<10} {:>4} {:>7.2} {:>7.2} {:>8.2} {:>8.2}",
            e.max_batch_size,
            e.throughput_qps,
            e.hourly_price_usd,
            e.wall_hours(),
            e.total_usd
        );
    }

    let (gpu, best) = &ranked[0];
    let big = scale_by_dataset(best, 15_000 * 10, 2_000_000 * 10)?;
    println!("\n2M queries x 10 epochs on {gpu}: {:.1} hours, ${:.2}", big.wall_hours(), big.total_usd);
    Ok(())
}
