// Shows how sequence length drives max batch size, throughput and cost.
//
//     cargo run --example seq_len_sweep

use std::error::Error;

use ftcost::{estimate_cost, CostQuery};

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let catalog = ftcost::load_catalog(concat!(env!("CARGO_MANIFEST_DIR"), "/data/pricing_catalog.json"))?;
    println!("{:>7} {:>4} {:>6} {:>8}", "seq", "mbs", "qps", "usd");
    for seq in [64u32, 128, 174, 256, 512, 1024] {
        let mut q = CostQuery::new("Mixtral", "MATH", "H100", 0.25, 10);
        q.seq_len_override = Some(seq);
        q.override_queries = Some(15_000);
        match estimate_cost(&catalog, &q) {
            Ok(e) => println!(
                "{seq:>7} {:>4} {:>6.2} {:>8.2}",
                e.max_batch_size, e.throughput_qps, e.total_usd
            ),
            Err(e) => println!("{seq:>7}  {e}"),
        }
    }
    Ok(())
}
