// Routes tokens with top-k gating and compares expert load between a
// balanced and a skewed router.
//
//     cargo run --example route_topk

use std::error::Error;

use ftcost::router_sim::random_logits;
use ftcost::{compare_loads, expert_load, route_topk, RouterInput};

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let fixture = std::fs::File::open(concat!(env!("CARGO_MANIFEST_DIR"), "/data/router_fixture.csv"))?;
    let logits = ftcost::router_sim::read_logits_csv(fixture)?;
    let routes = route_topk(&RouterInput::new(logits, 2)?);
    for (t, r) in routes.iter().enumerate() {
        let w: Vec<String> = r.weights.iter().map(|w| format!("{w:.3}")).collect();
        println!("token {t}: experts {:?} weights [{}]", r.experts, w.join(", "));
    }
    let load = expert_load(&routes, 4)?;
    println!("counts {:?}  variance {:.2}\n", load.counts, load.variance_pct);

    let (tokens, experts) = (2000, 8);
    let balanced = random_logits(tokens, experts, 1);
    let mut skewed = balanced.clone();
    for row in &mut skewed {
        row[3] += 1.5;
    }
    let before = expert_load(&route_topk(&RouterInput::new(balanced, 2)?), experts)?;
    let after = expert_load(&route_topk(&RouterInput::new(skewed, 2)?), experts)?;
    println!("balanced: variance {:.2}  imbalance {:.3}", before.variance_pct, before.imbalance_factor);
    println!("skewed:   variance {:.2}  imbalance {:.3}", after.variance_pct, after.imbalance_factor);
    let delta = compare_loads(&before, &after)?;
    println!(
        "variance change {:+.2}, dominant expert {}, its share {:+.2} points",
        delta.variance_delta, delta.dominant_expert, delta.share_deltas[delta.dominant_expert]
    );
    Ok(())
}
