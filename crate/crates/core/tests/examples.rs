//! Runs every example so they stay in sync with the library.

#[allow(dead_code)]
mod calibrate_batch {
    include!("../examples/calibrate_batch.rs");
}

#[test]
fn calibrate_batch() {
    calibrate_batch::run().unwrap();
}

#[allow(dead_code)]
mod project_batch {
    include!("../examples/project_batch.rs");
}

#[test]
fn project_batch() {
    project_batch::run().unwrap();
}

#[allow(dead_code)]
mod fit_throughput {
    include!("../examples/fit_throughput.rs");
}

#[test]
fn fit_throughput() {
    fit_throughput::run().unwrap();
}

#[allow(dead_code)]
mod cost_comparison {
    include!("../examples/cost_comparison.rs");
}

#[test]
fn cost_comparison() {
    cost_comparison::run().unwrap();
}

#[allow(dead_code)]
mod synth_roundtrip {
    include!("../examples/synth_roundtrip.rs");
}

#[test]
fn synth_roundtrip() {
    synth_roundtrip::run().unwrap();
}

#[allow(dead_code)]
mod stage_breakdown {
    include!("../examples/stage_breakdown.rs");
}

#[test]
fn stage_breakdown() {
    stage_breakdown::run().unwrap();
}

#[allow(dead_code)]
mod seq_len_sweep {
    include!("../examples/seq_len_sweep.rs");
}

#[test]
fn seq_len_sweep() {
    seq_len_sweep::run().unwrap();
}

#[allow(dead_code)]
mod route_topk {
    include!("../examples/route_topk.rs");
}

#[test]
fn route_topk() {
    route_topk::run().unwrap();
}
