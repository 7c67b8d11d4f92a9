//! Five-variant walk-forward comparison on the synthetic benchmark.
//!
//! cargo run --release --example compare_variants -- [seed] [patients]

use std::time::Instant;

use carematch::eval::{run_comparison, ComparisonConfig, Dataset};
use carematch::ingest::synth::{synth_generate, SynthConfig};
use carematch::model::Hyperparams;

fn main() -> carematch::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(42, |s| s.parse().expect("seed"));
    let mut synth = SynthConfig::default();
    if let Some(p) = args.next() {
        synth.patients = p.parse().expect("patients");
    }
    let data = Dataset::from_synth(&synth_generate(&synth, seed)?)?;
    let hp = Hyperparams {
        rng_seed: seed,
        ..Hyperparams::desk()
    };
    let start = Instant::now();
    let report = run_comparison(&data, &hp, &ComparisonConfig::default())?;
    print!("{}", report.to_table());
    eprintln!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
