//! Generates the desk-scale synthetic dataset and prints its histograms.
//!
//! cargo run --example synth_benchmark -- [out_dir]

use carematch::ingest::synth::{synth_generate, SynthConfig};

fn main() -> carematch::Result<()> {
    let data = synth_generate(&SynthConfig::desk(), 42)?;
    print!("{}", data.summary());
    if let Some(dir) = std::env::args().nth(1) {
        data.write(dir.as_ref())?;
        println!("wrote {dir}");
    }
    Ok(())
}
