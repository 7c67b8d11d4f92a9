//! Grid search over learning rate and embedding size on the desk benchmark.

use carematch::eval::{grid_search, ComparisonConfig, Dataset, Grid};
use carematch::ingest::synth::{synth_generate, SynthConfig};
use carematch::model::Hyperparams;

fn main() -> carematch::Result<()> {
    let data = Dataset::from_synth(&synth_generate(&SynthConfig::desk(), 42)?)?;
    let grid = Grid::parse("learning_rate = 0.006, 0.012, 0.024\nno_components = 8, 16\n")?;
    let result = grid_search(&data, &Hyperparams::desk(), &grid, &ComparisonConfig::default())?;
    print!("{}", result.to_table());
    let best = &result.best().hyperparams;
    println!(
        "best: learning_rate={} no_components={}",
        best.learning_rate, best.no_components
    );
    Ok(())
}
