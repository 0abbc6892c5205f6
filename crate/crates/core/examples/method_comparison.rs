//! Method comparison on the synthetic reference dataset with a reduced
//! training budget. Pass `r1` or `r2` to run the other evaluations.

use rsslab::bench::{run, BenchConfig, Dataset, RunId};
use rsslab::synth::DatasetSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let run_id: RunId = std::env::args().nth(1).unwrap_or_else(|| "r3".into()).parse()?;
    let data = Dataset::synthetic(DatasetSpec::reference(0))?;
    let report = run(run_id, &data, &BenchConfig::quick())?;
    print!("{}", report.render_table());
    Ok(())
}
