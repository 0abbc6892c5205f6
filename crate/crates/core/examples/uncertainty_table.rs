//! Label-uncertainty budget for the reference camera installations.

use rsslab::uncertainty::{reference_scenarios, render_table, spatial_budget, temporal_error, TemporalConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (dt, eps) = temporal_error(&TemporalConfig::default())?;
    println!("worst-case pairing gap {dt} s -> temporal error {eps} m\n");
    let mut rows = Vec::new();
    for s in reference_scenarios(10_000, 0) {
        rows.push((s.name, spatial_budget(&s.config)?.with_temporal(eps)));
    }
    print!("{}", render_table(&rows));
    Ok(())
}
