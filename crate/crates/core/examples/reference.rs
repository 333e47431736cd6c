//! Solves the reference cell for a range of stair counts and prints the metrics.

use std::time::Instant;

use tfrc_core::model::{ModelConfig, WithdrawalSchedule};
use tfrc_core::system_chain::{analyze, AnalysisOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for stairs in [1, 2, 4, 8, 16] {
        let cfg = ModelConfig { stairs, ..ModelConfig::default() };
        let sched = WithdrawalSchedule::from_config(&cfg);
        let start = Instant::now();
        let a = analyze(&cfg, &sched, &AnalysisOptions::default())?;
        println!(
            "M={stairs:2} states={} solver={:?} iters={} residual={:.2e} time={:.2?}",
            a.chain.dimension(),
            a.distribution.solver,
            a.distribution.iterations,
            a.distribution.residual_norm,
            start.elapsed()
        );
        for (name, value) in a.metrics.headline() {
            println!("    {name:20} {value:?}");
        }
    }
    Ok(())
}
