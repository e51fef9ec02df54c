// A small Monte Carlo sweep over the number of measurements, printed as
// the report CSV.
//
// Run with `cargo run --release --example snr_experiment`.

use irs_rsrp::estimator::TrainingHyper;
use irs_rsrp::harness::{run_experiment, ExperimentSpec, Metric};
use irs_rsrp::optimizer::Method;
use irs_rsrp::SystemConfig;

pub fn run_example() -> irs_rsrp::Result<()> {
    let spec = ExperimentSpec {
        base: SystemConfig { seed: 2024, ..SystemConfig::default().with_irs_shape(2, 4) },
        l_grid: vec![100, 400],
        trials: 4,
        hyper: TrainingHyper { epochs: 400, ..TrainingHyper::default() },
        ..ExperimentSpec::default()
    };
    let report = run_experiment(&spec)?;
    report.write_csv(std::io::stdout())?;

    let nmse = |l| report.record(l, Method::Proposed, Metric::Nmse).and_then(|r| r.mean);
    println!("proposed NMSE: L=100 {:.3e}, L=400 {:.3e}", nmse(100).unwrap_or(f64::NAN), nmse(400).unwrap_or(f64::NAN));
    println!("config hash {}", report.provenance.config_hash);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("experiment example failed");
}
