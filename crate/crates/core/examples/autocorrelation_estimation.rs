// Recovers `R` from RSRP measurements with the rank-K model and compares it
// with a rank-one fit.
//
// Run with `cargo run --release --example autocorrelation_estimation`.

use irs_rsrp::channel::generate_realization;
use irs_rsrp::estimator::{nmse, train, TrainingHyper};
use irs_rsrp::measurement::build_dataset_for;
use irs_rsrp::rng::seeded;
use irs_rsrp::SystemConfig;

pub fn run_example() -> irs_rsrp::Result<()> {
    let config = SystemConfig::default().with_irs_shape(4, 4);
    let mut rng = seeded(3);
    let real = generate_realization(&config, &mut rng)?;
    let hyper = TrainingHyper::default();

    println!("{:>6} {:>12} {:>12}", "L", "rank-K NMSE", "rank-1 NMSE");
    let mut previous = f64::INFINITY;
    for len in [250, 1000] {
        let data = build_dataset_for(&real, &config, len, hyper.split_ratio, &mut rng)?;
        let full = train(&data, config.max_taps(), &hyper, &mut seeded(1))?;
        let one = train(&data, 1, &hyper, &mut seeded(1))?;
        let e_full = nmse(&full.reconstruct(), &real.autocorr)?;
        let e_one = nmse(&one.reconstruct(), &real.autocorr)?;
        println!("{len:>6} {e_full:>12.3e} {e_one:>12.3e}");
        assert!(e_full < e_one);
        previous = previous.min(e_full);
    }
    println!("best rank-{} NMSE {previous:.3e}", config.max_taps());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("estimation example failed");
}
