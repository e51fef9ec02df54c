// RSRP under random reflections: the noiseless power over the RS subset is
// exactly `v^H R v`, and the noisy report adds `sigma^2` on average.
//
// Run with `cargo run --example rsrp_measurement`.

use irs_rsrp::channel::generate_realization;
use irs_rsrp::linalg::quadratic_form;
use irs_rsrp::measurement::{build_dataset_for, partial_dft_autocorr, rs_pattern, simulate_rsrp, tiled_identity};
use irs_rsrp::reflection::ReflectionVector;
use irs_rsrp::rng::seeded;
use irs_rsrp::SystemConfig;

pub fn run_example() -> irs_rsrp::Result<()> {
    let config = SystemConfig::default();
    let mut rng = seeded(7);
    let real = generate_realization(&config, &mut rng)?;
    let pattern = rs_pattern(config.n_subcarriers, config.n_rs_subcarriers, config.rs_offset)?;

    let gram = partial_dft_autocorr(&pattern);
    let identity = tiled_identity(config.n_subcarriers, config.n_rs_subcarriers);
    let diff = (&gram - identity).iter().map(|z| z.norm()).fold(0.0, f64::max);
    println!("partial DFT Gram vs tiled identity: max deviation {diff:.2e}");

    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let v = ReflectionVector::random(config.alphabet(), config.n_elements, &mut rng);
        let measured = simulate_rsrp(&real, &v, &pattern, 1, 0.0, &mut rng)?;
        let exact = quadratic_form(&real.autocorr, v.extended())?;
        worst = worst.max((measured - exact).abs() / exact);
    }
    println!("noiseless RSRP vs v^H R v over 20 patterns: worst relative error {worst:.2e}");
    assert!(worst < 1e-10);

    let data = build_dataset_for(&real, &config, 400, 0.9, &mut rng)?;
    let excess: f64 = data
        .entries
        .iter()
        .map(|e| e.rsrp - quadratic_form(&real.autocorr, e.reflection.extended()).unwrap())
        .sum::<f64>()
        / data.len() as f64;
    println!("mean RSRP excess over signal power: {excess:.3e} W (noise power {:.3e} W)", config.noise_power);

    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    let text = String::from_utf8(csv).expect("CSV is UTF-8");
    println!("first dataset row:\n{}", text.lines().take(2).collect::<Vec<_>>().join("\n"));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("RSRP measurement example failed");
}
