// Discrete reflection design on a small array, checked against exhaustive
// search, plus the measurement-only baselines.
//
// Run with `cargo run --release --example reflection_design`.

use irs_rsrp::channel::generate_realization;
use irs_rsrp::config::linear_to_db;
use irs_rsrp::measurement::build_dataset_for;
use irs_rsrp::optimizer::{
    csm_select, design_reflection, evaluate_snr, exhaustive_oracle, rms_select, DesignSettings, Method,
    OptimizationResult, ReflectionReport,
};
use irs_rsrp::rng::seeded;
use irs_rsrp::SystemConfig;

pub fn run_example() -> irs_rsrp::Result<()> {
    let config = SystemConfig { phase_bits: 2, ..SystemConfig::default().with_irs_shape(2, 4) };
    let mut rng = seeded(5);
    let real = generate_realization(&config, &mut rng)?;
    let r = &real.autocorr;
    let alphabet = config.alphabet();

    let designed = design_reflection(r, alphabet, &DesignSettings::default(), Method::Proposed, &mut rng)?;
    let optimum = exhaustive_oracle(r, alphabet, config.n_elements)?;
    let data = build_dataset_for(&real, &config, 200, 0.9, &mut rng)?;
    let csm = csm_select(&data)?;
    let rms = rms_select(&data)?;

    let snr = |v: &irs_rsrp::reflection::ReflectionVector| evaluate_snr(r, v.extended(), config.noise_power);
    println!("exhaustive  {:7.3} dB", linear_to_db(snr(&optimum.reflection)?));
    println!("proposed    {:7.3} dB", linear_to_db(snr(&designed.reflection)?));
    println!("csm         {:7.3} dB", linear_to_db(snr(&csm)?));
    println!("rms         {:7.3} dB", linear_to_db(snr(&rms)?));
    let ratio = designed.objective / optimum.objective;
    println!("proposed / optimum = {ratio:.4}");
    assert!(ratio <= 1.0 + 1e-12);

    let report =
        ReflectionReport::new(&OptimizationResult { method: Method::Proposed, ..designed }, config.noise_power)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("reflection design example failed");
}
