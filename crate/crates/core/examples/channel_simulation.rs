// Draws one channel at the reference deployment and summarizes it.
//
// Run with `cargo run --example channel_simulation`.

use irs_rsrp::channel::{channel_frequency_response, generate_realization, LinkBudget};
use irs_rsrp::config::linear_to_db;
use irs_rsrp::linalg::{hermitian_eigenvalues, numerical_rank};
use irs_rsrp::reflection::ReflectionVector;
use irs_rsrp::rng::seeded;
use irs_rsrp::SystemConfig;

pub fn run_example() -> irs_rsrp::Result<()> {
    let config = SystemConfig::default();
    let budget = LinkBudget::new(&config)?;
    let db = |p: &[f64]| p.iter().map(|&x| format!("{:.1}", linear_to_db(x))).collect::<Vec<_>>().join(" ");
    println!("direct tap powers    {} dB", db(&budget.direct_tap_power));
    println!("BS-IRS tap powers    {} dB", db(&budget.bs_irs_tap_power));
    println!("IRS-user LoS power   {:.1} dB", linear_to_db(budget.los_power));

    let real = generate_realization(&config, &mut seeded(config.seed))?;
    let r = &real.autocorr;
    let rank = numerical_rank(r, 1e-10);
    println!("R is {}x{}, numerical rank {rank} (at most {})", r.nrows(), r.ncols(), config.max_taps());
    assert!(rank <= config.max_taps());

    // Parseval: the mean of |H_m|^2 over subcarriers is the tap energy |G v|^2 = M v^H R v / P
    let v = ReflectionVector::uniform(config.alphabet(), config.n_elements);
    let h = channel_frequency_response(&real.cir_matrix, v.extended(), None)?;
    let freq = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.len() as f64;
    let m = config.n_subcarriers as f64;
    let time = m * irs_rsrp::linalg::quadratic_form(r, v.extended())? / config.tx_power;
    println!("mean |H|^2 = {freq:.6e}, M v^H R v / P = {time:.6e}");
    assert!((freq - time).abs() <= 1e-9 * time);

    let top: Vec<String> = hermitian_eigenvalues(r).iter().rev().take(rank).map(|e| format!("{e:.3e}")).collect();
    println!("leading eigenvalues: {}", top.join(", "));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("channel simulation example failed");
}
