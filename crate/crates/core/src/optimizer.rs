//! Discrete-phase reflection design: maximize `v^H R v` over the phase
//! alphabet.
//!
//! The proposed pipeline relaxes the problem to `max Tr(R V)` with
//! `diag(V) = 1`, `V >= 0`, solves the relaxation in factored form
//! `V = Z Z^H`, draws Gaussian candidates from `Z`, quantizes them, and
//! polishes the best candidate by cyclic coordinate ascent. Measurement-only
//! baselines (CSM, RMS) and an exhaustive oracle live here as well.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::linear_to_db;
use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigenvalues, quadratic_form, quadratic_form_unchecked, CMatrix, ZERO};
use crate::measurement::MeasurementDataset;
use crate::reflection::{PhaseAlphabet, ReflectionVector};
use crate::rng::complex_gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    RankOne,
    Csm,
    Rms,
    UpperBound,
    Exhaustive,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::RankOne => "rank_one",
            Method::Csm => "csm",
            Method::Rms => "rms",
            Method::UpperBound => "upper_bound",
            Method::Exhaustive => "exhaustive",
        }
    }

    /// Whether the method estimates `R` (and therefore has an NMSE).
    pub fn estimates_channel(&self) -> bool {
        matches!(self, Method::Proposed | Method::RankOne)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub reflection: ReflectionVector,
    /// `v^H R v` for the matrix that was optimized, watts.
    pub objective: f64,
    pub method: Method,
}

/// Serializable form of a chosen reflection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionReport {
    pub method: Method,
    pub phases: Vec<f64>,
    pub objective_watts: f64,
    pub snr_db: f64,
}

impl ReflectionReport {
    pub fn new(result: &OptimizationResult, noise_power: f64) -> Result<Self> {
        Ok(Self {
            method: result.method,
            phases: result.reflection.phases(),
            objective_watts: result.objective,
            snr_db: linear_to_db(snr_from_power(result.objective, noise_power)?),
        })
    }
}

/// Relaxed solution `V = Z Z^H` with unit-norm rows of `Z`.
#[derive(Debug, Clone)]
pub struct SdrSolution {
    pub factor: CMatrix,
    /// `Tr(R Z Z^H)`.
    pub objective: f64,
    pub rank_cap: usize,
    /// Matrix the relaxation was solved for.
    pub matrix: CMatrix,
}

/// Default factor width `ceil(sqrt(2 n))`.
pub fn default_rank_cap(dim: usize) -> usize {
    ((2.0 * dim as f64).sqrt().ceil() as usize).max(1)
}

fn check_psd(r: &CMatrix) -> Result<()> {
    if r.nrows() != r.ncols() || r.nrows() == 0 {
        return invalid("matrix must be square and non-empty");
    }
    let scale = r.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if hermitian_defect(r) > 1e-9 * scale.max(f64::MIN_POSITIVE) {
        return invalid("matrix is not Hermitian");
    }
    let ev = hermitian_eigenvalues(r);
    let top = ev.last().copied().unwrap_or(0.0).max(0.0);
    if ev[0] < -1e-8 * top.max(f64::MIN_POSITIVE) {
        return invalid(format!("matrix is not positive semidefinite (min eigenvalue {:.3e})", ev[0]));
    }
    Ok(())
}

fn normalize_rows(z: &mut CMatrix, fallback: &CMatrix) {
    for i in 0..z.nrows() {
        let norm = z.row(i).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for j in 0..z.ncols() {
                z[(i, j)] /= norm;
            }
        } else {
            for j in 0..z.ncols() {
                z[(i, j)] = fallback[(i, j)];
            }
        }
    }
}

fn trace_objective(r: &CMatrix, z: &CMatrix) -> f64 {
    (z.adjoint() * r * z).trace().re
}

fn is_real(r: &CMatrix) -> bool {
    r.iter().all(|z| z.im == 0.0)
}

/// Solves `max Tr(R Z Z^H)` over unit-norm rows of `Z` (`n x rank_cap`).
///
/// Each step replaces `Z` by the row-normalized `R Z`, the maximizer of the
/// linearized objective over the feasible set. For PSD `R` the objective is
/// convex in `Z`, so every step is an ascent step. A real `R` gets a real
/// factor, which solves the (tighter) real relaxation.
pub fn solve_sdr_relaxation<R: Rng + ?Sized>(
    r: &CMatrix,
    rank_cap: Option<usize>,
    iterations: usize,
    rng: &mut R,
) -> Result<SdrSolution> {
    check_psd(r)?;
    let n = r.nrows();
    let p = rank_cap.unwrap_or_else(|| default_rank_cap(n));
    if p == 0 {
        return invalid("rank cap must be at least 1");
    }
    let real = is_real(r);
    let mut z = CMatrix::from_fn(n, p, |_, _| gaussian_entry(rng, real));
    let ones = CMatrix::from_element(n, p, Complex64::new(1.0 / (p as f64).sqrt(), 0.0));
    normalize_rows(&mut z, &ones);
    let mut objective = trace_objective(r, &z);
    for _ in 0..iterations {
        let mut next = r * &z;
        normalize_rows(&mut next, &z);
        let value = trace_objective(r, &next);
        if value < objective {
            break;
        }
        let gain = value - objective;
        z = next;
        objective = value;
        if gain <= 1e-13 * objective.abs() {
            break;
        }
    }
    Ok(SdrSolution { factor: z, objective, rank_cap: p, matrix: r.clone() })
}

fn gaussian_entry<R: Rng + ?Sized>(rng: &mut R, real: bool) -> Complex64 {
    if real {
        Complex64::new(rng.sample::<f64, _>(rand_distr::StandardNormal), 0.0)
    } else {
        complex_gaussian(rng, 1.0)
    }
}

/// Draws `trials` Gaussian candidates `Z g`, rotates each so entry 0 has
/// zero phase, quantizes the remaining entries and keeps the best. A real
/// factor is sampled with real `g`.
pub fn gaussian_randomization<R: Rng + ?Sized>(
    sdr: &SdrSolution,
    trials: usize,
    alphabet: PhaseAlphabet,
    rng: &mut R,
) -> Result<OptimizationResult> {
    randomize(sdr, trials, alphabet, false, rng)
}

/// Best quantization of the relative phases `theta` (entries 1..=N, entry 0
/// being the reference) over every common offset added before rounding.
/// Offsets are taken between consecutive rounding breakpoints, so each
/// distinct quantization is visited once.
pub fn offset_sweep(r: &CMatrix, theta: &[f64], alphabet: PhaseAlphabet) -> Result<(ReflectionVector, f64)> {
    if r.nrows() != theta.len() + 1 {
        return invalid(format!("matrix is {}x{}, expected {}", r.nrows(), r.ncols(), theta.len() + 1));
    }
    let step = alphabet.step();
    let tau = std::f64::consts::TAU;
    let mut breaks: Vec<f64> = theta
        .iter()
        .flat_map(|t| (0..alphabet.levels()).map(move |k| ((k as f64 + 0.5) * step - t).rem_euclid(tau)))
        .collect();
    breaks.sort_by(f64::total_cmp);
    let mut offsets: Vec<f64> = breaks.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if let (Some(first), Some(last)) = (breaks.first(), breaks.last()) {
        offsets.push(0.5 * (last + first + tau));
    }
    offsets.insert(0, 0.0);
    let mut best: Option<(ReflectionVector, f64)> = None;
    let mut levels = vec![0u32; theta.len()];
    for delta in offsets {
        for (level, t) in levels.iter_mut().zip(theta) {
            *level = alphabet.quantize_level(t + delta);
        }
        let v = ReflectionVector::from_levels(alphabet, levels.clone())?;
        let value = quadratic_form_unchecked(r, v.extended());
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((v, value));
        }
    }
    Ok(best.expect("offset 0 is always tried"))
}

fn randomize<R: Rng + ?Sized>(
    sdr: &SdrSolution,
    trials: usize,
    alphabet: PhaseAlphabet,
    offsets: bool,
    rng: &mut R,
) -> Result<OptimizationResult> {
    if trials == 0 {
        return invalid("at least one randomization trial is required");
    }
    let (n, p) = sdr.factor.shape();
    let mut best: Option<(ReflectionVector, f64)> = None;
    let mut levels = vec![0u32; n - 1];
    let mut theta = vec![0.0; n - 1];
    let real = is_real(&sdr.factor);
    for _ in 0..trials {
        let g: Vec<Complex64> = (0..p).map(|_| gaussian_entry(rng, real)).collect();
        let xi: Vec<Complex64> = (0..n).map(|i| (0..p).fold(ZERO, |acc, k| acc + sdr.factor[(i, k)] * g[k])).collect();
        let reference = xi[0].arg();
        for (t, x) in theta.iter_mut().zip(&xi[1..]) {
            *t = x.arg() - reference;
        }
        let (v, value) = if offsets {
            offset_sweep(&sdr.matrix, &theta, alphabet)?
        } else {
            for (level, t) in levels.iter_mut().zip(&theta) {
                *level = alphabet.quantize_level(*t);
            }
            let v = ReflectionVector::from_levels(alphabet, levels.clone())?;
            let value = quadratic_form_unchecked(&sdr.matrix, v.extended());
            (v, value)
        };
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((v, value));
        }
    }
    let (reflection, objective) = best.expect("trials >= 1");
    Ok(OptimizationResult { reflection, objective, method: Method::Proposed })
}

/// Refinement output with the objective after every coordinate visit.
#[derive(Debug, Clone)]
pub struct RefinementTrace {
    pub reflection: ReflectionVector,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub sweeps: usize,
}

/// Cyclic coordinate ascent over the alphabet, starting from `v0`.
pub fn successive_refinement(r: &CMatrix, v0: &ReflectionVector, max_sweeps: usize) -> Result<ReflectionVector> {
    refine_with_trace(r, v0, max_sweeps).map(|t| t.reflection)
}

pub fn refine_with_trace(r: &CMatrix, v0: &ReflectionVector, max_sweeps: usize) -> Result<RefinementTrace> {
    let mut v = v0.clone();
    let mut objective = quadratic_form(r, v.extended())?;
    let alphabet = v.alphabet();
    let candidates: Vec<Complex64> = alphabet.phases().iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
    let dim = r.nrows();
    let mut trace = Vec::new();
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = false;
        for n in 0..v.n_elements() {
            let row = n + 1;
            let ext = v.extended();
            // objective = const + 2 Re(conj(v_n) s_n) with s_n = sum_{k != n} R[n][k] v_k
            let s = (0..dim).filter(|&k| k != row).fold(ZERO, |acc, k| acc + r[(row, k)] * ext[k]);
            let incumbent = v.levels()[n];
            let score = |c: &Complex64| 2.0 * (c.conj() * s).re;
            let mut best_level = incumbent;
            let mut best_score = score(&candidates[incumbent as usize - 1]);
            let tol = 1e-12 * (objective.abs() + s.norm());
            for (i, c) in candidates.iter().enumerate() {
                let sc = score(c);
                if sc > best_score + tol {
                    best_score = sc;
                    best_level = i as u32 + 1;
                }
            }
            if best_level != incumbent {
                v.set_level(n, best_level);
                objective = quadratic_form_unchecked(r, v.extended());
                changed = true;
            }
            trace.push(objective);
        }
        if !changed {
            break;
        }
    }
    Ok(RefinementTrace { reflection: v, objective, trace, sweeps })
}

/// Settings of the relaxation, randomization and refinement pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSettings {
    pub rank_cap: Option<usize>,
    pub sdr_iterations: usize,
    pub randomization_trials: usize,
    pub refinement_sweeps: usize,
    /// Also quantize each candidate under every common phase offset of the
    /// IRS entries relative to the direct path.
    pub offset_search: bool,
}

impl Default for DesignSettings {
    fn default() -> Self {
        Self {
            rank_cap: None,
            sdr_iterations: 500,
            randomization_trials: 200,
            refinement_sweeps: 20,
            offset_search: true,
        }
    }
}

/// Full pipeline on `r`: relaxation, randomization with quantization, then
/// successive refinement.
///
/// With a 1-bit alphabet every feasible `v` is real and `v^H R v =
/// v^T Re(R) v`, so the relaxation is solved for `Re(R)`.
pub fn design_reflection<R: Rng + ?Sized>(
    r: &CMatrix,
    alphabet: PhaseAlphabet,
    settings: &DesignSettings,
    method: Method,
    rng: &mut R,
) -> Result<OptimizationResult> {
    let relaxed = if alphabet.bits() == 1 { r.map(|z| Complex64::new(z.re, 0.0)) } else { r.clone() };
    let sdr = solve_sdr_relaxation(&relaxed, settings.rank_cap, settings.sdr_iterations, rng)?;
    let start = randomize(&sdr, settings.randomization_trials, alphabet, settings.offset_search, rng)?;
    let refined = refine_with_trace(r, &start.reflection, settings.refinement_sweeps)?;
    Ok(OptimizationResult { reflection: refined.reflection, objective: refined.objective, method })
}

/// Conditional sample mean: per element, the phase with the largest mean
/// RSRP over the measurements that used it. Ties go to the smaller phase.
pub fn csm_select(dataset: &MeasurementDataset) -> Result<ReflectionVector> {
    let alphabet = dataset.alphabet;
    let levels = alphabet.levels() as usize;
    let n = dataset.n_elements();
    let mut sums = vec![0.0; n * levels];
    let mut counts = vec![0usize; n * levels];
    for e in &dataset.entries {
        for (i, &l) in e.reflection.levels().iter().enumerate() {
            let cell = i * levels + l as usize - 1;
            sums[cell] += e.rsrp;
            counts[cell] += 1;
        }
    }
    let mut chosen = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = (0u32, f64::NEG_INFINITY);
        for l in 0..levels {
            let cell = i * levels + l;
            if counts[cell] == 0 {
                return Err(Error::InsufficientData { element: i + 1, phase: alphabet.phase(l as u32 + 1) });
            }
            let mean = sums[cell] / counts[cell] as f64;
            if mean > best.1 {
                best = (l as u32 + 1, mean);
            }
        }
        chosen.push(best.0);
    }
    ReflectionVector::from_levels(alphabet, chosen)
}

/// Random-max sampling: the measured reflection with the largest RSRP.
/// Ties go to the earliest measurement.
pub fn rms_select(dataset: &MeasurementDataset) -> Result<ReflectionVector> {
    let mut best: Option<&crate::measurement::Measurement> = None;
    for e in &dataset.entries {
        if best.is_none_or(|b| e.rsrp > b.rsrp) {
            best = Some(e);
        }
    }
    best.map(|e| e.reflection.clone()).ok_or_else(|| Error::InvalidArgument("empty dataset".into()))
}

fn snr_from_power(power: f64, noise_power: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return invalid(format!("noise power must be positive, got {noise_power}"));
    }
    Ok(power / noise_power)
}

/// Average received SNR `v^H R v / sigma^2`, linear.
pub fn evaluate_snr(r: &CMatrix, v: &[Complex64], noise_power: f64) -> Result<f64> {
    snr_from_power(quadratic_form(r, v)?, noise_power)
}

pub fn evaluate_snr_db(r: &CMatrix, v: &[Complex64], noise_power: f64) -> Result<f64> {
    evaluate_snr(r, v, noise_power).map(linear_to_db)
}

/// Largest search space the exhaustive oracle accepts, as a power of two.
pub const EXHAUSTIVE_LIMIT_LOG2: u32 = 20;

/// Enumerates every phase configuration in lexicographic level order and
/// returns the first global maximizer.
pub fn exhaustive_oracle(r: &CMatrix, alphabet: PhaseAlphabet, n_elements: usize) -> Result<OptimizationResult> {
    if r.nrows() != n_elements + 1 {
        return invalid(format!("matrix is {}x{}, expected {}", r.nrows(), r.ncols(), n_elements + 1));
    }
    let log2_size = alphabet.bits() * n_elements as u32;
    if log2_size > EXHAUSTIVE_LIMIT_LOG2 {
        return Err(Error::TooLarge { log2_size, limit_log2: EXHAUSTIVE_LIMIT_LOG2 });
    }
    let top = alphabet.levels();
    let mut v = ReflectionVector::from_levels(alphabet, vec![1; n_elements])?;
    let mut best = (v.clone(), quadratic_form_unchecked(r, v.extended()));
    loop {
        // odometer: last element fastest
        let mut i = n_elements;
        loop {
            if i == 0 {
                return Ok(OptimizationResult { reflection: best.0, objective: best.1, method: Method::Exhaustive });
            }
            i -= 1;
            let l = v.levels()[i];
            if l < top {
                v.set_level(i, l + 1);
                break;
            }
            v.set_level(i, 1);
        }
        let value = quadratic_form_unchecked(r, v.extended());
        if value > best.1 + 1e-12 * best.1.abs() {
            best = (v.clone(), value);
        }
    }
}
