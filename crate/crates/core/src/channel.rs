//! Wideband tapped-delay-line channels for the direct, BS-IRS and IRS-user
//! links, the CIR matrix `G = [f, g_1, ..., g_N]` and its scaled Gram matrix
//! `R = (P/M) G^H G`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Position, SystemConfig};
use crate::error::{invalid, Result};
use crate::linalg::{CMatrix, ZERO};
use crate::rng::complex_gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Direct,
    BsIrs,
    IrsUser,
}

/// Distance-dependent path loss in dB.
pub fn path_loss_db(link: Link, distance: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return invalid(format!("distance must be positive, got {distance}"));
    }
    let lg = distance.log10();
    Ok(match link {
        Link::Direct => 33.0 + 37.0 * lg,
        Link::BsIrs | Link::IrsUser => 30.0 + 20.0 * lg,
    })
}

/// Exponentially decaying power delay profile normalized to unit sum.
pub fn exponential_pdp(taps: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..taps).map(|k| (-decay * k as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Linear convolution `q * b`.
pub fn cascade_taps(q: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    if q.is_empty() || b.is_empty() {
        return invalid("cannot convolve an empty tap vector");
    }
    let mut out = vec![ZERO; q.len() + b.len() - 1];
    for (i, &qi) in q.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += qi * bj;
        }
    }
    Ok(out)
}

/// `M x (N+1)` CIR matrix: column 0 is the zero-padded direct channel,
/// column `n` the zero-padded cascaded channel of element `n`.
pub fn assemble_cir_matrix(direct: &[Complex64], cascaded: &[Vec<Complex64>], n_subcarriers: usize) -> Result<CMatrix> {
    let longest = cascaded.iter().map(Vec::len).chain([direct.len()]).max().unwrap_or(0);
    if longest > n_subcarriers {
        return invalid(format!("{longest} taps exceed {n_subcarriers} subcarriers"));
    }
    let mut g = CMatrix::zeros(n_subcarriers, cascaded.len() + 1);
    for (k, &f) in direct.iter().enumerate() {
        g[(k, 0)] = f;
    }
    for (n, taps) in cascaded.iter().enumerate() {
        for (k, &t) in taps.iter().enumerate() {
            g[(k, n + 1)] = t;
        }
    }
    Ok(g)
}

/// `(P/M) G^H G`.
pub fn autocorrelation(g: &CMatrix, tx_power: f64, n_subcarriers: usize) -> Result<CMatrix> {
    if g.nrows() != n_subcarriers {
        return invalid(format!("CIR matrix has {} rows, expected {n_subcarriers}", g.nrows()));
    }
    let mut r = g.adjoint() * g;
    r.scale_mut(tx_power / n_subcarriers as f64);
    // exact Hermitian symmetry
    for i in 0..r.nrows() {
        r[(i, i)].im = 0.0;
        for j in 0..i {
            r[(i, j)] = r[(j, i)].conj();
        }
    }
    Ok(r)
}

/// DFT twiddle `e^{-j 2pi m k / M}`, exact for the reduced exponent.
pub(crate) fn twiddle(m: usize, k: usize, n_subcarriers: usize) -> Complex64 {
    let e = (m * k) % n_subcarriers;
    Complex64::from_polar(1.0, -TAU * e as f64 / n_subcarriers as f64)
}

/// CFR `F_M G v` on the requested subcarriers (all when `indices` is
/// `None`), using the unnormalized DFT.
pub fn channel_frequency_response(g: &CMatrix, v: &[Complex64], indices: Option<&[usize]>) -> Result<Vec<Complex64>> {
    let m = g.nrows();
    if v.len() != g.ncols() {
        return invalid(format!("reflection has length {}, expected {}", v.len(), g.ncols()));
    }
    if let Some(&bad) = indices.and_then(|ix| ix.iter().find(|&&i| i >= m)) {
        return invalid(format!("subcarrier index {bad} out of range 0..{m}"));
    }
    let cir = superimposed_cir(g, v);
    let support = cir.iter().rposition(|z| *z != ZERO).map_or(0, |p| p + 1);
    let response = |sc: usize| cir[..support].iter().enumerate().fold(ZERO, |acc, (k, &h)| acc + twiddle(sc, k, m) * h);
    Ok(match indices {
        Some(ix) => ix.iter().map(|&sc| response(sc)).collect(),
        None => (0..m).map(response).collect(),
    })
}

/// Time-domain CIR `G v`.
pub(crate) fn superimposed_cir(g: &CMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let mut cir = vec![ZERO; g.nrows()];
    for (col, &vn) in v.iter().enumerate() {
        for (k, h) in cir.iter_mut().enumerate() {
            *h += g[(k, col)] * vn;
        }
    }
    cir
}

/// One draw of all link taps plus the derived `G` and `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub direct: Vec<Complex64>,
    pub bs_irs: Vec<Vec<Complex64>>,
    pub irs_user: Vec<Vec<Complex64>>,
    pub cascaded: Vec<Vec<Complex64>>,
    pub cir_matrix: CMatrix,
    pub autocorr: CMatrix,
    pub tx_power: f64,
}

impl ChannelRealization {
    /// Builds the derived quantities from explicit per-link taps.
    pub fn from_taps(
        direct: Vec<Complex64>,
        bs_irs: Vec<Vec<Complex64>>,
        irs_user: Vec<Vec<Complex64>>,
        n_subcarriers: usize,
        tx_power: f64,
    ) -> Result<Self> {
        if bs_irs.len() != irs_user.len() {
            return invalid("BS-IRS and IRS-user channels must cover the same elements");
        }
        if direct.is_empty() {
            return invalid("direct channel needs at least one tap");
        }
        let cascaded = bs_irs.iter().zip(&irs_user).map(|(q, b)| cascade_taps(q, b)).collect::<Result<Vec<_>>>()?;
        let cir_matrix = assemble_cir_matrix(&direct, &cascaded, n_subcarriers)?;
        let autocorr = autocorrelation(&cir_matrix, tx_power, n_subcarriers)?;
        Ok(Self { direct, bs_irs, irs_user, cascaded, cir_matrix, autocorr, tx_power })
    }

    pub fn n_elements(&self) -> usize {
        self.cascaded.len()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.cir_matrix.nrows()
    }

    /// `max(K1, K_r)`: rows beyond this are zero padding.
    pub fn max_taps(&self) -> usize {
        self.cascaded.iter().map(Vec::len).chain([self.direct.len()]).max().unwrap_or(0)
    }
}

fn distance(a: &Position, b: &Position) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// IRS element coordinates: the array lies in the plane `x = x_ref`, with
/// columns along `y` and rows along `z`, row-major from the reference corner.
pub fn element_positions(config: &SystemConfig) -> Vec<Position> {
    let d = config.element_spacing * config.wavelength;
    let [x0, y0, z0] = config.irs_ref_pos;
    (0..config.irs_rows)
        .flat_map(|r| (0..config.irs_cols).map(move |c| [x0, y0 + c as f64 * d, z0 + r as f64 * d]))
        .collect()
}

/// Per-tap average powers of the Rayleigh links and the IRS-user split.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub direct_tap_power: Vec<f64>,
    pub bs_irs_tap_power: Vec<f64>,
    /// Power of the deterministic first IRS-user tap.
    pub los_power: f64,
    /// Powers of the Rayleigh IRS-user taps. Index 0 is the NLoS share of the
    /// first tap and is zero unless the link has a single tap.
    pub irs_user_nlos_power: Vec<f64>,
}

impl LinkBudget {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        let gain = |link, d| path_loss_db(link, d).map(|db| 10f64.powf(-db / 10.0));
        let g1 = gain(Link::Direct, distance(&config.bs_pos, &config.user_pos))?;
        let g2 = gain(Link::BsIrs, distance(&config.bs_pos, &config.irs_ref_pos))?;
        let g3 = gain(Link::IrsUser, distance(&config.irs_ref_pos, &config.user_pos))?;
        let kappa = config.rician_factor;
        let los_power = g3 * kappa / (1.0 + kappa);
        let nlos_total = g3 / (1.0 + kappa);
        let k3 = config.taps_irs_user;
        let irs_user_nlos_power = if k3 == 1 {
            vec![nlos_total]
        } else {
            let decay = config.nlos_decay.unwrap_or(config.pdp_decay);
            std::iter::once(0.0).chain(exponential_pdp(k3 - 1, decay).into_iter().map(|z| z * nlos_total)).collect()
        };
        Ok(Self {
            direct_tap_power: exponential_pdp(config.taps_direct, config.pdp_decay)
                .into_iter()
                .map(|z| z * g1)
                .collect(),
            bs_irs_tap_power: exponential_pdp(config.taps_bs_irs, config.pdp_decay)
                .into_iter()
                .map(|z| z * g2)
                .collect(),
            los_power,
            irs_user_nlos_power,
        })
    }
}

/// Draws one realization. Direct and BS-IRS taps are i.i.d. Rayleigh with
/// an exponential PDP; the IRS-user link is Rician with a geometric LoS
/// first tap and Rayleigh NLoS taps.
pub fn generate_realization<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<ChannelRealization> {
    config.validate()?;
    let budget = LinkBudget::new(config)?;
    let draw =
        |rng: &mut R, powers: &[f64]| -> Vec<Complex64> { powers.iter().map(|&p| complex_gaussian(rng, p)).collect() };

    let direct = draw(rng, &budget.direct_tap_power);
    let los_amp = budget.los_power.sqrt();
    let mut bs_irs = Vec::with_capacity(config.n_elements);
    let mut irs_user = Vec::with_capacity(config.n_elements);
    for pos in element_positions(config) {
        bs_irs.push(draw(rng, &budget.bs_irs_tap_power));
        let mut b = draw(rng, &budget.irs_user_nlos_power);
        let d = distance(&pos, &config.user_pos);
        b[0] += Complex64::from_polar(los_amp, -TAU * d / config.wavelength);
        irs_user.push(b);
    }
    ChannelRealization::from_taps(direct, bs_irs, irs_user, config.n_subcarriers, config.tx_power)
}
