//! Reference-signal layout, RSRP measurement and training datasets.
//!
//! With RSs on a uniform grid of `M0 >= K` subcarriers, the noiseless RSRP
//! equals `v^H R v`: the partial-DFT Gram matrix `F0^H F0` is `M0` times a
//! tiling of identities, which acts as `M0 I` on the `K` non-zero CIR rows.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{channel_frequency_response, twiddle, ChannelRealization};
use crate::error::{invalid, Error, Result};
use crate::linalg::{quadratic_form, CMatrix, ZERO};
use crate::reflection::{PhaseAlphabet, ReflectionVector};
use crate::rng::{complex_gaussian, substream};

/// Uniform RS subcarrier grid `{offset + i * M/M0}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsPattern {
    m: usize,
    m0: usize,
    offset: usize,
    indices: Vec<usize>,
}

impl RsPattern {
    pub fn new(m: usize, m0: usize, offset: usize) -> Result<Self> {
        if m0 == 0 || m == 0 {
            return invalid("subcarrier counts must be positive");
        }
        if !m.is_multiple_of(m0) {
            return invalid(format!("{m} subcarriers not divisible by {m0} RS subcarriers"));
        }
        let spacing = m / m0;
        if offset >= spacing {
            return invalid(format!("offset {offset} must be below the RS spacing {spacing}"));
        }
        let indices = (0..m0).map(|i| offset + i * spacing).collect();
        Ok(Self { m, m0, offset, indices })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.m
    }

    pub fn n_rs(&self) -> usize {
        self.m0
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn spacing(&self) -> usize {
        self.m / self.m0
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Whether the RSRP identity holds for channels with `taps` delay taps.
    pub fn resolves(&self, taps: usize) -> bool {
        self.m0 >= taps
    }
}

pub fn rs_pattern(m: usize, m0: usize, offset: usize) -> Result<RsPattern> {
    RsPattern::new(m, m0, offset)
}

/// `F0^H F0` where `F0` holds the DFT rows selected by the pattern.
pub fn partial_dft_autocorr(pattern: &RsPattern) -> CMatrix {
    let m = pattern.n_subcarriers();
    CMatrix::from_fn(m, m, |a, b| {
        pattern.indices().iter().fold(ZERO, |acc, &row| acc + twiddle(row, a, m).conj() * twiddle(row, b, m))
    })
}

/// `M0` times the `(M/M0) x (M/M0)` block tiling of `I_{M0}`.
pub fn tiled_identity(m: usize, m0: usize) -> CMatrix {
    CMatrix::from_fn(m, m, |a, b| if a % m0 == b % m0 { Complex64::new(m0 as f64, 0.0) } else { ZERO })
}

/// Average received power `v^H R v + sigma^2`.
pub fn expected_power(r: &CMatrix, v: &[Complex64], noise_power: f64) -> Result<f64> {
    Ok(quadratic_form(r, v)? + noise_power)
}

/// One RSRP report: `Q` OFDM symbols over the RS subcarriers with
/// constant-modulus RSs of amplitude `sqrt(P/M)` and fresh `CN(0, sigma^2)`
/// noise per symbol and subcarrier.
pub fn simulate_rsrp<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    v: &ReflectionVector,
    pattern: &RsPattern,
    q_symbols: usize,
    noise_power: f64,
    rng: &mut R,
) -> Result<f64> {
    let m = realization.n_subcarriers();
    if pattern.n_subcarriers() != m {
        return invalid(format!("pattern built for {} subcarriers, channel has {m}", pattern.n_subcarriers()));
    }
    if q_symbols == 0 {
        return invalid("at least one RS symbol is required");
    }
    if noise_power < 0.0 {
        return invalid("noise power must be non-negative");
    }
    let h = channel_frequency_response(&realization.cir_matrix, v.extended(), Some(pattern.indices()))?;
    let amp = (realization.tx_power / m as f64).sqrt();
    let mut acc = 0.0;
    for _ in 0..q_symbols {
        for &hm in &h {
            let y = if noise_power > 0.0 { amp * hm + complex_gaussian(rng, noise_power) } else { amp * hm };
            acc += y.norm_sqr();
        }
    }
    Ok(acc / (q_symbols * pattern.n_rs()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub reflection: ReflectionVector,
    /// Watts.
    pub rsrp: f64,
}

/// `L` (reflection, RSRP) pairs. The first `train_count` entries form the
/// training split, the rest the validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDataset {
    pub entries: Vec<Measurement>,
    pub noise_power: f64,
    pub train_count: usize,
    pub alphabet: PhaseAlphabet,
}

/// Training split size `round(L * ratio)`, kept inside `1..L`.
pub fn split_count(len: usize, ratio: f64) -> usize {
    ((len as f64 * ratio).round() as usize).clamp(1, len.saturating_sub(1).max(1))
}

impl MeasurementDataset {
    pub fn new(
        entries: Vec<Measurement>,
        noise_power: f64,
        train_count: usize,
        alphabet: PhaseAlphabet,
    ) -> Result<Self> {
        if entries.len() < 2 {
            return invalid("a dataset needs at least two measurements");
        }
        if train_count == 0 || train_count >= entries.len() {
            return invalid(format!("train count {train_count} must be in 1..{}", entries.len()));
        }
        if let Some(bad) = entries.iter().find(|e| !(e.rsrp >= 0.0) || !e.rsrp.is_finite()) {
            return invalid(format!("RSRP must be finite and non-negative, got {}", bad.rsrp));
        }
        let n = entries[0].reflection.n_elements();
        if entries.iter().any(|e| e.reflection.n_elements() != n || e.reflection.alphabet() != alphabet) {
            return invalid("all reflections must share the element count and alphabet");
        }
        Ok(Self { entries, noise_power, train_count, alphabet })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_elements(&self) -> usize {
        self.entries[0].reflection.n_elements()
    }

    pub fn train(&self) -> &[Measurement] {
        &self.entries[..self.train_count]
    }

    pub fn validation(&self) -> &[Measurement] {
        &self.entries[self.train_count..]
    }

    /// Writes `l, theta_1..theta_N, rsrp_watts` with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.n_elements();
        let mut header = vec!["l".to_string()];
        header.extend((1..=n).map(|i| format!("theta_{i}")));
        header.push("rsrp_watts".into());
        w.write_record(&header)?;
        for (l, e) in self.entries.iter().enumerate() {
            let mut row = vec![(l + 1).to_string()];
            row.extend(e.reflection.phases().iter().map(f64::to_string));
            row.push(e.rsrp.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout of [`write_csv`](Self::write_csv). Rows must be
    /// ordered by `l`.
    pub fn read_csv<R: Read>(reader: R, alphabet: PhaseAlphabet, noise_power: f64, split_ratio: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols = header.len();
        if cols < 3 || &header[0] != "l" || &header[cols - 1] != "rsrp_watts" {
            return invalid("dataset CSV must have columns l, theta_1..theta_N, rsrp_watts");
        }
        for (i, name) in header.iter().enumerate().take(cols - 1).skip(1) {
            if name != format!("theta_{i}") {
                return invalid(format!("unexpected column {name}"));
            }
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("not a number: {s}")))
        };
        let mut entries = Vec::new();
        for (row_index, record) in r.records().enumerate() {
            let record = record?;
            let l: usize =
                record[0].trim().parse().map_err(|_| Error::InvalidArgument(format!("bad index {}", &record[0])))?;
            if l != row_index + 1 {
                return invalid(format!("rows must be ordered by l; found {l} at row {}", row_index + 1));
            }
            let phases = (1..cols - 1).map(|i| parse(&record[i])).collect::<Result<Vec<_>>>()?;
            let reflection = ReflectionVector::from_phases(alphabet, &phases)?;
            entries.push(Measurement { reflection, rsrp: parse(&record[cols - 1])? });
        }
        let train_count = split_count(entries.len(), split_ratio);
        Self::new(entries, noise_power, train_count, alphabet)
    }
}

/// Measures `L` reflections with i.i.d. uniform phases. Each pattern uses
/// its own substream so the result is independent of thread count.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    alphabet: PhaseAlphabet,
    pattern: &RsPattern,
    q_symbols: usize,
    noise_power: f64,
    len: usize,
    split_ratio: f64,
    rng: &mut R,
) -> Result<MeasurementDataset> {
    if len < 2 {
        return invalid("a dataset needs at least two measurements");
    }
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return invalid(format!("split ratio must be in (0, 1), got {split_ratio}"));
    }
    let base: u64 = rng.random();
    let n = realization.n_elements();
    let entries = (0..len as u64)
        .into_par_iter()
        .map(|l| {
            let mut rng = substream(base, &[l]);
            let reflection = ReflectionVector::random(alphabet, n, &mut rng);
            let rsrp = simulate_rsrp(realization, &reflection, pattern, q_symbols, noise_power, &mut rng)?;
            Ok(Measurement { reflection, rsrp })
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementDataset::new(entries, noise_power, split_count(len, split_ratio), alphabet)
}

/// [`build_dataset`] with the RS layout, symbol count, noise and alphabet
/// taken from `config`.
pub fn build_dataset_for<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    config: &crate::SystemConfig,
    len: usize,
    split_ratio: f64,
    rng: &mut R,
) -> Result<MeasurementDataset> {
    let pattern = RsPattern::new(config.n_subcarriers, config.n_rs_subcarriers, config.rs_offset)?;
    build_dataset(
        realization,
        config.alphabet(),
        &pattern,
        config.n_rs_symbols,
        config.noise_power,
        len,
        split_ratio,
        rng,
    )
}

/// Noiseless power for every entry, `v^H R v`.
pub fn noiseless_powers(r: &CMatrix, dataset: &MeasurementDataset) -> Vec<f64> {
    dataset.entries.iter().map(|e| crate::linalg::quadratic_form_unchecked(r, e.reflection.extended())).collect()
}
