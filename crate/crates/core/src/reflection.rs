//! Discrete IRS phase alphabet and the extended reflection vector.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::ONE;

/// The phase set `{w, 2w, ..., 2^bits w}` with `w = 2pi / 2^bits`.
///
/// Levels are numbered `1..=2^bits`; level `l` has phase `l * w`, so the
/// top level is `2pi`, not `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseAlphabet {
    bits: u32,
}

impl PhaseAlphabet {
    pub const MAX_BITS: u32 = 16;

    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > Self::MAX_BITS {
            return invalid(format!("phase bits must be in 1..={}, got {bits}", Self::MAX_BITS));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        TAU / self.levels() as f64
    }

    pub fn phase(&self, level: u32) -> f64 {
        level as f64 * self.step()
    }

    /// All grid phases in increasing order.
    pub fn phases(&self) -> Vec<f64> {
        (1..=self.levels()).map(|l| self.phase(l)).collect()
    }

    /// Level of the grid point nearest to `phase` on the circle.
    /// Exact ties go to the smaller grid value.
    pub fn quantize_level(&self, phase: f64) -> u32 {
        let mut best = 1;
        let mut best_dist = f64::INFINITY;
        for level in 1..=self.levels() {
            let d = circular_distance(phase, self.phase(level));
            if d < best_dist {
                best_dist = d;
                best = level;
            }
        }
        best
    }

    /// Level whose phase equals `phase` up to `1e-9` rad, if any.
    pub fn level_of(&self, phase: f64) -> Option<u32> {
        let level = self.quantize_level(phase);
        (circular_distance(phase, self.phase(level)) < 1e-9).then_some(level)
    }

    pub fn random_level<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        rng.random_range(1..=self.levels())
    }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Nearest element of the `bits`-bit phase alphabet to `phase`.
pub fn quantize_to_alphabet(phase: f64, bits: u32) -> Result<f64> {
    let alphabet = PhaseAlphabet::new(bits)?;
    Ok(alphabet.phase(alphabet.quantize_level(phase)))
}

/// Extended reflection vector `[1, e^{j theta_1}, ..., e^{j theta_N}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionVector {
    alphabet: PhaseAlphabet,
    levels: Vec<u32>,
    extended: Vec<Complex64>,
}

impl ReflectionVector {
    pub fn from_levels(alphabet: PhaseAlphabet, levels: Vec<u32>) -> Result<Self> {
        if let Some(&bad) = levels.iter().find(|&&l| l == 0 || l > alphabet.levels()) {
            return invalid(format!(
                "phase level {bad} outside 1..={} for {} bits",
                alphabet.levels(),
                alphabet.bits()
            ));
        }
        let mut extended = Vec::with_capacity(levels.len() + 1);
        extended.push(ONE);
        extended.extend(levels.iter().map(|&l| Complex64::from_polar(1.0, alphabet.phase(l))));
        Ok(Self { alphabet, levels, extended })
    }

    /// Every phase must already lie on the alphabet grid.
    pub fn from_phases(alphabet: PhaseAlphabet, phases: &[f64]) -> Result<Self> {
        let levels = phases
            .iter()
            .map(|&p| {
                alphabet.level_of(p).ok_or_else(|| {
                    crate::Error::InvalidArgument(format!("phase {p} is not in the {}-bit alphabet", alphabet.bits()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_levels(alphabet, levels)
    }

    /// All elements at the top level (phase `2pi`, i.e. `v = 1`).
    pub fn uniform(alphabet: PhaseAlphabet, n_elements: usize) -> Self {
        Self::from_levels(alphabet, vec![alphabet.levels(); n_elements]).expect("top level is valid")
    }

    pub fn random<R: Rng + ?Sized>(alphabet: PhaseAlphabet, n_elements: usize, rng: &mut R) -> Self {
        let levels = (0..n_elements).map(|_| alphabet.random_level(rng)).collect();
        Self::from_levels(alphabet, levels).expect("random levels are in range")
    }

    pub fn alphabet(&self) -> PhaseAlphabet {
        self.alphabet
    }

    pub fn n_elements(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn phases(&self) -> Vec<f64> {
        self.levels.iter().map(|&l| self.alphabet.phase(l)).collect()
    }

    /// Length `N + 1`, entry 0 fixed to 1.
    pub fn extended(&self) -> &[Complex64] {
        &self.extended
    }

    /// Changes element `n` (0-based, excluding the fixed leading entry).
    pub fn set_level(&mut self, n: usize, level: u32) {
        assert!(level >= 1 && level <= self.alphabet.levels());
        self.levels[n] = level;
        self.extended[n + 1] = Complex64::from_polar(1.0, self.alphabet.phase(level));
    }
}
