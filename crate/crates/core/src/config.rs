//! System parameters. JSON carries powers in dBm and the Rician factor in
//! dB; everything is converted to linear scale on parse.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::reflection::PhaseAlphabet;

pub type Position = [f64; 3];

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// All scalar parameters of one simulated link, linear scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemConfigJson", into = "SystemConfigJson")]
pub struct SystemConfig {
    pub n_elements: usize,
    pub n_subcarriers: usize,
    pub n_rs_subcarriers: usize,
    pub n_rs_symbols: usize,
    pub rs_offset: usize,
    pub taps_direct: usize,
    pub taps_bs_irs: usize,
    pub taps_irs_user: usize,
    /// Watts.
    pub tx_power: f64,
    /// Watts.
    pub noise_power: f64,
    pub phase_bits: u32,
    pub pdp_decay: f64,
    /// Decay of the IRS-user NLoS taps; `None` reuses `pdp_decay`.
    pub nlos_decay: Option<f64>,
    /// Linear LoS-to-NLoS power ratio.
    pub rician_factor: f64,
    pub bs_pos: Position,
    pub user_pos: Position,
    /// Bottom-left element of the IRS, which lies parallel to the y-z plane.
    pub irs_ref_pos: Position,
    pub irs_rows: usize,
    pub irs_cols: usize,
    /// Inter-element spacing in wavelengths.
    pub element_spacing: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    /// The reference deployment: 8x4 IRS, 128 subcarriers, 64 RS
    /// subcarriers, 30 RS symbols, 4/4/3 taps, 30 dBm transmit power,
    /// -90 dBm noise, 2-bit phases, decay 2, Rician factor 7 dB.
    fn default() -> Self {
        Self {
            n_elements: 32,
            n_subcarriers: 128,
            n_rs_subcarriers: 64,
            n_rs_symbols: 30,
            rs_offset: 0,
            taps_direct: 4,
            taps_bs_irs: 4,
            taps_irs_user: 3,
            tx_power: dbm_to_watts(30.0),
            noise_power: dbm_to_watts(-90.0),
            phase_bits: 2,
            pdp_decay: 2.0,
            nlos_decay: None,
            rician_factor: db_to_linear(7.0),
            bs_pos: [35.0, -20.0, 15.0],
            user_pos: [0.0, 1.0, 0.0],
            irs_ref_pos: [-2.0, -1.0, 0.0],
            irs_rows: 4,
            irs_cols: 8,
            element_spacing: 0.5,
            wavelength: 0.1,
            seed: 0,
        }
    }
}

impl SystemConfig {
    /// Cascaded tap count `K2 + K3 - 1`.
    pub fn cascaded_taps(&self) -> usize {
        self.taps_bs_irs + self.taps_irs_user - 1
    }

    /// Maximum delay spread `max(K1, K2 + K3 - 1)`, the rank bound of the
    /// autocorrelation matrix.
    pub fn max_taps(&self) -> usize {
        self.taps_direct.max(self.cascaded_taps())
    }

    pub fn alphabet(&self) -> PhaseAlphabet {
        PhaseAlphabet::new(self.phase_bits).expect("validated config")
    }

    /// Resizes the IRS to `rows x cols` and keeps `n_elements` consistent.
    pub fn with_irs_shape(mut self, rows: usize, cols: usize) -> Self {
        self.irs_rows = rows;
        self.irs_cols = cols;
        self.n_elements = rows * cols;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_elements", self.n_elements),
            ("n_subcarriers", self.n_subcarriers),
            ("n_rs_subcarriers", self.n_rs_subcarriers),
            ("n_rs_symbols", self.n_rs_symbols),
            ("taps_direct", self.taps_direct),
            ("taps_bs_irs", self.taps_bs_irs),
            ("taps_irs_user", self.taps_irs_user),
            ("irs_rows", self.irs_rows),
            ("irs_cols", self.irs_cols),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return invalid(format!("{name} must be at least 1"));
        }
        if self.n_elements != self.irs_rows * self.irs_cols {
            return invalid(format!(
                "n_elements = {} but IRS shape is {}x{}",
                self.n_elements, self.irs_rows, self.irs_cols
            ));
        }
        if !self.n_subcarriers.is_multiple_of(self.n_rs_subcarriers) {
            return invalid(format!(
                "{} subcarriers not divisible by {} RS subcarriers",
                self.n_subcarriers, self.n_rs_subcarriers
            ));
        }
        if self.rs_offset >= self.n_subcarriers / self.n_rs_subcarriers {
            return invalid(format!("rs_offset {} exceeds the RS spacing", self.rs_offset));
        }
        if self.n_rs_subcarriers < self.max_taps() {
            return invalid(format!(
                "{} RS subcarriers is fewer than the {} delay taps",
                self.n_rs_subcarriers,
                self.max_taps()
            ));
        }
        if !(self.tx_power > 0.0 && self.noise_power > 0.0) {
            return invalid("powers must be positive");
        }
        PhaseAlphabet::new(self.phase_bits)?;
        let decays = [Some(self.pdp_decay), self.nlos_decay];
        if decays.iter().flatten().any(|d| !d.is_finite() || *d < 0.0) {
            return invalid("decay factors must be finite and non-negative");
        }
        if !(self.rician_factor >= 0.0 && self.rician_factor.is_finite()) {
            return invalid("rician factor must be finite and non-negative");
        }
        if !(self.element_spacing > 0.0 && self.wavelength > 0.0) {
            return invalid("element spacing and wavelength must be positive");
        }
        Ok(())
    }
}

/// On-disk form of [`SystemConfig`]. Omitted fields take the defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfigJson {
    pub n_elements: Option<usize>,
    pub n_subcarriers: usize,
    pub n_rs_subcarriers: usize,
    pub n_rs_symbols: usize,
    pub rs_offset: usize,
    pub taps_direct: usize,
    pub taps_bs_irs: usize,
    pub taps_irs_user: usize,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub phase_bits: u32,
    pub pdp_decay: f64,
    pub nlos_decay: Option<f64>,
    pub rician_factor_db: f64,
    pub bs_pos: Position,
    pub user_pos: Position,
    pub irs_ref_pos: Position,
    pub irs_rows: usize,
    pub irs_cols: usize,
    pub element_spacing: f64,
    pub wavelength: f64,
    pub seed: u64,
}

impl Default for SystemConfigJson {
    fn default() -> Self {
        let mut json = Self::from(SystemConfig::default());
        json.n_elements = None;
        json
    }
}

impl From<SystemConfig> for SystemConfigJson {
    fn from(c: SystemConfig) -> Self {
        Self {
            n_elements: Some(c.n_elements),
            n_subcarriers: c.n_subcarriers,
            n_rs_subcarriers: c.n_rs_subcarriers,
            n_rs_symbols: c.n_rs_symbols,
            rs_offset: c.rs_offset,
            taps_direct: c.taps_direct,
            taps_bs_irs: c.taps_bs_irs,
            taps_irs_user: c.taps_irs_user,
            tx_power_dbm: watts_to_dbm(c.tx_power),
            noise_power_dbm: watts_to_dbm(c.noise_power),
            phase_bits: c.phase_bits,
            pdp_decay: c.pdp_decay,
            nlos_decay: c.nlos_decay,
            rician_factor_db: linear_to_db(c.rician_factor),
            bs_pos: c.bs_pos,
            user_pos: c.user_pos,
            irs_ref_pos: c.irs_ref_pos,
            irs_rows: c.irs_rows,
            irs_cols: c.irs_cols,
            element_spacing: c.element_spacing,
            wavelength: c.wavelength,
            seed: c.seed,
        }
    }
}

impl TryFrom<SystemConfigJson> for SystemConfig {
    type Error = Error;

    fn try_from(j: SystemConfigJson) -> Result<Self> {
        let config = Self {
            n_elements: j.n_elements.unwrap_or(j.irs_rows * j.irs_cols),
            n_subcarriers: j.n_subcarriers,
            n_rs_subcarriers: j.n_rs_subcarriers,
            n_rs_symbols: j.n_rs_symbols,
            rs_offset: j.rs_offset,
            taps_direct: j.taps_direct,
            taps_bs_irs: j.taps_bs_irs,
            taps_irs_user: j.taps_irs_user,
            tx_power: dbm_to_watts(j.tx_power_dbm),
            noise_power: dbm_to_watts(j.noise_power_dbm),
            phase_bits: j.phase_bits,
            pdp_decay: j.pdp_decay,
            nlos_decay: j.nlos_decay,
            rician_factor: db_to_linear(j.rician_factor_db),
            bs_pos: j.bs_pos,
            user_pos: j.user_pos,
            irs_ref_pos: j.irs_ref_pos,
            irs_rows: j.irs_rows,
            irs_cols: j.irs_cols,
            element_spacing: j.element_spacing,
            wavelength: j.wavelength,
            seed: j.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_has_rank_bound_six() {
        let c = SystemConfig::default();
        c.validate().unwrap();
        assert_eq!(c.cascaded_taps(), 6);
        assert_eq!(c.max_taps(), 6);
        assert!((c.tx_power - 1.0).abs() < 1e-12);
        assert!((c.noise_power - 1e-12).abs() < 1e-24);
        assert!((c.rician_factor - 5.011_872_336_272_722).abs() < 1e-12);
    }

    #[test]
    fn parses_db_units() {
        let c: SystemConfig = serde_json::from_str(
            r#"{"tx_power_dbm": 20.0, "noise_power_dbm": -100.0, "rician_factor_db": 0.0,
                "irs_rows": 2, "irs_cols": 3}"#,
        )
        .unwrap();
        assert_eq!(c.n_elements, 6);
        assert!((c.tx_power - 0.1).abs() < 1e-12);
        assert!((c.noise_power - 1e-13).abs() < 1e-25);
        assert!((c.rician_factor - 1.0).abs() < 1e-12);
        let back: SystemConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.n_elements, c.n_elements);
        assert!((back.tx_power - c.tx_power).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid() {
        let bad = |f: &dyn Fn(&mut SystemConfig)| {
            let mut c = SystemConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(&|c| c.n_rs_subcarriers = 48));
        assert!(bad(&|c| c.n_rs_subcarriers = 4));
        assert!(bad(&|c| c.n_elements = 31));
        assert!(bad(&|c| c.noise_power = 0.0));
        assert!(bad(&|c| c.phase_bits = 0));
        assert!(bad(&|c| c.taps_direct = 0));
        assert!(bad(&|c| c.rs_offset = 2));
        assert!(serde_json::from_str::<SystemConfig>(r#"{"irs_rows": 3, "n_elements": 32}"#).is_err());
        assert!(serde_json::from_str::<SystemConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
