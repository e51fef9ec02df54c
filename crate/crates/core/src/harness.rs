//! Monte Carlo experiments: NMSE and SNR versus the number of measurements.
//!
//! Each trial draws one channel realization and reuses it for every `L` and
//! every method, so comparisons within a trial are paired. Datasets for
//! different `L` are nested: pattern `l` and its noise come from the same
//! substream whatever the dataset length.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::generate_realization;
use crate::config::linear_to_db;
use crate::error::{invalid, Error, Result};
use crate::estimator::{nmse, train, TrainingHyper};
use crate::linalg::CMatrix;
use crate::measurement::{build_dataset_for, MeasurementDataset};
use crate::optimizer::{csm_select, design_reflection, evaluate_snr, rms_select, DesignSettings, Method};
use crate::reflection::ReflectionVector;
use crate::rng::substream;
use crate::SystemConfig;

const PAIRING: &str = "one channel realization per trial, shared by all L values and methods";

const TAG_CHANNEL: u64 = 0;
const TAG_DATASET: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_DESIGN: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub l_grid: Vec<usize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub hyper: TrainingHyper,
    pub design: DesignSettings,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            base: SystemConfig::default(),
            l_grid: vec![500, 2000, 8000],
            methods: vec![Method::Proposed, Method::RankOne, Method::Csm, Method::Rms, Method::UpperBound],
            trials: 20,
            hyper: TrainingHyper::default(),
            design: DesignSettings::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.hyper.validate()?;
        if self.l_grid.is_empty() {
            return invalid("l_grid must not be empty");
        }
        if self.l_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("l_grid must be strictly increasing");
        }
        if self.l_grid[0] < 2 {
            return invalid("every L must be at least 2");
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.methods.is_empty() {
            return invalid("methods must not be empty");
        }
        for (i, m) in self.methods.iter().enumerate() {
            if *m == Method::Exhaustive {
                return invalid("exhaustive search is not an experiment method");
            }
            if self.methods[..i].contains(m) {
                return invalid(format!("method {m} listed twice"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn config_hash(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Linear NMSE of the estimated autocorrelation matrix.
    Nmse,
    /// Average received SNR on the true channel: mean taken in linear scale,
    /// reported in dB.
    SnrDb,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Nmse => "nmse",
            Metric::SnrDb => "snr_db",
        }
    }
}

/// One `(L, method, metric)` aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub l: usize,
    pub method: Method,
    pub metric: Metric,
    /// `None` when every trial in the cell was flagged.
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    /// Number of aggregated values.
    pub trials: usize,
    /// Per-trial values in trial order, linear scale; `None` for flagged trials.
    pub samples: Vec<Option<f64>>,
}

/// A trial whose method failed in a recoverable way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub l: usize,
    pub method: Method,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub timestamp_unix: u64,
    pub trials: usize,
    pub pairing: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub records: Vec<Record>,
    pub flags: Vec<Flag>,
}

impl ExperimentReport {
    pub fn record(&self, l: usize, method: Method, metric: Metric) -> Option<&Record> {
        self.records.iter().find(|r| r.l == l && r.method == method && r.metric == metric)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// CSV with columns `L,method,metric,mean,stderr,trials`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["L", "method", "metric", "mean", "stderr", "trials"])?;
        let opt = |x: Option<f64>| x.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.l.to_string(),
                r.method.as_str().to_string(),
                r.metric.as_str().to_string(),
                opt(r.mean),
                opt(r.stderr),
                r.trials.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    fn file_name(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Json => "report.json",
        }
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes `report.csv` or `report.json` into `dir` (created if missing) and
/// returns the path.
pub fn emit_report(report: &ExperimentReport, dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let bytes = match format {
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            buf
        }
        ReportFormat::Json => report.to_json()?.into_bytes(),
    };
    let path = dir.join(format.file_name());
    write_atomic(&path, &bytes)?;
    Ok(path)
}

/// Outcome of one method in one trial at one `L`.
#[derive(Debug, Clone, PartialEq)]
struct CellResult {
    nmse: Option<f64>,
    snr: f64,
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::TrainingDiverged { .. } | Error::InsufficientData { .. })
}

struct Trial<'a> {
    spec: &'a ExperimentSpec,
    seed: u64,
    index: u64,
    truth: CMatrix,
}

impl Trial<'_> {
    fn design(&self, r: &CMatrix, method: Method) -> Result<ReflectionVector> {
        // the same design stream for every call keeps method comparisons paired
        let mut rng = substream(self.seed, &[self.index, TAG_DESIGN]);
        Ok(design_reflection(r, self.spec.base.alphabet(), &self.spec.design, method, &mut rng)?.reflection)
    }

    fn run_method(&self, method: Method, l_index: u64, dataset: &MeasurementDataset) -> Result<CellResult> {
        let (reflection, nmse_value) = match method {
            Method::Proposed | Method::RankOne => {
                let k = if method == Method::Proposed { self.spec.base.max_taps() } else { 1 };
                let mut rng = substream(self.seed, &[self.index, TAG_TRAIN, l_index]);
                let estimate = train(dataset, k, &self.spec.hyper, &mut rng)?.reconstruct();
                let e = nmse(&estimate, &self.truth)?;
                (self.design(&estimate, method)?, Some(e))
            }
            Method::Csm => (csm_select(dataset)?, None),
            Method::Rms => (rms_select(dataset)?, None),
            Method::UpperBound => (self.design(&self.truth, method)?, None),
            Method::Exhaustive => return invalid("exhaustive search is not an experiment method"),
        };
        let snr = evaluate_snr(&self.truth, reflection.extended(), self.spec.base.noise_power)?;
        Ok(CellResult { nmse: nmse_value, snr })
    }
}

type TrialOutcome = Vec<Vec<std::result::Result<CellResult, String>>>;

fn run_trial(spec: &ExperimentSpec, index: u64) -> Result<TrialOutcome> {
    let seed = spec.base.seed;
    let realization = generate_realization(&spec.base, &mut substream(seed, &[index, TAG_CHANNEL]))?;
    let trial = Trial { spec, seed, index, truth: realization.autocorr.clone() };
    let mut out = Vec::with_capacity(spec.l_grid.len());
    for (li, &l) in spec.l_grid.iter().enumerate() {
        let mut rng = substream(seed, &[index, TAG_DATASET]);
        let dataset = build_dataset_for(&realization, &spec.base, l, spec.hyper.split_ratio, &mut rng)?;
        let mut row = Vec::with_capacity(spec.methods.len());
        for &method in &spec.methods {
            match trial.run_method(method, li as u64, &dataset) {
                Ok(cell) => row.push(Ok(cell)),
                Err(e) if recoverable(&e) => row.push(Err(e.to_string())),
                Err(e) => return Err(e),
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Sample mean and standard error of the mean (zero for a single sample).
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

fn summarize(l: usize, method: Method, metric: Metric, samples: Vec<Option<f64>>) -> Record {
    let values: Vec<f64> = samples.iter().flatten().copied().collect();
    let stats = mean_stderr(&values);
    let (mean, stderr) = match (metric, stats) {
        (_, None) => (None, None),
        (Metric::Nmse, Some((m, s))) => (Some(m), Some(s)),
        // delta method: d(10 log10 x) = 10 / (x ln 10) dx
        (Metric::SnrDb, Some((m, s))) => (Some(linear_to_db(m)), Some(10.0 * s / (m * std::f64::consts::LN_10))),
    };
    Record { l, method, metric, mean, stderr, trials: values.len(), samples }
}

/// Runs every trial (in parallel on the current rayon pool) and aggregates
/// in trial order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let outcomes = (0..spec.trials as u64).into_par_iter().map(|t| run_trial(spec, t)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut flags = Vec::new();
    for (li, &l) in spec.l_grid.iter().enumerate() {
        for (mi, &method) in spec.methods.iter().enumerate() {
            let cells: Vec<_> = outcomes.iter().map(|o| &o[li][mi]).collect();
            for (trial, cell) in cells.iter().enumerate() {
                if let Err(error) = cell {
                    flags.push(Flag { l, method, trial, error: error.clone() });
                }
            }
            if method.estimates_channel() {
                let samples = cells.iter().map(|c| c.as_ref().ok().and_then(|c| c.nmse)).collect();
                records.push(summarize(l, method, Metric::Nmse, samples));
            }
            let samples = cells.iter().map(|c| c.as_ref().ok().map(|c| c.snr)).collect();
            records.push(summarize(l, method, Metric::SnrDb, samples));
        }
    }

    let mut notes = Vec::new();
    if spec.base.phase_bits == 1 {
        notes.push(
            "1-bit probe phases are real, so imaginary parts of R are not excited by the measurements".to_string(),
        );
    }
    let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let provenance = Provenance {
        config_hash: spec.config_hash()?,
        seed: spec.base.seed,
        timestamp_unix,
        trials: spec.trials,
        pairing: PAIRING.to_string(),
        notes,
    };
    Ok(ExperimentReport { provenance, records, flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        let base = SystemConfig {
            n_subcarriers: 16,
            n_rs_subcarriers: 8,
            n_rs_symbols: 4,
            taps_direct: 2,
            taps_bs_irs: 2,
            taps_irs_user: 2,
            seed: 11,
            ..SystemConfig::default().with_irs_shape(2, 2)
        };
        ExperimentSpec {
            base,
            l_grid: vec![40],
            methods: vec![Method::Rms],
            trials: 2,
            hyper: TrainingHyper { epochs: 40, ..TrainingHyper::default() },
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn single_cell_bookkeeping() {
        let report = run_experiment(&tiny_spec()).unwrap();
        assert_eq!(report.records.len(), 1);
        let r = &report.records[0];
        assert_eq!((r.l, r.method, r.metric, r.trials), (40, Method::Rms, Metric::SnrDb, 2));
        assert_eq!(r.samples.len(), 2);
        assert!(r.stderr.unwrap() >= 0.0);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("L,method,metric,mean,stderr,trials\n40,rms,snr_db,"));
    }

    #[test]
    fn estimation_methods_report_two_metrics() {
        let spec = ExperimentSpec { methods: vec![Method::Proposed], ..tiny_spec() };
        let report = run_experiment(&spec).unwrap();
        let metrics: Vec<_> = report.records.iter().map(|r| r.metric).collect();
        assert_eq!(metrics, [Metric::Nmse, Metric::SnrDb]);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn all_methods_are_paired_and_ordered() {
        let spec = ExperimentSpec {
            l_grid: vec![30, 60],
            trials: 3,
            methods: ExperimentSpec::default().methods,
            ..tiny_spec()
        };
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.records.len(), 2 * 7);
        for r in &report.records {
            assert_eq!(r.trials + report.flags.iter().filter(|f| f.l == r.l && f.method == r.method).count(), 3);
        }
        // the upper bound does not depend on L
        let a = report.record(30, Method::UpperBound, Metric::SnrDb).unwrap();
        let b = report.record(60, Method::UpperBound, Metric::SnrDb).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(report.records.iter().flat_map(|r| r.samples.iter().flatten()).all(|x| x.is_finite() && *x > 0.0));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = ExperimentSpec { methods: vec![Method::Proposed, Method::Csm], trials: 3, ..tiny_spec() };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let report = pool.install(|| run_experiment(&spec)).unwrap();
            let mut csv = Vec::new();
            report.write_csv(&mut csv).unwrap();
            csv
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(1));
    }

    #[test]
    fn flags_recoverable_failures() {
        // two measurements cannot cover every phase of every element
        let spec = ExperimentSpec { l_grid: vec![2], methods: vec![Method::Csm, Method::Rms], ..tiny_spec() };
        let report = run_experiment(&spec).unwrap();
        let csm = report.record(2, Method::Csm, Metric::SnrDb).unwrap();
        assert_eq!(csm.trials, 0);
        assert_eq!(csm.mean, None);
        assert_eq!(report.flags.len(), 2);
        assert!(report.flags[0].error.starts_with("insufficient data"));
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains("2,csm,snr_db,,,0\n"));
    }

    #[test]
    fn json_round_trip_is_parse_equal() {
        let spec = ExperimentSpec { methods: vec![Method::Proposed, Method::Rms], ..tiny_spec() };
        let report = run_experiment(&spec).unwrap();
        assert_eq!(ExperimentReport::from_json(&report.to_json().unwrap()).unwrap(), report);
    }

    #[test]
    fn emit_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&tiny_spec()).unwrap();
        let csv_path = emit_report(&report, &dir.path().join("out"), ReportFormat::Csv).unwrap();
        let json_path = emit_report(&report, &dir.path().join("out"), ReportFormat::Json).unwrap();
        assert_eq!(fs::read_to_string(csv_path).unwrap().lines().count(), 2);
        let back = ExperimentReport::from_json(&fs::read_to_string(json_path).unwrap()).unwrap();
        assert_eq!(back, report);
        let leftovers = fs::read_dir(dir.path().join("out")).unwrap().count();
        assert_eq!(leftovers, 2);
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        assert!(matches!(emit_report(&report, &blocker.join("sub"), ReportFormat::Csv), Err(Error::Io(_))));
    }

    #[test]
    fn spec_validation() {
        let ok = tiny_spec();
        assert!(ok.validate().is_ok());
        let bad = [
            ExperimentSpec { l_grid: vec![], ..ok.clone() },
            ExperimentSpec { l_grid: vec![50, 50], ..ok.clone() },
            ExperimentSpec { l_grid: vec![60, 50], ..ok.clone() },
            ExperimentSpec { trials: 0, ..ok.clone() },
            ExperimentSpec { methods: vec![], ..ok.clone() },
            ExperimentSpec { methods: vec![Method::Rms, Method::Rms], ..ok.clone() },
            ExperimentSpec { methods: vec![Method::Exhaustive], ..ok.clone() },
        ];
        for spec in bad {
            assert!(matches!(run_experiment(&spec), Err(Error::InvalidArgument(_))), "{spec:?}");
        }
    }

    #[test]
    fn spec_json_uses_defaults_and_physical_units() {
        let spec = ExperimentSpec::from_json(
            r#"{"base": {"noise_power_dbm": -80.0, "seed": 3}, "l_grid": [100], "methods": ["rms"], "trials": 2}"#,
        )
        .unwrap();
        assert_eq!(spec.trials, 2);
        assert_eq!(spec.base.seed, 3);
        assert!((spec.base.noise_power - 1e-11).abs() < 1e-24);
        assert_eq!(spec.hyper, TrainingHyper::default());
        assert!(ExperimentSpec::from_json(r#"{"bogus": 1}"#).is_err());
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(ExperimentSpec::from_json(&text).unwrap(), spec);
        let mut other = spec.clone();
        other.trials = 3;
        assert_ne!(spec.config_hash().unwrap(), other.config_hash().unwrap());
        assert_eq!(spec.config_hash().unwrap().len(), 64);
    }

    #[test]
    fn snr_summary_uses_linear_mean() {
        let r = summarize(1, Method::Rms, Metric::SnrDb, vec![Some(10.0), Some(1000.0)]);
        assert!((r.mean.unwrap() - linear_to_db(505.0)).abs() < 1e-12);
        let se = (((10.0f64 - 505.0).powi(2) * 2.0) / 2.0).sqrt();
        assert!((r.stderr.unwrap() - 10.0 * se / (505.0 * std::f64::consts::LN_10)).abs() < 1e-12);
        assert_eq!(mean_stderr(&[4.0]), Some((4.0, 0.0)));
        assert_eq!(mean_stderr(&[]), None);
    }
}
