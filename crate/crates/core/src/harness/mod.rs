//! Experiment orchestration: configuration, metric reports, deterministic
//! file output and run manifests.

mod experiments;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FitConfig;

pub use experiments::{
    bootstrap_intervals, run_bias, run_confounding, run_consistency, run_counterexample, run_experiment,
    run_identify2_check, run_uncertainty, BiasRow, Identify2CheckRow, UncertaintyRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Consistency,
    Bias,
    Confounding,
    Uncertainty,
    Counterexample,
    Identify2Check,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Consistency,
        ExperimentKind::Bias,
        ExperimentKind::Confounding,
        ExperimentKind::Uncertainty,
        ExperimentKind::Counterexample,
        ExperimentKind::Identify2Check,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Consistency => "consistency",
            ExperimentKind::Bias => "bias",
            ExperimentKind::Confounding => "confounding",
            ExperimentKind::Uncertainty => "uncertainty",
            ExperimentKind::Counterexample => "counterexample",
            ExperimentKind::Identify2Check => "identify2-check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment kind `{s}`")))
    }
}

/// Columns used for the density ranking in the uncertainty experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KdeColumns {
    Treatments,
    OutcomeParents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub sample_sizes: Vec<usize>,
    pub confounding_levels: Vec<f64>,
    pub replications: usize,
    pub test_points: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub bootstrap_samples: usize,
    pub interval_level: f64,
    pub kde_columns: KdeColumns,
    /// Bernoulli parameters for the counterexample.
    pub probabilities: Vec<f64>,
    pub fit: FitConfig,
}

/// Partial config as read from JSON; unset fields take the kind's defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kind: Option<ExperimentKind>,
    pub sample_sizes: Option<Vec<usize>>,
    pub confounding_levels: Option<Vec<f64>>,
    pub replications: Option<usize>,
    pub test_points: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub bootstrap_samples: Option<usize>,
    pub interval_level: Option<f64>,
    pub kde_columns: Option<KdeColumns>,
    pub probabilities: Option<Vec<f64>>,
    pub fit: Option<FitConfig>,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            sample_sizes: vec![1600],
            confounding_levels: vec![0.65],
            replications: 50,
            test_points: 10_000,
            seed: 0,
            output_dir: None,
            bootstrap_samples: 50,
            interval_level: 0.95,
            kde_columns: KdeColumns::Treatments,
            probabilities: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            fit: FitConfig::default(),
        };
        match kind {
            ExperimentKind::Consistency => Self {
                sample_sizes: vec![100, 400, 1600, 6400, 25600],
                test_points: 100_000,
                ..base
            },
            ExperimentKind::Bias => base,
            ExperimentKind::Confounding => Self {
                confounding_levels: vec![0.1, 0.35, 0.65, 0.8],
                replications: 20,
                ..base
            },
            ExperimentKind::Uncertainty => Self { replications: 1, test_points: 10, ..base },
            ExperimentKind::Counterexample => Self { replications: 1, ..base },
            ExperimentKind::Identify2Check => Self {
                sample_sizes: vec![10_000],
                replications: 10,
                test_points: 25,
                ..base
            },
        }
    }

    /// Fills unset fields from the defaults of `kind`, which is taken from the
    /// file when `kind` is `None`.
    pub fn resolve(file: ConfigFile, kind: Option<ExperimentKind>) -> Result<Self> {
        let kind = match (kind, file.kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::InvalidArgument(format!("config is for `{b}`, not `{a}`")));
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(Error::InvalidArgument("experiment kind not given".into())),
        };
        let d = Self::defaults(kind);
        let c = Self {
            kind,
            sample_sizes: file.sample_sizes.unwrap_or(d.sample_sizes),
            confounding_levels: file.confounding_levels.unwrap_or(d.confounding_levels),
            replications: file.replications.unwrap_or(d.replications),
            test_points: file.test_points.unwrap_or(d.test_points),
            seed: file.seed.unwrap_or(d.seed),
            output_dir: file.output_dir.or(d.output_dir),
            bootstrap_samples: file.bootstrap_samples.unwrap_or(d.bootstrap_samples),
            interval_level: file.interval_level.unwrap_or(d.interval_level),
            kde_columns: file.kde_columns.unwrap_or(d.kde_columns),
            probabilities: file.probabilities.unwrap_or(d.probabilities),
            fit: file.fit.unwrap_or(d.fit),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(s: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        Self::resolve(serde_json::from_str(s)?, kind)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return bad("sample sizes must be a non-empty list of positive integers");
        }
        if self.replications == 0 {
            return bad("replications must be positive");
        }
        if self.test_points == 0 {
            return bad("test point count must be positive");
        }
        if self.confounding_levels.is_empty() || self.confounding_levels.iter().any(|c| !(0.0..1.0).contains(c)) {
            return bad("confounding levels must lie in [0, 1)");
        }
        if self.bootstrap_samples < 2 {
            return bad("bootstrap needs at least 2 resamples");
        }
        if !(self.interval_level > 0.0 && self.interval_level < 1.0) {
            return bad("interval level must lie in (0, 1)");
        }
        if self.probabilities.is_empty() || self.probabilities.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return bad("probabilities must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Mean with a normal-approximation confidence interval over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64], level: f64) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, ci_lower: f64::NAN, ci_upper: f64::NAN, count: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let z = normal_quantile(0.5 + level / 2.0);
        let half = z * sd / (n as f64).sqrt();
        Self { mean, sd, ci_lower: mean - half, ci_upper: mean + half, count: n }
    }

    pub fn se(&self) -> f64 {
        self.sd / (self.count as f64).sqrt()
    }
}

fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

/// One aggregated metric for one condition and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// For example `n=1600` or `c=0.35`.
    pub condition: String,
    pub method: String,
    pub metric: String,
    pub summary: Summary,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: ExperimentKind,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn get(&self, condition: &str, method: &str, metric: &str) -> Option<&Summary> {
        self.rows
            .iter()
            .find(|r| r.condition == condition && r.method == method && r.metric == metric)
            .map(|r| &r.summary)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["condition", "method", "metric", "mean", "sd", "ci_lower", "ci_upper", "replications", "failures"]);
        for r in &self.rows {
            let s = &r.summary;
            t.push(vec![
                r.condition.clone(),
                r.method.clone(),
                r.metric.clone(),
                num(s.mean),
                num(s.sd),
                num(s.ci_lower),
                num(s.ci_upper),
                s.count.to_string(),
                r.failures.to_string(),
            ]);
        }
        t
    }
}

/// Shortest round-trip rendering, the single number format of every output.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// A header row plus string cells, rendered as CSV with `\n` line endings.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

impl OutputFile {
    pub fn new(name: impl Into<String>, contents: impl Into<String>) -> Self {
        Self { name: name.into(), contents: contents.into() }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: MetricReport,
    pub files: Vec<OutputFile>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub bytes: usize,
}

/// Everything needed to reproduce a run. Contains no timestamps or host
/// details so that identical runs give identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value, files: &[OutputFile]) -> Self {
        Self {
            tool: "jointfx".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            files: files.iter().map(|f| ManifestFile { name: f.name.clone(), bytes: f.contents.len() }).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Writes `files` and a manifest into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, manifest: &Manifest, files: &[OutputFile]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(files.len() + 1);
    for f in files {
        let p = dir.join(&f.name);
        std::fs::write(&p, &f.contents)?;
        written.push(p);
    }
    let p = dir.join(MANIFEST_NAME);
    std::fs::write(&p, manifest.to_json()?)?;
    written.push(p);
    Ok(written)
}

/// Compares freshly produced `files` and `manifest` against what is on disk
/// in `dir`. Returns the names that differ or are missing.
pub fn verify_outputs(dir: &Path, manifest: &Manifest, files: &[OutputFile]) -> Result<Vec<String>> {
    let mut expected: Vec<(String, String)> = files.iter().map(|f| (f.name.clone(), f.contents.clone())).collect();
    expected.push((MANIFEST_NAME.to_string(), manifest.to_json()?));
    let mut bad = Vec::new();
    for (name, contents) in expected {
        match std::fs::read(dir.join(&name)) {
            Ok(bytes) if bytes == contents.as_bytes() => {}
            _ => bad.push(name),
        }
    }
    Ok(bad)
}

/// The manifest of an experiment run. The output directory is left out so
/// identical runs into different places produce identical bytes.
pub fn experiment_manifest(config: &ExperimentConfig, files: &[OutputFile]) -> Result<Manifest> {
    let mut value = serde_json::to_value(config)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("output_dir");
    }
    Ok(Manifest::new(&format!("experiment {}", config.kind), config.seed, value, files))
}

/// Runs an experiment and writes its files plus manifest into `dir`.
pub fn run_and_write(config: &ExperimentConfig, dir: &Path) -> Result<ExperimentOutput> {
    let out = run_experiment(config)?;
    write_outputs(dir, &experiment_manifest(config, &out.files)?, &out.files)?;
    Ok(out)
}

/// Re-runs an experiment and diffs against a previous run in `dir`.
pub fn verify_run(config: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let out = run_experiment(config)?;
    verify_outputs(dir, &experiment_manifest(config, &out.files)?, &out.files)
}
