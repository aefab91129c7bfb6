use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::analysis::{
    verify_outcome, verify_run, VerificationReport, VerifyParams, BOUND_BAD_MEN, BOUND_BLOCKING,
    BOUND_GOOD_MEN, BOUND_NON_EPS,
};
use crate::engine::MessageRecord;
use crate::maximal::MatchingSubroutineSpec;
use crate::model::PreferenceProfile;
use crate::protocol::{run_algorithm, Algorithm, ProtocolError, RunConfig};

use super::generate::{generate, Family, GeneratorSpec};
use super::io::{read_instance, IoError};

/// Verification threshold used for Gale-Shapley, which has no `eps` of its own.
pub const DEFAULT_VERIFY_EPS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
}

mod text {
    use super::*;

    pub fn serialize<T: fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: fmt::Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

mod text_opt {
    use super::*;

    pub fn serialize<T: fmt::Display, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.collect_str(v),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<Option<T>, D::Error>
    where
        T: FromStr,
        T::Err: fmt::Display,
        D: Deserializer<'de>,
    {
        Option::<String>::deserialize(d)?
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    Generated {
        #[serde(with = "text")]
        family: Family,
        n: usize,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(with = "text")]
    pub algorithm: Algorithm,
    pub instance: InstanceSource,
    /// Verification threshold when the algorithm has no `eps`.
    #[serde(default)]
    pub eps: Option<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub round_cap: Option<u64>,
    #[serde(default, with = "text_opt")]
    pub mm: Option<MatchingSubroutineSpec>,
    #[serde(default)]
    pub payload_factor: Option<u32>,
    #[serde(default)]
    pub strict_invariants: Option<bool>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub plot_data: Option<PathBuf>,
    #[serde(default)]
    pub message_log: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, instance: InstanceSource, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            algorithm,
            instance,
            eps: None,
            seeds,
            round_cap: None,
            mm: None,
            payload_factor: None,
            strict_invariants: None,
            output: None,
            plot_data: None,
            message_log: None,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| IoError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.seeds.is_empty() {
            return bad("no seeds given".into());
        }
        if let Some(eps) = self.eps {
            if !(eps > 0.0 && eps <= 1.0) {
                return bad(format!("eps must lie in (0, 1], got {eps}"));
            }
        }
        if let Some(mm) = &self.mm {
            mm.validate()
                .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        }
        if self.payload_factor == Some(0) {
            return bad("payload factor must be at least 1".into());
        }
        if let InstanceSource::Generated { n: 0, .. } = self.instance {
            return bad("n must be at least 1".into());
        }
        Ok(())
    }

    /// The run is deterministic, so every guarantee must hold on every seed.
    pub fn is_deterministic(&self) -> bool {
        !self.algorithm.is_randomized() && !self.mm.is_some_and(|m| m.is_randomized())
    }

    fn verify_eps(&self) -> f64 {
        self.algorithm
            .eps()
            .or(self.eps)
            .unwrap_or(DEFAULT_VERIFY_EPS)
    }
}

/// One CSV row; field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub algorithm: String,
    pub n: usize,
    pub edges: Option<usize>,
    pub eps: f64,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub rounds: Option<u64>,
    pub messages: Option<u64>,
    pub matching_size: Option<usize>,
    pub blocking_pairs: Option<usize>,
    pub two_over_k_blocking: Option<usize>,
    pub good_men: Option<usize>,
    pub bad_men: Option<usize>,
    pub thm41_pass: Option<bool>,
    pub lemma42_pass: Option<bool>,
    pub lemma43_pass: Option<bool>,
    pub lemma44_pass: Option<bool>,
    pub status: String,
}

pub const CSV_COLUMNS: [&str; 19] = [
    "algorithm",
    "n",
    "edges",
    "eps",
    "delta",
    "alpha",
    "seed",
    "rounds",
    "messages",
    "matching_size",
    "blocking_pairs",
    "two_over_k_blocking",
    "good_men",
    "bad_men",
    "thm41_pass",
    "lemma42_pass",
    "lemma43_pass",
    "lemma44_pass",
    "status",
];

pub const STATUS_OK: &str = "ok";
pub const STATUS_ROUND_CAP: &str = "round_cap_exceeded";

impl Row {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    fn guarantees_hold(&self) -> bool {
        [
            self.thm41_pass,
            self.lemma42_pass,
            self.lemma43_pass,
            self.lemma44_pass,
        ]
        .iter()
        .all(|p| *p != Some(false))
    }
}

#[derive(Clone, Debug)]
pub struct SeedResult {
    pub row: Row,
    pub report: Option<VerificationReport>,
    pub message_log: Option<Vec<MessageRecord>>,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub results: Vec<SeedResult>,
    deterministic: Vec<bool>,
}

impl ExperimentOutput {
    pub fn rows(&self) -> impl Iterator<Item = &Row> + '_ {
        self.results.iter().map(|r| &r.row)
    }

    pub fn extend(&mut self, other: ExperimentOutput) {
        self.results.extend(other.results);
        self.deterministic.extend(other.deterministic);
    }

    /// Rows whose run failed, or that broke a guarantee of a deterministic run.
    pub fn failures(&self) -> usize {
        self.results
            .iter()
            .zip(&self.deterministic)
            .filter(|(r, &det)| {
                !r.row.is_ok()
                    || (det && (!r.row.guarantees_hold()
                        || r.report.as_ref().is_some_and(|rep| !rep.all_pass())))
            })
            .count()
    }
}

fn base_row(config: &ExperimentConfig, n: usize, seed: u64) -> Row {
    Row {
        algorithm: config.algorithm.to_string(),
        n,
        edges: None,
        eps: config.verify_eps(),
        delta: config.algorithm.delta(),
        alpha: config.algorithm.alpha(),
        seed,
        rounds: None,
        messages: None,
        matching_size: None,
        blocking_pairs: None,
        two_over_k_blocking: None,
        good_men: None,
        bad_men: None,
        thm41_pass: None,
        lemma42_pass: None,
        lemma43_pass: None,
        lemma44_pass: None,
        status: STATUS_OK.to_string(),
    }
}

fn run_seed(config: &ExperimentConfig, loaded: Option<&PreferenceProfile>, seed: u64) -> SeedResult {
    let generated;
    let (n, profile) = match (&config.instance, loaded) {
        (_, Some(p)) => (p.n(), p),
        (InstanceSource::Generated { family, n }, None) => {
            match generate(&GeneratorSpec::new(*family, *n, seed)) {
                Ok(p) => {
                    generated = p;
                    (*n, &generated)
                }
                Err(e) => {
                    let mut row = base_row(config, *n, seed);
                    row.status = format!("generate_error: {e}");
                    return SeedResult {
                        row,
                        report: None,
                        message_log: None,
                    };
                }
            }
        }
        (InstanceSource::File { .. }, None) => unreachable!("file instances are loaded up front"),
    };
    let mut row = base_row(config, n, seed);
    row.edges = Some(profile.edge_count());
    let run_config = RunConfig {
        seed,
        round_cap: config.round_cap,
        mm_override: config.mm,
        strict_invariants: config.strict_invariants,
        log_messages: config.message_log.is_some(),
        payload_factor: config
            .payload_factor
            .unwrap_or(RunConfig::default().payload_factor),
        ..RunConfig::default()
    };
    match run_algorithm(profile, &config.algorithm, &run_config) {
        Ok(mut outcome) => {
            row.rounds = Some(outcome.trace.rounds);
            row.messages = Some(outcome.trace.messages_sent);
            row.matching_size = Some(outcome.matching.len());
            let report = match verify_outcome(profile, &outcome, row.eps) {
                Ok(r) => r,
                Err(e) => {
                    row.status = format!("error: {e}");
                    return SeedResult {
                        row,
                        report: None,
                        message_log: outcome.message_log.take(),
                    };
                }
            };
            fill_report(&mut row, &report, true);
            SeedResult {
                row,
                report: Some(report),
                message_log: outcome.message_log.take(),
            }
        }
        Err(ProtocolError::RoundCapExceeded(partial)) => {
            row.status = STATUS_ROUND_CAP.to_string();
            row.rounds = Some(partial.trace.rounds);
            row.messages = Some(partial.trace.messages_sent);
            row.matching_size = Some(partial.matching.len());
            let params = VerifyParams::for_eps(row.eps);
            let report = verify_run(profile, &partial.matching, &params, None, &[]).ok();
            if let Some(report) = &report {
                fill_report(&mut row, report, false);
            }
            SeedResult {
                row,
                report,
                message_log: None,
            }
        }
        Err(e) => {
            row.status = format!("error: {e}");
            SeedResult {
                row,
                report: None,
                message_log: None,
            }
        }
    }
}

fn fill_report(row: &mut Row, report: &VerificationReport, with_passes: bool) {
    row.blocking_pairs = Some(report.blocking_pairs);
    row.two_over_k_blocking = Some(report.eps_blocking_pairs);
    row.good_men = Some(report.good_men.len());
    row.bad_men = Some(report.bad_men.len());
    if with_passes {
        row.thm41_pass = report.pass(BOUND_BLOCKING);
        row.lemma42_pass = report.pass(BOUND_GOOD_MEN);
        row.lemma43_pass = report.pass(BOUND_NON_EPS);
        row.lemma44_pass = report.pass(BOUND_BAD_MEN);
    }
}

/// Runs every seed (in parallel) and writes any configured outputs.
/// Rows come back in seed order. Per-seed failures are recorded in the row.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let output = collect(config)?;
    if let Some(path) = &config.output {
        write_csv_file(path, output.rows())?;
    }
    if let Some(path) = &config.plot_data {
        let file = create(path)?;
        write_plot_data(file, output.rows())?;
    }
    if let Some(path) = &config.message_log {
        let mut file = BufWriter::new(create(path)?);
        write_message_log(&mut file, &output.results).map_err(|source| ExperimentError::Output {
            path: path.clone(),
            source,
        })?;
        file.flush().map_err(|source| ExperimentError::Output {
            path: path.clone(),
            source,
        })?;
    }
    Ok(output)
}

fn collect(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let loaded = match &config.instance {
        InstanceSource::File { path } => Some(read_instance(path)?),
        InstanceSource::Generated { .. } => None,
    };
    let results: Vec<SeedResult> = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, loaded.as_ref(), seed))
        .collect();
    let deterministic = vec![config.is_deterministic(); results.len()];
    Ok(ExperimentOutput {
        results,
        deterministic,
    })
}

/// Scaling sweep: the same algorithm over several sizes of one family.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub algorithm: Algorithm,
    pub family: Family,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub eps: Option<f64>,
    pub mm: Option<MatchingSubroutineSpec>,
    pub round_cap: Option<u64>,
}

pub fn run_bench(bench: &BenchConfig) -> Result<ExperimentOutput, ExperimentError> {
    let mut out = ExperimentOutput::default();
    for &n in &bench.sizes {
        let mut config = ExperimentConfig::new(
            bench.algorithm,
            InstanceSource::Generated {
                family: bench.family,
                n,
            },
            bench.seeds.clone(),
        );
        config.eps = bench.eps;
        config.mm = bench.mm;
        config.round_cap = bench.round_cap;
        out.extend(collect(&config)?);
    }
    Ok(out)
}

fn create(path: &Path) -> Result<File, ExperimentError> {
    File::create(path).map_err(|source| ExperimentError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_csv<'a, W: Write>(
    writer: W,
    rows: impl IntoIterator<Item = &'a Row>,
) -> Result<(), ExperimentError> {
    // Header written by hand so that an empty batch still has its columns.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_csv_file<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a Row>,
) -> Result<(), ExperimentError> {
    write_csv(create(path)?, rows)
}

/// Long format: one `(algorithm, n, seed, metric, value)` line per number.
pub fn write_plot_data<'a, W: Write>(
    writer: W,
    rows: impl IntoIterator<Item = &'a Row>,
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["algorithm", "n", "seed", "metric", "value"])?;
    for row in rows {
        let metrics: [(&str, Option<f64>); 8] = [
            ("rounds", row.rounds.map(|v| v as f64)),
            ("messages", row.messages.map(|v| v as f64)),
            ("matching_size", row.matching_size.map(|v| v as f64)),
            ("blocking_pairs", row.blocking_pairs.map(|v| v as f64)),
            ("two_over_k_blocking", row.two_over_k_blocking.map(|v| v as f64)),
            ("good_men", row.good_men.map(|v| v as f64)),
            ("bad_men", row.bad_men.map(|v| v as f64)),
            (
                "blocking_fraction",
                row.blocking_pairs
                    .zip(row.edges)
                    .filter(|&(_, e)| e > 0)
                    .map(|(b, e)| b as f64 / e as f64),
            ),
        ];
        let (n, seed) = (row.n.to_string(), row.seed.to_string());
        for (metric, value) in metrics {
            if let Some(v) = value {
                w.write_record([row.algorithm.as_str(), &n, &seed, metric, &v.to_string()])?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct LoggedMessage<'a> {
    seed: u64,
    #[serde(flatten)]
    record: &'a MessageRecord,
}

/// One JSON object per message, tagged with its seed.
pub fn write_message_log<W: Write>(mut writer: W, results: &[SeedResult]) -> std::io::Result<()> {
    for r in results {
        for record in r.message_log.iter().flatten() {
            let line = LoggedMessage {
                seed: r.row.seed,
                record,
            };
            serde_json::to_writer(&mut writer, &line)?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}
