//! Instance generation, file formats and batch experiments.

mod experiment;
mod generate;
mod io;

pub use experiment::{
    run_bench, run_experiment, write_csv, write_csv_file, write_message_log, write_plot_data,
    BenchConfig, ExperimentConfig, ExperimentError, ExperimentOutput, InstanceSource, Row,
    SeedResult, CSV_COLUMNS, DEFAULT_VERIFY_EPS, STATUS_OK, STATUS_ROUND_CAP,
};
pub use generate::{generate, Family, GenerateError, GeneratorSpec, MAX_REGENERATION_ATTEMPTS};
pub use io::{
    instance_to_string, matching_to_string, parse_instance, read_instance, read_matching,
    write_instance, write_matching, InstanceFile, IoError, MatchingFile,
};

use crate::protocol::Algorithm;

/// Seeds from `a..b` (half-open), `a..=b`, a comma list, or a single value.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| format!("bad seed {t:?} in {s:?}"))
    };
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("seed range {s:?} is empty"));
    }
    Ok(seeds)
}

/// Builds an algorithm from a descriptor and separate parameter flags.
/// A bare name (`asm`) takes its parameters from the flags; a full
/// descriptor (`asm:0.5`) must agree with any flag that is also given.
pub fn resolve_algorithm(
    desc: &str,
    eps: Option<f64>,
    delta: Option<f64>,
    alpha: Option<f64>,
) -> Result<Algorithm, String> {
    let desc = desc.trim();
    if desc.contains(':') || desc == "gs" {
        let alg: Algorithm = desc.parse().map_err(|e| format!("{e}"))?;
        let clash = |name: &str, flag: Option<f64>, own: Option<f64>| match (flag, own) {
            (Some(f), Some(o)) if f != o => Err(format!(
                "--{name} {f} contradicts the descriptor {desc:?}"
            )),
            _ => Ok(()),
        };
        clash("eps", eps, alg.eps())?;
        clash("delta", delta, alg.delta())?;
        clash("alpha", alpha, alg.alpha())?;
        return Ok(alg);
    }
    let need = |name: &str, v: Option<f64>| v.ok_or_else(|| format!("{desc} needs --{name}"));
    match desc {
        "asm" => Ok(Algorithm::Asm {
            eps: need("eps", eps)?,
        }),
        "randasm" => Ok(Algorithm::RandAsm {
            eps: need("eps", eps)?,
            delta: need("delta", delta)?,
        }),
        "aregasm" => Ok(Algorithm::AlmostRegularAsm {
            eps: need("eps", eps)?,
            delta: need("delta", delta)?,
            alpha: need("alpha", alpha)?,
        }),
        _ => Err(format!(
            "unknown algorithm {desc:?}; expected gs, asm, randasm or aregasm"
        )),
    }
}
