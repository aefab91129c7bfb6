use std::path::PathBuf;
use std::process::ExitCode;

use almost_stable::analysis::{verify_run, VerifyParams, BOUND_BLOCKING};
use almost_stable::maximal::MatchingSubroutineSpec;
use almost_stable::workbench::{
    generate, parse_seeds, read_instance, read_matching, resolve_algorithm, run_bench,
    run_experiment, write_csv, write_instance, BenchConfig, ExperimentConfig, ExperimentOutput,
    Family, GeneratorSpec, InstanceSource,
};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asmatch", version, about = "Almost-stable matching workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a preference instance and write it as JSON.
    Generate {
        /// complete, random:P, bounded:D or aregular:ALPHA,DEGREE
        #[arg(long)]
        family: Family,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run an algorithm over a batch of seeds and write one CSV row per seed.
    Run(RunArgs),
    /// Check a matching against an instance and print the report as JSON.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        matching: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Run one algorithm over several instance sizes.
    Bench {
        #[arg(long)]
        alg: String,
        #[arg(long, default_value = "complete")]
        family: Family,
        /// Comma-separated sizes, e.g. 32,64,128
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[command(flatten)]
        params: Params,
        #[arg(long, default_value = "0..10")]
        seeds: String,
        #[arg(long)]
        mm: Option<MatchingSubroutineSpec>,
        #[arg(long)]
        round_cap: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Params {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; other flags are not allowed alongside it.
    #[arg(long, conflicts_with_all = ["alg", "instance", "family", "n", "seeds"])]
    config: Option<PathBuf>,
    /// gs, asm, randasm, aregasm, or a full descriptor such as asm:0.5
    #[arg(long)]
    alg: Option<String>,
    #[arg(long, conflicts_with = "family")]
    instance: Option<PathBuf>,
    #[arg(long, requires = "n")]
    family: Option<Family>,
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    params: Params,
    #[arg(long)]
    mm: Option<MatchingSubroutineSpec>,
    /// a..b (half-open), a..=b, a comma list, or one seed
    #[arg(long, default_value = "0")]
    seeds: String,
    #[arg(long)]
    round_cap: Option<u64>,
    /// CSV output; stdout when omitted
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    message_log: Option<PathBuf>,
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        if let Some(path) = &self.config {
            let mut config = ExperimentConfig::from_file(path)?;
            config.output = self.output.or(config.output);
            config.message_log = self.message_log.or(config.message_log);
            config.plot_data = self.plot_data.or(config.plot_data);
            config.mm = self.mm.or(config.mm);
            config.round_cap = self.round_cap.or(config.round_cap);
            return Ok(config);
        }
        let alg = self.alg.as_deref().ok_or_else(|| anyhow!("--alg or --config is required"))?;
        let p = &self.params;
        let algorithm = resolve_algorithm(alg, p.eps, p.delta, p.alpha).map_err(|e| anyhow!(e))?;
        let instance = match (self.instance, self.family, self.n) {
            (Some(path), None, _) => InstanceSource::File { path },
            (None, family, Some(n)) => InstanceSource::Generated {
                family: family.unwrap_or(Family::Complete),
                n,
            },
            _ => bail!("give either --instance FILE or --n N (with an optional --family)"),
        };
        let seeds = parse_seeds(&self.seeds).map_err(|e| anyhow!(e))?;
        let mut config = ExperimentConfig::new(algorithm, instance, seeds);
        config.eps = p.eps;
        config.mm = self.mm;
        config.round_cap = self.round_cap;
        config.message_log = self.message_log;
        config.plot_data = self.plot_data;
        config.output = self.output;
        Ok(config)
    }
}

fn report(out: &ExperimentOutput, to_stdout: bool) -> Result<ExitCode> {
    if to_stdout {
        write_csv(std::io::stdout().lock(), out.rows())?;
    }
    let failures = out.failures();
    if failures > 0 {
        eprintln!("{failures} seed(s) failed a run or a deterministic guarantee");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate {
            family,
            n,
            seed,
            output,
        } => {
            let profile = generate(&GeneratorSpec::new(family, n, seed))?;
            write_instance(&output, &profile)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => {
            let config = args.into_config()?;
            let out = run_experiment(&config)?;
            report(&out, config.output.is_none())
        }
        Command::Verify {
            instance,
            matching,
            eps,
        } => {
            if !(eps > 0.0 && eps <= 1.0) {
                bail!("--eps must lie in (0, 1], got {eps}");
            }
            let profile = read_instance(&instance)?;
            let matching = read_matching(&matching, &profile)?;
            let report = verify_run(&profile, &matching, &VerifyParams::for_eps(eps), None, &[])?;
            println!("{}", serde_json::to_string_pretty(&report).context("serializing report")?);
            Ok(if report.pass(BOUND_BLOCKING) == Some(true) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Bench {
            alg,
            family,
            n_list,
            params,
            seeds,
            mm,
            round_cap,
            output,
        } => {
            let bench = BenchConfig {
                algorithm: resolve_algorithm(&alg, params.eps, params.delta, params.alpha)
                    .map_err(|e| anyhow!(e))?,
                family,
                sizes: n_list,
                seeds: parse_seeds(&seeds).map_err(|e| anyhow!(e))?,
                eps: params.eps,
                mm,
                round_cap,
            };
            let out = run_bench(&bench)?;
            if let Some(path) = &output {
                almost_stable::workbench::write_csv_file(path, out.rows())?;
            }
            report(&out, output.is_none())
        }
    }
}
