use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use riskbo::lacing::LvMode;
use riskbo::vucb::AcqMode;
use riskbo_cli::spec::BetaChoice;
use riskbo_cli::{plotdata_dir, run_experiment, summarize_dir, Algorithm, ExperimentSpec, Overrides};

#[derive(Parser)]
#[command(name = "riskbo", version, about = "Value-at-risk Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm and seed of an experiment spec.
    Run(Box<RunArgs>),
    /// Rebuild summary.csv from the trace files in a run directory.
    Summarize { dir: PathBuf },
    /// Write plotdata.csv from a run directory's summary.csv.
    Plotdata { dir: PathBuf },
}

fn parse_acq(s: &str) -> Result<AcqMode, String> {
    match s {
        "vucb" => Ok(AcqMode::Vucb),
        "stableopt" => Ok(AcqMode::StableOpt),
        "random" => Ok(AcqMode::Random),
        _ => Err(format!("expected vucb, stableopt or random, got `{s}`")),
    }
}

fn parse_lv(s: &str) -> Result<LvMode, String> {
    match s {
        "uniform" => Ok(LvMode::Uniform),
        "max-mass" => Ok(LvMode::MaxMass),
        _ => Err(format!("expected uniform or max-mass, got `{s}`")),
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML spec; may be omitted when --problem and --z-mode are given.
    spec: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long = "z-mode")]
    z_mode: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "T")]
    iterations: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// Run a single algorithm: vucb, stableopt or random.
    #[arg(long, value_parser = parse_acq)]
    acq: Option<AcqMode>,
    /// Lacing-value rule with --acq vucb: uniform or max-mass.
    #[arg(long = "lv-mode", value_parser = parse_lv)]
    lv_mode: Option<LvMode>,
    /// practical, theoretical, or a constant.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long = "beta-B")]
    beta_b: Option<f64>,
    #[arg(long = "beta-delta")]
    beta_delta: Option<f64>,
    #[arg(long = "refit-every")]
    refit_every: Option<usize>,
    #[arg(long = "n-init")]
    n_init: Option<usize>,
    #[arg(long = "env-samples")]
    env_samples: Option<usize>,
    #[arg(long = "pinball-iters")]
    pinball_iters: Option<usize>,
    #[arg(long = "pinball-batch")]
    pinball_batch: Option<usize>,
    #[arg(long = "pinball-step")]
    pinball_step: Option<f64>,
    #[arg(long = "lnso-radius")]
    lnso_radius: Option<f64>,
    #[arg(long = "lnso-t-v")]
    lnso_t_v: Option<usize>,
    #[arg(long = "lnso-t-g")]
    lnso_t_g: Option<usize>,
    #[arg(long = "lnso-gamma-x")]
    lnso_gamma_x: Option<f64>,
    #[arg(long = "lnso-gamma-g")]
    lnso_gamma_g: Option<f64>,
    #[arg(long = "lnso-n-z")]
    lnso_n_z: Option<usize>,
    #[arg(long = "lnso-n-x")]
    lnso_n_x: Option<usize>,
    #[arg(long = "lnso-trigger")]
    lnso_trigger: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long = "master-seed")]
    master_seed: Option<u64>,
    /// Output directory; defaults to $RISKBO_OUT/<spec name>.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Overrides> {
        let algorithms = match &self.algorithms {
            Some(names) => Some(names.iter().map(|n| n.parse::<Algorithm>()).collect::<Result<Vec<_>>>()?),
            None => None,
        };
        let beta = self.beta.as_deref().map(str::parse::<BetaChoice>).transpose()?;
        Ok(Overrides {
            alpha: self.alpha,
            iterations: self.iterations,
            repeats: self.repeats,
            algorithms,
            acq: self.acq,
            lv_mode: self.lv_mode,
            beta,
            beta_b: self.beta_b,
            beta_delta: self.beta_delta,
            refit_every: self.refit_every,
            n_init: self.n_init,
            env_samples: self.env_samples,
            pinball_iters: self.pinball_iters,
            pinball_batch: self.pinball_batch,
            pinball_step: self.pinball_step,
            lnso_radius: self.lnso_radius,
            lnso_t_v: self.lnso_t_v,
            lnso_t_g: self.lnso_t_g,
            lnso_gamma_x: self.lnso_gamma_x,
            lnso_gamma_g: self.lnso_gamma_g,
            lnso_n_z: self.lnso_n_z,
            lnso_n_x: self.lnso_n_x,
            lnso_trigger: self.lnso_trigger,
            workers: self.workers,
            master_seed: self.master_seed,
            output: self.out.clone(),
        })
    }

    fn base_spec(&self) -> Result<(ExperimentSpec, String)> {
        let mut text = match &self.spec {
            Some(path) => std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?,
            None => String::new(),
        };
        let mut table: toml::Table = text.parse().map_err(|e| anyhow::anyhow!("invalid spec: {e}"))?;
        if let Some(p) = &self.problem {
            table.insert("problem".into(), p.clone().into());
        }
        if let Some(z) = &self.z_mode {
            table.insert("z_mode".into(), z.clone().into());
        }
        if !table.contains_key("problem") || !table.contains_key("z_mode") {
            bail!("a spec needs `problem` and `z_mode` (from the file or --problem/--z-mode)");
        }
        text = toml::to_string(&table)?;
        let spec = ExperimentSpec::from_toml(&text)?;
        let name = match &self.spec {
            Some(path) => path.file_stem().map_or("experiment".into(), |s| s.to_string_lossy().into_owned()),
            None => format!("{}-{}", spec.problem, spec.z_mode.as_str()),
        };
        Ok((spec, name))
    }
}

fn run(args: RunArgs) -> Result<bool> {
    let (mut spec, name) = args.base_spec()?;
    spec.apply(&args.overrides()?);
    spec.validate()?;
    let dir = spec.output_dir(&name);
    let manifest = run_experiment(&spec, &dir)?;
    let failed = manifest.failures();
    println!("{} runs, {failed} failed; output in {}", manifest.runs.len(), dir.display());
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(*args),
        Command::Summarize { dir } => summarize_dir(&dir).map(|rows| {
            println!("{} summary rows written to {}", rows.len(), dir.join("summary.csv").display());
            true
        }),
        Command::Plotdata { dir } => plotdata_dir(&dir).map(|rows| {
            println!("{} plot rows written to {}", rows.len(), dir.join("plotdata.csv").display());
            true
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
