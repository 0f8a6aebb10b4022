use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use etas_core::load_catalog;
use etas_experiments::config::{parse_incompleteness, parse_seed_event};
use etas_experiments::{
    cmd_bench, cmd_fit, cmd_simulate, cmd_triggering, run_experiment, CliError, ExperimentKind, ParamSource,
    RunConfig,
};
use etas_inference::PosteriorResult;

#[derive(Parser, Debug)]
#[command(name = "etas", version, about = "Temporal ETAS simulation and approximate Bayesian inversion")]
struct Cli {
    /// Flat TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for ensembles.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a catalogue.
    Simulate {
        /// Imposed event as TIME:MAGNITUDE; repeatable.
        #[arg(long = "seed-event")]
        seed_event: Vec<String>,
        /// Also write a degraded copy, e.g. G=3.8,H=1.0.
        #[arg(long)]
        incomplete: Option<String>,
    },
    /// Fit a catalogue.
    Fit {
        /// Catalogue CSV; overrides the configuration.
        #[arg(long)]
        catalogue: Option<PathBuf>,
        #[arg(long = "history-conditioning", value_enum)]
        history_conditioning: Option<Toggle>,
    },
    /// Run one of the robustness studies.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentKind,
    },
    /// Triggering-function ensembles from a posterior or the prior.
    Triggering {
        /// Posterior JSON written by `fit`.
        #[arg(long, required_unless_present = "prior")]
        posterior: Option<PathBuf>,
        /// Sample the configured prior instead.
        #[arg(long)]
        prior: bool,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [4.0, 6.7])]
        magnitudes: Vec<f64>,
        /// Horizon in days.
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
    },
    /// Time fits over catalogues of increasing size.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [250usize, 500, 1000, 2000, 5000])]
        sizes: Vec<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(t) = cli.threads {
        cfg.num_threads = Some(t);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Simulate { seed_event, incomplete } => {
            for s in &seed_event {
                cfg.seed_events.push(parse_seed_event(s)?);
            }
            if let Some(s) = incomplete {
                cfg.incompleteness = Some(parse_incompleteness(&s)?);
            }
            cfg.validate()?;
            let m = cmd_simulate(&cfg)?;
            match m.n_incomplete {
                Some(n) => println!("{} events ({n} after incompleteness) in {}", m.n_events, cfg.output.display()),
                None => println!("{} events in {}", m.n_events, cfg.output.display()),
            }
        }
        Command::Fit {
            catalogue,
            history_conditioning,
        } => {
            if let Some(c) = catalogue {
                cfg.catalogue = Some(c);
            }
            if let Some(t) = history_conditioning {
                cfg.history_conditioning = matches!(t, Toggle::On);
            }
            cfg.validate()?;
            if let Some(path) = &cfg.catalogue {
                let cat = load_catalog(path, &Default::default())?;
                let report = etas_core::validate(&cat, &cfg.domain()?);
                eprintln!(
                    "{} events: {} below M0, {} outside [T1, T2], {} tied times",
                    report.n_events, report.below_m0, report.outside_domain, report.duplicate_times
                );
            }
            let res = cmd_fit(&cfg)?;
            println!(
                "{:?} after {} iterations ({:.2} s); mode {:?}",
                res.status, res.iterations, res.elapsed_seconds, res.mode_etas
            );
        }
        Command::Experiment { name: kind } => {
            let exp = run_experiment(kind, &cfg)?;
            let dir = cfg.output.join(kind.name());
            exp.write(&dir)?;
            let failed = exp.outcomes.iter().filter(|o| o.result.is_err()).count();
            println!("{} runs ({failed} failed) in {}", exp.outcomes.len(), dir.display());
        }
        Command::Triggering {
            posterior,
            prior,
            samples,
            magnitudes,
            horizon,
        } => {
            let source = if prior {
                ParamSource::Prior(cfg.priors)
            } else {
                let path = posterior.expect("required unless --prior");
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let res = PosteriorResult::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                ParamSource::Posterior(Box::new(res))
            };
            let fams = cmd_triggering(&source, samples, cfg.seed, &magnitudes, cfg.m0, horizon, &cfg.output)?;
            println!("{} curve families in {}", fams.len(), cfg.output.display());
        }
        Command::Bench { sizes } => {
            let s = cmd_bench(&cfg, &sizes)?;
            for p in &s.points {
                println!("{:>6} events  {:>8.3} s  {:>4} iterations", p.n_events, p.seconds, p.iterations);
            }
            println!("power-law exponent {:.3}", s.slope);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
