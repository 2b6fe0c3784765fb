use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use nep::diagnostics::run_checks;
use nep::game::solve_ne;
use nep::harness::{build_coupling, run_experiment, ExperimentConfig, REFERENCE_TOL};
use nep::io::load_game;
use nep::network::CouplingMode;
use nep::solvers::{augmented_gradient_run, pppa_run, ExtendedState, SolverConfig};
use nep::tuning::TuningReport;

#[derive(Parser)]
#[command(
    name = "nep",
    version,
    about = "Distributed Nash equilibrium seeking on quadratic games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    DoublyStochastic,
    DegreeVariant,
}

impl From<Mode> for CouplingMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::DoublyStochastic => CouplingMode::DoublyStochastic,
            Mode::DegreeVariant => CouplingMode::DegreeVariant,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Pppa,
    Agp,
}

#[derive(clap::Args)]
struct Problem {
    /// Game file or `connectivity:<N>:<seed>[:box]`.
    #[arg(long)]
    game: String,
    /// Graph file or `er:<N>:<p>:<seed>`, `path:<N>`, `cycle:<N>`, `complete:<N>`, `star:<N>`.
    #[arg(long)]
    graph: String,
    /// Coupling; defaults to Metropolis (or file) weights.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Print step bounds and guaranteed rates.
    Rates {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Run one solver and write its trace as CSV.
    Run {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, value_enum, default_value = "pppa")]
        algo: Algo,
        /// Step `α`, or `auto` for 0.99 of the bound.
        #[arg(long, default_value = "auto")]
        alpha: String,
        /// AGP step `γ`; defaults to the theory step.
        #[arg(long)]
        gamma: Option<f64>,
        /// Allow `α` at or above the bound.
        #[arg(long)]
        force_alpha: bool,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// Early-stop distance; 0 runs all iterations.
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
        /// Random initial estimates from this seed; zero initialization otherwise.
        #[arg(long)]
        seed: Option<u64>,
        /// Solve local problems on the rayon pool.
        #[arg(long)]
        parallel: bool,
        /// Trace file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the monotonicity properties behind the convergence guarantee.
    Check {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Run an experiment described by a JSON config.
    RunExp {
        #[arg(long)]
        config: PathBuf,
        /// Run the configured algorithms concurrently.
        #[arg(long)]
        parallel: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Rates {
            problem,
            alpha,
            json,
        } => {
            let game = load_game(&problem.game)?;
            let coupling = build_coupling(&problem.graph, problem.mode.map(Into::into))?;
            let report = TuningReport::new(&game, &coupling, alpha)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{report}");
            }
        }
        Command::Run {
            problem,
            algo,
            alpha,
            gamma,
            force_alpha,
            iters,
            tol,
            seed,
            parallel,
            out,
        } => {
            let game = load_game(&problem.game)?;
            let coupling = build_coupling(&problem.graph, problem.mode.map(Into::into))?;
            let auto = TuningReport::new(&game, &coupling, None)?;
            let alpha = if alpha == "auto" {
                auto.alpha
            } else {
                alpha
                    .parse::<f64>()
                    .with_context(|| format!("invalid --alpha `{alpha}`"))?
            };
            if alpha >= auto.alpha_max && !force_alpha {
                bail!(
                    "alpha {alpha:e} is not below the bound {:e}; pass --force-alpha to run anyway",
                    auto.alpha_max
                );
            }
            let mut config = SolverConfig::new(alpha);
            config.max_iters = iters;
            config.stop_tol = tol;
            config.parallel = parallel;
            config.record_time = true;
            let x0 = match seed {
                Some(s) => ExtendedState::random(&game, 1.0, s),
                None => ExtendedState::initial(&game),
            };
            let reference = solve_ne(&game, REFERENCE_TOL)?;
            let outcome = match algo {
                Algo::Pppa => pppa_run(&game, &coupling, &config, &x0, Some(reference.as_slice()))?,
                Algo::Agp => {
                    let gamma = match gamma {
                        Some(g) => g,
                        None if alpha == auto.alpha => auto.agp_step,
                        None => TuningReport::new(&game, &coupling, Some(alpha))?.agp_step,
                    };
                    augmented_gradient_run(
                        &game,
                        &coupling,
                        gamma,
                        &config,
                        &x0,
                        Some(reference.as_slice()),
                    )?
                }
            };
            match &out {
                Some(path) => {
                    let mut f = BufWriter::new(File::create(path)?);
                    outcome.trace.write_csv(&mut f)?;
                    f.flush()?;
                }
                None => outcome.trace.write_csv(io::stdout().lock())?,
            }
            let last = outcome.trace.last().expect("trace has the initial record");
            eprintln!(
                "iterations {}  dist_to_ne {:.3e}  converged {}",
                last.iter, last.dist_to_ne, outcome.converged
            );
        }
        Command::Check {
            problem,
            alpha,
            samples,
            seed,
            json,
        } => {
            let game = load_game(&problem.game)?;
            let coupling = build_coupling(&problem.graph, problem.mode.map(Into::into))?;
            let alpha = match alpha {
                Some(a) => a,
                None => TuningReport::new(&game, &coupling, None)?.alpha,
            };
            let report = run_checks(&game, &coupling, alpha, samples, seed)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                let r = &report.restricted;
                let p = &report.phi;
                println!("alpha                      {:e}", r.alpha);
                println!("within bound               {}", r.within_bound);
                println!("rho_alpha                  {:e}", r.rho_alpha);
                println!("samples                    {}", r.samples);
                println!("min margin (equilibrium)   {:e}", r.min_ne_margin);
                println!("min margin (consensus)     {:e}", r.min_consensus_margin);
                println!(
                    "consensus identity error   {:e}",
                    r.consensus_identity_error
                );
                println!("min margin (phi-weighted)  {:e}", p.min_margin);
                println!("active phi samples         {}", p.active_samples);
                println!(
                    "result                     {}",
                    if report.passed { "PASS" } else { "FAIL" }
                );
            }
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::RunExp { config, parallel } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            cfg.parallel |= parallel;
            let bundle = run_experiment(&cfg)?;
            for r in &bundle.runs {
                let status = match (&r.diverged, r.converged) {
                    (Some(_), _) => "diverged",
                    (None, true) => "converged",
                    (None, false) => "max iters",
                };
                println!(
                    "{:<24} iterations {:>7}  dist_to_ne {:.3e}  {status}",
                    r.label, r.iterations, r.final_dist_to_ne
                );
            }
            println!("bundle written to {}", bundle.dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
