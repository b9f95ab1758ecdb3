use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use snefy::io::{self, RunConfig};
use snefy::sampling::sample_rejection;
use snefy::training::{fit_with_validation, nll, split_validation};
use snefy::verify::{self, Scope, VerifyOptions};
use snefy::{ReportingConvention, SnefyError, SnefyModel};

/// Fit, evaluate, sample and verify squared neural family densities.
#[derive(Debug, Parser)]
#[command(name = "snefy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model described by a JSON config on a CSV dataset.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Fitted model JSON.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `fit.seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// History CSV; defaults to the model path with extension `history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Held-out test CSV reported after training.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Average negative log-likelihood of a dataset, printed as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Exact rejection samples from a bounded-activation model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle suites and print a JSON report; exits 4 on any failure.
    Verify {
        #[arg(long, default_value = "all")]
        scope: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = verify::DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        #[arg(long, hide = true)]
        perturb_kernel: Option<String>,
    },
    /// Log-density on a regular 1D or 2D grid.
    Grid {
        #[arg(long)]
        model: PathBuf,
        /// `x1min,x1max[,x2min,x2max]`
        #[arg(long, allow_hyphen_values = true)]
        bounds: String,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Error(SnefyError),
    VerifyFailed(Vec<String>),
}

impl From<SnefyError> for Failure {
    fn from(e: SnefyError) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &SnefyError) -> u8 {
    match e {
        SnefyError::TrainingAborted { .. } => 2,
        SnefyError::UnboundedActivation(_) => 3,
        _ => 1,
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<(), SnefyError> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn check_dim(model: &SnefyModel, data: &[Vec<f64>]) -> Result<(), SnefyError> {
    let d = model.support_dim();
    match data.first() {
        Some(x) if x.len() != d => Err(SnefyError::DimensionMismatch {
            expected: d,
            got: x.len(),
        }),
        _ => Ok(()),
    }
}

/// NLL under a convention, or `None` where that convention is undefined for the model.
fn nll_opt(model: &SnefyModel, data: &[Vec<f64>], conv: ReportingConvention) -> Result<Option<f64>, SnefyError> {
    match nll(model, data, conv) {
        Ok(v) => Ok(Some(v)),
        Err(SnefyError::Domain { .. }) if conv == ReportingConvention::Lebesgue => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Serialize)]
struct FitSummary {
    convention: ReportingConvention,
    iterations: usize,
    best_iter: usize,
    train_nll: f64,
    val_nll: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_nll: Option<f64>,
    model: String,
    history: String,
}

fn cmd_fit(
    config: &Path,
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    history: Option<&Path>,
    test: Option<&Path>,
) -> Result<(), SnefyError> {
    let RunConfig { model: spec, fit: mut cfg } = io::load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let points = io::read_points(data)?;
    if points[0].len() != spec.d {
        return Err(SnefyError::DimensionMismatch {
            expected: spec.d,
            got: points[0].len(),
        });
    }
    let test_points = test.map(io::read_points).transpose()?;
    let (train, val) = split_validation(&points, cfg.val_fraction, cfg.seed);
    // a data-driven base is initialised from the training split only
    let init = spec.build(&train, cfg.seed)?;
    let val = if val.is_empty() { &train } else { &val };
    let result = fit_with_validation(&init, &train, val, &cfg)?;
    let history_path = history.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("history.csv"));
    io::save_model(&result.model, out)?;
    io::write_history(&history_path, &result.history)?;
    let test_nll = match &test_points {
        Some(t) => {
            check_dim(&result.model, t)?;
            Some(nll(&result.model, t, cfg.convention)?)
        }
        None => None,
    };
    print_json(&FitSummary {
        convention: cfg.convention,
        iterations: cfg.max_iters,
        best_iter: result.best_iter,
        train_nll: nll(&result.model, &train, cfg.convention)?,
        val_nll: nll(&result.model, val, cfg.convention)?,
        test_nll,
        model: out.display().to_string(),
        history: history_path.display().to_string(),
    })
}

#[derive(Serialize)]
struct EvalSummary {
    count: usize,
    nll_base: f64,
    nll_lebesgue: Option<f64>,
}

fn cmd_eval(model: &Path, data: &Path) -> Result<(), SnefyError> {
    let model = io::load_model(model)?;
    let points = io::read_points(data)?;
    check_dim(&model, &points)?;
    print_json(&EvalSummary {
        count: points.len(),
        nll_base: nll(&model, &points, ReportingConvention::Base)?,
        nll_lebesgue: nll_opt(&model, &points, ReportingConvention::Lebesgue)?,
    })
}

#[derive(Serialize)]
struct SampleSummary {
    seed: u64,
    count: usize,
    proposals: usize,
    acceptance_rate: f64,
    expected_rate: f64,
}

fn cmd_sample(model: &Path, count: usize, seed: u64, out: &Path) -> Result<(), SnefyError> {
    let model = io::load_model(model)?;
    if count == 0 {
        return Err(SnefyError::InvalidArgument("--count must be positive".into()));
    }
    let r = sample_rejection(&model, &mut snefy::rng::seeded(seed), count)?;
    io::write_points(out, &r.samples)?;
    let summary = SampleSummary {
        seed,
        count,
        proposals: r.proposals,
        acceptance_rate: r.acceptance_rate,
        expected_rate: r.expected_rate,
    };
    io::write_json(&out.with_extension("seed.json"), &summary)?;
    print_json(&summary)
}

fn cmd_verify(
    scope: &str,
    seed: u64,
    out: Option<&Path>,
    mc_samples: usize,
    perturb: Option<String>,
) -> Result<(), Failure> {
    let scope: Scope = scope.parse()?;
    let report = verify::run(
        scope,
        &VerifyOptions {
            seed,
            mc_samples,
            perturb,
        },
    )?;
    eprint!("{}", report.table());
    print_json(&report)?;
    if let Some(p) = out {
        io::write_json(p, &report)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::VerifyFailed(report.failures().map(|c| c.id.clone()).collect()))
    }
}

fn cmd_grid(model: &Path, bounds: &str, resolution: usize, out: &Path) -> Result<(), SnefyError> {
    let model = io::load_model(model)?;
    let d = model.support_dim();
    if d > 2 {
        return Err(SnefyError::InvalidArgument(format!("grid needs a 1D or 2D model, got d = {d}")));
    }
    let bounds = io::parse_bounds(bounds)?;
    if bounds.len() != d {
        return Err(SnefyError::DimensionMismatch {
            expected: d,
            got: bounds.len(),
        });
    }
    let pts = io::grid_points(&bounds, resolution)?;
    let log_p = pts
        .iter()
        .map(|x| match model.log_density_with(x, ReportingConvention::Lebesgue) {
            Err(SnefyError::Domain { .. }) => model.log_density(x).map(|e| e.log_density),
            other => other,
        })
        .collect::<Result<Vec<f64>, SnefyError>>()?;
    io::write_grid(out, &pts, &log_p)
}

fn run(cli: Cli) -> Result<(), Failure> {
    snefy::init_thread_pool()?;
    match cli.command {
        Command::Fit {
            config,
            data,
            out,
            seed,
            history,
            test,
        } => cmd_fit(&config, &data, &out, seed, history.as_deref(), test.as_deref())?,
        Command::Eval { model, data } => cmd_eval(&model, &data)?,
        Command::Sample { model, count, seed, out } => cmd_sample(&model, count, seed, &out)?,
        Command::Verify {
            scope,
            seed,
            out,
            mc_samples,
            perturb_kernel,
        } => cmd_verify(&scope, seed, out.as_deref(), mc_samples, perturb_kernel)?,
        Command::Grid {
            model,
            bounds,
            resolution,
            out,
        } => cmd_grid(&model, &bounds, resolution, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors share the input-error code; --help and --version succeed
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::VerifyFailed(ids)) => {
            eprintln!("verification failed: {}", ids.join(", "));
            ExitCode::from(4)
        }
    }
}
