//! `depclt` — config-driven experiment harness over the depclt library:
//! simulation campaigns, bound evaluation, rate tables, tail-bound curves,
//! identity-verification suites, and genogram inspection.
//!
//! Output is CSV or JSON, versioned with a `# depclt v1` header, to stdout
//! or `--out`. Runs are reproducible byte-for-byte for a fixed config and
//! seed. Exit codes: 0 ok, 2 config error, 3 verification failure,
//! 4 degeneracy.

mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use depclt::error::Error;

#[derive(Parser)]
#[command(
    name = "depclt",
    version,
    about = "Wasserstein-p normal approximation experiments"
)]
struct Cli {
    /// JSON config file; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Output path (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
    /// RNG seed for every stochastic command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads for parallel replicates.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Empirical W_p convergence of dependent sums across sizes.
    Simulate {
        /// Model: window, linear, or ustat.
        #[arg(long)]
        model: Option<String>,
        /// Lattice dimension (window model).
        #[arg(long)]
        d: Option<usize>,
        /// Dependence range m (window model).
        #[arg(long)]
        m: Option<u64>,
        /// Noise law: normal, rademacher, exponential, bernoulli:<p>.
        #[arg(long)]
        noise: Option<String>,
        /// Window kernel: mean or product; U-stat kernel: sumprod, sum,
        /// product.
        #[arg(long)]
        kernel: Option<String>,
        /// Comma-separated strictly increasing sizes.
        #[arg(long)]
        sizes: Option<String>,
        /// Replicates per size.
        #[arg(long)]
        reps: Option<usize>,
        /// Wasserstein order.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Theorem-level brackets for a model instance.
    Bounds {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long)]
        noise: Option<String>,
        #[arg(long)]
        kernel: Option<String>,
        /// Evaluation size |T|.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        /// Monte Carlo draws for moment sums.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Convergence-rate exponent from the piecewise tables.
    Rate {
        /// Decay exponent u.
        #[arg(long)]
        u: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Use the integer-p table.
        #[arg(long, default_value_t = false)]
        integer_p: bool,
        /// Epsilon subtracted at boundary cases.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
    /// Tail-bound curve, optionally with Monte Carlo dominance columns.
    Tail {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long)]
        noise: Option<String>,
        #[arg(long)]
        kernel: Option<String>,
        /// Sum size n.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        /// K_p; calibrated as (measured W_p) sqrt(n) when omitted and a
        /// model is given.
        #[arg(long)]
        k: Option<f64>,
        /// Comma-separated t grid.
        #[arg(long)]
        t_grid: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Exact-identity regression suites; nonzero exit if any residual
    /// exceeds its tolerance.
    Verify {
        /// Run only items whose name contains this string.
        #[arg(long)]
        suite: Option<String>,
        /// Override every item tolerance with this absolute value.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Genogram utilities.
    Genogram {
        #[command(subcommand)]
        action: GenogramAction,
    },
}

#[derive(Subcommand)]
enum GenogramAction {
    /// Class counts of order-k genograms under an identifier cap.
    Enumerate {
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 4)]
        id_cap: i64,
    },
    /// Validation report and derived data for a genogram text form.
    Inspect {
        /// e.g. "p=[.,1,1,1,4,5,5]; s=[0,2,1,0,-1,2,0]"
        text: String,
    },
    /// Exact coefficients a_{H,G} and b_{H,G}.
    Coeff {
        #[arg(long)]
        g: String,
        #[arg(long)]
        h: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized");
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Shape(_) | Error::Domain(_) => ExitCode::from(2),
                Error::Degenerate(_) => ExitCode::from(4),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(1);
    let mut sink = output::Sink::open(cli.out.as_deref())?;
    match cli.cmd {
        Cmd::Simulate {
            model,
            d,
            m,
            noise,
            kernel,
            sizes,
            reps,
            p,
        } => {
            let spec = config::ModelSpec::resolve(&file, model, d, m, noise, kernel)?;
            let sizes = config::resolve_sizes(&file, sizes)?;
            let reps = reps.or(file.reps).unwrap_or(10_000);
            let p = p.or(file.p).unwrap_or(1.0);
            let table = depclt::experiments::rate_experiment(
                &spec.to_rate_model()?,
                &sizes,
                reps,
                p,
                seed,
            )?;
            output::write_rate_table(&mut sink, &table)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bounds {
            model,
            d,
            m,
            noise,
            kernel,
            size,
            p,
            reps,
        } => {
            let spec = config::ModelSpec::resolve(&file, model, d, m, noise, kernel)?;
            let size = size.or(file.size).unwrap_or(1024);
            let p = p.or(file.p).unwrap_or(2.0);
            let reps = reps.or(file.reps).unwrap_or(1_000_000);
            let report = output::bounds_report(&spec, size, p, reps, seed)?;
            sink.write_json(&report)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Rate {
            u,
            d,
            p,
            integer_p,
            eps,
        } => {
            let (beta, case, eps_loss) = depclt::bounds::rate_exponent(u, d, p, integer_p, eps)?;
            sink.write_line("# depclt v1")?;
            sink.write_line("u,d,p,integer_p,beta,case,eps_loss")?;
            let beta_text = beta.map_or("none".to_string(), output::fmt_f64);
            sink.write_line(&format!(
                "{},{},{},{},{},{},{}",
                output::fmt_f64(u),
                d,
                output::fmt_f64(p),
                integer_p,
                beta_text,
                case,
                eps_loss
            ))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Tail {
            model,
            d,
            m,
            noise,
            kernel,
            size,
            p,
            k,
            t_grid,
            reps,
        } => {
            let size = size.or(file.size).unwrap_or(4096);
            let p = p.or(file.p).unwrap_or(1.0);
            let reps = reps.or(file.reps).unwrap_or(100_000);
            let ts = config::resolve_t_grid(&file, t_grid)?;
            let rate_model = match (&model, &file.model) {
                (None, None) => None,
                _ => Some(
                    config::ModelSpec::resolve(&file, model, d, m, noise, kernel)?
                        .to_rate_model()?,
                ),
            };
            let (k_p, rows) = depclt::experiments::tail_experiment(
                rate_model.as_ref(),
                size,
                reps,
                p,
                k,
                &ts,
                seed,
            )?;
            output::write_tail_table(&mut sink, k_p, &rows)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify { suite, tol } => {
            let tol = tol.or(file.tol);
            let items = depclt::experiments::verify_suite_with(suite.as_deref(), tol)?;
            output::write_verify_table(&mut sink, &items)?;
            if items.iter().all(|i| i.pass) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            }
        }
        Cmd::Genogram { action } => {
            output::run_genogram(&mut sink, action)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

pub(crate) use GenogramAction as Action;
