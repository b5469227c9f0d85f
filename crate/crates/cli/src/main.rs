use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use complete_hinge::datasets::write_csv;
use complete_hinge::diagnostics::lemmas::summary;
use complete_hinge::solve_max_margin;
use complete_hinge_cli::run::{certificate_text, load_dataset};
use complete_hinge_cli::spec::Model;
use complete_hinge_cli::{run_experiment, run_figures, CliError, ExperimentSpec, Result, Settings};

/// Complete hinge loss experiments: datasets, the max-margin oracle,
/// linear and network training, diagnostics and figure data.
#[derive(Debug, Parser)]
#[command(name = "chinge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random separable dataset as CSV.
    Gen {
        #[command(flatten)]
        opts: Opts,
    },
    /// Print the max-margin separator and support matrix of a dataset.
    Oracle {
        #[command(flatten)]
        opts: Opts,
    },
    /// Train a linear classifier and write the artifact directory.
    TrainLinear {
        #[command(flatten)]
        opts: Opts,
    },
    /// Train the one-hidden-layer network (MNIST by default).
    TrainMlp {
        #[command(flatten)]
        opts: Opts,
    },
    /// Train a linear classifier and print the convergence checks only.
    Diagnose {
        #[command(flatten)]
        opts: Opts,
    },
    /// Write the linear figure set (fig1, fig2a, fig2b, fig3) under --out.
    Figures {
        #[command(flatten)]
        opts: Opts,
    },
    /// Run a `key = value` spec file; flags override its entries.
    Run {
        #[arg(long, env = "CHINGE_SPEC")]
        spec: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Debug, Args)]
struct Opts {
    /// Builtin name (fig1, fig2a, fig2b, fig3), `generate`, `mnist`, or a CSV path.
    #[arg(long, env = "CHINGE_DATASET")]
    dataset: Option<String>,
    #[arg(long, env = "CHINGE_LOSS")]
    loss: Option<String>,
    #[arg(long, env = "CHINGE_ETA")]
    eta: Option<f64>,
    #[arg(long, env = "CHINGE_ALPHA")]
    alpha: Option<f64>,
    #[arg(long, env = "CHINGE_ZETA")]
    zeta: Option<f64>,
    #[arg(long, env = "CHINGE_ITERS")]
    iters: Option<usize>,
    #[arg(long, env = "CHINGE_SEED")]
    seed: Option<u64>,
    /// Output directory (a file for `gen`; stdout when omitted there).
    #[arg(long, env = "CHINGE_OUT")]
    out: Option<PathBuf>,
    /// Initial iterate, comma separated.
    #[arg(long, env = "CHINGE_U0", allow_hyphen_values = true)]
    u0: Option<String>,
    #[arg(long, env = "CHINGE_RECORD_EVERY")]
    record_every: Option<usize>,
    #[arg(long, env = "CHINGE_DIM")]
    dim: Option<usize>,
    #[arg(long, env = "CHINGE_N")]
    n: Option<usize>,
    #[arg(long, env = "CHINGE_MARGIN")]
    margin: Option<f64>,
    #[arg(long, env = "CHINGE_SPREAD")]
    spread: Option<f64>,
    /// Number of support vectors for generated data.
    #[arg(long, env = "CHINGE_SUPPORT")]
    support: Option<usize>,
    /// Plant a point that breaks separability.
    #[arg(long, env = "CHINGE_NON_SEPARABLE")]
    non_separable: bool,
    #[arg(long, env = "CHINGE_MNIST_DIR")]
    mnist_dir: Option<PathBuf>,
    #[arg(long, env = "CHINGE_TRAIN_LIMIT")]
    train_limit: Option<usize>,
    #[arg(long, env = "CHINGE_TEST_LIMIT")]
    test_limit: Option<usize>,
    #[arg(long, env = "CHINGE_HIDDEN")]
    hidden: Option<usize>,
    #[arg(long, env = "CHINGE_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "CHINGE_EVAL_EVERY")]
    eval_every: Option<usize>,
    /// Network baseline trained under the same budget, or `none`.
    #[arg(long, env = "CHINGE_BASELINE")]
    baseline: Option<String>,
    #[arg(long, env = "CHINGE_BASELINE_ETA")]
    baseline_eta: Option<f64>,
}

impl Opts {
    fn settings(&self) -> Settings {
        let mut s = Settings::default();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.set(k, v);
            }
        };
        put("dataset", self.dataset.clone());
        put("loss", self.loss.clone());
        put("eta", self.eta.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("zeta", self.zeta.map(|v| v.to_string()));
        put("iters", self.iters.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("u0", self.u0.clone());
        put("record_every", self.record_every.map(|v| v.to_string()));
        put("dim", self.dim.map(|v| v.to_string()));
        put("n", self.n.map(|v| v.to_string()));
        put("margin", self.margin.map(|v| v.to_string()));
        put("spread", self.spread.map(|v| v.to_string()));
        put("support", self.support.map(|v| v.to_string()));
        put(
            "non_separable",
            self.non_separable.then(|| "true".to_string()),
        );
        put(
            "mnist_dir",
            self.mnist_dir.as_ref().map(|p| p.display().to_string()),
        );
        put("train_limit", self.train_limit.map(|v| v.to_string()));
        put("test_limit", self.test_limit.map(|v| v.to_string()));
        put("hidden", self.hidden.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("eval_every", self.eval_every.map(|v| v.to_string()));
        put("baseline", self.baseline.clone());
        put("baseline_eta", self.baseline_eta.map(|v| v.to_string()));
        s
    }
}

fn with_default(mut s: Settings, key: &str, value: &str) -> Settings {
    if s.get(key).is_none() {
        s.set(key, value);
    }
    s
}

fn print_run(spec: &ExperimentSpec) -> Result<()> {
    let summary = run_experiment(spec)?;
    for line in &summary.lines {
        println!("{line}");
    }
    println!(
        "wrote {} files to {}",
        summary.files.len(),
        spec.out.display()
    );
    if !summary.failed_checks.is_empty() {
        log::warn!("checks failed: {}", summary.failed_checks.join(", "));
    }
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen { opts } => {
            let mut s = with_default(opts.settings(), "dataset", "generate");
            s.set("out", "-");
            let spec = ExperimentSpec::from_settings(s)?;
            let (data, _) = load_dataset(&spec.source)?;
            match &opts.out {
                Some(path) => {
                    let mut buf = Vec::new();
                    write_csv(&data, &mut buf)?;
                    fs::write(path, buf).map_err(CliError::io(path))?;
                }
                None => write_csv(&data, io::stdout().lock())?,
            }
        }
        Command::Oracle { opts } => {
            let mut s = opts.settings();
            s.set("out", "-");
            let spec = ExperimentSpec::from_settings(s)?;
            let (data, _) = load_dataset(&spec.source)?;
            print!("{}", certificate_text(&solve_max_margin(&data)?));
        }
        Command::TrainLinear { opts } => {
            let spec = ExperimentSpec::from_settings(opts.settings())?;
            if !matches!(spec.model, Model::Linear { .. }) {
                return Err(CliError::Spec("train-linear needs a linear loss".into()));
            }
            print_run(&spec)?;
        }
        Command::TrainMlp { opts } => {
            let s = with_default(
                with_default(opts.settings(), "dataset", "mnist"),
                "loss",
                "multiclass_complete_hinge",
            );
            let spec = ExperimentSpec::from_settings(s)?;
            if !matches!(spec.model, Model::Mlp { .. }) {
                return Err(CliError::Spec("train-mlp needs a network loss".into()));
            }
            print_run(&spec)?;
        }
        Command::Diagnose { opts } => {
            let mut s = opts.settings();
            s.set("out", "-");
            let spec = ExperimentSpec::from_settings(s)?;
            let Model::Linear { config, .. } = &spec.model else {
                return Err(CliError::Spec("diagnose needs a linear loss".into()));
            };
            let (data, _) = load_dataset(&spec.source)?;
            let cert = solve_max_margin(&data)?;
            let trace = complete_hinge::train(&data, config, Some(&cert))?;
            let reports =
                complete_hinge::diagnostics::run_lemma_suite(&trace, &data, Some(&cert), config)?;
            let mut out = io::stdout().lock();
            let e = |err: io::Error| CliError::io("<stdout>")(err);
            write!(out, "{}", certificate_text(&cert)).map_err(e)?;
            write!(out, "{}", summary(&reports)).map_err(e)?;
        }
        Command::Figures { opts } => {
            let base = opts.settings();
            let out = opts
                .out
                .clone()
                .ok_or_else(|| CliError::Spec("figures needs --out".into()))?;
            for (name, summary) in run_figures(&out, &base)? {
                println!("{name}: {} files", summary.files.len());
                if !summary.failed_checks.is_empty() {
                    log::warn!(
                        "{name}: checks failed: {}",
                        summary.failed_checks.join(", ")
                    );
                }
            }
        }
        Command::Run { spec, opts } => {
            let text = fs::read_to_string(&spec).map_err(CliError::io(&spec))?;
            let mut settings = Settings::parse(&text)?;
            settings.merge(&opts.settings());
            print_run(&ExperimentSpec::from_settings(settings)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
