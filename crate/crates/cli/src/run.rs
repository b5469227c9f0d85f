//! Executes experiment specs and writes their artifact directories.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use complete_hinge::datasets::{builtin_dataset, generate_separable, read_csv, write_csv};
use complete_hinge::diagnostics::lemmas::{
    run_lemma_suite, summary, write_reports_csv, LemmaReport,
};
use complete_hinge::diagnostics::{fit_rate, Verdict};
use complete_hinge::neural::idx::load_mnist;
use complete_hinge::neural::{train_mlp, MlpConfig, MlpTrace};
use complete_hinge::optimizer::{LinearLoss, Trace};
use complete_hinge::{
    solve_max_margin, train, Dataset, Error as CoreError, MarginCertificate, TrainConfig,
};

use crate::artifacts::{
    with_output_dir, write_file, write_linear_plot_data, write_mlp_plot_data, MARKER,
};
use crate::spec::{DataSource, ExperimentSpec, Model, Settings};
use crate::{CliError, Result};

/// What a finished run reports back to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<String>,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
    /// Lemma checks that failed (diagnostic only, never an error).
    pub failed_checks: Vec<String>,
}

pub fn load_dataset(source: &DataSource) -> Result<(Dataset, Option<Dataset>)> {
    Ok(match source {
        DataSource::Builtin(name) => (builtin_dataset(name)?, None),
        DataSource::Generated(params) => (generate_separable(params)?, None),
        DataSource::Csv(path) => {
            let file = File::open(path).map_err(CliError::io(path))?;
            (read_csv(BufReader::new(file))?, None)
        }
        DataSource::Mnist {
            dir,
            train_limit,
            test_limit,
        } => {
            let (train, test) = load_mnist(dir, Some(*train_limit), Some(*test_limit))?;
            (train, Some(test))
        }
    })
}

/// Runs one spec into its output directory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunSummary> {
    let (data, test) = load_dataset(&spec.source)?;
    with_output_dir(&spec.out, |dir| {
        write_file(dir, MARKER, |w| {
            w.write_all(spec.settings.render().as_bytes())
                .map_err(CliError::io(dir.join(MARKER)))
        })?;
        write_file(dir, "dataset.csv", |w| Ok(write_csv(&data, w)?))?;
        let mut summary = match &spec.model {
            Model::Linear {
                config,
                diagnostics,
            } => linear_run(dir, &data, config, *diagnostics)?,
            Model::Mlp { config, baseline } => {
                mlp_run(dir, &data, test.as_ref(), config, baseline.as_ref())?
            }
        };
        summary.files = list_files(dir)?;
        Ok(summary)
    })
}

/// Trains with the certificate when the data is separable. Without one the
/// run still goes ahead so that a stalled β surfaces as the training error.
fn train_with_certificate(
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(Trace, Option<MarginCertificate>)> {
    let cert = match solve_max_margin(data) {
        Ok(c) => Some(c),
        Err(CoreError::NotSeparable) => None,
        Err(e) => return Err(e.into()),
    };
    let trace = train(data, config, cert.as_ref())?;
    if cert.is_none() && config.loss == LinearLoss::CompleteHinge {
        return Err(CoreError::NotSeparable.into());
    }
    Ok((trace, cert))
}

fn linear_run(
    dir: &Path,
    data: &Dataset,
    config: &TrainConfig,
    diagnostics: bool,
) -> Result<RunSummary> {
    let (trace, cert) = train_with_certificate(data, config)?;
    for w in &trace.warnings {
        log::warn!("{w}");
    }
    write_file(dir, "trace.csv", |w| Ok(trace.write_csv(w)?))?;
    write_file(dir, "beta.csv", |w| Ok(trace.write_beta_csv(w)?))?;
    write_file(dir, "iterates.csv", |w| Ok(trace.write_iterates(w)?))?;
    write_linear_plot_data(dir, data, &trace, cert.as_ref(), config.alpha)?;

    let mut lines = Vec::new();
    let mut failed_checks = Vec::new();
    if let Some(last) = trace.last() {
        lines.push(format!(
            "t = {}, beta = {}, |u| = {:.6}, active = {}",
            last.t, last.beta, last.norm_u, last.active_size
        ));
    }
    if let Some(cert) = &cert {
        let text = certificate_text(cert);
        write_file(dir, "certificate.txt", |w| {
            w.write_all(text.as_bytes())
                .map_err(CliError::io(dir.join("certificate.txt")))
        })?;
        lines.extend(text.lines().map(str::to_string));
        let rates = rate_text(&trace);
        write_file(dir, "rates.txt", |w| {
            w.write_all(rates.as_bytes())
                .map_err(CliError::io(dir.join("rates.txt")))
        })?;
        lines.extend(rates.lines().map(str::to_string));
        if diagnostics && config.loss == LinearLoss::CompleteHinge {
            let reports = run_lemma_suite(&trace, data, Some(cert), config)?;
            write_file(dir, "lemmas.csv", |w| Ok(write_reports_csv(&reports, w)?))?;
            let text = summary(&reports);
            write_file(dir, "lemmas.txt", |w| {
                w.write_all(text.as_bytes())
                    .map_err(CliError::io(dir.join("lemmas.txt")))
            })?;
            lines.extend(text.lines().map(str::to_string));
            failed_checks = failures(&reports);
        }
    }
    Ok(RunSummary {
        files: Vec::new(),
        lines,
        failed_checks,
    })
}

fn failures(reports: &[LemmaReport]) -> Vec<String> {
    reports
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .map(|r| r.lemma.to_string())
        .collect()
}

pub fn certificate_text(cert: &MarginCertificate) -> String {
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut s = format!(
        "u_bar = ({})\ngamma = {}\nsupport = {:?}\n",
        fmt(&cert.u_bar),
        cert.gamma,
        cert.support
    );
    for i in 0..cert.rank() {
        s.push_str(&format!(
            "gamma_row[{i}] = point {} = ({})\n",
            cert.gamma_rows[i],
            fmt(&cert.gamma_row(i))
        ));
    }
    match cert.epsilon {
        Some(e) => s.push_str(&format!("epsilon = {e}\nburn_in = {}\n", cert.burn_in(10))),
        None => s.push_str("epsilon = undefined (every point is a support vector)\nburn_in = 10\n"),
    }
    s
}

fn rate_text(trace: &Trace) -> String {
    let mut s = String::new();
    for column in ["margin_gap", "cosine_gap", "direction_distance"] {
        match fit_rate(trace, column, None) {
            Ok(f) => s.push_str(&format!(
                "{column}: slope {:.4} over t in [{}, {}] ({} points), sup value*t^{} = {:.6e}, dyadic ratio {:.3}\n",
                f.slope, f.window.0, f.window.1, f.points, -f.target, f.sup_scaled, f.stability
            )),
            Err(e) => s.push_str(&format!("{column}: no fit ({e})\n")),
        }
    }
    s
}

fn mlp_run(
    dir: &Path,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &MlpConfig,
    baseline: Option<&MlpConfig>,
) -> Result<RunSummary> {
    let mut runs: Vec<(&'static str, MlpTrace, &MlpConfig)> = Vec::new();
    for cfg in std::iter::once(config).chain(baseline) {
        log::info!("training {} for {} iterations", cfg.loss, cfg.iters);
        let (trace, _) = train_mlp(train, test, cfg)?;
        let name = cfg.loss.name();
        write_file(dir, &format!("trace_{name}.csv"), |w| {
            Ok(trace.write_csv(w)?)
        })?;
        runs.push((name, trace, cfg));
    }
    let named: Vec<(&str, &MlpTrace)> = runs.iter().map(|(n, t, _)| (*n, t)).collect();
    write_mlp_plot_data(dir, &named)?;

    let mut lines = Vec::new();
    write_file(dir, "comparison.csv", |w| {
        let e = CliError::io(dir.join("comparison.csv"));
        let mut out = String::from("loss,eta,final_test_error,lowest_test_error,beta_updates\n");
        for (name, trace, cfg) in &runs {
            let fin = trace
                .final_test_error()
                .map(|v| v.to_string())
                .unwrap_or_default();
            let low = trace
                .lowest_test_error()
                .last()
                .map(|p| p.1.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{name},{},{fin},{low},{}\n",
                cfg.eta,
                trace.beta_update_times.len()
            ));
            lines.push(format!(
                "{name} (eta {}): final test error {fin}, lowest {low}",
                cfg.eta
            ));
        }
        w.write_all(out.as_bytes()).map_err(e)
    })?;
    Ok(RunSummary {
        files: Vec::new(),
        lines,
        failed_checks: Vec::new(),
    })
}

fn list_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(CliError::io(&d))? {
            let path = entry.map_err(CliError::io(&d))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(dir) {
                names.push(rel.to_string_lossy().into_owned());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Start shared by the fig1 loss comparison. From the origin the iterates
/// land exactly on the max-margin ray and the gap vanishes.
pub const FIG1_U0: &str = "0.123,-0.456";

/// The linear figure set: every builtin dataset under the complete hinge,
/// and fig1 under the two logistic baselines from the same start.
pub fn run_figures(out: &Path, base: &Settings) -> Result<Vec<(String, RunSummary)>> {
    let mut jobs: Vec<(String, Settings)> = Vec::new();
    for (name, dataset, loss) in [
        ("fig1", "fig1", "complete_hinge"),
        ("fig1_logistic", "fig1", "logistic"),
        ("fig1_logistic_normalized", "fig1", "logistic_normalized"),
        ("fig2a", "fig2a", "complete_hinge"),
        ("fig2b", "fig2b", "complete_hinge"),
        ("fig3", "fig3", "complete_hinge"),
    ] {
        let mut s = Settings::default();
        s.set("dataset", dataset);
        s.set("loss", loss);
        if dataset == "fig1" {
            s.set("u0", FIG1_U0);
        }
        s.merge(base);
        s.set("dataset", dataset);
        s.set("loss", loss);
        jobs.push((name.to_string(), s));
    }

    with_output_dir(out, |dir| {
        let mut index = base.clone();
        index.set("dataset", "figures");
        write_file(dir, MARKER, |w| {
            w.write_all(index.render().as_bytes())
                .map_err(CliError::io(dir.join(MARKER)))
        })?;
        let mut results = Vec::new();
        for (name, mut settings) in jobs {
            settings.set("out", dir.join(&name).display());
            let spec = ExperimentSpec::from_settings(settings)?;
            let summary = run_experiment(&spec)?;
            results.push((name, summary));
        }
        Ok(results)
    })
}
