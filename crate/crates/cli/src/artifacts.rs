//! Output directories and plot-ready data files.
//!
//! Everything is written into a hidden sibling directory first and renamed
//! into place only when the whole run succeeded.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use complete_hinge::neural::MlpTrace;
use complete_hinge::optimizer::Trace;
use complete_hinge::{Dataset, MarginCertificate};

use crate::{CliError, Result};

/// Present in every directory this tool writes.
pub const MARKER: &str = "spec.txt";

/// Runs `body` against a fresh staging directory and moves it to `out` on
/// success. On failure the staging directory is removed and `out` is untouched.
pub fn with_output_dir<T>(out: &Path, body: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    if out.exists() && !replaceable(out)? {
        return Err(CliError::OutputExists(out.to_path_buf()));
    }
    let staging = staging_path(out)?;
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(CliError::io(&staging))?;
    }
    fs::create_dir_all(&staging).map_err(CliError::io(&staging))?;

    match body(&staging) {
        Ok(value) => {
            if out.exists() {
                fs::remove_dir_all(out).map_err(CliError::io(out))?;
            }
            fs::rename(&staging, out).map_err(CliError::io(out))?;
            Ok(value)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn replaceable(out: &Path) -> Result<bool> {
    if !out.is_dir() {
        return Ok(false);
    }
    let mut entries = fs::read_dir(out).map_err(CliError::io(out))?;
    Ok(entries.next().is_none() || out.join(MARKER).is_file())
}

fn staging_path(out: &Path) -> Result<PathBuf> {
    let name = out.file_name().ok_or_else(|| {
        CliError::Spec(format!(
            "output path {} has no final component",
            out.display()
        ))
    })?;
    let parent = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    Ok(parent.join(format!(".{}.partial", name.to_string_lossy())))
}

/// Creates `dir/name` and hands a buffered writer to `fill`.
pub fn write_file(
    dir: &Path,
    name: &str,
    fill: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(CliError::io(&path))?;
    let mut w = BufWriter::new(file);
    fill(&mut w)?;
    w.flush().map_err(CliError::io(&path))
}

fn io_at(dir: &Path, name: &str) -> impl Fn(std::io::Error) -> CliError {
    let path = dir.join(name);
    move |source| CliError::Io {
        path: path.clone(),
        source,
    }
}

/// Files for a linear run, named after what they plot.
pub fn write_linear_plot_data(
    dir: &Path,
    data: &Dataset,
    trace: &Trace,
    cert: Option<&MarginCertificate>,
    alpha: f64,
) -> Result<()> {
    write_file(dir, "norm_t.dat", |w| {
        writeln!(w, "# t norm_u").map_err(io_at(dir, "norm_t.dat"))?;
        for r in &trace.rows {
            writeln!(w, "{} {}", r.t, r.norm_u).map_err(io_at(dir, "norm_t.dat"))?;
        }
        Ok(())
    })?;
    write_file(dir, "norm_k.dat", |w| {
        let e = io_at(dir, "norm_k.dat");
        match cert {
            Some(_) => writeln!(w, "# k norm_u_k k*alpha/gamma").map_err(&e)?,
            None => writeln!(w, "# k norm_u_k").map_err(&e)?,
        }
        for b in &trace.beta_updates {
            let norm = b.u.iter().map(|v| v * v).sum::<f64>().sqrt();
            match cert {
                Some(c) => {
                    writeln!(w, "{} {} {}", b.k, norm, b.k as f64 * alpha / c.gamma).map_err(&e)?
                }
                None => writeln!(w, "{} {}", b.k, norm).map_err(&e)?,
            }
        }
        Ok(())
    })?;
    if cert.is_some() {
        write_file(dir, "gap.dat", |w| {
            let e = io_at(dir, "gap.dat");
            writeln!(w, "# t margin_gap cosine_gap direction_distance").map_err(&e)?;
            for r in trace.rows.iter().filter(|r| r.margin_gap.is_some()) {
                let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| x.to_string());
                writeln!(
                    w,
                    "{} {} {} {}",
                    r.t,
                    f(r.margin_gap),
                    f(r.cosine_gap),
                    f(r.direction_distance)
                )
                .map_err(&e)?;
            }
            Ok(())
        })?;
    }
    if data.dim() == 2 {
        write_file(dir, "points.dat", |w| {
            let e = io_at(dir, "points.dat");
            writeln!(w, "# z1 z2 (signed points)").map_err(&e)?;
            for z in data.signed()? {
                writeln!(w, "{} {}", z[0], z[1]).map_err(&e)?;
            }
            Ok(())
        })?;
        write_file(dir, "trajectory.dat", |w| {
            let e = io_at(dir, "trajectory.dat");
            writeln!(w, "# t u1 u2").map_err(&e)?;
            for r in &trace.rows {
                writeln!(w, "{} {} {}", r.t, r.u[0], r.u[1]).map_err(&e)?;
            }
            Ok(())
        })?;
        write_file(dir, "separator.dat", |w| {
            let e = io_at(dir, "separator.dat");
            let reach = data
                .signed()?
                .iter()
                .flatten()
                .fold(1.0_f64, |m, v| m.max(v.abs()))
                * 1.5;
            let mut line = |label: &str, u: &[f64]| -> Result<()> {
                let n = (u[0] * u[0] + u[1] * u[1]).sqrt();
                if n == 0.0 {
                    return Ok(());
                }
                let (dx, dy) = (-u[1] / n * reach, u[0] / n * reach);
                writeln!(w, "# {label}\n{} {}\n{} {}\n\n", -dx, -dy, dx, dy).map_err(&e)?;
                Ok(())
            };
            if let Some(last) = trace.last() {
                line("final iterate", &last.u)?;
            }
            if let Some(c) = cert {
                line("max-margin separator", &c.u_bar)?;
            }
            Ok(())
        })?;
    }
    write_file(dir, "plots.gp", |w| {
        w.write_all(linear_script(data.dim() == 2, cert.is_some()).as_bytes())
            .map_err(io_at(dir, "plots.gp"))
    })
}

fn linear_script(planar: bool, with_cert: bool) -> String {
    let mut s = String::from("set terminal pngcairo size 800,600\nset key top left\n\n");
    if planar {
        s.push_str(
            "set output 'trajectory.png'\nset title 'Iterate trajectory'\nset xlabel 'u_1'\nset ylabel 'u_2'\n\
             plot 'trajectory.dat' using 2:3 with linespoints pt 7 ps 0.3 title 'u_t'\n\n\
             set output 'separator.png'\nset title 'Separators'\nset size ratio -1\nset xlabel 'z_1'\nset ylabel 'z_2'\n\
             plot 'points.dat' using 1:2 with points pt 7 ps 1.5 title 'signed points', \\\n     \
             'separator.dat' index 0 using 1:2 with lines lw 2 title 'final iterate'",
        );
        if with_cert {
            s.push_str(", \\\n     'separator.dat' index 1 using 1:2 with lines dt 2 lw 2 title 'max margin'");
        }
        s.push_str("\nset size noratio\n\n");
    }
    if with_cert {
        s.push_str(
            "set output 'gap.png'\nset title 'Margin gap'\nset logscale xy\nset xlabel 't'\nset ylabel 'gap'\n\
             plot 'gap.dat' using 1:2 with lines title 'margin gap', \\\n     \
             'gap.dat' using 1:3 with lines title 'cosine gap', \\\n     \
             'gap.dat' using 1:4 with lines title 'direction distance'\nunset logscale\n\n",
        );
    }
    s.push_str("set output 'norm_k.png'\nset title 'Norm at beta updates'\nset xlabel 'k'\nset ylabel '||u_k||'\n");
    if with_cert {
        s.push_str("plot 'norm_k.dat' using 1:2 with lines title '||u_k||', 'norm_k.dat' using 1:3 with lines dt 2 title 'k alpha / gamma'\n\n");
    } else {
        s.push_str("plot 'norm_k.dat' using 1:2 with lines title '||u_k||'\n\n");
    }
    s.push_str("set output 'norm_t.png'\nset title 'Norm of the iterate'\nset xlabel 't'\nset ylabel '||u_t||'\nplot 'norm_t.dat' using 1:2 with lines title '||u_t||'\n");
    s
}

/// Running minimum of the test error for each network run, side by side.
pub fn write_mlp_plot_data(dir: &Path, runs: &[(&str, &MlpTrace)]) -> Result<()> {
    let curves: Vec<Vec<(usize, f64)>> = runs.iter().map(|(_, t)| t.lowest_test_error()).collect();
    write_file(dir, "lowest_error.dat", |w| {
        let e = io_at(dir, "lowest_error.dat");
        let names: Vec<&str> = runs.iter().map(|(n, _)| *n).collect();
        writeln!(w, "# t {}", names.join(" ")).map_err(&e)?;
        let rows = curves.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..rows {
            let t = curves
                .iter()
                .find_map(|c| c.get(i).map(|p| p.0))
                .unwrap_or(0);
            let vals: Vec<String> = curves
                .iter()
                .map(|c| c.get(i).map_or("nan".into(), |p| p.1.to_string()))
                .collect();
            writeln!(w, "{t} {}", vals.join(" ")).map_err(&e)?;
        }
        Ok(())
    })?;
    write_file(dir, "plots.gp", |w| {
        let mut s = String::from(
            "set terminal pngcairo size 800,600\nset output 'lowest_error.png'\nset title 'Lowest test error so far'\n\
             set xlabel 'iteration'\nset ylabel 'test error'\nplot ",
        );
        let parts: Vec<String> = runs
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                format!(
                    "'lowest_error.dat' using 1:{} with lines title '{name}'",
                    i + 2
                )
            })
            .collect();
        s.push_str(&parts.join(", \\\n     "));
        s.push('\n');
        w.write_all(s.as_bytes()).map_err(io_at(dir, "plots.gp"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_body_leaves_nothing_behind() {
        let root = tempfile::tempdir().unwrap();
        let out = root.path().join("run");
        let err = with_output_dir(&out, |dir| {
            fs::write(dir.join("half.csv"), "1,2\n").unwrap();
            Err::<(), _>(CliError::Spec("boom".into()))
        });
        assert!(err.is_err());
        assert!(!out.exists());
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
    }

    #[test]
    fn replaces_only_own_directories() {
        let root = tempfile::tempdir().unwrap();
        let out = root.path().join("run");
        with_output_dir(&out, |dir| {
            fs::write(dir.join(MARKER), "x").map_err(CliError::io(dir))
        })
        .unwrap();
        with_output_dir(&out, |dir| {
            fs::write(dir.join(MARKER), "y").map_err(CliError::io(dir))
        })
        .unwrap();
        assert_eq!(fs::read_to_string(out.join(MARKER)).unwrap(), "y");

        let foreign = root.path().join("mine");
        fs::create_dir(&foreign).unwrap();
        fs::write(foreign.join("notes.txt"), "keep").unwrap();
        assert!(matches!(
            with_output_dir(&foreign, |_| Ok(())),
            Err(CliError::OutputExists(_))
        ));
        assert_eq!(
            fs::read_to_string(foreign.join("notes.txt")).unwrap(),
            "keep"
        );
    }
}
