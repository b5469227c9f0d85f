//! Measured quantities and convergence-rate fits.

pub mod lemmas;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::MarginCertificate;
use crate::linalg::{dot, norm};
use crate::optimizer::Trace;

pub use lemmas::{run_lemma_suite, LemmaReport, Verdict, Witness};

/// Minimum number of points a rate window must contain.
pub const MIN_FIT_POINTS: usize = 20;

fn unit(u: &[f64]) -> Result<Vec<f64>> {
    let n = norm(u);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(u.iter().map(|v| v / n).collect())
}

/// `γ − min_i ⟨u/‖u‖, z_i⟩`.
pub fn margin_gap(u: &[f64], data: &Dataset, cert: &MarginCertificate) -> Result<f64> {
    let u_hat = unit(u)?;
    let min = data
        .signed()?
        .iter()
        .map(|z| dot(&u_hat, z))
        .fold(f64::INFINITY, f64::min);
    Ok(cert.gamma - min)
}

/// `1 − ⟨û, ū⟩`.
pub fn cosine_gap(u: &[f64], cert: &MarginCertificate) -> Result<f64> {
    Ok(1.0 - dot(&unit(u)?, &cert.u_bar))
}

/// `‖û − ū‖`.
pub fn direction_distance(u: &[f64], cert: &MarginCertificate) -> Result<f64> {
    let u_hat = unit(u)?;
    Ok(u_hat
        .iter()
        .zip(&cert.u_bar)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Log-log least-squares fit of a positive quantity against `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (usize, usize),
    /// Exponent the scaled sup refers to.
    pub target: f64,
    /// `max value · t^(−target)` over the window.
    pub sup_scaled: f64,
    /// Largest ratio between sups of `value · t^(−target)` over consecutive
    /// dyadic blocks `[t, 2t)` of the window.
    pub stability: f64,
    pub points: usize,
}

/// Target exponent used for a trace column.
pub fn target_exponent(column: &str) -> Result<f64> {
    match column {
        "margin_gap" | "cosine_gap" => Ok(-1.0),
        "direction_distance" => Ok(-0.5),
        other => Err(Error::UnknownName(other.to_string())),
    }
}

/// The last two decades of a trace, `[t_max / 100, t_max]`.
pub fn default_window(trace: &Trace) -> (usize, usize) {
    let t_max = trace.last().map_or(0, |r| r.t);
    (t_max / 100, t_max)
}

/// Fits a column of `trace` over `window` (default: the last two decades).
pub fn fit_rate(trace: &Trace, column: &str, window: Option<(usize, usize)>) -> Result<RateFit> {
    let target = target_exponent(column)?;
    let window = window.unwrap_or_else(|| default_window(trace));
    fit_power_law(&trace.column(column)?, target, window)
}

/// Fits `value ≈ C t^slope` to the samples with `t` inside `window`.
pub fn fit_power_law(
    samples: &[(usize, f64)],
    target: f64,
    window: (usize, usize),
) -> Result<RateFit> {
    let (lo, hi) = window;
    let pts: Vec<(usize, f64)> = samples
        .iter()
        .copied()
        .filter(|&(t, _)| t >= lo.max(1) && t <= hi)
        .collect();
    if pts.len() < MIN_FIT_POINTS || lo >= hi {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            found: pts.len(),
        });
    }
    if let Some(&(t, value)) = pts.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(Error::NonPositiveValues { t, value });
    }
    let xs: Vec<f64> = pts.iter().map(|&(t, _)| (t as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|&(_, v)| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let scaled: Vec<(usize, f64)> = pts
        .iter()
        .map(|&(t, v)| (t, v * (t as f64).powf(-target)))
        .collect();
    let sup_scaled = scaled
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        window: (pts[0].0, pts[pts.len() - 1].0),
        target,
        sup_scaled,
        stability: dyadic_stability(&scaled),
        points: pts.len(),
    })
}

fn dyadic_stability(scaled: &[(usize, f64)]) -> f64 {
    let start = scaled[0].0;
    let mut blocks: Vec<f64> = Vec::new();
    let mut edge = start;
    let mut current = f64::NEG_INFINITY;
    for &(t, s) in scaled {
        while t >= 2 * edge {
            if current.is_finite() {
                blocks.push(current);
            }
            current = f64::NEG_INFINITY;
            edge *= 2;
        }
        current = current.max(s);
    }
    if current.is_finite() {
        blocks.push(current);
    }
    blocks
        .windows(2)
        .map(|w| (w[0] / w[1]).max(w[1] / w[0]))
        .fold(1.0, f64::max)
}

/// Largest value in the first and in the last tenth of `values`, used as a
/// growth-trend test. `None` for fewer than ten values.
pub fn decile_maxima(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 10 {
        return None;
    }
    let tenth = values.len() / 10;
    let first = values[..tenth]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let last = values[values.len() - tenth..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Some((first, last))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::geometry::solve_max_margin;

    fn fig1() -> (Dataset, MarginCertificate) {
        let data =
            Dataset::from_signed(vec![vec![-1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let cert = solve_max_margin(&data).unwrap();
        (data, cert)
    }

    #[test]
    fn gap_examples() {
        let (data, cert) = fig1();
        assert_abs_diff_eq!(
            margin_gap(&cert.u_bar, &data, &cert).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            margin_gap(&[1.0, 0.0], &data, &cert).unwrap(),
            2.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            margin_gap(&[0.0, 0.0], &data, &cert),
            Err(Error::ZeroVector)
        ));
        // every point is a support vector, so −ū sits at −γ from all of them
        let basis = Dataset::from_signed(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let cert = solve_max_margin(&basis).unwrap();
        let flipped: Vec<f64> = cert.u_bar.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(
            margin_gap(&flipped, &basis, &cert).unwrap(),
            2.0 * cert.gamma,
            epsilon = 1e-15
        );
    }

    #[test]
    fn direction_examples() {
        let (_, cert) = fig1();
        assert_abs_diff_eq!(cosine_gap(&[0.0, 4.0], &cert).unwrap(), 0.0);
        assert_abs_diff_eq!(direction_distance(&[0.0, 4.0], &cert).unwrap(), 0.0);
        assert_abs_diff_eq!(cosine_gap(&[2.0, 0.0], &cert).unwrap(), 1.0);
        assert_abs_diff_eq!(
            direction_distance(&[2.0, 0.0], &cert).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn exact_power_laws() {
        let samples: Vec<(usize, f64)> =
            (1..=100).map(|i| (i * 10, 5.0 / (i * 10) as f64)).collect();
        let fit = fit_power_law(&samples, -1.0, (10, 1000)).unwrap();
        assert_abs_diff_eq!(fit.slope, -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.sup_scaled, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.stability, 1.0, epsilon = 1e-12);

        let samples: Vec<(usize, f64)> = (1..=100)
            .map(|i| (i * 10, 3.0 / ((i * 10) as f64).sqrt()))
            .collect();
        let fit = fit_power_law(&samples, -0.5, (10, 1000)).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.sup_scaled, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_errors() {
        let few: Vec<(usize, f64)> = (1..10).map(|t| (t, 1.0)).collect();
        assert!(matches!(
            fit_power_law(&few, -1.0, (1, 10)),
            Err(Error::InsufficientPoints { .. })
        ));
        let mut zero: Vec<(usize, f64)> = (1..=30).map(|t| (t, 1.0)).collect();
        zero[4].1 = 0.0;
        assert!(matches!(
            fit_power_law(&zero, -1.0, (1, 30)),
            Err(Error::NonPositiveValues { t: 5, .. })
        ));
    }

    #[test]
    fn stability_flags_jumps() {
        let samples: Vec<(usize, f64)> = (1..=64)
            .map(|t| (t, if t >= 32 { 10.0 } else { 1.0 } / t as f64))
            .collect();
        let fit = fit_power_law(&samples, -1.0, (1, 64)).unwrap();
        assert_abs_diff_eq!(fit.stability, 10.0);
    }

    proptest! {
        #[test]
        fn distance_cosine_identity(u in prop::collection::vec(-5.0..5.0f64, 2)) {
            prop_assume!(norm(&u) > 1e-3);
            let (_, cert) = fig1();
            let c = cosine_gap(&u, &cert).unwrap();
            let d = direction_distance(&u, &cert).unwrap();
            prop_assert!((d * d - 2.0 * c).abs() <= 1e-12);
        }

        #[test]
        fn gap_is_non_negative(u in prop::collection::vec(-5.0..5.0f64, 2)) {
            prop_assume!(norm(&u) > 1e-3);
            let (data, cert) = fig1();
            prop_assert!(margin_gap(&u, &data, &cert).unwrap() >= -1e-12);
        }
    }
}
