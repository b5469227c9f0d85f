//! Risk values and descent directions for the linear and multiclass losses.
//!
//! Sign convention: `grad_u` is the gradient, so descent moves `u ← u − η·grad_u`.

use ndarray::{Array2, ArrayView2};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

/// A loss evaluated at `(u, β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub risk: f64,
    pub grad_u: Vec<f64>,
    /// Whether the β-increment indicator is active.
    pub beta_fires: bool,
    /// Indices `i` with `⟨u, z_i⟩ ≤ β`, ascending.
    pub active_set: Vec<usize>,
}

/// Hyperparameters of the complete hinge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompleteHinge {
    pub alpha: f64,
    pub eta: f64,
    pub zeta: f64,
}

impl CompleteHinge {
    pub fn new(alpha: f64, eta: f64, zeta: f64) -> Result<Self> {
        let params = Self { alpha, eta, zeta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "zeta must be non-negative, got {}",
                self.zeta
            )));
        }
        Ok(())
    }
}

/// Per-point margins `⟨u, z_i⟩`.
pub fn margins(u: &[f64], z: &[Vec<f64>]) -> Vec<f64> {
    z.iter().map(|zi| dot(u, zi)).collect()
}

fn check_dim(u: &[f64], data: &Dataset) -> Result<()> {
    if u.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: u.len(),
        });
    }
    Ok(())
}

/// `Σ_i max{β − m_i, 0}` in index order.
fn hinge_sum(m: &[f64], beta: f64) -> f64 {
    m.iter().fold(0.0, |acc, &mi| acc + (beta - mi).max(0.0))
}

fn active_gradient(z: &[Vec<f64>], active: &[usize], dim: usize) -> Vec<f64> {
    let mut g = vec![0.0; dim];
    for &i in active {
        axpy(-1.0, &z[i], &mut g);
    }
    g
}

/// Vanilla hinge risk `Σ_i max{β − ⟨u, z_i⟩, 0}` (no `1/n`).
pub fn vanilla_hinge(u: &[f64], data: &Dataset, beta: f64) -> Result<LossEval> {
    check_dim(u, data)?;
    let z = data.signed()?;
    let m = margins(u, z);
    let active: Vec<usize> = (0..z.len()).filter(|&i| m[i] <= beta).collect();
    let risk = hinge_sum(&m, beta);
    Ok(LossEval {
        risk,
        grad_u: active_gradient(z, &active, data.dim()),
        beta_fires: false,
        active_set: active,
    })
}

/// Complete hinge risk
/// `−Σ_{⟨u,z_i⟩ ≤ β} ⟨u, z_i⟩ − 1[hinge ≤ ζ]·(α/η)·β`.
pub fn complete_hinge(
    u: &[f64],
    data: &Dataset,
    beta: f64,
    params: &CompleteHinge,
) -> Result<LossEval> {
    params.validate()?;
    check_dim(u, data)?;
    let z = data.signed()?;
    let m = margins(u, z);
    let active: Vec<usize> = (0..z.len()).filter(|&i| m[i] <= beta).collect();
    let first = first_term(&m, &active);
    let beta_fires = hinge_sum(&m, beta) <= params.zeta;
    let second = if beta_fires {
        params.alpha / params.eta * beta
    } else {
        0.0
    };
    Ok(LossEval {
        risk: first - second,
        grad_u: active_gradient(z, &active, data.dim()),
        beta_fires,
        active_set: active,
    })
}

/// `−Σ_{i ∈ active} m_i`, summed in index order.
fn first_term(m: &[f64], active: &[usize]) -> f64 {
    -active.iter().fold(0.0, |acc, &i| acc + m[i])
}

/// First term of the complete hinge, `−Σ_{⟨u,z_i⟩ ≤ β} ⟨u, z_i⟩`.
pub fn complete_hinge_first_term(u: &[f64], data: &Dataset, beta: f64) -> Result<f64> {
    check_dim(u, data)?;
    let m = margins(u, data.signed()?);
    let active: Vec<usize> = (0..m.len()).filter(|&i| m[i] <= beta).collect();
    Ok(first_term(&m, &active))
}

/// Term `k` of the β-free series:
/// `−1[min_i m_i > (k−1)α] Σ_i 1[(k−1)α ≤ m_i ≤ kα] m_i`.
pub fn complete_hinge_series_term(u: &[f64], data: &Dataset, alpha: f64, k: u64) -> Result<f64> {
    check_dim(u, data)?;
    let m = margins(u, data.signed()?);
    Ok(series_term(&m, alpha, k))
}

fn series_term(m: &[f64], alpha: f64, k: u64) -> f64 {
    let lo = (k as f64 - 1.0) * alpha;
    let hi = k as f64 * alpha;
    let min = m.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= lo {
        return 0.0;
    }
    let band: Vec<usize> = (0..m.len()).filter(|&i| lo <= m[i] && m[i] <= hi).collect();
    first_term(m, &band)
}

/// The β-free series truncated to `k = 0..=kmax`.
pub fn complete_hinge_series(u: &[f64], data: &Dataset, alpha: f64, kmax: u64) -> Result<f64> {
    if kmax < 1 {
        return Err(Error::InvalidHyperparameter(
            "kmax must be at least 1".into(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    check_dim(u, data)?;
    let m = margins(u, data.signed()?);
    Ok((0..=kmax).fold(0.0, |acc, k| acc + series_term(&m, alpha, k)))
}

/// `log(1 + e^{−x})` without overflow.
fn softplus_neg(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// `σ(−x) = 1/(1 + e^{x})` without overflow.
fn sigmoid_neg(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Logistic risk `Σ_i log(1 + exp(−⟨u, z_i⟩))`.
///
/// `beta` only defines the reported active set; it never affects the risk.
pub fn logistic(u: &[f64], data: &Dataset, beta: f64) -> Result<LossEval> {
    check_dim(u, data)?;
    let z = data.signed()?;
    let m = margins(u, z);
    let mut grad = vec![0.0; data.dim()];
    let mut risk = 0.0;
    for (zi, &mi) in z.iter().zip(&m) {
        risk += softplus_neg(mi);
        axpy(-sigmoid_neg(mi), zi, &mut grad);
    }
    Ok(LossEval {
        risk,
        grad_u: grad,
        beta_fires: false,
        active_set: (0..z.len()).filter(|&i| m[i] <= beta).collect(),
    })
}

/// Rescales `grad_u` to unit norm.
pub fn normalize_gradient(eval: LossEval) -> Result<LossEval> {
    let g = norm(&eval.grad_u);
    if g == 0.0 || !g.is_finite() {
        return Err(Error::ZeroGradient);
    }
    Ok(LossEval {
        grad_u: eval.grad_u.iter().map(|v| v / g).collect(),
        ..eval
    })
}

/// Multiclass complete hinge evaluated on a score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassEval {
    pub risk: f64,
    /// `∂R/∂scores` (n × K).
    pub grad_scores: Array2<f64>,
    pub beta_fires: bool,
    /// Multiclass hinge `(1/n) Σ_i Σ_{y ≠ y_i} max{β − (s_{i,y_i} − s_{i,y}), 0}`.
    pub hinge: f64,
    /// Smallest pairwise margin `s_{i,y_i} − s_{i,y}` over the rows.
    pub min_margin: f64,
}

/// Multiclass complete hinge
/// `(1/n) Σ_i Σ_{y≠y_i} 1[s_{i,y_i} − s_{i,y} ≤ β](s_{i,y} − s_{i,y_i}) − 1[hinge ≤ ζ]·α/(nη)·β`.
///
/// The hinge in the indicator carries the same `1/n`.
pub fn multiclass_complete_hinge(
    scores: ArrayView2<f64>,
    labels: &[usize],
    beta: f64,
    params: &CompleteHinge,
    n: usize,
) -> Result<MulticlassEval> {
    params.validate()?;
    let (rows, classes) = scores.dim();
    if rows != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{rows} score rows but {} labels",
            labels.len()
        )));
    }
    if classes < 2 {
        return Err(Error::ShapeMismatch(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidHyperparameter(
            "normalization n must be positive".into(),
        ));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Array2::zeros((rows, classes));
    let mut first = 0.0;
    let mut hinge = 0.0;
    let mut min_margin = f64::INFINITY;
    for (i, &yi) in labels.iter().enumerate() {
        let correct = scores[[i, yi]];
        for y in (0..classes).filter(|&y| y != yi) {
            let margin = correct - scores[[i, y]];
            min_margin = min_margin.min(margin);
            hinge += (beta - margin).max(0.0);
            if margin <= beta {
                first -= margin;
                grad[[i, y]] += inv_n;
                grad[[i, yi]] -= inv_n;
            }
        }
    }
    let first = first * inv_n;
    let hinge = hinge * inv_n;
    let beta_fires = hinge <= params.zeta;
    let second = if beta_fires {
        params.alpha / (n as f64 * params.eta) * beta
    } else {
        0.0
    };
    Ok(MulticlassEval {
        risk: first - second,
        grad_scores: grad,
        beta_fires,
        hinge,
        min_margin,
    })
}

/// Mean softmax cross-entropy and its gradient with respect to the scores.
pub fn cross_entropy(scores: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (rows, classes) = scores.dim();
    if rows != labels.len() || rows == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{rows} score rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let inv_n = 1.0 / rows as f64;
    let mut grad = Array2::zeros((rows, classes));
    let mut loss = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        let row = scores.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|s| (s - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[yi];
        for c in 0..classes {
            grad[[i, c]] = (row[c] - log_z).exp() * inv_n;
        }
        grad[[i, yi]] -= inv_n;
    }
    Ok((loss * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    use super::*;

    fn fig1() -> Dataset {
        Dataset::from_signed(vec![vec![-1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap()
    }

    fn params() -> CompleteHinge {
        CompleteHinge::new(1.0, 0.01, 0.0).unwrap()
    }

    #[test]
    fn vanilla_examples() {
        assert_eq!(vanilla_hinge(&[0.0, 0.0], &fig1(), 1.0).unwrap().risk, 3.0);
        assert_eq!(vanilla_hinge(&[0.0, 1.0], &fig1(), 0.0).unwrap().risk, 0.0);
        let e = vanilla_hinge(&[0.0, -1.0], &fig1(), 0.0).unwrap();
        assert_eq!(e.risk, 4.0);
        assert_eq!(e.grad_u, vec![-2.0, -4.0]);
    }

    #[test]
    fn complete_examples() {
        let e = complete_hinge(&[0.0, 1.0], &fig1(), 0.0, &params()).unwrap();
        assert_eq!(e.risk, 0.0);
        assert!(e.beta_fires);
        assert!(e.active_set.is_empty());

        // every point sits exactly on the level: all active and the indicator fires
        let e = complete_hinge(&[0.0, 0.0], &fig1(), 0.0, &params()).unwrap();
        assert_eq!(e.active_set, vec![0, 1, 2]);
        assert_eq!(e.grad_u, vec![-2.0, -4.0]);
        assert!(e.beta_fires);
        assert_eq!(e.risk, 0.0);

        // ⟨u, z_1⟩ = 1 = β on the boundary
        let e = complete_hinge(&[0.0, 1.0], &fig1(), 1.0, &params()).unwrap();
        assert_eq!(e.active_set, vec![0, 1]);
        assert!(e.beta_fires);
        assert_abs_diff_eq!(e.risk, -2.0 - 100.0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(CompleteHinge::new(0.0, 0.01, 0.0).is_err());
        assert!(CompleteHinge::new(1.0, 0.0, 0.0).is_err());
        assert!(CompleteHinge::new(1.0, 0.1, -1.0).is_err());
        let bad = CompleteHinge {
            alpha: 1.0,
            eta: -1.0,
            zeta: 0.0,
        };
        assert!(matches!(
            complete_hinge(&[0.0, 0.0], &fig1(), 0.0, &bad),
            Err(Error::InvalidHyperparameter(_))
        ));
    }

    #[test]
    fn series_examples() {
        assert_eq!(
            complete_hinge_series(&[0.0, 0.0], &fig1(), 1.0, 5).unwrap(),
            0.0
        );
        // margins (−3, −3, −6): min < −α, no term fires
        assert_eq!(
            complete_hinge_series(&[0.0, -3.0], &fig1(), 1.0, 5).unwrap(),
            0.0
        );
        assert_eq!(
            complete_hinge_series_term(&[0.0, -3.0], &fig1(), 1.0, 0).unwrap(),
            0.0
        );
        // margins (0.5, 0.5, 1): min in (0, 1], band k = 1 holds every point
        let u = [0.0, 0.5];
        assert_eq!(
            complete_hinge_series_term(&u, &fig1(), 1.0, 1).unwrap(),
            complete_hinge_first_term(&u, &fig1(), 1.0).unwrap()
        );
        assert!(complete_hinge_series(&u, &fig1(), 1.0, 0).is_err());
    }

    #[test]
    fn logistic_examples() {
        let e = logistic(&[0.0, 0.0], &fig1(), 0.0).unwrap();
        assert_abs_diff_eq!(e.risk, 3.0 * 2f64.ln(), epsilon = 1e-15);
        let far = logistic(&[0.0, 1e6], &fig1(), 0.0).unwrap();
        assert_eq!(far.risk, 0.0);
        assert!(far.grad_u.iter().all(|g| g.abs() < 1e-300));
        let neg = logistic(&[0.0, -1e6], &fig1(), 0.0).unwrap();
        assert!(neg.risk.is_finite() && neg.grad_u.iter().all(|g| g.is_finite()));
        assert!(matches!(normalize_gradient(far), Err(Error::ZeroGradient)));
        let n = normalize_gradient(e).unwrap();
        assert_abs_diff_eq!(norm(&n.grad_u), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn multiclass_examples() {
        let p = CompleteHinge::new(1.0, 0.1, 0.0).unwrap();
        let e = multiclass_complete_hinge(array![[2.0, 0.0]].view(), &[0], 1.0, &p, 1).unwrap();
        assert!(e.beta_fires);
        assert_abs_diff_eq!(e.risk, -10.0);
        assert!(e.grad_scores.iter().all(|&g| g == 0.0));

        let e =
            multiclass_complete_hinge(array![[0.0, 0.0, 0.0]].view(), &[0], 1.0, &p, 1).unwrap();
        assert_eq!(e.risk, 0.0);
        assert_eq!(e.hinge, 2.0);
        assert!(!e.beta_fires);
        assert_eq!(e.grad_scores, array![[-2.0, 1.0, 1.0]]);

        let err =
            multiclass_complete_hinge(array![[0.0, 0.0]].view(), &[2], 1.0, &p, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::LabelOutOfRange {
                label: 2,
                classes: 2
            }
        ));
    }

    #[test]
    fn cross_entropy_uniform() {
        let (l, g) = cross_entropy(array![[0.0, 0.0]].view(), &[1]).unwrap();
        assert_abs_diff_eq!(l, 2f64.ln(), epsilon = 1e-15);
        assert_eq!(g, array![[0.5, -0.5]]);
    }

    fn points(d: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), n)
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, u: &[f64], h: f64) -> Vec<f64> {
        (0..u.len())
            .map(|j| {
                let mut up = u.to_vec();
                let mut dn = u.to_vec();
                up[j] += h;
                dn[j] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn logistic_gradient_matches_finite_differences(z in points(3, 6), u in prop::collection::vec(-2.0..2.0f64, 3)) {
            let Ok(data) = Dataset::from_signed(z) else { return Ok(()) };
            let analytic = logistic(&u, &data, 0.0).unwrap().grad_u;
            let numeric = central_diff(|v| logistic(v, &data, 0.0).unwrap().risk, &u, 1e-5);
            for (a, b) in analytic.iter().zip(&numeric) {
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
            }
        }

        #[test]
        fn complete_hinge_gradient_matches_finite_differences(
            z in points(3, 6),
            u in prop::collection::vec(-2.0..2.0f64, 3),
            beta in 0.0..3.0f64,
        ) {
            let Ok(data) = Dataset::from_signed(z) else { return Ok(()) };
            let m = margins(&u, data.signed().unwrap());
            let h = 1e-6;
            // skip points too close to a kink for the difference stencil
            prop_assume!(m.iter().all(|mi| (mi - beta).abs() > 1e-3));
            let p = CompleteHinge::new(1.0, 0.01, 0.0).unwrap();
            let analytic = complete_hinge(&u, &data, beta, &p).unwrap().grad_u;
            let numeric = central_diff(|v| complete_hinge(v, &data, beta, &p).unwrap().risk, &u, h);
            for (a, b) in analytic.iter().zip(&numeric) {
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
            }
        }

        #[test]
        fn fire_is_monotone_in_zeta(
            z in points(2, 5),
            u in prop::collection::vec(-2.0..2.0f64, 2),
            beta in 0.0..2.0f64,
            z1 in 0.0..5.0f64,
            dz in 0.0..5.0f64,
        ) {
            let Ok(data) = Dataset::from_signed(z) else { return Ok(()) };
            let lo = complete_hinge(&u, &data, beta, &CompleteHinge::new(1.0, 0.1, z1).unwrap()).unwrap();
            let hi = complete_hinge(&u, &data, beta, &CompleteHinge::new(1.0, 0.1, z1 + dz).unwrap()).unwrap();
            prop_assert!(!lo.beta_fires || hi.beta_fires);
        }

        #[test]
        fn vanilla_hinge_is_convex(
            z in points(2, 5),
            a in prop::collection::vec(-2.0..2.0f64, 2),
            b in prop::collection::vec(-2.0..2.0f64, 2),
            beta in 0.0..2.0f64,
        ) {
            let Ok(data) = Dataset::from_signed(z) else { return Ok(()) };
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let r = |v: &[f64]| vanilla_hinge(v, &data, beta).unwrap().risk;
            prop_assert!(r(&mid) <= 0.5 * (r(&a) + r(&b)) + 1e-12);
        }

        #[test]
        fn two_class_reduces_to_binary(
            x in points(2, 5),
            signs in prop::collection::vec(any::<bool>(), 5),
            u in prop::collection::vec(-2.0..2.0f64, 2),
            beta in 0.0..2.0f64,
        ) {
            // scores (s, −s) with s = ⟨u, x⟩/2: the class-0 margin is ⟨u, x⟩
            let labels: Vec<usize> = signs.iter().map(|&s| usize::from(!s)).collect();
            let y: Vec<i8> = signs.iter().map(|&s| if s { 1 } else { -1 }).collect();
            let Ok(binary) = Dataset::binary(x.clone(), y) else { return Ok(()) };
            let scores = Array2::from_shape_fn((5, 2), |(i, c)| {
                let s = 0.5 * dot(&u, &x[i]);
                if c == 0 { s } else { -s }
            });
            let n = 5;
            let p = CompleteHinge::new(1.0, 0.1, 0.0).unwrap();
            let multi = multiclass_complete_hinge(scores.view(), &labels, beta, &p, n).unwrap();
            let bin = complete_hinge(&u, &binary, beta, &p).unwrap();
            prop_assert_eq!(multi.beta_fires, bin.beta_fires);
            prop_assert!((multi.risk - bin.risk / n as f64).abs() <= 1e-12 * bin.risk.abs().max(1.0));
        }
    }
}
