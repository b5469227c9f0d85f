//! Exact max-margin geometry.
//!
//! The oracle enumerates every linearly independent subset of at most `d`
//! points, takes the minimum-norm solution of `Γu = 1` on it and keeps the
//! shortest feasible `u`. At desk scale (n ≲ 20, d ≤ 4) this is exact and
//! needs no iterative QP solver.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::optimizer::flow::{flow_step, FlowEvent, FlowState};

/// Relative tolerance on `det(PPᵀ) / Π‖p_i‖²` below which rows count as dependent.
const INDEPENDENCE_TOL: f64 = 1e-12;

/// The hyperplane `{x : ⟨normal, x⟩ = level}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    normal: Vec<f64>,
    level: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, level: f64) -> Result<Self> {
        if norm(&normal) == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Self { normal, level })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn level(&self) -> f64 {
        self.level
    }
}

/// The max-margin separator of a dataset together with its support matrix.
#[derive(Debug, Clone)]
pub struct MarginCertificate {
    /// Unit max-margin direction `ū`.
    pub u_bar: Vec<f64>,
    /// Margin `γ = min_i ⟨ū, z_i⟩`.
    pub gamma: f64,
    /// Indices of the support vectors, ascending.
    pub support: Vec<usize>,
    /// Dataset indices of the rows of the support matrix, ascending.
    pub gamma_rows: Vec<usize>,
    /// Support matrix `Γ` (k × d).
    pub gamma_matrix: DMatrix<f64>,
    /// Biorthogonal functionals `Γ†` (d × k) with `ΓΓ† = I`.
    pub gamma_dual: DMatrix<f64>,
    /// Gap between the margin and the closest non-support point,
    /// `min_{z ∉ S} ⟨ū, z⟩ − γ`. `None` when every point is a support vector.
    pub epsilon: Option<f64>,
}

impl MarginCertificate {
    pub fn dim(&self) -> usize {
        self.u_bar.len()
    }

    /// Rank `k` of the support set.
    pub fn rank(&self) -> usize {
        self.gamma_matrix.nrows()
    }

    pub fn is_support(&self, index: usize) -> bool {
        self.support.binary_search(&index).is_ok()
    }

    /// Row `i` of `Γ` as a vector.
    pub fn gamma_row(&self, i: usize) -> Vec<f64> {
        self.gamma_matrix.row(i).iter().copied().collect()
    }

    /// `γ Γ† 1`, which reproduces `ū`.
    pub fn reconstructed_direction(&self) -> Vec<f64> {
        let ones = DVector::from_element(self.rank(), 1.0);
        (&self.gamma_dual * ones * self.gamma)
            .iter()
            .copied()
            .collect()
    }

    /// Burn-in threshold `⌈(γ + ε)/ε⌉` in β-updates, or `fallback` when ε is undefined.
    pub fn burn_in(&self, fallback: usize) -> usize {
        match self.epsilon {
            Some(eps) if eps > 0.0 => ((self.gamma + eps) / eps).ceil() as usize,
            _ => fallback,
        }
    }
}

/// Computes the ℓ2 max-margin separator of a binary dataset.
pub fn solve_max_margin(data: &Dataset) -> Result<MarginCertificate> {
    let z = data.signed()?;
    let dim = data.dim();
    let n = z.len();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for size in 1..=dim.min(n) {
        for subset in (0..n).combinations(size) {
            let Some(u) = min_norm_solution(z, &subset, dim) else {
                continue;
            };
            let feasible = z.iter().all(|zi| dot(&u, zi) >= 1.0 - 1e-9);
            if !feasible {
                continue;
            }
            let sq = dot(&u, &u);
            // Ties within 1e-9 keep the earlier (lexicographically smaller) subset.
            let better = match &best {
                None => true,
                Some((best_sq, _)) => sq < best_sq - 1e-9 * best_sq.max(1.0),
            };
            if better {
                best = Some((sq, u));
            }
        }
    }
    let (sq, u) = best.ok_or(Error::NotSeparable)?;

    let length = sq.sqrt();
    let gamma = 1.0 / length;
    let u_bar: Vec<f64> = u.iter().map(|v| v / length).collect();

    let threshold = gamma + 1e-9 * gamma.max(1.0);
    let margins: Vec<f64> = z.iter().map(|zi| dot(&u_bar, zi)).collect();
    let support: Vec<usize> = (0..n).filter(|&i| margins[i] <= threshold).collect();
    let epsilon = (0..n)
        .filter(|&i| margins[i] > threshold)
        .map(|i| margins[i] - gamma)
        .reduce(f64::min);

    let partial = MarginCertificate {
        u_bar,
        gamma,
        support,
        gamma_rows: Vec::new(),
        gamma_matrix: DMatrix::zeros(0, dim),
        gamma_dual: DMatrix::zeros(dim, 0),
        epsilon,
    };
    select_support_matrix(&partial, data)
}

/// Chooses the support matrix `Γ` of maximal volume among all `k`-subsets
/// of the support set (`k = dim span S`) and fills in `Γ† = Γᵀ(ΓΓᵀ)⁻¹`.
pub fn select_support_matrix(
    cert: &MarginCertificate,
    data: &Dataset,
) -> Result<MarginCertificate> {
    let z = data.signed()?;
    let dim = data.dim();
    if cert.support.is_empty() {
        return Err(Error::DegenerateSupport { rank: 0 });
    }
    if cert.u_bar.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: cert.u_bar.len(),
        });
    }

    let rank = support_rank(z, &cert.support, dim);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in cert.support.iter().copied().combinations(rank) {
        let rows = stack_rows(z, &subset, dim);
        let gram = &rows * rows.transpose();
        let volume_sq = gram.determinant();
        let scale: f64 = subset.iter().map(|&i| dot(&z[i], &z[i])).product();
        if volume_sq <= INDEPENDENCE_TOL * scale {
            continue;
        }
        let better = match &best {
            None => true,
            Some((best_vol, _)) => volume_sq > best_vol * (1.0 + 1e-12),
        };
        if better {
            best = Some((volume_sq, subset));
        }
    }
    let (_, rows) = best.ok_or(Error::DegenerateSupport { rank })?;

    // Orthonormal basis Q of the span (Pᵀ = QR), invert in those coordinates
    // and embed back: Γ† = Pᵀ(PPᵀ)⁻¹ = QR⁻ᵀ, without squaring the conditioning.
    let p = stack_rows(z, &rows, dim);
    let qr = p.transpose().qr();
    let r_inv = qr
        .r()
        .solve_upper_triangular(&DMatrix::identity(rank, rank))
        .ok_or(Error::DegenerateSupport { rank })?;
    let dual = qr.q() * r_inv.transpose();

    Ok(MarginCertificate {
        u_bar: cert.u_bar.clone(),
        gamma: cert.gamma,
        support: cert.support.clone(),
        gamma_rows: rows,
        gamma_matrix: p,
        gamma_dual: dual,
        epsilon: cert.epsilon,
    })
}

/// Inner products `⟨ū, γ_i*⟩` for every biorthogonal functional.
pub fn check_dual_positivity(cert: &MarginCertificate) -> Vec<f64> {
    cert.gamma_dual
        .column_iter()
        .map(|col| col.iter().zip(&cert.u_bar).map(|(a, b)| a * b).sum())
        .collect()
}

/// Projection of `v` onto the orthogonal complement of `u`.
pub fn project_orthogonal(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let uu = dot(u, u);
    if uu == 0.0 {
        return Err(Error::ZeroVector);
    }
    let c = dot(u, v) / uu;
    Ok(v.iter().zip(u).map(|(vi, ui)| vi - c * ui).collect())
}

/// Distance travelled from `u` along the unit direction `mu/‖mu‖` until the
/// hyperplane is reached. Negative when the plane lies behind.
pub fn crossing_length(u: &[f64], mu: &[f64], plane: &Hyperplane) -> Result<f64> {
    let mu_norm = norm(mu);
    if mu_norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let rate = dot(mu, plane.normal()) / mu_norm;
    if rate.abs() < 1e-12 {
        return Err(Error::ParallelDirection);
    }
    Ok((plane.level() - dot(u, plane.normal())) / rate)
}

/// Index (into the rows of `Γ`) of the first support hyperplane at
/// `beta_level` that the gradient flow restricted to `Γ` crosses from `u`.
///
/// Ties between planes reached at the same distance go to the lowest index.
pub fn first_crossed_support(
    u: &[f64],
    cert: &MarginCertificate,
    beta_level: f64,
    max_events: usize,
) -> Result<usize> {
    let rows: Vec<Vec<f64>> = (0..cert.rank()).map(|i| cert.gamma_row(i)).collect();
    let mut state = FlowState::new(u.to_vec(), &rows, beta_level)?;
    for _ in 0..max_events {
        let (next, event) = match flow_step(&state, &rows, 0.0) {
            Ok(step) => step,
            Err(Error::NoPositiveCrossing) => return Err(Error::NoCrossing { budget: max_events }),
            Err(e) => return Err(e),
        };
        match event {
            FlowEvent::Exit { index, .. } => return Ok(index),
            FlowEvent::Enter { .. } => state = next,
            // Every plane is already behind `u`: nothing left to cross at this level.
            FlowEvent::LevelIncrement { .. } => {
                return Err(Error::NoCrossing { budget: max_events })
            }
        }
    }
    Err(Error::NoCrossing { budget: max_events })
}

fn stack_rows(z: &[Vec<f64>], indices: &[usize], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(indices.len(), dim, |r, c| z[indices[r]][c])
}

/// Minimum-norm `u` with `⟨u, z_i⟩ = 1` for `i ∈ subset`, if the rows are independent.
fn min_norm_solution(z: &[Vec<f64>], subset: &[usize], dim: usize) -> Option<Vec<f64>> {
    let p = stack_rows(z, subset, dim);
    let gram = &p * p.transpose();
    let scale: f64 = subset.iter().map(|&i| dot(&z[i], &z[i])).product();
    if gram.determinant() <= INDEPENDENCE_TOL * scale {
        return None;
    }
    let lambda = gram.lu().solve(&DVector::from_element(subset.len(), 1.0))?;
    Some((p.transpose() * lambda).iter().copied().collect())
}

fn support_rank(z: &[Vec<f64>], support: &[usize], dim: usize) -> usize {
    let m = stack_rows(z, support, dim);
    let svd = m.svd(false, false);
    let largest = svd.singular_values.max();
    svd.singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * largest.max(f64::MIN_POSITIVE))
        .count()
}
