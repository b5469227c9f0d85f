//! Named example datasets, a planted-margin generator and CSV I/O.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::dataset::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::geometry::solve_max_margin;
use crate::linalg::{axpy, dot, norm};

pub const BUILTIN_NAMES: [&str; 4] = ["fig1", "fig2a", "fig2b", "fig3"];

/// The small 2-D examples, as signed points with every label `+1`.
pub fn builtin_dataset(name: &str) -> Result<Dataset> {
    let points: &[[f64; 2]] = match name {
        "fig1" => &[[-1.0, 1.0], [1.0, 1.0], [2.0, 2.0]],
        "fig2a" => &[[1.0, 0.0], [0.0, 1.0], [10.0, 5.0]],
        "fig2b" => &[[1.0, 0.0], [0.0, 1.0], [-2.0, 6.0]],
        "fig3" => &[[0.5, 0.5], [-0.125, 0.5], [-2.0, 3.0]],
        other => return Err(Error::UnknownName(other.to_string())),
    };
    Dataset::from_signed(points.iter().map(|p| p.to_vec()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub dim: usize,
    pub n: usize,
    /// Planted margin `γ`.
    pub margin: f64,
    /// Minimum extra margin of the non-support points.
    pub spread: f64,
    pub seed: u64,
    /// Number of support vectors; `dim` when `None`.
    pub support: Option<usize>,
    /// Plant a point that breaks separability.
    pub non_separable: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            dim: 2,
            n: 10,
            margin: 1.0,
            spread: 0.5,
            seed: 0,
            support: None,
            non_separable: false,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparameter(m));
        let k = self.support.unwrap_or(self.dim);
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.n < self.dim {
            return bad(format!(
                "n = {} must be at least dim = {}",
                self.n, self.dim
            ));
        }
        if k == 0 || k > self.n {
            return bad(format!("support count {k} must lie in 1..={}", self.n));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return bad(format!("spread must be non-negative, got {}", self.spread));
        }
        if self.non_separable && k == self.n {
            return bad("a non-separable set needs at least one non-support slot".into());
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 32;

/// Random separable data whose max-margin direction and margin are planted.
///
/// `k` support points `γū + v_i` have offsets `v_i ⊥ ū` with a strictly
/// positive combination `Σ λ_i v_i = 0`, which makes `ū` optimal. The
/// remaining points sit at margin at least `γ + spread`. Every draw is
/// verified with the exact oracle and redrawn on mismatch.
pub fn generate_separable(params: &GeneratorParams) -> Result<Dataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..MAX_ATTEMPTS {
        let data = draw(params, &mut rng)?;
        if verify(&data, params) {
            return Ok(data);
        }
    }
    Err(Error::GenerationFailed {
        attempts: MAX_ATTEMPTS,
    })
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Gaussian vector in the orthogonal complement of the unit vector `u`.
fn orthogonal_gaussian(rng: &mut ChaCha8Rng, u: &[f64]) -> Vec<f64> {
    let mut v = gaussian(rng, u.len());
    let c = dot(&v, u);
    axpy(-c, u, &mut v);
    v
}

fn draw(params: &GeneratorParams, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let d = params.dim;
    let k = params.support.unwrap_or(d);
    let gamma = params.margin;

    let mut u = gaussian(rng, d);
    let len = norm(&u);
    u.iter_mut().for_each(|v| *v /= len);

    // offsets spanning a (k−1)-dimensional subspace of u⊥
    let basis: Vec<Vec<f64>> = (0..k.saturating_sub(1).min(d - 1))
        .map(|_| orthogonal_gaussian(rng, &u))
        .collect();
    let lambdas: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let mut offsets: Vec<Vec<f64>> = (0..k.saturating_sub(1))
        .map(|_| {
            let mut v = vec![0.0; d];
            for b in &basis {
                axpy(rng.sample::<f64, _>(StandardNormal), b, &mut v);
            }
            v
        })
        .collect();
    if k > 1 {
        let mut last = vec![0.0; d];
        for (v, &l) in offsets.iter().zip(&lambdas) {
            axpy(-l / lambdas[k - 1], v, &mut last);
        }
        offsets.push(last);
    } else {
        offsets.push(vec![0.0; d]);
    }

    let mut z: Vec<Vec<f64>> = offsets
        .into_iter()
        .map(|v| {
            let mut s = v;
            axpy(gamma, &u, &mut s);
            s
        })
        .collect();
    while z.len() < params.n {
        let lift = gamma + params.spread + rng.sample::<f64, _>(Exp1);
        let mut p = orthogonal_gaussian(rng, &u);
        axpy(lift, &u, &mut p);
        z.push(p);
    }
    if params.non_separable {
        let flipped = z[0].iter().map(|v| -v).collect();
        let last = z.len() - 1;
        z[last] = flipped;
    }

    let labels: Vec<i8> = (0..params.n)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    let points = z
        .iter()
        .zip(&labels)
        .map(|(zi, &y)| zi.iter().map(|v| v * f64::from(y)).collect())
        .collect();
    Dataset::binary(points, labels)
}

fn verify(data: &Dataset, params: &GeneratorParams) -> bool {
    match solve_max_margin(data) {
        Err(Error::NotSeparable) => params.non_separable,
        Err(_) => false,
        Ok(_) if params.non_separable => false,
        Ok(cert) => {
            let k = params.support.unwrap_or(params.dim);
            (cert.gamma - params.margin).abs() <= 1e-9 * params.margin.max(1.0)
                && cert.support.len() == k
        }
    }
}

/// One example per line, `x1,...,xd,label`, no header.
pub fn write_csv<W: Write>(data: &Dataset, mut w: W) -> Result<()> {
    for (i, p) in data.points().iter().enumerate() {
        let label = match data.labels() {
            Labels::Binary(y) => y[i].to_string(),
            Labels::Multiclass { labels, .. } => labels[i].to_string(),
        };
        let coords: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{label}", coords.join(","))?;
    }
    Ok(())
}

/// Reads the CSV layout of [`write_csv`]. Labels drawn only from `{−1, +1}`
/// give a binary dataset; anything else is multiclass with `max + 1` classes.
pub fn read_csv<R: BufRead>(r: R) -> Result<Dataset> {
    let mut points = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::Parse(format!(
                "line {}: need at least one coordinate and a label",
                lineno + 1
            )));
        }
        let (coords, label) = fields.split_at(fields.len() - 1);
        let x = coords
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let y = label[0]
            .parse::<i64>()
            .map_err(|e| Error::Parse(format!("line {}: label: {e}", lineno + 1)))?;
        points.push(x);
        labels.push(y);
    }
    if labels.iter().all(|&y| y == 1 || y == -1) {
        Dataset::binary(points, labels.into_iter().map(|y| y as i8).collect())
    } else {
        if let Some(&y) = labels.iter().find(|&&y| y < 0) {
            return Err(Error::Parse(format!("negative multiclass label {y}")));
        }
        let classes = labels.iter().max().map_or(0, |&m| m as usize + 1).max(2);
        Dataset::multiclass(
            points,
            labels.into_iter().map(|y| y as usize).collect(),
            classes,
        )
    }
}
