//! Two-layer ReLU network with hand-written backpropagation.

pub mod idx;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::{cross_entropy, multiclass_complete_hinge, CompleteHinge};
use crate::optimizer::EXPLOSION_LIMIT;

/// `scores = W2 · relu(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Gradients with the same shapes as [`MlpParams`].
pub type MlpGrads = MlpParams;

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, input)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((classes, hidden)),
            b2: Array1::zeros(classes),
        }
    }

    /// Uniform `(−1/√fan_in, 1/√fan_in)` for every weight and bias.
    pub fn init<R: Rng>(input: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let a1 = 1.0 / (input as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(input, hidden, classes);
        p.w1.mapv_inplace(|_| rng.random_range(-a1..a1));
        p.b1.mapv_inplace(|_| rng.random_range(-a1..a1));
        p.w2.mapv_inplace(|_| rng.random_range(-a2..a2));
        p.b2.mapv_inplace(|_| rng.random_range(-a2..a2));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn classes(&self) -> usize {
        self.w2.nrows()
    }

    fn parts(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    pub fn norm(&self) -> f64 {
        self.parts()
            .iter()
            .flat_map(|p| p.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        crate::linalg::max_abs(&self.parts().concat())
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        self.w1.scaled_add(s, &other.w1);
        self.b1.scaled_add(s, &other.b1);
        self.w2.scaled_add(s, &other.w2);
        self.b2.scaled_add(s, &other.b2);
    }

    fn check(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        let (h, d) = self.w1.dim();
        if self.b1.len() != h || self.w2.ncols() != h || self.b2.len() != self.w2.nrows() {
            return Err(Error::ShapeMismatch("inconsistent parameter shapes".into()));
        }
        if inputs.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "inputs have {} columns, W1 expects {d}",
                inputs.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    /// `b × d`.
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

impl MiniBatch {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() == 0 || inputs.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub scores: Array2<f64>,
}

pub fn forward_full(params: &MlpParams, inputs: ArrayView2<f64>) -> Result<Activations> {
    params.check(&inputs)?;
    let pre = inputs.dot(&params.w1.t()) + &params.b1;
    let hidden = pre.mapv(|v| v.max(0.0));
    let scores = hidden.dot(&params.w2.t()) + &params.b2;
    Ok(Activations {
        pre,
        hidden,
        scores,
    })
}

/// Scores `b × K` for a batch of inputs.
pub fn forward(params: &MlpParams, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(forward_full(params, inputs)?.scores)
}

/// Gradient of `Σ grad_scores ⊙ scores` with respect to every parameter.
/// The ReLU derivative at 0 is taken to be 0.
pub fn backward(
    params: &MlpParams,
    inputs: ArrayView2<f64>,
    grad_scores: ArrayView2<f64>,
) -> Result<MlpGrads> {
    let acts = forward_full(params, inputs)?;
    backward_from(params, inputs, &acts, grad_scores)
}

fn backward_from(
    params: &MlpParams,
    inputs: ArrayView2<f64>,
    acts: &Activations,
    g: ArrayView2<f64>,
) -> Result<MlpGrads> {
    if g.dim() != acts.scores.dim() {
        return Err(Error::ShapeMismatch(format!(
            "grad_scores {:?} vs scores {:?}",
            g.dim(),
            acts.scores.dim()
        )));
    }
    let w2 = g.t().dot(&acts.hidden);
    let b2 = g.sum_axis(Axis(0));
    let mut dpre = g.dot(&params.w2);
    Zip::from(&mut dpre).and(&acts.pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    let w1 = dpre.t().dot(&inputs);
    let b1 = dpre.sum_axis(Axis(0));
    Ok(MlpParams { w1, b1, w2, b2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlpLoss {
    MulticlassCompleteHinge,
    CrossEntropy,
    /// Cross-entropy with the whole gradient rescaled to unit norm.
    CrossEntropyNormalized,
}

impl MlpLoss {
    pub const ALL: [MlpLoss; 3] = [
        Self::MulticlassCompleteHinge,
        Self::CrossEntropy,
        Self::CrossEntropyNormalized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::MulticlassCompleteHinge => "multiclass_complete_hinge",
            Self::CrossEntropy => "cross_entropy",
            Self::CrossEntropyNormalized => "cross_entropy_normalized",
        }
    }
}

impl fmt::Display for MlpLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MlpLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: usize,
    pub eta: f64,
    pub alpha: f64,
    pub zeta: f64,
    pub batch_size: usize,
    pub iters: usize,
    pub seed: u64,
    /// Test error is evaluated every this many steps (and at the end).
    pub eval_every: usize,
    pub loss: MlpLoss,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            eta: 0.1,
            alpha: 10.0,
            zeta: 0.0,
            batch_size: 100,
            iters: 20_000,
            seed: 0,
            eval_every: 500,
            loss: MlpLoss::MulticlassCompleteHinge,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperparameter(msg));
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be non-negative, got {}", self.eta));
        }
        if self.loss == MlpLoss::MulticlassCompleteHinge
            && !(self.alpha > 0.0 && self.alpha.is_finite())
        {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return bad(format!("zeta must be non-negative, got {}", self.zeta));
        }
        if self.hidden == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return bad("hidden, batch_size and eval_every must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpRow {
    pub t: usize,
    pub beta: f64,
    pub norm_params: f64,
    /// Active `(i, y)` pairs of the hinge on the last batch.
    pub active_size: usize,
    /// Loss on the last batch.
    pub risk: f64,
    /// Smallest pairwise score margin on the last batch.
    pub min_margin: f64,
    pub test_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MlpTrace {
    pub rows: Vec<MlpRow>,
    pub beta_update_times: Vec<usize>,
}

impl MlpTrace {
    pub fn final_test_error(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.test_error)
    }

    /// Running minimum of the test error.
    pub fn lowest_test_error(&self) -> Vec<(usize, f64)> {
        let mut best = f64::INFINITY;
        self.rows
            .iter()
            .filter_map(|r| r.test_error.map(|e| (r.t, e)))
            .map(|(t, e)| {
                best = best.min(e);
                (t, best)
            })
            .collect()
    }

    /// Optimizer trace schema plus `test_error`; margin columns stay empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "t,beta,norm_u,margin_gap,cosine_gap,active_size,risk,test_error"
        )?;
        for r in &self.rows {
            let err = r.test_error.map(|e| e.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},,,{},{},{}",
                r.t, r.beta, r.norm_params, r.active_size, r.risk, err
            )?;
        }
        Ok(())
    }
}

fn to_matrix(data: &Dataset) -> (Array2<f64>, Vec<usize>, usize) {
    let (labels, classes) = data.class_labels().expect("multiclass dataset");
    let flat: Vec<f64> = data
        .points()
        .iter()
        .flat_map(|p| p.iter().copied())
        .collect();
    let x = Array2::from_shape_vec((data.len(), data.dim()), flat).expect("rectangular points");
    (x, labels.to_vec(), classes)
}

/// Fraction of misclassified rows (ties go to the lowest class index).
pub fn classification_error(
    params: &MlpParams,
    inputs: ArrayView2<f64>,
    labels: &[usize],
) -> Result<f64> {
    let scores = forward(params, inputs)?;
    let wrong = scores
        .outer_iter()
        .zip(labels)
        .filter(|(row, &y)| {
            let mut arg = 0;
            for (c, &s) in row.iter().enumerate() {
                if s > row[arg] {
                    arg = c;
                }
            }
            arg != y
        })
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Mini-batch SGD with constant step size over seeded epoch reshuffles.
///
/// For the complete hinge the β-fire condition is checked on each batch's
/// own hinge (normalized by the batch size), and β rises by `α` when it fires.
pub fn train_mlp(
    train: &Dataset,
    test: Option<&Dataset>,
    config: &MlpConfig,
) -> Result<(MlpTrace, MlpParams)> {
    config.validate()?;
    let (_, classes) = train.class_labels()?;
    let (x, y, _) = to_matrix(train);
    let test = match test {
        Some(t) => {
            let (_, k) = t.class_labels()?;
            if t.dim() != train.dim() || k != classes {
                return Err(Error::ShapeMismatch(
                    "test set does not match the training set".into(),
                ));
            }
            Some(to_matrix(t))
        }
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MlpParams::init(train.dim(), config.hidden, classes, &mut rng);
    let hinge = CompleteHinge {
        alpha: config.alpha,
        eta: config.eta.max(f64::MIN_POSITIVE),
        zeta: config.zeta,
    };

    let n = train.len();
    let b = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut trace = MlpTrace::default();
    let mut beta = 0.0;
    let eval = |p: &MlpParams| -> Result<Option<f64>> {
        test.as_ref()
            .map(|(tx, ty, _)| classification_error(p, tx.view(), ty))
            .transpose()
    };
    trace.rows.push(MlpRow {
        t: 0,
        beta,
        norm_params: params.norm(),
        active_size: 0,
        risk: f64::NAN,
        min_margin: f64::NAN,
        test_error: eval(&params)?,
    });

    for t in 1..=config.iters {
        if cursor + b > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + b];
        cursor += b;
        let inputs = x.select(Axis(0), idx);
        let labels: Vec<usize> = idx.iter().map(|&i| y[i]).collect();

        let acts = forward_full(&params, inputs.view())?;
        let (risk, grad_scores, fires, active, min_margin) = match config.loss {
            MlpLoss::MulticlassCompleteHinge => {
                let e = multiclass_complete_hinge(acts.scores.view(), &labels, beta, &hinge, b)?;
                let active = e.grad_scores.iter().filter(|&&g| g > 0.0).count();
                (e.risk, e.grad_scores, e.beta_fires, active, e.min_margin)
            }
            MlpLoss::CrossEntropy | MlpLoss::CrossEntropyNormalized => {
                let (l, g) = cross_entropy(acts.scores.view(), &labels)?;
                (l, g, false, 0, pairwise_min_margin(&acts.scores, &labels))
            }
        };
        let mut grads = backward_from(&params, inputs.view(), &acts, grad_scores.view())?;
        if config.loss == MlpLoss::CrossEntropyNormalized {
            let g = grads.norm();
            if g > 0.0 {
                let s = 1.0 / g;
                grads.w1 *= s;
                grads.b1 *= s;
                grads.w2 *= s;
                grads.b2 *= s;
            }
        }
        params.add_scaled(-config.eta, &grads);
        if fires {
            beta += config.alpha;
            trace.beta_update_times.push(t);
        }
        let magnitude = params.max_abs();
        if !(magnitude <= EXPLOSION_LIMIT) {
            return Err(Error::NonFinite { t, magnitude });
        }

        if t % config.eval_every == 0 || t == config.iters {
            trace.rows.push(MlpRow {
                t,
                beta,
                norm_params: params.norm(),
                active_size: active,
                risk,
                min_margin,
                test_error: eval(&params)?,
            });
        }
    }
    Ok((trace, params))
}

fn pairwise_min_margin(scores: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut min = f64::INFINITY;
    for (row, &y) in scores.outer_iter().zip(labels) {
        for (c, &s) in row.iter().enumerate() {
            if c != y {
                min = min.min(row[y] - s);
            }
        }
    }
    min
}
