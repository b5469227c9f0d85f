//! Full-batch gradient descent on linear models.

pub mod flow;
pub mod trace;

use std::fmt;
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::diagnostics::{cosine_gap, direction_distance, margin_gap};
use crate::error::{Error, Result};
use crate::geometry::MarginCertificate;
use crate::linalg::{axpy, max_abs, norm};
use crate::losses::{self, CompleteHinge, LossEval};

pub use flow::{flow_step, integrate, FlowEvent, FlowState, Side};
pub use trace::{beta_intervals, BetaUpdate, Trace, TraceRow};

/// Iterates with a coordinate beyond this magnitude abort the run.
pub const EXPLOSION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearLoss {
    CompleteHinge,
    /// Hinge at the fixed level `beta0`.
    VanillaHinge,
    Logistic,
    LogisticNormalized,
}

impl LinearLoss {
    pub const ALL: [LinearLoss; 4] = [
        Self::CompleteHinge,
        Self::VanillaHinge,
        Self::Logistic,
        Self::LogisticNormalized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CompleteHinge => "complete_hinge",
            Self::VanillaHinge => "vanilla_hinge",
            Self::Logistic => "logistic",
            Self::LogisticNormalized => "logistic_normalized",
        }
    }
}

impl fmt::Display for LinearLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinearLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

/// Which iterates end up in [`Trace::rows`]. β-update states are always kept
/// in [`Trace::beta_updates`] regardless.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordSchedule {
    Every(usize),
    /// Every step up to 1000, then every `10^(⌊log10 t⌋ − 2)` steps.
    LogSpaced,
}

impl RecordSchedule {
    pub fn records(self, t: usize) -> bool {
        match self {
            Self::Every(k) => t.is_multiple_of(k.max(1)),
            Self::LogSpaced => {
                if t <= 1000 {
                    return true;
                }
                let stride = 10usize.pow(t.ilog10() - 2);
                t.is_multiple_of(stride)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub alpha: f64,
    pub zeta: f64,
    pub max_iters: usize,
    /// Initial iterate; zero when `None`.
    pub u0: Option<Vec<f64>>,
    /// Initial β (and the fixed level of the vanilla hinge).
    pub beta0: f64,
    pub loss: LinearLoss,
    pub record: RecordSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            alpha: 1.0,
            zeta: 0.0,
            max_iters: 100_000,
            u0: None,
            beta0: 0.0,
            loss: LinearLoss::CompleteHinge,
            record: RecordSchedule::LogSpaced,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hinge_params().validate()?;
        if self.max_iters == 0 {
            return Err(Error::InvalidHyperparameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if let RecordSchedule::Every(0) = self.record {
            return Err(Error::InvalidHyperparameter(
                "record interval must be at least 1".into(),
            ));
        }
        if !self.beta0.is_finite() {
            return Err(Error::InvalidHyperparameter("beta0 must be finite".into()));
        }
        Ok(())
    }

    pub fn hinge_params(&self) -> CompleteHinge {
        CompleteHinge {
            alpha: self.alpha,
            eta: self.eta,
            zeta: self.zeta,
        }
    }

    pub fn initial_state(&self, data: &Dataset) -> Result<TrainState> {
        let u = match &self.u0 {
            Some(u) if u.len() != data.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: data.dim(),
                    found: u.len(),
                })
            }
            Some(u) => u.clone(),
            None => vec![0.0; data.dim()],
        };
        TrainState::new(u, self.beta0, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub t: usize,
    pub u: Vec<f64>,
    pub beta: f64,
    /// `S_t = {i : ⟨u_t, z_i⟩ ≤ β(t)}`.
    pub active_set: Vec<usize>,
}

impl TrainState {
    pub fn new(u: Vec<f64>, beta: f64, data: &Dataset) -> Result<Self> {
        let active_set = losses::vanilla_hinge(&u, data, beta)?.active_set;
        Ok(Self {
            t: 0,
            u,
            beta,
            active_set,
        })
    }
}

fn evaluate(u: &[f64], beta: f64, data: &Dataset, config: &TrainConfig) -> Result<LossEval> {
    match config.loss {
        LinearLoss::CompleteHinge => losses::complete_hinge(u, data, beta, &config.hinge_params()),
        LinearLoss::VanillaHinge => losses::vanilla_hinge(u, data, beta),
        LinearLoss::Logistic => losses::logistic(u, data, beta),
        LinearLoss::LogisticNormalized => {
            let eval = losses::logistic(u, data, beta)?;
            // A vanished gradient leaves the iterate in place.
            losses::normalize_gradient(eval.clone()).or_else(|e| match e {
                Error::ZeroGradient => Ok(eval),
                e => Err(e),
            })
        }
    }
}

/// One simultaneous step of `(u, β)` from the snapshot `(u_t, β_t)`:
/// `u ← u − η·∇_u R` and, for the complete hinge, `β ← β + α·1[hinge ≤ ζ]`.
pub fn gd_step(state: &TrainState, data: &Dataset, config: &TrainConfig) -> Result<TrainState> {
    let eval = evaluate(&state.u, state.beta, data, config)?;
    let mut u = state.u.clone();
    axpy(-config.eta, &eval.grad_u, &mut u);
    let t = state.t + 1;
    let magnitude = max_abs(&u);
    if !(magnitude <= EXPLOSION_LIMIT) {
        return Err(Error::NonFinite { t, magnitude });
    }
    let beta = if config.loss == LinearLoss::CompleteHinge && eval.beta_fires {
        state.beta + config.alpha
    } else {
        state.beta
    };
    let active_set = losses::vanilla_hinge(&u, data, beta)?.active_set;
    Ok(TrainState {
        t,
        u,
        beta,
        active_set,
    })
}

fn record(
    state: &TrainState,
    data: &Dataset,
    config: &TrainConfig,
    cert: Option<&MarginCertificate>,
) -> Result<TraceRow> {
    let risk = evaluate(&state.u, state.beta, data, config)?.risk;
    let norm_u = norm(&state.u);
    let (gap, cos, dist) = match cert {
        Some(c) if norm_u > 0.0 => (
            Some(margin_gap(&state.u, data, c)?),
            Some(cosine_gap(&state.u, c)?),
            Some(direction_distance(&state.u, c)?),
        ),
        _ => (None, None, None),
    };
    Ok(TraceRow {
        t: state.t,
        beta: state.beta,
        norm_u,
        margin_gap: gap,
        cosine_gap: cos,
        direction_distance: dist,
        active_size: state.active_set.len(),
        risk,
        u: state.u.clone(),
    })
}

/// Runs `max_iters` steps of [`gd_step`].
pub fn train(
    data: &Dataset,
    config: &TrainConfig,
    cert: Option<&MarginCertificate>,
) -> Result<Trace> {
    config.validate()?;
    data.signed()?;
    let mut trace = Trace::default();
    if let Some(c) = cert {
        if c.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                found: c.dim(),
            });
        }
        if config.loss == LinearLoss::CompleteHinge && config.alpha <= c.gamma * config.eta {
            let msg = format!(
                "alpha = {} does not exceed gamma * eta = {}; beta may stop updating",
                config.alpha,
                c.gamma * config.eta
            );
            log::warn!("{msg}");
            trace.warnings.push(msg);
        }
    }

    let mut state = config.initial_state(data)?;
    trace.rows.push(record(&state, data, config, cert)?);
    let mut k = 0;
    for _ in 0..config.max_iters {
        let next = gd_step(&state, data, config)?;
        if next.beta > state.beta {
            k += 1;
            trace.beta_updates.push(BetaUpdate {
                k,
                t: next.t,
                beta: next.beta,
                u: next.u.clone(),
                active: next.active_set.clone(),
            });
        }
        state = next;
        if config.record.records(state.t) || state.t == config.max_iters {
            trace.rows.push(record(&state, data, config, cert)?);
        }
    }

    // From u = 0 the very first step always fires, separable or not.
    if config.loss == LinearLoss::CompleteHinge && !trace.beta_updates.iter().any(|b| b.t > 1) {
        let final_hinge = losses::vanilla_hinge(&state.u, data, state.beta)?.risk;
        return Err(Error::NotSeparableSuspected {
            iters: config.max_iters,
            final_hinge,
        });
    }
    Ok(trace)
}
