//! Event-driven integration of the complete-hinge gradient flow.
//!
//! Between events the flow moves in a straight line along
//! `μ = Σ_i w_i z_i`, where `w_i = 1` for points strictly below the current
//! level, `w_i = 0` for points strictly above it, and points sitting on their
//! plane get Filippov weights in `[0, 1]`. Each [`flow_step`] jumps straight
//! to the next event: a point reaching its plane, or the level rising by `α`
//! once nothing is left below it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

/// Rates `|⟨μ̂, z⟩|` below this are treated as parallel motion.
const PARALLEL_TOL: f64 = 1e-12;

/// Relative tolerance for calling a point "on" its plane after a jump.
const ON_PLANE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    On,
    Above,
}

/// Position of the flow plus the current level and per-point weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Vec<f64>,
    pub level: f64,
    pub sides: Vec<Side>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowEvent {
    /// Point `index` reached its plane from below after travelling `length`.
    Exit { index: usize, length: f64 },
    /// Point `index` reached its plane from above after travelling `length`.
    Enter { index: usize, length: f64 },
    /// Nothing was left below the plane; the level rose to `level`.
    LevelIncrement { level: f64 },
}

impl FlowEvent {
    pub fn length(&self) -> f64 {
        match *self {
            FlowEvent::Exit { length, .. } | FlowEvent::Enter { length, .. } => length,
            FlowEvent::LevelIncrement { .. } => 0.0,
        }
    }
}

impl FlowState {
    pub fn new(u: Vec<f64>, points: &[Vec<f64>], level: f64) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.len() != u.len()) {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                found: p.len(),
            });
        }
        let sides = points
            .iter()
            .map(|z| {
                let m = dot(&u, z);
                if m < level {
                    Side::Below
                } else if m > level {
                    Side::Above
                } else {
                    Side::On
                }
            })
            .collect();
        let mut state = Self {
            u,
            level,
            sides,
            weights: vec![0.0; points.len()],
        };
        state.resolve_weights(points);
        Ok(state)
    }

    /// Current flow direction `μ = Σ w_i z_i`.
    pub fn direction(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let mut mu = vec![0.0; self.u.len()];
        for (z, &w) in points.iter().zip(&self.weights) {
            if w != 0.0 {
                axpy(w, z, &mut mu);
            }
        }
        mu
    }

    /// Filippov weights for the points on their plane.
    ///
    /// They minimise `‖μ_fixed + Σ_{j on} w_j z_j‖²` over `[0, 1]`, which is
    /// exactly the condition that each on-plane point either leaves upward
    /// (`w = 0`), is pushed down (`w = 1`), or slides along its plane.
    /// Afterwards points pushed strictly off the plane change side.
    fn resolve_weights(&mut self, points: &[Vec<f64>]) {
        let dim = self.u.len();
        let mut base = vec![0.0; dim];
        let mut on = Vec::new();
        for (i, side) in self.sides.iter().enumerate() {
            match side {
                Side::Below => {
                    self.weights[i] = 1.0;
                    axpy(1.0, &points[i], &mut base);
                }
                Side::Above => self.weights[i] = 0.0,
                Side::On => on.push(i),
            }
        }
        if on.is_empty() {
            return;
        }
        let w = box_least_squares(&base, points, &on);
        for (&i, &wi) in on.iter().zip(&w) {
            self.weights[i] = wi;
        }

        let mu = self.direction(points);
        let scale = norm(&mu).max(1.0);
        for &i in &on {
            let rate = dot(&mu, &points[i]);
            let tol = 1e-10 * scale * norm(&points[i]);
            // a fully weighted point still pushed down is below from here on
            if self.weights[i] == 1.0 && rate < -tol {
                self.sides[i] = Side::Below;
            } else if self.weights[i] == 0.0 && rate > tol {
                self.sides[i] = Side::Above;
            }
        }
    }
}

/// Projected coordinate descent for `min_{w ∈ [0,1]^m} ‖base + Σ w_j z_j‖²`,
/// followed by an exact solve on the free coordinates.
fn box_least_squares(base: &[f64], points: &[Vec<f64>], on: &[usize]) -> Vec<f64> {
    let m = on.len();
    let gram = DMatrix::from_fn(m, m, |a, b| dot(&points[on[a]], &points[on[b]]));
    let lin = DVector::from_fn(m, |a, _| dot(base, &points[on[a]]));
    let grad = |w: &DVector<f64>, a: usize| lin[a] + (gram.row(a) * w)[0];

    let mut w = DVector::<f64>::zeros(m);
    for _ in 0..10_000 {
        let mut change = 0.0_f64;
        for a in 0..m {
            let g = grad(&w, a);
            let next = (w[a] - g / gram[(a, a)]).clamp(0.0, 1.0);
            change = change.max((next - w[a]).abs());
            w[a] = next;
        }
        if change < 1e-15 {
            break;
        }
    }

    // Polish the free coordinates so sliding rates vanish to rounding.
    let free: Vec<usize> = (0..m).filter(|&a| w[a] > 0.0 && w[a] < 1.0).collect();
    if !free.is_empty() {
        let sub = DMatrix::from_fn(free.len(), free.len(), |a, b| gram[(free[a], free[b])]);
        let rhs = DVector::from_fn(free.len(), |a, _| {
            let fa = free[a];
            let fixed: f64 = (0..m)
                .filter(|b| !free.contains(b))
                .map(|b| gram[(fa, b)] * w[b])
                .sum();
            -(lin[fa] + fixed)
        });
        if let Some(sol) = sub.lu().solve(&rhs) {
            if sol.iter().all(|&v| (0.0..=1.0).contains(&v)) {
                for (a, &fa) in free.iter().enumerate() {
                    w[fa] = sol[a];
                }
            }
        }
    }
    w.iter().copied().collect()
}

/// Advances the flow to its next event.
///
/// The event point is snapped onto its plane after the jump. When every
/// weight is zero the level rises by `alpha` and the state is rebuilt.
pub fn flow_step(
    state: &FlowState,
    points: &[Vec<f64>],
    alpha: f64,
) -> Result<(FlowState, FlowEvent)> {
    let mu = state.direction(points);
    let mu_norm = norm(&mu);
    if mu_norm == 0.0 {
        if !(alpha > 0.0) {
            return Err(Error::NoPositiveCrossing);
        }
        let level = state.level + alpha;
        let next = FlowState::new(state.u.clone(), points, level)?;
        return Ok((next, FlowEvent::LevelIncrement { level }));
    }
    let mu_hat: Vec<f64> = mu.iter().map(|v| v / mu_norm).collect();

    let mut best: Option<(f64, usize, bool)> = None;
    for (i, z) in points.iter().enumerate() {
        let rate = dot(&mu_hat, z);
        if rate.abs() < PARALLEL_TOL {
            continue;
        }
        let exit = match state.sides[i] {
            Side::Below if rate > 0.0 => true,
            Side::Above if rate < 0.0 => false,
            _ => continue,
        };
        let length = ((state.level - dot(&state.u, z)) / rate).max(0.0);
        if best.is_none_or(|(l, _, _)| length < l) {
            best = Some((length, i, exit));
        }
    }
    let (length, index, exit) = best.ok_or(Error::NoPositiveCrossing)?;

    let mut u = state.u.clone();
    axpy(length, &mu_hat, &mut u);
    let z = &points[index];
    axpy((state.level - dot(&u, z)) / dot(z, z), z, &mut u);

    let mut sides = state.sides.clone();
    sides[index] = Side::On;
    // other points reached at the same moment land on their planes too
    for (i, p) in points.iter().enumerate() {
        let gap = dot(&u, p) - state.level;
        if i != index && gap.abs() <= ON_PLANE_TOL * state.level.abs().max(1.0) * norm(p).max(1.0) {
            sides[i] = Side::On;
        }
    }
    let mut next = FlowState {
        u,
        level: state.level,
        sides,
        weights: state.weights.clone(),
    };
    next.resolve_weights(points);
    let event = if exit {
        FlowEvent::Exit { index, length }
    } else {
        FlowEvent::Enter { index, length }
    };
    Ok((next, event))
}

/// Runs [`flow_step`] from `u` at `level` for `events` steps.
pub fn integrate(
    u: Vec<f64>,
    points: &[Vec<f64>],
    level: f64,
    alpha: f64,
    events: usize,
) -> Result<Vec<(FlowState, FlowEvent)>> {
    let mut state = FlowState::new(u, points, level)?;
    let mut out = Vec::with_capacity(events);
    for _ in 0..events {
        let (next, event) = flow_step(&state, points, alpha)?;
        out.push((next.clone(), event));
        state = next;
    }
    Ok(out)
}
