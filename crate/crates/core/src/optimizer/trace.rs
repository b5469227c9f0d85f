use std::io::Write;

use crate::error::{Error, Result};

/// One recorded iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub beta: f64,
    pub norm_u: f64,
    pub margin_gap: Option<f64>,
    pub cosine_gap: Option<f64>,
    pub direction_distance: Option<f64>,
    pub active_size: usize,
    pub risk: f64,
    pub u: Vec<f64>,
}

/// The state right after the `k`-th β increment (`β(t_k) = kα` from `β = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct BetaUpdate {
    pub k: usize,
    pub t: usize,
    pub beta: f64,
    pub u: Vec<f64>,
    /// Active set `S_{t_k}`.
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub beta_updates: Vec<BetaUpdate>,
    pub warnings: Vec<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Trace {
    pub fn row_at(&self, t: usize) -> Option<&TraceRow> {
        self.rows
            .binary_search_by_key(&t, |r| r.t)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// `(t, value)` pairs for a named column, skipping empty fields.
    pub fn column(&self, name: &str) -> Result<Vec<(usize, f64)>> {
        let get: fn(&TraceRow) -> Option<f64> = match name {
            "beta" => |r| Some(r.beta),
            "norm_u" => |r| Some(r.norm_u),
            "margin_gap" => |r| r.margin_gap,
            "cosine_gap" => |r| r.cosine_gap,
            "direction_distance" => |r| r.direction_distance,
            "active_size" => |r| Some(r.active_size as f64),
            "risk" => |r| Some(r.risk),
            other => return Err(Error::UnknownName(other.to_string())),
        };
        Ok(self
            .rows
            .iter()
            .filter_map(|r| get(r).map(|v| (r.t, v)))
            .collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,beta,norm_u,margin_gap,cosine_gap,active_size,risk")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.t,
                r.beta,
                r.norm_u,
                opt(r.margin_gap),
                opt(r.cosine_gap),
                r.active_size,
                r.risk
            )?;
        }
        Ok(())
    }

    /// `k,t_k,gap` with an empty gap for the first update.
    pub fn write_beta_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,t_k,gap")?;
        let mut prev: Option<usize> = None;
        for b in &self.beta_updates {
            let gap = prev.map(|p| (b.t - p).to_string()).unwrap_or_default();
            writeln!(w, "{},{},{}", b.k, b.t, gap)?;
            prev = Some(b.t);
        }
        Ok(())
    }

    /// Iterates as `t,u1,...,ud`.
    pub fn write_iterates<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rows {
            let coords: Vec<String> = r.u.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", r.t, coords.join(","))?;
        }
        Ok(())
    }
}

/// Consecutive gaps `(k, t_k − t_{k−1})` between β updates.
pub fn beta_intervals(trace: &Trace) -> Result<Vec<(usize, usize)>> {
    let updates = &trace.beta_updates;
    if updates.len() < 2 {
        return Err(Error::InsufficientUpdates {
            found: updates.len(),
        });
    }
    Ok(updates
        .windows(2)
        .map(|w| (w[1].k, w[1].t - w[0].t))
        .collect())
}
