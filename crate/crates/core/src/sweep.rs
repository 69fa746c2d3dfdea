//! Sensitivity grids over ego and actor speed at a fixed separation.
//!
//! Each cell places a synthetic actor dead ahead whose distance from the
//! ego's starting point stays `s_n` and whose speed stays `v_an`, so the
//! result depends only on `(v_e0, v_an, s_n)`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};
use crate::exec::Execution;
use crate::model::tolerable_latency_with;
use crate::oracle::feasible_latency_scan;
use crate::params::ZhuyiParams;
use crate::state::{KinematicState, Trajectory};

/// Latency used to probe whether a cell is safe at any rate at all.
const INSTANT_LATENCY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub s_n: f64,
    pub ve0_min: f64,
    pub ve0_max: f64,
    pub van_min: f64,
    pub van_max: f64,
    /// Points per axis, at least 2.
    pub steps: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(ZhuyiError::InvalidParam { name, reason: reason.to_string() })
        };
        if !(self.s_n > 0.0 && self.s_n.is_finite()) {
            return bad("s_n", "must be positive");
        }
        if !(self.ve0_min >= 0.0 && self.ve0_max >= self.ve0_min && self.ve0_max.is_finite()) {
            return bad("ve0", "need 0 <= min <= max");
        }
        if !(self.van_min >= 0.0 && self.van_max >= self.van_min && self.van_max.is_finite()) {
            return bad("van", "need 0 <= min <= max");
        }
        if self.steps < 2 {
            return bad("steps", "need at least 2 points per axis");
        }
        Ok(())
    }

    fn axis(min: f64, max: f64, steps: usize) -> Vec<f64> {
        (0..steps).map(|i| min + (max - min) * i as f64 / (steps - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCell {
    Fpr(f64),
    /// Safe only above the highest rate.
    AboveMax,
    /// No rate avoids the collision.
    Infeasible,
}

impl SweepCell {
    /// Total order from least to most demanding.
    pub fn demand_cmp(&self, other: &Self) -> Ordering {
        fn rank(c: &SweepCell) -> (u8, f64) {
            match *c {
                SweepCell::Fpr(f) => (0, f),
                SweepCell::AboveMax => (1, 0.0),
                SweepCell::Infeasible => (2, 0.0),
            }
        }
        let (a, b) = (rank(self), rank(other));
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
    }
}

impl fmt::Display for SweepCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepCell::Fpr(v) => write!(f, "{v:.3}"),
            SweepCell::AboveMax => f.write_str(">30"),
            SweepCell::Infeasible => f.write_str("INFEASIBLE"),
        }
    }
}

fn synthetic(s_n: f64, v_an: f64, horizon: f64) -> Trajectory {
    let actor = KinematicState::new(s_n, 0.0, v_an, 0.0, 0.0);
    Trajectory::new(vec![(0.0, actor), (horizon, actor)], 1.0).expect("two ordered samples")
}

pub fn sweep_cell(s_n: f64, v_e0: f64, v_an: f64, params: &ZhuyiParams) -> Result<SweepCell> {
    let ego = KinematicState::new(0.0, 0.0, v_e0, 0.0, 0.0);
    let traj = synthetic(s_n, v_an, params.horizon);
    let est = tolerable_latency_with(&ego, &traj, params.l0_policy, params)?;
    if est.is_feasible() {
        return Ok(SweepCell::Fpr(est.fpr(params)));
    }
    let l0 = params.l0_policy.l0_for(INSTANT_LATENCY);
    if feasible_latency_scan(&ego, &traj, l0, INSTANT_LATENCY, params)? {
        Ok(SweepCell::AboveMax)
    } else {
        Ok(SweepCell::Infeasible)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub s_n: f64,
    pub ve0: Vec<f64>,
    pub van: Vec<f64>,
    /// `cells[i][j]` is at `(ve0[i], van[j])`.
    pub cells: Vec<Vec<SweepCell>>,
}

impl SweepGrid {
    /// Dense CSV with `v_an` across the top and `v_e0` down the side, m/s.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ve0\\van");
        for v in &self.van {
            out.push_str(&format!(",{v:.4}"));
        }
        out.push('\n');
        for (v, row) in self.ve0.iter().zip(&self.cells) {
            out.push_str(&format!("{v:.4}"));
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn run_sweep(cfg: &SweepConfig, params: &ZhuyiParams, exec: Execution) -> Result<SweepGrid> {
    cfg.validate()?;
    params.validate()?;
    let ve0 = SweepConfig::axis(cfg.ve0_min, cfg.ve0_max, cfg.steps);
    let van = SweepConfig::axis(cfg.van_min, cfg.van_max, cfg.steps);
    let n = van.len();
    let flat = exec.map_range(ve0.len() * n, |k| sweep_cell(cfg.s_n, ve0[k / n], van[k % n], params));
    let flat = flat.into_iter().collect::<Result<Vec<_>>>()?;
    let cells = flat.chunks(n).map(|r| r.to_vec()).collect();
    Ok(SweepGrid { s_n: cfg.s_n, ve0, van, cells })
}
