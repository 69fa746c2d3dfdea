//! Model constants and their validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};

/// How the processing latency at the evaluation instant (`l0`) is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L0Policy {
    /// The system currently runs at this per-frame latency (seconds).
    Fixed(f64),
    /// `l0` tracks the candidate latency, so the confirmation delay vanishes.
    /// Used for steady-state sensitivity sweeps.
    EqualsCandidate,
}

impl L0Policy {
    pub fn l0_for(&self, candidate: f64) -> f64 {
        match *self {
            L0Policy::Fixed(l0) => l0,
            L0Policy::EqualsCandidate => candidate,
        }
    }
}

/// How per-trajectory latencies of one actor collapse into a single value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// Smallest latency over trajectories (highest rate).
    Min,
    Max,
    /// Probability-weighted mean.
    Mean,
    /// Nearest-rank percentile using `ZhuyiParams::percentile`.
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZhuyiParams {
    /// Distance margin applied to the separation.
    pub c1: f64,
    /// Velocity margin applied to the actor's speed.
    pub c2: f64,
    /// Minimum hard-braking deceleration magnitude, m/s².
    pub c3: f64,
    /// Amplification of an existing deceleration during hard braking.
    pub c4: f64,
    /// Frames needed to confirm an actor.
    pub k: u32,
    /// Maximum number of `t_n` adjustments per candidate latency.
    pub m: u32,
    pub l_max: f64,
    pub l_min: f64,
    /// Latency search step.
    pub delta_l: f64,
    /// Percentile `n` in (0, 100] used by [`Aggregator::Percentile`].
    pub percentile: f64,
    pub l0_policy: L0Policy,
    pub aggregator: Aggregator,
    /// Oracle time step; the `t_n` lattice shared by the search and the oracle.
    pub fine_dt: f64,
    /// Largest `t_n` considered.
    pub horizon: f64,
    /// Combined vehicle half-extent subtracted from separations, meters.
    pub extent_margin: f64,
}

impl Default for ZhuyiParams {
    fn default() -> Self {
        Self {
            c1: 0.9,
            c2: 0.9,
            c3: 4.9,
            c4: 1.1,
            k: 5,
            m: 10,
            l_max: 1.0,
            l_min: 1.0 / 30.0,
            delta_l: 1.0 / 30.0,
            percentile: 99.0,
            l0_policy: L0Policy::EqualsCandidate,
            aggregator: Aggregator::Min,
            fine_dt: 0.01,
            horizon: 30.0,
            extent_margin: 0.0,
        }
    }
}

fn check(cond: bool, name: &'static str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(ZhuyiError::InvalidParam { name, reason: reason.to_string() })
    }
}

impl ZhuyiParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.c1, self.c2, self.c3, self.c4, self.l_max, self.l_min, self.delta_l,
            self.percentile, self.fine_dt, self.horizon, self.extent_margin,
        ]
        .iter()
        .all(|v| v.is_finite());
        check(finite, "params", "all values must be finite")?;
        check(self.c1 > 0.0 && self.c1 <= 1.0, "c1", "must be in (0, 1]")?;
        check(self.c2 > 0.0 && self.c2 <= 1.0, "c2", "must be in (0, 1]")?;
        check(self.c3 > 0.0, "c3", "must be positive")?;
        check(self.c4 >= 1.0, "c4", "must be >= 1")?;
        check(self.m >= 1, "m", "must be >= 1")?;
        check(self.l_min > 0.0 && self.l_min <= self.l_max, "l_min", "need 0 < l_min <= l_max")?;
        check(self.delta_l > 0.0, "delta_l", "must be positive")?;
        check(
            self.percentile > 0.0 && self.percentile <= 100.0,
            "percentile",
            "must be in (0, 100]",
        )?;
        check(self.fine_dt > 0.0, "fine_dt", "must be positive")?;
        check(self.horizon > self.l_max, "horizon", "must exceed l_max")?;
        check(self.extent_margin >= 0.0, "extent_margin", "must be >= 0")?;
        if let L0Policy::Fixed(l0) = self.l0_policy {
            check(l0.is_finite() && l0 > 0.0, "l0_policy", "fixed l0 must be positive")?;
        }
        Ok(())
    }

    /// Candidate latencies, descending from `l_max` in steps of `delta_l`,
    /// down to the last value not below `l_min`. Values are formed as
    /// `(l_max * r - i) / r` with `r = 1 / delta_l`, so whole rates invert
    /// exactly (`1 / 0.2 == 5`).
    pub fn latency_grid(&self) -> Vec<f64> {
        let steps = ((self.l_max - self.l_min) / self.delta_l + 1e-9).floor() as usize;
        let r = 1.0 / self.delta_l;
        let top = self.l_max * r;
        (0..=steps).map(|i| (top - i as f64) / r).collect()
    }

    /// `L`, the number of latency steps used in compute-demand estimates.
    pub fn latency_steps(&self) -> u64 {
        (self.l_max / self.delta_l).round() as u64
    }

    /// Lowest rate the model ever reports, `1 / l_max`.
    pub fn min_fpr(&self) -> f64 {
        1.0 / self.l_max
    }

    /// Highest rate the model ever reports, `1 / l_min`.
    pub fn max_fpr(&self) -> f64 {
        1.0 / self.l_min
    }

    /// Parses a key-value params document; JSON when the path ends in
    /// `.json`, TOML otherwise. Absent keys take defaults.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let params: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        params.validate()?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_give_thirty_steps() {
        let p = ZhuyiParams::default();
        p.validate().unwrap();
        assert_eq!(p.latency_steps(), 30);
        let grid = p.latency_grid();
        assert_eq!(grid.len(), 30);
        assert_eq!(grid[0], 1.0);
        assert!((grid[29] - 1.0 / 30.0).abs() < 1e-12);
        assert!(grid.windows(2).all(|w| w[0] > w[1]));
        let rates: Vec<f64> = grid.iter().map(|l| 1.0 / l).collect();
        for whole in [1.0, 2.0, 3.0, 5.0, 6.0, 10.0, 15.0, 30.0] {
            assert!(rates.contains(&whole), "{whole}");
        }
    }

    #[test]
    fn rejects_out_of_range_values() {
        let bad = [
            ZhuyiParams { c1: 0.0, ..Default::default() },
            ZhuyiParams { c2: 1.5, ..Default::default() },
            ZhuyiParams { c4: 0.9, ..Default::default() },
            ZhuyiParams { m: 0, ..Default::default() },
            ZhuyiParams { l_min: 2.0, ..Default::default() },
            ZhuyiParams { horizon: 0.5, ..Default::default() },
            ZhuyiParams { l0_policy: L0Policy::Fixed(0.0), ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn partial_documents_take_defaults() {
        let p: ZhuyiParams = toml::from_str("k = 3\nl0_policy = { fixed = 0.1 }\n").unwrap();
        assert_eq!(p.k, 3);
        assert_eq!(p.l0_policy, L0Policy::Fixed(0.1));
        assert_eq!(p.c1, 0.9);
        let p: ZhuyiParams =
            serde_json::from_str(r#"{"l0_policy":"equals_candidate","aggregator":"percentile"}"#)
                .unwrap();
        assert_eq!(p.aggregator, Aggregator::Percentile);
        assert!(toml::from_str::<ZhuyiParams>("bogus = 1").is_err());
    }
}
