//! Online consumers of the per-camera requirements: safety checks with
//! alarms, budgeted rate allocation and actor importance ranking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};
use crate::model::{LatencyEstimate, TickEstimate};
use crate::params::ZhuyiParams;
use crate::ActorId;

/// Total frames per second shared by all cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub total_fps: f64,
}

impl Budget {
    pub fn new(total_fps: f64) -> Result<Self> {
        if !(total_fps > 0.0 && total_fps.is_finite()) {
            return Err(ZhuyiError::InvalidParam {
                name: "budget",
                reason: format!("{total_fps} must be positive"),
            });
        }
        Ok(Self { total_fps })
    }
}

/// Per-camera rate limits, `[1 / l_max, 1 / l_min]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub floor: f64,
    pub cap: f64,
}

impl RateBounds {
    pub fn from_params(params: &ZhuyiParams) -> Self {
        Self { floor: params.min_fpr(), cap: params.max_fpr() }
    }

    fn clamp(&self, fps: f64) -> f64 {
        fps.clamp(self.floor, self.cap)
    }
}

/// A camera's required rate and whether it came from an infeasible actor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub fps: f64,
    pub infeasible: bool,
}

impl Requirement {
    pub fn feasible(fps: f64) -> Self {
        Self { fps, infeasible: false }
    }
}

pub fn requirements(estimate: &TickEstimate) -> BTreeMap<String, Requirement> {
    estimate
        .cameras
        .iter()
        .map(|(id, c)| (id.clone(), Requirement { fps: c.fpr, infeasible: c.infeasible }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Deficit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraShortfall {
    pub camera: String,
    pub required: f64,
    pub operating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub cameras_below: Vec<CameraShortfall>,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub per_camera_fps: BTreeMap<String, f64>,
    pub alarm: Option<AlarmEvent>,
    /// The budget could not cover every camera's floor rate, so the
    /// allocation exceeds it.
    pub overcommitted: bool,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.per_camera_fps.values().sum()
    }
}

/// Alarm listing every camera operating below its requirement, plus every
/// camera whose requirement is infeasible. `None` when all cameras pass.
pub fn safety_check(
    required: &BTreeMap<String, Requirement>,
    operating: &BTreeMap<String, f64>,
) -> Result<Option<AlarmEvent>> {
    if !required.keys().eq(operating.keys()) {
        let req: Vec<&String> = required.keys().collect();
        let op: Vec<&String> = operating.keys().collect();
        return Err(ZhuyiError::KeyMismatch(format!("required {req:?} vs operating {op:?}")));
    }
    let below: Vec<CameraShortfall> = required
        .iter()
        .zip(operating.values())
        .filter(|((_, r), &op)| r.infeasible || op < r.fps)
        .map(|((id, r), &op)| CameraShortfall { camera: id.clone(), required: r.fps, operating: op })
        .collect();
    if below.is_empty() {
        return Ok(None);
    }
    let severity = if required.values().any(|r| r.infeasible) {
        Severity::Infeasible
    } else {
        Severity::Deficit
    };
    Ok(Some(AlarmEvent { cameras_below: below, severity }))
}

/// Splits `budget` over the cameras.
///
/// Requirements are first clamped to `bounds`. When they fit, each camera
/// gets its requirement and the slack is water-filled in proportion to the
/// requirements: every camera ends at `min(cap, λ × required)` for the
/// largest common `λ ≥ 1` the budget allows. When they do not fit, every
/// camera gets the floor rate, the rest goes to cameras in descending order
/// of requirement (ties by id) and a deficit alarm is attached.
pub fn allocate(required: &BTreeMap<String, f64>, budget: Budget, bounds: RateBounds) -> Allocation {
    let req: BTreeMap<&String, f64> = required.iter().map(|(k, &v)| (k, bounds.clamp(v))).collect();
    let total: f64 = req.values().sum();
    if total <= budget.total_fps {
        let mut alloc: BTreeMap<String, f64> = req.iter().map(|(k, &v)| ((*k).clone(), v)).collect();
        loop {
            let slack = budget.total_fps - alloc.values().sum::<f64>();
            let open: Vec<&String> = req.keys().copied().filter(|k| alloc[*k] < bounds.cap).collect();
            if slack <= 1e-12 || open.is_empty() {
                break;
            }
            let weight: f64 = open.iter().map(|k| req[*k]).sum();
            let mut clipped = false;
            for k in open {
                let x = alloc.get_mut(k).expect("known camera");
                let grown = *x + slack * req[k] / weight;
                clipped |= grown >= bounds.cap;
                *x = grown.min(bounds.cap);
            }
            if !clipped {
                break;
            }
        }
        return Allocation { per_camera_fps: alloc, alarm: None, overcommitted: false };
    }

    let mut alloc: BTreeMap<String, f64> = req.keys().map(|k| ((*k).clone(), bounds.floor)).collect();
    let mut remaining = budget.total_fps - bounds.floor * req.len() as f64;
    let overcommitted = remaining < 0.0;
    let mut order: Vec<(&String, f64)> = req.iter().map(|(k, &v)| (*k, v)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    for (id, want) in order {
        if remaining <= 0.0 {
            break;
        }
        let extra = (want - bounds.floor).min(remaining);
        *alloc.get_mut(id).expect("known camera") += extra;
        remaining -= extra;
    }
    let cameras_below: Vec<CameraShortfall> = req
        .iter()
        .filter(|(k, &want)| alloc[**k] < want)
        .map(|(k, &want)| CameraShortfall { camera: (*k).clone(), required: want, operating: alloc[*k] })
        .collect();
    let alarm = Some(AlarmEvent { cameras_below, severity: Severity::Deficit });
    Allocation { per_camera_fps: alloc, alarm, overcommitted }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorRank {
    pub actor: ActorId,
    /// `1 / latency`; `1 / l_min` for infeasible actors.
    pub importance: f64,
    /// Set for infeasible actors, whose true importance has no bound.
    pub unbounded: bool,
}

/// Actors by descending importance, infeasible ones first, ties by id.
pub fn rank_actors(latencies: &BTreeMap<ActorId, LatencyEstimate>, params: &ZhuyiParams) -> Vec<ActorRank> {
    let mut ranks: Vec<ActorRank> = latencies
        .iter()
        .map(|(id, e)| match e.latency {
            Some(l) => ActorRank { actor: id.clone(), importance: 1.0 / l, unbounded: false },
            None => ActorRank { actor: id.clone(), importance: params.max_fpr(), unbounded: true },
        })
        .collect();
    ranks.sort_by(|a, b| {
        b.unbounded
            .cmp(&a.unbounded)
            .then_with(|| b.importance.total_cmp(&a.importance))
            .then_with(|| a.actor.cmp(&b.actor))
    });
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fps(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn req(pairs: &[(&str, f64)]) -> BTreeMap<String, Requirement> {
        pairs.iter().map(|(k, v)| (k.to_string(), Requirement::feasible(*v))).collect()
    }

    fn bounds() -> RateBounds {
        RateBounds::from_params(&ZhuyiParams::default())
    }

    /// Independent water level: bisection on λ with `min(cap, λ r)`.
    fn reference_fill(required: &[f64], budget: f64, cap: f64) -> Vec<f64> {
        let fill = |lam: f64| required.iter().map(|r| (lam * r).min(cap)).collect::<Vec<_>>();
        let (mut lo, mut hi) = (1.0, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fill(mid).iter().sum::<f64>() <= budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        fill(lo)
    }

    #[test]
    fn safety_check_examples() {
        let r = req(&[("f", 7.0), ("l", 2.0), ("r", 2.0)]);
        assert_eq!(safety_check(&r, &fps(&[("f", 10.0), ("l", 5.0), ("r", 5.0)])).unwrap(), None);
        let alarm = safety_check(&r, &fps(&[("f", 5.0), ("l", 5.0), ("r", 5.0)])).unwrap().unwrap();
        assert_eq!(
            alarm.cameras_below,
            vec![CameraShortfall { camera: "f".into(), required: 7.0, operating: 5.0 }]
        );
        assert_eq!(alarm.severity, Severity::Deficit);
        assert_eq!(safety_check(&r, &fps(&[("f", 7.0), ("l", 2.0), ("r", 2.0)])).unwrap(), None);
        assert!(matches!(
            safety_check(&r, &fps(&[("f", 7.0), ("l", 2.0)])),
            Err(ZhuyiError::KeyMismatch(_))
        ));
    }

    #[test]
    fn infeasible_requirement_raises_infeasible_alarm() {
        let mut r = req(&[("f", 30.0), ("l", 1.0)]);
        r.get_mut("f").unwrap().infeasible = true;
        let alarm = safety_check(&r, &fps(&[("f", 30.0), ("l", 1.0)])).unwrap().unwrap();
        assert_eq!(alarm.severity, Severity::Infeasible);
        assert_eq!(alarm.cameras_below.len(), 1);
    }

    #[test]
    fn slack_is_water_filled_under_the_cap() {
        let a = allocate(&fps(&[("f", 10.0), ("l", 5.0), ("r", 5.0)]), Budget::new(90.0).unwrap(), bounds());
        let expect = reference_fill(&[10.0, 5.0, 5.0], 90.0, 30.0);
        for (got, want) in a.per_camera_fps.values().zip([expect[0], expect[1], expect[2]]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((a.per_camera_fps["f"] - 30.0).abs() < 1e-9);
        assert!(a.alarm.is_none());

        let a = allocate(&fps(&[("f", 10.0), ("l", 5.0), ("r", 5.0)]), Budget::new(40.0).unwrap(), bounds());
        let expect = reference_fill(&[10.0, 5.0, 5.0], 40.0, 30.0);
        assert!((a.per_camera_fps["f"] - expect[0]).abs() < 1e-9);
        assert!((a.per_camera_fps["f"] - 20.0).abs() < 1e-9);

        let a = allocate(&fps(&[("f", 1.0), ("l", 1.0), ("r", 1.0)]), Budget::new(90.0).unwrap(), bounds());
        assert!(a.per_camera_fps.values().all(|&v| (v - 30.0).abs() < 1e-9));
    }

    #[test]
    fn deficit_grants_floors_then_priority() {
        let a = allocate(&fps(&[("f", 20.0), ("l", 20.0), ("r", 20.0)]), Budget::new(30.0).unwrap(), bounds());
        assert!((a.total() - 30.0).abs() < 1e-9);
        assert_eq!(a.per_camera_fps["f"], 20.0);
        assert_eq!(a.per_camera_fps["l"], 9.0);
        assert_eq!(a.per_camera_fps["r"], 1.0);
        let alarm = a.alarm.unwrap();
        assert_eq!(alarm.severity, Severity::Deficit);
        assert_eq!(alarm.cameras_below.len(), 2);
        assert!(!a.overcommitted);
    }

    #[test]
    fn starved_budget_still_grants_floors() {
        let a = allocate(&fps(&[("a", 5.0), ("b", 2.0), ("c", 1.0), ("d", 1.0)]), Budget::new(3.0).unwrap(), bounds());
        assert!(a.overcommitted);
        assert!(a.per_camera_fps.values().all(|&v| v == 1.0));
        assert!(a.alarm.is_some());
    }

    #[test]
    fn rank_examples() {
        let p = ZhuyiParams::default();
        let est = |l: Option<f64>| LatencyEstimate { latency: l, t_n_witness: None, binding_trajectory: 0 };
        let m: BTreeMap<ActorId, LatencyEstimate> =
            [("a".to_string(), est(Some(0.2))), ("b".to_string(), est(Some(1.0)))].into_iter().collect();
        let r = rank_actors(&m, &p);
        assert_eq!((r[0].actor.as_str(), r[1].actor.as_str()), ("a", "b"));
        assert!((r[0].importance - 5.0).abs() < 1e-12 && r[1].importance == 1.0);

        let m: BTreeMap<ActorId, LatencyEstimate> =
            ["c", "a", "b"].iter().map(|id| (id.to_string(), est(Some(0.5)))).collect();
        let ids: Vec<String> = rank_actors(&m, &p).into_iter().map(|r| r.actor).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);

        let m: BTreeMap<ActorId, LatencyEstimate> =
            [("a".to_string(), est(None)), ("b".to_string(), est(Some(0.05)))].into_iter().collect();
        let r = rank_actors(&m, &p);
        assert_eq!(r[0].actor, "a");
        assert!(r[0].unbounded);
    }
}
