use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use proptest::prelude::*;
use zhuyi::geometry::{default_rig, in_fov, CameraConfig};
use zhuyi::model::{evaluate_tick, tolerable_latency_with, ActorInput};
use zhuyi::oracle::{collision_check, oracle_best_latency};
use zhuyi::scenario::{predict_trajectories, PredictorConfig};
use zhuyi::scheduler::{allocate, Budget, RateBounds};
use zhuyi::sweep::{sweep_cell, SweepCell};
use zhuyi::{Execution, KinematicState, L0Policy, Trajectory, ZhuyiParams};

fn params() -> ZhuyiParams {
    ZhuyiParams::default()
}

/// Constant-velocity straight-line trajectory sampled every 0.1 s.
fn cruising(start: KinematicState, duration: f64) -> Trajectory {
    let (sin, cos) = start.heading.sin_cos();
    let samples = (0..=(duration * 10.0) as usize)
        .map(|i| {
            let t = i as f64 * 0.1;
            let s = KinematicState { x: start.x + start.v * t * cos, y: start.y + start.v * t * sin, a: 0.0, ..start };
            (t, s)
        })
        .collect();
    Trajectory::new(samples, 1.0).unwrap()
}

fn rotate(s: &KinematicState, theta: f64, dx: f64, dy: f64) -> KinematicState {
    let (sin, cos) = theta.sin_cos();
    KinematicState {
        x: s.x * cos - s.y * sin + dx,
        y: s.x * sin + s.y * cos + dy,
        heading: s.heading + theta,
        ..*s
    }
}

fn actor_state() -> impl Strategy<Value = KinematicState> {
    (-60.0..60.0f64, -30.0..30.0f64, 0.0..30.0f64, -3.0..1.0f64, -PI..PI)
        .prop_map(|(x, y, v, a, h)| KinematicState::new(x, y, v, a, h))
}

fn ego_state() -> impl Strategy<Value = KinematicState> {
    (0.0..30.0f64, -4.0..1.5f64).prop_map(|(v, a)| KinematicState::new(0.0, 0.0, v, a, 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn search_never_beats_the_exhaustive_scan(ego in ego_state(), actor in actor_state(), fixed in any::<bool>()) {
        let p = params();
        let policy = if fixed { L0Policy::Fixed(1.0 / 30.0) } else { L0Policy::EqualsCandidate };
        let traj = cruising(actor, 10.0);
        let est = tolerable_latency_with(&ego, &traj, policy, &p).unwrap();
        let oracle = oracle_best_latency(&ego, &traj, policy, &p).unwrap();
        match (est.latency, oracle.best_latency) {
            (Some(l), Some(o)) => prop_assert!(l <= o + 1e-12, "search {l} > oracle {o}"),
            (Some(l), None) => prop_assert!(false, "search found {l}, scan found nothing"),
            _ => {}
        }
    }

    #[test]
    fn straight_ahead_cells_match_the_scan(s_n in 5.0..150.0f64, ve0 in 0.0..40.0f64, van in 0.0..40.0f64) {
        let p = params();
        let ego = KinematicState::new(0.0, 0.0, ve0, 0.0, 0.0);
        let actor = KinematicState::new(s_n, 0.0, van, 0.0, 0.0);
        let traj = Trajectory::new(vec![(0.0, actor), (p.horizon, actor)], 1.0).unwrap();
        let oracle = oracle_best_latency(&ego, &traj, p.l0_policy, &p).unwrap();
        match sweep_cell(s_n, ve0, van, &p).unwrap() {
            SweepCell::Fpr(f) => {
                let l = oracle.best_latency.expect("scan feasible");
                prop_assert!((f - (1.0 / l).clamp(1.0, 30.0)).abs() < 1e-9);
            }
            _ => prop_assert!(!oracle.feasible),
        }
    }

    #[test]
    fn sweep_is_monotone_in_both_speeds(s_n in 5.0..150.0f64, ve0 in 0.0..38.0f64, van in 0.0..38.0f64, dv in 0.1..2.0f64) {
        let p = params();
        let base = sweep_cell(s_n, ve0, van, &p).unwrap();
        let faster_ego = sweep_cell(s_n, ve0 + dv, van, &p).unwrap();
        let faster_actor = sweep_cell(s_n, ve0, van + dv, &p).unwrap();
        prop_assert_ne!(faster_ego.demand_cmp(&base), Ordering::Less);
        prop_assert_ne!(faster_actor.demand_cmp(&base), Ordering::Greater);
    }

    #[test]
    fn sweep_is_anti_monotone_in_separation(s_n in 5.0..150.0f64, ds in 0.5..20.0f64, ve0 in 0.0..40.0f64, van in 0.0..40.0f64) {
        let p = params();
        let near = sweep_cell(s_n, ve0, van, &p).unwrap();
        let far = sweep_cell(s_n + ds, ve0, van, &p).unwrap();
        prop_assert_ne!(far.demand_cmp(&near), Ordering::Greater);
    }

    #[test]
    fn collisions_only_get_worse_with_latency(
        gap in 3.0..80.0f64, ve0 in 0.0..35.0f64, a0 in -3.0..1.5f64, van in 0.0..20.0f64,
        i in 0usize..29, j in 1usize..30,
    ) {
        let p = params();
        let grid = p.latency_grid();
        let (short, long) = (grid[i.max(j)], grid[i.min(j)]);
        let ego = KinematicState::new(0.0, 0.0, ve0, a0, 0.0);
        let traj = cruising(KinematicState::new(gap, 0.0, van, 0.0, 0.0), 5.0);
        let l0 = 1.0 / 30.0;
        if collision_check(&ego, &traj, short, l0, &p, 2.0) {
            prop_assert!(collision_check(&ego, &traj, long, l0, &p, 2.0));
        }
    }

    #[test]
    fn latency_is_invariant_under_rigid_motion(
        ego in ego_state(), actor in actor_state(),
        theta in -PI..PI, dx in -500.0..500.0f64, dy in -500.0..500.0f64,
    ) {
        let p = params();
        let moved_ego = rotate(&ego, theta, dx, dy);
        let moved_actor = rotate(&actor, theta, dx, dy);
        let a = tolerable_latency_with(&ego, &cruising(actor, 10.0), p.l0_policy, &p).unwrap();
        let b = tolerable_latency_with(&moved_ego, &cruising(moved_actor, 10.0), p.l0_policy, &p).unwrap();
        prop_assert_eq!(a.latency, b.latency);
    }

    #[test]
    fn fov_membership_follows_the_ego_frame(
        actor in actor_state(), theta in -PI..PI, dx in -500.0..500.0f64, dy in -500.0..500.0f64,
    ) {
        let ego = KinematicState::new(0.0, 0.0, 10.0, 0.0, 0.0);
        let moved_ego = rotate(&ego, theta, dx, dy);
        let moved_actor = rotate(&actor, theta, dx, dy);
        for cam in default_rig() {
            // skip bearings within rounding distance of an FOV edge
            let b = (actor.y).atan2(actor.x);
            let edge = (zhuyi::state::normalize_angle(b - cam.azimuth_center).abs() - cam.fov / 2.0).abs();
            prop_assume!(edge > 1e-6);
            prop_assert_eq!(in_fov(&ego, &actor, &cam), in_fov(&moved_ego, &moved_actor, &cam));
        }
    }

    #[test]
    fn full_circle_camera_sees_everything(actor in actor_state(), center in -PI..PI) {
        let cam = CameraConfig::new("all", center, 2.0 * PI).unwrap();
        prop_assert!(in_fov(&KinematicState::at(0.0, 0.0), &actor, &cam));
    }

    #[test]
    fn allocation_respects_budget_and_bounds(
        reqs in prop::collection::vec(0.0..40.0f64, 1..7), budget_scale in 1.0..40.0f64,
    ) {
        let bounds = RateBounds::from_params(&params());
        let n = reqs.len() as f64;
        let budget = n * bounds.floor * budget_scale;
        let required: BTreeMap<String, f64> = reqs.iter().enumerate().map(|(i, r)| (format!("c{i}"), *r)).collect();
        let alloc = allocate(&required, Budget::new(budget).unwrap(), bounds);
        prop_assert!(!alloc.overcommitted);
        prop_assert!(alloc.total() <= budget + 1e-9);
        let clamped: Vec<f64> = reqs.iter().map(|r| r.clamp(bounds.floor, bounds.cap)).collect();
        let fits = clamped.iter().sum::<f64>() <= budget;
        prop_assert_eq!(alloc.alarm.is_none(), fits);
        for ((id, fps), want) in alloc.per_camera_fps.iter().zip(&clamped) {
            prop_assert!(*fps >= bounds.floor - 1e-9 && *fps <= bounds.cap + 1e-9, "{id}: {fps}");
            if fits {
                prop_assert!(*fps >= want - 1e-9);
            }
        }
        if fits {
            // the budget is used up unless every camera is at the cap
            let all_capped = alloc.per_camera_fps.values().all(|f| *f >= bounds.cap - 1e-9);
            prop_assert!(all_capped || (alloc.total() - budget).abs() < 1e-6);
        }
    }

    #[test]
    fn predicted_variants_are_ordered_and_stop_cleanly(actor in actor_state()) {
        let cfg = PredictorConfig::default();
        let trajs = predict_trajectories(&actor, &cfg).unwrap();
        let total: f64 = trajs.iter().map(|t| t.probability()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let travelled = |t: &Trajectory, i: usize| {
            let s = t.samples()[i].1;
            (s.x - actor.x).hypot(s.y - actor.y)
        };
        for t in &trajs {
            for w in t.samples().windows(2) {
                prop_assert!(w[1].1.v >= 0.0);
                prop_assert!((w[1].1.heading - actor.heading).abs() < 1e-12);
            }
            for i in 1..t.samples().len() {
                prop_assert!(travelled(t, i) >= travelled(t, i - 1) - 1e-9);
            }
        }
        for pair in trajs.windows(2) {
            for i in 0..pair[0].samples().len() {
                prop_assert!(travelled(&pair[0], i) <= travelled(&pair[1], i) + 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn parallel_matches_sequential(actors in prop::collection::vec(actor_state(), 0..6), ego in ego_state()) {
        let p = params();
        let inputs: Vec<ActorInput> = actors
            .iter()
            .enumerate()
            .map(|(i, s)| ActorInput {
                id: format!("a{i}"),
                state: *s,
                trajectories: predict_trajectories(s, &PredictorConfig::default()).unwrap(),
                l0: None,
            })
            .collect();
        let rig = default_rig();
        let seq = evaluate_tick(&ego, &inputs, &rig, &p, Execution::Sequential).unwrap();
        let par = evaluate_tick(&ego, &inputs, &rig, &p, Execution::Parallel).unwrap();
        prop_assert_eq!(seq, par);
    }
}
