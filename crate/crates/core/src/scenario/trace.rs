//! Line-delimited scenario trace files.
//!
//! The first line is a header object `{dt, cameras, metadata}`; every other
//! non-blank line is one tick `{t, ego, actors}` with actors keyed by id.
//! Numbers are written in shortest round-trip form, so `save(load(x))` is a
//! fixed point.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};
use crate::geometry::CameraConfig;
use crate::state::{KinematicState, Trajectory};
use crate::ActorId;

use super::script::ScenarioScript;

/// Allowed drift of a tick timestamp from `index * dt`.
const TIMESTAMP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMetadata {
    pub name: String,
    pub ego_nominal_speed: f64,
    /// Fixed processing rate the run used, when it used one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_fpr: Option<f64>,
    /// Script that generated the run; lets analysis re-run the scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<ScenarioScript>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickRecord {
    pub t: f64,
    pub ego: KinematicState,
    pub actors: BTreeMap<ActorId, KinematicState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceHeader {
    dt: f64,
    cameras: Vec<CameraConfig>,
    metadata: TraceMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrace {
    pub dt: f64,
    pub ticks: Vec<TickRecord>,
    pub cameras: Vec<CameraConfig>,
    pub metadata: TraceMetadata,
}

impl ScenarioTrace {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ZhuyiError::Header(format!("dt = {} must be positive", self.dt)));
        }
        if self.ticks.is_empty() {
            return Err(ZhuyiError::Header("trace has no ticks".into()));
        }
        for cam in &self.cameras {
            CameraConfig::new(cam.id.clone(), cam.azimuth_center, cam.fov)
                .map_err(|e| ZhuyiError::Header(e.to_string()))?;
        }
        for (i, tick) in self.ticks.iter().enumerate() {
            if i > 0 && !(tick.t > self.ticks[i - 1].t) {
                return Err(ZhuyiError::NonMonotoneTime(i));
            }
            let expected = i as f64 * self.dt;
            if (tick.t - expected).abs() > TIMESTAMP_TOLERANCE * expected.max(1.0) {
                return Err(ZhuyiError::Schema {
                    tick: i,
                    reason: format!("field `t` = {} but index × dt = {expected}", tick.t),
                });
            }
            if !(tick.ego.v >= 0.0) {
                return Err(ZhuyiError::NegativeSpeed { tick: i, who: "ego".into() });
            }
            if let Some((id, _)) = tick.actors.iter().find(|(_, s)| !(s.v >= 0.0)) {
                return Err(ZhuyiError::NegativeSpeed { tick: i, who: format!("actor `{id}`") });
            }
        }
        Ok(())
    }

    pub fn actor_ids(&self) -> Vec<ActorId> {
        let mut ids: Vec<ActorId> =
            self.ticks.iter().flat_map(|t| t.actors.keys().cloned()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let header = TraceHeader {
            dt: self.dt,
            cameras: self.cameras.clone(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for tick in &self.ticks {
            serde_json::to_writer(&mut out, tick)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(file)
    }
}

/// Reads and validates a trace.
pub fn load_trace<R: BufRead>(source: R) -> Result<ScenarioTrace> {
    let mut lines = source.lines().enumerate().filter(|(_, l)| {
        l.as_ref().map_or(true, |s| !s.trim().is_empty())
    });
    let header_line = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(ZhuyiError::Header("empty trace".into())),
    };
    let header: TraceHeader =
        serde_json::from_str(&header_line).map_err(|e| ZhuyiError::Header(e.to_string()))?;
    let mut ticks = Vec::new();
    for (index, (_, line)) in lines.enumerate() {
        let line = line?;
        let tick: TickRecord = serde_json::from_str(&line)
            .map_err(|e| ZhuyiError::Schema { tick: index, reason: e.to_string() })?;
        ticks.push(tick);
    }
    let trace = ScenarioTrace {
        dt: header.dt,
        ticks,
        cameras: header.cameras,
        metadata: header.metadata,
    };
    trace.validate()?;
    Ok(trace)
}

pub fn load_trace_path(path: &Path) -> Result<ScenarioTrace> {
    load_trace(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Recorded future of one actor from `from_tick`, re-based to `t = 0`, with
/// probability 1. Stops at the first tick where the actor is absent. A
/// single remaining sample is padded with the state one tick later under the
/// trajectory's own past-the-end rule.
pub fn ground_truth_trajectory(
    trace: &ScenarioTrace,
    actor_id: &str,
    from_tick: usize,
) -> Result<Trajectory> {
    let start = trace
        .ticks
        .get(from_tick)
        .filter(|t| t.actors.contains_key(actor_id))
        .ok_or_else(|| ZhuyiError::UnknownActor(actor_id.to_string()))?;
    let t0 = start.t;
    let mut samples: Vec<(f64, KinematicState)> = trace.ticks[from_tick..]
        .iter()
        .map_while(|tick| tick.actors.get(actor_id).map(|s| (tick.t - t0, *s)))
        .collect();
    samples[0].0 = 0.0;
    if samples.len() == 1 {
        let (_, s) = samples[0];
        let (sin, cos) = s.heading.sin_cos();
        let next = KinematicState {
            x: s.x + s.v * trace.dt * cos,
            y: s.y + s.v * trace.dt * sin,
            a: 0.0,
            ..s
        };
        samples.push((trace.dt, next));
    }
    Trajectory::new(samples, 1.0)
}
