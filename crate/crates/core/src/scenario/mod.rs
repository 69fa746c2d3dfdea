//! Scenario traces, synthetic closed-loop scenarios and trajectory
//! prediction.

pub mod engine;
pub mod predictor;
pub mod road;
pub mod script;
pub mod trace;

pub use engine::{run_closed_loop, RatePolicy, RunResult};
pub use predictor::{predict_trajectories, PredictorConfig};
pub use script::{generate_scenario, Family, FamilyParams, ScenarioScript, ScenarioSpec};
pub use trace::{ground_truth_trajectory, load_trace, load_trace_path, ScenarioTrace, TickRecord, TraceMetadata};
