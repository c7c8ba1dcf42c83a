//! Multi-node tracing simulator: scenario runner, presets, sweeps, and
//! metrics.

mod engine;
mod metrics;
mod presets;
mod sweeps;

pub use engine::{run_repetitions, run_scenario, ScenarioConfig, SimError, GRID_SAMPLES};
pub use metrics::{
    points_to_csv, write_trace_jsonl, MetricsReport, NodeIdentity, SweepPoint, TraceEvent,
};
pub use presets::{
    builtin_presets, load_preset, square_scene, wall_scene, NoiseSpec, PresetDef, PresetError,
    SweepConfig, DISK_MODEL_RADIUS_M, FT_TO_M, WALL_LEFT_NODES, WALL_RIGHT_NODES,
};
pub use sweeps::{
    knee_distance, scenario_at_distance, sweep_distance, sweep_volume, wall_scenario,
    DiskModelReport, VolumeCurve, WallReport, KNEE_THRESHOLD,
};
