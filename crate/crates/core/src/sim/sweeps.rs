//! Distance sweeps, volume sweeps, and the through-wall comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::medium::distance;

use super::engine::{run_repetitions, ScenarioConfig};
use super::metrics::{mean_and_stddev, SweepPoint};
use super::presets::{
    square_scene, wall_scene, SweepConfig, DISK_MODEL_RADIUS_M, FT_TO_M, WALL_LEFT_NODES,
};

/// Group-rate threshold defining the knee distance.
pub const KNEE_THRESHOLD: f64 = 0.9;

/// Build the scenario for a 4-node square of the given edge length.
pub fn scenario_at_distance(cfg: &SweepConfig, distance_ft: f64) -> ScenarioConfig {
    let scene = square_scene(&cfg.preset, distance_ft * FT_TO_M, 1.0);
    ScenarioConfig {
        scene,
        duration_s: cfg.duration_s,
        rpid_rotation_s: cfg.rpid_rotation_s,
        rng_seed: cfg.rng_seed,
        volume_level: cfg.volume_level,
        modem: cfg.preset.modem_params(),
        mac: cfg.mac.clone(),
        first_frame_at: None,
    }
}

/// Mean and spread of the group tracing rate at each square edge length.
pub fn sweep_distance(cfg: &SweepConfig, distances_ft: &[f64]) -> Vec<SweepPoint> {
    distances_ft
        .par_iter()
        .map(|&d| {
            let mut scenario = scenario_at_distance(cfg, d);
            // Decorrelate repetitions across distances.
            scenario.rng_seed = cfg.rng_seed.wrapping_add((d * 1000.0) as u64);
            let rates: Vec<f64> = run_repetitions(&scenario, cfg.repetitions)
                .iter()
                .map(|r| r.group_rate)
                .collect();
            let (mean_r, stddev) = mean_and_stddev(&rates);
            SweepPoint {
                distance_ft: d,
                mean_r,
                stddev,
                n_reps: cfg.repetitions,
            }
        })
        .collect()
}

/// Largest swept distance whose mean rate stays at or above the
/// threshold; 0 when none qualifies.
pub fn knee_distance(points: &[SweepPoint], threshold: f64) -> f64 {
    points
        .iter()
        .filter(|p| p.mean_r >= threshold)
        .map(|p| p.distance_ft)
        .fold(0.0, f64::max)
}

/// One volume level's distance curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeCurve {
    pub level: u32,
    pub points: Vec<SweepPoint>,
    pub knee_ft: f64,
}

/// A distance curve per volume level, with each curve's knee.
pub fn sweep_volume(cfg: &SweepConfig, levels: &[u32], distances_ft: &[f64]) -> Vec<VolumeCurve> {
    levels
        .iter()
        .map(|&level| {
            let mut level_cfg = cfg.clone();
            level_cfg.volume_level = level;
            let points = sweep_distance(&level_cfg, distances_ft);
            let knee_ft = knee_distance(&points, KNEE_THRESHOLD);
            VolumeCurve {
                level,
                points,
                knee_ft,
            }
        })
        .collect()
}

/// Disk-model (range-only) baseline over the wall scene's node pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskModelReport {
    pub radius_m: f64,
    /// Unordered cross-wall pairs flagged as contacts / total.
    pub cross_wall_contacts: usize,
    pub cross_wall_pairs: usize,
    pub same_side_contacts: usize,
    pub same_side_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallReport {
    pub side_ft: f64,
    pub wall_loss_db: f64,
    pub repetitions: usize,
    /// Mean acoustic group rate over repetitions.
    pub acoustic_mean_r: f64,
    /// Total decoded frames crossing the wall, all repetitions.
    pub cross_wall_deliveries: u32,
    /// Fraction of (repetition × ordered same-side pair) with at least
    /// one delivery.
    pub same_side_delivery_rate: f64,
    pub disk: DiskModelReport,
}

fn is_left(node_id: u32) -> bool {
    WALL_LEFT_NODES.contains(&node_id)
}

/// Run the through-wall comparison: the full acoustic stack versus a
/// contact = "within 10 m" disk model that ignores walls.
pub fn wall_scenario(cfg: &SweepConfig, side_ft: f64, wall_loss_db: f64) -> WallReport {
    let scene = wall_scene(&cfg.preset, side_ft * FT_TO_M, wall_loss_db, 1.0);
    let scenario = ScenarioConfig {
        scene: scene.clone(),
        duration_s: cfg.duration_s,
        rpid_rotation_s: cfg.rpid_rotation_s,
        rng_seed: cfg.rng_seed,
        volume_level: cfg.volume_level,
        modem: cfg.preset.modem_params(),
        mac: cfg.mac.clone(),
        first_frame_at: None,
    };
    let runs = run_repetitions(&scenario, cfg.repetitions);

    let n = scene.nodes.len();
    let mut cross_deliveries = 0u32;
    let mut same_side_hits = 0usize;
    let mut same_side_total = 0usize;
    for run in &runs {
        for rx in 0..n {
            for tx in 0..n {
                if rx == tx {
                    continue;
                }
                let cross = is_left(scene.nodes[rx].id) != is_left(scene.nodes[tx].id);
                if cross {
                    cross_deliveries += run.delivery[rx][tx];
                } else {
                    same_side_total += 1;
                    if run.delivery[rx][tx] > 0 {
                        same_side_hits += 1;
                    }
                }
            }
        }
    }
    let rates: Vec<f64> = runs.iter().map(|r| r.group_rate).collect();
    let (acoustic_mean_r, _) = mean_and_stddev(&rates);

    // Disk model: any pair within the radius counts as a contact,
    // wall or not.
    let mut disk = DiskModelReport {
        radius_m: DISK_MODEL_RADIUS_M,
        cross_wall_contacts: 0,
        cross_wall_pairs: 0,
        same_side_contacts: 0,
        same_side_pairs: 0,
    };
    for a in 0..n {
        for b in (a + 1)..n {
            let within = distance(scene.nodes[a].position, scene.nodes[b].position)
                <= DISK_MODEL_RADIUS_M;
            let cross = is_left(scene.nodes[a].id) != is_left(scene.nodes[b].id);
            if cross {
                disk.cross_wall_pairs += 1;
                disk.cross_wall_contacts += usize::from(within);
            } else {
                disk.same_side_pairs += 1;
                disk.same_side_contacts += usize::from(within);
            }
        }
    }

    WallReport {
        side_ft,
        wall_loss_db,
        repetitions: cfg.repetitions,
        acoustic_mean_r,
        cross_wall_deliveries: cross_deliveries,
        same_side_delivery_rate: same_side_hits as f64 / same_side_total.max(1) as f64,
        disk,
    }
}
