//! Scenario presets and scene construction.
//!
//! The propagation and noise constants here cannot be measured from a
//! desk, so the shipped `presets.json` holds values frozen by the
//! calibration sweep (`calibrate` CLI subcommand): the noisy-in-pocket
//! knee lands at 6 ft at full volume, the quiet-out-of-pocket knee near
//! 12 ft.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mac::MacParams;
use crate::medium::{NodeConfig, NoiseKind, NoiseSource, Scene, Wall};
use crate::modem::ModemParams;

/// Feet to meters.
pub const FT_TO_M: f64 = 0.3048;

/// Disk-model contact radius used as the wireless baseline, meters.
pub const DISK_MODEL_RADIUS_M: f64 = 10.0;

const PRESETS_JSON: &str = include_str!("../../presets/presets.json");

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset `{0}`")]
    Unknown(String),
    #[error("preset file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("preset file: {0}")]
    Io(#[from] std::io::Error),
}

/// One band-limited noise component placed at the scene center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub level: f64,
}

/// A named scenario environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetDef {
    pub ambient_sigma: f64,
    /// Fabric attenuation per node (pocketed phones), dB.
    pub occlusion_db: f64,
    /// Symbol detection threshold override.
    pub detect_factor: f64,
    #[serde(default)]
    pub noise_sources: Vec<NoiseSpec>,
}

impl PresetDef {
    pub fn modem_params(&self) -> ModemParams {
        ModemParams {
            detect_factor: self.detect_factor,
            ..ModemParams::default()
        }
    }
}

/// Load the frozen preset table.
pub fn builtin_presets() -> std::collections::BTreeMap<String, PresetDef> {
    serde_json::from_str(PRESETS_JSON).expect("embedded presets.json is valid")
}

/// Look up a builtin preset, or read a JSON file of the same shape when
/// `name` points at an existing path.
pub fn load_preset(name: &str) -> Result<PresetDef, PresetError> {
    if std::path::Path::new(name).is_file() {
        let text = std::fs::read_to_string(name)?;
        return Ok(serde_json::from_str(&text)?);
    }
    builtin_presets()
        .remove(name)
        .ok_or_else(|| PresetError::Unknown(name.to_string()))
}

/// Four nodes at the vertices of a `side_m` square, noise sources at the
/// center.
pub fn square_scene(preset: &PresetDef, side_m: f64, volume: f64) -> Scene {
    let positions = [
        (0.0, 0.0),
        (side_m, 0.0),
        (0.0, side_m),
        (side_m, side_m),
    ];
    let center = (side_m / 2.0, side_m / 2.0);
    Scene {
        nodes: positions
            .iter()
            .enumerate()
            .map(|(i, &position)| NodeConfig {
                id: i as u32,
                position,
                volume,
                occlusion_db: preset.occlusion_db,
                rx_noise_floor: 0.0,
            })
            .collect(),
        walls: vec![],
        noise_sources: preset
            .noise_sources
            .iter()
            .map(|spec| NoiseSource {
                position: center,
                kind: NoiseKind::BandLimited {
                    low_hz: spec.low_hz,
                    high_hz: spec.high_hz,
                },
                level: spec.level,
            })
            .collect(),
        ambient_sigma: preset.ambient_sigma,
    }
}

/// The through-wall layout: a square with a vertical wall bisecting it,
/// nodes 0 and 2 on the left side, 1 and 3 on the right.
pub fn wall_scene(preset: &PresetDef, side_m: f64, wall_loss_db: f64, volume: f64) -> Scene {
    let mut scene = square_scene(preset, side_m, volume);
    scene.walls.push(Wall {
        segment: ((side_m / 2.0, -10.0 * side_m), (side_m / 2.0, 11.0 * side_m)),
        loss_db: wall_loss_db,
    });
    scene
}

/// Node ids on each side of the wall in [`wall_scene`].
pub const WALL_LEFT_NODES: [u32; 2] = [0, 2];
pub const WALL_RIGHT_NODES: [u32; 2] = [1, 3];

/// Scenario parameters shared by runs and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub preset: PresetDef,
    pub duration_s: f64,
    pub rpid_rotation_s: f64,
    pub repetitions: usize,
    pub rng_seed: u64,
    /// Speaker volume step, 0..=25; linear volume is `level / 25`.
    pub volume_level: u32,
    #[serde(default)]
    pub mac: MacParams,
}

impl SweepConfig {
    pub fn new(preset: PresetDef, rng_seed: u64) -> Self {
        SweepConfig {
            preset,
            duration_s: 600.0,
            rpid_rotation_s: 600.0,
            repetitions: 10,
            rng_seed,
            volume_level: 25,
            mac: MacParams::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_presets_parse_and_contain_scenarios() {
        let presets = builtin_presets();
        for name in ["noisy_in_pocket", "quiet_out_of_pocket", "clean"] {
            assert!(presets.contains_key(name), "missing preset {name}");
        }
        let noisy = &presets["noisy_in_pocket"];
        assert_eq!(noisy.occlusion_db, 6.0);
        assert!(!noisy.noise_sources.is_empty());
        let quiet = &presets["quiet_out_of_pocket"];
        assert_eq!(quiet.occlusion_db, 0.0);
        assert!(quiet.noise_sources.is_empty());
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(matches!(
            load_preset("definitely_not_a_preset"),
            Err(PresetError::Unknown(_))
        ));
    }

    #[test]
    fn square_scene_geometry() {
        let preset = load_preset("clean").unwrap();
        let scene = square_scene(&preset, 6.0 * FT_TO_M, 1.0);
        assert_eq!(scene.nodes.len(), 4);
        scene.validate().unwrap();
        let d01 = crate::medium::distance(scene.nodes[0].position, scene.nodes[1].position);
        assert!((d01 - 6.0 * FT_TO_M).abs() < 1e-12);
        let d03 = crate::medium::distance(scene.nodes[0].position, scene.nodes[3].position);
        assert!((d03 - 6.0 * FT_TO_M * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wall_scene_separates_sides() {
        let preset = load_preset("quiet_out_of_pocket").unwrap();
        let scene = wall_scene(&preset, 6.0 * FT_TO_M, 40.0, 1.0);
        let left = scene.node(WALL_LEFT_NODES[0]);
        let right = scene.node(WALL_RIGHT_NODES[0]);
        let g_cross = crate::medium::path_gain(left, right, &scene.walls);
        let g_same = crate::medium::path_gain(left, scene.node(WALL_LEFT_NODES[1]), &scene.walls);
        assert!(g_cross < g_same / 50.0, "wall not attenuating: {g_cross} vs {g_same}");
    }
}
