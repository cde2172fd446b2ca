use serde::{Deserialize, Serialize};

use super::train::SampleSet;
use crate::error::{contract, Result};
use crate::geometry::{sample_training_points, AnalyticShape};

/// Six spheres and six tori, all inside the unit box.
pub fn training_family() -> Vec<AnalyticShape> {
    let mut shapes: Vec<AnalyticShape> = [0.2, 0.24, 0.28, 0.32, 0.36, 0.4]
        .into_iter()
        .map(AnalyticShape::sphere)
        .collect();
    shapes.extend(
        [
            (0.35, 0.1),
            (0.4, 0.2),
            (0.45, 0.15),
            (0.5, 0.1),
            (0.55, 0.2),
            (0.5, 0.175),
        ]
        .into_iter()
        .map(|(a, b)| AnalyticShape::torus(a, b)),
    );
    shapes
}

/// Shapes of the same family that are absent from [`training_family`].
pub fn held_out_family() -> Vec<AnalyticShape> {
    vec![
        AnalyticShape::sphere(0.26),
        AnalyticShape::sphere(0.34),
        AnalyticShape::torus(0.42, 0.12),
        AnalyticShape::torus(0.48, 0.18),
        AnalyticShape::torus(0.52, 0.14),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub surface_points: usize,
    pub uniform_points: usize,
    /// Surface jitter levels, cycled.
    pub sigmas: Vec<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            surface_points: 16000,
            uniform_points: 4000,
            sigmas: vec![0.005, 0.05],
        }
    }
}

/// One sample set per shape; shape `i` draws from its own stream derived
/// from `seed`.
pub fn build_dataset(shapes: &[AnalyticShape], cfg: &DatasetConfig, seed: u64) -> Result<Vec<SampleSet>> {
    if shapes.is_empty() {
        return contract("dataset needs at least one shape");
    }
    shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let stream = seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            sample_training_points(s, i, cfg.surface_points, cfg.uniform_points, &cfg.sigmas, stream)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_are_valid_and_disjoint() {
        let train = training_family();
        let held = held_out_family();
        assert_eq!(train.len(), 12);
        for s in train.iter().chain(&held) {
            s.validate().unwrap();
        }
        assert!(held.iter().all(|h| !train.contains(h)));
        assert_eq!(train.iter().filter(|s| s.genus() == 1).count(), 6);
    }

    #[test]
    fn dataset_is_deterministic_per_shape() {
        let cfg = DatasetConfig {
            surface_points: 10,
            uniform_points: 5,
            sigmas: vec![0.01],
        };
        let shapes = training_family();
        let a = build_dataset(&shapes, &cfg, 3).unwrap();
        let b = build_dataset(&shapes[..2], &cfg, 3).unwrap();
        assert_eq!(a[..2], b[..]);
        assert_ne!(a[0].points, a[1].points);
        assert!(build_dataset(&[], &cfg, 0).is_err());
    }
}
