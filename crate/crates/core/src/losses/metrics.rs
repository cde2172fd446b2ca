use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::chamfer::nearest_all;
use crate::error::{contract, Result};
use crate::geometry::Vec3;

/// F-score threshold used for reports: 5% of the bounding-box diagonal of
/// `reference`.
pub fn fscore_threshold(reference: &[Vec3]) -> Result<f64> {
    let (lo, hi) = bounds(reference.iter())
        .ok_or_else(|| crate::Error::Contract("F-score threshold needs a nonempty cloud".into()))?;
    Ok(0.05 * (hi - lo).norm())
}

/// Harmonic mean of precision and recall at distance `d`, in percent.
/// A point counts when its nearest neighbour is strictly closer than `d`.
pub fn fscore(p: &[Vec3], q: &[Vec3], d: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return contract(format!("F-score threshold must be positive, got {d}"));
    }
    if p.is_empty() || q.is_empty() {
        return contract("F-score needs two nonempty point clouds");
    }
    let d2 = d * d;
    let within = |a: &[Vec3], b: &[Vec3]| {
        let hits = nearest_all(a, b).iter().filter(|&&(_, e)| e < d2).count();
        100.0 * hits as f64 / a.len() as f64
    };
    let precision = within(p, q);
    let recall = within(q, p);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Intersection over union of the voxel sets occupied by each cloud, with
/// `resolution` cells per axis over the joint bounding box.
pub fn surface_iou(p: &[Vec3], q: &[Vec3], resolution: usize) -> Result<f64> {
    if resolution < 2 {
        return contract(format!("surface IoU resolution must be at least 2, got {resolution}"));
    }
    let Some((lo, hi)) = bounds(p.iter().chain(q)) else {
        return contract("surface IoU needs a nonempty point cloud");
    };
    let extent = hi - lo;
    let cell = |x: &Vec3| -> [usize; 3] {
        let mut c = [0usize; 3];
        for a in 0..3 {
            if extent[a] > 0.0 {
                let t = (x[a] - lo[a]) / extent[a] * resolution as f64;
                c[a] = (t.floor().max(0.0) as usize).min(resolution - 1);
            }
        }
        c
    };
    let a: HashSet<[usize; 3]> = p.iter().map(cell).collect();
    let b: HashSet<[usize; 3]> = q.iter().map(cell).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return Ok(0.0);
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}

fn bounds<'a>(points: impl Iterator<Item = &'a Vec3>) -> Option<(Vec3, Vec3)> {
    let mut it = points.peekable();
    it.peek()?;
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for x in it {
        lo = lo.inf(x);
        hi = hi.sup(x);
    }
    Some((lo, hi))
}

/// Evaluation record; absent metrics are serialized as `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub chamfer_l2: Option<f64>,
    pub chamfer_sqrt_l2: Option<f64>,
    pub emd: Option<f64>,
    pub fscore: Option<f64>,
    pub surface_iou: Option<f64>,
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.chamfer_l2, self.chamfer_sqrt_l2, self.emd];
        if nonneg.iter().flatten().any(|v| !(*v >= 0.0)) {
            return contract("distances in a metric report must be non-negative");
        }
        if self.fscore.is_some_and(|f| !(0.0..=100.0).contains(&f)) {
            return contract("F-score must lie in [0, 100]");
        }
        if self.surface_iou.is_some_and(|f| !(0.0..=1.0).contains(&f)) {
            return contract("surface IoU must lie in [0, 1]");
        }
        Ok(())
    }

    /// One-line JSON record.
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
