use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::exec;
use crate::geometry::Vec3;
use crate::losses::KdTree;
use crate::marching::TriMesh;

/// Probes per box edge.
pub const PROBES_PER_AXIS: usize = 8;

/// Region the shape must enclose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBox {
    pub min_corner: Vec3,
    pub max_corner: Vec3,
    pub weight: f64,
}

impl ConstraintBox {
    pub fn validate(&self) -> Result<()> {
        if (0..3).any(|a| !(self.max_corner[a] > self.min_corner[a])) {
            return contract("constraint box max corner must exceed min corner on every axis");
        }
        if !(self.weight > 0.0) || !self.weight.is_finite() {
            return contract(format!("constraint weight must be positive, got {}", self.weight));
        }
        Ok(())
    }

    /// Cell-centred probe lattice.
    pub fn probes(&self) -> Vec<Vec3> {
        let n = PROBES_PER_AXIS;
        let ext = self.max_corner - self.min_corner;
        let mut out = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let t = Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) / n as f64;
                    out.push(self.min_corner + ext.component_mul(&t));
                }
            }
        }
        out
    }
}

/// Area-weighted vertex normals (unnormalized).
fn vertex_normals(mesh: &TriMesh) -> Vec<Vec3> {
    let v = &mesh.vertices;
    let mut out = vec![Vec3::zeros(); v.len()];
    for f in &mesh.faces {
        let n = (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]]));
        for &i in f {
            out[i] += n;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyResult {
    pub value: f64,
    pub grad: Vec<Vec3>,
}

/// `Σ_boxes w Σ_probes max(0, d)²`, where `d` is the distance from a probe
/// to its nearest vertex, signed positive when the probe lies on the
/// outward side of that vertex's normal.
pub fn constraint_penalty(mesh: &TriMesh, boxes: &[ConstraintBox]) -> Result<PenaltyResult> {
    for b in boxes {
        b.validate()?;
    }
    let mut grad = vec![Vec3::zeros(); mesh.vertices.len()];
    if boxes.is_empty() {
        return Ok(PenaltyResult { value: 0.0, grad });
    }
    if mesh.vertices.is_empty() {
        return contract("constraint penalty needs a nonempty mesh");
    }
    let tree = KdTree::new(&mesh.vertices);
    let normals = vertex_normals(mesh);
    let mut value = 0.0;
    for b in boxes {
        let probes = b.probes();
        let hits = exec::map_slice(&probes, |p| tree.nearest(p).expect("nonempty mesh"));
        for (p, (i, d2)) in probes.iter().zip(hits) {
            let offset = p - mesh.vertices[i];
            if offset.dot(&normals[i]) <= 0.0 {
                continue;
            }
            value += b.weight * d2;
            grad[i] -= offset * (2.0 * b.weight);
        }
    }
    Ok(PenaltyResult { value, grad })
}
