use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::exec;
use crate::geometry::Vec3;
use crate::marching::TriMesh;

/// Surface pressure model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Pressure {
    /// `q max(0, n·d)²`: windward faces only.
    Newtonian,
    /// The same pressure on every face.
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragConfig {
    /// Unit vector along the free stream.
    pub flow_direction: Vec3,
    pub dynamic_pressure: f64,
    #[serde(default = "default_pressure")]
    pub pressure: Pressure,
}

fn default_pressure() -> Pressure {
    Pressure::Newtonian
}

impl Default for DragConfig {
    fn default() -> Self {
        Self {
            flow_direction: Vec3::x(),
            dynamic_pressure: 1.0,
            pressure: Pressure::Newtonian,
        }
    }
}

impl DragConfig {
    pub fn validate(&self) -> Result<()> {
        if ((self.flow_direction.norm() - 1.0).abs()) > 1e-9 {
            return contract("flow direction must be a unit vector");
        }
        if !(self.dynamic_pressure > 0.0) || !self.dynamic_pressure.is_finite() {
            return contract(format!(
                "dynamic pressure must be positive, got {}",
                self.dynamic_pressure
            ));
        }
        if let Pressure::Constant { value } = self.pressure {
            if !value.is_finite() {
                return contract("constant pressure must be finite");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub normal: Vec3,
    pub area: f64,
    pub centroid: Vec3,
}

/// Unit normal (counter-clockwise winding), area and centroid of every face.
/// Degenerate faces get zero area and the normal `+z`.
pub fn face_geometry(mesh: &TriMesh) -> Vec<FaceGeometry> {
    let v = &mesh.vertices;
    exec::map_slice(&mesh.faces, |f| {
        let n = (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]]));
        let len = n.norm();
        FaceGeometry {
            normal: if len > 0.0 { n / len } else { Vec3::z() },
            area: 0.5 * len,
            centroid: (v[f[0]] + v[f[1]] + v[f[2]]) / 3.0,
        }
    })
}

/// Newtonian impact pressure on a face with unit normal `normal`.
pub fn newtonian_pressure(normal: &Vec3, cfg: &DragConfig) -> f64 {
    let c = normal.dot(&cfg.flow_direction).max(0.0);
    cfg.dynamic_pressure * c * c
}

#[derive(Debug, Clone, PartialEq)]
pub struct DragResult {
    pub value: f64,
    pub grad: Vec<Vec3>,
}

/// `Σ_faces g(n)·(n·d)·area` and its gradient with respect to vertices.
pub fn drag(mesh: &TriMesh, cfg: &DragConfig) -> Result<DragResult> {
    cfg.validate()?;
    let v = &mesh.vertices;
    let d = cfg.flow_direction;
    let q = cfg.dynamic_pressure;
    // Per face, with the area vector N = (b - a) × (c - a) = 2 area n:
    // Newtonian: q/2 · max(0, N·d)³ / |N|²; constant g: g/2 · N·d.
    let per_face = exec::map_slice(&mesh.faces, |f| {
        let (a, b, c) = (v[f[0]], v[f[1]], v[f[2]]);
        let n = (b - a).cross(&(c - a));
        let (value, dn) = match cfg.pressure {
            Pressure::Constant { value: g } => (0.5 * g * n.dot(&d), d * (0.5 * g)),
            Pressure::Newtonian => {
                let m = n.dot(&d);
                let l2 = n.norm_squared();
                if m <= 0.0 || l2 == 0.0 {
                    (0.0, Vec3::zeros())
                } else {
                    let value = 0.5 * q * m * m * m / l2;
                    let dn = d * (1.5 * q * m * m / l2) - n * (q * m * m * m / (l2 * l2));
                    (value, dn)
                }
            }
        };
        // ∂N/∂b · g = (c - a) × g, ∂N/∂c · g = g × (b - a).
        let gb = (c - a).cross(&dn);
        let gc = dn.cross(&(b - a));
        (value, [-(gb + gc), gb, gc])
    });
    let mut value = 0.0;
    let mut grad = vec![Vec3::zeros(); v.len()];
    for (f, (val, g)) in mesh.faces.iter().zip(per_face) {
        value += val;
        for k in 0..3 {
            grad[f[k]] += g[k];
        }
    }
    Ok(DragResult { value, grad })
}
