use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::Vec3;
use crate::marching::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// The vertex positions themselves; the count argument is ignored.
    Vertices,
    /// `n` points uniformly distributed by surface area.
    AreaWeighted,
}

/// Draws a point cloud from a mesh.
pub fn sample_mesh_points(mesh: &TriMesh, n: usize, mode: SampleMode, seed: u64) -> Result<Vec<Vec3>> {
    if n == 0 {
        return contract("requested an empty sample");
    }
    if mesh.vertices.is_empty() {
        return contract("cannot sample an empty mesh");
    }
    match mode {
        SampleMode::Vertices => Ok(mesh.vertices.clone()),
        SampleMode::AreaWeighted => {
            let v = &mesh.vertices;
            let mut cumulative = Vec::with_capacity(mesh.faces.len());
            let mut total = 0.0;
            for f in &mesh.faces {
                total += 0.5 * (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]])).norm();
                cumulative.push(total);
            }
            if !(total > 0.0) {
                return contract("mesh has no surface area to sample");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n)
                .map(|_| {
                    let target = rng.random::<f64>() * total;
                    let idx = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
                    let f = mesh.faces[idx];
                    let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                    let s = r1.sqrt();
                    v[f[0]] * (1.0 - s) + v[f[1]] * (s * (1.0 - r2)) + v[f[2]] * (s * r2)
                })
                .collect())
        }
    }
}
