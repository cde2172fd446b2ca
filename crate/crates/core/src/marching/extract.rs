use std::collections::HashMap;

use super::tables::{CORNERS, EDGES, TRI_TABLE};
use crate::error::{contract, Result};
use crate::exec;
use crate::geometry::{ScalarField, Vec3};

/// Field values that are exactly zero are treated as this before
/// classification, so no edge ever has two zero endpoints.
pub const ZERO_NUDGE: f64 = 1e-12;

/// Grid edge a vertex was placed on: node `i` with value `>= 0`, node `j`
/// with value `< 0`, and the interpolant `t` so that `v = G_i + t (G_j - G_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexEdge {
    pub i: usize,
    pub j: usize,
    pub t: f64,
}

/// Triangle mesh with counter-clockwise faces seen from outside.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Per-vertex provenance; empty for meshes that did not come from
    /// marching cubes.
    pub vertex_edges: Vec<VertexEdge>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            vertex_edges: Vec::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return contract(format!("face {f:?} references a vertex beyond {n}"));
        }
        if !self.vertex_edges.is_empty() && self.vertex_edges.len() != n {
            return contract("vertex_edges must be empty or match the vertex count");
        }
        Ok(())
    }

    /// Signed enclosed volume; positive for outward-oriented closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))),
        )
    }
}

#[inline]
pub(crate) fn nudge(s: f64) -> f64 {
    if s == 0.0 {
        ZERO_NUDGE
    } else {
        s
    }
}

#[inline]
fn lerp_edge(gi: &Vec3, gj: &Vec3, si: f64, sj: f64) -> (Vec3, f64) {
    let t = si / (si - sj);
    (gi + (gj - gi) * t, t)
}

/// Linear zero crossing on the segment `[gi, gj]`: `gi + x (gj - gi)` with
/// `x = si / (si - sj)`. Exact zeros are nudged positive first.
pub fn interpolate_vertex(gi: &Vec3, gj: &Vec3, si: f64, sj: f64) -> Result<Vec3> {
    let (si, sj) = (nudge(si), nudge(sj));
    if !(si.is_finite() && sj.is_finite()) || (si < 0.0) == (sj < 0.0) {
        return contract(format!("edge endpoints must straddle zero, got {si} and {sj}"));
    }
    Ok(lerp_edge(gi, gj, si, sj).0)
}

/// Emitted triangles reference vertices by grid-edge key `3 * node + axis`.
type EdgeKey = usize;

fn slab_triangles(field: &ScalarField, values: &[f64], k: usize) -> Vec<[EdgeKey; 3]> {
    let grid = &field.grid;
    let n = grid.resolution;
    let mut tris = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let mut nodes = [0usize; 8];
            let mut case = 0usize;
            for (c, off) in CORNERS.iter().enumerate() {
                let idx = grid.index(i + off[0], j + off[1], k + off[2]);
                nodes[c] = idx;
                if values[idx] < 0.0 {
                    case |= 1 << c;
                }
            }
            if case == 0 || case == 255 {
                continue;
            }
            let row = &TRI_TABLE[case];
            for t in row.chunks(3).take_while(|t| t[0] >= 0) {
                let key = |e: i8| {
                    let [a, b] = EDGES[e as usize];
                    let axis = (0..3).find(|&ax| CORNERS[a][ax] != CORNERS[b][ax]).unwrap();
                    3 * nodes[a].min(nodes[b]) + axis
                };
                // the table winds clockwise seen from the positive side
                tris.push([key(t[0]), key(t[2]), key(t[1])]);
            }
        }
    }
    tris
}

/// Extracts the zero level set of a fully valid field.
///
/// Vertices are shared between cells through their grid edge, numbered in
/// order of first use while scanning cells `x` fastest, then `y`, then `z`.
pub fn marching_cubes(field: &ScalarField) -> Result<TriMesh> {
    if field.values.len() != field.grid.node_count() || !field.is_fully_valid() {
        return contract("marching cubes needs a fully valid field");
    }
    let values: Vec<f64> = field.values.iter().map(|&s| nudge(s)).collect();
    let grid = &field.grid;
    let slabs = exec::map_range(grid.resolution - 1, |k| slab_triangles(field, &values, k));

    let mut mesh = TriMesh::default();
    let mut ids: HashMap<EdgeKey, usize> = HashMap::new();
    let n = grid.resolution;
    let stride = [1, n, n * n];
    for tri in slabs.iter().flatten() {
        let face = tri.map(|key| {
            *ids.entry(key).or_insert_with(|| {
                let a = key / 3;
                let b = a + stride[key % 3];
                let (i, j) = if values[a] >= 0.0 { (a, b) } else { (b, a) };
                let (v, t) = lerp_edge(
                    &grid.node_position_at(i),
                    &grid.node_position_at(j),
                    values[i],
                    values[j],
                );
                mesh.vertices.push(v);
                mesh.vertex_edges.push(VertexEdge { i, j, t });
                mesh.vertices.len() - 1
            })
        });
        mesh.faces.push(face);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{analytic_sdf, sample_field, AnalyticShape, FnField, Grid3D};
    use crate::marching::euler_characteristic;

    #[test]
    fn interpolation_rule() {
        let gi = Vec3::new(0.0, 0.0, 0.0);
        let gj = Vec3::new(2.0, 0.0, 0.0);
        assert_eq!(
            interpolate_vertex(&gi, &gj, 1.0, -1.0).unwrap(),
            Vec3::new(1.0, 0.0, 0.0)
        );
        let v = interpolate_vertex(&gi, &gj, 0.0, -1.0).unwrap();
        assert!((v - gi).norm() < 1e-11);
        assert_eq!(
            interpolate_vertex(&gi, &gj, 3.0, -1.0).unwrap(),
            Vec3::new(1.5, 0.0, 0.0)
        );
        assert!(interpolate_vertex(&gi, &gj, 1.0, 2.0).is_err());
        assert!(interpolate_vertex(&gi, &gj, 0.0, 0.0).is_err());
    }

    #[test]
    fn table_matches_sign_changes() {
        for case in 0..256usize {
            let mut crossed = [false; 12];
            for t in TRI_TABLE[case].iter().take_while(|&&e| e >= 0) {
                crossed[*t as usize] = true;
            }
            for (e, [a, b]) in EDGES.iter().enumerate() {
                let expect = ((case >> a) & 1) != ((case >> b) & 1);
                assert_eq!(crossed[e], expect, "case {case} edge {e}");
            }
        }
    }

    #[test]
    fn positive_field_gives_empty_mesh() {
        let grid = Grid3D::unit(8).unwrap();
        let f = sample_field(&FnField(|_: &Vec3| 1.0), &grid).unwrap();
        let m = marching_cubes(&f).unwrap();
        assert!(m.vertices.is_empty() && m.faces.is_empty());
    }

    #[test]
    fn sphere_mesh_is_closed_outward_and_accurate() {
        let grid = Grid3D::unit(64).unwrap();
        let s = AnalyticShape::sphere(0.5);
        let field = sample_field(&s, &grid).unwrap();
        let m = marching_cubes(&field).unwrap();
        m.validate().unwrap();
        assert_eq!(euler_characteristic(&m).unwrap(), 2);
        assert!(m.signed_volume() > 0.0);
        let vol = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!((m.signed_volume() - vol).abs() / vol < 0.01);
        let h = grid.h();
        let worst = m.vertices.iter().map(|v| analytic_sdf(&s, v).abs()).fold(0.0, f64::max);
        assert!(worst < h, "worst {worst} vs h {h}");
        for (v, e) in m.vertices.iter().zip(&m.vertex_edges) {
            assert!(field.values[e.i] >= 0.0 && field.values[e.j] < 0.0);
            assert!((0.0..=1.0).contains(&e.t));
            let gi = grid.node_position_at(e.i);
            let gj = grid.node_position_at(e.j);
            assert!((gi + (gj - gi) * e.t - v).norm() < 1e-15);
        }
    }

    #[test]
    fn exact_zero_nodes_are_nudged() {
        // Plane through a layer of grid nodes.
        let grid = Grid3D::unit(5).unwrap();
        let f = sample_field(&FnField(|p: &Vec3| p.x), &grid).unwrap();
        let m = marching_cubes(&f).unwrap();
        assert!(!m.faces.is_empty());
        assert!(m.vertices.iter().all(|v| v.x.abs() < 1e-9));
    }
}
