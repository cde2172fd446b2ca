use std::collections::HashMap;

use super::TriMesh;
use crate::error::{Error, Result};

fn edge_counts(mesh: &TriMesh) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::new();
    for f in &mesh.faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

/// `V - E + F` of a closed 2-manifold mesh.
pub fn euler_characteristic(mesh: &TriMesh) -> Result<i64> {
    let counts = edge_counts(mesh);
    let mut bad: Vec<(usize, usize)> = counts.iter().filter(|(_, &c)| c != 2).map(|(e, _)| *e).collect();
    if !bad.is_empty() {
        bad.sort_unstable();
        return Err(Error::NonManifold(bad));
    }
    Ok(mesh.vertices.len() as i64 - counts.len() as i64 + mesh.faces.len() as i64)
}

/// `(2 - χ) / 2`; meaningful for a single closed component.
pub fn genus(mesh: &TriMesh) -> Result<i64> {
    Ok((2 - euler_characteristic(mesh)?) / 2)
}

/// Number of face-connected components.
pub fn connected_components(mesh: &TriMesh) -> usize {
    let mut parent: Vec<usize> = (0..mesh.vertices.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for f in &mesh.faces {
        for e in 1..3 {
            let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[e]));
            parent[a] = b;
        }
    }
    let mut used = vec![false; mesh.vertices.len()];
    mesh.faces.iter().flatten().for_each(|&v| used[v] = true);
    (0..mesh.vertices.len())
        .filter(|&v| used[v] && find(&mut parent, v) == v)
        .count()
}
