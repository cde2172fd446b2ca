use super::kdtree::KdTree;
use crate::error::{contract, Result};
use crate::exec;
use crate::geometry::Vec3;

/// Chamfer value together with its gradient with respect to the first cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamferResult {
    pub value: f64,
    pub grad: Vec<Vec3>,
}

fn check_clouds(p: &[Vec3], q: &[Vec3]) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        return contract("chamfer distance needs two nonempty point clouds");
    }
    if p.iter().chain(q).any(|x| !x.iter().all(|c| c.is_finite())) {
        return contract("point cloud contains non-finite coordinates");
    }
    Ok(())
}

/// Nearest neighbour in `target` for every point of `queries`.
pub(crate) fn nearest_all(queries: &[Vec3], target: &[Vec3]) -> Vec<(usize, f64)> {
    let tree = KdTree::new(target);
    exec::map_slice(queries, |x| tree.nearest(x).expect("nonempty target"))
}

/// Two-sided squared Chamfer distance, summed over both clouds, with the
/// gradient on `p`.
pub fn chamfer_l2(p: &[Vec3], q: &[Vec3]) -> Result<ChamferResult> {
    chamfer_weighted(p, q, 1.0, 1.0)
}

/// As [`chamfer_l2`] but each one-sided sum is divided by its point count.
pub fn chamfer_l2_mean(p: &[Vec3], q: &[Vec3]) -> Result<ChamferResult> {
    chamfer_weighted(p, q, 1.0 / p.len().max(1) as f64, 1.0 / q.len().max(1) as f64)
}

fn chamfer_weighted(p: &[Vec3], q: &[Vec3], wp: f64, wq: f64) -> Result<ChamferResult> {
    check_clouds(p, q)?;
    let p_to_q = nearest_all(p, q);
    let q_to_p = nearest_all(q, p);
    let mut grad = vec![Vec3::zeros(); p.len()];
    let mut sum_p = 0.0;
    for (i, &(j, d2)) in p_to_q.iter().enumerate() {
        sum_p += d2;
        grad[i] += (p[i] - q[j]) * (2.0 * wp);
    }
    let mut sum_q = 0.0;
    for (j, &(i, d2)) in q_to_p.iter().enumerate() {
        sum_q += d2;
        grad[i] += (p[i] - q[j]) * (2.0 * wq);
    }
    Ok(ChamferResult {
        value: wp * sum_p + wq * sum_q,
        grad,
    })
}

/// Two-sided Chamfer distance with unsquared norms.
pub fn chamfer_sqrt_l2(p: &[Vec3], q: &[Vec3]) -> Result<f64> {
    check_clouds(p, q)?;
    let a: f64 = nearest_all(p, q).iter().map(|&(_, d2)| d2.sqrt()).sum();
    let b: f64 = nearest_all(q, p).iter().map(|&(_, d2)| d2.sqrt()).sum();
    Ok(a + b)
}
