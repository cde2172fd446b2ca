use crate::error::{contract, Result};
use crate::geometry::Vec3;

/// Largest cloud size accepted by [`emd_exact`]; assignment is cubic.
pub const EMD_MAX_POINTS: usize = 256;

/// Earth mover's distance between equal-size clouds: the minimum over
/// bijections of the summed Euclidean distances, solved exactly.
pub fn emd_exact(p: &[Vec3], q: &[Vec3]) -> Result<f64> {
    if p.len() != q.len() {
        return contract(format!("EMD needs equal cloud sizes, got {} and {}", p.len(), q.len()));
    }
    if p.len() > EMD_MAX_POINTS {
        return contract(format!("EMD limited to {EMD_MAX_POINTS} points, got {}", p.len()));
    }
    let n = p.len();
    let cost: Vec<f64> = p.iter().flat_map(|a| q.iter().map(move |b| (a - b).norm())).collect();
    if cost.iter().any(|c| !c.is_finite()) {
        return contract("point cloud contains non-finite coordinates");
    }
    let assignment = hungarian(n, &cost);
    Ok(assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum())
}

/// Minimum-cost perfect matching on a dense `n x n` row-major cost matrix.
/// Returns the column assigned to each row.
pub fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    // Shortest augmenting paths with row/column potentials; index 0 is a
    // sentinel column, rows and columns are 1-based.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[matched_row[j] - 1] = j - 1;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    /// Heap's algorithm over all permutations.
    fn brute_force(p: &[Vec3], q: &[Vec3]) -> f64 {
        let n = p.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let eval = |perm: &[usize]| -> f64 { (0..n).map(|i| (p[i] - q[perm[i]]).norm()).sum() };
        let mut best = eval(&perm);
        let mut c = vec![0usize; n];
        let mut i = 1;
        let mut visited = 1;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(eval(&perm));
                visited += 1;
                c[i] += 1;
                i = 1;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        assert_eq!(visited, (1..=n).product::<usize>());
        best
    }

    #[test]
    fn identity_and_crossed_pairs() {
        let p = cloud(10, 1);
        assert_eq!(emd_exact(&p, &p).unwrap(), 0.0);
        let a = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        let b = [Vec3::new(1.0, 0.0, 0.0), Vec3::zeros()];
        assert_eq!(emd_exact(&a, &b).unwrap(), 0.0);
        assert_eq!(emd_exact(&[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn equals_factorial_brute_force() {
        for seed in 0..5 {
            let p = cloud(7, 10 + seed);
            let q = cloud(7, 20 + seed);
            let e = emd_exact(&p, &q).unwrap();
            assert!((e - brute_force(&p, &q)).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn size_contracts() {
        assert!(emd_exact(&cloud(3, 1), &cloud(4, 2)).is_err());
        assert!(emd_exact(&cloud(257, 1), &cloud(257, 2)).is_err());
        assert!(emd_exact(&cloud(256, 1), &cloud(256, 2)).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn symmetric_bounded_and_scale_equivariant(seed in 0u64..1000, n in 1usize..30, alpha in 0.1f64..4.0) {
            let p = cloud(n, seed);
            let q = cloud(n, seed + 104729);
            let e = emd_exact(&p, &q).unwrap();
            let f = emd_exact(&q, &p).unwrap();
            prop_assert!((e - f).abs() <= 1e-12 * e.max(1.0));
            // Each point pays at least its nearest-neighbour distance.
            let lower = p.iter()
                .map(|a| q.iter().map(|b| (a - b).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max);
            prop_assert!(e + 1e-12 >= lower);
            let ps: Vec<Vec3> = p.iter().map(|x| x * alpha).collect();
            let qs: Vec<Vec3> = q.iter().map(|x| x * alpha).collect();
            let es = emd_exact(&ps, &qs).unwrap();
            prop_assert!((es - alpha * e).abs() <= 1e-10 * es.max(1.0));
        }
    }
}
