//! Backward pass through iso-surface extraction.
//!
//! A mesh vertex sits where `f(v, z) = 0`. Perturbing the field by `Δs` moves
//! the vertex by `-Δs ∇f(v)` to first order, so a loss gradient `∂L/∂v`
//! becomes a scalar field perturbation weight `u_v = -(∂L/∂v)·∇f(v)` and the
//! latent gradient is `Σ_v u_v ∂f(v, z)/∂z`. The parameter gradient is the
//! same sum with `∂f/∂θ`.
//!
//! Marching cubes topology is treated as locally constant; nothing here
//! differentiates the discrete triangulation.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::geometry::{ImplicitField, Vec3};
use crate::marching::TriMesh;
use crate::sdfnet::{LatentCode, ParamGrad, SdfNetwork, SurfacePartials};

/// Per-vertex quantities entering the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGradientBundle {
    /// `∂L/∂v` for every vertex.
    pub upstream: Vec<Vec3>,
    /// `∇f(v)`, unnormalized.
    pub normals: Vec<Vec3>,
    /// `f(v)`; zero up to marching-cubes interpolation error.
    pub values: Vec<f64>,
}

impl SurfaceGradientBundle {
    /// Evaluates normals and values at every vertex of `mesh`.
    pub fn new(net: &SdfNetwork, z: &LatentCode, mesh: &TriMesh, upstream: Vec<Vec3>) -> Result<Self> {
        check_upstream(mesh, &upstream)?;
        let p = net.surface_partials(z, &mesh.vertices)?;
        Ok(Self {
            upstream,
            normals: p.grad_x,
            values: p.values,
        })
    }

    /// Scalar weights `u_v = -(∂L/∂v)·∇f(v)`.
    pub fn normal_speeds(&self) -> Vec<f64> {
        self.upstream
            .iter()
            .zip(&self.normals)
            .map(|(g, n)| -g.dot(n))
            .collect()
    }
}

/// `∂L/∂z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGrad {
    pub values: Vec<f64>,
}

impl LatentGrad {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BackwardOptions {
    /// Use the level-set velocity `-∇f/‖∇f‖²` instead of `-∇f`. The two agree
    /// when `‖∇f‖ = 1`.
    pub normalized: bool,
}

/// Spread of `‖∇f‖` over the vertices that took part in a backward call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradNormStats {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl GradNormStats {
    fn from_normals(normals: &[Vec3]) -> Self {
        let mut s = Self {
            count: normals.len(),
            min: f64::INFINITY,
            mean: 0.0,
            max: 0.0,
        };
        for n in normals {
            let l = n.norm();
            s.min = s.min.min(l);
            s.max = s.max.max(l);
            s.mean += l;
        }
        if s.count > 0 {
            s.mean /= s.count as f64;
        } else {
            s.min = 0.0;
        }
        s
    }
}

fn check_upstream(mesh: &TriMesh, upstream: &[Vec3]) -> Result<()> {
    if upstream.len() != mesh.vertices.len() {
        return Err(Error::Dimension {
            what: "per-vertex upstream gradients",
            expected: mesh.vertices.len(),
            actual: upstream.len(),
        });
    }
    if upstream.iter().any(|g| !g.iter().all(|c| c.is_finite())) {
        return contract("upstream gradient contains non-finite entries");
    }
    Ok(())
}

/// Vertices with a nonzero upstream gradient, their partials and weights.
struct Active {
    ids: Vec<usize>,
    partials: SurfacePartials,
    speeds: Vec<f64>,
}

fn active_terms(
    net: &SdfNetwork,
    z: &LatentCode,
    mesh: &TriMesh,
    upstream: &[Vec3],
    opts: &BackwardOptions,
) -> Result<Active> {
    check_upstream(mesh, upstream)?;
    // Zero upstream contributes an exact zero, so skipping it leaves the
    // ordered sum unchanged.
    let ids: Vec<usize> = (0..upstream.len()).filter(|&i| upstream[i] != Vec3::zeros()).collect();
    let points: Vec<Vec3> = ids.iter().map(|&i| mesh.vertices[i]).collect();
    let partials = net.surface_partials(z, &points)?;
    let speeds: Vec<f64> = ids
        .iter()
        .zip(&partials.grad_x)
        .map(|(&i, n)| {
            let u = -upstream[i].dot(n);
            if opts.normalized {
                u / n.norm_squared()
            } else {
                u
            }
        })
        .collect();
    if speeds.iter().any(|u| !u.is_finite()) {
        return contract("non-finite surface normal in backward pass");
    }
    Ok(Active { ids, partials, speeds })
}

/// `∂L/∂z` from per-vertex `∂L/∂v` on a mesh extracted at `z`.
pub fn backward_latent(net: &SdfNetwork, z: &LatentCode, mesh: &TriMesh, upstream: &[Vec3]) -> Result<LatentGrad> {
    backward_latent_with(net, z, mesh, upstream, &BackwardOptions::default()).map(|(g, _)| g)
}

/// [`backward_latent`] with options, also reporting `‖∇f‖` statistics.
pub fn backward_latent_with(
    net: &SdfNetwork,
    z: &LatentCode,
    mesh: &TriMesh,
    upstream: &[Vec3],
    opts: &BackwardOptions,
) -> Result<(LatentGrad, GradNormStats)> {
    let active = active_terms(net, z, mesh, upstream, opts)?;
    let mut values = vec![0.0; z.len()];
    for (u, gz) in active.speeds.iter().zip(&active.partials.grad_z) {
        for (acc, g) in values.iter_mut().zip(gz) {
            *acc += u * g;
        }
    }
    let stats = GradNormStats::from_normals(&active.partials.grad_x);
    log::debug!(
        "latent backward over {} vertices, |grad f| in [{:.4}, {:.4}], mean {:.4}",
        stats.count,
        stats.min,
        stats.max,
        stats.mean
    );
    Ok((LatentGrad { values }, stats))
}

/// `∂L/∂θ` from per-vertex `∂L/∂v` on a mesh extracted at `z`.
pub fn backward_params(net: &SdfNetwork, z: &LatentCode, mesh: &TriMesh, upstream: &[Vec3]) -> Result<ParamGrad> {
    backward_params_with(net, z, mesh, upstream, &BackwardOptions::default()).map(|(g, _)| g)
}

pub fn backward_params_with(
    net: &SdfNetwork,
    z: &LatentCode,
    mesh: &TriMesh,
    upstream: &[Vec3],
    opts: &BackwardOptions,
) -> Result<(ParamGrad, GradNormStats)> {
    let active = active_terms(net, z, mesh, upstream, opts)?;
    let points: Vec<Vec3> = active.ids.iter().map(|&i| mesh.vertices[i]).collect();
    let grad = net.param_gradient(z, &points, &active.speeds)?;
    Ok((grad, GradNormStats::from_normals(&active.partials.grad_x)))
}

/// Predicted and measured motion of a surface point under a field
/// perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementCheck {
    /// `-Δs(v) ∇s(v)`.
    pub predicted: Vec3,
    /// Root displacement along the normal ray, found by bisection.
    pub observed: Vec3,
}

impl DisplacementCheck {
    pub fn error(&self) -> f64 {
        (self.observed - self.predicted).norm()
    }
}

/// Lowers `field` uniformly by `eps` and compares the predicted motion of
/// the surface point `v` with the measured one.
pub fn displacement_check(field: &(impl ImplicitField + ?Sized), v: &Vec3, eps: f64) -> Result<DisplacementCheck> {
    displacement_check_with(field, |_| -eps, v)
}

/// As [`displacement_check`] for an arbitrary additive perturbation `delta`;
/// the perturbed field is `field + delta`.
pub fn displacement_check_with(
    field: &(impl ImplicitField + ?Sized),
    delta: impl Fn(&Vec3) -> f64,
    v: &Vec3,
) -> Result<DisplacementCheck> {
    let s0 = field.value(v);
    if !(s0.abs() < 1e-9) {
        return contract(format!("point is not on the surface: field value {s0:e}"));
    }
    let grad = field.gradient(v);
    let len = grad.norm();
    if !(len > 0.0) || !len.is_finite() {
        return contract("surface normal is zero or non-finite");
    }
    let dir = grad / len;
    let d0 = delta(v);
    let predicted = -d0 * grad;
    let base = |t: f64| field.value(&(v + dir * t));
    let perturbed = |t: f64| {
        let x = v + dir * t;
        field.value(&x) + delta(&x)
    };
    // Measure against the unperturbed root on the same ray so the residual
    // `s(v)` cancels.
    let t0 = bisect(base, 1e-8)?;
    let t1 = bisect(perturbed, 3.0 * d0.abs() / len + 1e-8)?;
    Ok(DisplacementCheck {
        predicted,
        observed: dir * (t1 - t0),
    })
}

/// Root of `g` on `[-half, half]`, bisected to floating-point resolution.
fn bisect(g: impl Fn(f64) -> f64, half: f64) -> Result<f64> {
    let (mut a, mut b) = (-half, half);
    let (mut ga, gb) = (g(a), g(b));
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }
    if ga.signum() == gb.signum() || !ga.is_finite() || !gb.is_finite() {
        return Err(Error::NoRoot(format!(
            "field has the same sign at both ends of [{a:e}, {b:e}]"
        )));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || b - a < 1e-15 {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return Ok(m);
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_field, AnalyticShape, Grid3D};
    use crate::marching::marching_cubes;
    use crate::sdfnet::{LatentField, NetworkConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Tiny random network whose zero level set crosses the unit box.
    fn net_and_mesh(seed: u64) -> (SdfNetwork, LatentCode, TriMesh) {
        let cfg = NetworkConfig {
            latent_dim: 3,
            hidden: vec![16, 16],
            skip_layer: Some(1),
            ..Default::default()
        };
        let mut net = SdfNetwork::new(cfg, seed).unwrap();
        let z = LatentCode(vec![0.3, -0.2, 0.1]);
        // Shift the output so the level set sits inside the box.
        let mid = net.forward(&z, &Vec3::zeros()).unwrap();
        let last = net.layers.last_mut().unwrap();
        last.bias[0] -= mid + 0.05;
        let field = LatentField::new(&net, &z).unwrap();
        let mesh = marching_cubes(&sample_field(&field, &Grid3D::unit(12).unwrap()).unwrap()).unwrap();
        assert!(!mesh.is_empty());
        (net, z, mesh)
    }

    fn random_upstream(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5))
            .collect()
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let (net, z, mesh) = net_and_mesh(1);
        let up = vec![Vec3::zeros(); mesh.vertices.len()];
        assert!(backward_latent(&net, &z, &mesh, &up)
            .unwrap()
            .values
            .iter()
            .all(|&g| g == 0.0));
        assert!(backward_params(&net, &z, &mesh, &up).unwrap().is_zero());
    }

    #[test]
    fn linear_in_upstream() {
        let (net, z, mesh) = net_and_mesh(2);
        let up = random_upstream(mesh.vertices.len(), 3);
        let alpha = 0.5;
        let scaled: Vec<Vec3> = up.iter().map(|g| g * alpha).collect();
        let a = backward_latent(&net, &z, &mesh, &up).unwrap();
        let b = backward_latent(&net, &z, &mesh, &scaled).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x * alpha, *y);
        }
        let pa = backward_params(&net, &z, &mesh, &up).unwrap().to_flat();
        let pb = backward_params(&net, &z, &mesh, &scaled).unwrap().to_flat();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(x * alpha, *y);
        }
    }

    #[test]
    fn additive_over_vertex_partitions() {
        let (net, z, mesh) = net_and_mesh(4);
        let up = random_upstream(mesh.vertices.len(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mask: Vec<bool> = (0..up.len()).map(|_| rng.random()).collect();
        let part = |keep: bool| -> Vec<Vec3> {
            up.iter()
                .zip(&mask)
                .map(|(g, &m)| if m == keep { *g } else { Vec3::zeros() })
                .collect()
        };
        let full = backward_latent(&net, &z, &mesh, &up).unwrap();
        let a = backward_latent(&net, &z, &mesh, &part(true)).unwrap();
        let b = backward_latent(&net, &z, &mesh, &part(false)).unwrap();
        for i in 0..z.len() {
            assert!((a.values[i] + b.values[i] - full.values[i]).abs() < 1e-12);
        }
        let full = backward_params(&net, &z, &mesh, &up).unwrap().to_flat();
        let a = backward_params(&net, &z, &mesh, &part(true)).unwrap().to_flat();
        let b = backward_params(&net, &z, &mesh, &part(false)).unwrap().to_flat();
        for i in 0..full.len() {
            assert!((a[i] + b[i] - full[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_per_vertex_oracle() {
        let (net, z, mesh) = net_and_mesh(7);
        let up = random_upstream(mesh.vertices.len(), 8);
        let g = backward_latent(&net, &z, &mesh, &up).unwrap();
        let mut expect = vec![0.0; z.len()];
        for (v, u) in mesh.vertices.iter().zip(&up) {
            let n = net.grad_x(&z, v).unwrap();
            let gz = net.grad_z(&z, v).unwrap();
            for k in 0..z.len() {
                expect[k] += -u.dot(&n) * gz[k];
            }
        }
        for k in 0..z.len() {
            assert!((g.values[k] - expect[k]).abs() < 1e-12 * expect[k].abs().max(1.0));
        }
        let bundle = SurfaceGradientBundle::new(&net, &z, &mesh, up.clone()).unwrap();
        let speeds = bundle.normal_speeds();
        let p = backward_params(&net, &z, &mesh, &up).unwrap().to_flat();
        let mut q = ParamGrad::zeros_like(&net);
        for (v, u) in mesh.vertices.iter().zip(&speeds) {
            q.add_assign(&net.grad_params(&z, v, *u).unwrap());
        }
        for (a, b) in p.iter().zip(q.to_flat()) {
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn normalized_mode_divides_by_squared_norm() {
        let (net, z, mesh) = net_and_mesh(9);
        let mut up = vec![Vec3::zeros(); mesh.vertices.len()];
        up[0] = Vec3::new(1.0, -2.0, 0.5);
        let opts = BackwardOptions { normalized: true };
        let (a, stats) = backward_latent_with(&net, &z, &mesh, &up, &opts).unwrap();
        let (b, _) = backward_latent_with(&net, &z, &mesh, &up, &Default::default()).unwrap();
        let n2 = net.grad_x(&z, &mesh.vertices[0]).unwrap().norm_squared();
        for k in 0..z.len() {
            assert!((a.values[k] * n2 - b.values[k]).abs() < 1e-12 * b.values[k].abs().max(1e-6));
        }
        assert_eq!(stats.count, 1);
        assert!((stats.mean - n2.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_upstream() {
        let (net, z, mesh) = net_and_mesh(10);
        let up = vec![Vec3::zeros(); mesh.vertices.len() + 1];
        assert!(matches!(
            backward_latent(&net, &z, &mesh, &up),
            Err(Error::Dimension { .. })
        ));
        assert!(backward_params(&net, &z, &mesh, &up).is_err());
        let mut bad = vec![Vec3::zeros(); mesh.vertices.len()];
        bad[0].x = f64::NAN;
        assert!(backward_latent(&net, &z, &mesh, &bad).is_err());
    }

    #[test]
    fn sphere_displacement_is_exact() {
        let sphere = AnalyticShape::sphere(0.5);
        let c = displacement_check(&sphere, &Vec3::new(0.5, 0.0, 0.0), 1e-3).unwrap();
        assert!((c.observed - Vec3::new(1e-3, 0.0, 0.0)).norm() < 1e-9);
        assert!((c.predicted - Vec3::new(1e-3, 0.0, 0.0)).norm() < 1e-15);
        let zero = displacement_check(&sphere, &Vec3::new(0.0, 0.5, 0.0), 0.0).unwrap();
        assert_eq!(zero.observed, Vec3::zeros());
        assert_eq!(zero.predicted, Vec3::zeros());
    }

    #[test]
    fn torus_error_is_second_order() {
        let torus = AnalyticShape::torus(0.4, 0.15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..50).map(|_| torus.sample_surface(&mut rng)).collect();
        let worst = |eps: f64| {
            pts.iter()
                .map(|v| {
                    let c = displacement_check_with(&torus, |x| -eps * (1.0 + x.norm_squared()), v).unwrap();
                    c.error()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (worst(1e-3), worst(5e-4));
        assert!(e1 <= 5.0 * 1e-6, "{e1}");
        assert!(e1 / e2 >= 3.5, "{e1} / {e2}");
        for v in &pts {
            assert!(displacement_check(&torus, v, 1e-3).unwrap().error() <= 5e-6);
        }
    }

    #[test]
    fn off_surface_and_oversized_perturbations_fail() {
        let sphere = AnalyticShape::sphere(0.5);
        assert!(displacement_check(&sphere, &Vec3::new(0.6, 0.0, 0.0), 1e-3).is_err());
        // The perturbed field is a positive constant.
        let r = displacement_check_with(&sphere, |x| 0.5 - x.norm() + 1e-3, &Vec3::new(0.5, 0.0, 0.0));
        assert!(r.is_err());
    }
}
