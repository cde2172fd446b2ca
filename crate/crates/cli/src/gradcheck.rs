//! Finite-difference checks of every analytic gradient, run against a
//! checkpoint.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use isomesh::diffiso::displacement_check;
use isomesh::geometry::sample_field;
use isomesh::losses::chamfer_l2;
use isomesh::marching::marching_cubes;
use isomesh::raster::{backward_vertices, silhouette_l1, soft_silhouette, Camera, RasterConfig};
use isomesh::sdfnet::{LatentCode, LatentField};
use isomesh::shapeopt::{constraint_penalty, drag, ConstraintBox, DragConfig};
use isomesh::{Grid3D, ImplicitField, SdfNetwork, TriMesh, Vec3};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checks: usize,
    /// `null` in JSON when a comparison produced a non-finite value.
    pub worst_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

fn rel(analytic: &[f64], fd: &[f64]) -> f64 {
    rel_floor(analytic, fd, 1e-8)
}

/// Relative error with the reference norm clamped below at `floor`.
fn rel_floor(analytic: &[f64], fd: &[f64], floor: f64) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt().max(floor);
    diff / scale
}

fn max_abs(grad: &[Vec3]) -> f64 {
    grad.iter().map(|g| g.amax()).fold(0.0, f64::max)
}

struct Suite {
    name: &'static str,
    tolerance: f64,
    checks: usize,
    worst: f64,
}

impl Suite {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            checks: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, err: f64) {
        self.checks += 1;
        if err.is_nan() {
            self.worst = f64::NAN;
        } else if err > self.worst {
            self.worst = err;
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name,
            checks: self.checks,
            worst_relative_error: self.worst,
            tolerance: self.tolerance,
            passed: self.checks > 0 && self.worst.is_finite() && self.worst < self.tolerance,
        }
    }
}

fn central(h: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

fn network_suite(net: &SdfNetwork, z: &LatentCode, rng: &mut ChaCha8Rng, points: usize) -> Result<SuiteResult> {
    let mut s = Suite::new("sdfnet", 1e-5);
    let h = 1e-5;
    let params = net.params_flat();
    for _ in 0..points {
        let x = Vec3::from_fn(|_, _| rng.random_range(-0.8..0.8));
        let gx = net.grad_x(z, &x)?;
        let fd: Vec<f64> = (0..3)
            .map(|a| {
                central(h, |d| {
                    let mut y = x;
                    y[a] += d;
                    net.forward(z, &y).unwrap_or(f64::NAN)
                })
            })
            .collect();
        s.record(rel(gx.as_slice(), &fd));
        let gz = net.grad_z(z, &x)?;
        let fd: Vec<f64> = (0..z.len())
            .map(|k| {
                central(h, |d| {
                    let mut w = z.clone();
                    w.0[k] += d;
                    net.forward(&w, &x).unwrap_or(f64::NAN)
                })
            })
            .collect();
        s.record(rel(&gz, &fd));
        let gp = net.grad_params(z, &x, 1.0)?.to_flat();
        let picks: Vec<usize> = (0..8).map(|_| rng.random_range(0..params.len())).collect();
        let mut probe = net.clone();
        let fd: Vec<f64> = picks
            .iter()
            .map(|&i| {
                central(h, |d| {
                    let mut p = params.clone();
                    p[i] += d;
                    probe.set_params_flat(&p).expect("same length");
                    probe.forward(z, &x).unwrap_or(f64::NAN)
                })
            })
            .collect();
        let analytic: Vec<f64> = picks.iter().map(|&i| gp[i]).collect();
        s.record(rel(&analytic, &fd));
    }
    Ok(s.finish())
}

/// Newton steps along the gradient onto the zero level set.
fn project(field: &impl ImplicitField, mut v: Vec3) -> Option<Vec3> {
    for _ in 0..30 {
        let s = field.value(&v);
        if s.abs() < 1e-12 {
            return Some(v);
        }
        let g = field.gradient(&v);
        v -= g * (s / g.norm_squared());
    }
    (field.value(&v).abs() < 1e-10).then_some(v)
}

/// Level-set motion under a uniform decrement; the prediction is rescaled by
/// `1/|∇f|²` so the check does not depend on how close `f` is to a distance.
fn surface_suite(field: &LatentField, mesh: &TriMesh, samples: usize) -> SuiteResult {
    let mut s = Suite::new("diffiso", 1e-2);
    let eps = 1e-4;
    let stride = (mesh.vertices.len() / samples.max(1)).max(1);
    for v in mesh.vertices.iter().step_by(stride).take(samples) {
        let err = match project(field, *v).map(|p| displacement_check(field, &p, eps)) {
            Some(Ok(c)) => {
                let predicted = c.predicted / c.predicted.norm_squared() * eps * eps;
                (c.observed - predicted).norm() / predicted.norm()
            }
            _ => f64::NAN,
        };
        s.record(err);
    }
    s.finish()
}

fn loss_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("losses", 1e-6);
    let h = 1e-6;
    let cloud = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect()
    };
    for _ in 0..5 {
        let p = cloud(rng, 30);
        let q = cloud(rng, 40);
        let c = chamfer_l2(&p, &q)?;
        let mut fd = Vec::with_capacity(p.len() * 3);
        for i in 0..p.len() {
            for a in 0..3 {
                fd.push(central(h, |d| {
                    let mut pp = p.clone();
                    pp[i][a] += d;
                    chamfer_l2(&pp, &q).map_or(f64::NAN, |r| r.value)
                }));
            }
        }
        let analytic: Vec<f64> = c.grad.iter().flat_map(|g| g.iter().copied()).collect();
        s.record(rel(&analytic, &fd));
    }
    Ok(s.finish())
}

fn raster_suite(mesh: &TriMesh, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("raster", 1e-3);
    let cam = Camera::orbit(2.5, 0.4, 0.3, 0.9, 24, 20)?;
    let cfg = RasterConfig::default();
    let shifted = TriMesh {
        vertices: mesh.vertices.iter().map(|v| v * 1.1).collect(),
        faces: mesh.faces.clone(),
        vertex_edges: mesh.vertex_edges.clone(),
    };
    let target = soft_silhouette(&shifted, &cam, &cfg)?;
    let b = backward_vertices(mesh, &cam, &cfg, &target)?;
    let h = 1e-6;
    let mut candidates: Vec<(usize, usize)> = (0..mesh.vertices.len())
        .flat_map(|v| (0..3).map(move |a| (v, a)))
        .filter(|&(v, a)| b.grad[v][a].abs() > 1e-2)
        .collect();
    for _ in 0..24.min(candidates.len()) {
        let (v, a) = candidates.swap_remove(rng.random_range(0..candidates.len()));
        let fd = central(h, |d| {
            let mut m = mesh.clone();
            m.vertices[v][a] += d;
            soft_silhouette(&m, &cam, &cfg)
                .and_then(|img| silhouette_l1(&img, &target))
                .unwrap_or(f64::NAN)
        });
        s.record(rel(&[b.grad[v][a]], &[fd]));
    }
    Ok(s.finish())
}

fn shape_suite(mesh: &TriMesh, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("shapeopt", 1e-4);
    let cfg = DragConfig::default();
    let (lo, hi) = mesh.bounding_box().expect("non-empty mesh");
    let boxes = [ConstraintBox {
        min_corner: lo + (hi - lo) * 0.13,
        max_corner: hi - (hi - lo) * 0.07,
        weight: 1.0,
    }];
    let d = drag(mesh, &cfg)?;
    let c = constraint_penalty(mesh, &boxes)?;
    let h = 1e-6;
    let (dfloor, cfloor) = (1e-3 * max_abs(&d.grad), 1e-3 * max_abs(&c.grad));
    for _ in 0..24 {
        let v = rng.random_range(0..mesh.vertices.len());
        let a = rng.random_range(0..3);
        let perturbed = |delta: f64| {
            let mut m = mesh.clone();
            m.vertices[v][a] += delta;
            m
        };
        let fd = central(h, |x| drag(&perturbed(x), &cfg).map_or(f64::NAN, |r| r.value));
        s.record(rel_floor(&[d.grad[v][a]], &[fd], dfloor));
        let fd = central(h, |x| {
            constraint_penalty(&perturbed(x), &boxes).map_or(f64::NAN, |r| r.value)
        });
        s.record(rel_floor(&[c.grad[v][a]], &[fd], cfloor));
    }
    Ok(s.finish())
}

pub fn run(net: &SdfNetwork, latents: &[LatentCode], seed: u64) -> Result<Report> {
    if !net.is_finite() {
        let suites = ["sdfnet", "diffiso", "losses", "raster", "shapeopt"]
            .into_iter()
            .map(|name| SuiteResult {
                name,
                checks: 0,
                worst_relative_error: f64::NAN,
                tolerance: 0.0,
                passed: false,
            })
            .collect();
        return Ok(Report { suites, passed: false });
    }
    let z = latents
        .first()
        .cloned()
        .unwrap_or_else(|| LatentCode::zeros(net.latent_dim()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = LatentField::new(net, &z)?;
    let mesh = marching_cubes(&sample_field(&field, &Grid3D::unit(24)?)?)?;
    if mesh.is_empty() {
        bail!("latent code 0 produces no surface; cannot run the surface suites");
    }
    let suites = vec![
        network_suite(net, &z, &mut rng, 20)?,
        surface_suite(&field, &mesh, 50),
        loss_suite(&mut rng)?,
        raster_suite(&mesh, &mut rng)?,
        shape_suite(&mesh, &mut rng)?,
    ];
    let passed = suites.iter().all(|s| s.passed);
    Ok(Report { suites, passed })
}
