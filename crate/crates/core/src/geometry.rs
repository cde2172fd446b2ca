//! Analytic signed distance shapes, sampling grids and scalar fields.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::exec;
use crate::sdfnet::SampleSet;

pub type Vec3 = Vector3<f64>;

/// Number of grid nodes evaluated per batch when sampling a field.
const SAMPLE_CHUNK: usize = 4096;

/// A scalar field over R³ whose zero level set is the surface of interest.
pub trait ImplicitField: Sync {
    fn value(&self, p: &Vec3) -> f64;

    fn gradient(&self, p: &Vec3) -> Vec3;

    /// Evaluates many points at once. Implementations must return exactly
    /// the values `value` would, independent of how points are batched.
    fn values(&self, points: &[Vec3]) -> Vec<f64> {
        points.iter().map(|p| self.value(p)).collect()
    }
}

/// Wraps a plain closure as an [`ImplicitField`]; gradients by central
/// differences.
pub struct FnField<F>(pub F);

impl<F> ImplicitField for FnField<F>
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    fn value(&self, p: &Vec3) -> f64 {
        (self.0)(p)
    }

    fn gradient(&self, p: &Vec3) -> Vec3 {
        let h = 1e-6;
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            g[a] = ((self.0)(&(p + e)) - (self.0)(&(p - e))) / (2.0 * h);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere {
        radius: f64,
    },
    /// Symmetry axis is z.
    Torus {
        major: f64,
        minor: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticShape {
    #[serde(flatten)]
    pub kind: ShapeKind,
    pub center: Vec3,
}

impl AnalyticShape {
    pub fn sphere(radius: f64) -> Self {
        Self {
            kind: ShapeKind::Sphere { radius },
            center: Vec3::zeros(),
        }
    }

    pub fn torus(major: f64, minor: f64) -> Self {
        Self {
            kind: ShapeKind::Torus { major, minor },
            center: Vec3::zeros(),
        }
    }

    pub fn with_center(mut self, center: Vec3) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ShapeKind::Sphere { radius } if !(radius > 0.0) => {
                contract(format!("sphere radius must be positive, got {radius}"))
            }
            ShapeKind::Torus { major, minor } if !(minor > 0.0 && major > minor) => contract(format!(
                "torus requires major > minor > 0, got major={major} minor={minor}"
            )),
            _ => Ok(()),
        }
    }

    /// Genus of the surface: 0 for spheres, 1 for tori.
    pub fn genus(&self) -> i64 {
        match self.kind {
            ShapeKind::Sphere { .. } => 0,
            ShapeKind::Torus { .. } => 1,
        }
    }

    pub fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match self.kind {
            ShapeKind::Sphere { radius } => 4.0 * PI * radius * radius,
            ShapeKind::Torus { major, minor } => 4.0 * PI * PI * major * minor,
        }
    }

    /// Draws a point uniformly by area on the surface.
    pub fn sample_surface<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match self.kind {
            ShapeKind::Sphere { radius } => {
                let d: [f64; 3] = UnitSphere.sample(rng);
                self.center + Vec3::from(d) * radius
            }
            ShapeKind::Torus { major, minor } => {
                // The area element is proportional to (R + r cos v).
                let tube = loop {
                    let v = rng.random_range(0.0..std::f64::consts::TAU);
                    let accept = rng.random_range(0.0..(major + minor));
                    if accept <= major + minor * v.cos() {
                        break v;
                    }
                };
                let u = rng.random_range(0.0..std::f64::consts::TAU);
                let rho = major + minor * tube.cos();
                self.center + Vec3::new(rho * u.cos(), rho * u.sin(), minor * tube.sin())
            }
        }
    }
}

/// Signed distance to an analytic shape; negative inside.
pub fn analytic_sdf(shape: &AnalyticShape, x: &Vec3) -> f64 {
    let p = x - shape.center;
    match shape.kind {
        ShapeKind::Sphere { radius } => p.norm() - radius,
        ShapeKind::Torus { major, minor } => {
            let rho = (p.x * p.x + p.y * p.y).sqrt();
            ((rho - major).powi(2) + p.z * p.z).sqrt() - minor
        }
    }
}

impl ImplicitField for AnalyticShape {
    fn value(&self, p: &Vec3) -> f64 {
        analytic_sdf(self, p)
    }

    fn gradient(&self, x: &Vec3) -> Vec3 {
        let p = x - self.center;
        match self.kind {
            ShapeKind::Sphere { .. } => {
                let n = p.norm();
                if n == 0.0 {
                    Vec3::x()
                } else {
                    p / n
                }
            }
            ShapeKind::Torus { major, .. } => {
                let rho = (p.x * p.x + p.y * p.y).sqrt();
                let (cx, cy) = if rho == 0.0 { (1.0, 0.0) } else { (p.x / rho, p.y / rho) };
                let q = Vec3::new(rho - major, 0.0, p.z);
                let d = q.norm();
                if d == 0.0 {
                    return Vec3::new(cx, cy, 0.0);
                }
                Vec3::new(q.x * cx / d, q.x * cy / d, q.z / d)
            }
        }
    }
}

/// Axis-aligned grid of `resolution³` nodes, corners included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3D {
    pub min_corner: Vec3,
    pub max_corner: Vec3,
    pub resolution: usize,
}

impl Grid3D {
    pub fn new(min_corner: Vec3, max_corner: Vec3, resolution: usize) -> Result<Self> {
        let g = Self {
            min_corner,
            max_corner,
            resolution,
        };
        g.validate()?;
        Ok(g)
    }

    /// The `[-1, 1]³` domain used throughout.
    pub fn unit(resolution: usize) -> Result<Self> {
        Self::new(Vec3::repeat(-1.0), Vec3::repeat(1.0), resolution)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return contract(format!("grid resolution must be >= 2, got {}", self.resolution));
        }
        if (0..3).any(|a| !(self.max_corner[a] > self.min_corner[a])) {
            return contract("grid max corner must exceed min corner on every axis");
        }
        Ok(())
    }

    pub fn spacing(&self) -> Vec3 {
        (self.max_corner - self.min_corner) / (self.resolution - 1) as f64
    }

    /// Largest per-axis spacing.
    pub fn h(&self) -> f64 {
        self.spacing().max()
    }

    pub fn node_count(&self) -> usize {
        self.resolution.pow(3)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.resolution;
        i + n * (j + n * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.resolution;
        (idx % n, (idx / n) % n, idx / (n * n))
    }

    #[inline]
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let t = (self.resolution - 1) as f64;
        let lerp = |a: usize, c: usize| {
            let s = c as f64 / t;
            self.min_corner[a] + (self.max_corner[a] - self.min_corner[a]) * s
        };
        Vec3::new(lerp(0, i), lerp(1, j), lerp(2, k))
    }

    #[inline]
    pub fn node_position_at(&self, idx: usize) -> Vec3 {
        let (i, j, k) = self.coords(idx);
        self.node_position(i, j, k)
    }
}

/// Field samples on every node of a [`Grid3D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid3D,
    pub values: Vec<f64>,
    pub valid_mask: Vec<bool>,
}

impl ScalarField {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn is_fully_valid(&self) -> bool {
        self.valid_mask.iter().all(|&v| v)
    }
}

/// Evaluates `evaluator` at the listed node indices, in order.
pub(crate) fn evaluate_nodes(
    evaluator: &(impl ImplicitField + ?Sized),
    grid: &Grid3D,
    nodes: &[usize],
) -> Result<Vec<f64>> {
    let chunks = exec::map_chunks(nodes, SAMPLE_CHUNK, |_, idx| {
        let pts: Vec<Vec3> = idx.iter().map(|&n| grid.node_position_at(n)).collect();
        evaluator.values(&pts)
    });
    let values: Vec<f64> = chunks.into_iter().flatten().collect();
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        let (i, j, k) = grid.coords(nodes[pos]);
        return Err(Error::NonFiniteNode {
            i,
            j,
            k,
            value: values[pos],
        });
    }
    Ok(values)
}

/// Dense sampling of `evaluator` on every grid node.
pub fn sample_field(evaluator: &(impl ImplicitField + ?Sized), grid: &Grid3D) -> Result<ScalarField> {
    grid.validate()?;
    let nodes: Vec<usize> = (0..grid.node_count()).collect();
    let values = evaluate_nodes(evaluator, grid, &nodes)?;
    Ok(ScalarField {
        grid: *grid,
        valid_mask: vec![true; values.len()],
        values,
    })
}

/// Training samples for one analytic shape: `n_surface` surface points
/// jittered by Gaussian noise (cycling through `sigmas`) plus `n_uniform`
/// points uniform in `[-1, 1]³`, all labelled with the exact signed distance.
pub fn sample_training_points(
    shape: &AnalyticShape,
    shape_id: usize,
    n_surface: usize,
    n_uniform: usize,
    sigmas: &[f64],
    seed: u64,
) -> Result<SampleSet> {
    shape.validate()?;
    if n_surface + n_uniform == 0 {
        return contract("sample counts must not both be zero");
    }
    if n_surface > 0 && sigmas.is_empty() {
        return contract("surface sampling needs at least one noise level");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_surface + n_uniform);
    for s in 0..n_surface {
        let sigma = sigmas[s % sigmas.len()];
        let mut p = shape.sample_surface(&mut rng);
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("finite sigma");
            p += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
        }
        points.push((p, analytic_sdf(shape, &p)));
    }
    for _ in 0..n_uniform {
        let p = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        points.push((p, analytic_sdf(shape, &p)));
    }
    Ok(SampleSet { points, shape_id })
}
