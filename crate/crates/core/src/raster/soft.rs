use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::camera::{Camera, DeviceProjection};
use crate::error::{contract, Result};
use crate::exec;
use crate::geometry::Vec3;
use crate::marching::TriMesh;

type Vec2 = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    /// Edge softness in squared device units.
    pub sigma: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self { sigma: 1e-3 }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return contract(format!("raster sigma must be positive, got {}", self.sigma));
        }
        Ok(())
    }
}

/// Coverage image in `[0, 1]`, row-major from the top-left pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SilhouetteImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let img = Self { width, height, values };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.width * self.height {
            return contract(format!(
                "image buffer holds {} values for {}x{} pixels",
                self.values.len(),
                self.width,
                self.height
            ));
        }
        if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return contract("image values must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    fn same_size(&self, other: &SilhouetteImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return contract(format!(
                "image sizes differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            ));
        }
        Ok(())
    }
}

/// `Σ |I - S|` over all pixels.
pub fn silhouette_l1(image: &SilhouetteImage, target: &SilhouetteImage) -> Result<f64> {
    image.same_size(target)?;
    Ok(image
        .values
        .iter()
        .zip(&target.values)
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// Renders the soft silhouette of `mesh`.
pub fn soft_silhouette(mesh: &TriMesh, camera: &Camera, cfg: &RasterConfig) -> Result<SilhouetteImage> {
    Ok(render(mesh, camera, cfg, None)?.image)
}

/// Silhouette L1 loss against `target` and its gradient with respect to the
/// mesh vertices.
#[derive(Debug, Clone)]
pub struct SilhouetteBackward {
    pub image: SilhouetteImage,
    pub loss: f64,
    pub grad: Vec<Vec3>,
}

/// Renders, scores against `target` and differentiates in one pass.
pub fn backward_vertices(
    mesh: &TriMesh,
    camera: &Camera,
    cfg: &RasterConfig,
    target: &SilhouetteImage,
) -> Result<SilhouetteBackward> {
    let out = render(mesh, camera, cfg, Some(target))?;
    let (loss, grad) = out.backward.expect("target given");
    Ok(SilhouetteBackward {
        image: out.image,
        loss,
        grad,
    })
}

struct RenderOutput {
    image: SilhouetteImage,
    backward: Option<(f64, Vec<Vec3>)>,
}

/// A projected triangle with its pixel footprint.
struct ScreenTri {
    face: usize,
    corners: [Vec2; 3],
    /// Inclusive pixel column range of the inflated bounding box.
    cols: (usize, usize),
}

/// Coverage of one triangle at one pixel and its derivative with respect
/// to the six projected corner coordinates.
struct Influence {
    tri: usize,
    coverage: f64,
    d_corners: [Vec2; 3],
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn cross2(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Squared distance from `p` to segment `ab` and its partials with respect
/// to `a` and `b` at the fixed closest-point parameter.
fn segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> (f64, Vec2, Vec2) {
    let e = b - a;
    let len2 = e.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&e) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c = a + e * t;
    let r = p - c;
    (r.norm_squared(), r * (-2.0 * (1.0 - t)), r * (-2.0 * t))
}

fn influence(p: &Vec2, tri: &ScreenTri, index: usize, sigma: f64) -> Influence {
    let [a, b, c] = &tri.corners;
    let area2 = cross2(&(b - a), &(c - a));
    let inside = if area2 == 0.0 {
        false
    } else {
        let s = area2.signum();
        cross2(&(b - a), &(p - a)) * s >= 0.0
            && cross2(&(c - b), &(p - b)) * s >= 0.0
            && cross2(&(a - c), &(p - c)) * s >= 0.0
    };
    let edges = [(0, 1), (1, 2), (2, 0)];
    let mut best = (f64::INFINITY, 0, Vec2::zeros(), Vec2::zeros());
    for (k, &(i, j)) in edges.iter().enumerate() {
        let (d2, ga, gb) = segment_distance(p, &tri.corners[i], &tri.corners[j]);
        if d2 < best.0 {
            best = (d2, k, ga, gb);
        }
    }
    let sign = if inside { 1.0 } else { -1.0 };
    let coverage = sigmoid(sign * best.0 / sigma);
    let slope = sign * coverage * (1.0 - coverage) / sigma;
    let mut d_corners = [Vec2::zeros(); 3];
    let (i, j) = edges[best.1];
    d_corners[i] = best.2 * slope;
    d_corners[j] = best.3 * slope;
    Influence {
        tri: index,
        coverage,
        d_corners,
    }
}

fn render(
    mesh: &TriMesh,
    camera: &Camera,
    cfg: &RasterConfig,
    target: Option<&SilhouetteImage>,
) -> Result<RenderOutput> {
    camera.validate()?;
    cfg.validate()?;
    let (w, h) = (camera.width, camera.height);
    if let Some(t) = target {
        t.same_size(&SilhouetteImage::new(w, h))?;
    }
    let basis = camera.basis();
    let projected: Vec<Option<DeviceProjection>> = exec::map_slice(&mesh.vertices, |v| camera.device(&basis, v));

    let reach = 3.0 * cfg.sigma.sqrt();
    let scale = camera.scale();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); h];
    let mut tris = Vec::new();
    for (face, f) in mesh.faces.iter().enumerate() {
        let (Some(p0), Some(p1), Some(p2)) = (&projected[f[0]], &projected[f[1]], &projected[f[2]]) else {
            continue;
        };
        let corners = [p0.ndc, p1.ndc, p2.ndc];
        let lo = corners[0].inf(&corners[1]).inf(&corners[2]) - Vec2::repeat(reach);
        let hi = corners[0].sup(&corners[1]).sup(&corners[2]) + Vec2::repeat(reach);
        // Pixel (i, j) is inside the box when its center is.
        let col_lo = ((0.5 * w as f64 + lo.x * scale) - 0.5).ceil();
        let col_hi = ((0.5 * w as f64 + hi.x * scale) - 0.5).floor();
        let row_lo = ((0.5 * h as f64 - hi.y * scale) - 0.5).ceil();
        let row_hi = ((0.5 * h as f64 - lo.y * scale) - 0.5).floor();
        if col_hi < 0.0
            || row_hi < 0.0
            || col_lo > (w - 1) as f64
            || row_lo > (h - 1) as f64
            || col_lo > col_hi
            || row_lo > row_hi
        {
            continue;
        }
        let cols = (col_lo.max(0.0) as usize, (col_hi as usize).min(w - 1));
        let index = tris.len();
        tris.push(ScreenTri { face, corners, cols });
        for row in rows
            .iter_mut()
            .take((row_hi as usize).min(h - 1) + 1)
            .skip(row_lo.max(0.0) as usize)
        {
            row.push(index);
        }
    }

    let want_grad = target.is_some();
    let row_ids: Vec<usize> = (0..h).collect();
    let row_results = exec::map_slice(&row_ids, |&j| {
        let mut values = vec![0.0; w];
        let mut contrib: Vec<(usize, [Vec2; 3])> = Vec::new();
        let mut loss = 0.0;
        let mut infl = Vec::new();
        let mut suffix = Vec::new();
        for (i, value) in values.iter_mut().enumerate() {
            let p = camera.pixel_center(i, j);
            infl.clear();
            for &t in &rows[j] {
                let tri = &tris[t];
                if i >= tri.cols.0 && i <= tri.cols.1 {
                    infl.push(influence(&p, tri, t, cfg.sigma));
                }
            }
            let empty: f64 = infl.iter().map(|x| 1.0 - x.coverage).product();
            let coverage = 1.0 - empty;
            *value = coverage;
            let Some(target) = target else { continue };
            let s = target.values[j * w + i];
            loss += (coverage - s).abs();
            let d_loss = if coverage > s {
                1.0
            } else if coverage < s {
                -1.0
            } else {
                0.0
            };
            if d_loss == 0.0 || infl.is_empty() {
                continue;
            }
            // ∂I/∂D_t = Π_{t'≠t} (1 - D_t'), from prefix and suffix products.
            suffix.clear();
            suffix.resize(infl.len() + 1, 1.0);
            for k in (0..infl.len()).rev() {
                suffix[k] = suffix[k + 1] * (1.0 - infl[k].coverage);
            }
            let mut prefix = 1.0;
            for (k, x) in infl.iter().enumerate() {
                let weight = d_loss * prefix * suffix[k + 1];
                prefix *= 1.0 - x.coverage;
                if weight == 0.0 {
                    continue;
                }
                contrib.push((x.tri, x.d_corners.map(|g| g * weight)));
            }
        }
        (values, loss, contrib)
    });

    let mut image = SilhouetteImage::new(w, h);
    let mut loss = 0.0;
    let mut screen_grad = vec![Vec2::zeros(); mesh.vertices.len()];
    for (j, (values, row_loss, contrib)) in row_results.into_iter().enumerate() {
        image.values[j * w..(j + 1) * w].copy_from_slice(&values);
        loss += row_loss;
        for (t, g) in contrib {
            let f = mesh.faces[tris[t].face];
            for c in 0..3 {
                screen_grad[f[c]] += g[c];
            }
        }
    }
    let backward = want_grad.then(|| {
        let grad = screen_grad
            .iter()
            .zip(&projected)
            .map(|(g, p)| match p {
                Some(p) => p.d_ndc[0] * g.x + p.d_ndc[1] * g.y,
                None => Vec3::zeros(),
            })
            .collect();
        (loss, grad)
    });
    Ok(RenderOutput { image, backward })
}
