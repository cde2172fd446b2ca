//! Latent-to-mesh extraction with band tracking, and the latent objectives
//! built on it.

use serde::{Deserialize, Serialize};

use crate::diffiso::backward_latent;
use crate::error::{contract, Result};
use crate::geometry::{sample_field, Grid3D, ScalarField, Vec3};
use crate::losses::chamfer_l2_mean;
use crate::marching::{default_band, marching_cubes, sparse_resample, TriMesh};
use crate::raster::{backward_vertices, Camera, RasterConfig, SilhouetteImage};
use crate::sdfnet::{LatentCode, LatentField, SdfNetwork};
use crate::shapeopt::{latent_knn_regularizer, Evaluation, Objective, RegularizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    /// Re-evaluate only the band around the previous surface between dense
    /// refreshes.
    pub sparse: bool,
    /// Band half-width; `None` uses [`default_band`].
    pub band: Option<f64>,
    /// Dense refresh after this many consecutive sparse steps.
    pub max_sparse_steps: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            sparse: true,
            band: None,
            max_sparse_steps: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionStats {
    pub dense_passes: usize,
    pub sparse_passes: usize,
    pub evaluations: usize,
}

/// Extracts meshes for a sequence of nearby latent codes, re-using the
/// previous field outside a band around the surface.
///
/// Nodes outside the band keep stale values. They are trusted while the
/// accumulated field change stays below half the gap between the band and
/// the largest value a node next to the surface can take (`1.2 h`); beyond
/// that, or after `max_sparse_steps`, the whole grid is re-sampled.
pub struct SurfaceExtractor<'a> {
    net: &'a SdfNetwork,
    grid: Grid3D,
    cfg: TrackingConfig,
    band: f64,
    field: Option<ScalarField>,
    drift: f64,
    sparse_run: usize,
    stats: ExtractionStats,
}

impl<'a> SurfaceExtractor<'a> {
    pub fn new(net: &'a SdfNetwork, grid: Grid3D, cfg: TrackingConfig) -> Result<Self> {
        grid.validate()?;
        let band = cfg.band.unwrap_or_else(|| default_band(&grid));
        if !(band > 0.0) {
            return contract(format!("tracking band must be positive, got {band}"));
        }
        Ok(Self {
            net,
            grid,
            cfg,
            band,
            field: None,
            drift: 0.0,
            sparse_run: 0,
            stats: ExtractionStats::default(),
        })
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn net(&self) -> &SdfNetwork {
        self.net
    }

    pub fn stats(&self) -> ExtractionStats {
        self.stats
    }

    /// Forgets the tracked field; the next extraction is dense.
    pub fn reset(&mut self) {
        self.field = None;
    }

    fn drift_budget(&self) -> f64 {
        0.5 * (self.band - 1.2 * self.grid.h())
    }

    /// Samples the field for `z` and runs marching cubes.
    pub fn extract(&mut self, z: &LatentCode) -> Result<TriMesh> {
        let eval = LatentField::new(self.net, z)?;
        let reuse = self.cfg.sparse && self.sparse_run < self.cfg.max_sparse_steps && self.drift < self.drift_budget();
        let field = match self.field.take() {
            Some(prev) if reuse => {
                let r = sparse_resample(&prev, &eval, self.band)?;
                self.stats.sparse_passes += 1;
                self.stats.evaluations += r.evaluations;
                self.drift += r.max_change;
                self.sparse_run += 1;
                r.field
            }
            _ => {
                let f = sample_field(&eval, &self.grid)?;
                self.stats.dense_passes += 1;
                self.stats.evaluations += self.grid.node_count();
                self.drift = 0.0;
                self.sparse_run = 0;
                f
            }
        };
        let mesh = marching_cubes(&field)?;
        self.field = Some(field);
        Ok(mesh)
    }
}

fn require_surface(mesh: &TriMesh) -> Result<()> {
    if mesh.vertices.is_empty() {
        return contract("latent code produces no surface inside the grid");
    }
    Ok(())
}

/// Mean-normalized two-sided Chamfer distance between the extracted mesh
/// vertices and a fixed target cloud, plus an optional latent prior.
pub struct ChamferObjective<'a> {
    extractor: SurfaceExtractor<'a>,
    target: Vec<Vec3>,
    regularizer: Option<RegularizerConfig>,
    mesh: Option<TriMesh>,
}

impl<'a> ChamferObjective<'a> {
    pub fn new(
        extractor: SurfaceExtractor<'a>,
        target: Vec<Vec3>,
        regularizer: Option<RegularizerConfig>,
    ) -> Result<Self> {
        if target.is_empty() {
            return contract("Chamfer target is empty");
        }
        if let Some(r) = &regularizer {
            r.validate()?;
        }
        Ok(Self {
            extractor,
            target,
            regularizer,
            mesh: None,
        })
    }

    pub fn extractor(&self) -> &SurfaceExtractor<'a> {
        &self.extractor
    }
}

impl Objective for ChamferObjective<'_> {
    fn evaluate(&mut self, z: &LatentCode) -> Result<Evaluation> {
        let mesh = self.extractor.extract(z)?;
        require_surface(&mesh)?;
        let c = chamfer_l2_mean(&mesh.vertices, &self.target)?;
        let g = backward_latent(self.extractor.net(), z, &mesh, &c.grad)?;
        let mut eval = Evaluation {
            value: c.value,
            grad: g.values,
            parts: vec![("chamfer", c.value)],
        };
        if let Some(reg) = &self.regularizer {
            let (r, rg) = latent_knn_regularizer(z, reg)?;
            eval.add("regularizer", r, &rg);
        }
        self.mesh = Some(mesh);
        Ok(eval)
    }

    fn mesh(&self) -> Option<&TriMesh> {
        self.mesh.as_ref()
    }
}

/// Summed L1 silhouette error over one or more calibrated views.
pub struct SilhouetteObjective<'a> {
    extractor: SurfaceExtractor<'a>,
    views: Vec<(Camera, SilhouetteImage)>,
    raster: RasterConfig,
    mesh: Option<TriMesh>,
}

impl<'a> SilhouetteObjective<'a> {
    pub fn new(
        extractor: SurfaceExtractor<'a>,
        views: Vec<(Camera, SilhouetteImage)>,
        raster: RasterConfig,
    ) -> Result<Self> {
        raster.validate()?;
        if views.is_empty() {
            return contract("silhouette objective needs at least one view");
        }
        for (cam, img) in &views {
            cam.validate()?;
            img.validate()?;
            if cam.width != img.width || cam.height != img.height {
                return contract(format!(
                    "camera is {}x{} but target image is {}x{}",
                    cam.width, cam.height, img.width, img.height
                ));
            }
        }
        Ok(Self {
            extractor,
            views,
            raster,
            mesh: None,
        })
    }
}

impl Objective for SilhouetteObjective<'_> {
    fn evaluate(&mut self, z: &LatentCode) -> Result<Evaluation> {
        let mesh = self.extractor.extract(z)?;
        let mut value = 0.0;
        let mut upstream = vec![Vec3::zeros(); mesh.vertices.len()];
        for (cam, target) in &self.views {
            let b = backward_vertices(&mesh, cam, &self.raster, target)?;
            value += b.loss;
            for (u, g) in upstream.iter_mut().zip(&b.grad) {
                *u += g;
            }
        }
        let grad = backward_latent(self.extractor.net(), z, &mesh, &upstream)?.values;
        self.mesh = Some(mesh);
        Ok(Evaluation {
            value,
            grad,
            parts: vec![("silhouette", value)],
        })
    }

    fn mesh(&self) -> Option<&TriMesh> {
        self.mesh.as_ref()
    }
}
