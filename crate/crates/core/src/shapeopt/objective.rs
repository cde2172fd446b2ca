use super::constraint::{constraint_penalty, ConstraintBox};
use super::drag::{drag, DragConfig};
use super::optimize::{Evaluation, Objective};
use super::regularizer::{latent_knn_regularizer, RegularizerConfig};
use crate::diffiso::backward_latent;
use crate::error::{contract, Result};
use crate::geometry::Grid3D;
use crate::marching::TriMesh;
use crate::pipeline::{SurfaceExtractor, TrackingConfig};
use crate::sdfnet::{LatentCode, SdfNetwork};

/// Drag plus enclosure penalty on the extracted surface, plus the latent
/// prior.
pub struct DragObjective<'a> {
    extractor: SurfaceExtractor<'a>,
    drag: DragConfig,
    boxes: Vec<ConstraintBox>,
    regularizer: RegularizerConfig,
    mesh: Option<TriMesh>,
}

impl<'a> DragObjective<'a> {
    pub fn extractor(&self) -> &SurfaceExtractor<'a> {
        &self.extractor
    }
}

pub fn assemble_drag_objective<'a>(
    net: &'a SdfNetwork,
    grid: &Grid3D,
    drag_cfg: &DragConfig,
    boxes: &[ConstraintBox],
    regularizer: &RegularizerConfig,
) -> Result<DragObjective<'a>> {
    assemble_drag_objective_with(net, grid, drag_cfg, boxes, regularizer, TrackingConfig::default())
}

pub fn assemble_drag_objective_with<'a>(
    net: &'a SdfNetwork,
    grid: &Grid3D,
    drag_cfg: &DragConfig,
    boxes: &[ConstraintBox],
    regularizer: &RegularizerConfig,
    tracking: TrackingConfig,
) -> Result<DragObjective<'a>> {
    drag_cfg.validate()?;
    for b in boxes {
        b.validate()?;
    }
    regularizer.validate()?;
    Ok(DragObjective {
        extractor: SurfaceExtractor::new(net, *grid, tracking)?,
        drag: *drag_cfg,
        boxes: boxes.to_vec(),
        regularizer: regularizer.clone(),
        mesh: None,
    })
}

impl Objective for DragObjective<'_> {
    fn evaluate(&mut self, z: &LatentCode) -> Result<Evaluation> {
        let mesh = self.extractor.extract(z)?;
        if mesh.vertices.is_empty() {
            return contract("latent code produces no surface inside the grid");
        }
        let d = drag(&mesh, &self.drag)?;
        let c = constraint_penalty(&mesh, &self.boxes)?;
        let upstream: Vec<_> = d.grad.iter().zip(&c.grad).map(|(a, b)| a + b).collect();
        let g = backward_latent(self.extractor.net(), z, &mesh, &upstream)?;
        let mut eval = Evaluation {
            value: d.value + c.value,
            grad: g.values,
            parts: vec![("drag", d.value), ("constraint", c.value)],
        };
        let (r, rg) = latent_knn_regularizer(z, &self.regularizer)?;
        eval.add("regularizer", r, &rg);
        self.mesh = Some(mesh);
        Ok(eval)
    }

    fn mesh(&self) -> Option<&TriMesh> {
        self.mesh.as_ref()
    }
}
