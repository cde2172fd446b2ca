use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use isomesh::optim::AdamConfig;
use isomesh::pipeline::TrackingConfig;
use isomesh::raster::{Camera, RasterConfig};
use isomesh::sdfnet::{DatasetConfig, NetworkConfig, TrainConfig};
use isomesh::shapeopt::{ConstraintBox, DragConfig, RegularizerConfig};
use isomesh::{Grid3D, Vec3};

/// Everything a run needs. Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: Grid3D,
    pub network: NetworkConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub raster: RasterConfig,
    pub drag: DragConfig,
    pub boxes: Vec<ConstraintBox>,
    pub regularizer: RegularizerConfig,
    pub adam: AdamConfig,
    pub tracking: TrackingConfig,
    pub paths: Paths,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub checkpoint: Option<PathBuf>,
    /// OBJ for Chamfer fitting, PGM images for silhouette fitting.
    pub targets: Vec<PathBuf>,
    /// Camera JSON files, one per silhouette target.
    pub cameras: Vec<PathBuf>,
    /// Latent-table index or path of a JSON array.
    pub latent: Option<String>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: Grid3D::new(Vec3::repeat(-1.0), Vec3::repeat(1.0), 64).expect("valid default grid"),
            network: NetworkConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig {
                lr_halving_every: 600,
                ..Default::default()
            },
            raster: RasterConfig::default(),
            drag: DragConfig::default(),
            boxes: Vec::new(),
            regularizer: RegularizerConfig::default(),
            adam: AdamConfig::default(),
            tracking: TrackingConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Flag values; `None` leaves the file or default value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub res: Option<usize>,
    /// Optimizer iterations.
    pub iters: Option<usize>,
    /// Training steps.
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub targets: Vec<PathBuf>,
    pub cameras: Vec<PathBuf>,
    pub latent: Option<String>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.res {
            self.grid.resolution = r;
        }
        if let Some(i) = o.iters {
            self.adam.iterations = i;
        }
        if let Some(i) = o.steps {
            self.train.steps = i;
        }
        if o.out.is_some() {
            self.paths.out.clone_from(&o.out);
        }
        if o.checkpoint.is_some() {
            self.paths.checkpoint.clone_from(&o.checkpoint);
        }
        if !o.targets.is_empty() {
            self.paths.targets.clone_from(&o.targets);
        }
        if !o.cameras.is_empty() {
            self.paths.cameras.clone_from(&o.cameras);
        }
        if o.latent.is_some() {
            self.paths.latent.clone_from(&o.latent);
        }
    }

    /// Seeds the per-module generators from the run seed.
    pub fn module_seed(&self, module: Module) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(module as u64);
        rng.next_u64()
    }

    /// Every problem with the sub-configurations, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |what: &str, r: isomesh::Result<()>| {
            if let Err(e) = r {
                out.push(format!("{what}: {e}"));
            }
        };
        check("grid", self.grid.validate());
        check("network", self.network.validate());
        check("train", self.train.validate());
        check("raster", self.raster.validate());
        check("drag", self.drag.validate());
        for (i, b) in self.boxes.iter().enumerate() {
            check(&format!("boxes[{i}]"), b.validate());
        }
        check("adam", self.adam.validate());
        if self.dataset.surface_points + self.dataset.uniform_points == 0 {
            out.push("dataset: at least one sample per shape is required".into());
        }
        if self.regularizer.alpha < 0.0 || !self.regularizer.alpha.is_finite() || self.regularizer.k == 0 {
            out.push(format!(
                "regularizer: alpha must be finite and non-negative and k positive, got alpha {} k {}",
                self.regularizer.alpha, self.regularizer.k
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Module {
    Dataset = 1,
    Train = 2,
    Gradcheck = 3,
}

pub fn load_camera(path: &std::path::Path) -> anyhow::Result<Camera> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}
