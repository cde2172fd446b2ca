//! Point-cloud losses and evaluation metrics.

mod chamfer;
mod emd;
mod kdtree;
mod metrics;
mod sampling;

pub use chamfer::{chamfer_l2, chamfer_l2_mean, chamfer_sqrt_l2, ChamferResult};
pub use emd::{emd_exact, hungarian, EMD_MAX_POINTS};
pub use kdtree::KdTree;
pub use metrics::{fscore, fscore_threshold, surface_iou, MetricReport};
pub use sampling::{sample_mesh_points, SampleMode};
