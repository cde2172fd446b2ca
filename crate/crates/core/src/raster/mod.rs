//! Soft silhouette rendering with analytic vertex gradients.

mod camera;
mod pgm;
mod soft;

pub use camera::{project, Camera, Projection, NEAR};
pub use pgm::{export_pgm, import_pgm, read_pgm, write_pgm};
pub use soft::{backward_vertices, silhouette_l1, soft_silhouette, RasterConfig, SilhouetteBackward, SilhouetteImage};
