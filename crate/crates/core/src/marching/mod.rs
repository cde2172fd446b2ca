//! Iso-surface extraction: marching cubes, sparse band re-sampling, topology
//! diagnostics and OBJ I/O.

mod extract;
mod obj;
mod sparse;
mod tables;
mod topology;

pub use extract::{interpolate_vertex, marching_cubes, TriMesh, VertexEdge, ZERO_NUDGE};
pub use obj::{export_obj, import_obj, read_obj, write_obj};
pub use sparse::{default_band, sparse_resample, ActiveSet, SparseResample};
pub use topology::{connected_components, euler_characteristic, genus};
