//! Differentiable iso-surface extraction for latent-conditioned signed
//! distance networks.
//!
//! The forward path samples a network on a grid and runs marching cubes; the
//! backward path pushes per-vertex surface gradients into the latent code (or
//! the network parameters) using the normal-velocity rule `dv/ds = -n(v)`.
//! On top of that sit the losses and rasterizer used to drive latent
//! optimization, and an aerodynamic drag objective.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod diffiso;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod losses;
pub mod marching;
pub mod optim;
pub mod pipeline;
pub mod raster;
pub mod sdfnet;
pub mod shapeopt;

pub use error::{Error, Result};
pub use geometry::{AnalyticShape, Grid3D, ImplicitField, ScalarField, Vec3};
pub use marching::TriMesh;
pub use sdfnet::{LatentCode, SdfNetwork};
