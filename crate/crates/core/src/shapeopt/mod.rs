//! Drag-driven shape optimization in latent space and the latent optimizer
//! shared by all fitting tasks.

mod constraint;
mod drag;
mod objective;
mod optimize;
mod regularizer;
mod runlog;

pub use constraint::{constraint_penalty, ConstraintBox, PenaltyResult, PROBES_PER_AXIS};
pub use drag::{drag, face_geometry, newtonian_pressure, DragConfig, DragResult, FaceGeometry, Pressure};
pub use objective::{assemble_drag_objective, assemble_drag_objective_with, DragObjective};
pub use optimize::{optimize_latent, optimize_latent_with, Evaluation, Iterate, Objective, StopReason, Trajectory};
pub use regularizer::{latent_knn_regularizer, RegularizerConfig};
pub use runlog::{run_log_row, write_run_log, RUN_LOG_HEADER};
