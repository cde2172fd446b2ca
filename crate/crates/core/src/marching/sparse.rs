use crate::error::{contract, Result};
use crate::geometry::{evaluate_nodes, Grid3D, ImplicitField, ScalarField};

/// Nodes whose previous field magnitude is below the band threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub nodes: Vec<usize>,
    pub threshold: f64,
}

impl ActiveSet {
    pub fn from_field(field: &ScalarField, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return contract(format!("band threshold must be positive, got {threshold}"));
        }
        let nodes = field
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() < threshold)
            .map(|(i, _)| i)
            .collect();
        Ok(Self { nodes, threshold })
    }
}

/// Default band `3 h L` with Lipschitz bound `L = 1.2`.
pub fn default_band(grid: &Grid3D) -> f64 {
    3.0 * grid.h() * 1.2
}

#[derive(Debug, Clone)]
pub struct SparseResample {
    pub field: ScalarField,
    /// Number of evaluator calls spent.
    pub evaluations: usize,
    /// Largest `|new - old|` over re-evaluated nodes.
    pub max_change: f64,
}

/// Re-evaluates only nodes with `|prev| < tau`; every other node keeps its
/// previous value.
pub fn sparse_resample(
    prev: &ScalarField,
    evaluator: &(impl ImplicitField + ?Sized),
    tau: f64,
) -> Result<SparseResample> {
    if !prev.is_fully_valid() {
        return contract("sparse re-sampling needs a fully valid previous field");
    }
    let active = ActiveSet::from_field(prev, tau)?;
    let fresh = evaluate_nodes(evaluator, &prev.grid, &active.nodes)?;
    let mut field = prev.clone();
    let mut max_change = 0.0f64;
    for (&n, &v) in active.nodes.iter().zip(&fresh) {
        max_change = max_change.max((v - field.values[n]).abs());
        field.values[n] = v;
    }
    Ok(SparseResample {
        field,
        evaluations: active.nodes.len(),
        max_change,
    })
}
