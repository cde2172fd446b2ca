use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::marching::TriMesh;
use crate::optim::{Adam, AdamConfig};
use crate::sdfnet::LatentCode;

/// Objective value, gradient and named components at one latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
    pub parts: Vec<(&'static str, f64)>,
}

impl Evaluation {
    /// Adds a component to the value and its gradient to the total.
    pub fn add(&mut self, name: &'static str, value: f64, grad: &[f64]) {
        self.value += value;
        for (a, b) in self.grad.iter_mut().zip(grad) {
            *a += b;
        }
        self.parts.push((name, value));
    }

    pub fn part(&self, name: &str) -> Option<f64> {
        self.parts.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

/// A differentiable function of the latent code.
pub trait Objective {
    fn evaluate(&mut self, z: &LatentCode) -> Result<Evaluation>;

    /// Mesh behind the most recent evaluation, for objectives that extract
    /// one.
    fn mesh(&self) -> Option<&TriMesh> {
        None
    }
}

impl<F> Objective for F
where
    F: FnMut(&LatentCode) -> Result<(f64, Vec<f64>)>,
{
    fn evaluate(&mut self, z: &LatentCode) -> Result<Evaluation> {
        let (value, grad) = self(z)?;
        Ok(Evaluation {
            value,
            grad,
            parts: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub z: LatentCode,
    pub value: f64,
    pub grad_norm: f64,
    pub parts: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// The objective or its gradient was not finite at this iteration.
    NonFinite {
        iteration: usize,
    },
    /// The objective could not be evaluated at this iteration.
    Failed {
        iteration: usize,
        message: String,
    },
}

/// Every evaluated iterate, starting with the initial code.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub iterates: Vec<Iterate>,
    pub best: usize,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn best_iterate(&self) -> &Iterate {
        &self.iterates[self.best]
    }

    pub fn initial_value(&self) -> f64 {
        self.iterates[0].value
    }

    /// Best value over initial value.
    pub fn relative_objective(&self) -> f64 {
        let init = self.initial_value();
        if init == 0.0 {
            1.0
        } else {
            self.best_iterate().value / init
        }
    }

    pub fn stopped_early(&self) -> bool {
        self.stop != StopReason::Completed
    }
}

/// Adam over the latent code for `cfg.iterations` steps; keeps the best
/// iterate.
pub fn optimize_latent(objective: &mut impl Objective, z0: &LatentCode, cfg: &AdamConfig) -> Result<Trajectory> {
    optimize_latent_with(objective, z0, cfg, |_, _, _| Ok(()))
}

/// As [`optimize_latent`], calling `observe(iteration, iterate, mesh)` after
/// every successful evaluation.
pub fn optimize_latent_with(
    objective: &mut impl Objective,
    z0: &LatentCode,
    cfg: &AdamConfig,
    mut observe: impl FnMut(usize, &Iterate, Option<&TriMesh>) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !z0.is_finite() {
        return contract("initial latent code is not finite");
    }
    let mut adam = Adam::from_config(z0.len(), cfg);
    let mut z = z0.clone();
    let mut iterates: Vec<Iterate> = Vec::with_capacity(cfg.iterations + 1);
    let mut best = 0;
    let mut stop = StopReason::Completed;
    for iteration in 0..=cfg.iterations {
        let eval = match objective.evaluate(&z) {
            Ok(e) => e,
            Err(e) if iteration > 0 => {
                stop = StopReason::Failed {
                    iteration,
                    message: e.to_string(),
                };
                break;
            }
            Err(e) => return Err(e),
        };
        if eval.grad.len() != z.len() {
            return contract(format!(
                "objective gradient has {} entries for a latent of {}",
                eval.grad.len(),
                z.len()
            ));
        }
        if !eval.value.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
            if iteration == 0 {
                return contract("objective is not finite at the initial latent");
            }
            stop = StopReason::NonFinite { iteration };
            break;
        }
        let it = Iterate {
            z: z.clone(),
            value: eval.value,
            grad_norm: eval.grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            parts: eval.parts,
        };
        observe(iteration, &it, objective.mesh())?;
        if it.value < iterates.get(best).map_or(f64::INFINITY, |b: &Iterate| b.value) {
            best = iterates.len();
        }
        iterates.push(it);
        if iteration < cfg.iterations {
            adam.step(&mut z.0, &eval.grad, cfg.learning_rate);
        }
    }
    if stop != StopReason::Completed {
        log::warn!("latent optimization stopped early: {stop:?}");
    }
    Ok(Trajectory { iterates, best, stop })
}
