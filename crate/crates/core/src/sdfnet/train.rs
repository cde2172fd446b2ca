use log::{debug, info};
use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::network::{LatentCode, NetworkConfig, ParamGrad, SdfNetwork, BATCH_ROWS};
use crate::error::{contract, Error, Result};
use crate::exec;
use crate::geometry::Vec3;
use crate::optim::Adam;

/// Labelled points `(x, s(x))` of one training shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<(Vec3, f64)>,
    pub shape_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda_reg: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Halve the learning rate every this many steps; 0 keeps it constant.
    #[serde(default)]
    pub lr_halving_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_reg: 1e-4,
            learning_rate: 1e-3,
            batch_size: 4096,
            steps: 2000,
            seed: 0,
            lr_halving_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_reg >= 0.0) {
            return contract(format!("lambda_reg must be >= 0, got {}", self.lambda_reg));
        }
        if !(self.learning_rate > 0.0) {
            return contract(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return contract("batch_size and steps must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: SdfNetwork,
    pub latents: Vec<LatentCode>,
    /// Per-step minibatch objective, normalised by the number of shapes.
    pub loss_trace: Vec<f64>,
}

fn shape_count(dataset: &[SampleSet]) -> Result<usize> {
    if dataset.is_empty() || dataset.iter().any(|s| s.points.is_empty()) {
        return contract("dataset and every sample set must be non-empty");
    }
    Ok(dataset.iter().map(|s| s.shape_id).max().unwrap() + 1)
}

/// Auto-decoder objective over the whole dataset:
/// `Σ_S mean_x |f(x, z_S) − s(x)| + λ Σ_S ‖z_S‖²`.
pub fn sdf_loss(net: &SdfNetwork, latents: &[LatentCode], dataset: &[SampleSet], lambda_reg: f64) -> Result<f64> {
    let n_shapes = shape_count(dataset)?;
    if latents.len() < n_shapes {
        return contract(format!("{} latent codes for {n_shapes} shapes", latents.len()));
    }
    let mut data = 0.0;
    for set in dataset {
        let pts: Vec<Vec3> = set.points.iter().map(|p| p.0).collect();
        let f = net.forward_points(&latents[set.shape_id], &pts)?;
        let err: f64 = f.iter().zip(&set.points).map(|(v, p)| (v - p.1).abs()).sum();
        data += err / pts.len() as f64;
    }
    let reg: f64 = latents.iter().flat_map(|z| z.0.iter()).map(|v| v * v).sum();
    Ok(data + lambda_reg * reg)
}

/// Jointly fits network weights and one latent code per shape with Adam.
///
/// Each step draws the same number of points from every sample set, so the
/// minibatch mean absolute error is an unbiased estimate of the per-shape
/// average of the data term.
pub fn train_sdf(dataset: &[SampleSet], net_cfg: &NetworkConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n_shapes = shape_count(dataset)?;
    let zdim = net_cfg.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = SdfNetwork::new(net_cfg.clone(), rng.random())?;
    let init = Normal::new(0.0, 0.01).expect("valid");
    let mut latents: Vec<f64> = (0..n_shapes * zdim).map(|_| init.sample(&mut rng)).collect();

    let n_theta = net.param_count();
    let mut params = net.params_flat();
    params.extend_from_slice(&latents);
    let mut adam = Adam::new(params.len(), 0.9, 0.999, 1e-8);

    let per_set = (cfg.batch_size / dataset.len()).max(1);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rows: Vec<(Vec3, f64, usize)> = Vec::with_capacity(per_set * dataset.len());
        for set in dataset {
            for _ in 0..per_set {
                let (p, d) = set.points[rng.random_range(0..set.points.len())];
                rows.push((p, d, set.shape_id));
            }
        }
        let batch = rows.len() as f64;
        let latent_rows = &latents;
        let parts = exec::map_chunks(&rows, BATCH_ROWS, |_, chunk| {
            let mut input = ndarray::Array2::<f64>::zeros((chunk.len(), 3 + zdim));
            for (r, (p, _, id)) in chunk.iter().enumerate() {
                let mut row = input.row_mut(r);
                row[0] = p.x;
                row[1] = p.y;
                row[2] = p.z;
                for c in 0..zdim {
                    row[3 + c] = latent_rows[id * zdim + c];
                }
            }
            let (out, cache) = net.forward_batch(input.view(), true);
            let mut abs_err = 0.0;
            let upstream: Vec<f64> = out
                .iter()
                .zip(chunk)
                .map(|(f, (_, d, _))| {
                    let r = f - d;
                    abs_err += r.abs();
                    if r > 0.0 {
                        1.0 / batch
                    } else if r < 0.0 {
                        -1.0 / batch
                    } else {
                        0.0
                    }
                })
                .collect();
            let (gin, gp) = net.backward_batch(&cache.expect("kept"), &upstream, true);
            (abs_err, gp.expect("requested"), gin.slice(s![.., 3..]).to_owned())
        });

        let mut theta_grad = ParamGrad::zeros_like(&net);
        let mut z_grad = vec![0.0; latents.len()];
        let mut data = 0.0;
        let mut offset = 0;
        for (err, gp, gz) in &parts {
            data += err;
            theta_grad.add_assign(gp);
            for (r, g) in gz.rows().into_iter().enumerate() {
                let id = rows[offset + r].2;
                for c in 0..zdim {
                    z_grad[id * zdim + c] += g[c];
                }
            }
            offset += gz.nrows();
        }
        let reg_w = cfg.lambda_reg / n_shapes as f64;
        let reg: f64 = latents.iter().map(|v| v * v).sum();
        for (g, v) in z_grad.iter_mut().zip(&latents) {
            *g += 2.0 * reg_w * v;
        }
        let loss = data / batch + reg_w * reg;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        trace.push(loss);

        let mut grad = theta_grad.to_flat();
        grad.extend_from_slice(&z_grad);
        let lr = match cfg.lr_halving_every {
            0 => cfg.learning_rate,
            k => cfg.learning_rate * 0.5f64.powi((step / k) as i32),
        };
        adam.step(&mut params, &grad, lr);
        net.set_params_flat(&params[..n_theta])?;
        latents.copy_from_slice(&params[n_theta..]);
        if step % 100 == 0 {
            debug!("train step {step}: loss {loss:.6}");
        }
    }
    info!(
        "trained {} shapes for {} steps, final loss {:.6}",
        n_shapes,
        cfg.steps,
        trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(TrainOutcome {
        network: net,
        latents: latents
            .chunks(zdim.max(1))
            .take(n_shapes)
            .map(|c| LatentCode(c.to_vec()))
            .collect(),
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_training_points, AnalyticShape};
    use crate::sdfnet::{Activation, Dense};
    use ndarray::{Array1, Array2};

    #[test]
    fn exact_network_has_zero_loss() {
        let cfg = NetworkConfig {
            latent_dim: 2,
            hidden: vec![],
            skip_layer: None,
            activation: Activation::Identity,
        };
        let layer = Dense {
            weight: Array2::from_shape_vec((1, 5), vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
            bias: Array1::zeros(1),
        };
        let net = SdfNetwork::from_layers(cfg, vec![layer]).unwrap();
        let plane = SampleSet {
            points: (0..20)
                .map(|i| {
                    let x = i as f64 / 10.0 - 1.0;
                    (Vec3::new(x, 0.3, -0.2), x)
                })
                .collect(),
            shape_id: 0,
        };
        let loss = sdf_loss(&net, &[LatentCode::zeros(2)], &[plane], 0.5).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn rejects_empty_dataset_and_bad_config() {
        let cfg = TrainConfig::default();
        assert!(train_sdf(&[], &NetworkConfig::default(), &cfg).is_err());
        let bad = TrainConfig { steps: 0, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn short_run_is_finite_deterministic_and_decreasing() {
        let net_cfg = NetworkConfig {
            latent_dim: 2,
            hidden: vec![32, 32],
            skip_layer: Some(1),
            activation: Activation::Softplus { beta: 100.0 },
        };
        let data = vec![
            sample_training_points(&AnalyticShape::sphere(0.3), 0, 400, 100, &[0.005, 0.05], 1).unwrap(),
            sample_training_points(&AnalyticShape::torus(0.45, 0.15), 1, 400, 100, &[0.005, 0.05], 2).unwrap(),
        ];
        let cfg = TrainConfig {
            steps: 150,
            batch_size: 256,
            learning_rate: 2e-3,
            ..TrainConfig::default()
        };
        let a = train_sdf(&data, &net_cfg, &cfg).unwrap();
        assert!(a.loss_trace.iter().all(|l| l.is_finite()));
        let early: f64 = a.loss_trace[..10].iter().sum::<f64>() / 10.0;
        let late: f64 = a.loss_trace[140..].iter().sum::<f64>() / 10.0;
        assert!(late < 0.5 * early, "early {early} late {late}");
        let b = train_sdf(&data, &net_cfg, &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.latents, b.latents);
    }
}
