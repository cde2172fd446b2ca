use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::sdfnet::LatentCode;

/// Pull toward the `k` nearest codes of a reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub alpha: f64,
    pub k: usize,
    /// Empty in configuration files; filled from the checkpoint at run time.
    #[serde(default)]
    pub latent_table: Vec<LatentCode>,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            k: 10,
            latent_table: Vec::new(),
        }
    }
}

impl RegularizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return contract(format!("regularizer alpha must be non-negative, got {}", self.alpha));
        }
        if self.k == 0 {
            return contract("regularizer k must be positive");
        }
        if self.alpha > 0.0 && self.k > self.latent_table.len() {
            return contract(format!(
                "regularizer k = {} exceeds the latent table size {}",
                self.k,
                self.latent_table.len()
            ));
        }
        if let Some(first) = self.latent_table.first() {
            if self.latent_table.iter().any(|z| z.len() != first.len()) {
                return contract("latent table codes differ in length");
            }
        }
        Ok(())
    }
}

/// `α · mean_{z' ∈ kNN(z)} ‖z − z'‖²` and its gradient. Neighbour ties go
/// to the lower table index.
pub fn latent_knn_regularizer(z: &LatentCode, cfg: &RegularizerConfig) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    if cfg.alpha == 0.0 {
        return Ok((0.0, vec![0.0; z.len()]));
    }
    if cfg.latent_table[0].len() != z.len() {
        return contract(format!(
            "latent has {} entries but the table holds codes of length {}",
            z.len(),
            cfg.latent_table[0].len()
        ));
    }
    let sq = |a: &LatentCode| -> f64 { z.0.iter().zip(&a.0).map(|(x, y)| (x - y) * (x - y)).sum() };
    let mut ranked: Vec<(f64, usize)> = cfg.latent_table.iter().map(sq).zip(0..).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let k = cfg.k as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; z.len()];
    for &(d2, idx) in &ranked[..cfg.k] {
        value += d2;
        for (g, (x, y)) in grad.iter_mut().zip(z.0.iter().zip(&cfg.latent_table[idx].0)) {
            *g += 2.0 * cfg.alpha * (x - y) / k;
        }
    }
    Ok((cfg.alpha * value / k, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Vec<LatentCode> {
        vec![
            LatentCode(vec![0.0, 0.0]),
            LatentCode(vec![1.0, 0.0]),
            LatentCode(vec![0.0, 2.0]),
            LatentCode(vec![-1.0, -1.0]),
        ]
    }

    #[test]
    fn exact_cases() {
        let cfg = RegularizerConfig {
            alpha: 0.3,
            k: 1,
            latent_table: table(),
        };
        let (v, g) = latent_knn_regularizer(&LatentCode(vec![1.0, 0.0]), &cfg).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let two = RegularizerConfig {
            alpha: 0.5,
            k: 2,
            latent_table: vec![LatentCode(vec![1.0, 0.0]), LatentCode(vec![-1.0, 0.0])],
        };
        let (v, _) = latent_knn_regularizer(&LatentCode(vec![0.0, 0.0]), &two).unwrap();
        assert_eq!(v, 0.5 * 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = RegularizerConfig {
            alpha: 0.2,
            k: 3,
            latent_table: table(),
        };
        let z = LatentCode(vec![0.3, 0.4]);
        let (_, g) = latent_knn_regularizer(&z, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut a = z.clone();
            a.0[i] += h;
            let mut b = z.clone();
            b.0[i] -= h;
            let fd =
                (latent_knn_regularizer(&a, &cfg).unwrap().0 - latent_knn_regularizer(&b, &cfg).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-8 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn validation() {
        let mut cfg = RegularizerConfig {
            alpha: 0.2,
            k: 5,
            latent_table: table(),
        };
        assert!(cfg.validate().is_err());
        cfg.k = 0;
        assert!(cfg.validate().is_err());
        cfg.k = 2;
        cfg.alpha = -1.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 0.1;
        assert!(latent_knn_regularizer(&LatentCode(vec![0.0; 3]), &cfg).is_err());
        // Disabled regularizers need no table.
        let off = RegularizerConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert_eq!(latent_knn_regularizer(&LatentCode(vec![1.0]), &off).unwrap().0, 0.0);
    }
}
