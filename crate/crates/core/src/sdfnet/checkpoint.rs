use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{Dense, LatentCode, NetworkConfig, SdfNetwork};
use crate::error::{contract, Result};
use crate::geometry::AnalyticShape;

/// On-disk network plus latent table. Weight matrices are stored as lists of
/// rows (`fan_out` rows of `fan_in` values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub layer_weights: Vec<Vec<Vec<f64>>>,
    pub layer_biases: Vec<Vec<f64>>,
    pub latent_table: Vec<LatentCode>,
    /// Shapes the latent table was fitted to, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shapes: Vec<AnalyticShape>,
}

impl Checkpoint {
    pub fn new(net: &SdfNetwork, latent_table: Vec<LatentCode>, shapes: Vec<AnalyticShape>) -> Self {
        Self {
            config: net.config.clone(),
            layer_weights: net
                .layers
                .iter()
                .map(|l| l.weight.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            layer_biases: net.layers.iter().map(|l| l.bias.to_vec()).collect(),
            latent_table,
            shapes,
        }
    }

    pub fn network(&self) -> Result<SdfNetwork> {
        let mut layers = Vec::with_capacity(self.layer_weights.len());
        if self.layer_weights.len() != self.layer_biases.len() {
            return contract("checkpoint has mismatched weight and bias counts");
        }
        for (rows, bias) in self.layer_weights.iter().zip(&self.layer_biases) {
            let fan_in = rows.first().map_or(0, |r| r.len());
            if rows.iter().any(|r| r.len() != fan_in) {
                return contract("ragged weight matrix in checkpoint");
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            layers.push(Dense {
                weight: Array2::from_shape_vec((rows.len(), fan_in), flat)
                    .map_err(|e| crate::Error::Contract(e.to_string()))?,
                bias: Array1::from(bias.clone()),
            });
        }
        let net = SdfNetwork::from_layers(self.config.clone(), layers)?;
        if let Some(z) = self.latent_table.iter().find(|z| z.len() != net.latent_dim()) {
            return contract(format!(
                "latent table entry of length {} does not match latent_dim {}",
                z.len(),
                net.latent_dim()
            ));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        let net = SdfNetwork::new(NetworkConfig::default(), 3).unwrap();
        let table = vec![LatentCode(vec![0.1, 1e-17, -3.25, 1.0 / 3.0])];
        let ck = Checkpoint::new(&net, table.clone(), vec![AnalyticShape::sphere(0.3)]);
        let text = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.network().unwrap(), net);
        assert_eq!(back.latent_table, table);
    }

    #[test]
    fn corrupted_checkpoints_rejected() {
        let net = SdfNetwork::new(NetworkConfig::default(), 3).unwrap();
        let mut ck = Checkpoint::new(&net, vec![LatentCode(vec![0.0; 3])], vec![]);
        assert!(ck.network().is_err());
        ck.latent_table.clear();
        ck.layer_weights[1][0].pop();
        assert!(ck.network().is_err());
    }
}
