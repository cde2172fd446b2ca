//! Latent-conditioned MLP `f(x, z)` with hand-written reverse mode.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::exec;
use crate::geometry::{ImplicitField, Vec3};

/// Rows per batch when evaluating many points.
pub(crate) const BATCH_ROWS: usize = 2048;

/// Past this magnitude of `beta * x` softplus is linear/zero to machine precision.
const SOFTPLUS_SATURATION: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &LatentCode) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for LatentCode {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// `log(1 + exp(beta x)) / beta`
    Softplus {
        beta: f64,
    },
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Identity => x,
            Activation::Softplus { beta } => {
                let bx = beta * x;
                if bx > SOFTPLUS_SATURATION {
                    x
                } else if bx < -SOFTPLUS_SATURATION {
                    0.0
                } else {
                    x.max(0.0) + (-bx.abs()).exp().ln_1p() / beta
                }
            }
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Identity => 1.0,
            Activation::Softplus { beta } => {
                let bx = beta * x;
                if bx > SOFTPLUS_SATURATION {
                    1.0
                } else if bx < -SOFTPLUS_SATURATION {
                    0.0
                } else if bx >= 0.0 {
                    1.0 / (1.0 + (-bx).exp())
                } else {
                    let e = bx.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub latent_dim: usize,
    /// Widths of the hidden layers.
    pub hidden: Vec<usize>,
    /// Layer whose input gets `(x, z)` appended to the previous activations.
    pub skip_layer: Option<usize>,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            latent_dim: 4,
            hidden: vec![128; 4],
            skip_layer: Some(2),
            activation: Activation::Softplus { beta: 100.0 },
        }
    }
}

impl NetworkConfig {
    pub fn input_dim(&self) -> usize {
        3 + self.latent_dim
    }

    pub fn layer_count(&self) -> usize {
        self.hidden.len() + 1
    }

    /// `(fan_in, fan_out)` of every layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.layer_count());
        let mut prev = self.input_dim();
        let outs = self.hidden.iter().copied().chain(std::iter::once(1));
        for (l, out) in outs.enumerate() {
            let fan_in = if self.skip_layer == Some(l) {
                prev + self.input_dim()
            } else {
                prev
            };
            shapes.push((fan_in, out));
            prev = out;
        }
        shapes
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return contract("hidden layer widths must be positive");
        }
        if let Some(s) = self.skip_layer {
            if s == 0 || s > self.hidden.len() {
                return contract(format!("skip layer must be in 1..={}, got {s}", self.hidden.len()));
            }
        }
        if let Activation::Softplus { beta } = self.activation {
            if !(beta > 0.0 && beta.is_finite()) {
                return contract(format!("softplus beta must be positive, got {beta}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_out × fan_in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamGrad {
    pub fn zeros_like(net: &SdfNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }

    /// Flattened in the order of [`SdfNetwork::params_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&v| v == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdfNetwork {
    pub config: NetworkConfig,
    pub layers: Vec<Dense>,
}

impl SdfNetwork {
    /// Xavier-uniform weights and zero biases.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-limit..limit)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn from_layers(config: NetworkConfig, layers: Vec<Dense>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::Dimension {
                what: "layer count",
                expected: shapes.len(),
                actual: layers.len(),
            });
        }
        for (l, ((fan_in, fan_out), layer)) in shapes.iter().zip(&layers).enumerate() {
            if layer.weight.dim() != (*fan_out, *fan_in) || layer.bias.len() != *fan_out {
                return contract(format!(
                    "layer {l}: expected weight {fan_out}x{fan_in} and bias {fan_out}, got {:?} and {}",
                    layer.weight.dim(),
                    layer.bias.len()
                ));
            }
        }
        let net = Self { config, layers };
        if !net.is_finite() {
            return contract("network parameters must be finite");
        }
        Ok(net)
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                what: "flat parameter vector",
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    fn check_latent(&self, z: &LatentCode) -> Result<()> {
        if z.len() != self.latent_dim() {
            return Err(Error::Dimension {
                what: "latent code",
                expected: self.latent_dim(),
                actual: z.len(),
            });
        }
        Ok(())
    }

    /// Stacks `(x, z)` rows.
    pub fn input_matrix(&self, points: &[Vec3], z: &LatentCode) -> Result<Array2<f64>> {
        self.check_latent(z)?;
        let d = self.config.input_dim();
        let mut m = Array2::zeros((points.len(), d));
        for (r, p) in points.iter().enumerate() {
            let mut row = m.row_mut(r);
            row[0] = p.x;
            row[1] = p.y;
            row[2] = p.z;
            for (c, v) in z.0.iter().enumerate() {
                row[3 + c] = *v;
            }
        }
        Ok(m)
    }

    /// Batched forward pass over input rows `(x, z)`.
    pub fn forward_batch(&self, input: ArrayView2<f64>, keep_cache: bool) -> (Array1<f64>, Option<ForwardCache>) {
        let last = self.layers.len() - 1;
        let mut cache = keep_cache.then(|| ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len()),
        });
        let mut h = input.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let a = if self.config.skip_layer == Some(l) {
                concatenate(Axis(1), &[h.view(), input]).expect("row counts agree")
            } else {
                h
            };
            let mut pre = a.dot(&layer.weight.t());
            pre += &layer.bias;
            if l == last {
                let out = pre.column(0).to_owned();
                if let Some(c) = cache.as_mut() {
                    c.inputs.push(a);
                    c.preacts.push(pre);
                }
                return (out, cache);
            }
            let act = self.config.activation;
            h = match cache.as_mut() {
                Some(c) => {
                    let out = pre.mapv(|v| act.apply(v));
                    c.inputs.push(a);
                    c.preacts.push(pre);
                    out
                }
                None => {
                    pre.mapv_inplace(|v| act.apply(v));
                    pre
                }
            };
        }
        unreachable!("network has an output layer")
    }

    /// Reverse pass for per-row upstream factors. Returns per-row gradients
    /// with respect to the input columns, plus the parameter gradient summed
    /// over rows when `want_params` is set.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        want_params: bool,
    ) -> (Array2<f64>, Option<ParamGrad>) {
        let rows = upstream.len();
        let d_in = self.config.input_dim();
        let mut input_grad = Array2::<f64>::zeros((rows, d_in));
        let mut grads = want_params.then(|| ParamGrad::zeros_like(self));
        let mut delta = Array2::from_shape_vec((rows, 1), upstream.to_vec()).expect("shape");
        for l in (0..self.layers.len()).rev() {
            if let Some(g) = grads.as_mut() {
                g.weights[l] = delta.t().dot(&cache.inputs[l]);
                g.biases[l] = delta.sum_axis(Axis(0));
            }
            let da = delta.dot(&self.layers[l].weight);
            if l == 0 {
                input_grad += &da;
                break;
            }
            let dh = if self.config.skip_layer == Some(l) {
                let w = da.ncols() - d_in;
                input_grad += &da.slice(s![.., w..]);
                da.slice(s![.., ..w]).to_owned()
            } else {
                da
            };
            let act = self.config.activation;
            let mut next = dh;
            next.zip_mut_with(&cache.preacts[l - 1], |d, &p| *d *= act.derivative(p));
            delta = next;
        }
        (input_grad, grads)
    }

    pub fn forward(&self, z: &LatentCode, x: &Vec3) -> Result<f64> {
        Ok(self.forward_points(z, std::slice::from_ref(x))?[0])
    }

    pub fn grad_x(&self, z: &LatentCode, x: &Vec3) -> Result<Vec3> {
        Ok(self.surface_partials(z, std::slice::from_ref(x))?.grad_x[0])
    }

    pub fn grad_z(&self, z: &LatentCode, x: &Vec3) -> Result<Vec<f64>> {
        Ok(self.surface_partials(z, std::slice::from_ref(x))?.grad_z.swap_remove(0))
    }

    /// `∂(upstream · f(x, z)) / ∂θ`.
    pub fn grad_params(&self, z: &LatentCode, x: &Vec3, upstream: f64) -> Result<ParamGrad> {
        self.param_gradient(z, std::slice::from_ref(x), &[upstream])
    }

    /// `f(x, z)` for every point.
    pub fn forward_points(&self, z: &LatentCode, points: &[Vec3]) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        let chunks = exec::map_chunks(points, BATCH_ROWS, |_, pts| {
            let input = self.input_matrix(pts, z).expect("latent checked");
            self.forward_batch(input.view(), false).0.to_vec()
        });
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Values and first partials with respect to `x` and `z` at every point.
    pub fn surface_partials(&self, z: &LatentCode, points: &[Vec3]) -> Result<SurfacePartials> {
        self.check_latent(z)?;
        let chunks = exec::map_chunks(points, BATCH_ROWS, |_, pts| {
            let input = self.input_matrix(pts, z).expect("latent checked");
            let (out, cache) = self.forward_batch(input.view(), true);
            let ones = vec![1.0; pts.len()];
            let (g, _) = self.backward_batch(&cache.expect("cache kept"), &ones, false);
            (out, g)
        });
        let mut res = SurfacePartials {
            values: Vec::with_capacity(points.len()),
            grad_x: Vec::with_capacity(points.len()),
            grad_z: Vec::with_capacity(points.len()),
        };
        for (out, g) in chunks {
            res.values.extend(out.iter());
            for row in g.rows() {
                res.grad_x.push(Vec3::new(row[0], row[1], row[2]));
                res.grad_z.push(row.slice(s![3..]).to_vec());
            }
        }
        Ok(res)
    }

    /// `Σ_r upstream[r] · ∂f(points[r], z)/∂θ`, reduced in point order.
    pub fn param_gradient(&self, z: &LatentCode, points: &[Vec3], upstream: &[f64]) -> Result<ParamGrad> {
        self.check_latent(z)?;
        if points.len() != upstream.len() {
            return Err(Error::Dimension {
                what: "upstream factors",
                expected: points.len(),
                actual: upstream.len(),
            });
        }
        let idx: Vec<usize> = (0..points.len()).collect();
        let parts = exec::map_chunks(&idx, BATCH_ROWS, |off, ids| {
            let pts = &points[off..off + ids.len()];
            let input = self.input_matrix(pts, z).expect("latent checked");
            let (_, cache) = self.forward_batch(input.view(), true);
            let up = &upstream[off..off + ids.len()];
            self.backward_batch(&cache.expect("cache kept"), up, true)
                .1
                .expect("requested")
        });
        let mut total = ParamGrad::zeros_like(self);
        for p in &parts {
            total.add_assign(p);
        }
        Ok(total)
    }
}

/// Output of [`SdfNetwork::surface_partials`].
#[derive(Debug, Clone)]
pub struct SurfacePartials {
    pub values: Vec<f64>,
    pub grad_x: Vec<Vec3>,
    pub grad_z: Vec<Vec<f64>>,
}

/// The zero level set of `f(·, z)` for a fixed latent code.
#[derive(Clone, Copy)]
pub struct LatentField<'a> {
    pub net: &'a SdfNetwork,
    pub z: &'a LatentCode,
}

impl<'a> LatentField<'a> {
    pub fn new(net: &'a SdfNetwork, z: &'a LatentCode) -> Result<Self> {
        net.check_latent(z)?;
        Ok(Self { net, z })
    }
}

impl ImplicitField for LatentField<'_> {
    fn value(&self, p: &Vec3) -> f64 {
        self.net.forward(self.z, p).expect("latent checked at construction")
    }

    fn gradient(&self, p: &Vec3) -> Vec3 {
        self.net.grad_x(self.z, p).expect("latent checked at construction")
    }

    fn values(&self, points: &[Vec3]) -> Vec<f64> {
        self.net
            .forward_points(self.z, points)
            .expect("latent checked at construction")
    }
}
