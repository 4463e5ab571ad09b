//! Per-action feed-forward networks defining the mean dynamics
//! `x_{k+1} = f_a(x_k) + v_k`, `v_k ~ N(0, Σ)`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Linear,
}

impl Activation {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::UnsupportedActivation(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    #[inline]
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Activation::Relu => y.max(0.0),
            Activation::Sigmoid => sigmoid(y),
            Activation::Tanh => y.tanh(),
            Activation::Linear => y,
        }
    }

    /// First derivative; ReLU uses the right derivative at 0.
    #[inline]
    pub fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(y);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = y.tanh();
                1.0 - t * t
            }
            Activation::Linear => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Logistic function, branching on the sign so `exp` never overflows.
#[inline]
pub fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out_dim × in_dim`; row `i` feeds output neuron `i`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Self {
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = &self.weights * x + &self.bias;
        if self.activation != Activation::Linear {
            y.apply(|v| *v = self.activation.apply(*v));
        }
        y
    }
}

/// Validated collection of per-action networks `f_a: R^n -> R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDynamics {
    dim: usize,
    actions: Vec<String>,
    networks: Vec<Vec<DenseLayer>>,
}

impl NeuralDynamics {
    /// Builds and validates; `networks[i]` belongs to `actions[i]`.
    pub fn new(dim: usize, actions: Vec<String>, networks: Vec<Vec<DenseLayer>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNetwork("state dimension must be positive".into()));
        }
        if actions.is_empty() {
            return Err(Error::InvalidNetwork("action list is empty".into()));
        }
        if actions.len() != networks.len() {
            return Err(Error::InvalidNetwork(format!(
                "{} actions but {} networks",
                actions.len(),
                networks.len()
            )));
        }
        for (i, a) in actions.iter().enumerate() {
            if actions[..i].contains(a) {
                return Err(Error::InvalidNetwork(format!("duplicate action '{a}'")));
            }
        }
        for (action, layers) in actions.iter().zip(&networks) {
            validate_layers(action, dim, layers)?;
        }
        Ok(Self {
            dim,
            actions,
            networks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_index(&self, name: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::UnknownAction(name.to_string()))
    }

    pub fn layers(&self, action: usize) -> &[DenseLayer] {
        &self.networks[action]
    }

    /// Deterministic part of one step: `f_a(x)`.
    pub fn evaluate(&self, action: &str, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.action_index(action)?;
        Ok(self.evaluate_index(a, x))
    }

    pub fn evaluate_index(&self, action: usize, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "state dimension mismatch");
        let mut h = DVector::from_column_slice(x);
        for layer in &self.networks[action] {
            h = layer.forward(&h);
        }
        h.as_slice().to_vec()
    }

    /// One noisy step `f_a(x) + v`, `v ~ N(0, Σ)`, reproducible from `seed`.
    pub fn sample_step(
        &self,
        action: &str,
        x: &[f64],
        covariance: &DMatrix<f64>,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let a = self.action_index(action)?;
        let noise = GaussianNoise::new(covariance)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_step_with(a, x, &noise, &mut rng))
    }

    pub fn sample_step_with<R: Rng + ?Sized>(
        &self,
        action: usize,
        x: &[f64],
        noise: &GaussianNoise,
        rng: &mut R,
    ) -> Vec<f64> {
        let mut y = self.evaluate_index(action, x);
        let v = noise.sample(rng);
        for (yi, vi) in y.iter_mut().zip(v) {
            *yi += vi;
        }
        y
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_networks(path)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: NetworkFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "network file".into(),
            message: e.to_string(),
        })?;
        raw.into_dynamics()
    }

    pub fn to_json_string(&self) -> String {
        let file = NetworkFile {
            dim: self.dim,
            actions: self.actions.clone(),
            networks: self
                .actions
                .iter()
                .zip(&self.networks)
                .map(|(a, layers)| {
                    let raw = layers
                        .iter()
                        .map(|l| LayerFile {
                            weights: (0..l.out_dim())
                                .map(|i| l.weights.row(i).iter().copied().collect())
                                .collect(),
                            bias: l.bias.iter().copied().collect(),
                            activation: l.activation.name().to_string(),
                        })
                        .collect();
                    (a.clone(), raw)
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("network serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a network file in the JSON interchange format.
pub fn load_networks(path: impl AsRef<Path>) -> Result<NeuralDynamics> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NeuralDynamics::from_json_str(&text)
}

fn validate_layers(action: &str, dim: usize, layers: &[DenseLayer]) -> Result<()> {
    let mismatch = |layer: usize, message: String| Error::LayerMismatch {
        action: action.to_string(),
        layer,
        message,
    };
    if layers.is_empty() {
        return Err(mismatch(0, "network has no layers".into()));
    }
    let mut expected_in = dim;
    for (i, l) in layers.iter().enumerate() {
        if l.in_dim() != expected_in {
            return Err(mismatch(
                i,
                format!("in_dim {} but previous output is {}", l.in_dim(), expected_in),
            ));
        }
        if l.bias.len() != l.out_dim() {
            return Err(mismatch(
                i,
                format!("{} weight rows but bias length {}", l.out_dim(), l.bias.len()),
            ));
        }
        if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
            return Err(mismatch(i, "non-finite weight or bias".into()));
        }
        expected_in = l.out_dim();
    }
    if expected_in != dim {
        return Err(mismatch(
            layers.len() - 1,
            format!("last layer outputs {expected_in}, state dimension is {dim}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    dim: usize,
    actions: Vec<String>,
    networks: BTreeMap<String, Vec<LayerFile>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
}

impl NetworkFile {
    fn into_dynamics(mut self) -> Result<NeuralDynamics> {
        let mut networks = Vec::with_capacity(self.actions.len());
        for action in &self.actions {
            let raw = self
                .networks
                .remove(action)
                .ok_or_else(|| Error::InvalidNetwork(format!("no network for action '{action}'")))?;
            let mut layers = Vec::with_capacity(raw.len());
            for (i, l) in raw.into_iter().enumerate() {
                let activation = Activation::parse(&l.activation)?;
                let rows = l.weights.len();
                let cols = l.weights.first().map_or(0, Vec::len);
                if rows == 0 || cols == 0 {
                    return Err(Error::LayerMismatch {
                        action: action.clone(),
                        layer: i,
                        message: "empty weight matrix".into(),
                    });
                }
                if let Some(r) = l.weights.iter().position(|r| r.len() != cols) {
                    return Err(Error::LayerMismatch {
                        action: action.clone(),
                        layer: i,
                        message: format!("ragged weight matrix at row {r}"),
                    });
                }
                let weights = DMatrix::from_fn(rows, cols, |r, c| l.weights[r][c]);
                layers.push(DenseLayer::new(weights, DVector::from_vec(l.bias), activation));
            }
            networks.push(layers);
        }
        if let Some(extra) = self.networks.keys().next() {
            return Err(Error::InvalidNetwork(format!(
                "network '{extra}' is not listed in actions"
            )));
        }
        NeuralDynamics::new(self.dim, self.actions, networks)
    }
}

/// Zero-mean Gaussian noise sampled as `L·ξ` with `Σ = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl GaussianNoise {
    pub fn new(covariance: &DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() {
            return Err(Error::Config("covariance must be square".into()));
        }
        let asym = (covariance - covariance.transpose()).amax();
        if asym > 1e-9 {
            return Err(Error::NonSymmetric(asym));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(covariance.symmetric_eigenvalues().min()))?;
        Ok(Self {
            covariance: covariance.clone(),
            factor: chol.l(),
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let xi: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|i| (0..=i).map(|j| self.factor[(i, j)] * xi[j]).sum())
            .collect()
    }
}
