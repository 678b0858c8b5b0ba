//! Feedforward networks with the activation metadata every downstream
//! analysis needs.
//!
//! A network is an ordered list of layers, each an affine map followed by an
//! elementwise activation. The final layer is always affine (Identity
//! activation); constructors reject anything else rather than repairing it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// SELU reference constants (fixed, not configurable).
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;

/// Elementwise activation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    ReLU,
    LeakyReLU { slope: f64 },
    Tanh,
    Sigmoid,
    Selu,
    Softplus,
}

impl Activation {
    /// LeakyReLU with a validated negative-side slope in (0, 1).
    pub fn leaky_relu(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::Domain(format!(
                "leaky_relu slope must lie in (0, 1), got {slope}"
            )));
        }
        Ok(Activation::LeakyReLU { slope })
    }

    /// LeakyReLU with the default slope.
    pub fn leaky_relu_default() -> Self {
        Activation::LeakyReLU {
            slope: tol::DEFAULT_LEAKY_SLOPE,
        }
    }

    /// σ applied to one scalar.
    pub fn apply_scalar(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::ReLU => z.max(0.0),
            Activation::LeakyReLU { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA * z
                } else {
                    SELU_LAMBDA * SELU_ALPHA * z.exp_m1()
                }
            }
            Activation::Softplus => softplus(z),
        }
    }

    /// σ(0).
    pub fn value_at_zero(&self) -> f64 {
        match self {
            Activation::Sigmoid => 0.5,
            Activation::Softplus => std::f64::consts::LN_2,
            _ => 0.0,
        }
    }

    /// Global Lipschitz constant of σ over the reals. This also bounds every
    /// chord slope (σ(z) − σ(0))/z.
    ///
    /// For SELU the constant is λ·α ≈ 1.758: the negative-side derivative
    /// λ·α·e^z approaches it as z → 0⁻, and the chord slopes approach it as
    /// well, so λ alone would not bound them.
    pub fn max_slope(&self) -> f64 {
        match self {
            Activation::Identity | Activation::ReLU | Activation::Tanh | Activation::Softplus => {
                1.0
            }
            // slope < 1, so max(1, slope) = 1.
            Activation::LeakyReLU { .. } => 1.0,
            Activation::Sigmoid => 0.25,
            Activation::Selu => SELU_LAMBDA * SELU_ALPHA,
        }
    }

    /// Value substituted for the chord slope at z = 0 (and, for activations
    /// with an unstable chord ratio, for |z| below the guard threshold).
    /// Piecewise-linear activations use the right derivative.
    pub fn slope_at_zero(&self) -> f64 {
        match self {
            Activation::Identity | Activation::ReLU | Activation::Tanh => 1.0,
            Activation::LeakyReLU { .. } => 1.0,
            Activation::Sigmoid => 0.25,
            Activation::Selu => SELU_LAMBDA,
            Activation::Softplus => 0.5,
        }
    }

    /// The chord slope (σ(z) − σ(0))/z, computed through cancellation-free
    /// formulas.
    ///
    /// The `eps` guard substitutes [`Activation::slope_at_zero`] only where
    /// the ratio is genuinely unstable (Tanh, Sigmoid, Softplus). ReLU,
    /// LeakyReLU and SELU branch on the sign of z and are exact for every
    /// z ≠ 0, which keeps the reconstruction identity tight near kinks.
    pub fn chord_slope(&self, z: f64, eps: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::ReLU => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    0.0
                } else {
                    self.slope_at_zero()
                }
            }
            Activation::LeakyReLU { slope } => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    *slope
                } else {
                    self.slope_at_zero()
                }
            }
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA
                } else if z < 0.0 {
                    SELU_LAMBDA * SELU_ALPHA * z.exp_m1() / z
                } else {
                    self.slope_at_zero()
                }
            }
            Activation::Tanh => {
                if z.abs() < eps {
                    1.0
                } else {
                    z.tanh() / z
                }
            }
            Activation::Sigmoid => {
                // σ(z) − 1/2 = tanh(z/2)/2, stable for all z.
                if z.abs() < eps {
                    0.25
                } else {
                    0.5 * (0.5 * z).tanh() / z
                }
            }
            Activation::Softplus => {
                // softplus(z) − ln 2 = ln1p((e^z − 1)/2); exp_m1 overflows
                // past ~709, so fall back to the large-z expansion there.
                if z.abs() < eps {
                    0.5
                } else if z > 30.0 {
                    (z + (-z).exp().ln_1p() - std::f64::consts::LN_2) / z
                } else {
                    (0.5 * z.exp_m1()).ln_1p() / z
                }
            }
        }
    }

    /// Serialized name.
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::ReLU => "relu",
            Activation::LeakyReLU { .. } => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Selu => "selu",
            Activation::Softplus => "softplus",
        }
    }

    /// Parse a serialized name; `slope` applies to leaky_relu only.
    pub fn from_name(name: &str, slope: Option<f64>) -> Result<Self> {
        match name {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::ReLU),
            "leaky_relu" => Activation::leaky_relu(slope.unwrap_or(tol::DEFAULT_LEAKY_SLOPE)),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "selu" => Ok(Activation::Selu),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::InvalidModel(format!("unknown activation {other:?}"))),
        }
    }

    fn slope_field(&self) -> Option<f64> {
        match self {
            Activation::LeakyReLU { slope } => Some(*slope),
            _ => None,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Apply an activation componentwise.
pub fn activation_apply(act: Activation, z: &DVector<f64>) -> DVector<f64> {
    z.map(|v| act.apply_scalar(v))
}

/// One affine + activation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weight: DMatrix<f64>,
    bias: Option<DVector<f64>>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        weight: DMatrix<f64>,
        bias: Option<DVector<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        if weight.nrows() == 0 || weight.ncols() == 0 {
            return Err(Error::shape("layer weight", "nonempty matrix", "empty"));
        }
        if let Some(b) = &bias {
            if b.len() != weight.nrows() {
                return Err(Error::shape(
                    "layer bias",
                    format!("length {}", weight.nrows()),
                    format!("length {}", b.len()),
                ));
            }
        }
        Ok(Layer {
            weight,
            bias,
            activation,
        })
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn bias(&self) -> Option<&DVector<f64>> {
        self.bias.as_ref()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.weight.nrows()
    }

    /// Preactivation W·x + b.
    pub fn preactivation(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut z = &self.weight * x;
        if let Some(b) = &self.bias {
            z += b;
        }
        z
    }
}

/// Layered network. Immutable after construction; evaluation is reentrant.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    layers: Vec<Layer>,
}

impl FeedForwardNet {
    /// Validates dimension chaining and the affine output layer.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidModel("network needs at least one layer".into()));
        }
        for i in 1..layers.len() {
            if layers[i].n_in() != layers[i - 1].n_out() {
                return Err(Error::shape(
                    format!("layer {i}"),
                    format!("input width {}", layers[i - 1].n_out()),
                    format!("input width {}", layers[i].n_in()),
                ));
            }
        }
        let last = layers.last().unwrap();
        if last.activation() != Activation::Identity {
            return Err(Error::InvalidModel(format!(
                "output layer must be affine (Identity activation), got {}",
                last.activation().name()
            )));
        }
        Ok(FeedForwardNet { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n_out()
    }

    /// Evaluate the network at `x`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(
                "layer 0",
                format!("input length {}", self.input_dim()),
                format!("input length {}", x.len()),
            ));
        }
        let mut h = x.clone();
        for layer in &self.layers {
            let z = layer.preactivation(&h);
            h = activation_apply(layer.activation(), &z);
        }
        Ok(h)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidModel(format!("network JSON: {e}")))
    }
}

// Wire format: {"layers":[{"weight":[[...]],"bias":[...]|null,"activation":"relu"}]}
// with row-major weight lists and an optional "slope" for leaky_relu.

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    weight: Vec<Vec<f64>>,
    bias: Option<Vec<f64>>,
    activation: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    slope: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetRepr {
    layers: Vec<LayerRepr>,
}

impl Serialize for FeedForwardNet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = NetRepr {
            layers: self
                .layers
                .iter()
                .map(|l| LayerRepr {
                    weight: (0..l.weight.nrows())
                        .map(|i| l.weight.row(i).iter().copied().collect())
                        .collect(),
                    bias: l.bias.as_ref().map(|b| b.iter().copied().collect()),
                    activation: l.activation.name().to_string(),
                    slope: l.activation.slope_field(),
                })
                .collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FeedForwardNet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = NetRepr::deserialize(deserializer)?;
        let mut layers = Vec::with_capacity(repr.layers.len());
        for (i, l) in repr.layers.into_iter().enumerate() {
            let rows = l.weight.len();
            if rows == 0 {
                return Err(D::Error::custom(format!("layer {i}: empty weight")));
            }
            let cols = l.weight[0].len();
            if l.weight.iter().any(|r| r.len() != cols) {
                return Err(D::Error::custom(format!("layer {i}: ragged weight rows")));
            }
            let weight = DMatrix::from_row_iterator(rows, cols, l.weight.into_iter().flatten());
            let bias = l.bias.map(DVector::from_vec);
            let activation =
                Activation::from_name(&l.activation, l.slope).map_err(D::Error::custom)?;
            layers.push(Layer::new(weight, bias, activation).map_err(D::Error::custom)?);
        }
        FeedForwardNet::new(layers).map_err(D::Error::custom)
    }
}
