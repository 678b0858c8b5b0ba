//! Exact pointwise-affine forms of feedforward networks.
//!
//! For any network ψ and input x there is a pair (A(x), b(x)) with
//! ψ(x) = A(x)·x + b(x), built by linearizing each activation through its
//! chord slopes at the actual preactivations. The form is exact at the
//! anchor x and, for piecewise-linear activations, throughout the anchor's
//! activation region.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{activation_apply, Activation, FeedForwardNet};
use crate::tol;

/// Diagonal linearization of one activation stage: σ(z) = entries ∘ z + offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationPattern {
    entries: DVector<f64>,
    offset: DVector<f64>,
}

impl ActivationPattern {
    /// Diagonal of the scaling matrix.
    pub fn entries(&self) -> &DVector<f64> {
        &self.entries
    }

    /// The σ(0) vector.
    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }
}

/// Chord-slope pattern of `act` at preactivation `z`.
///
/// Entries are (σ(zᵢ) − σ(0))/zᵢ with the analytic limit slope substituted
/// for |zᵢ| < eps where the ratio is unstable (see
/// [`Activation::chord_slope`]); the offset is the constant σ(0) vector.
pub fn lambda_pattern(act: Activation, z: &DVector<f64>, eps: f64) -> ActivationPattern {
    assert!(eps > 0.0, "eps must be positive");
    let entries = z.map(|v| act.chord_slope(v, eps));
    let offset = DVector::from_element(z.len(), act.value_at_zero());
    ActivationPattern { entries, offset }
}

/// Input-anchored affine form of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaForm {
    a_matrix: DMatrix<f64>,
    b_vector: DVector<f64>,
    anchor: DVector<f64>,
}

impl PwaForm {
    pub fn new(a_matrix: DMatrix<f64>, b_vector: DVector<f64>, anchor: DVector<f64>) -> Result<Self> {
        if b_vector.len() != a_matrix.nrows() || anchor.len() != a_matrix.ncols() {
            return Err(Error::shape(
                "pwa form",
                format!("b length {}, anchor length {}", a_matrix.nrows(), a_matrix.ncols()),
                format!("b length {}, anchor length {}", b_vector.len(), anchor.len()),
            ));
        }
        Ok(PwaForm {
            a_matrix,
            b_vector,
            anchor,
        })
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a_matrix
    }

    pub fn b_vector(&self) -> &DVector<f64> {
        &self.b_vector
    }

    /// The input the form was extracted at.
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pwa serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidModel(format!("pwa JSON: {e}")))
    }
}

// Wire format: {"A":[[...]],"b":[...],"anchor":[...]}.

#[derive(Serialize, Deserialize)]
struct PwaRepr {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    anchor: Vec<f64>,
}

impl Serialize for PwaForm {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PwaRepr {
            a: (0..self.a_matrix.nrows())
                .map(|i| self.a_matrix.row(i).iter().copied().collect())
                .collect(),
            b: self.b_vector.iter().copied().collect(),
            anchor: self.anchor.iter().copied().collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PwaForm {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = PwaRepr::deserialize(deserializer)?;
        let rows = repr.a.len();
        if rows == 0 {
            return Err(D::Error::custom("empty A matrix"));
        }
        let cols = repr.a[0].len();
        if repr.a.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged A matrix"));
        }
        let a = DMatrix::from_row_iterator(rows, cols, repr.a.into_iter().flatten());
        PwaForm::new(a, DVector::from_vec(repr.b), DVector::from_vec(repr.anchor))
            .map_err(D::Error::custom)
    }
}

/// Extract the pointwise-affine form of `net` anchored at `x`.
///
/// One forward sweep folds each stage into the running affine map: with
/// h = A·x + b exact so far and a layer z = W·h + c, the pattern Λ, s at z
/// gives the next map A ← Λ·W·A, b ← Λ·(W·b + c) + s. The σ(0) offsets are
/// accumulated in b during the sweep, so the cost stays linear in depth.
pub fn extract(net: &FeedForwardNet, x: &DVector<f64>) -> Result<PwaForm> {
    if x.len() != net.input_dim() {
        return Err(Error::shape(
            "layer 0",
            format!("input length {}", net.input_dim()),
            format!("input length {}", x.len()),
        ));
    }
    let n_in = net.input_dim();
    let mut a = DMatrix::<f64>::identity(n_in, n_in);
    let mut b = DVector::<f64>::zeros(n_in);
    let mut h = x.clone();
    for layer in net.layers() {
        let z = layer.preactivation(&h);
        let pattern = lambda_pattern(layer.activation(), &z, tol::LAMBDA_EPS);

        let mut wa = layer.weight() * &a;
        let mut wb = layer.weight() * &b;
        if let Some(c) = layer.bias() {
            wb += c;
        }
        for (i, &e) in pattern.entries().iter().enumerate() {
            wa.row_mut(i).scale_mut(e);
            wb[i] *= e;
        }
        a = wa;
        b = wb + pattern.offset();
        // Propagate the true forward value so downstream patterns see the
        // same preactivations as eval.
        h = activation_apply(layer.activation(), &z);
    }
    PwaForm::new(a, b, x.clone())
}

/// Evaluate an extracted form at `x`: A·x + b.
///
/// Exact only at the anchor (and within the anchor's activation region for
/// piecewise-linear activations).
pub fn reconstruct(form: &PwaForm, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != form.a_matrix.ncols() {
        return Err(Error::shape(
            "pwa reconstruct",
            format!("input length {}", form.a_matrix.ncols()),
            format!("input length {}", x.len()),
        ));
    }
    Ok(&form.a_matrix * x + &form.b_vector)
}
