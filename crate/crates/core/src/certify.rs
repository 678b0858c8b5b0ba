//! Stability verdicts and bounds.
//!
//! Two kinds of output are kept strictly apart: the layer-wise certificate
//! is a global guarantee (submultiplicativity makes the product bound hold
//! at every input), while grid evidence is sampled — it can refute but
//! never prove the pointwise conditions. Every serialized report carries
//! this distinction.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dmm::DeepMarkovModel;
use crate::error::{Error, Result};
use crate::netcore::FeedForwardNet;
use crate::pwa::extract;
use crate::sim::{fixed_point, FixedPointConfig};
use crate::spectral::{local_lipschitz, op_norm, vec_norm, NormKind};
use crate::tol;

/// Certificate outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CertifiedContractive,
    Marginal,
    NotCertified,
}

/// Per-layer measurement: weight norm and activation slope bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerNorm {
    pub layer: usize,
    pub weight_norm: f64,
    pub max_slope: f64,
}

/// Layer-wise contraction certificate. `CertifiedContractive` is a global
/// statement: every weight norm below one and every activation
/// non-expanding force the product bound below one at every input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub verdict: Verdict,
    pub p: NormKind,
    pub per_layer: Vec<LayerNorm>,
    pub product_bound: f64,
}

/// Measure each layer and classify.
///
/// CertifiedContractive requires every weight norm < 1 (with a small
/// margin) and every activation slope bound ≤ 1. Otherwise a product bound
/// within [1−δ, 1+δ] is Marginal, anything else NotCertified.
pub fn certify_layerwise(net: &FeedForwardNet, p: NormKind) -> StabilityCertificate {
    let per_layer: Vec<LayerNorm> = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| LayerNorm {
            layer: i,
            weight_norm: op_norm(l.weight(), p)
                .expect("layer weights are nonempty")
                .norm_value,
            max_slope: l.activation().max_slope(),
        })
        .collect();
    let product_bound: f64 = per_layer.iter().map(|l| l.weight_norm * l.max_slope).product();
    let contractive = per_layer
        .iter()
        .all(|l| l.weight_norm < 1.0 - tol::CONTRACTIVE_MARGIN && l.max_slope <= 1.0);
    let verdict = if contractive {
        Verdict::CertifiedContractive
    } else if (product_bound - 1.0).abs() <= tol::MARGINAL_DELTA {
        Verdict::Marginal
    } else {
        Verdict::NotCertified
    };
    StabilityCertificate {
        verdict,
        p,
        per_layer,
        product_bound,
    }
}

/// One grid sample: the mean map's local norm and the variance map's gain.
#[derive(Debug, Clone)]
pub struct GridSample {
    pub x: DVector<f64>,
    pub mean_norm: f64,
    pub variance_gain: f64,
}

/// Sampled evidence for the pointwise sufficient conditions. Not a
/// certificate: it reports suprema over grid points only.
#[derive(Debug, Clone)]
pub struct GridEvidence {
    pub samples: Vec<GridSample>,
    pub sup_mean_norm: f64,
    pub sup_variance_gain: f64,
    pub domain_box: Vec<(f64, f64)>,
    pub resolution: usize,
    /// True when both suprema are below one on the sampled grid.
    pub consistent: bool,
}

/// Serialized summary of grid evidence (samples omitted).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEvidenceSummary {
    pub kind: String,
    pub domain_box: Vec<(f64, f64)>,
    pub resolution: usize,
    pub samples_evaluated: usize,
    pub sup_mean_norm: f64,
    pub sup_variance_gain: f64,
    pub consistent: bool,
}

impl GridEvidence {
    pub fn summary(&self) -> GridEvidenceSummary {
        GridEvidenceSummary {
            kind: "sampled_evidence".into(),
            domain_box: self.domain_box.clone(),
            resolution: self.resolution,
            samples_evaluated: self.samples.len(),
            sup_mean_norm: self.sup_mean_norm,
            sup_variance_gain: self.sup_variance_gain,
            consistent: self.consistent,
        }
    }
}

/// Evaluate ‖A_f(x)‖_p and the variance gain K^g(x) on every grid point of
/// the box (origin excluded, where the gain is undefined).
pub fn certify_grid(
    dmm: &DeepMarkovModel,
    domain_box: &[(f64, f64)],
    resolution: usize,
    p: NormKind,
) -> Result<GridEvidence> {
    if domain_box.len() != dmm.state_dim() {
        return Err(Error::shape(
            "certify_grid box",
            format!("{} dimensions", dmm.state_dim()),
            format!("{} dimensions", domain_box.len()),
        ));
    }
    if resolution < 2 {
        return Err(Error::Precondition("resolution must be at least 2".into()));
    }
    for &(lo, hi) in domain_box {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Precondition(format!("degenerate box side [{lo}, {hi}]")));
        }
    }
    let dim = domain_box.len();
    let mut samples = Vec::new();
    let mut index = vec![0usize; dim];
    loop {
        let x = DVector::from_fn(dim, |k, _| {
            let (lo, hi) = domain_box[k];
            lo + (hi - lo) * index[k] as f64 / (resolution - 1) as f64
        });
        if vec_norm(&x, p) > tol::ORIGIN_EPS {
            let mean_form = extract(dmm.mean_net(), &x)?;
            let mean_norm = op_norm(mean_form.a_matrix(), p)?.norm_value;
            let var_form = extract(dmm.var_net(), &x)?;
            let variance_gain = local_lipschitz(&var_form, &x, p)?;
            samples.push(GridSample {
                x,
                mean_norm,
                variance_gain,
            });
        }
        // Odometer increment over the grid indices.
        let mut k = 0;
        loop {
            index[k] += 1;
            if index[k] < resolution {
                break;
            }
            index[k] = 0;
            k += 1;
            if k == dim {
                let sup_mean_norm = samples.iter().map(|s| s.mean_norm).fold(0.0, f64::max);
                let sup_variance_gain =
                    samples.iter().map(|s| s.variance_gain).fold(0.0, f64::max);
                return Ok(GridEvidence {
                    consistent: sup_mean_norm < 1.0 && sup_variance_gain < 1.0,
                    samples,
                    sup_mean_norm,
                    sup_variance_gain,
                    domain_box: domain_box.to_vec(),
                    resolution,
                });
            }
        }
    }
}

/// Norm interval around a certified network's fixed point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumBounds {
    pub lower: f64,
    pub upper: f64,
    pub equilibrium: Vec<f64>,
    pub p: NormKind,
}

/// Solve for the fixed point and bound its norm from the affine form at the
/// solution: ‖b‖/(1+‖A‖) ≤ ‖x*‖ ≤ ‖b‖/(1−‖A‖).
///
/// Requires a CertifiedContractive verdict first — the contraction is what
/// makes the fixed point exist, be unique, and keep the denominator
/// positive.
pub fn equilibrium_bounds(
    net: &FeedForwardNet,
    p: NormKind,
    cfg: &FixedPointConfig,
) -> Result<EquilibriumBounds> {
    let cert = certify_layerwise(net, p);
    if cert.verdict != Verdict::CertifiedContractive {
        return Err(Error::Precondition(format!(
            "equilibrium bounds need a certified-contractive network, verdict was {:?}",
            cert.verdict
        )));
    }
    let origin = DVector::zeros(net.input_dim());
    let fp = fixed_point(net, &origin, cfg)?;
    if !fp.converged {
        return Err(Error::NoConvergence {
            context: "fixed-point iteration".into(),
            iterations: fp.iterations,
        });
    }
    let form = extract(net, &fp.point)?;
    let a_norm = op_norm(form.a_matrix(), p)?.norm_value;
    let b_norm = vec_norm(form.b_vector(), p);
    Ok(EquilibriumBounds {
        lower: b_norm / (1.0 + a_norm),
        upper: b_norm / (1.0 - a_norm),
        equilibrium: fp.point.iter().copied().collect(),
        p,
    })
}

/// Penalty value max(1, ‖A_f(x)‖) + max(K, K^g(x)) from the affine forms
/// at x.
///
/// Implemented verbatim: the terms are constant below their thresholds. A
/// hinge variant max(0, ‖A_f(x)‖ − 1) would expose a gradient there, but is
/// deliberately not substituted.
pub fn stability_penalty(dmm: &DeepMarkovModel, x: &DVector<f64>, k: f64, p: NormKind) -> Result<f64> {
    if vec_norm(x, p) == 0.0 {
        return Err(Error::Domain("stability penalty undefined at x = 0".into()));
    }
    let mean_form = extract(dmm.mean_net(), x)?;
    let mean_norm = op_norm(mean_form.a_matrix(), p)?.norm_value;
    let var_form = extract(dmm.var_net(), x)?;
    let variance_gain = local_lipschitz(&var_form, x, p)?;
    Ok(mean_norm.max(1.0) + variance_gain.max(k))
}

/// Penalty on the equilibrium-norm estimate r(x) = ‖b(x)‖/(1−‖A(x)‖)
/// leaving the interval [x_lo, x_hi].
pub fn equilibrium_penalty(
    net: &FeedForwardNet,
    x: &DVector<f64>,
    x_lo: f64,
    x_hi: f64,
    p: NormKind,
) -> Result<f64> {
    let form = extract(net, x)?;
    let a_norm = op_norm(form.a_matrix(), p)?.norm_value;
    if a_norm >= 1.0 {
        return Err(Error::Domain(format!(
            "equilibrium penalty needs ||A(x)|| < 1, got {a_norm}"
        )));
    }
    let r = vec_norm(form.b_vector(), p) / (1.0 - a_norm);
    Ok((x_lo - r).max(0.0) + (r - x_hi).max(0.0))
}
