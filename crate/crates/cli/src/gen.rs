//! Random network generation with banded spectral constructions.

use dmm_stability::factorize::{
    gd_weight, pf_weight, svd_weight, FactorMethod, SpectralBand, VerificationReport,
};
use dmm_stability::netcore::{Activation, FeedForwardNet, Layer};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::CmdError;

/// Everything needed to draw one banded network.
#[derive(Clone)]
pub struct NetSpec {
    pub method: FactorMethod,
    pub band: SpectralBand,
    pub depth: usize,
    pub act: Activation,
    pub bias: bool,
    pub dim: usize,
    pub hidden: usize,
    /// Constant added to the output layer's bias vector.
    pub out_bias_shift: f64,
    /// When set, every raw singular-value parameter is pinned to this value
    /// (svd only); large values park the singular values at the band's
    /// lower edge.
    pub sv_pin: Option<f64>,
}

impl NetSpec {
    pub fn square(&self) -> bool {
        self.hidden == self.dim
    }
}

pub fn parse_method(s: &str) -> Result<FactorMethod, CmdError> {
    match s {
        "pf" => Ok(FactorMethod::Pf),
        "svd" => Ok(FactorMethod::Svd),
        "gd" => Ok(FactorMethod::Gd),
        other => Err(CmdError::Usage(format!(
            "unknown method {other:?} (use pf, svd, gd)"
        ))),
    }
}

pub fn parse_activation(s: &str) -> Result<Activation, CmdError> {
    Activation::from_name(s, None).map_err(|e| CmdError::Usage(e.to_string()))
}

pub fn parse_band(values: &[f64]) -> Result<SpectralBand, CmdError> {
    if values.len() != 2 {
        return Err(CmdError::Usage(format!(
            "band needs exactly two values, got {}",
            values.len()
        )));
    }
    SpectralBand::new(values[0], values[1]).map_err(|e| CmdError::Usage(e.to_string()))
}

fn draw_weight(
    rng: &mut ChaCha8Rng,
    method: FactorMethod,
    band: SpectralBand,
    rows: usize,
    cols: usize,
    sv_pin: Option<f64>,
) -> Result<(DMatrix<f64>, VerificationReport), CmdError> {
    let runtime = |e: dmm_stability::Error| CmdError::Runtime(e.to_string());
    let fw = match method {
        FactorMethod::Pf => {
            let m_raw = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
            let a_raw = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
            pf_weight(&m_raw, &a_raw, band).map_err(runtime)?
        }
        FactorMethod::Svd => {
            let us: Vec<DVector<f64>> = (0..rows)
                .map(|_| DVector::from_fn(rows, |_, _| StandardNormal.sample(rng)))
                .collect();
            let vs: Vec<DVector<f64>> = (0..cols)
                .map(|_| DVector::from_fn(cols, |_, _| StandardNormal.sample(rng)))
                .collect();
            let k = rows.min(cols);
            let sv = match sv_pin {
                Some(p) => DVector::from_element(k, p),
                None => DVector::from_fn(k, |_, _| StandardNormal.sample(rng)),
            };
            svd_weight(&us, &vs, &sv, band, (rows, cols)).map_err(runtime)?
        }
        FactorMethod::Gd => {
            let m_raw =
                DMatrix::from_fn(rows, cols, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..1.0) });
            gd_weight(&m_raw, band.radius(), band.center()).map_err(runtime)?
        }
    };
    let report = fw.verify().map_err(runtime)?;
    Ok((fw.realized, report))
}

/// Draw a network per the spec; returns it with one verification report per
/// layer. The caller is responsible for the pf/gd squareness precondition.
pub fn generate_net(
    rng: &mut ChaCha8Rng,
    spec: &NetSpec,
) -> Result<(FeedForwardNet, Vec<VerificationReport>), CmdError> {
    let bias_dist = Normal::new(0.0, 0.5).expect("valid normal");
    let mut dims = Vec::with_capacity(spec.depth + 1);
    dims.push(spec.dim);
    for _ in 1..spec.depth {
        dims.push(spec.hidden);
    }
    dims.push(spec.dim);

    let mut layers = Vec::with_capacity(spec.depth);
    let mut reports = Vec::with_capacity(spec.depth);
    for l in 0..spec.depth {
        let (rows, cols) = (dims[l + 1], dims[l]);
        let (weight, report) = draw_weight(rng, spec.method, spec.band, rows, cols, spec.sv_pin)?;
        reports.push(report);
        let last = l == spec.depth - 1;
        let act = if last { Activation::Identity } else { spec.act };
        let shift = if last { spec.out_bias_shift } else { 0.0 };
        let bias = if spec.bias {
            Some(DVector::from_fn(rows, |_, _| bias_dist.sample(rng) + shift))
        } else if shift != 0.0 {
            Some(DVector::from_element(rows, shift))
        } else {
            None
        };
        layers.push(
            Layer::new(weight, bias, act).map_err(|e| CmdError::Runtime(e.to_string()))?,
        );
    }
    let net = FeedForwardNet::new(layers).map_err(|e| CmdError::Runtime(e.to_string()))?;
    Ok((net, reports))
}
