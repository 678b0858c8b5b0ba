//! Deep Markov models: Gaussian transition sampling, mean dynamics,
//! identity emission, and the region-switched variant with radius-dependent
//! norm constraints.
//!
//! The transition draws x' ~ N(f(x), diag(d(x)²)) where f is the mean
//! network and d(x) = softplus(g(x)) maps the raw variance network output to
//! elementwise standard deviations. Stability analysis applies to the raw
//! variance network; the positivity map is 1-Lipschitz, so layer bounds
//! carry over unchanged.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{Activation, FeedForwardNet, Layer};
use crate::pwa::extract;
use crate::spectral::{layer_product_bound, op_norm, NormKind};

/// Identifier of the deterministic draw scheme stored in model files.
pub const SEED_SCHEME: &str = "counter_v1";

/// Emission map kind. Only the identity emission is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emission {
    Identity,
}

/// Address of one Gaussian draw: the (seed, stream, step) triple fully
/// determines the sample, so trajectories can be generated independently
/// and bitwise-reproducibly in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub stream: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(seed: u64, stream: u64, step: u64) -> Self {
        StreamKey { seed, stream, step }
    }

    /// Key for the next time step on the same stream.
    pub fn advanced(&self) -> Self {
        StreamKey {
            seed: self.seed,
            stream: self.stream,
            step: self.step + 1,
        }
    }

    /// Deterministic generator for this draw address.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = splitmix(self.seed ^ 0x6A09_E667_F3BC_C908);
        state = splitmix(state ^ self.stream);
        state = splitmix(state ^ self.step);
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

fn splitmix(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Markov state-space model with neural mean and variance maps and an
/// identity emission. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepMarkovModel {
    mean_net: FeedForwardNet,
    var_net: FeedForwardNet,
    emission: Emission,
}

impl DeepMarkovModel {
    pub fn new(mean_net: FeedForwardNet, var_net: FeedForwardNet) -> Result<Self> {
        let n = mean_net.input_dim();
        if mean_net.output_dim() != n {
            return Err(Error::shape(
                "mean network",
                format!("{n} -> {n}"),
                format!("{} -> {}", n, mean_net.output_dim()),
            ));
        }
        if var_net.input_dim() != n || var_net.output_dim() != n {
            return Err(Error::shape(
                "variance network",
                format!("{n} -> {n} (diagonal mode)"),
                format!("{} -> {}", var_net.input_dim(), var_net.output_dim()),
            ));
        }
        Ok(DeepMarkovModel {
            mean_net,
            var_net,
            emission: Emission::Identity,
        })
    }

    /// Model with the given mean map and an exactly-zero noise floor, used
    /// wherever deterministic dynamics are wanted through the same API.
    pub fn deterministic(mean_net: FeedForwardNet) -> Result<Self> {
        let n = mean_net.input_dim();
        // softplus(-800) underflows to exactly 0.0.
        let var = FeedForwardNet::new(vec![Layer::new(
            nalgebra::DMatrix::zeros(n, n),
            Some(DVector::from_element(n, -800.0)),
            Activation::Identity,
        )?])?;
        DeepMarkovModel::new(mean_net, var)
    }

    /// Copy of this model with the noise floor forced to exactly zero.
    pub fn zero_variance(&self) -> DeepMarkovModel {
        DeepMarkovModel::deterministic(self.mean_net.clone())
            .expect("mean network already validated")
    }

    pub fn mean_net(&self) -> &FeedForwardNet {
        &self.mean_net
    }

    pub fn var_net(&self) -> &FeedForwardNet {
        &self.var_net
    }

    pub fn emission_kind(&self) -> Emission {
        self.emission
    }

    pub fn state_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    /// Deterministic mean dynamics f(x).
    pub fn mean_step(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.mean_net.eval(x)
    }

    /// Elementwise noise standard deviations d(x) = softplus(g(x)).
    pub fn noise_std(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.var_net.eval(x)?.map(softplus))
    }

    /// One stochastic transition; the returned key addresses the next step.
    pub fn sample_step(&self, x: &DVector<f64>, key: &StreamKey) -> Result<(DVector<f64>, StreamKey)> {
        let mean = self.mean_step(x)?;
        let std = self.noise_std(x)?;
        Ok((gaussian_perturb(mean, &std, key), key.advanced()))
    }

    /// Identity emission: observations are the latent state.
    pub fn emission(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
}

fn gaussian_perturb(mean: DVector<f64>, std: &DVector<f64>, key: &StreamKey) -> DVector<f64> {
    let mut rng = key.rng();
    let mut out = mean;
    for i in 0..out.len() {
        let xi: f64 = StandardNormal.sample(&mut rng);
        out[i] += std[i] * xi;
    }
    out
}

/// One radial band [radius_low, radius_high) with its mean-map scale.
/// `radius_high = None` marks the unbounded outermost band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBand {
    pub radius_low: f64,
    pub radius_high: Option<f64>,
    pub norm_scale: f64,
}

/// Radial partition of the state space with per-band scales, blended by a
/// smoothstep of the given width across band edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    bands: Vec<RegionBand>,
    blend_width: f64,
}

impl RegionSpec {
    /// Bands must partition [0, ∞): start at 0, be contiguous, and end with
    /// an unbounded band. Interior bands must be wide enough to hold the
    /// blend zones of both their edges.
    pub fn new(bands: Vec<RegionBand>, blend_width: f64) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidModel("region spec needs at least one band".into()));
        }
        if blend_width.is_nan() || blend_width < 0.0 {
            return Err(Error::InvalidModel(format!(
                "blend width must be nonnegative, got {blend_width}"
            )));
        }
        if bands[0].radius_low != 0.0 {
            return Err(Error::InvalidModel("first band must start at radius 0".into()));
        }
        for (i, b) in bands.iter().enumerate() {
            if !b.norm_scale.is_finite() || b.norm_scale < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "band {i} scale must be finite and nonnegative, got {}",
                    b.norm_scale
                )));
            }
            let last = i == bands.len() - 1;
            match b.radius_high {
                None if !last => {
                    return Err(Error::InvalidModel(format!(
                        "band {i} is unbounded but not the outermost"
                    )));
                }
                Some(h) if last => {
                    return Err(Error::InvalidModel(format!(
                        "outermost band must be unbounded, ends at {h}"
                    )));
                }
                Some(h) => {
                    if h <= b.radius_low {
                        return Err(Error::InvalidModel(format!(
                            "band {i} is empty: [{}, {h})",
                            b.radius_low
                        )));
                    }
                    if h - b.radius_low < blend_width {
                        return Err(Error::InvalidModel(format!(
                            "band {i} narrower than the blend width"
                        )));
                    }
                    if bands[i + 1].radius_low != h {
                        return Err(Error::InvalidModel(format!(
                            "gap or overlap between bands {i} and {}",
                            i + 1
                        )));
                    }
                }
                None => {}
            }
        }
        Ok(RegionSpec { bands, blend_width })
    }

    pub fn bands(&self) -> &[RegionBand] {
        &self.bands
    }

    pub fn blend_width(&self) -> f64 {
        self.blend_width
    }

    /// Scale applied to the mean map at radius `r`, smoothstep-blended over
    /// `blend_width` around each band edge.
    pub fn scale_at(&self, r: f64) -> f64 {
        let mut idx = self.bands.len() - 1;
        for (i, b) in self.bands.iter().enumerate() {
            match b.radius_high {
                Some(h) if r < h => {
                    idx = i;
                    break;
                }
                None => {
                    idx = i;
                }
                _ => {}
            }
        }
        let base = self.bands[idx].norm_scale;
        if self.blend_width == 0.0 {
            return base;
        }
        let half = 0.5 * self.blend_width;
        // Blend toward the neighbor when inside an edge zone.
        if idx + 1 < self.bands.len() {
            let edge = self.bands[idx].radius_high.unwrap();
            if r > edge - half {
                let t = ((r - (edge - half)) / self.blend_width).clamp(0.0, 1.0);
                let s = smoothstep(t);
                return base + (self.bands[idx + 1].norm_scale - base) * s;
            }
        }
        if idx > 0 {
            let edge = self.bands[idx].radius_low;
            if r < edge + half {
                let t = ((r - (edge - half)) / self.blend_width).clamp(0.0, 1.0);
                let s = smoothstep(t);
                return self.bands[idx - 1].norm_scale
                    + (base - self.bands[idx - 1].norm_scale) * s;
            }
        }
        base
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// A base model whose mean map is rescaled by a radius-dependent factor,
/// realizing state-dependent norm constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricDmm {
    base: DeepMarkovModel,
    regions: RegionSpec,
}

impl ParametricDmm {
    /// The outermost scale must make the effective mean map contractive:
    /// scale · (layer product bound of the mean network) < 1.
    pub fn new(base: DeepMarkovModel, regions: RegionSpec) -> Result<Self> {
        let outer = regions.bands().last().unwrap().norm_scale;
        let bound = layer_product_bound(base.mean_net(), NormKind::Two);
        let effective = outer * bound;
        if effective.is_nan() || effective >= 1.0 {
            return Err(Error::Precondition(format!(
                "outermost band is not contractive: scale {outer} x product bound {bound} >= 1"
            )));
        }
        Ok(ParametricDmm { base, regions })
    }

    pub fn base(&self) -> &DeepMarkovModel {
        &self.base
    }

    pub fn regions(&self) -> &RegionSpec {
        &self.regions
    }

    pub fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    /// Scaled mean dynamics s(‖x‖₂)·f(x).
    pub fn mean_step(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let s = self.regions.scale_at(x.norm());
        Ok(s * self.base.mean_step(x)?)
    }

    pub fn sample_step(&self, x: &DVector<f64>, key: &StreamKey) -> Result<(DVector<f64>, StreamKey)> {
        let mean = self.mean_step(x)?;
        let std = self.base.noise_std(x)?;
        Ok((gaussian_perturb(mean, &std, key), key.advanced()))
    }

    pub fn emission(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    /// Norm of the scaled linear part, s(‖x‖₂)·‖A_f(x)‖_p. The region design
    /// is checked through this: expanding inside, contractive outside.
    pub fn effective_norm(&self, x: &DVector<f64>, p: NormKind) -> Result<f64> {
        if crate::spectral::vec_norm(x, p) == 0.0 {
            return Err(Error::Domain("effective norm undefined at x = 0".into()));
        }
        let form = extract(self.base.mean_net(), x)?;
        let a_norm = op_norm(form.a_matrix(), p)?.norm_value;
        Ok(self.regions.scale_at(x.norm()) * a_norm)
    }
}

/// Either model kind behind one transition interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Plain(DeepMarkovModel),
    Parametric(ParametricDmm),
}

impl Model {
    pub fn state_dim(&self) -> usize {
        match self {
            Model::Plain(m) => m.state_dim(),
            Model::Parametric(m) => m.state_dim(),
        }
    }

    pub fn base(&self) -> &DeepMarkovModel {
        match self {
            Model::Plain(m) => m,
            Model::Parametric(m) => m.base(),
        }
    }

    pub fn mean_step(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Model::Plain(m) => m.mean_step(x),
            Model::Parametric(m) => m.mean_step(x),
        }
    }

    pub fn sample_step(&self, x: &DVector<f64>, key: &StreamKey) -> Result<(DVector<f64>, StreamKey)> {
        match self {
            Model::Plain(m) => m.sample_step(x, key),
            Model::Parametric(m) => m.sample_step(x, key),
        }
    }

    pub fn emission(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    /// Same model with an exactly-zero noise floor.
    pub fn zero_variance(&self) -> Model {
        match self {
            Model::Plain(m) => Model::Plain(m.zero_variance()),
            Model::Parametric(m) => Model::Parametric(ParametricDmm {
                base: m.base.zero_variance(),
                regions: m.regions.clone(),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidModel(format!("model JSON: {e}")))
    }
}

// Model file format:
// {"mean_net": ..., "var_net": ..., "regions": {...}|null, "seed_scheme": "counter_v1"}

#[derive(Serialize, Deserialize)]
struct RegionsRepr {
    bands: Vec<RegionBand>,
    blend_width: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    mean_net: FeedForwardNet,
    var_net: FeedForwardNet,
    regions: Option<RegionsRepr>,
    seed_scheme: String,
}

impl Serialize for Model {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (base, regions) = match self {
            Model::Plain(m) => (m, None),
            Model::Parametric(m) => (
                m.base(),
                Some(RegionsRepr {
                    bands: m.regions().bands().to_vec(),
                    blend_width: m.regions().blend_width(),
                }),
            ),
        };
        ModelRepr {
            mean_net: base.mean_net().clone(),
            var_net: base.var_net().clone(),
            regions,
            seed_scheme: SEED_SCHEME.to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Model {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = ModelRepr::deserialize(deserializer)?;
        if repr.seed_scheme != SEED_SCHEME {
            return Err(D::Error::custom(format!(
                "unknown seed scheme {:?} (expected {SEED_SCHEME:?})",
                repr.seed_scheme
            )));
        }
        let base = DeepMarkovModel::new(repr.mean_net, repr.var_net).map_err(D::Error::custom)?;
        match repr.regions {
            None => Ok(Model::Plain(base)),
            Some(r) => {
                let regions = RegionSpec::new(r.bands, r.blend_width).map_err(D::Error::custom)?;
                Ok(Model::Parametric(
                    ParametricDmm::new(base, regions).map_err(D::Error::custom)?,
                ))
            }
        }
    }
}
