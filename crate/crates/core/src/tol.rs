//! Shared numeric tolerances and defaults.
//!
//! Every module reads its tolerance constants from here so that the whole
//! crate agrees on what "converged", "in band", or "exact" means.

/// Max componentwise error allowed between a network evaluation and its
/// pointwise-affine reconstruction at the anchor.
pub const PWA_RECONSTRUCT_TOL: f64 = 1e-8;

/// Preactivations below this magnitude use the analytic limit slope instead
/// of the chord ratio for activations whose chord is unstable near zero.
pub const LAMBDA_EPS: f64 = 1e-7;

/// Relative change of successive spectral-norm estimates at which power
/// iteration stops.
pub const POWER_ITER_TOL: f64 = 1e-10;

/// Power iteration budget.
pub const POWER_ITER_MAX: usize = 5000;

/// QR iteration budget per matrix dimension for the eigensolver.
pub const EIGEN_MAX_ITER_PER_DIM: usize = 100;

/// Largest square matrix accepted by the eigensolver (desk scale).
pub const EIGEN_MAX_DIM: usize = 64;

/// Slack applied to band membership checks in verification reports.
pub const BAND_TOL: f64 = 1e-6;

/// A weight norm must stay below `1 - CONTRACTIVE_MARGIN` to count as
/// contractive in a layer-wise certificate.
pub const CONTRACTIVE_MARGIN: f64 = 1e-12;

/// Half-width of the product-bound interval classified as Marginal.
pub const MARGINAL_DELTA: f64 = 0.02;

/// Fixed-point solver defaults.
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const FIXED_POINT_MAX_ITER: usize = 100_000;

/// Default smoothstep blend width between radial constraint regions.
pub const DEFAULT_BLEND_WIDTH: f64 = 2.0;

/// Successive-difference threshold used by the empirical moment diagnostic.
pub const MOMENT_DIFF_TOL: f64 = 1e-3;

/// Default LeakyReLU negative-side slope.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Grid points with norm at or below this are treated as the origin and
/// excluded from gain computations.
pub const ORIGIN_EPS: f64 = 1e-12;
