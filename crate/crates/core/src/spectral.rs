//! Induced operator norms, eigenvalues, local Lipschitz constants, and
//! layer-product bounds — the measurement layer behind every certificate.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::FeedForwardNet;
use crate::pwa::PwaForm;
use crate::tol;

/// Which induced norm to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Infinity,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormKind::One => write!(f, "1"),
            NormKind::Two => write!(f, "2"),
            NormKind::Infinity => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(NormKind::One),
            "2" => Ok(NormKind::Two),
            "inf" | "infinity" => Ok(NormKind::Infinity),
            other => Err(Error::Domain(format!("unknown norm {other:?} (use 1, 2, inf)"))),
        }
    }
}

/// How a norm value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    ColumnSum,
    RowSum,
    PowerIteration,
}

/// Result of an operator-norm computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub norm_value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    /// Last relative change between successive estimates; exceeds
    /// [`tol::POWER_ITER_TOL`] only when power iteration ran out of budget.
    pub residual: f64,
}

impl SpectralReport {
    pub fn converged(&self) -> bool {
        self.residual <= tol::POWER_ITER_TOL
    }
}

/// Vector p-norm for p ∈ {1, 2, ∞}.
pub fn vec_norm(v: &DVector<f64>, p: NormKind) -> f64 {
    match p {
        NormKind::One => v.iter().map(|x| x.abs()).sum(),
        NormKind::Two => v.norm(),
        NormKind::Infinity => v.amax(),
    }
}

/// Induced operator norm of a matrix.
///
/// p = 1 is the max absolute column sum, p = ∞ the max absolute row sum,
/// and p = 2 the largest singular value estimated by power iteration on
/// AᵀA with a deterministic start vector. Non-convergence is reported via
/// the residual, not an error; the caller decides.
pub fn op_norm(a: &DMatrix<f64>, p: NormKind) -> Result<SpectralReport> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::shape("op_norm", "nonempty matrix", "empty"));
    }
    let report = match p {
        NormKind::One => SpectralReport {
            norm_value: (0..a.ncols())
                .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            method: NormMethod::ColumnSum,
            iterations: 0,
            residual: 0.0,
        },
        NormKind::Infinity => SpectralReport {
            norm_value: (0..a.nrows())
                .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            method: NormMethod::RowSum,
            iterations: 0,
            residual: 0.0,
        },
        NormKind::Two => power_iteration_sigma_max(a),
    };
    Ok(report)
}

fn power_iteration_sigma_max(a: &DMatrix<f64>) -> SpectralReport {
    let m = a.ncols();
    if a.iter().all(|&x| x == 0.0) {
        return SpectralReport {
            norm_value: 0.0,
            method: NormMethod::PowerIteration,
            iterations: 0,
            residual: 0.0,
        };
    }
    // Deterministic start: all ones, normalized.
    let mut v = DVector::from_element(m, 1.0 / (m as f64).sqrt());
    let mut prev = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut restarts = 0usize;
    for k in 1..=tol::POWER_ITER_MAX {
        let w = a.tr_mul(&(a * &v)); // AᵀA v
        let rayleigh = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            // v landed in the null space of AᵀA; restart from the next
            // canonical basis vector (deterministic).
            if restarts >= m {
                return SpectralReport {
                    norm_value: 0.0,
                    method: NormMethod::PowerIteration,
                    iterations: k,
                    residual: 0.0,
                };
            }
            v = DVector::zeros(m);
            v[restarts] = 1.0;
            restarts += 1;
            continue;
        }
        let sigma = rayleigh.max(0.0).sqrt();
        residual = if prev.is_nan() {
            f64::INFINITY
        } else {
            (sigma - prev).abs() / sigma.max(f64::MIN_POSITIVE)
        };
        if residual <= tol::POWER_ITER_TOL {
            return SpectralReport {
                norm_value: sigma,
                method: NormMethod::PowerIteration,
                iterations: k,
                residual,
            };
        }
        prev = sigma;
        v = w / wn;
    }
    SpectralReport {
        norm_value: prev,
        method: NormMethod::PowerIteration,
        iterations: tol::POWER_ITER_MAX,
        residual,
    }
}

/// All eigenvalues of a square matrix, sorted by descending modulus
/// (ties broken by descending real then imaginary part).
///
/// Backed by a real Schur reduction (Hessenberg + shifted QR). Desk scale
/// only: dimension is capped at [`tol::EIGEN_MAX_DIM`].
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::shape(
            "eigenvalues",
            "nonempty square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if n > tol::EIGEN_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "eigensolve limited to dimension {}, got {n}",
            tol::EIGEN_MAX_DIM
        )));
    }
    let max_iter = tol::EIGEN_MAX_ITER_PER_DIM * n;
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, max_iter).ok_or(
        Error::EigenNoConvergence {
            iterations: max_iter,
            partial: Vec::new(),
        },
    )?;
    let mut vals: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    vals.sort_by(|x, y| {
        y.norm()
            .partial_cmp(&x.norm())
            .unwrap()
            .then(y.re.partial_cmp(&x.re).unwrap())
            .then(y.im.partial_cmp(&x.im).unwrap())
    });
    Ok(vals)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?[0].norm())
}

/// All singular values, descending, via the eigenvalues of the smaller
/// Gram matrix.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::shape("singular_values", "nonempty matrix", "empty"));
    }
    let gram = if a.nrows() <= a.ncols() {
        a * a.transpose()
    } else {
        a.tr_mul(a)
    };
    let mut vals: Vec<f64> = eigenvalues(&gram)?
        .iter()
        .map(|l| l.re.max(0.0).sqrt())
        .collect();
    vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(vals)
}

/// The gain bound ‖A(x)‖_p + ‖b(x)‖_p / ‖x‖_p of an extracted affine form.
///
/// The value bounds ‖ψ(x)‖_p / ‖x‖_p at the anchor; it is undefined at
/// x = 0, which is rejected rather than approximated.
pub fn local_lipschitz(form: &PwaForm, x: &DVector<f64>, p: NormKind) -> Result<f64> {
    let xn = vec_norm(x, p);
    if xn == 0.0 {
        return Err(Error::Domain(
            "local Lipschitz constant undefined at x = 0".into(),
        ));
    }
    let a_norm = op_norm(form.a_matrix(), p)?.norm_value;
    Ok(a_norm + vec_norm(form.b_vector(), p) / xn)
}

/// Product over layers of ‖W_l‖_p times the activation's global slope
/// bound. By submultiplicativity this upper-bounds ‖A(x)‖_p for every x.
pub fn layer_product_bound(net: &FeedForwardNet, p: NormKind) -> f64 {
    net.layers()
        .iter()
        .map(|l| {
            let w_norm = op_norm(l.weight(), p)
                .expect("layer weights are nonempty")
                .norm_value;
            w_norm * l.activation().max_slope()
        })
        .product()
}
