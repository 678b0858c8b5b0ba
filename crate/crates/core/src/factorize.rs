//! Weight construction with prescribed spectral bands, plus verification
//! that constructed weights actually land in-band.
//!
//! Three constructions are provided: a nonnegative-matrix form whose
//! dominant eigenvalue is pinned between row-sum bounds (PF), a singular
//! value form built from Householder reflectors (SVD), and a disc form that
//! places all eigenvalues inside a prescribed circle (GD).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{eigenvalues, singular_values};
use crate::tol;

/// Target classification of a band relative to the stability boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandTarget {
    Stable,
    Marginal,
    Unstable,
}

/// Interval for the controlled spectral quantity (dominant eigenvalue
/// modulus, singular values, or disc extent, depending on the method).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBand {
    lambda_min: f64,
    lambda_max: f64,
    target: BandTarget,
}

impl SpectralBand {
    /// A band with 0 ≤ min < max, as used by the PF and SVD constructions.
    pub fn new(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        let valid = lambda_min >= 0.0 && lambda_min < lambda_max && lambda_max.is_finite();
        if !valid {
            return Err(Error::Domain(format!(
                "band requires 0 <= min < max, got [{lambda_min}, {lambda_max}]"
            )));
        }
        Ok(SpectralBand {
            lambda_min,
            lambda_max,
            target: classify(lambda_min, lambda_max),
        })
    }

    /// Band covering the disc |λ − center| ≤ radius. The lower edge may be
    /// negative here; discs centered near zero extend below it.
    pub fn disc(center: f64, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 || !center.is_finite() {
            return Err(Error::Domain(format!("disc radius must be positive, got {radius}")));
        }
        Ok(SpectralBand {
            lambda_min: center - radius,
            lambda_max: center + radius,
            target: classify(center - radius, center + radius),
        })
    }

    /// The default marginal band [0.99, 1.0].
    pub fn marginal_default() -> Self {
        SpectralBand::new(0.99, 1.0).unwrap()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn target(&self) -> BandTarget {
        self.target
    }

    /// Disc midpoint, used by the GD verification rule.
    pub fn center(&self) -> f64 {
        0.5 * (self.lambda_min + self.lambda_max)
    }

    /// Disc half-width, used by the GD verification rule.
    pub fn radius(&self) -> f64 {
        0.5 * (self.lambda_max - self.lambda_min)
    }
}

fn classify(lambda_min: f64, lambda_max: f64) -> BandTarget {
    if lambda_max < 1.0 - tol::MARGINAL_DELTA {
        BandTarget::Stable
    } else if lambda_min > 1.0 + tol::MARGINAL_DELTA {
        BandTarget::Unstable
    } else {
        BandTarget::Marginal
    }
}

/// Which construction produced a weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorMethod {
    Pf,
    Svd,
    Gd,
}

/// Raw parameters behind a constructed weight.
#[derive(Debug, Clone)]
pub enum FactorParams {
    Pf {
        m_raw: DMatrix<f64>,
        a_raw: DMatrix<f64>,
    },
    Svd {
        u_reflectors: Vec<DVector<f64>>,
        v_reflectors: Vec<DVector<f64>>,
        sv_raw: DVector<f64>,
    },
    Gd {
        m_raw: DMatrix<f64>,
        center: f64,
        radius: f64,
    },
}

/// A realized weight matrix plus the construction that produced it.
#[derive(Debug, Clone)]
pub struct FactorizedWeight {
    pub realized: DMatrix<f64>,
    pub method: FactorMethod,
    pub band: SpectralBand,
    pub parameters: FactorParams,
}

impl FactorizedWeight {
    /// Re-check the realized matrix against its own band.
    pub fn verify(&self) -> Result<VerificationReport> {
        verify_band(&self.realized, &self.band, self.method)
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

/// Nonnegative weight with dominant eigenvalue inside `band`.
///
/// Entries are damped into (λ_min, λ_max) through a sigmoid and mixed by a
/// row softmax, so every row sum lands in the band; the dominant eigenvalue
/// of a nonnegative matrix is pinned between the extreme row sums.
pub fn pf_weight(
    m_raw: &DMatrix<f64>,
    a_raw: &DMatrix<f64>,
    band: SpectralBand,
) -> Result<FactorizedWeight> {
    let n = m_raw.nrows();
    if m_raw.ncols() != n || n == 0 {
        return Err(Error::shape(
            "pf_weight",
            "square m_raw",
            format!("{}x{}", m_raw.nrows(), m_raw.ncols()),
        ));
    }
    if a_raw.nrows() != n || a_raw.ncols() != n {
        return Err(Error::shape(
            "pf_weight",
            format!("{n}x{n} a_raw"),
            format!("{}x{}", a_raw.nrows(), a_raw.ncols()),
        ));
    }
    if band.lambda_min() < 0.0 {
        return Err(Error::Domain(
            "pf band must be nonnegative (nonnegative matrix theory applies)".into(),
        ));
    }
    let (lo, hi) = (band.lambda_min(), band.lambda_max());
    let damping = m_raw.map(|v| hi - (hi - lo) * sigmoid(v));
    let mut realized = DMatrix::zeros(n, n);
    for i in 0..n {
        // Stable row softmax.
        let row_max = a_raw.row(i).max();
        let exps: Vec<f64> = a_raw.row(i).iter().map(|v| (v - row_max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        for j in 0..n {
            realized[(i, j)] = exps[j] / denom * damping[(i, j)];
        }
    }
    Ok(FactorizedWeight {
        realized,
        method: FactorMethod::Pf,
        band,
        parameters: FactorParams::Pf {
            m_raw: m_raw.clone(),
            a_raw: a_raw.clone(),
        },
    })
}

/// Product of Householder reflections I − 2vvᵀ/‖v‖², orthogonal by
/// construction.
pub fn householder_product(vectors: &[DVector<f64>], dim: usize) -> Result<DMatrix<f64>> {
    let mut acc = DMatrix::<f64>::identity(dim, dim);
    for (k, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::shape(
                format!("reflector {k}"),
                format!("length {dim}"),
                format!("length {}", v.len()),
            ));
        }
        let norm_sq = v.norm_squared();
        if norm_sq == 0.0 {
            return Err(Error::Domain(format!(
                "reflector {k} is the zero vector; reflection undefined"
            )));
        }
        // acc ← acc · (I − 2vvᵀ/‖v‖²) without forming H explicitly.
        let av = &acc * v;
        acc -= (2.0 / norm_sq) * av * v.transpose();
    }
    Ok(acc)
}

/// Possibly non-square weight U·Σ·V with every singular value inside `band`.
///
/// U and V are Householder products (exactly orthogonal up to rounding);
/// the singular values are squashed into (λ_min, λ_max) by a sigmoid.
pub fn svd_weight(
    u_vectors: &[DVector<f64>],
    v_vectors: &[DVector<f64>],
    sv_raw: &DVector<f64>,
    band: SpectralBand,
    shape: (usize, usize),
) -> Result<FactorizedWeight> {
    let (rows, cols) = shape;
    if rows == 0 || cols == 0 {
        return Err(Error::shape("svd_weight", "nonzero shape", format!("{rows}x{cols}")));
    }
    if band.lambda_min() < 0.0 {
        return Err(Error::Domain("svd band must be nonnegative (singular values)".into()));
    }
    let k = rows.min(cols);
    if sv_raw.len() != k {
        return Err(Error::shape(
            "svd_weight sv_raw",
            format!("length {k}"),
            format!("length {}", sv_raw.len()),
        ));
    }
    let u = householder_product(u_vectors, rows)?;
    let v = householder_product(v_vectors, cols)?;
    let (lo, hi) = (band.lambda_min(), band.lambda_max());
    let mut sigma = DMatrix::<f64>::zeros(rows, cols);
    for i in 0..k {
        sigma[(i, i)] = hi - (hi - lo) * sigmoid(sv_raw[i]);
    }
    let realized = &u * sigma * &v;
    Ok(FactorizedWeight {
        realized,
        method: FactorMethod::Svd,
        band,
        parameters: FactorParams::Svd {
            u_reflectors: u_vectors.to_vec(),
            v_reflectors: v_vectors.to_vec(),
            sv_raw: sv_raw.clone(),
        },
    })
}

/// Orthogonality diagnostic ‖I−UUᵀ‖₂ + ‖I−UᵀU‖₂ + ‖I−VVᵀ‖₂ + ‖I−VᵀV‖₂.
///
/// Zero for exactly orthogonal factors. Householder-built factors keep it
/// at rounding level; the value is exposed for alternate parametrizations
/// that would need it as a penalty.
pub fn orthogonality_penalty(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    for (name, m) in [("u", u), ("v", v)] {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::shape(
                format!("orthogonality_penalty {name}"),
                "square matrix",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
    }
    let term = |m: &DMatrix<f64>| -> Result<f64> {
        let id = DMatrix::<f64>::identity(m.nrows(), m.nrows());
        let a = crate::spectral::op_norm(&(&id - m * m.transpose()), crate::spectral::NormKind::Two)?;
        let b = crate::spectral::op_norm(&(&id - m.tr_mul(m)), crate::spectral::NormKind::Two)?;
        Ok(a.norm_value + b.norm_value)
    };
    Ok(term(u)? + term(v)?)
}

/// Square weight with all eigenvalues inside the disc |λ − center| ≤ radius.
///
/// Off-diagonal rows of the (nonnegative, zero-diagonal) parameter matrix
/// are rescaled so each off-diagonal row sum equals the radius exactly;
/// the disc bound then follows from the row version of the circle theorem.
/// Negative parameter entries are clamped to zero with a warning and the
/// diagonal is zeroed rather than rejected.
pub fn gd_weight(m_raw: &DMatrix<f64>, radius: f64, center: f64) -> Result<FactorizedWeight> {
    let n = m_raw.nrows();
    if m_raw.ncols() != n || n == 0 {
        return Err(Error::shape(
            "gd_weight",
            "square m_raw",
            format!("{}x{}", m_raw.nrows(), m_raw.ncols()),
        ));
    }
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::Domain(format!("gd radius must be positive, got {radius}")));
    }
    let mut m = m_raw.clone();
    let mut clamped = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                m[(i, j)] = 0.0;
            } else if m[(i, j)] < 0.0 {
                m[(i, j)] = 0.0;
                clamped += 1;
            }
        }
    }
    if clamped > 0 {
        log::warn!("gd_weight: clamped {clamped} negative parameter entries to zero");
    }
    let mut realized = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let s: f64 = m.row(j).sum();
        if s == 0.0 {
            return Err(Error::Domain(format!(
                "gd_weight: row {j} of the parameter matrix is all zero; scaling undefined"
            )));
        }
        for i in 0..n {
            realized[(j, i)] = radius / s * m[(j, i)];
        }
        realized[(j, j)] = center;
    }
    Ok(FactorizedWeight {
        realized,
        method: FactorMethod::Gd,
        band: SpectralBand::disc(center, radius)?,
        parameters: FactorParams::Gd {
            m_raw: m_raw.clone(),
            center,
            radius,
        },
    })
}

/// One measured quantity and its admissible interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandCheck {
    pub description: String,
    pub measured: f64,
    pub low: f64,
    pub high: f64,
    pub pass: bool,
}

/// Outcome of checking a matrix against a band.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub method: FactorMethod,
    pub band: SpectralBand,
    pub tolerance: f64,
    pub checks: Vec<BandCheck>,
    pub pass: bool,
}

/// Measure the method's controlled quantity on `a` and report band
/// membership. Failures are report entries, not errors.
///
/// PF checks the dominant eigenvalue modulus, SVD checks every singular
/// value, and GD checks every eigenvalue's distance to the disc center
/// (center and radius recovered from the band edges).
pub fn verify_band(
    a: &DMatrix<f64>,
    band: &SpectralBand,
    method: FactorMethod,
) -> Result<VerificationReport> {
    let tolerance = tol::BAND_TOL;
    let mut checks = Vec::new();
    match method {
        FactorMethod::Pf => {
            let rho = eigenvalues(a)?[0].norm();
            checks.push(BandCheck {
                description: "dominant eigenvalue modulus".into(),
                measured: rho,
                low: band.lambda_min(),
                high: band.lambda_max(),
                pass: rho >= band.lambda_min() - tolerance && rho <= band.lambda_max() + tolerance,
            });
        }
        FactorMethod::Svd => {
            for (k, s) in singular_values(a)?.into_iter().enumerate() {
                checks.push(BandCheck {
                    description: format!("singular value {k}"),
                    measured: s,
                    low: band.lambda_min(),
                    high: band.lambda_max(),
                    pass: s >= band.lambda_min() - tolerance && s <= band.lambda_max() + tolerance,
                });
            }
        }
        FactorMethod::Gd => {
            let center = band.center();
            let radius = band.radius();
            for (k, lambda) in eigenvalues(a)?.into_iter().enumerate() {
                let dist = (lambda - nalgebra::Complex::new(center, 0.0)).norm();
                checks.push(BandCheck {
                    description: format!("eigenvalue {k} distance to disc center"),
                    measured: dist,
                    low: 0.0,
                    high: radius,
                    pass: dist <= radius + tolerance,
                });
            }
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport {
        method,
        band: *band,
        tolerance,
        checks,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{op_norm, NormKind};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn band_validation_and_classification() {
        assert!(SpectralBand::new(-0.1, 0.5).is_err());
        assert!(SpectralBand::new(0.5, 0.5).is_err());
        assert_eq!(SpectralBand::new(0.0, 0.9).unwrap().target(), BandTarget::Stable);
        assert_eq!(SpectralBand::new(0.99, 1.0).unwrap().target(), BandTarget::Marginal);
        assert_eq!(SpectralBand::new(1.1, 1.5).unwrap().target(), BandTarget::Unstable);
        assert_eq!(SpectralBand::marginal_default().lambda_min(), 0.99);
        let d = SpectralBand::disc(0.0, 0.5).unwrap();
        assert_eq!(d.lambda_min(), -0.5);
        assert_eq!(d.center(), 0.0);
        assert_eq!(d.radius(), 0.5);
    }

    #[test]
    fn pf_uniform_raws_give_uniform_matrix() {
        let z = DMatrix::zeros(2, 2);
        let w = pf_weight(&z, &z, SpectralBand::new(0.0, 1.0).unwrap()).unwrap();
        for v in w.realized.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let rho = eigenvalues(&w.realized).unwrap()[0].norm();
        assert!((rho - 0.5).abs() < 1e-10);
    }

    #[test]
    fn pf_dominant_eigenvalue_in_band() {
        let mut rng = StdRng::seed_from_u64(2);
        for (lo, hi) in [(0.8, 1.0), (1.1, 1.5)] {
            let band = SpectralBand::new(lo, hi).unwrap();
            for _ in 0..50 {
                let n = 4;
                let m_raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
                let a_raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
                let w = pf_weight(&m_raw, &a_raw, band).unwrap();
                assert!(w.realized.iter().all(|&v| v >= 0.0));
                let rho = eigenvalues(&w.realized).unwrap()[0].norm();
                assert!(rho >= lo - 1e-9 && rho <= hi + 1e-9, "rho {rho} outside [{lo},{hi}]");
                if lo > 1.0 {
                    assert!(rho > 1.0);
                }
            }
        }
    }

    #[test]
    fn pf_row_sums_stay_in_band() {
        let mut rng = StdRng::seed_from_u64(4);
        let band = SpectralBand::new(0.3, 0.7).unwrap();
        let m_raw = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
        let a_raw = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
        let w = pf_weight(&m_raw, &a_raw, band).unwrap();
        for i in 0..3 {
            let s: f64 = w.realized.row(i).sum();
            assert!((0.3 - 1e-12..=0.7 + 1e-12).contains(&s));
        }
    }

    #[test]
    fn pf_rejects_non_square() {
        let band = SpectralBand::new(0.0, 1.0).unwrap();
        assert!(pf_weight(&DMatrix::zeros(2, 3), &DMatrix::zeros(2, 3), band).is_err());
    }

    #[test]
    fn householder_products_are_orthogonal() {
        let mut rng = StdRng::seed_from_u64(6);
        for dim in [2usize, 3, 5] {
            let vs: Vec<DVector<f64>> = (0..dim)
                .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let q = householder_product(&vs, dim).unwrap();
            let gram = q.tr_mul(&q);
            let err = (&gram - DMatrix::<f64>::identity(dim, dim)).amax();
            assert!(err < 1e-13, "orthogonality defect {err}");
        }
    }

    #[test]
    fn householder_rejects_zero_reflector() {
        let vs = vec![DVector::zeros(3)];
        assert!(matches!(householder_product(&vs, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn svd_square_mid_band_singular_values() {
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let refl = [v];
        let w = svd_weight(
            &refl,
            &refl,
            &DVector::zeros(2),
            SpectralBand::new(0.0, 1.0).unwrap(),
            (2, 2),
        )
        .unwrap();
        for s in singular_values(&w.realized).unwrap() {
            assert!((s - 0.5).abs() < 1e-10, "sigma {s}");
        }
    }

    #[test]
    fn svd_non_square_band_via_deflation_oracle() {
        let mut rng = StdRng::seed_from_u64(8);
        let band = SpectralBand::new(0.9, 0.99).unwrap();
        let (rows, cols) = (3usize, 5usize);
        let us: Vec<DVector<f64>> = (0..rows)
            .map(|_| DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let vs: Vec<DVector<f64>> = (0..cols)
            .map(|_| DVector::from_fn(cols, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let sv_raw = DVector::from_fn(rows, |_, _| rng.random_range(-2.0..2.0));
        let w = svd_weight(&us, &vs, &sv_raw, band, (rows, cols)).unwrap();

        // Independent oracle: power iteration with deflation on AᵀA.
        let mut gram = w.realized.tr_mul(&w.realized);
        let mut sigmas = Vec::new();
        for _ in 0..rows {
            let mut v = DVector::from_element(cols, 1.0 / (cols as f64).sqrt());
            let mut lambda = 0.0;
            for _ in 0..20_000 {
                let w2 = &gram * &v;
                let n = w2.norm();
                if n == 0.0 {
                    break;
                }
                let next = w2 / n;
                let l = next.dot(&(&gram * &next));
                if (l - lambda).abs() <= 1e-14 * l.max(1.0) {
                    lambda = l;
                    v = next;
                    break;
                }
                lambda = l;
                v = next;
            }
            sigmas.push(lambda.max(0.0).sqrt());
            gram -= lambda * &v * v.transpose();
        }
        for s in sigmas {
            assert!(
                (0.9 - 1e-8..=0.99 + 1e-8).contains(&s),
                "deflated sigma {s} outside band"
            );
        }
    }

    #[test]
    fn svd_rejects_wrong_sv_length() {
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let refl = [v];
        assert!(svd_weight(
            &refl,
            &refl,
            &DVector::zeros(3),
            SpectralBand::new(0.0, 1.0).unwrap(),
            (2, 2)
        )
        .is_err());
    }

    #[test]
    fn orthogonality_penalty_cases() {
        let id2 = DMatrix::<f64>::identity(2, 2);
        assert!(orthogonality_penalty(&id2, &id2).unwrap() < 1e-15);

        let mut rng = StdRng::seed_from_u64(10);
        let vs: Vec<DVector<f64>> = (0..3)
            .map(|_| DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let q = householder_product(&vs, 3).unwrap();
        assert!(orthogonality_penalty(&q, &q).unwrap() <= 1e-12);

        let u = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let p = orthogonality_penalty(&u, &id2).unwrap();
        assert!((p - 6.0).abs() < 1e-9, "penalty {p}");
    }

    #[test]
    fn gd_all_ones_structure() {
        let mut m = DMatrix::from_element(3, 3, 1.0);
        m.fill_diagonal(0.0);
        let w = gd_weight(&m, 0.1, 0.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.5 } else { 0.05 };
                assert!((w.realized[(i, j)] - expected).abs() < 1e-15);
            }
        }
        let mut eigs: Vec<f64> = eigenvalues(&w.realized).unwrap().iter().map(|l| l.re).collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((eigs[0] - 0.6).abs() < 1e-9);
        assert!((eigs[1] - 0.45).abs() < 1e-9);
        assert!((eigs[2] - 0.45).abs() < 1e-9);
        assert!(w.verify().unwrap().pass);
    }

    #[test]
    fn gd_spectral_radius_within_disc() {
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..50 {
            let n = rng.random_range(2..=6);
            let m = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..1.0) });
            let w = gd_weight(&m, 0.5, 0.0).unwrap();
            let rho = eigenvalues(&w.realized).unwrap()[0].norm();
            assert!(rho <= 0.5 + 1e-8, "rho {rho}");
        }
    }

    #[test]
    fn gd_marginal_center_one() {
        let mut rng = StdRng::seed_from_u64(14);
        let m = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..1.0) });
        let w = gd_weight(&m, 0.05, 1.0).unwrap();
        for l in eigenvalues(&w.realized).unwrap() {
            assert!((l - nalgebra::Complex::new(1.0, 0.0)).norm() <= 0.05 + 1e-9);
        }
        // Diagonal is exactly the center.
        for i in 0..4 {
            assert_eq!(w.realized[(i, i)], 1.0);
        }
    }

    #[test]
    fn gd_rejects_zero_row() {
        let m = DMatrix::zeros(3, 3);
        assert!(matches!(gd_weight(&m, 0.1, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn gd_clamps_negative_entries() {
        let mut m = DMatrix::from_element(2, 2, 1.0);
        m[(0, 1)] = -3.0;
        m[(1, 0)] = 1.0;
        m.fill_diagonal(0.0);
        // Row 0 becomes all zero after clamping -> scaling undefined.
        assert!(gd_weight(&m, 0.1, 0.5).is_err());
        let mut m2 = DMatrix::from_element(3, 3, 1.0);
        m2[(0, 1)] = -1.0;
        m2.fill_diagonal(0.0);
        let w = gd_weight(&m2, 0.1, 0.5).unwrap();
        assert_eq!(w.realized[(0, 1)], 0.0);
        // Remaining off-diagonal entry of row 0 carries the whole radius.
        assert!((w.realized[(0, 2)] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn verify_band_pass_and_fail() {
        let id2 = DMatrix::<f64>::identity(2, 2);
        let pass = verify_band(&id2, &SpectralBand::new(0.9, 1.1).unwrap(), FactorMethod::Svd).unwrap();
        assert!(pass.pass);

        let half = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5]));
        let fail = verify_band(&half, &SpectralBand::new(0.9, 1.0).unwrap(), FactorMethod::Svd).unwrap();
        assert!(!fail.pass);
        assert!(fail.checks.iter().any(|c| (c.measured - 0.5).abs() < 1e-12));
    }

    #[test]
    fn constructors_round_trip_verify() {
        let mut rng = StdRng::seed_from_u64(16);
        let bands = [(0.0, 0.9), (0.99, 1.0), (1.1, 1.5)];
        for (lo, hi) in bands {
            let band = SpectralBand::new(lo, hi).unwrap();
            for _ in 0..20 {
                let n = rng.random_range(2..=5);
                let m_raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
                let a_raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
                assert!(pf_weight(&m_raw, &a_raw, band).unwrap().verify().unwrap().pass);

                let us: Vec<DVector<f64>> = (0..n)
                    .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
                    .collect();
                let sv = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
                assert!(svd_weight(&us, &us, &sv, band, (n, n)).unwrap().verify().unwrap().pass);

                let m = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..1.0) });
                let w = gd_weight(&m, band.radius(), band.center()).unwrap();
                assert!(w.verify().unwrap().pass);
            }
        }
    }

    #[test]
    fn svd_weight_norm_matches_top_singular_value() {
        let mut rng = StdRng::seed_from_u64(18);
        let band = SpectralBand::new(0.2, 0.8).unwrap();
        let us: Vec<DVector<f64>> = (0..3)
            .map(|_| DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let sv = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let w = svd_weight(&us, &us, &sv, band, (3, 3)).unwrap();
        let two_norm = op_norm(&w.realized, NormKind::Two).unwrap().norm_value;
        let top = singular_values(&w.realized).unwrap()[0];
        assert!((two_norm - top).abs() < 1e-9);
    }
}
