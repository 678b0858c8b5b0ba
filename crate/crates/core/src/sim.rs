//! Ensemble rollouts, empirical moment diagnostics, fixed-point solving,
//! and phase-portrait data generation.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dmm::{Model, StreamKey};
use crate::error::{Error, Result};
use crate::netcore::FeedForwardNet;
use crate::pwa::extract;
use crate::spectral::{local_lipschitz, op_norm, NormKind};
use crate::tol;

/// Seeded stochastic rollouts from a set of initial conditions, stored
/// densely as (initial condition, realization, time step) including t = 0.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    initial_conditions: Vec<DVector<f64>>,
    realizations_per_ic: usize,
    horizon: usize,
    seed: u64,
    states: Vec<DVector<f64>>,
}

impl TrajectoryEnsemble {
    pub fn initial_conditions(&self) -> &[DVector<f64>] {
        &self.initial_conditions
    }

    pub fn realizations_per_ic(&self) -> usize {
        self.realizations_per_ic
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.initial_conditions[0].len()
    }

    /// State at (ic, realization, t) with t in 0..=horizon.
    pub fn state(&self, ic: usize, realization: usize, t: usize) -> &DVector<f64> {
        let per_traj = self.horizon + 1;
        &self.states[(ic * self.realizations_per_ic + realization) * per_traj + t]
    }

    pub fn n_trajectories(&self) -> usize {
        self.initial_conditions.len() * self.realizations_per_ic
    }

    /// Trajectory CSV: `t,ic,real,x1,...,xn` with one comment line carrying
    /// the reproducibility header.
    pub fn write_csv<W: Write>(&self, mut w: W, config_comment: &str) -> io::Result<()> {
        writeln!(w, "# {config_comment}")?;
        write!(w, "t,ic,real")?;
        for d in 0..self.dim() {
            write!(w, ",x{}", d + 1)?;
        }
        writeln!(w)?;
        for ic in 0..self.initial_conditions.len() {
            for r in 0..self.realizations_per_ic {
                for t in 0..=self.horizon {
                    write!(w, "{t},{ic},{r}")?;
                    for v in self.state(ic, r, t).iter() {
                        write!(w, ",{v}")?;
                    }
                    writeln!(w)?;
                }
            }
        }
        Ok(())
    }
}

/// Deterministic mean rollout: the T states after x0 (x0 itself excluded).
pub fn rollout_mean(model: &Model, x0: &DVector<f64>, t: usize) -> Result<Vec<DVector<f64>>> {
    if t == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(t);
    let mut x = x0.clone();
    for _ in 0..t {
        x = model.mean_step(&x)?;
        states.push(x.clone());
    }
    Ok(states)
}

/// M stochastic realizations per initial condition over horizon T.
/// Stream k = ic·M + realization; bitwise deterministic given the seed.
pub fn rollout_ensemble(
    model: &Model,
    ics: &[DVector<f64>],
    m: usize,
    t: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    if ics.is_empty() || m == 0 || t == 0 {
        return Err(Error::Precondition(
            "need at least one initial condition, one realization, and one step".into(),
        ));
    }
    let dim = model.state_dim();
    for (i, ic) in ics.iter().enumerate() {
        if ic.len() != dim {
            return Err(Error::shape(
                format!("initial condition {i}"),
                format!("length {dim}"),
                format!("length {}", ic.len()),
            ));
        }
    }
    let mut states = Vec::with_capacity(ics.len() * m * (t + 1));
    for (i, ic) in ics.iter().enumerate() {
        for r in 0..m {
            let stream = (i * m + r) as u64;
            let mut key = StreamKey::new(seed, stream, 0);
            let mut x = ic.clone();
            states.push(x.clone());
            for _ in 0..t {
                let (next, next_key) = model.sample_step(&x, &key)?;
                states.push(next.clone());
                x = next;
                key = next_key;
            }
        }
    }
    Ok(TrajectoryEnsemble {
        initial_conditions: ics.to_vec(),
        realizations_per_ic: m,
        horizon: t,
        seed,
        states,
    })
}

/// Empirical first and second moments per time step.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub mean_t: Vec<DVector<f64>>,
    pub second_t: Vec<DMatrix<f64>>,
}

impl MomentSeries {
    pub fn dim(&self) -> usize {
        self.mean_t[0].len()
    }

    /// Moment CSV: `t,mean_1..mean_n,second_11..second_nn` (row-major).
    pub fn write_csv<W: Write>(&self, mut w: W, config_comment: &str) -> io::Result<()> {
        let n = self.dim();
        writeln!(w, "# {config_comment}")?;
        write!(w, "t")?;
        for d in 0..n {
            write!(w, ",mean_{}", d + 1)?;
        }
        for i in 0..n {
            for j in 0..n {
                write!(w, ",second_{}{}", i + 1, j + 1)?;
            }
        }
        writeln!(w)?;
        for t in 0..self.mean_t.len() {
            write!(w, "{t}")?;
            for v in self.mean_t[t].iter() {
                write!(w, ",{v}")?;
            }
            for i in 0..n {
                for j in 0..n {
                    write!(w, ",{}", self.second_t[t][(i, j)])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Average state and average outer product over all (ic, realization) pairs
/// at each time step. Outer products are exactly symmetric, so the second
/// moment stays symmetric to the last bit.
pub fn empirical_moments(ens: &TrajectoryEnsemble) -> MomentSeries {
    let n = ens.dim();
    let count = ens.n_trajectories() as f64;
    let mut mean_t = Vec::with_capacity(ens.horizon() + 1);
    let mut second_t = Vec::with_capacity(ens.horizon() + 1);
    for t in 0..=ens.horizon() {
        let mut mean = DVector::<f64>::zeros(n);
        let mut second = DMatrix::<f64>::zeros(n, n);
        for ic in 0..ens.initial_conditions().len() {
            for r in 0..ens.realizations_per_ic() {
                let x = ens.state(ic, r, t);
                mean += x;
                second.syger(1.0, x, x, 1.0);
            }
        }
        mean /= count;
        second /= count;
        // syger fills the lower triangle; mirror it.
        for i in 0..n {
            for j in (i + 1)..n {
                second[(i, j)] = second[(j, i)];
            }
        }
        mean_t.push(mean);
        second_t.push(second);
    }
    MomentSeries { mean_t, second_t }
}

/// Convergence evidence extracted from a moment series, with the thresholds
/// it was judged against. This is sampled evidence, not a proof of the
/// limit statement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentDiagnostic {
    /// ‖mean_T − mean_{T−1}‖₂ at the final step.
    pub mean_diff: f64,
    /// Frobenius norm of second_T − second_{T−1}.
    pub second_diff: f64,
    pub mean_threshold: f64,
    pub second_threshold: f64,
    pub converged: bool,
    /// sup over t of ‖mean_t‖₂.
    pub sup_mean_norm: f64,
    /// ‖mean_T‖₂ at the final step.
    pub final_mean_norm: f64,
}

/// Successive-difference diagnostic with the shared default thresholds.
pub fn moment_diagnostic(series: &MomentSeries) -> MomentDiagnostic {
    let t = series.mean_t.len() - 1;
    let (mean_diff, second_diff) = if t == 0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            (&series.mean_t[t] - &series.mean_t[t - 1]).norm(),
            (&series.second_t[t] - &series.second_t[t - 1]).norm(),
        )
    };
    let sup_mean_norm = series.mean_t.iter().map(|m| m.norm()).fold(0.0, f64::max);
    MomentDiagnostic {
        mean_diff,
        second_diff,
        mean_threshold: tol::MOMENT_DIFF_TOL,
        second_threshold: tol::MOMENT_DIFF_TOL,
        converged: mean_diff < tol::MOMENT_DIFF_TOL && second_diff < tol::MOMENT_DIFF_TOL,
        sup_mean_norm,
        final_mean_norm: series.mean_t[t].norm(),
    }
}

/// Picard iteration settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            tol: tol::FIXED_POINT_TOL,
            max_iter: tol::FIXED_POINT_MAX_ITER,
        }
    }
}

/// Outcome of a fixed-point search. Non-convergence is a status, not an
/// error; the caller checks contraction when a guarantee is wanted.
#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub point: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterate x ← f(x) until ‖Δ‖₂ ≤ tol or the budget runs out.
pub fn fixed_point(
    net: &FeedForwardNet,
    x0: &DVector<f64>,
    cfg: &FixedPointConfig,
) -> Result<FixedPointResult> {
    let mut x = x0.clone();
    for k in 1..=cfg.max_iter {
        let next = net.eval(&x)?;
        let delta = (&next - &x).norm();
        x = next;
        if delta <= cfg.tol {
            return Ok(FixedPointResult {
                point: x,
                iterations: k,
                converged: true,
            });
        }
    }
    Ok(FixedPointResult {
        point: x,
        iterations: cfg.max_iter,
        converged: false,
    })
}

/// One phase-portrait grid point.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub x: [f64; 2],
    pub displacement: [f64; 2],
    pub norm_f: f64,
    /// None at the origin, where the gain is undefined.
    pub kg: Option<f64>,
}

/// Displacement field plus local norms over a 2-D grid.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    pub points: Vec<PhasePoint>,
    pub domain_box: [(f64, f64); 2],
    pub resolution: usize,
}

impl PhaseGrid {
    /// Phase CSV: `x1,x2,dx1,dx2,norm_f,kg` (kg is `nan` at the origin).
    pub fn write_csv<W: Write>(&self, mut w: W, config_comment: &str) -> io::Result<()> {
        writeln!(w, "# {config_comment}")?;
        writeln!(w, "x1,x2,dx1,dx2,norm_f,kg")?;
        for p in &self.points {
            let kg = p.kg.map_or("nan".to_string(), |v| v.to_string());
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.x[0], p.x[1], p.displacement[0], p.displacement[1], p.norm_f, kg
            )?;
        }
        Ok(())
    }
}

/// Displacement mean_step(x) − x, the mean map's local norm (the effective
/// norm for region-constrained models), and the variance gain at each grid
/// point of a 2-D box.
pub fn phase_grid(model: &Model, domain_box: [(f64, f64); 2], resolution: usize) -> Result<PhaseGrid> {
    if model.state_dim() != 2 {
        return Err(Error::Unsupported(format!(
            "phase portraits are 2-D; model dimension is {}",
            model.state_dim()
        )));
    }
    if resolution < 2 {
        return Err(Error::Precondition("resolution must be at least 2".into()));
    }
    for (lo, hi) in domain_box {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Precondition(format!("degenerate box side [{lo}, {hi}]")));
        }
    }
    let axis = |k: usize, i: usize| {
        let (lo, hi) = domain_box[k];
        lo + (hi - lo) * i as f64 / (resolution - 1) as f64
    };
    let mut points = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let x = DVector::from_vec(vec![axis(0, i), axis(1, j)]);
            let fx = model.mean_step(&x)?;
            let norm_f = match model {
                Model::Plain(m) => {
                    let form = extract(m.mean_net(), &x)?;
                    op_norm(form.a_matrix(), NormKind::Two)?.norm_value
                }
                Model::Parametric(m) => {
                    if x.norm() <= tol::ORIGIN_EPS {
                        // Scale of the innermost band times the base norm.
                        let form = extract(m.base().mean_net(), &x)?;
                        m.regions().scale_at(0.0)
                            * op_norm(form.a_matrix(), NormKind::Two)?.norm_value
                    } else {
                        m.effective_norm(&x, NormKind::Two)?
                    }
                }
            };
            let kg = if x.norm() <= tol::ORIGIN_EPS {
                None
            } else {
                let form = extract(model.base().var_net(), &x)?;
                Some(local_lipschitz(&form, &x, NormKind::Two)?)
            };
            points.push(PhasePoint {
                x: [x[0], x[1]],
                displacement: [fx[0] - x[0], fx[1] - x[1]],
                norm_f,
                kg,
            });
        }
    }
    Ok(PhaseGrid {
        points,
        domain_box,
        resolution,
    })
}

/// Evenly spaced initial conditions on a circle of the given radius in the
/// first two coordinates (the conventional start set for phase studies).
pub fn circle_ics(count: usize, radius: f64, dim: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / count.max(1) as f64;
            let mut x = DVector::zeros(dim);
            x[0] = radius * theta.cos();
            if dim > 1 {
                x[1] = radius * theta.sin();
            }
            x
        })
        .collect()
}
