//! Canned experiment recipes with fixed seeds and machine-readable
//! qualitative summaries.

use std::fs;
use std::io::Write;
use std::path::Path;

use dmm_stability::certify::{certify_layerwise, Verdict};
use dmm_stability::dmm::{DeepMarkovModel, Model, ParametricDmm, RegionBand, RegionSpec};
use dmm_stability::factorize::{FactorMethod, SpectralBand};
use dmm_stability::netcore::{Activation, FeedForwardNet, Layer};
use dmm_stability::sim::{
    circle_ics, empirical_moments, fixed_point, moment_diagnostic, phase_grid, rollout_ensemble,
    rollout_mean, FixedPointConfig, MomentDiagnostic, TrajectoryEnsemble,
};
use dmm_stability::spectral::{layer_product_bound, NormKind};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::gen::{generate_net, NetSpec};
use crate::util::{to_pretty_json, write_text};
use crate::CmdError;

fn spec(
    method: FactorMethod,
    band: SpectralBand,
    depth: usize,
    act: Activation,
    out_bias_shift: f64,
) -> NetSpec {
    NetSpec {
        method,
        band,
        depth,
        act,
        bias: false,
        dim: 2,
        hidden: 2,
        out_bias_shift,
        sv_pin: None,
    }
}

/// Write a thinned trajectory CSV: first `max_real` realizations per
/// initial condition, every `stride`-th step.
fn write_trajectory_subset(
    ens: &TrajectoryEnsemble,
    max_real: usize,
    stride: usize,
    comment: &str,
    path: &Path,
) -> Result<(), CmdError> {
    let mut buf = Vec::new();
    writeln!(buf, "# {comment}")?;
    write!(buf, "t,ic,real")?;
    for d in 0..ens.dim() {
        write!(buf, ",x{}", d + 1)?;
    }
    writeln!(buf)?;
    for ic in 0..ens.initial_conditions().len() {
        for r in 0..ens.realizations_per_ic().min(max_real) {
            for t in (0..=ens.horizon()).step_by(stride) {
                write!(buf, "{t},{ic},{r}")?;
                for v in ens.state(ic, r, t).iter() {
                    write!(buf, ",{v}")?;
                }
                writeln!(buf)?;
            }
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

// ------------------------------------------------------------- fig 1 ----

#[derive(Serialize)]
struct Fig1Panel {
    mean_band: String,
    var_band: String,
    seed: u64,
    horizon: usize,
    diagnostic: MomentDiagnostic,
}

#[derive(Serialize)]
struct Fig1Summary {
    seed: u64,
    ics: usize,
    ic_radius: f64,
    realizations: usize,
    panels: Vec<Fig1Panel>,
    row1_converged: bool,
    row2_bounded: bool,
    row3_diverged: bool,
}

/// 3x3 regime matrix: mean band x variance band, PF weights, ReLU.
pub fn fig1(seed: u64, out: &Path) -> Result<u8, CmdError> {
    let bands = [
        ("stable", SpectralBand::new(0.0, 0.9).unwrap()),
        ("marginal", SpectralBand::marginal_default()),
        ("unstable", SpectralBand::new(1.1, 1.3).unwrap()),
    ];
    let (n_ics, radius, m) = (10usize, 1.0f64, 200usize);
    let ics = circle_ics(n_ics, radius, 2);

    let mut panels = Vec::new();
    let mut row1_converged = false;
    let mut row2_bounded = false;
    let mut row3_diverged = true;
    for (mi, (mean_name, mean_band)) in bands.iter().enumerate() {
        for (vi, (var_name, var_band)) in bands.iter().enumerate() {
            let panel_seed = seed.wrapping_add(3000 + (mi * 3 + vi) as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(panel_seed);
            let (mean, _) = generate_net(&mut rng, &spec(FactorMethod::Pf, *mean_band, 2, Activation::ReLU, 0.0))?;
            let (var, _) = generate_net(&mut rng, &spec(FactorMethod::Pf, *var_band, 3, Activation::ReLU, -5.0))?;
            let model = Model::Plain(
                DeepMarkovModel::new(mean, var).map_err(|e| CmdError::Runtime(e.to_string()))?,
            );
            let horizon = if *mean_name == "unstable" { 200 } else { 500 };
            let ens = rollout_ensemble(&model, &ics, m, horizon, panel_seed)
                .map_err(|e| CmdError::Runtime(e.to_string()))?;
            let moments = empirical_moments(&ens);
            let diagnostic = moment_diagnostic(&moments);

            match (*mean_name, *var_name) {
                ("stable", "stable") => row1_converged = diagnostic.converged,
                ("marginal", "stable") => {
                    row2_bounded = diagnostic.sup_mean_norm <= 10.0 * radius;
                }
                ("unstable", _) => {
                    row3_diverged &= diagnostic.final_mean_norm > 1e3;
                }
                _ => {}
            }

            let dir = out.join("fig1").join(format!("mean_{mean_name}_var_{var_name}"));
            fs::create_dir_all(&dir)?;
            let comment = format!(
                "fig1 panel mean={mean_name} var={var_name} seed={panel_seed} ics={n_ics} radius={radius} m={m} t={horizon}"
            );
            write_text(&dir, "model.json", &model.to_json())?;
            write_trajectory_subset(&ens, 5, 1, &comment, &dir.join("trajectories.csv"))?;
            let mut buf = Vec::new();
            moments.write_csv(&mut buf, &comment)?;
            fs::write(dir.join("moments.csv"), buf)?;

            panels.push(Fig1Panel {
                mean_band: mean_name.to_string(),
                var_band: var_name.to_string(),
                seed: panel_seed,
                horizon,
                diagnostic,
            });
        }
    }
    let summary = Fig1Summary {
        seed,
        ics: n_ics,
        ic_radius: radius,
        realizations: m,
        panels,
        row1_converged,
        row2_bounded,
        row3_diverged,
    };
    write_text(&out.join("fig1"), "summary.json", &to_pretty_json(&summary))?;
    Ok(0)
}

// ------------------------------------------------------------- fig 2 ----

#[derive(Serialize)]
struct Fig2BiasPanel {
    verdict: Verdict,
    product_bound: f64,
    equilibrium_norm: f64,
}

#[derive(Serialize)]
struct Fig2DepthPanel {
    depth: usize,
    product_bound: f64,
    expected_bound: f64,
    mean_time_to_eps: f64,
}

#[derive(Serialize)]
struct Fig2Summary {
    seed: u64,
    bias_off: Fig2BiasPanel,
    bias_on: Fig2BiasPanel,
    verdict_unchanged: bool,
    equilibrium_moved: bool,
    depth_panels: Vec<Fig2DepthPanel>,
    product_bounds_match: bool,
    time_to_eps_nonincreasing: bool,
}

/// Bias study (SVD/Tanh) and depth study (SVD/ReLU at the marginal band).
pub fn fig2(seed: u64, out: &Path) -> Result<u8, CmdError> {
    let dir = out.join("fig2");
    fs::create_dir_all(&dir)?;

    // Bias panels: same weights, bias switched on in the second model.
    let band = SpectralBand::new(0.2, 0.9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2000));
    let (mean_off, _) = generate_net(&mut rng, &spec(FactorMethod::Svd, band, 2, Activation::Tanh, 0.0))?;
    let bias_dist = Normal::new(0.0, 0.5).expect("valid normal");
    let biased_layers: Vec<Layer> = mean_off
        .layers()
        .iter()
        .map(|l| {
            let b = DVector::from_fn(l.n_out(), |_, _| bias_dist.sample(&mut rng));
            Layer::new(l.weight().clone(), Some(b), l.activation()).unwrap()
        })
        .collect();
    let mean_on = FeedForwardNet::new(biased_layers).map_err(|e| CmdError::Runtime(e.to_string()))?;

    let bias_panel = |name: &str, net: &FeedForwardNet| -> Result<Fig2BiasPanel, CmdError> {
        let cert = certify_layerwise(net, NormKind::Two);
        let fp = fixed_point(net, &DVector::zeros(2), &FixedPointConfig::default())
            .map_err(|e| CmdError::Runtime(e.to_string()))?;
        let model = Model::Plain(
            DeepMarkovModel::deterministic(net.clone()).map_err(|e| CmdError::Runtime(e.to_string()))?,
        );
        let panel_dir = dir.join(name);
        fs::create_dir_all(&panel_dir)?;
        write_text(&panel_dir, "model.json", &model.to_json())?;
        let comment = format!("fig2 {name} seed={seed}");
        let ens = rollout_ensemble(&model, &circle_ics(10, 5.0, 2), 1, 200, seed)
            .map_err(|e| CmdError::Runtime(e.to_string()))?;
        write_trajectory_subset(&ens, 1, 1, &comment, &panel_dir.join("trajectories.csv"))?;
        Ok(Fig2BiasPanel {
            verdict: cert.verdict,
            product_bound: cert.product_bound,
            equilibrium_norm: fp.point.norm(),
        })
    };
    let bias_off = bias_panel("bias_off", &mean_off)?;
    let bias_on = bias_panel("bias_on", &mean_on)?;
    let verdict_unchanged = bias_off.verdict == bias_on.verdict;
    let equilibrium_moved = bias_on.equilibrium_norm > 0.01;

    // Depth panels: singular values pinned to the marginal band's lower
    // edge so the product bound is exactly 0.99^L.
    let marginal = SpectralBand::marginal_default();
    let mut depth_panels = Vec::new();
    for (i, depth) in [1usize, 2, 4, 8].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2100 + i as u64));
        let mut net_spec = spec(FactorMethod::Svd, marginal, depth, Activation::ReLU, 0.0);
        net_spec.sv_pin = Some(40.0);
        let (net, _) = generate_net(&mut rng, &net_spec)?;
        let product_bound = layer_product_bound(&net, NormKind::Two);
        let model = Model::Plain(
            DeepMarkovModel::deterministic(net).map_err(|e| CmdError::Runtime(e.to_string()))?,
        );
        let eps = 0.5;
        let mut total = 0usize;
        let panel_dir = dir.join(format!("depth_{depth}"));
        fs::create_dir_all(&panel_dir)?;
        write_text(&panel_dir, "model.json", &model.to_json())?;
        let mut buf = Vec::new();
        writeln!(buf, "# fig2 depth={depth} seed={seed} eps={eps}")?;
        writeln!(buf, "t,ic,real,x1,x2")?;
        for (ic_idx, ic) in circle_ics(10, 5.0, 2).iter().enumerate() {
            let states = rollout_mean(&model, ic, 500).map_err(|e| CmdError::Runtime(e.to_string()))?;
            let t_hit = states.iter().position(|s| s.norm() <= eps).map(|p| p + 1).unwrap_or(501);
            total += t_hit;
            for (t, s) in states.iter().enumerate() {
                writeln!(buf, "{},{ic_idx},0,{},{}", t + 1, s[0], s[1])?;
            }
        }
        fs::write(panel_dir.join("trajectories.csv"), buf)?;
        depth_panels.push(Fig2DepthPanel {
            depth,
            product_bound,
            expected_bound: 0.99f64.powi(depth as i32),
            mean_time_to_eps: total as f64 / 10.0,
        });
    }
    let product_bounds_match = depth_panels
        .iter()
        .all(|p| (p.product_bound - p.expected_bound).abs() <= 1e-12);
    let time_to_eps_nonincreasing = depth_panels
        .windows(2)
        .all(|w| w[1].mean_time_to_eps <= w[0].mean_time_to_eps);

    let summary = Fig2Summary {
        seed,
        bias_off,
        bias_on,
        verdict_unchanged,
        equilibrium_moved,
        depth_panels,
        product_bounds_match,
        time_to_eps_nonincreasing,
    };
    write_text(&dir, "summary.json", &to_pretty_json(&summary))?;
    Ok(0)
}

// ------------------------------------------------------------- fig 3 ----

#[derive(Serialize)]
struct Fig3Summary {
    seed: u64,
    rollouts: usize,
    horizon: usize,
    effective_norm_inner: f64,
    effective_norm_middle: f64,
    effective_norm_outer: f64,
    max_state_norm: f64,
    contained_within_60: bool,
    exited_unit_ball_fraction: f64,
}

/// Three-region parametric model: expanding core, marginal ring,
/// contracting exterior.
pub fn fig3(seed: u64, out: &Path) -> Result<u8, CmdError> {
    let dir = out.join("fig3");
    fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4000));

    // Linear marginal base keeps ||A_f|| effectively constant, so the
    // region scales translate directly into effective norms.
    let (base_mean, _) = generate_net(
        &mut rng,
        &spec(FactorMethod::Svd, SpectralBand::marginal_default(), 2, Activation::Identity, 0.0),
    )?;
    let (var, _) = generate_net(
        &mut rng,
        &spec(FactorMethod::Pf, SpectralBand::new(0.0, 0.2).unwrap(), 3, Activation::ReLU, -2.0),
    )?;
    let base = DeepMarkovModel::new(base_mean, var).map_err(|e| CmdError::Runtime(e.to_string()))?;
    let regions = RegionSpec::new(
        vec![
            RegionBand { radius_low: 0.0, radius_high: Some(20.0), norm_scale: 1.08 },
            RegionBand { radius_low: 20.0, radius_high: Some(40.0), norm_scale: 1.01 },
            RegionBand { radius_low: 40.0, radius_high: None, norm_scale: 0.5 },
        ],
        2.0,
    )
    .map_err(|e| CmdError::Runtime(e.to_string()))?;
    let pm = ParametricDmm::new(base, regions).map_err(|e| CmdError::Runtime(e.to_string()))?;

    let eff = |r: f64| {
        pm.effective_norm(&DVector::from_vec(vec![r, 0.0]), NormKind::Two)
            .map_err(|e| CmdError::Runtime(e.to_string()))
    };
    let effective_norm_inner = eff(10.0)?;
    let effective_norm_middle = eff(30.0)?;
    let effective_norm_outer = eff(50.0)?;

    let model = Model::Parametric(pm);
    let (n_ics, m, horizon) = (10usize, 10usize, 10_000usize);
    let ens = rollout_ensemble(&model, &circle_ics(n_ics, 2.0, 2), m, horizon, seed)
        .map_err(|e| CmdError::Runtime(e.to_string()))?;
    let mut max_state_norm: f64 = 0.0;
    let mut exited = 0usize;
    for ic in 0..n_ics {
        for r in 0..m {
            for t in 0..=horizon {
                max_state_norm = max_state_norm.max(ens.state(ic, r, t).norm());
            }
            if ens.state(ic, r, horizon).norm() > 1.0 {
                exited += 1;
            }
        }
    }

    let comment = format!("fig3 seed={seed} ics={n_ics} m={m} t={horizon}");
    write_text(&dir, "model.json", &model.to_json())?;
    write_trajectory_subset(&ens, 1, 10, &comment, &dir.join("trajectories.csv"))?;
    let grid = phase_grid(&model, [(-50.0, 50.0), (-50.0, 50.0)], 81)
        .map_err(|e| CmdError::Runtime(e.to_string()))?;
    let mut buf = Vec::new();
    grid.write_csv(&mut buf, &comment)?;
    fs::write(dir.join("phase.csv"), buf)?;

    let summary = Fig3Summary {
        seed,
        rollouts: n_ics * m,
        horizon,
        effective_norm_inner,
        effective_norm_middle,
        effective_norm_outer,
        max_state_norm,
        contained_within_60: max_state_norm <= 60.0,
        exited_unit_ball_fraction: exited as f64 / (n_ics * m) as f64,
    };
    write_text(&dir, "summary.json", &to_pretty_json(&summary))?;
    Ok(0)
}
