//! Command implementations.

use std::fs;
use std::path::PathBuf;

use dmm_stability::certify::{certify_grid, certify_layerwise, Verdict};
use dmm_stability::dmm::{DeepMarkovModel, Model};
use dmm_stability::factorize::FactorMethod;
use dmm_stability::pwa::extract;
use dmm_stability::sim::{
    circle_ics, empirical_moments, moment_diagnostic, phase_grid, rollout_ensemble,
};
use dmm_stability::spectral::{local_lipschitz, op_norm, NormKind};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gen::{generate_net, parse_activation, parse_band, parse_method, NetSpec};
use crate::util::{config_comment, read_config_overrides, resolve_out_dir, to_pretty_json, write_text};
use crate::{AnalyzeArgs, CertifyArgs, CmdError, GenArgs, ReproduceArgs, SimulateArgs};

fn load_model(path: &std::path::Path) -> Result<Model, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Usage(format!("cannot read model {}: {e}", path.display())))?;
    Model::from_json(&text).map_err(|e| CmdError::Usage(e.to_string()))
}

fn parse_norm(s: &str) -> Result<NormKind, CmdError> {
    s.parse().map_err(|e: dmm_stability::Error| CmdError::Usage(e.to_string()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CmdError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    fs::create_dir_all(dir)?;
                }
            }
            fs::write(path, text)?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------- gen ----

#[derive(Debug, Clone, Serialize)]
pub struct GenConfig {
    pub method: String,
    pub band: [f64; 2],
    pub depth: usize,
    pub act: String,
    pub bias: bool,
    pub dim: usize,
    pub hidden: usize,
    pub var_band: [f64; 2],
    pub var_depth: usize,
    pub var_bias_shift: f64,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenOverrides {
    method: Option<String>,
    band: Option<[f64; 2]>,
    depth: Option<usize>,
    act: Option<String>,
    bias: Option<bool>,
    dim: Option<usize>,
    hidden: Option<usize>,
    var_band: Option<[f64; 2]>,
    var_depth: Option<usize>,
    var_bias_shift: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn resolve_gen_config(args: &GenArgs) -> Result<GenConfig, CmdError> {
    let ov: GenOverrides = match &args.config {
        Some(path) => read_config_overrides(path)?,
        None => GenOverrides::default(),
    };
    let dim = ov.dim.unwrap_or(args.dim);
    let band_flag = [args.band[0], args.band[1]];
    let var_band_flag = [args.var_band[0], args.var_band[1]];
    let cfg = GenConfig {
        method: ov.method.unwrap_or_else(|| args.method.clone()),
        band: ov.band.unwrap_or(band_flag),
        depth: ov.depth.unwrap_or(args.depth),
        act: ov.act.unwrap_or_else(|| args.act.clone()),
        bias: ov.bias.unwrap_or(args.bias),
        dim,
        hidden: ov.hidden.or(args.hidden).unwrap_or(dim),
        var_band: ov.var_band.unwrap_or(var_band_flag),
        var_depth: ov.var_depth.unwrap_or(args.var_depth),
        var_bias_shift: ov.var_bias_shift.unwrap_or(args.var_bias_shift),
        seed: ov.seed.unwrap_or(args.seed),
        out: resolve_out_dir(&args.out, ov.out),
    };
    if cfg.dim == 0 || cfg.depth == 0 || cfg.var_depth == 0 || cfg.hidden == 0 {
        return Err(CmdError::Usage("dim, depth, and hidden must be positive".into()));
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct GenReport<'a> {
    config: &'a GenConfig,
    pass: bool,
    mean_layers: Vec<dmm_stability::factorize::VerificationReport>,
    var_layers: Vec<dmm_stability::factorize::VerificationReport>,
}

pub fn run_gen(args: GenArgs) -> Result<u8, CmdError> {
    let cfg = resolve_gen_config(&args)?;
    let method = parse_method(&cfg.method)?;
    let act = parse_activation(&cfg.act)?;
    let band = parse_band(&cfg.band)?;
    let var_band = parse_band(&cfg.var_band)?;

    let mean_spec = NetSpec {
        method,
        band,
        depth: cfg.depth,
        act,
        bias: cfg.bias,
        dim: cfg.dim,
        hidden: cfg.hidden,
        out_bias_shift: 0.0,
        sv_pin: None,
    };
    if matches!(method, FactorMethod::Pf | FactorMethod::Gd) && !mean_spec.square() {
        return Err(CmdError::Usage(format!(
            "{} weights are square-only: hidden width {} must equal dim {}",
            cfg.method, cfg.hidden, cfg.dim
        )));
    }
    // Variance net is always square and ReLU-activated.
    let var_spec = NetSpec {
        method,
        band: var_band,
        depth: cfg.var_depth,
        act: dmm_stability::netcore::Activation::ReLU,
        bias: cfg.bias,
        dim: cfg.dim,
        hidden: cfg.dim,
        out_bias_shift: cfg.var_bias_shift,
        sv_pin: None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mean_net, mean_reports) = generate_net(&mut rng, &mean_spec)?;
    let (var_net, var_reports) = generate_net(&mut rng, &var_spec)?;
    let model = Model::Plain(
        DeepMarkovModel::new(mean_net, var_net).map_err(|e| CmdError::Runtime(e.to_string()))?,
    );

    let pass = mean_reports.iter().chain(&var_reports).all(|r| r.pass);
    let report = GenReport {
        config: &cfg,
        pass,
        mean_layers: mean_reports,
        var_layers: var_reports,
    };
    write_text(&cfg.out, "model.json", &model.to_json())?;
    write_text(&cfg.out, "verification.json", &to_pretty_json(&report))?;
    Ok(if pass { 0 } else { 5 })
}

// ------------------------------------------------------------ analyze ----

pub fn run_analyze(args: AnalyzeArgs) -> Result<u8, CmdError> {
    let model = load_model(&args.model)?;
    let p = parse_norm(&args.p)?;
    if args.at.len() != model.state_dim() {
        return Err(CmdError::Usage(format!(
            "--at needs {} coordinates, got {}",
            model.state_dim(),
            args.at.len()
        )));
    }
    let x = DVector::from_vec(args.at.clone());
    let base = model.base();

    let net_report = |net| -> Result<serde_json::Value, CmdError> {
        let form = extract(net, &x).map_err(|e| CmdError::Runtime(e.to_string()))?;
        let a_norm = op_norm(form.a_matrix(), p)
            .map_err(|e| CmdError::Runtime(e.to_string()))?
            .norm_value;
        let gain = local_lipschitz(&form, &x, p).ok();
        Ok(serde_json::json!({
            "pwa": form,
            "a_norm": a_norm,
            "local_gain": gain,
        }))
    };

    let doc = serde_json::json!({
        "model": args.model,
        "at": args.at,
        "p": p,
        "mean": net_report(base.mean_net())?,
        "variance": net_report(base.var_net())?,
    });
    emit(&args.out, &to_pretty_json(&doc))?;
    Ok(0)
}

// ------------------------------------------------------------ certify ----

#[derive(Debug, Clone, Serialize)]
pub struct CertifyConfig {
    pub model: PathBuf,
    pub p: String,
    pub grid: bool,
    pub grid_box: [f64; 2],
    pub resolution: usize,
    pub seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertifyOverrides {
    model: Option<PathBuf>,
    p: Option<String>,
    grid: Option<bool>,
    grid_box: Option<[f64; 2]>,
    resolution: Option<usize>,
}

pub fn run_certify(args: CertifyArgs) -> Result<u8, CmdError> {
    let ov: CertifyOverrides = match &args.config {
        Some(path) => read_config_overrides(path)?,
        None => CertifyOverrides::default(),
    };
    let cfg = CertifyConfig {
        model: ov.model.unwrap_or_else(|| args.model.clone()),
        p: ov.p.unwrap_or_else(|| args.p.clone()),
        grid: ov.grid.unwrap_or(args.grid),
        grid_box: ov.grid_box.unwrap_or([args.r#box[0], args.r#box[1]]),
        resolution: ov.resolution.unwrap_or(args.resolution),
        seed: 0,
    };
    let model = load_model(&cfg.model)?;
    let p = parse_norm(&cfg.p)?;
    let base = model.base();

    let cert = certify_layerwise(base.mean_net(), p);
    let var_cert = certify_layerwise(base.var_net(), p);
    let grid = if cfg.grid {
        let box_per_dim: Vec<(f64, f64)> =
            vec![(cfg.grid_box[0], cfg.grid_box[1]); base.state_dim()];
        let ev = certify_grid(base, &box_per_dim, cfg.resolution, p)
            .map_err(|e| CmdError::Runtime(e.to_string()))?;
        Some(ev.summary())
    } else {
        None
    };

    let mut doc = serde_json::to_value(&cert).expect("certificate serializes");
    doc["grid"] = serde_json::to_value(&grid).expect("grid summary serializes");
    doc["variance_certificate"] = serde_json::to_value(&var_cert).expect("certificate serializes");
    doc["config"] = serde_json::to_value(&cfg).expect("config serializes");
    emit(&args.out, &to_pretty_json(&doc))?;

    Ok(match cert.verdict {
        Verdict::CertifiedContractive => 0,
        Verdict::Marginal => 3,
        Verdict::NotCertified => 4,
    })
}

// ----------------------------------------------------------- simulate ----

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub model: PathBuf,
    pub t: usize,
    pub m: usize,
    pub ics: usize,
    pub ic_radius: f64,
    pub seed: u64,
    pub zero_variance: bool,
    pub phase_resolution: Option<usize>,
    pub phase_box: [f64; 2],
    pub out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateOverrides {
    model: Option<PathBuf>,
    t: Option<usize>,
    m: Option<usize>,
    ics: Option<usize>,
    ic_radius: Option<f64>,
    seed: Option<u64>,
    zero_variance: Option<bool>,
    phase_resolution: Option<usize>,
    phase_box: Option<[f64; 2]>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    config: &'a SimulateConfig,
    diagnostic: dmm_stability::sim::MomentDiagnostic,
}

pub fn run_simulate(args: SimulateArgs) -> Result<u8, CmdError> {
    let ov: SimulateOverrides = match &args.config {
        Some(path) => read_config_overrides(path)?,
        None => SimulateOverrides::default(),
    };
    let cfg = SimulateConfig {
        model: ov.model.unwrap_or_else(|| args.model.clone()),
        t: ov.t.unwrap_or(args.t),
        m: ov.m.unwrap_or(args.m),
        ics: ov.ics.unwrap_or(args.ics),
        ic_radius: ov.ic_radius.unwrap_or(args.ic_radius),
        seed: ov.seed.unwrap_or(args.seed),
        zero_variance: ov.zero_variance.unwrap_or(args.zero_variance),
        phase_resolution: ov.phase_resolution.or(args.phase_resolution),
        phase_box: ov.phase_box.unwrap_or([args.phase_box[0], args.phase_box[1]]),
        out: resolve_out_dir(&args.out, ov.out),
    };
    if cfg.t == 0 || cfg.m == 0 || cfg.ics == 0 {
        return Err(CmdError::Usage("t, m, and ics must be positive".into()));
    }
    let mut model = load_model(&cfg.model)?;
    if cfg.zero_variance {
        model = model.zero_variance();
    }

    let ics = circle_ics(cfg.ics, cfg.ic_radius, model.state_dim());
    let ens = rollout_ensemble(&model, &ics, cfg.m, cfg.t, cfg.seed)
        .map_err(|e| CmdError::Runtime(e.to_string()))?;
    let moments = empirical_moments(&ens);
    let diagnostic = moment_diagnostic(&moments);

    let comment = config_comment(&cfg);
    fs::create_dir_all(&cfg.out)?;
    let mut traj = Vec::new();
    ens.write_csv(&mut traj, &comment)?;
    fs::write(cfg.out.join("trajectories.csv"), traj)?;
    let mut mom = Vec::new();
    moments.write_csv(&mut mom, &comment)?;
    fs::write(cfg.out.join("moments.csv"), mom)?;

    if let Some(res) = cfg.phase_resolution {
        let grid = phase_grid(&model, [(cfg.phase_box[0], cfg.phase_box[1]); 2], res)
            .map_err(|e| match e {
                dmm_stability::Error::Unsupported(m) => CmdError::Usage(m),
                other => CmdError::Runtime(other.to_string()),
            })?;
        let mut phase = Vec::new();
        grid.write_csv(&mut phase, &comment)?;
        fs::write(cfg.out.join("phase.csv"), phase)?;
    }

    let summary = SimulateSummary {
        config: &cfg,
        diagnostic,
    };
    write_text(&cfg.out, "summary.json", &to_pretty_json(&summary))?;
    Ok(0)
}

// ---------------------------------------------------------- reproduce ----

pub fn run_reproduce(args: ReproduceArgs) -> Result<u8, CmdError> {
    let out = resolve_out_dir(&args.out, None);
    match args.figure.as_str() {
        "fig1" => crate::reproduce::fig1(args.seed, &out),
        "fig2" => crate::reproduce::fig2(args.seed, &out),
        "fig3" => crate::reproduce::fig3(args.seed, &out),
        other => Err(CmdError::Usage(format!(
            "unknown figure {other:?} (use fig1, fig2, fig3)"
        ))),
    }
}
