//! Command-line parsing and the resolved run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use peakonlab::phase_plane::ModelParams;
use serde_json::Value;

use crate::format::{jf, jfs, obj, parse_num};
use crate::CliError;

/// Environment variable that overrides `--out`.
pub const OUT_ENV: &str = "PEAKONLAB_OUT";

#[derive(Debug, Parser)]
#[command(name = "peakonlab", version, about = "Traveling waves, peakons and cusped curves for the modified Camassa-Holm equation")]
pub struct Cli {
    /// Output directory (the PEAKONLAB_OUT environment variable takes precedence).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Named tolerance, `NAME=VALUE`; repeatable.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    /// Also write an SVG plot.
    #[arg(long, global = true)]
    pub plot: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<f64>,
    /// Spatial period, or `inf` for the line.
    #[arg(long, value_parser = parse_positive_or_inf)]
    pub ell: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Level sets and critical points of H.
    Phase {
        #[command(flatten)]
        model: ModelArgs,
        /// Levels to sample (comma separated); chosen from the window when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        h: Vec<f64>,
        #[arg(long, default_value_t = 400)]
        resolution: usize,
        #[arg(long, default_value_t = 4.0)]
        phi_max: f64,
    },
    /// A patched traveling wave at one level.
    Wave {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        h: f64,
        /// Patch candidate index instead of the default arc.
        #[arg(long)]
        pair: Option<usize>,
        /// Half-width of the ξ window for pulses ending at a saddle.
        #[arg(long, default_value_t = peakon_window())]
        window: f64,
    },
    /// Peakon particle dynamics.
    Peakons {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "model", value_enum, default_value_t = ModelName::Mch)]
        model_name: ModelName,
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Amplitudes; one value is broadcast, none draws them from the seed.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p: Vec<f64>,
        /// Initial positions; drawn from the seed when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, value_enum, default_value_t = MethodName::Dp)]
        method: MethodName,
        /// Step of the implicit midpoint rule.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 200)]
        outputs: usize,
        #[arg(long)]
        collision_eps: Option<f64>,
    },
    /// Weak-form residuals of a candidate, or a consistency check of an emitted CSV.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// CSV written by another subcommand; the built-in peakon is used when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Peakon amplitude of the built-in candidate.
        #[arg(long, default_value_t = 2.0 * 3f64.sqrt())]
        p: f64,
        /// Speed of the built-in candidate; the exact speed when omitted.
        #[arg(long)]
        speed: Option<f64>,
        #[arg(long, default_value_t = 10)]
        tests: usize,
        #[arg(long, default_value_t = 2.0)]
        t_end: f64,
    },
    /// Curves with prescribed curvature and their flows.
    Curve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = CurveSource::CuspedLoop)]
        source: CurveSource,
        /// Level of the profile source.
        #[arg(long, allow_hyphen_values = true)]
        h: Option<f64>,
        /// Periods to reconstruct; the closing count when omitted.
        #[arg(long)]
        periods: Option<usize>,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long, default_value_t = 0)]
        evolve_steps: usize,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, value_enum, default_value_t = LawName::Mch)]
        law: LawName,
        #[arg(long, value_enum, default_value_t = StepperName::Euler)]
        stepper: StepperName,
    },
    /// θ_h(T_h) over a range of levels.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        /// Lower end (exclusive); the patching threshold when omitted.
        #[arg(long, allow_hyphen_values = true)]
        h_min: Option<f64>,
        #[arg(long, default_value_t = 30.0)]
        h_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn peakon_window() -> f64 {
    peakonlab::wave_builder::DEFAULT_XI_WINDOW
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Mch,
    Ch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    Dp,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveSource {
    CuspedLoop,
    Circle,
    Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawName {
    Mch,
    Mkdv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepperName {
    Euler,
    Rk4,
}

fn parse_positive_or_inf(s: &str) -> Result<f64, String> {
    match parse_num(s) {
        Some(x) if x > 0.0 => Ok(x),
        _ => Err(format!("expected a positive number or inf, got {s:?}")),
    }
}

/// Subcommand-specific settings after defaults are applied.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Phase {
        levels: Vec<f64>,
        resolution: usize,
        phi_max: f64,
    },
    Wave {
        h: f64,
        pair: Option<usize>,
        window: f64,
    },
    Peakons {
        model: ModelName,
        n: usize,
        p: Vec<f64>,
        x: Vec<f64>,
        t_end: f64,
        method: MethodName,
        dt: f64,
        outputs: usize,
        collision_eps: Option<f64>,
    },
    Verify {
        input: Option<PathBuf>,
        p: f64,
        speed: Option<f64>,
        tests: usize,
        t_end: f64,
    },
    Curve {
        source: CurveSource,
        h: Option<f64>,
        periods: Option<usize>,
        resolution: usize,
        evolve_steps: usize,
        dt: f64,
        law: LawName,
        stepper: StepperName,
    },
    Sweep {
        h_min: Option<f64>,
        h_max: f64,
        points: usize,
        jobs: Option<usize>,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Phase { .. } => "phase",
            Task::Wave { .. } => "wave",
            Task::Peakons { .. } => "peakons",
            Task::Verify { .. } => "verify",
            Task::Curve { .. } => "curve",
            Task::Sweep { .. } => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub params: ModelParams,
    pub out: PathBuf,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    pub plot: bool,
}

/// Tolerance names understood by the subcommands, with their defaults.
pub const TOLERANCES: [(&str, f64); 4] = [
    // integrator tolerance of the peakon ODE
    ("ode", 1e-10),
    // pass threshold of joint residuals in wave reports
    ("joint", 1e-10),
    // relative accuracy of the weak-form quadrature
    ("weak", 1e-9),
    // pass threshold of verify reports
    ("verify", 1e-5),
];

impl RunConfig {
    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    /// Checks the invariants that clap cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        for (k, v) in &self.tolerances {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!("tolerance {k} must be positive and finite (got {v})")));
            }
        }
        match &self.task {
            Task::Sweep { h_min, h_max, points, jobs } => {
                if let Some(lo) = h_min {
                    if !(lo < h_max) {
                        return Err(CliError::Config(format!("empty h-range ({lo}, {h_max}]")));
                    }
                }
                if *points == 0 {
                    return Err(CliError::Config("sweep needs at least one point".into()));
                }
                if *jobs == Some(0) {
                    return Err(CliError::Config("--jobs must be at least 1".into()));
                }
            }
            Task::Phase { resolution, phi_max, .. } => {
                if *resolution < 2 || !(*phi_max > 0.0) {
                    return Err(CliError::Config("phase needs resolution ≥ 2 and phi-max > 0".into()));
                }
            }
            Task::Peakons { n, p, x, t_end, dt, .. } => {
                if *n == 0 {
                    return Err(CliError::Config("--n must be at least 1".into()));
                }
                if !(p.is_empty() || p.len() == 1 || p.len() == *n) {
                    return Err(CliError::Config(format!("{} amplitudes for {n} peakons", p.len())));
                }
                if !(x.is_empty() || x.len() == *n) {
                    return Err(CliError::Config(format!("{} positions for {n} peakons", x.len())));
                }
                if !(*t_end >= 0.0) || !(*dt > 0.0) {
                    return Err(CliError::Config("t-end must be ≥ 0 and dt > 0".into()));
                }
            }
            Task::Verify { tests, t_end, .. } => {
                if *tests == 0 || !(*t_end > 0.0) {
                    return Err(CliError::Config("verify needs tests ≥ 1 and t-end > 0".into()));
                }
            }
            Task::Curve { resolution, dt, periods, .. } => {
                if *resolution < 8 || !(*dt > 0.0) || *periods == Some(0) {
                    return Err(CliError::Config("curve needs resolution ≥ 8, dt > 0 and periods ≥ 1".into()));
                }
            }
            Task::Wave { .. } => {}
        }
        Ok(())
    }

    /// The configuration as recorded in the manifest. The output directory is
    /// left out so that relocated runs produce identical manifests.
    pub fn to_json(&self) -> Value {
        let p = &self.params;
        let params = obj([("k", jf(p.k)), ("c", jf(p.c)), ("g", jf(p.g)), ("ell", jf(p.ell))]);
        let opt = |x: Option<f64>| x.map(jf).unwrap_or(Value::Null);
        let task = match &self.task {
            Task::Phase { levels, resolution, phi_max } => obj([
                ("h", jfs(levels)),
                ("resolution", (*resolution).into()),
                ("phi_max", jf(*phi_max)),
            ]),
            Task::Wave { h, pair, window } => obj([
                ("h", jf(*h)),
                ("pair", pair.map(Value::from).unwrap_or(Value::Null)),
                ("window", jf(*window)),
            ]),
            Task::Peakons { model, n, p, x, t_end, method, dt, outputs, collision_eps } => obj([
                ("model", if *model == ModelName::Mch { "mch" } else { "ch" }.into()),
                ("n", (*n).into()),
                ("p", jfs(p)),
                ("x", jfs(x)),
                ("t_end", jf(*t_end)),
                ("method", if *method == MethodName::Dp { "dp" } else { "midpoint" }.into()),
                ("dt", jf(*dt)),
                ("outputs", (*outputs).into()),
                ("collision_eps", opt(*collision_eps)),
            ]),
            Task::Verify { input, p, speed, tests, t_end } => obj([
                ("input", input.as_ref().map(|i| Value::from(i.to_string_lossy().into_owned())).unwrap_or(Value::Null)),
                ("p", jf(*p)),
                ("speed", opt(*speed)),
                ("tests", (*tests).into()),
                ("t_end", jf(*t_end)),
            ]),
            Task::Curve { source, h, periods, resolution, evolve_steps, dt, law, stepper } => obj([
                ("source", value_name(*source)),
                ("h", opt(*h)),
                ("periods", periods.map(Value::from).unwrap_or(Value::Null)),
                ("resolution", (*resolution).into()),
                ("evolve_steps", (*evolve_steps).into()),
                ("dt", jf(*dt)),
                ("law", value_name(*law)),
                ("stepper", value_name(*stepper)),
            ]),
            Task::Sweep { h_min, h_max, points, jobs } => obj([
                ("h_min", opt(*h_min)),
                ("h_max", jf(*h_max)),
                ("points", (*points).into()),
                // the worker count does not change the output
                ("jobs", jobs.map(Value::from).unwrap_or(Value::Null)),
            ]),
        };
        let tolerances = Value::Object(self.tolerances.iter().map(|(k, v)| (k.clone(), jf(*v))).collect());
        obj([
            ("subcommand", self.task.name().into()),
            ("params", params),
            ("seed", self.seed.into()),
            ("tolerances", tolerances),
            ("plot", self.plot.into()),
            ("options", task),
        ])
    }
}

fn value_name<T: ValueEnum>(v: T) -> Value {
    v.to_possible_value().map(|p| Value::from(p.get_name())).unwrap_or(Value::Null)
}

fn parse_tol(s: &str) -> Result<(String, f64), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--tol expects NAME=VALUE, got {s:?}")))?;
    let k = k.trim().to_string();
    if !TOLERANCES.iter().any(|(n, _)| *n == k) {
        let known: Vec<&str> = TOLERANCES.iter().map(|t| t.0).collect();
        return Err(CliError::Config(format!("unknown tolerance {k:?} (known: {})", known.join(", "))));
    }
    let v = parse_num(v).ok_or_else(|| CliError::Config(format!("tolerance {k}: {v:?} is not a number")))?;
    Ok((k, v))
}

fn params(m: &ModelArgs, default: (f64, f64, f64)) -> Result<ModelParams, CliError> {
    let p = ModelParams::new(
        m.k.unwrap_or(default.0),
        m.c.unwrap_or(default.1),
        m.g.unwrap_or(default.2),
        m.ell.unwrap_or(f64::INFINITY),
    )?;
    Ok(p)
}

/// Applies defaults and the environment override.
pub fn resolve(cli: Cli, env_out: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let mut tolerances: BTreeMap<String, f64> = TOLERANCES.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for t in &cli.tol {
        let (k, v) = parse_tol(t)?;
        tolerances.insert(k, v);
    }
    // the wave-level defaults are the k = 1, g = 2, c = 2 family; peakons and
    // the built-in verify candidate default to k = 0
    let wave_defaults = (1.0, 2.0, 2.0);
    let peakon_defaults = (0.0, 2.0, 0.0);
    let (task, params) = match cli.command {
        Command::Phase { model, h, resolution, phi_max } => (
            Task::Phase {
                levels: h,
                resolution,
                phi_max,
            },
            params(&model, wave_defaults)?,
        ),
        Command::Wave { model, h, pair, window } => (Task::Wave { h, pair, window }, params(&model, wave_defaults)?),
        Command::Peakons {
            model,
            model_name,
            n,
            p,
            x,
            t_end,
            method,
            dt,
            outputs,
            collision_eps,
        } => (
            Task::Peakons {
                model: model_name,
                n,
                p,
                x,
                t_end,
                method,
                dt,
                outputs,
                collision_eps,
            },
            params(&model, peakon_defaults)?,
        ),
        Command::Verify { model, input, p, speed, tests, t_end } => (
            Task::Verify {
                input,
                p,
                speed,
                tests,
                t_end,
            },
            params(&model, peakon_defaults)?,
        ),
        Command::Curve {
            model,
            source,
            h,
            periods,
            resolution,
            evolve_steps,
            dt,
            law,
            stepper,
        } => (
            Task::Curve {
                source,
                h,
                periods,
                resolution,
                evolve_steps,
                dt,
                law,
                stepper,
            },
            params(&model, wave_defaults)?,
        ),
        Command::Sweep { model, h_min, h_max, points, jobs } => (
            Task::Sweep {
                h_min,
                h_max,
                points,
                jobs,
            },
            params(&model, wave_defaults)?,
        ),
    };
    let cfg = RunConfig {
        task,
        params,
        out: env_out.unwrap_or(cli.out),
        seed: cli.seed,
        tolerances,
        plot: cli.plot,
    };
    cfg.validate()?;
    Ok(cfg)
}
