//! Command-line front end: `gen`, `flow`, `check`, `compare`.
//!
//! Exit codes: 0 ok, 2 configuration or input error, 3 numeric failure or stalled flow,
//! 4 invariant failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{estimate_moments, gen_noise_signal, whiten, Moments, SampleSet};
use crate::diagnostics::{
    decay_bound_check, gradient_check, growth_bound_check, partial_trace_rate, smoothing_check, EigenTrack,
};
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowTrace, Integrator, LOSS_SLACK};
use crate::kernel::RadialKernel;
use crate::regression::MetricPoint;
use crate::variation::{riemannian_gradient, CotangentTensor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

const PSD_TOL: f64 = 1e-12;
/// Central differences of a discrete trace match the eigenvalue law only to first order in h.
const EIGEN_LAW_TOL: f64 = 1e-2;
/// Used by `check` when the flow itself runs without a stationarity stop.
const DEFAULT_STATIONARITY_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "sigmaflow", version, about = "Metric gradient flows for kernel ridge regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the configured synthetic dataset as CSV.
    Gen,
    /// Run the configured flow; writes trace.csv and summary.json.
    Flow,
    /// Run the flow and the verification suite; writes check.json.
    Check,
    /// Run the Riemannian and Euclidean flows from the same start; writes compare.json.
    Compare,
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Unsupported(_) => {
            EXIT_CONFIG
        }
        Error::Consistency(_) => EXIT_INVARIANT,
        Error::Domain(_)
        | Error::Numeric(_)
        | Error::DegenerateCovariance { .. }
        | Error::PsdViolation { .. }
        | Error::StalledFlow { .. } => EXIT_NUMERIC,
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "warn" }))
        .try_init();
    if let Ok(v) = std::env::var("SIGMAFLOW_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: SIGMAFLOW_THREADS must be a positive integer, got `{v}`");
                return EXIT_CONFIG;
            }
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    fs::create_dir_all(&cfg.output.dir)?;
    let ctx = Context { cfg, quiet: cli.quiet };
    match cli.command {
        Command::Gen => ctx.gen(),
        Command::Flow => ctx.flow(),
        Command::Check => ctx.check(),
        Command::Compare => ctx.compare(),
    }
}

struct Context {
    cfg: RunConfig,
    quiet: bool,
}

/// Data in flow coordinates plus everything derived from the config.
struct Prepared {
    samples: SampleSet,
    moments: Option<Moments>,
    kernel: RadialKernel,
    init: MetricPoint,
    monitors: Vec<DVector<f64>>,
    /// Number of leading monitors that are noise axes.
    noise_monitors: usize,
}

impl Context {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output.dir.join(name)
    }

    fn raw_samples(&self) -> Result<SampleSet> {
        match (&self.cfg.data.path, self.cfg.noise_signal_spec()?) {
            (Some(p), _) => SampleSet::load_csv(p),
            (None, Some(spec)) => gen_noise_signal(&spec),
            (None, None) => unreachable!("validated"),
        }
    }

    fn prepare(&self) -> Result<Prepared> {
        let raw = self.raw_samples()?;
        let d = raw.dim();
        let (samples, moments) = if self.cfg.data.whiten {
            let m = estimate_moments(&raw, self.cfg.data.covariance_repair)?;
            (whiten(&raw, &m), Some(m))
        } else {
            (raw, None)
        };
        let to_flow = |v: DVector<f64>| -> Result<DVector<f64>> {
            match &moments {
                Some(m) => m.whitened_direction(&v),
                None => {
                    let n = v.norm();
                    if n > 0.0 {
                        Ok(v / n)
                    } else {
                        Err(Error::Config("monitor direction has zero length".into()))
                    }
                }
            }
        };
        let mut monitors = Vec::new();
        if self.cfg.flow.monitor_noise {
            let d_noise = self.cfg.data.generate.as_ref().map_or(0, |g| g.d_noise);
            for i in 0..d_noise {
                monitors.push(to_flow(DVector::from_fn(d, |j, _| if j == i { 1.0 } else { 0.0 }))?);
            }
        }
        let noise_monitors = monitors.len();
        for (i, v) in self.cfg.flow.monitors.iter().enumerate() {
            if v.len() != d {
                return Err(Error::Config(format!("flow.monitors[{i}] has length {}, data dimension is {d}", v.len())));
            }
            monitors.push(to_flow(DVector::from_column_slice(v))?);
        }
        Ok(Prepared {
            kernel: self.cfg.kernel(d)?,
            init: self.cfg.flow.init.build(d)?,
            samples,
            moments,
            monitors,
            noise_monitors,
        })
    }

    fn gen(&self) -> Result<i32> {
        let spec = self.cfg.noise_signal_spec()?.ok_or_else(|| Error::Config("gen needs data.generate".into()))?;
        let s = gen_noise_signal(&spec)?;
        let path = self.out("data.csv");
        s.save_csv(&path)?;
        let m = estimate_moments(&s, self.cfg.data.covariance_repair)?;
        self.say(format!("wrote {} (n = {}, d = {})", path.display(), s.n(), s.dim()));
        self.say(format!("mean = {:?}", m.mean.as_slice()));
        self.say(format!("cov diagonal = {:?}", m.cov.diagonal().as_slice()));
        Ok(EXIT_OK)
    }

    fn write_trace(&self, trace: &FlowTrace, name: &str) -> Result<()> {
        trace.write_csv(File::create(self.out(name))?)
    }

    fn write_json<T: Serialize>(&self, value: &T, name: &str) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.out(name), text + "\n")?;
        Ok(())
    }

    fn flow(&self) -> Result<i32> {
        let p = self.prepare()?;
        let trace = run_flow(&p.samples, &p.init, &p.kernel, &self.cfg.flow_config(p.monitors.clone()))?;
        self.write_trace(&trace, "trace.csv")?;
        let summary = trace.summary();
        self.write_json(&summary, "summary.json")?;
        self.say(format!(
            "{} steps, final loss {:.6e}, terminated by {:?}",
            summary.steps, summary.final_loss, summary.terminated_by
        ));
        Ok(EXIT_OK)
    }

    fn check(&self) -> Result<i32> {
        let p = self.prepare()?;
        let cfg = &self.cfg;
        let lambda = cfg.ridge.lambda;
        let mut fc = cfg.flow_config(p.monitors.clone());
        fc.keep_coefficients = true;
        let mut checks = Vec::new();
        let mut push = |name: &str, hard: bool, passed: bool, detail: serde_json::Value| {
            checks.push(json!({ "name": name, "hard": hard, "passed": passed, "detail": detail }));
        };

        let grad = gradient_check(&p.samples, &p.init, &p.kernel, lambda, cfg.diagnostics.fd_step)?;
        push("gradient", true, grad.max_rel_error <= 1e-4, json!({ "max_rel_error": grad.max_rel_error }));

        // Every solve inside the flow compares both forms of D𝒥; reaching this point means they agreed.
        let trace = run_flow(&p.samples, &p.init, &p.kernel, &fc)?;
        push("dual_form", true, true, json!({ "solves": trace.records.len() }));
        self.write_trace(&trace, "trace.csv")?;

        let worst_rise = trace.records.windows(2).map(|w| w[1].loss - w[0].loss).fold(f64::NEG_INFINITY, f64::max);
        let monotone = trace.integrator == Integrator::EulerSigmaEuclidean || worst_rise <= LOSS_SLACK || trace.steps() == 0;
        push("loss_monotone", true, monotone, json!({ "max_increase": worst_rise, "backtracked_steps": trace.backtracked_steps() }));

        let trivial = 0.5 * p.samples.mean_sq_label();
        let bound_ok = trace.records.iter().all(|r| r.loss < trivial || (trivial == 0.0 && r.loss == 0.0));
        push("trivial_bound", true, bound_ok, json!({ "bound": trivial }));

        let min_eig = trace.records.iter().map(|r| r.min_eigenvalue()).fold(f64::INFINITY, f64::min);
        push("psd", true, min_eig >= -PSD_TOL, json!({ "min_eigenvalue": min_eig }));

        if matches!(trace.integrator, Integrator::Rk4LiftedU | Integrator::EulerLiftedU) {
            let l = p.init.rank();
            let d = p.init.dim();
            let tail = trace
                .records
                .iter()
                .flat_map(|r| r.eigenvalues[..d - l].iter().copied())
                .fold(0.0, f64::max);
            push("rank", true, tail <= 1e-12, json!({ "rank": l, "max_null_eigenvalue": tail }));
        }

        let last = trace.last();
        let full: Vec<DVector<f64>> = (0..p.init.dim()).map(|i| DVector::from_fn(p.init.dim(), |j, _| if i == j { 1.0 } else { 0.0 })).collect();
        if let Some(m) = last.point() {
            let dj = CotangentTensor::new(last.dj.clone())?;
            let rate = partial_trace_rate(&m, &dj, &full)?;
            let ode = -riemannian_gradient(&m, &dj).value().trace();
            let err = (rate - ode).abs();
            push("partial_trace", true, err <= 1e-10 * ode.abs().max(1.0), json!({ "rate": rate, "ode_trace": ode }));
        }
        let stat_tol = if cfg.flow.stationarity_tol > 0.0 { cfg.flow.stationarity_tol } else { DEFAULT_STATIONARITY_TOL };
        let stationary = last.residual <= stat_tol;
        push("stationarity", false, stationary, json!({ "final_residual": last.residual, "tolerance": stat_tol, "terminated_by": trace.terminated_by }));

        if trace.steps() >= 2 && trace.integrator != Integrator::EulerSigmaEuclidean {
            let track = EigenTrack::from_trace(&trace)?;
            let mut worst: f64 = 0.0;
            for (j, meas) in track.measured.iter().enumerate() {
                if let (Some(meas), true) = (meas, track.reliable[j]) {
                    for (a, b) in meas.iter().zip(&track.predicted[j]) {
                        let scale = b.abs().max(1e-12);
                        worst = worst.max((a - b).abs() / scale);
                    }
                }
            }
            push("eigen_law", false, worst <= EIGEN_LAW_TOL, json!({ "max_rel_deviation": worst, "note": "first order in the step size" }));
        }

        let growth = growth_bound_check(&trace, &p.samples, &p.kernel, lambda, cfg.diagnostics.growth_slack);
        push("growth", false, growth.violations == 0, serde_json::to_value(&growth)?);

        let gaussian = p.kernel.is_gaussian() && trace.integrator != Integrator::EulerSigmaEuclidean;
        let tol = cfg.diagnostics.tolerance;
        if gaussian && p.noise_monitors > 0 {
            let noise = &p.monitors[..p.noise_monitors];
            let in_scope = cfg.data.generate.as_ref().is_some_and(|g| g.noise_cov.is_none());
            let report = decay_bound_check(&trace, &p.samples, &p.kernel, lambda, noise, &tol, in_scope)?;
            let ok = report.monitors.iter().all(|m| m.increase_fraction() <= 0.05 && m.bound_fraction() <= 0.05);
            push("decay", false, ok, json!({ "in_scope": report.in_scope, "monitors": report.monitors }));

            let stride = (trace.records.len() / cfg.diagnostics.points.max(1)).max(1);
            let mut results = Vec::new();
            let mut ok = true;
            for rec in trace.records.iter().step_by(stride).take(cfg.diagnostics.points) {
                let m = rec.point().expect("lifted trace");
                for w in noise {
                    for &sp in &cfg.diagnostics.smoothing {
                        let c = smoothing_check(&p.samples, &m, &p.kernel, lambda, w, sp, cfg.diagnostics.alpha, &tol)?;
                        ok &= c.holds;
                        results.push(c);
                    }
                }
            }
            let worst = results.iter().map(|c| c.excess - c.tolerance).fold(f64::NEG_INFINITY, f64::max);
            push("smoothing", false, ok, json!({ "evaluations": results.len(), "worst_margin": worst }));
        }

        let hard_ok = checks.iter().all(|c| !c["hard"].as_bool().unwrap() || c["passed"].as_bool().unwrap());
        let all_ok = checks.iter().all(|c| c["passed"].as_bool().unwrap());
        let report = json!({
            "passed": hard_ok,
            "all_passed": all_ok,
            "whitened": p.moments.is_some(),
            "summary": trace.summary(),
            "checks": checks,
        });
        self.write_json(&report, "check.json")?;
        for c in report["checks"].as_array().unwrap() {
            self.say(format!(
                "{:<14} {:<4} {}",
                c["name"].as_str().unwrap(),
                if c["passed"].as_bool().unwrap() { "ok" } else { "FAIL" },
                if c["hard"].as_bool().unwrap() { "" } else { "(statistical/informational)" }
            ));
        }
        Ok(if hard_ok { EXIT_OK } else { EXIT_INVARIANT })
    }

    fn compare(&self) -> Result<i32> {
        let p = self.prepare()?;
        let mut riem = self.cfg.flow_config(p.monitors.clone());
        if riem.integrator == Integrator::EulerSigmaEuclidean {
            riem.integrator = Integrator::Rk4LiftedU;
        }
        let mut eucl = riem.clone();
        eucl.integrator = Integrator::EulerSigmaEuclidean;
        eucl.backtrack = false;
        let tr = run_flow(&p.samples, &p.init, &p.kernel, &riem)?;
        let te = run_flow(&p.samples, &p.init, &p.kernel, &eucl)?;
        self.write_trace(&tr, "trace_riemannian.csv")?;
        self.write_trace(&te, "trace_euclidean.csv")?;
        let describe = |t: &FlowTrace| {
            // Below rounding level of an exactly PSD factor trace.
            let violation = t.records.iter().find(|r| r.min_eigenvalue() < -PSD_TOL);
            json!({
                "integrator": t.integrator,
                "terminated_by": t.terminated_by,
                "t": t.records.iter().map(|r| r.t).collect::<Vec<_>>(),
                "loss": t.records.iter().map(|r| r.loss).collect::<Vec<_>>(),
                "min_eigenvalue": t.records.iter().map(|r| r.min_eigenvalue()).collect::<Vec<_>>(),
                "psd_violation_step": violation.map(|r| r.step),
                "psd_violation_time": violation.map(|r| r.t),
            })
        };
        let report = json!({ "riemannian": describe(&tr), "euclidean": describe(&te) });
        self.write_json(&report, "compare.json")?;
        let min_r = tr.records.iter().map(|r| r.min_eigenvalue()).fold(f64::INFINITY, f64::min);
        let min_e = te.records.iter().map(|r| r.min_eigenvalue()).fold(f64::INFINITY, f64::min);
        self.say(format!("riemannian: min eigenvalue {min_r:.3e}, final loss {:.6e}", tr.last().loss));
        self.say(format!("euclidean:  min eigenvalue {min_e:.3e}, final loss {:.6e}", te.last().loss));
        Ok(EXIT_OK)
    }
}
