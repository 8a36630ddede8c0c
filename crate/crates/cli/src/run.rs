use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use perflab::bounds::{self, CertificateSuite};
use perflab::conditions::{
    self, Anchor, ChainAudit, CheckOptions, Condition, ConditionReport, MixdomReport, Target, Theorem1Report,
    Theorem2Report, TheoremStatus, Verdict,
};
use perflab::output::{self, fmt_num};
use perflab::solvers::{self, Method, OracleResult, SolverOptions, StopReason};
use perflab::{config, Error as LabError, EvalSettings, Evaluator, Instance, SeedSpec, Theta};

use crate::{Cmd, Common, SolveMethod, TargetArg};

const DEFAULT_OUT: &str = "perflab-out";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATED: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Lab(LabError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 5,
            CliError::Lab(LabError::Parse(_) | LabError::Invalid { .. } | LabError::Unsupported(_)) => 2,
            CliError::Lab(LabError::NotStable { .. }) => 4,
            CliError::Lab(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Lab(LabError::NotStable { residual, tol }) => write!(
                f,
                "stability is inconclusive: fixed-point residual {residual:.3e} exceeds {tol:.1e}; \
                 no certificate can be anchored at a stable point"
            ),
            CliError::Lab(e) => write!(f, "{e}"),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        CliError::Lab(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Everything needed to repeat a run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub instance_path: Option<PathBuf>,
    /// Canonical config text, so a replay does not depend on the file.
    pub instance_config: String,
    pub seed: u64,
    pub parameters: Invocation,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Invocation {
    pub common: Common,
    pub cmd: Cmd,
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Landscape => "landscape",
        Cmd::Solve { .. } => "solve",
        Cmd::Verify { .. } => "verify",
        Cmd::Certify => "certify",
        Cmd::Replay { .. } => "replay",
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Collects output files and writes them from this thread only.
struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    fn new(dir: PathBuf) -> CliResult<Self> {
        fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
        Ok(Writer { dir, written: Vec::new() })
    }

    fn put(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = output::stable_json(value)?;
        self.put(name, &text)
    }
}

pub fn dispatch(common: Common, cmd: Cmd) -> CliResult<u8> {
    match cmd {
        Cmd::Replay { manifest } => {
            let text = read(&manifest)?;
            let m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", manifest.display())))?;
            let mut inv = m.parameters;
            if common.out.is_some() {
                inv.common.out = common.out;
            }
            let inst = config::load_instance(&m.instance_config)?;
            execute(inv, inst)
        }
        cmd => {
            let path = common
                .instance
                .clone()
                .ok_or_else(|| CliError::Usage("--instance is required".into()))?;
            let inst = config::load_instance(&read(&path)?)?;
            execute(Invocation { common, cmd }, inst)
        }
    }
}

fn execute(inv: Invocation, inst: Instance) -> CliResult<u8> {
    let start = Instant::now();
    let common = &inv.common;
    let mut w = Writer::new(common.out.clone().unwrap_or_else(|| DEFAULT_OUT.into()))?;
    let settings = if common.closed_form {
        EvalSettings::closed_form()
    } else {
        if common.samples == 0 {
            return Err(CliError::Usage("--samples must be positive".into()));
        }
        EvalSettings::monte_carlo(common.samples, SeedSpec::new(common.seed))
    };
    let ev = Evaluator::new(&inst, &settings)?;
    let mut opts = CheckOptions::new(SeedSpec::new(common.seed));
    opts.grid_step = Some(grid_step(common, &ev));

    let label = inst.name.as_deref().unwrap_or("instance");
    println!(
        "{label}: d = {}, {} evaluation, seed {}",
        inst.dim,
        if ev.is_exact() { "closed-form".to_string() } else { format!("Monte Carlo n = {}", common.samples) },
        common.seed
    );

    let code = match &inv.cmd {
        Cmd::Landscape => landscape(&ev, &opts, &mut w)?,
        Cmd::Solve { method, theta0, max_iters } => solve(&ev, &opts, *method, theta0.as_deref(), *max_iters, &mut w)?,
        Cmd::Verify { conditions, chain, theorem, target } => {
            verify(&ev, &opts, conditions, *chain, *theorem, *target, &mut w)?
        }
        Cmd::Certify => certify(&ev, &opts, &mut w)?,
        Cmd::Replay { .. } => unreachable!("replay is resolved before execution"),
    };

    let manifest = RunManifest {
        command: command_name(&inv.cmd).to_string(),
        instance_path: common.instance.clone(),
        instance_config: config::to_config_string(&inst),
        seed: common.seed,
        outputs: w.written.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        parameters: inv.clone(),
    };
    w.json(MANIFEST_FILE, &manifest)?;
    println!("wrote {} files to {}", w.written.len(), w.dir.display());
    Ok(code)
}

/// The requested step, or a default that keeps 2-D Monte Carlo grids small.
fn grid_step(common: &Common, ev: &Evaluator<'_>) -> f64 {
    if let Some(h) = common.grid_step {
        return h;
    }
    let inst = ev.instance();
    if inst.dim == 1 {
        return CheckOptions::new(SeedSpec::new(0)).grid_step_for(ev);
    }
    let side = inst
        .domain
        .lower
        .iter()
        .zip(&inst.domain.upper)
        .map(|(l, u)| u - l)
        .fold(0.0, f64::max);
    side / 100.0
}

fn ps_tol(ev: &Evaluator<'_>) -> f64 {
    if ev.is_exact() {
        1e-10
    } else {
        1e-7
    }
}

fn landscape(ev: &Evaluator<'_>, opts: &CheckOptions, w: &mut Writer) -> CliResult<u8> {
    let h = opts.grid_step.expect("grid step resolved");
    let ps = solvers::fixed_point_oracle_ps(ev, ps_tol(ev))?;
    let rows = output::landscape(ev, h, &ps.theta_star)?;
    let best = rows
        .iter()
        .min_by(|a, b| a.pr.total_cmp(&b.pr))
        .expect("grid is nonempty");
    #[derive(Serialize)]
    struct Summary<'a> {
        grid_step: f64,
        rows: usize,
        theta_ps: &'a Theta,
        ps_inconclusive: bool,
        grid_min_theta: &'a Theta,
        grid_min_pr: f64,
    }
    w.put("landscape.csv", &output::landscape_csv(&rows))?;
    w.json(
        "landscape_summary.json",
        &Summary {
            grid_step: h,
            rows: rows.len(),
            theta_ps: &ps.theta_star,
            ps_inconclusive: ps.inconclusive,
            grid_min_theta: &best.theta,
            grid_min_pr: best.pr,
        },
    )?;
    println!(
        "landscape: {} rows at h = {h}; grid minimum PR {} at θ = {:?}; θ_PS = {:?}",
        rows.len(),
        fmt_num(best.pr),
        best.theta.0,
        ps.theta_star.0
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct OracleSummary {
    performative_optimum: OracleResult,
    performative_stable: OracleResult,
}

fn oracles(ev: &Evaluator<'_>, opts: &CheckOptions) -> CliResult<OracleSummary> {
    let h = opts.grid_step.expect("grid step resolved");
    Ok(OracleSummary {
        performative_optimum: solvers::grid_oracle_po(ev, h)?,
        performative_stable: solvers::fixed_point_oracle_ps(ev, ps_tol(ev))?,
    })
}

fn solve(
    ev: &Evaluator<'_>,
    opts: &CheckOptions,
    method: SolveMethod,
    theta0: Option<&[f64]>,
    max_iters: Option<usize>,
    w: &mut Writer,
) -> CliResult<u8> {
    let orc = oracles(ev, opts)?;
    let method = match method {
        SolveMethod::Rrm => Method::Rrm,
        SolveMethod::Rgd => Method::Rgd,
        SolveMethod::Pgd => Method::Pgd,
        SolveMethod::Oracle => {
            w.json("oracle.json", &orc)?;
            for (name, o) in [("PO", &orc.performative_optimum), ("PS", &orc.performative_stable)] {
                println!(
                    "θ_{name} = {:?}  PR = {}{}",
                    o.theta_star.0,
                    fmt_num(o.objective),
                    if o.inconclusive { "  (inconclusive)" } else { "" }
                );
            }
            return Ok(if orc.performative_stable.inconclusive { 4 } else { EXIT_OK });
        }
    };
    let inst = ev.instance();
    let theta0 = match theta0 {
        Some(t) => Theta::new(t.to_vec())?,
        None => inst.domain.center(),
    };
    inst.check_theta(&theta0).map_err(|e| CliError::Usage(format!("--theta0: {e}")))?;
    let sopts = SolverOptions { max_iters, ..Default::default() };
    let traj = match method {
        Method::Rrm => solvers::rrm(ev, &theta0, &sopts)?,
        Method::Rgd => solvers::rgd(ev, &theta0, &sopts)?,
        Method::Pgd => solvers::pgd(ev, &theta0, &sopts)?,
    };
    let fin = traj.final_theta();
    #[derive(Serialize)]
    struct Summary<'a> {
        method: Method,
        theta0: &'a Theta,
        final_theta: &'a Theta,
        final_pr: f64,
        final_pr_stderr: f64,
        stop_reason: StopReason,
        iterations: usize,
        step_size: Option<f64>,
        tol: f64,
        distance_to_ps: f64,
        distance_to_po: f64,
        oracles: &'a OracleSummary,
    }
    let summary = Summary {
        method,
        theta0: &theta0,
        final_theta: fin,
        final_pr: traj.final_pr().value,
        final_pr_stderr: traj.final_pr().std_err,
        stop_reason: traj.stop_reason,
        iterations: traj.iterates.len() - 1,
        step_size: traj.step_size,
        tol: traj.tol,
        distance_to_ps: fin.distance(&orc.performative_stable.theta_star),
        distance_to_po: fin.distance(&orc.performative_optimum.theta_star),
        oracles: &orc,
    };
    let name = method.name();
    w.put(&format!("trajectory_{name}.csv"), &output::trajectory_csv(&traj))?;
    w.json(&format!("summary_{name}.json"), &summary)?;
    println!(
        "{name}: {:?} after {} iterations, θ = {:?}, PR = {}; distance to θ_PS {}, to θ_PO {}",
        traj.stop_reason,
        summary.iterations,
        fin.0,
        fmt_num(summary.final_pr),
        fmt_num(summary.distance_to_ps),
        fmt_num(summary.distance_to_po)
    );
    Ok(EXIT_OK)
}

#[derive(Serialize, Default)]
struct VerifyOutput {
    reports: Vec<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mixdom_detail: Option<MixdomReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chain: Option<ChainAudit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theorem1: Option<Theorem1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theorem2: Option<Theorem2Report>,
}

const SENS_PAIRS: usize = 50;
const SENS_MAX_SAMPLES: usize = 10_000;
const MIXDOM_SEGMENTS: usize = 20;

fn verify(
    ev: &Evaluator<'_>,
    opts: &CheckOptions,
    names: &[String],
    chain: bool,
    theorem: Option<u8>,
    target: TargetArg,
    w: &mut Writer,
) -> CliResult<u8> {
    let inst = ev.instance();
    let target = match target {
        TargetArg::Dpr => Target::Dpr,
        TargetArg::Pr => Target::Pr,
    };
    let mut requested = Vec::new();
    for n in names {
        let c = Condition::parse(n).map_err(|_| {
            CliError::Usage(format!(
                "unknown condition `{n}`; expected one of smooth, sc, lipz, sens, mixdom, wsc, rsi, pl, qg"
            ))
        })?;
        if c == Condition::WeakCvxAtPo {
            return Err(CliError::Usage("WEAK_CVX_AT_PO is checked by `--theorem 1`".into()));
        }
        requested.push(c);
    }
    if requested.is_empty() && !chain && theorem.is_none() {
        requested = vec![Condition::Sens, Condition::Mixdom];
    }

    let mut out = VerifyOutput::default();
    for c in requested {
        let report = match c {
            Condition::Smooth | Condition::Sc | Condition::Lipz => {
                conditions::check_loss_condition(inst, c, &opts.seed)?
            }
            Condition::Sens => {
                let n = if ev.is_exact() { SENS_MAX_SAMPLES } else { ev.settings().n.min(SENS_MAX_SAMPLES) };
                conditions::check_sensitivity(inst, SENS_PAIRS, n, &opts.seed)?
            }
            Condition::Mixdom => {
                let m = conditions::check_mixture_dominance(ev, &inst.domain.center(), MIXDOM_SEGMENTS, &opts.seed)?;
                let mut r = m.segment.clone();
                r.verdict = m.verdict();
                out.mixdom_detail = Some(m);
                r
            }
            _ => conditions::check_condition(ev, c, &Anchor::AtPo, target, opts)?,
        };
        println!(
            "{:<8} {:<12} best {}  required {}",
            report.condition.name(),
            format!("{:?}", report.verdict),
            fmt_num(report.best_constant),
            fmt_num(report.required)
        );
        out.reports.push(report);
    }
    let mut violated = out.reports.iter().any(|r| r.verdict == Verdict::Violated);

    if chain {
        let audit = conditions::chain_audit(ev, &Anchor::AtPo, target, opts)?;
        for r in &audit.reports {
            println!("chain {:<5} {:?}  best {}", r.condition.name(), r.verdict, fmt_num(r.best_constant));
        }
        println!("chain monotone: {}", audit.monotone);
        if let Some(d) = &audit.diagnostic {
            println!("{d}");
        }
        violated |= audit.reports.iter().any(|r| r.verdict == Verdict::Violated);
        out.chain = Some(audit);
    }

    match theorem {
        Some(1) => {
            let r = conditions::validate_theorem1(ev, opts)?;
            println!("theorem 1: {:?}{}", r.status, ratio_line(&r));
            violated |= r.status == TheoremStatus::Violated;
            out.theorem1 = Some(r);
        }
        Some(2) => {
            let r = conditions::validate_theorem2(ev, opts)?;
            let far = r.mu_prime_far.map(|m| format!("; μ' = {}", fmt_num(m))).unwrap_or_default();
            println!("theorem 2: {:?}{far}", r.status);
            violated |= r.status == TheoremStatus::Violated;
            out.theorem2 = Some(r);
        }
        _ => {}
    }

    w.json("reports.json", &out)?;
    Ok(if violated { EXIT_VIOLATED } else { EXIT_OK })
}

fn ratio_line(r: &Theorem1Report) -> String {
    match (r.ratio, &r.eps) {
        (Some(ratio), Some(eps)) => format!("; μ/(2β) = {} vs ε = {}", fmt_num(ratio), fmt_num(eps.value)),
        _ => String::new(),
    }
}

fn certify(ev: &Evaluator<'_>, opts: &CheckOptions, w: &mut Writer) -> CliResult<u8> {
    let suite: CertificateSuite = bounds::certify_all(ev, opts)?;
    w.json("certificates.json", &suite)?;
    println!(
        "θ_PS = {:?}, θ_PO = {:?}",
        suite.truth.theta_ps.0, suite.truth.theta_po.0
    );
    for c in &suite.certificates {
        println!(
            "{:<18} {:<14} bound {}  actual {}",
            format!("{:?}", c.name),
            format!("{:?}", c.status),
            fmt_num(c.bound_value),
            fmt_num(c.actual_value)
        );
    }
    Ok(EXIT_OK)
}
