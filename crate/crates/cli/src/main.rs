//! `dsyk`: batch front end for the entropy lab.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsyk::compare::{compare_green, Regime};
use dsyk::contour::ContourGrid;
use dsyk::largeq::{equilibrium_g, largeq_entropy, twist_g, LargeQParams};
use dsyk::oracle::exact_purity_curve;
use dsyk::saddle::{critical_mu_scan, estimate_critical_mu, page_curve, solve_saddle, SeedClass};
use dsyk::trajectory::{disorder_seed, estimate_purity_detailed};
use serde_json::{json, Value};

use config::{differing_keys, parse_list, RunConfig};
use output::{fmt, Output};

#[derive(Debug)]
pub struct CliError {
    pub numerical: bool,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self { numerical: false, message: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self { numerical: true, message: msg.into() }
    }

    fn exit_code(&self) -> u8 {
        if self.numerical {
            3
        } else {
            2
        }
    }
}

impl From<dsyk::Error> for CliError {
    fn from(e: dsyk::Error) -> Self {
        use dsyk::Error as E;
        match e {
            E::Numerical(_) | E::SingularKernel { .. } => Self::numerical(e.to_string()),
            _ => Self::config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::config(format!("csv: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "dsyk", version, about = "Rényi-2 entropy of dissipative SYK pairs: saddles, large q, trajectories, exact evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Large-N entropy versus time on both saddle branches.
    PageCurve,
    /// Slope gap versus dissipation strength and the critical coupling.
    PhaseDiagram,
    /// Large-q correlators on a (u, u') grid and the extrapolated entropy.
    Largeq,
    /// Finite-N purity from quantum trajectories.
    Traj {
        /// Also write per-realization purities.
        #[arg(long)]
        per_realization: bool,
    },
    /// Exact Lindblad evolution on the trajectory disorder seeds.
    Oracle,
    /// Aligned S(t)/N table from every route, with deviations.
    Compare {
        /// JSON sidecars of earlier runs to use instead of recomputing.
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Do not run the trajectory estimator inline.
        #[arg(long)]
        skip_traj: bool,
    },
    /// Green's function of one saddle, optionally against large q.
    GreenDump,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON run configuration; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: $DSYK_OUT_DIR, else .]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    q: Option<usize>,
    #[arg(long, global = true)]
    j: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Inverse temperature; `inf` for the ground state.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Times as `a,b,c` or `start:stop:step`.
    #[arg(long, global = true)]
    times: Option<String>,
    /// Points per real-time branch.
    #[arg(long, global = true)]
    n_steps: Option<usize>,
    #[arg(long, global = true)]
    n_traj: Option<usize>,
    #[arg(long, global = true)]
    n_disorder: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    mu_list: Option<String>,
    #[arg(long, global = true)]
    mu_t_list: Option<String>,
    #[arg(long, global = true)]
    eps_gap: Option<f64>,
    /// Contour length for green-dump.
    #[arg(long, global = true)]
    t: Option<f64>,
    #[arg(long, global = true, value_enum)]
    seed_class: Option<SeedArg>,
    #[arg(long, global = true, value_enum)]
    regime: Option<RegimeArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SeedArg {
    Diagonal,
    Wormhole,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegimeArg {
    ShortTime,
    LongTime,
}

impl Overrides {
    fn apply(&self, mut c: RunConfig) -> Result<RunConfig, CliError> {
        let list = |s: &str| parse_list(s).map_err(CliError::config);
        if let Some(v) = self.n {
            c.model.n = v;
        }
        if let Some(v) = self.q {
            c.model.q = v;
        }
        if let Some(v) = self.j {
            c.model.j = v;
        }
        if let Some(v) = self.mu {
            c.model.mu = v;
        }
        if let Some(v) = self.beta {
            c.model.beta = v;
        }
        if let Some(s) = &self.times {
            c.times = list(s)?;
        }
        if let Some(v) = self.n_steps {
            c.saddle.n_steps = v;
            c.green.n_steps = v;
        }
        if let Some(v) = self.n_traj {
            c.trajectory.n_traj = v;
        }
        if let Some(v) = self.n_disorder {
            c.trajectory.n_disorder = v;
        }
        if let Some(v) = self.seed {
            c.trajectory.master_seed = v;
        }
        if let Some(v) = self.batch_size {
            c.trajectory.batch_size = v;
        }
        if let Some(s) = &self.mu_list {
            c.scan.mu_list = list(s)?;
        }
        if let Some(s) = &self.mu_t_list {
            c.scan.mu_t_list = list(s)?;
        }
        if let Some(v) = self.eps_gap {
            c.scan.eps_gap = v;
        }
        if let Some(v) = self.t {
            c.green.t = v;
        }
        if let Some(v) = self.seed_class {
            c.green.seed_class = match v {
                SeedArg::Diagonal => SeedClass::Diagonal,
                SeedArg::Wormhole => SeedClass::Wormhole,
            };
        }
        if let Some(v) = self.regime {
            c.green.regime = Some(match v {
                RegimeArg::ShortTime => Regime::ShortTime,
                RegimeArg::LongTime => Regime::LongTime,
            });
        }
        if let Some(d) = &self.out_dir {
            c.out_dir = Some(d.clone());
        }
        Ok(c)
    }
}

/// An earlier run read back from its JSON sidecar.
struct Prior {
    path: PathBuf,
    subcommand: String,
    config: RunConfig,
    result: Value,
}

fn read_prior(path: &PathBuf) -> Result<Prior, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let subcommand = v["subcommand"].as_str().unwrap_or_default().to_string();
    let config: RunConfig = serde_json::from_value(v["config"].clone())
        .map_err(|e| CliError::config(format!("{}: no usable config: {e}", path.display())))?;
    Ok(Prior { path: path.clone(), subcommand, config, result: v["result"].clone() })
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut base = RunConfig::default();
    if let Command::Compare { inputs, .. } = &cli.command {
        if let Some(first) = inputs.first() {
            let p = read_prior(first)?;
            base.model = p.config.model;
            base.times = p.config.times;
        }
    }
    if let Some(path) = &cli.opts.config {
        base = RunConfig::load(path)?;
    }
    let c = cli.opts.apply(base)?;
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<Value, CliError> {
    if let Some(k) = cli.opts.threads {
        if k == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    let cfg = build_config(&cli)?;
    match &cli.command {
        Command::PageCurve => cmd_page_curve(&cfg),
        Command::PhaseDiagram => cmd_phase_diagram(&cfg),
        Command::Largeq => cmd_largeq(&cfg),
        Command::Traj { per_realization } => cmd_traj(&cfg, *per_realization),
        Command::Oracle => cmd_oracle(&cfg),
        Command::Compare { inputs, skip_traj } => cmd_compare(&cfg, inputs, *skip_traj),
        Command::GreenDump => cmd_green_dump(&cfg),
    }
}

fn cmd_page_curve(cfg: &RunConfig) -> Result<Value, CliError> {
    let curve = page_curve(&cfg.model, &cfg.times, &cfg.saddle)?;
    let out = Output::new(cfg, "page-curve", json!({}))?;
    let mut f = out.comment_file("page_curve.csv")?;
    curve.write_csv(&mut f)?;
    let missing: Vec<f64> = curve.times.iter().zip(&curve.s_min).filter(|(_, s)| s.is_none()).map(|(t, _)| *t).collect();
    let meta = out.sidecar("page_curve.json", serde_json::to_value(&curve).unwrap())?;
    if !missing.is_empty() {
        return Err(CliError::numerical(format!("no converged saddle at t = {missing:?} (outputs written)")));
    }
    Ok(json!({ "files": [out.path("page_curve.csv"), meta], "page_time": curve.page_time, "slope_gap": curve.slope_gap }))
}

fn cmd_phase_diagram(cfg: &RunConfig) -> Result<Value, CliError> {
    if cfg.scan.mu_list.is_empty() || cfg.scan.mu_t_list.is_empty() {
        return Err(CliError::config("mu_list and mu_t_list must be non-empty"));
    }
    let rows = critical_mu_scan(&cfg.model, &cfg.scan.mu_list, &cfg.scan.mu_t_list, &cfg.saddle)?;
    let mu_c = estimate_critical_mu(&rows, cfg.scan.eps_gap);
    let out = Output::new(cfg, "phase-diagram", json!({}))?;
    let mut w = out.csv_writer("phase_diagram.csv")?;
    w.write_record(["mu", "slope_gap", "page_time"])?;
    for r in &rows {
        w.write_record([fmt(r.mu), fmt(r.slope_gap), r.page_time.map(fmt).unwrap_or_else(|| "nan".into())])?;
    }
    w.flush()?;
    let meta = out.sidecar("phase_diagram.json", json!({ "rows": rows, "eps_gap": cfg.scan.eps_gap, "mu_c": mu_c }))?;
    Ok(json!({ "files": [out.path("phase_diagram.csv"), meta], "mu_c": mu_c }))
}

fn cmd_largeq(cfg: &RunConfig) -> Result<Value, CliError> {
    let lp = LargeQParams::from_model(&cfg.model)?;
    let lq = &cfg.largeq;
    if lq.n_u == 0 || !(lq.u_max > 0.0) {
        return Err(CliError::config("largeq grid needs n_u > 0 and u_max > 0"));
    }
    let out = Output::new(cfg, "largeq", json!({}))?;
    let mut w = out.csv_writer("largeq_green.csv")?;
    w.write_record(["u", "u2", "equilibrium_g", "twist_g"])?;
    let h = lq.u_max / lq.n_u as f64 / lp.j_cal;
    for a in 1..=lq.n_u {
        for b in 1..=lq.n_u {
            let (u, u2) = (h * a as f64, h * b as f64);
            w.write_record([fmt(u), fmt(u2), fmt(equilibrium_g(u - u2, &lp)), fmt(twist_g(u, u2, &lp)?)])?;
        }
    }
    w.flush()?;
    let mut w = out.csv_writer("largeq_entropy.csv")?;
    w.write_record(["t", "S_over_N"])?;
    let n = cfg.model.n;
    for &t in &cfg.times {
        w.write_record([fmt(t), fmt(largeq_entropy(t, &lp, n) / n as f64)])?;
    }
    w.flush()?;
    let meta = out.sidecar("largeq.json", json!({ "b": lp.b, "a": lp.a, "j_cal": lp.j_cal, "mu_hat": lp.mu_hat }))?;
    Ok(json!({ "files": [out.path("largeq_green.csv"), out.path("largeq_entropy.csv"), meta] }))
}

const TRAJ_HEADER: [&str; 12] = ["t", "gamma", "gamma_err", "S", "S_err", "N", "q", "mu", "beta", "n_traj", "n_disorder", "seed"];

struct PurityRow {
    t: f64,
    gamma: f64,
    gamma_err: f64,
    n_traj: usize,
    n_disorder: usize,
}

fn write_purity_csv(out: &Output, name: &str, cfg: &RunConfig, rows: &[PurityRow]) -> Result<(), CliError> {
    let m = &cfg.model;
    let mut w = out.csv_writer(name)?;
    w.write_record(TRAJ_HEADER)?;
    for r in rows {
        w.write_record([
            fmt(r.t),
            fmt(r.gamma),
            fmt(r.gamma_err),
            fmt(-r.gamma.ln()),
            fmt(r.gamma_err / r.gamma),
            m.n.to_string(),
            m.q.to_string(),
            fmt(m.mu),
            fmt(m.beta),
            r.n_traj.to_string(),
            r.n_disorder.to_string(),
            cfg.trajectory.master_seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn coupling_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.trajectory.n_disorder).map(|r| disorder_seed(cfg.trajectory.master_seed, r)).collect()
}

fn seeds_json(cfg: &RunConfig) -> Value {
    json!({ "master_seed": cfg.trajectory.master_seed, "coupling_seeds": coupling_seeds(cfg) })
}

fn cmd_traj(cfg: &RunConfig, per_realization: bool) -> Result<Value, CliError> {
    let run = estimate_purity_detailed(&cfg.model, &cfg.times, &cfg.trajectory)?;
    let out = Output::new(cfg, "traj", seeds_json(cfg))?;
    let rows: Vec<PurityRow> = run
        .estimates
        .iter()
        .map(|e| PurityRow { t: e.t, gamma: e.gamma_mean, gamma_err: e.gamma_stderr, n_traj: e.n_traj, n_disorder: e.n_disorder })
        .collect();
    write_purity_csv(&out, "traj.csv", cfg, &rows)?;
    let mut files = vec![out.path("traj.csv")];
    if per_realization {
        let mut w = out.csv_writer("traj_realizations.csv")?;
        w.write_record(["realization", "coupling_seed", "t", "gamma", "gamma_err"])?;
        for (r, real) in run.realizations.iter().enumerate() {
            for (k, &t) in cfg.times.iter().enumerate() {
                w.write_record([r.to_string(), real.coupling_seed.to_string(), fmt(t), fmt(real.gamma[k]), fmt(real.stderr[k])])?;
            }
        }
        w.flush()?;
        files.push(out.path("traj_realizations.csv"));
    }
    files.push(out.sidecar("traj.json", serde_json::to_value(&run).unwrap())?);
    Ok(json!({ "files": files }))
}

fn cmd_oracle(cfg: &RunConfig) -> Result<Value, CliError> {
    let curve = exact_purity_curve(&cfg.model, &cfg.times, &coupling_seeds(cfg))?;
    let out = Output::new(cfg, "oracle", seeds_json(cfg))?;
    let rows: Vec<PurityRow> = curve
        .times
        .iter()
        .zip(&curve.gamma)
        .map(|(&t, &g)| PurityRow { t, gamma: g, gamma_err: 0.0, n_traj: 0, n_disorder: curve.coupling_seeds.len() })
        .collect();
    write_purity_csv(&out, "oracle.csv", cfg, &rows)?;
    let meta = out.sidecar("oracle.json", serde_json::to_value(&curve).unwrap())?;
    Ok(json!({ "files": [out.path("oracle.csv"), meta] }))
}

/// Entropy per site from a prior result, on the shared time list.
fn prior_entropy(p: &Prior, n: usize) -> Result<(Vec<f64>, Option<Vec<f64>>), CliError> {
    let bad = || CliError::config(format!("{}: unexpected result layout for {}", p.path.display(), p.subcommand));
    let nf = n as f64;
    let nums = |v: &Value| -> Option<Vec<f64>> { v.as_array()?.iter().map(|x| x.as_f64()).collect() };
    match p.subcommand.as_str() {
        "traj" => {
            let est = p.result["estimates"].as_array().ok_or_else(bad)?;
            let s = est.iter().map(|e| e["entropy"].as_f64().map(|x| x / nf)).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
            let err = est.iter().map(|e| e["entropy_stderr"].as_f64().map(|x| x / nf)).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
            Ok((s, Some(err)))
        }
        "oracle" => Ok((nums(&p.result["entropy"]).ok_or_else(bad)?.iter().map(|x| x / nf).collect(), None)),
        "page-curve" => {
            let times = nums(&p.result["times"]).ok_or_else(bad)?;
            let s_min = p.result["s_min"].as_array().ok_or_else(bad)?;
            let s: Vec<f64> = p
                .config
                .times
                .iter()
                .map(|t| {
                    let i = times.iter().position(|x| (x - t).abs() < 1e-12)?;
                    Some(s_min[i].as_f64().map_or(f64::NAN, |x| x / nf))
                })
                .collect::<Option<_>>()
                .ok_or_else(bad)?;
            Ok((s, None))
        }
        other => Err(CliError::config(format!("{}: cannot compare {other:?} output", p.path.display()))),
    }
}

fn cmd_compare(cfg: &RunConfig, inputs: &[PathBuf], skip_traj: bool) -> Result<Value, CliError> {
    let priors: Vec<Prior> = inputs.iter().map(read_prior).collect::<Result<_, _>>()?;
    let mine = json!({ "model": cfg.model, "times": cfg.times });
    for p in &priors {
        let theirs = json!({ "model": p.config.model, "times": p.config.times });
        let mut keys = Vec::new();
        differing_keys(&mine, &theirs, "", &mut keys);
        if !keys.is_empty() {
            return Err(CliError::config(format!(
                "{} was run with different parameters; differing keys: {}",
                p.path.display(),
                keys.join(", ")
            )));
        }
    }
    let n = cfg.model.n;
    let nf = n as f64;
    let nt = cfg.times.len();
    let find = |sub: &str| priors.iter().find(|p| p.subcommand == sub);

    let (traj, traj_err) = match find("traj") {
        Some(p) => {
            let (s, e) = prior_entropy(p, n)?;
            (Some(s), e)
        }
        None if !skip_traj => {
            let run = estimate_purity_detailed(&cfg.model, &cfg.times, &cfg.trajectory)?;
            (
                Some(run.estimates.iter().map(|e| e.entropy / nf).collect()),
                Some(run.estimates.iter().map(|e| e.entropy_stderr / nf).collect()),
            )
        }
        None => (None, None),
    };
    let oracle = match find("oracle") {
        Some(p) => Some(prior_entropy(p, n)?.0),
        None if n <= 8 => Some(exact_purity_curve(&cfg.model, &cfg.times, &coupling_seeds(cfg))?.entropy.iter().map(|s| s / nf).collect()),
        None => None,
    };
    let saddle: Vec<f64> = match find("page-curve") {
        Some(p) => prior_entropy(p, n)?.0,
        None => {
            let c = page_curve(&cfg.model, &cfg.times, &cfg.saddle)?;
            cfg.times
                .iter()
                .map(|t| {
                    let i = c.times.iter().position(|x| (x - t).abs() < 1e-12).expect("requested time present");
                    c.s_min[i].map_or(f64::NAN, |s| s / nf)
                })
                .collect()
        }
    };
    let largeq: Option<Vec<f64>> = match LargeQParams::from_model(&cfg.model) {
        Ok(lp) if cfg.model.beta == 0.0 => Some(cfg.times.iter().map(|&t| largeq_entropy(t, &lp, n) / nf).collect()),
        _ => None,
    };

    let col = |v: &Option<Vec<f64>>, k: usize| v.as_ref().map_or(f64::NAN, |x| x[k]);
    let out = Output::new(cfg, "compare", seeds_json(cfg))?;
    let mut w = out.csv_writer("compare.csv")?;
    w.write_record([
        "t", "S_traj", "S_traj_err", "S_oracle", "S_saddle", "S_largeq", "traj_minus_oracle", "traj_minus_saddle", "traj_minus_largeq",
        "saddle_minus_largeq",
    ])?;
    let mut max = [0.0f64; 4];
    for k in 0..nt {
        let (st, so, ss, sl) = (col(&traj, k), col(&oracle, k), saddle[k], col(&largeq, k));
        let d = [st - so, st - ss, st - sl, ss - sl];
        for (m, x) in max.iter_mut().zip(d) {
            if x.is_finite() {
                *m = m.max(x.abs());
            }
        }
        let mut rec = vec![fmt(cfg.times[k]), fmt(st), fmt(col(&traj_err, k)), fmt(so), fmt(ss), fmt(sl)];
        rec.extend(d.iter().map(|&x| fmt(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let summary = json!({
        "max_abs_traj_minus_oracle": traj.as_ref().and(oracle.as_ref()).map(|_| max[0]),
        "max_abs_traj_minus_saddle": traj.as_ref().map(|_| max[1]),
        "max_abs_traj_minus_largeq": traj.as_ref().and(largeq.as_ref()).map(|_| max[2]),
        "max_abs_saddle_minus_largeq": largeq.as_ref().map(|_| max[3]),
        "inputs": inputs,
    });
    let meta = out.sidecar("compare.json", summary.clone())?;
    Ok(json!({ "files": [out.path("compare.csv"), meta], "summary": summary }))
}

fn cmd_green_dump(cfg: &RunConfig) -> Result<Value, CliError> {
    let g = &cfg.green;
    let grid = ContourGrid::new(&cfg.model, g.t, g.n_steps)?;
    let sol = solve_saddle(&grid, &cfg.model, g.seed_class, &cfg.saddle.solver)?;
    let out = Output::new(cfg, "green-dump", json!({}))?;
    let mut files = Vec::new();
    for (name, imag) in [("green_re.csv", false), ("green_im.csv", true)] {
        let mut f = out.comment_file(name)?;
        sol.g.write_csv(&mut f, imag)?;
        files.push(out.path(name));
    }
    let mut diff = Value::Null;
    if let Some(regime) = g.regime {
        let c = compare_green(&cfg.model, g.t, g.n_steps, regime, g.twist_window, &cfg.saddle.solver)?;
        let mut f = out.comment_file("green_diff.csv")?;
        c.write_csv(&mut f)?;
        files.push(out.path("green_diff.csv"));
        diff = json!({ "regime": regime, "max_diff": c.max_diff(), "by_component": c.max_by_component(), "converged": c.converged });
    }
    let meta = json!({
        "grid": grid,
        "seed_class": sol.seed_class,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "action": [sol.action.re, sol.action.im],
        "history": sol.history,
        "large_q": diff,
    });
    files.push(out.sidecar("green.json", meta)?);
    if !sol.converged {
        return Err(CliError::numerical(format!("saddle did not converge (residual {:e}); outputs written", sol.residual)));
    }
    Ok(json!({ "files": files }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{}", json!({ "ok": true, "result": v }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = if e.numerical { "numerical" } else { "config" };
            eprintln!("{}", json!({ "ok": false, "error": { "kind": kind, "message": e.message, "exit_code": e.exit_code() } }));
            ExitCode::from(e.exit_code())
        }
    }
}
