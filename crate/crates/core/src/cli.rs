//! The `mfc` command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::control::optimize;
use crate::dynamics::{
    convergence_study, lipschitz_constant_l, simulate_coupled, simulate_single, support_bound_r, write_convergence_csv,
    write_curve_csv, ParticleState, StudySetup, Trajectory,
};
use crate::error::{Error, Result};
use crate::kernels::BoundFunction;
use crate::measures::DiscreteMeasure;
use crate::scenario::{KernelCheck, Scenario};
use crate::wasserstein::wasserstein_p;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mfc", version, about = "Mean-field control simulator and optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the particle system and write trajectory CSVs plus a summary.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Optimize the control and write the result JSON and trajectories.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Check every kernel of a scenario against its declared bound.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Wasserstein distance between two measure files; prints JSON.
    Wasserstein {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Where to write the optimal plan.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean-field convergence table.
    Converge {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "Ns", value_delimiter = ',')]
        ns: Option<Vec<usize>>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Simulation { .. } | Error::Optimizer(_) | Error::Solver(_) => EXIT_SIMULATION,
        _ => EXIT_VALIDATION,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Messages go to `stdout`/`stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(cli.command, &mut buf));
    let _ = stdout.write_all(&buf);
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MFC_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Validation(format!("MFC_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Validation(e.to_string()))
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s = s.with_seed(seed);
        if let Some(o) = s.optimizer.as_mut() {
            o.seed = seed;
        }
    }
    Ok(s)
}

fn dispatch(cmd: Command, stdout: &mut Vec<u8>) -> Result<i32> {
    match cmd {
        Command::Simulate { scenario, out, seed_override } => {
            let s = load(&scenario, seed_override)?;
            s.require_admissible()?;
            cmd_simulate(&s, &out)?;
            Ok(0)
        }
        Command::Optimize { scenario, out, seed_override } => {
            let s = load(&scenario, seed_override)?;
            s.require_admissible()?;
            cmd_optimize(&s, &out)?;
            Ok(0)
        }
        Command::Validate { scenario, seed_override } => {
            let s = load(&scenario, seed_override)?;
            let checks = s.check_kernels()?;
            let ok = checks.iter().all(|c| c.report.ok);
            writeln!(stdout, "{}", serde_json::to_string_pretty(&ValidationReport { ok, kernels: checks })?)?;
            Ok(if ok { 0 } else { EXIT_VALIDATION })
        }
        Command::Wasserstein { a, b, p, out } => {
            let mu = read_measure(&a)?;
            let nu = read_measure(&b)?;
            let t = wasserstein_p(&mu, &nu, p)?;
            writeln!(stdout, "{}", json!({ "distance": t.distance, "cost": t.cost, "p": t.p }))?;
            if let Some(path) = out {
                write_atomic(&path, |w| Ok(serde_json::to_writer_pretty(w, &t.export())?))?;
            }
            Ok(0)
        }
        Command::Converge { scenario, out, ns, replicates, seed_override } => {
            let s = load(&scenario, seed_override)?;
            s.require_admissible()?;
            cmd_converge(&s, &out, ns, replicates)?;
            Ok(0)
        }
    }
}

#[derive(Serialize)]
struct ValidationReport {
    ok: bool,
    kernels: Vec<KernelCheck>,
}

fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct PopulationSummary {
    name: &'static str,
    particles: usize,
    initial_radius: f64,
    max_radius: f64,
    max_step_displacement: f64,
    clamp_events: usize,
}

impl PopulationSummary {
    fn new(name: &'static str, t: &Trajectory) -> Self {
        Self {
            name,
            particles: t.weights.len(),
            initial_radius: radius(&t.positions[0], t.dim),
            max_radius: t.max_radius(),
            max_step_displacement: t.max_step_displacement(),
            clamp_events: t.clamp_events,
        }
    }
}

fn radius(flat: &[f64], dim: usize) -> f64 {
    flat.chunks(dim.max(1)).map(crate::measures::norm).fold(0.0, f64::max)
}

fn cmd_simulate(s: &Scenario, out: &Path) -> Result<()> {
    let fields = s.fields()?;
    let cfg = s.sim_config();
    let rho0 = ParticleState::from_measure(&s.rho0()?);
    let (trajs, ell): (Vec<(&'static str, Trajectory)>, BoundFunction) = match s.nu0()? {
        Some(nu) => {
            let nu0 = ParticleState::from_measure(&nu);
            let (rho, nu) =
                simulate_coupled(&rho0, &nu0, &fields.k1, &fields.k2, &fields.h1, &fields.h2, &fields.f, s.domain.as_ref(), &cfg)?;
            let ell_rho = fields.k1.ell().add(fields.h1.ell());
            let ell_nu = fields.k2.ell().add(fields.h2.ell()).add(fields.f.ell());
            (vec![("rho", rho), ("nu", nu)], ell_rho.max(&ell_nu))
        }
        None => {
            let rho = simulate_single(&rho0, &fields.k1, &fields.f, s.domain.as_ref(), &cfg)?;
            (vec![("rho", rho)], fields.k1.ell().add(fields.f.ell()))
        }
    };
    let pops: Vec<PopulationSummary> = trajs.iter().map(|(n, t)| PopulationSummary::new(n, t)).collect();
    let delta_b = pops.iter().map(|p| p.initial_radius).fold(0.0, f64::max);
    let realized = pops.iter().map(|p| p.max_radius).fold(0.0, f64::max);
    let r = support_bound_r(delta_b, &ell, s.horizon);
    let summary = json!({
        "seed": s.seed,
        "horizon": s.horizon,
        "dt": cfg.step(),
        "steps": cfg.steps(),
        "integrator": cfg.integrator,
        "free_space": s.domain.is_none(),
        "delta_b": delta_b,
        "ell_sup": ell.sup(s.horizon),
        "ell_integral": ell.integral(s.horizon),
        "support_bound_R": r,
        "realized_radius": realized,
        "radius_within_bound": realized <= r,
        "time_lipschitz_L": lipschitz_constant_l(r, ell.sup(s.horizon)),
        "populations": pops,
    });
    for (name, t) in &trajs {
        write_atomic(&out.join(format!("{name}.csv")), |w| t.write_csv(w))?;
    }
    write_atomic(&out.join("summary.json"), |w| Ok(serde_json::to_writer_pretty(w, &summary)?))
}

fn cmd_optimize(s: &Scenario, out: &Path) -> Result<()> {
    let problem = s.control_problem()?;
    let template = s.decision_template()?;
    let result = optimize(&problem, &template, &s.optimizer_config())?;
    result.best.check().map_err(|e| Error::Optimizer(format!("returned control is not admissible: {e}")))?;
    write_atomic(&out.join("rho.csv"), |w| write_curve_csv(&result.rho, w))?;
    if !result.nu.first().is_empty() {
        write_atomic(&out.join("nu.csv"), |w| write_curve_csv(&result.nu, w))?;
    }
    write_atomic(&out.join("result.json"), |w| Ok(serde_json::to_writer_pretty(w, &result.report())?))
}

fn cmd_converge(s: &Scenario, out: &Path, ns: Option<Vec<usize>>, replicates: Option<usize>) -> Result<()> {
    let spec = s.convergence.as_ref().ok_or_else(|| Error::Validation("scenario has no convergence section".into()))?;
    let ns = ns.unwrap_or_else(|| spec.ns.clone());
    let replicates = replicates.unwrap_or(spec.replicates);
    if ns.is_empty() || ns.contains(&0) || replicates == 0 {
        return Err(Error::Validation("need nonempty positive Ns and replicates ≥ 1".into()));
    }
    let fields = s.fields()?;
    let cfg = s.sim_config();
    let setup = StudySetup {
        kernel: &fields.k1,
        external: &fields.f,
        domain: s.domain.as_ref(),
        config: &cfg,
        stride: s.sim.stride,
        seed: s.seed,
    };
    let sampler = &spec.sampler;
    let rows = convergence_study(|n, rng| sampler.sample(Some(n), rng), &ns, replicates, &setup)?;
    write_atomic(out, |w| write_convergence_csv(&rows, w))
}
