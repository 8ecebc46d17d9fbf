use crate::config::ScenarioConfig;
use crate::{exit, CliError};
use ccm_adapt::geometry::{metric_params, GeodesicSolver};
use ccm_adapt::sim::{self, Scenario, SimStatus, TrajectoryLog};
use ccm_adapt::verify::{self, CertificationReport};
use ccm_adapt::{Execution, Vector};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOptions {
    pub out: Option<PathBuf>,
    pub svg: bool,
    pub dump_effective_config: bool,
    pub quiet: bool,
}

impl GlobalOptions {
    fn out_dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Parse `1,2,3`, `[1, 2, 3]` or `1 2 3`.
pub fn parse_vector(what: &str, text: &str) -> Result<Vector, CliError> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    let values = inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|e| CliError::Parse {
                what: what.to_string(),
                reason: format!("`{s}`: {e}"),
            })
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    Ok(Vector::from_vec(values))
}

/// Print the effective configuration when requested. Returns true if the
/// caller should stop there.
fn dump(cfg: &ScenarioConfig, opts: &GlobalOptions) -> Result<bool, CliError> {
    if opts.dump_effective_config {
        print!("{}", cfg.to_toml_string()?);
    }
    Ok(opts.dump_effective_config)
}

pub fn status_code(log: &TrajectoryLog) -> i32 {
    match log.status {
        SimStatus::Completed => exit::OK,
        SimStatus::Diverged { .. } => exit::DIVERGED,
        SimStatus::Failed { .. } => exit::ERROR,
    }
}

/// Paths of the artifacts written for one run.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
    pub plot_json: Option<PathBuf>,
}

pub fn write_artifacts(
    log: &TrajectoryLog,
    name: &str,
    dir: &Path,
    svg: bool,
    plot_json: bool,
) -> Result<Artifacts, CliError> {
    let csv = dir.join(format!("{name}.csv"));
    let mut w = create(&csv)?;
    sim::write_csv(log, &mut w).map_err(io_at(&csv))?;
    w.flush().map_err(io_at(&csv))?;
    let svg = if svg {
        let path = dir.join(format!("{name}.svg"));
        let mut w = create(&path)?;
        sim::write_svg(log, &mut w).map_err(io_at(&path))?;
        w.flush().map_err(io_at(&path))?;
        Some(path)
    } else {
        None
    };
    let plot_json = if plot_json {
        let path = dir.join(format!("{name}_plot.json"));
        let mut w = create(&path)?;
        sim::write_plot_json(log, &mut w).map_err(io_at(&path))?;
        w.flush().map_err(io_at(&path))?;
        Some(path)
    } else {
        None
    };
    Ok(Artifacts { csv, svg, plot_json })
}

pub fn summary(name: &str, log: &TrajectoryLog) -> String {
    let status = match &log.status {
        SimStatus::Completed => "completed".to_string(),
        SimStatus::Diverged { t, norm } => format!("diverged at t = {t:.3} (|x| = {norm:.3e})"),
        SimStatus::Failed { t, message } => format!("failed at t = {t:.3}: {message}"),
    };
    let final_norm = log.final_row().map_or(f64::NAN, |r| (&r.x - &r.x_d).norm());
    let unconverged = log.rows.iter().filter(|r| !r.geodesic_converged).count();
    format!(
        "{name}: {status}; {} rows, peak error {:.4}, final error {:.3e}, {unconverged} unconverged geodesics",
        log.rows.len(),
        log.peak_error(),
        final_norm
    )
}

pub fn simulate(path: &Path, overrides: &[String], opts: &GlobalOptions) -> Result<i32, CliError> {
    let cfg = ScenarioConfig::load(path, overrides)?;
    if dump(&cfg, opts)? {
        return Ok(exit::OK);
    }
    let scenario = cfg.build()?;
    log::info!("simulating {} for {} s", scenario.name, scenario.sim.t_final);
    let log = scenario.run()?;
    let dir = opts.out_dir(&cfg);
    let art = write_artifacts(&log, &cfg.name, &dir, opts.svg || cfg.output.svg, cfg.output.plot_json)?;
    opts.say(summary(&cfg.name, &log));
    opts.say(format!("wrote {}", art.csv.display()));
    Ok(status_code(&log))
}

pub fn run_verification(cfg: &ScenarioConfig) -> Result<CertificationReport, CliError> {
    let model = cfg.build_model()?;
    let sys = model.system();
    let metric = cfg.build_metric(sys.state_dim(), sys.extended_dim())?;
    let grid = cfg.verify_grid(sys.state_dim(), sys.extended_dim())?;
    let samples = cfg.matched_samples(sys.matched_dim())?;
    Ok(verify::certify(sys, metric.as_ref(), &grid, cfg.verify_lambda(), &samples)?)
}

pub fn verify_metric(path: &Path, overrides: &[String], opts: &GlobalOptions) -> Result<i32, CliError> {
    let cfg = ScenarioConfig::load(path, overrides)?;
    if dump(&cfg, opts)? {
        return Ok(exit::OK);
    }
    let report = run_verification(&cfg)?;
    opts.say(report.to_string());
    let json = opts.out_dir(&cfg).join(format!("{}_verify.json", cfg.name));
    let mut w = create(&json)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| io_at(&json)(e.into()))?;
    w.flush().map_err(io_at(&json))?;
    if !report.pass {
        let worst = &report.contraction.worst_point;
        eprintln!(
            "verification failed; worst contraction point x = {:?}, theta = {:?}",
            worst.x, worst.theta
        );
    }
    Ok(if report.pass { exit::OK } else { exit::VERIFY_FAILED })
}

pub fn geodesic(
    path: &Path,
    overrides: &[String],
    p: &str,
    q: &str,
    theta: Option<&str>,
    opts: &GlobalOptions,
) -> Result<i32, CliError> {
    let cfg = ScenarioConfig::load(path, overrides)?;
    if dump(&cfg, opts)? {
        return Ok(exit::OK);
    }
    let model = cfg.build_model()?;
    let sys = model.system();
    let metric = cfg.build_metric(sys.state_dim(), sys.extended_dim())?;
    let p = parse_vector("p", p)?;
    let q = parse_vector("q", q)?;
    let theta = match theta {
        Some(t) => parse_vector("theta", t)?,
        None => Vector::from_vec(cfg.simulation.theta0_em.clone()),
    };
    let theta = metric_params(metric.as_ref(), &theta);
    let solver = GeodesicSolver::new(cfg.controller.solver)?;
    let geo = solver.solve(&p, &q, metric.as_ref(), &theta, None)?;
    let length = solver.length(&geo, metric.as_ref(), &theta)?;
    let speed = solver.speed_residual(&geo, metric.as_ref(), &theta)?;
    println!("energy          {:.12e}", geo.energy);
    println!("length          {length:.12e}");
    println!("converged       {}", geo.converged);
    println!("iterations      {}", geo.iterations);
    println!("gradient norm   {:.3e}", geo.gradient_norm);
    println!("speed residual  {speed:.3e}");
    if !opts.quiet {
        println!("nodes (s, gamma(s))");
        for (j, s) in geo.abscissae.iter().enumerate() {
            let col: Vec<String> = geo.nodes.column(j).iter().map(|v| format!("{v:.9}")).collect();
            println!("  {s:.6}  {}", col.join(" "));
        }
    }
    if let Some(dir) = &opts.out {
        let json = dir.join("geodesic.json");
        let mut w = create(&json)?;
        serde_json::to_writer_pretty(&mut w, &geo).map_err(|e| io_at(&json)(e.into()))?;
        w.flush().map_err(io_at(&json))?;
    }
    if geo.converged {
        Ok(exit::OK)
    } else {
        eprintln!(
            "geodesic optimizer stopped after {} iterations with gradient norm {:.3e}",
            geo.iterations, geo.gradient_norm
        );
        Ok(exit::OPTIMIZER_DIVERGED)
    }
}

/// Run several scenario files concurrently, one scenario per worker.
/// The exit code is the most severe one over all scenarios.
pub fn batch(paths: &[PathBuf], overrides: &[String], opts: &GlobalOptions) -> Result<i32, CliError> {
    let configs = paths
        .iter()
        .map(|p| ScenarioConfig::load(p, overrides))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, c) in configs.iter().enumerate() {
        if configs[..i].iter().any(|o| o.name == c.name) {
            return Err(CliError::Config(format!("batch: duplicate scenario name `{}`", c.name)));
        }
    }
    if opts.dump_effective_config {
        for c in &configs {
            print!("{}", c.to_toml_string()?);
            println!();
        }
        return Ok(exit::OK);
    }
    let scenarios = configs.iter().map(ScenarioConfig::build).collect::<Result<Vec<Scenario>, _>>()?;
    let results = sim::run_batch(Execution::Parallel, &scenarios);
    let mut code = exit::OK;
    for (cfg, result) in configs.iter().zip(results) {
        let this = match result {
            Ok(log) => {
                let dir = opts.out_dir(cfg);
                write_artifacts(&log, &cfg.name, &dir, opts.svg || cfg.output.svg, cfg.output.plot_json)?;
                opts.say(summary(&cfg.name, &log));
                status_code(&log)
            }
            Err(e) => {
                eprintln!("{}: {e}", cfg.name);
                exit::ERROR
            }
        };
        code = worse(code, this);
    }
    Ok(code)
}

// errors outrank divergence, which outranks success
fn worse(a: i32, b: i32) -> i32 {
    let rank = |c: i32| match c {
        exit::OK => 0,
        exit::DIVERGED => 1,
        _ => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}
