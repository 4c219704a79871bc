use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bvmfg::hjb::{convexity_margin, hjb_min_nt, interior_convexity_margin};
use bvmfg::measure::{flow_regularity, SpaceTimeGrid};
use bvmfg::mfg::{
    aggregate_value, default_initial_flow, solve_mfg, theta_sweep, uniform_initial_flow, EquilibriumResult,
    ThetaSweepResult,
};
use bvmfg::model::{check_lipschitz, check_monotonicity, ModelSpec};
use bvmfg::nplayer::{coupling_error, fv_gap, ne_gap, GapReport, SimulationConfig};
use log::info;
use serde_json::json;

use crate::config::{InitKind, RunConfig};
use crate::error::CliError;
use crate::manifest::{hash_file, sha256_hex, RunManifest, StageTiming, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveMfg,
    SweepTheta,
    SweepN,
    FvGap,
    CheckAssumptions,
    ReproduceAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveMfg => "solve-mfg",
            Command::SweepTheta => "sweep-theta",
            Command::SweepN => "sweep-n",
            Command::FvGap => "fv-gap",
            Command::CheckAssumptions => "check-assumptions",
            Command::ReproduceAll => "reproduce-all",
        }
    }
}

/// Output directory bookkeeping: every file written is hashed into the
/// manifest, every stage timed.
pub struct Session {
    out: PathBuf,
    files: Vec<String>,
    timings: Vec<StageTiming>,
    summary: String,
    /// First equilibrium that failed to converge, if any.
    unconverged: Option<CliError>,
}

impl Session {
    pub fn new(out: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out)?;
        Ok(Self {
            out: out.to_path_buf(),
            files: Vec::new(),
            timings: Vec::new(),
            summary: String::new(),
            unconverged: None,
        })
    }

    fn write(&mut self, rel: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>) -> Result<(), CliError> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn write_json(&mut self, rel: &str, value: &serde_json::Value) -> Result<(), CliError> {
        self.write(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Other(e.to_string()))?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        info!("{stage}: started");
        let t0 = Instant::now();
        let out = f();
        let seconds = t0.elapsed().as_secs_f64();
        info!("{stage}: {seconds:.2} s");
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
        out
    }

    fn section(&mut self, title: &str, body: &str) {
        let _ = writeln!(self.summary, "== {title} ==\n{body}");
    }

    fn note_convergence(&mut self, stage: &str, eq: &EquilibriumResult) {
        if !eq.converged && self.unconverged.is_none() {
            self.unconverged = Some(CliError::NotConverged {
                stage: stage.to_string(),
                iterations: eq.iterations,
                residual: eq.final_residual(),
            });
        }
    }

    /// Write `summary.txt` and the manifest; report non-convergence last
    /// so every artifact is on disk before the process exits.
    pub fn finish(mut self, command: Command, cfg: &RunConfig, threads: usize) -> Result<(), CliError> {
        let summary = std::mem::take(&mut self.summary);
        self.write("summary.txt", |w| Ok(w.write_all(summary.as_bytes())?))?;
        let outputs = self
            .files
            .iter()
            .map(|f| hash_file(&self.out, f))
            .collect::<std::io::Result<Vec<_>>>()?;
        let status = match &self.unconverged {
            None => "ok".to_string(),
            Some(e) => e.to_string(),
        };
        let manifest = RunManifest {
            software: "bvmfg".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.name().into(),
            seed: cfg.experiment.seed,
            threads,
            config: cfg.echo(),
            config_sha256: sha256_hex(cfg.to_text().as_bytes()),
            outputs,
            timings: self.timings,
            status,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))?;
        fs::write(self.out.join(MANIFEST_FILE), text + "\n")?;
        match self.unconverged {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn grid_for(model: &ModelSpec, cfg: &RunConfig, nx: usize) -> Result<SpaceTimeGrid, CliError> {
    let coarse = bvmfg::mfg::model_grid(model, nx, 2)?;
    let nt = match cfg.nt {
        Some(nt) => nt,
        None => hjb_min_nt(model, model.require_theta()?, &coarse),
    };
    Ok(bvmfg::mfg::model_grid(model, nx, nt)?)
}

fn equilibrium(cfg: &RunConfig, model: &ModelSpec, s: &mut Session, stage: &str) -> Result<EquilibriumResult, CliError> {
    let grid = grid_for(model, cfg, cfg.nx)?;
    let init = match cfg.init {
        InitKind::Default => default_initial_flow(model, &grid)?,
        InitKind::Uniform => uniform_initial_flow(&grid)?,
    };
    let eq = s.timed(stage, || solve_mfg(model, &cfg.solver, init))?;
    s.note_convergence(stage, &eq);
    Ok(eq)
}

fn residual_lines(eq: &EquilibriumResult) -> String {
    eq.residual_history
        .iter()
        .enumerate()
        .map(|(i, r)| format!("  {:>3}  {r:.6e}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn write_equilibrium(cfg: &RunConfig, model: &ModelSpec, eq: &EquilibriumResult, s: &mut Session, dir: &str) -> Result<(), CliError> {
    let target = s.out.join(dir);
    for name in eq.write_dir(&target)? {
        s.files.push(format!("{dir}{name}"));
    }
    s.write(&format!("{dir}residuals.csv"), |w| {
        writeln!(w, "iteration,residual")?;
        for (i, r) in eq.residual_history.iter().enumerate() {
            writeln!(w, "{},{r:e}", i + 1)?;
        }
        Ok(())
    })?;
    let grid = eq.grid();
    let mu_s = eq.mu_star.slice(0);
    let meta = json!({
        "model": model.name(),
        "grid": {
            "x_min": grid.space().x_min(),
            "x_max": grid.space().x_max(),
            "nx": grid.nx(),
            "t_start": grid.time().t_start(),
            "t_end": grid.time().t_end(),
            "nt": grid.nt(),
        },
        "converged": eq.converged,
        "iterations": eq.iterations,
        "final_residual": eq.final_residual(),
        "residual_history": eq.residual_history,
        "aggregate_value": aggregate_value(&eq.value, mu_s)?,
        "convexity_margin": convexity_margin(&eq.value),
        "interior_convexity_margin": interior_convexity_margin(&eq.value, 0.5),
        "flow_regularity": flow_regularity(&eq.mu_star),
        "config": cfg.echo(),
        "config_sha256": sha256_hex(cfg.to_text().as_bytes()),
    });
    s.write_json(&format!("{dir}meta.json"), &meta)
}

fn run_solve(cfg: &RunConfig, s: &mut Session, dir: &str) -> Result<(), CliError> {
    let model = cfg.model()?;
    let eq = equilibrium(cfg, &model, s, "solve_mfg")?;
    write_equilibrium(cfg, &model, &eq, s, dir)?;
    s.section(
        "residuals",
        &format!(
            "converged = {} after {} iterations (tol {:e})\n{}",
            eq.converged,
            eq.iterations,
            cfg.solver.tol,
            residual_lines(&eq)
        ),
    );
    Ok(())
}

fn sweep(cfg: &RunConfig, model: &ModelSpec, nx: usize, s: &mut Session) -> Result<ThetaSweepResult, CliError> {
    let grid = bvmfg::mfg::model_grid(model, nx, cfg.nt.unwrap_or(2))?;
    let probes: Vec<(f64, f64)> = cfg.experiment.probes.iter().map(|&x| (model.start(), x)).collect();
    let sw = s.timed("theta_sweep", || theta_sweep(model, &cfg.experiment.thetas, grid, &probes, &cfg.solver))?;
    s.note_convergence("theta_sweep reference", &sw.reference);
    Ok(sw)
}

fn write_sweep(sw: &ThetaSweepResult, s: &mut Session, rel: &str) -> Result<(), CliError> {
    s.write(rel, |w| {
        write!(w, "theta,epsilon_theta")?;
        for (t, x) in &sw.probes {
            write!(w, ",v({t};{x})")?;
        }
        writeln!(w)?;
        for (i, theta) in sw.thetas.iter().enumerate() {
            write!(w, "{theta:e},{:e}", sw.epsilon_theta[i])?;
            for v in &sw.values_at_probe[i] {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "# decay_ratios = {}", sw.decay_ratios().iter().map(|r| format!("{r:e}")).collect::<Vec<_>>().join(" "))?;
        writeln!(w, "# max_monotonicity_violation = {:e}", sw.max_monotonicity_violation())?;
        writeln!(w, "# nt = {}", sw.reference.grid().nt())?;
        Ok(())
    })?;
    let mut body = String::from("  theta         epsilon_theta   ratio\n");
    let ratios = sw.decay_ratios();
    for (i, theta) in sw.thetas.iter().enumerate() {
        let ratio = if i == 0 { String::from("-") } else { format!("{:.3}", ratios[i - 1]) };
        let _ = writeln!(body, "  {theta:<12}  {:<14.6e}  {ratio}", sw.epsilon_theta[i]);
    }
    let _ = write!(body, "  max monotonicity violation = {:e}", sw.max_monotonicity_violation());
    s.section("epsilon_theta", &body);
    Ok(())
}

fn run_sweep_theta(cfg: &RunConfig, s: &mut Session, dir: &str) -> Result<(), CliError> {
    let model = cfg.model()?;
    let sw = sweep(cfg, &model, cfg.nx, s)?;
    write_sweep(&sw, s, &format!("{dir}theta_sweep.csv"))
}

fn sim_config(cfg: &RunConfig, replications: usize, substeps: usize) -> SimulationConfig {
    SimulationConfig {
        n_players: 1,
        n_replications: replications,
        seed: cfg.experiment.seed,
        substeps,
    }
}

/// Runs the coupling and Nash-gap experiments; returns the fitted `C`.
fn run_sweep_n(cfg: &RunConfig, s: &mut Session, dir: &str) -> Result<f64, CliError> {
    let model = cfg.model()?;
    let e = &cfg.experiment;
    let eq = equilibrium(cfg, &model, s, "solve_mfg")?;
    write_equilibrium(cfg, &model, &eq, s, &format!("{dir}equilibrium/"))?;
    let sim = sim_config(cfg, e.replications, e.substeps);
    let coupling = s.timed("coupling_error", || coupling_error(&model, &eq, &e.n_values, &sim))?;
    let gaps = s.timed("ne_gap", || ne_gap(&model, &eq, &e.n_values, &e.deviations, &sim))?;
    let constant = gaps.envelope_constant;
    let report = GapReport {
        n_values: e.n_values.clone(),
        coupling: Some(coupling),
        gaps: Some(gaps),
    };
    s.write(&format!("{dir}gap_report.csv"), |w| Ok(report.write_csv(w)?))?;
    s.write_json(
        &format!("{dir}gap_report.json"),
        &serde_json::to_value(&report).map_err(|e| CliError::Other(e.to_string()))?,
    )?;

    let c = report.coupling.as_ref().expect("computed above");
    let g = report.gaps.as_ref().expect("computed above");
    let mut body = String::from("  N      coupling_err_sq   gap (max benefit)        envelope\n");
    for i in 0..report.n_values.len() {
        let _ = writeln!(
            body,
            "  {:<6} {:<17.6e} {:>12.4e} ± {:<9.2e} {:.4e}",
            report.n_values[i], c.rows[i].err_sq.mean, g.rows[i].gap.mean, g.rows[i].gap.se, g.rows[i].envelope.mean
        );
    }
    s.section("epsilon_N", body.trim_end());
    let fmt_opt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    s.section(
        "slopes",
        &format!(
            "  slope_coupling = {}\n  slope_gap_envelope = {}\n  envelope_constant C = {:.6e}\n  worst robust margin (dev - eq + 3 se) = {:.4e}\n  worst domination excess = {:.4e}",
            fmt_opt(report.slope_coupling()),
            fmt_opt(report.slope_gap_envelope()),
            constant,
            g.worst_robust_margin(),
            g.worst_domination_excess()
        ),
    );
    s.section("residuals", &residual_lines(&eq));
    Ok(constant)
}

fn run_fv_gap(cfg: &RunConfig, s: &mut Session, dir: &str, constant: Option<f64>) -> Result<(), CliError> {
    let model = cfg.model()?;
    let e = &cfg.experiment;
    let constant = match constant.or(e.gap_constant) {
        Some(c) => c,
        None => {
            let eq = equilibrium(cfg, &model, s, "solve_mfg")?;
            let sim = sim_config(cfg, e.replications, e.substeps);
            s.timed("ne_gap", || ne_gap(&model, &eq, &e.n_values, &e.deviations, &sim))?
                .envelope_constant
        }
    };
    let sw = sweep(cfg, &model, e.fv_nx, s)?;
    write_sweep(&sw, s, &format!("{dir}theta_sweep.csv"))?;
    let sim = sim_config(cfg, e.fv_replications, e.fv_substeps);
    let report = s.timed("fv_gap", || fv_gap(&model, &sw, &e.fv_n_values, &e.deviations, constant, &sim))?;
    s.write(&format!("{dir}fv_gap.csv"), |w| Ok(report.write_csv(w)?))?;
    s.write_json(
        &format!("{dir}fv_gap.json"),
        &serde_json::to_value(&report).map_err(|e| CliError::Other(e.to_string()))?,
    )?;
    let mut body = String::from("  theta     N      gap          se          budget\n");
    for r in &report.rows {
        let _ = writeln!(body, "  {:<9} {:<6} {:<12.4e} {:<11.2e} {:.4e}", r.theta, r.n, r.gap.mean, r.gap.se, r.budget);
    }
    let _ = write!(body, "  worst gap - budget - 3 se = {:.4e}", report.worst_excess());
    s.section("fv budget", &body);
    Ok(())
}

fn run_check_assumptions(cfg: &RunConfig, s: &mut Session, dir: &str) -> Result<(), CliError> {
    let model = cfg.model()?;
    let e = &cfg.experiment;
    let report = s.timed("check_assumptions", || {
        check_lipschitz(&model, model.domain(), e.assumption_samples, e.seed)
            .merge(check_monotonicity(&model, e.assumption_samples, e.seed.wrapping_add(1)))
    });
    let lip = report.lipschitz_estimates.clone();
    s.write_json(
        &format!("{dir}assumptions.json"),
        &serde_json::to_value(&report).map_err(|e| CliError::Other(e.to_string()))?,
    )?;
    let mut body = String::new();
    if let Some(l) = lip {
        let _ = writeln!(
            body,
            "  Lipschitz quotients: b0 {:.4}, f0 {:.4}, b {:.4}, f {:.4}; sup|b0| {:.4} (declared c1 {})",
            l.b0, l.f0, l.b, l.f, l.sup_b0, l.declared_c1
        );
    }
    let _ = writeln!(
        body,
        "  convexity of f(., mu): {} (margin {:.4e})",
        report.convexity_ok.unwrap_or(false),
        report.convexity_margin.unwrap_or(f64::NAN)
    );
    let _ = write!(
        body,
        "  monotonicity: min over {} pairs = {:.4e}",
        report.monotonicity_samples.len(),
        report.min_monotonicity().unwrap_or(f64::NAN)
    );
    s.section("assumptions", &body);
    Ok(())
}

pub fn run(command: Command, cfg: &RunConfig, s: &mut Session) -> Result<(), CliError> {
    match command {
        Command::SolveMfg => run_solve(cfg, s, ""),
        Command::SweepTheta => run_sweep_theta(cfg, s, ""),
        Command::SweepN => run_sweep_n(cfg, s, "").map(|_| ()),
        Command::FvGap => run_fv_gap(cfg, s, "", None),
        Command::CheckAssumptions => run_check_assumptions(cfg, s, ""),
        Command::ReproduceAll => {
            run_check_assumptions(cfg, s, "check-assumptions/")?;
            run_solve(cfg, s, "solve-mfg/")?;
            run_sweep_theta(cfg, s, "sweep-theta/")?;
            let c = run_sweep_n(cfg, s, "sweep-n/")?;
            run_fv_gap(cfg, s, "fv-gap/", cfg.experiment.gap_constant.or(Some(c)))
        }
    }
}
