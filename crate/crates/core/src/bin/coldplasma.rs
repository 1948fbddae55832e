//! Batch driver. Exit codes: 0 all checks passed, 2 a check failed, 1 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coldplasma::config::{RunConfig, RunMode, SourceConfig, TimeStep};
use coldplasma::diagnostics::write_diagnostics_csv;
use coldplasma::freq_domain::{assemble_frequency_system, solve_frequency, FrequencyParams};
use coldplasma::integrators::Scheme;
use coldplasma::io::{build_id, write_complex_snapshot, write_csv_file, write_json, SnapshotHeader};
use coldplasma::plasma::Polarization;
use coldplasma::studies::{
    beam_residual_checks, run_beam_2d, run_conservation, run_convergence, run_performance, run_stability, CaseRow, Check, StudyReport,
};
use coldplasma::{Error, Result};

#[derive(Parser)]
#[command(name = "coldplasma", version, about = "Cold-plasma wave solver studies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Error decay under refinement at fixed CFL
    Converge(Common),
    /// Errors at fixed PPW for a list of CFL values
    Stability(Common),
    /// Energy, charge and div B errors under refinement
    Conserve(Common),
    /// Iteration counts, MVBP and LFOps
    Perf(Common),
    /// 2D Gaussian-beam run with harmonic comparison
    Beam2d(Beam),
    /// Frequency-domain solve only
    Freqsolve(Beam),
}

#[derive(Clone, Copy, ValueEnum)]
enum Pol {
    O,
    X,
}

impl From<Pol> for Polarization {
    fn from(p: Pol) -> Self {
        match p {
            Pol::O => Polarization::O,
            Pol::X => Polarization::X,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Poisson,
    Hamiltonian,
    Cn,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Poisson => Scheme::PoissonSplit,
            SchemeArg::Hamiltonian => Scheme::HamiltonianSplit,
            SchemeArg::Cn => Scheme::CrankNicolson,
        }
    }
}

#[derive(Args)]
struct Shared {
    /// JSON run configuration; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<SchemeArg>,
    #[arg(long)]
    periods: Option<f64>,
    /// inner solver tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// print the effective configuration and exit
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    shared: Shared,
    #[arg(long, value_enum, default_value = "x")]
    mode: Pol,
    #[arg(long, value_delimiter = ',')]
    ppw: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    cfl: Vec<f64>,
    /// run sweep entries one after another
    #[arg(long)]
    serial: bool,
    /// accepted slope band, e.g. 1.8,2.2
    #[arg(long, value_delimiter = ',')]
    slope_band: Option<Vec<f64>>,
}

#[derive(Args)]
struct Beam {
    #[command(flatten)]
    shared: Shared,
    #[arg(long, value_enum, default_value = "o")]
    mode: Pol,
    #[arg(long, default_value_t = 6.0)]
    ppw: f64,
    #[arg(long)]
    ppp: Option<f64>,
    /// density preset: vacuum, blobs, single_blob
    #[arg(long, default_value = "blobs")]
    profile: String,
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Vec<f64>,
    /// skip the frequency-domain solve
    #[arg(long)]
    no_freq: bool,
    /// assert the |R| history: decrease over the first N periods
    #[arg(long)]
    check_periods: Option<usize>,
    #[arg(long, default_value_t = 0.35)]
    residual_bound: f64,
}

fn apply_shared(cfg: &mut RunConfig, s: &Shared) -> Result<()> {
    if let Some(o) = &s.out {
        cfg.output.dir = o.clone();
    }
    if !s.scheme.is_empty() {
        cfg.schemes = s.scheme.iter().map(|v| Scheme::from(*v)).collect();
    }
    if let Some(p) = s.periods {
        cfg.n_periods = p;
    }
    if let Some(t) = s.tol {
        cfg.solver.tol = t;
    }
    cfg.validate()
}

fn study_config(mode: RunMode, c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.shared.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::manufactured(mode, c.mode.into()),
    };
    cfg.mode = mode;
    if !c.ppw.is_empty() {
        cfg.sweep.ppw = c.ppw.clone();
    }
    if !c.cfl.is_empty() {
        if mode == RunMode::Stability {
            cfg.sweep.cfl = c.cfl.clone();
        } else {
            cfg.time_step = TimeStep::Cfl(c.cfl[0]);
        }
    }
    if c.serial {
        cfg.checks.parallel = false;
    }
    if let Some(b) = &c.slope_band {
        let [lo, hi] = b[..] else {
            return Err(Error::InvalidArgument(format!("--slope-band takes two values, got {}", b.len())));
        };
        cfg.checks.slope_band = Some([lo, hi]);
    }
    apply_shared(&mut cfg, &c.shared)?;
    Ok(cfg)
}

fn beam_config(mode: RunMode, b: &Beam) -> Result<RunConfig> {
    let mut cfg = match &b.shared.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::beam_2d(b.ppw, b.mode.into(), &b.profile),
    };
    cfg.mode = mode;
    if let Some(p) = b.ppp {
        cfg.time_step = TimeStep::Ppp(p);
    }
    if b.no_freq {
        cfg.freq = None;
    } else if cfg.freq.is_none() {
        cfg.freq = Some(FrequencyParams::default());
    }
    if !b.snapshot_times.is_empty() {
        cfg.output.snapshot_times = b.snapshot_times.clone();
    }
    apply_shared(&mut cfg, &b.shared)?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    build: String,
    mode: &'static str,
    config: &'a RunConfig,
    checks: &'a [Check],
    result: T,
}

fn emit<T: Serialize>(cfg: &RunConfig, checks: &[Check], result: T) -> Result<()> {
    let summary = Summary { build: build_id(), mode: cfg.mode.name(), config: cfg, checks, result };
    write_json(&cfg.output.dir.join("summary.json"), &summary)?;
    for c in checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {}", cfg.output.dir.join("summary.json").display());
    Ok(())
}

fn emit_study(cfg: &RunConfig, rep: &StudyReport) -> Result<bool> {
    let rows: Vec<CaseRow> = rep.cases.iter().map(CaseRow::from).collect();
    if cfg.output.csv {
        write_csv_file(&cfg.output.dir.join("cases.csv"), &rows)?;
        let steps_dir = cfg.output.dir.join("steps");
        for (case, row) in rep.cases.iter().zip(&rows).filter(|(c, _)| !c.records.is_empty()) {
            std::fs::create_dir_all(&steps_dir)?;
            let name = format!("{}_ppw{}_cfl{}.csv", row.scheme, row.ppw, row.cfl);
            write_diagnostics_csv(std::fs::File::create(steps_dir.join(name))?, &case.records)?;
        }
    }
    for r in &rows {
        println!(
            "{:<20} ppw {:>5.1} cfl {:>5.3} err {:>10.3e} solver {:>10.3e} energy {:>10.3e} charge {:>10.3e}{}",
            r.scheme,
            r.ppw,
            r.cfl,
            r.max_rel_total,
            r.max_rel_solver,
            r.energy_error,
            r.charge_error,
            if r.diverged { "  diverged" } else { "" }
        );
    }
    for s in &rep.slopes {
        if let Some(k) = s.slope {
            println!("slope {} {}: {k:.3}", s.scheme.name(), s.quantity);
        }
    }
    emit(cfg, &rep.checks, rep)?;
    Ok(rep.passed())
}

fn freqsolve(cfg: &RunConfig) -> Result<bool> {
    let profile = cfg.profile.build()?;
    let (_, dt) = coldplasma::studies::time_grid(cfg);
    let sources = match &cfg.source {
        SourceConfig::Beam { beam, .. } => coldplasma::assembly::SourceSpec {
            boundary_field: Some(coldplasma::plasma::beam_boundary_field(beam.clone())),
            envelope_dt: Some(dt),
            ..Default::default()
        },
        SourceConfig::Manufactured { mode } => coldplasma::plasma::Manufactured::benchmark(*mode).source_spec(),
        SourceConfig::None => Default::default(),
    };
    let ops = coldplasma::assembly::SystemOperators::assemble(cfg.build_complex()?, &profile, sources, None)?;
    let sys = assemble_frequency_system(&ops, &profile)?;
    let sol = solve_frequency(&sys, cfg.freq.unwrap_or_default())?;
    let dir = &cfg.output.dir;
    let v1 = &ops.complex.v1;
    write_complex_snapshot(dir, "e_hat", &SnapshotHeader::new("E_hat", v1, 0.0, true), &sol.e_hat)?;
    write_complex_snapshot(dir, "b_hat", &SnapshotHeader::new("B_hat", &ops.complex.v2, 0.0, true), &sol.b_hat)?;
    write_complex_snapshot(dir, "y_hat", &SnapshotHeader::new("Y_hat", v1, 0.0, true), &sol.y_hat)?;
    let checks = vec![Check::new("frequency solve residual", sol.residual <= 1e-8, format!("{:.3e} ({:?})", sol.residual, sol.method))];
    #[derive(Serialize)]
    struct Out {
        dim: usize,
        residual: f64,
        method: String,
        resonance_warning: bool,
    }
    let out = Out { dim: sys.dim(), residual: sol.residual, method: format!("{:?}", sol.method).to_lowercase(), resonance_warning: sys.eps.resonance_warning };
    emit(cfg, &checks, out)?;
    Ok(checks.iter().all(|c| c.passed))
}

fn run(cli: Cli) -> Result<bool> {
    let (cfg, print) = match &cli.cmd {
        Cmd::Converge(c) => (study_config(RunMode::Converge, c)?, c.shared.print_config),
        Cmd::Stability(c) => (study_config(RunMode::Stability, c)?, c.shared.print_config),
        Cmd::Conserve(c) => (study_config(RunMode::Conserve, c)?, c.shared.print_config),
        Cmd::Perf(c) => (study_config(RunMode::Perf, c)?, c.shared.print_config),
        Cmd::Beam2d(b) => (beam_config(RunMode::Beam2d, b)?, b.shared.print_config),
        Cmd::Freqsolve(b) => (beam_config(RunMode::Freqsolve, b)?, b.shared.print_config),
    };
    if print {
        println!("{}", cfg.to_json()?);
        return Ok(true);
    }
    std::fs::create_dir_all(&cfg.output.dir)?;
    match cfg.mode {
        RunMode::Converge => emit_study(&cfg, &run_convergence(&cfg)?),
        RunMode::Stability => emit_study(&cfg, &run_stability(&cfg)?),
        RunMode::Conserve => emit_study(&cfg, &run_conservation(&cfg)?),
        RunMode::Perf => {
            let (records, checks) = run_performance(&cfg)?;
            if cfg.output.csv {
                write_csv_file(&cfg.output.dir.join("cost.csv"), &cost_rows(&records))?;
            }
            for r in cost_rows(&records) {
                println!("{:<20} ppw {:>5.1} n1 {:>6.2} n2 {:>6.2} mvbp {:>8.2} lfops {:>12.4e}", r.scheme, r.ppw, r.n1, r.n2, r.mvbp, r.lfops);
            }
            emit(&cfg, &checks, &records)?;
            Ok(checks.iter().all(|c| c.passed))
        }
        RunMode::Beam2d => {
            let report = run_beam_2d(&cfg, Some(&cfg.output.dir))?;
            if cfg.output.csv {
                write_csv_file(&cfg.output.dir.join("beam.csv"), &report.samples)?;
            }
            let checks = match &cli.cmd {
                Cmd::Beam2d(b) => b.check_periods.map(|n| beam_residual_checks(&report, n, b.residual_bound)).unwrap_or_default(),
                _ => Vec::new(),
            };
            for (k, r) in report.period_residuals.iter().enumerate() {
                println!("period {:>3}: |R| = {r:.4}", k + 1);
            }
            emit(&cfg, &checks, &report)?;
            Ok(checks.iter().all(|c| c.passed))
        }
        RunMode::Freqsolve => freqsolve(&cfg),
    }
}

#[derive(Serialize)]
struct CostRow {
    scheme: &'static str,
    ppw: f64,
    ppp: f64,
    dim: usize,
    n1: f64,
    n2: f64,
    mvbp: f64,
    mvbp_counted: f64,
    lfops: f64,
}

fn cost_rows(records: &[coldplasma::diagnostics::CostRecord]) -> Vec<CostRow> {
    use coldplasma::diagnostics::Iterations;
    records
        .iter()
        .map(|r| {
            let (n1, n2) = match r.iterations {
                Iterations::CrankNicolson { n } => (n, 0.0),
                Iterations::Poisson { n_maxwell, n_plasma } => (n_maxwell, n_plasma),
                Iterations::Hamiltonian { n_e, n_by } => (n_e, n_by),
            };
            CostRow { scheme: r.scheme.name(), ppw: r.ppw, ppp: r.ppp, dim: r.dim, n1, n2, mvbp: r.mvbp, mvbp_counted: r.mvbp_counted, lfops: r.lfops }
        })
        .collect()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
