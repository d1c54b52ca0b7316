//! Command-line entry point. Every subcommand except `couplings` reads a TOML
//! config, writes CSVs, SVG plots, `resolved.toml` and `manifest.json` into
//! `output_dir`, and maps failures to exit codes (2 for bad input, 3 for
//! numerical failures, 1 otherwise).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{self, *};
use crate::couplings::{derive, rate_ratios_beta, rate_ratios_fixed_etac, Model};
use crate::dissipative::{echo_scan, qfi_scan};
use crate::error::{Error, Result};
use crate::io::{heatmap, line_plot, quiver, Manifest, Series};
use crate::metrology::{run_protocol, ProtocolSpec};
use crate::semiclassical::{analytic_moments, classify, flow_map, pole_grid, separatrix_directions, twa_evolve};
use crate::sweep::{
    centred_log_grid, gain_curve, gain_vs_collective_cooperativity, optimize_gain, qfi_ratio_map, scaling_fit, FitLaw,
};
use crate::trajectory::{initial_state, run_trajectories, LossModel};
use crate::unitary::{evolve_pure, wigner, EvolutionResult};

#[derive(Debug, Parser)]
#[command(name = "tribody", version, about = "Collective three-body spin squeezing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed evolution: QFI, spin moments and Wigner snapshots.
    Evolve(RunArgs),
    /// Mean-field flow near the pole and the separatrix directions.
    Flowmap(RunArgs),
    /// Truncated Wigner ensemble against the step approximation.
    Twa(RunArgs),
    /// Master-equation echo with collective and single-particle dissipation.
    Lindblad(RunArgs),
    /// Quantum trajectories with atom loss.
    Trajectories(RunArgs),
    /// Echo gain for chosen readouts and echo styles.
    Protocol(RunArgs),
    /// Gain optimization and QFI ratio campaigns.
    Sweep(RunArgs),
    /// Wigner functions of the evolved state.
    Wigner(RunArgs),
    /// Derived couplings and rate ratios.
    Couplings(CouplingsArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CouplingsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "N")]
    pub n_atoms: Option<usize>,
    #[arg(long = "C")]
    pub c: Option<f64>,
    #[arg(long)]
    pub beta_kappa: Option<f64>,
    #[arg(long)]
    pub beta_gamma: Option<f64>,
    #[arg(long)]
    pub eta_c: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        _ if e.is_numerical() => 3,
        Error::Config { .. }
        | Error::InvalidParameter { .. }
        | Error::ZeroDetuning(_)
        | Error::NoDissipation(_)
        | Error::EmptyOperator { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Evolve(a) => execute(&a, "evolve", evolve),
        Command::Flowmap(a) => execute(&a, "flowmap", flowmap),
        Command::Twa(a) => execute(&a, "twa", twa),
        Command::Lindblad(a) => execute(&a, "lindblad", lindblad),
        Command::Trajectories(a) => execute(&a, "trajectories", trajectories),
        Command::Protocol(a) => execute(&a, "protocol", protocol),
        Command::Sweep(a) => execute(&a, "sweep", sweep),
        Command::Wigner(a) => execute(&a, "wigner", wigner_cmd),
        Command::Couplings(a) => couplings(&a),
    }
}

fn execute<C: RunConfig + Sync>(args: &RunArgs, name: &str, body: fn(&C, &mut Manifest) -> Result<()>) -> Result<()> {
    let mut cfg: C = config::load(&args.config)?;
    if let Some(dir) = &args.output_dir {
        cfg.set_output_dir(dir.clone());
    }
    let mut man = Manifest::new(cfg.output_dir(), name, &cfg, Some(cfg.seed()))?;
    man.snapshot(&config::resolved(&cfg)?)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads() {
        if n == 0 {
            return Err(Error::Config {
                key: "threads".into(),
                reason: "must be at least 1".into(),
            });
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Logic(format!("thread pool: {e}")))?;
    pool.install(|| body(&cfg, &mut man))?;
    man.finish()
}

fn need_atoms(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config {
            key: "n_atoms".into(),
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct EvolveRow {
    tau: f64,
    qfi: f64,
    qfi_over_n2: f64,
    sz_mean: f64,
    sz_var: f64,
}

#[derive(Serialize)]
struct WignerRow {
    theta: f64,
    phi: f64,
    w: f64,
}

fn sorted(v: &[f64], key: &str) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    if out.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::Config {
            key: key.into(),
            reason: "times must be non-negative".into(),
        });
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

fn write_wigners(
    man: &mut Manifest,
    ev: &EvolutionResult,
    res: &WignerResolution,
    pre: Option<&PreRotation>,
) -> Result<()> {
    let mut residue = 0.0f64;
    for (tau, state) in ev.times.iter().zip(&ev.states) {
        let w = wigner(state, res.n_theta, res.n_phi, pre.map(|p| (p.axis, p.angle)));
        residue = residue.max(w.imag_residue);
        let mut rows = Vec::with_capacity(w.thetas.len() * w.phis.len());
        for (i, &th) in w.thetas.iter().enumerate() {
            for (j, &ph) in w.phis.iter().enumerate() {
                rows.push(WignerRow {
                    theta: th,
                    phi: ph,
                    w: w.values[i][j],
                });
            }
        }
        man.csv(&format!("wigner_tau_{tau}.csv"), &rows)?;
        let p = man.path(&format!("wigner_tau_{tau}.svg"));
        heatmap(
            &p,
            &format!("Wigner function, tau = {tau}"),
            &w.phis,
            &w.thetas,
            &w.values,
        )?;
    }
    man.note("wigner_imag_residue", residue)
}

fn evolve(cfg: &EvolveConfig, man: &mut Manifest) -> Result<()> {
    need_atoms(cfg.n_atoms)?;
    let model = cfg.model.unitary()?;
    let psi = initial_state(&model, cfg.n_atoms)?;
    let mut taus = vec![0.0];
    taus.extend(cfg.grid.points()?);
    let ev = evolve_pure(&psi, &model, &taus, cfg.tol)?;
    let n2 = (cfg.n_atoms * cfg.n_atoms) as f64;
    let rows: Vec<EvolveRow> = ev
        .times
        .iter()
        .zip(&ev.states)
        .zip(&ev.qfi)
        .map(|((&tau, s), &q)| EvolveRow {
            tau,
            qfi: q,
            qfi_over_n2: q / n2,
            sz_mean: s.sz_moments().0,
            sz_var: s.sz_variance(),
        })
        .collect();
    man.csv("evolve.csv", &rows)?;
    let p = man.path("evolve_qfi.svg");
    line_plot(
        &p,
        "QFI about z",
        "tau",
        "F_Q / N^2",
        &[Series {
            name: cfg.model.kind.name(),
            points: rows.iter().map(|r| (r.tau, r.qfi_over_n2)).collect(),
        }],
        false,
    )?;
    let snaps = evolve_pure(&psi, &model, &sorted(&cfg.wigner_taus, "wigner_taus")?, cfg.tol)?;
    write_wigners(man, &snaps, &cfg.wigner, None)
}

fn wigner_cmd(cfg: &WignerConfig, man: &mut Manifest) -> Result<()> {
    need_atoms(cfg.n_atoms)?;
    let model = cfg.model.unitary()?;
    let psi = initial_state(&model, cfg.n_atoms)?;
    let ev = evolve_pure(&psi, &model, &sorted(&cfg.taus, "taus")?, 1e-10)?;
    write_wigners(man, &ev, &cfg.resolution, cfg.pre_rotation.as_ref())
}

#[derive(Serialize)]
struct FlowRow {
    x: f64,
    y: f64,
    z: f64,
    dx: f64,
    dy: f64,
    dz: f64,
    direction: crate::semiclassical::FlowDirection,
}

#[derive(Serialize)]
struct SeparatrixRow {
    phi: f64,
    direction: crate::semiclassical::FlowDirection,
}

fn flowmap(cfg: &FlowmapConfig, man: &mut Manifest) -> Result<()> {
    if cfg.n_rings == 0 || cfg.n_azimuth == 0 {
        return Err(Error::Config {
            key: "n_rings".into(),
            reason: "grid must have at least one ring and one azimuth".into(),
        });
    }
    let pts = pole_grid(cfg.n_rings, cfg.n_azimuth, cfg.max_tilt);
    let flow = flow_map(&pts, cfg.dt, cfg.chi3_n2)?;
    let rows: Vec<FlowRow> = flow
        .iter()
        .map(|v| FlowRow {
            x: v.start.x,
            y: v.start.y,
            z: v.start.z,
            dx: v.delta.x,
            dy: v.delta.y,
            dz: v.delta.z,
            direction: classify(v),
        })
        .collect();
    man.csv("flowmap.csv", &rows)?;
    let sep: Vec<SeparatrixRow> = separatrix_directions(cfg.separatrix_tilt, cfg.dt, cfg.chi3_n2)?
        .into_iter()
        .map(|(phi, direction)| SeparatrixRow { phi, direction })
        .collect();
    man.csv("separatrix.csv", &sep)?;
    let arrows: Vec<_> = rows.iter().map(|r| ((r.x, r.y), (r.dx, r.dy))).collect();
    let p = man.path("flowmap.svg");
    quiver(&p, "Mean-field flow near the pole", &arrows)
}

#[derive(Serialize)]
struct TwaRow {
    tau: f64,
    sz_mean: f64,
    sz_mean_se: f64,
    sz_var: f64,
    sz_var_se: f64,
    step_mean: f64,
    step_var: f64,
}

fn twa(cfg: &TwaConfig, man: &mut Manifest) -> Result<()> {
    need_atoms(cfg.n_atoms)?;
    let taus = cfg.grid.points()?;
    let ens = twa_evolve(cfg.n_atoms, cfg.n_traj, cfg.seed, &taus)?;
    let rows: Vec<TwaRow> = ens
        .moments
        .iter()
        .map(|m| {
            let (am, av) = analytic_moments(m.tau, cfg.n_atoms);
            TwaRow {
                tau: m.tau,
                sz_mean: m.sz_mean,
                sz_mean_se: m.sz_mean_se,
                sz_var: m.sz_var,
                sz_var_se: m.sz_var_se,
                step_mean: am,
                step_var: av,
            }
        })
        .collect();
    man.csv("twa.csv", &rows)?;
    man.note("n_traj", ens.n_traj)?;
    man.note("max_radius_drift", ens.max_radius_drift)?;
    man.note("max_energy_drift", ens.max_energy_drift)?;
    man.note("retried", ens.retried)?;
    let p = man.path("twa.svg");
    line_plot(
        &p,
        "Truncated Wigner variance",
        "tau",
        "Var(Sz)",
        &[
            Series {
                name: "TWA",
                points: rows.iter().map(|r| (r.tau, r.sz_var)).collect(),
            },
            Series {
                name: "step approximation",
                points: rows.iter().map(|r| (r.tau, r.step_var)).collect(),
            },
        ],
        false,
    )
}

#[derive(Serialize)]
struct EchoRow {
    tau: f64,
    t: f64,
    signal: f64,
    derivative: f64,
    variance: f64,
    gain: f64,
    gain_db: f64,
}

#[derive(Serialize)]
struct QfiRow {
    tau: f64,
    t: f64,
    qfi: f64,
    qfi_z: f64,
}

fn db(g: f64) -> f64 {
    10.0 * g.log10()
}

fn gain_plot(man: &mut Manifest, name: &str, label: &str, pts: Vec<(f64, f64)>) -> Result<()> {
    let p = man.path(name);
    line_plot(
        &p,
        "Echo gain",
        "tau",
        "G",
        &[Series {
            name: label,
            points: pts,
        }],
        false,
    )
}

fn lindblad(cfg: &LindbladConfig, man: &mut Manifest) -> Result<()> {
    need_atoms(cfg.n_atoms)?;
    let spec = cfg.model.open(&cfg.dissipation)?;
    let taus = cfg.grid.points()?;
    let ts: Vec<f64> = taus.iter().map(|&tau| spec.time_of_tau(cfg.n_atoms, tau)).collect();
    let phi0 = cfg.dissipation.phi0.unwrap_or(1.0 / cfg.n_atoms as f64);
    let scan = echo_scan(&spec, cfg.n_atoms, phi0, &ts, cfg.tol)?;
    let rows: Vec<EchoRow> = taus
        .iter()
        .zip(&scan)
        .map(|(&tau, p)| EchoRow {
            tau,
            t: p.t,
            signal: p.signal,
            derivative: p.derivative,
            variance: p.variance,
            gain: p.gain,
            gain_db: db(p.gain),
        })
        .collect();
    man.csv("lindblad.csv", &rows)?;
    man.note("phi0", phi0)?;
    man.note("slope_method", "correlator")?;
    if cfg.qfi {
        let q = qfi_scan(&spec, cfg.n_atoms, &ts, cfg.tol)?;
        let rows: Vec<QfiRow> = taus
            .iter()
            .zip(&q)
            .map(|(&tau, p)| QfiRow {
                tau,
                t: p.t,
                qfi: p.qfi,
                qfi_z: p.qfi_z,
            })
            .collect();
        man.csv("qfi.csv", &rows)?;
    }
    gain_plot(
        man,
        "lindblad.svg",
        cfg.model.kind.name(),
        rows.iter().map(|r| (r.tau, r.gain)).collect(),
    )
}

#[derive(Serialize)]
struct TrajectoryRow {
    tau: f64,
    t: f64,
    signal: f64,
    signal_se: f64,
    variance: f64,
    variance_se: f64,
    derivative: f64,
    derivative_se: f64,
    gain: f64,
    gain_se: f64,
    n_jumps_mean: f64,
}

fn trajectories(cfg: &TrajectoriesConfig, man: &mut Manifest) -> Result<()> {
    need_atoms(cfg.n_atoms)?;
    let model = crate::couplings::ModelSpec::three_body(1.0, cfg.loss.collective_rate_ratio, 0.0);
    let taus = cfg.grid.points()?;
    let ts: Vec<f64> = taus.iter().map(|&tau| model.time_of_tau(cfg.n_atoms, tau)).collect();
    let spec = LossModel::new(model, cfg.loss.loss_rate_ratio, cfg.loss.convention)?;
    let phi0 = cfg.loss.phi0.unwrap_or(1.0 / cfg.n_atoms as f64);
    let pts = run_trajectories(&spec, cfg.n_atoms, cfg.n_traj, cfg.seed, phi0, &ts)?;
    let rows: Vec<TrajectoryRow> = taus
        .iter()
        .zip(&pts)
        .map(|(&tau, p)| TrajectoryRow {
            tau,
            t: p.t,
            signal: p.signal_mean,
            signal_se: p.signal_se,
            variance: p.var_mean,
            variance_se: p.var_se,
            derivative: p.derivative,
            derivative_se: p.derivative_se,
            gain: p.gain,
            gain_se: p.gain_se,
            n_jumps_mean: p.n_jumps_mean,
        })
        .collect();
    man.csv("trajectories.csv", &rows)?;
    man.note("n_traj", cfg.n_traj)?;
    man.note("phi0", phi0)?;
    man.note("slope_method", "finite_difference")?;
    gain_plot(
        man,
        "trajectories.svg",
        "three_body",
        rows.iter().map(|r| (r.tau, r.gain)).collect(),
    )
}

#[derive(Serialize)]
struct ProtocolRow {
    tau: f64,
    gain_linear: f64,
    gain_db: f64,
    signal: f64,
    signal_slope: f64,
    variance: f64,
    sql_reference: f64,
    qfi: f64,
}

fn protocol(cfg: &ProtocolConfig, man: &mut Manifest) -> Result<()> {
    need_atoms(cfg.n_atoms)?;
    let model = match &cfg.dissipation {
        Some(d) => cfg.model.open(d)?,
        None => cfg.model.unitary()?,
    };
    let phi0 = cfg.phi0.unwrap_or(1.0 / cfg.n_atoms as f64);
    let mut rows = Vec::new();
    let mut method = None;
    for &tau in &cfg.taus {
        let r = run_protocol(
            &ProtocolSpec {
                model: model.clone(),
                tau,
                phi0,
                readout: cfg.readout,
                echo_style: cfg.echo_style,
            },
            cfg.n_atoms,
        )?;
        method = Some(r.slope_method);
        rows.push(ProtocolRow {
            tau,
            gain_linear: r.gain_linear,
            gain_db: r.gain_db,
            signal: r.signal,
            signal_slope: r.signal_slope,
            variance: r.variance,
            sql_reference: r.sql_reference,
            qfi: r.qfi,
        });
    }
    man.csv("protocol.csv", &rows)?;
    man.note("phi0", phi0)?;
    man.note("slope_method", method)
}

#[derive(Serialize)]
struct Fig5aRow {
    model: Model,
    n_atoms: usize,
    d: f64,
    t: f64,
    gain: f64,
}

#[derive(Serialize)]
struct Fig5bRow {
    model: Model,
    n_atoms: usize,
    d: f64,
    gain: f64,
    t_opt: f64,
    t_boundary: bool,
}

#[derive(Serialize)]
struct Fig5cRow {
    model: Model,
    n_atoms: usize,
    c: f64,
    g_opt: f64,
    d_opt: f64,
    t_opt: f64,
    eta_a: f64,
    d_boundary: bool,
    single_peaked: bool,
}

#[derive(Serialize)]
struct Fig4cRow {
    n_atoms: usize,
    c: f64,
    nc: f64,
    g_three_body: f64,
    g_oat: f64,
    d_opt_three_body: f64,
    d_opt_oat: f64,
    eta_a_three_body: f64,
    boundary: bool,
}

#[derive(Serialize)]
struct Fig4dRow {
    n_atoms: usize,
    c: f64,
    nc: f64,
    above_line: bool,
    eta_a: f64,
    tau_opt: f64,
    qfi_three_body: f64,
    qfi_other: f64,
    ratio: f64,
}

const MODELS: [Model; 2] = [Model::ThreeBody, Model::Oat];

fn sweep(cfg: &SweepConfig, man: &mut Manifest) -> Result<()> {
    if cfg.fixed_eta_c.is_none() && cfg.beta.is_none() {
        return Err(Error::Config {
            key: "fixed_eta_c".into(),
            reason: "a sweep needs a [fixed_eta_c] or [beta] table".into(),
        });
    }
    if let Some(f) = &cfg.fixed_eta_c {
        fixed_eta_c_sweep(f, man)?;
    }
    if let Some(b) = &cfg.beta {
        beta_sweep(b, man)?;
    }
    Ok(())
}

fn fixed_eta_c_sweep(f: &FixedEtaCSweep, man: &mut Manifest) -> Result<()> {
    let scen = f.scenario();
    let n0 = *f.n_atoms.first().ok_or_else(|| Error::Config {
        key: "fixed_eta_c.n_atoms".into(),
        reason: "needs at least one atom number".into(),
    })?;
    let d_grid = |n: usize| centred_log_grid((n as f64 * f.c / 2.0).sqrt(), f.d_factor, f.per_decade);
    let mut fig5a = Vec::new();
    for model in MODELS {
        for &d in &d_grid(n0) {
            for (t, gain) in gain_curve(model, n0, f.c, d, &scen)? {
                fig5a.push(Fig5aRow {
                    model,
                    n_atoms: n0,
                    d,
                    t,
                    gain,
                });
            }
        }
    }
    man.csv("fig5a.csv", &fig5a)?;
    let mut fig5b = Vec::new();
    let mut fig5c = Vec::new();
    for model in MODELS {
        for &n in &f.n_atoms {
            let opt = optimize_gain(model, n, f.c, &d_grid(n), &scen)?;
            if n == n0 {
                fig5b.extend(opt.slices.iter().map(|s| Fig5bRow {
                    model,
                    n_atoms: n,
                    d: s.d,
                    gain: s.gain,
                    t_opt: s.t_opt,
                    t_boundary: s.t_boundary,
                }));
            }
            fig5c.push(Fig5cRow {
                model,
                n_atoms: n,
                c: f.c,
                g_opt: opt.g_opt,
                d_opt: opt.d_opt,
                t_opt: opt.t_opt,
                eta_a: opt.eta_a,
                d_boundary: opt.d_boundary,
                single_peaked: opt.single_peaked,
            });
        }
    }
    man.csv("fig5b.csv", &fig5b)?;
    man.csv("fig5c.csv", &fig5c)?;
    if f.n_atoms.len() >= 4 {
        let mut fits = serde_json::Map::new();
        for model in MODELS {
            let rows: Vec<&Fig5cRow> = fig5c.iter().filter(|r| r.model == model).collect();
            let ns: Vec<f64> = rows.iter().map(|r| r.n_atoms as f64).collect();
            let nc: Vec<f64> = rows.iter().map(|r| r.n_atoms as f64 * r.c).collect();
            let g: Vec<f64> = rows.iter().map(|r| r.g_opt).collect();
            let d: Vec<f64> = rows.iter().map(|r| r.d_opt).collect();
            fits.insert(
                format!("{}_gain_linear", model.name()),
                serde_json::to_value(scaling_fit(&ns, &g, FitLaw::Linear)?).unwrap_or_default(),
            );
            fits.insert(
                format!("{}_d_opt_power", model.name()),
                serde_json::to_value(scaling_fit(&nc, &d, FitLaw::PowerLaw)?).unwrap_or_default(),
            );
        }
        man.note("fits", fits)?;
    }
    let p = man.path("fig5c.svg");
    let series: Vec<Series> = MODELS
        .iter()
        .map(|&m| Series {
            name: m.name(),
            points: fig5c
                .iter()
                .filter(|r| r.model == m)
                .map(|r| (r.n_atoms as f64, r.g_opt))
                .collect(),
        })
        .collect();
    line_plot(&p, "Optimal gain", "N", "G_opt", &series, false)?;

    if !f.coop_n.is_empty() && !f.coop_c.is_empty() {
        let pts = gain_vs_collective_cooperativity(&f.coop_n, &f.coop_c, &scen, f.d_factor, f.per_decade)?;
        let rows: Vec<Fig4cRow> = pts
            .iter()
            .map(|p| Fig4cRow {
                n_atoms: p.n_atoms,
                c: p.c,
                nc: p.nc,
                g_three_body: p.three_body.g_opt,
                g_oat: p.oat.g_opt,
                d_opt_three_body: p.three_body.d_opt,
                d_opt_oat: p.oat.d_opt,
                eta_a_three_body: p.three_body.eta_a,
                boundary: p.three_body.d_boundary || p.oat.d_boundary,
            })
            .collect();
        man.csv("fig4c.csv", &rows)?;
        let mut sorted_rows: Vec<&Fig4cRow> = rows.iter().collect();
        sorted_rows.sort_by(|a, b| a.nc.total_cmp(&b.nc));
        let p = man.path("fig4c.svg");
        line_plot(
            &p,
            "Optimal gain vs NC",
            "NC",
            "G",
            &[
                Series {
                    name: "three_body",
                    points: sorted_rows.iter().map(|r| (r.nc, r.g_three_body)).collect(),
                },
                Series {
                    name: "oat",
                    points: sorted_rows.iter().map(|r| (r.nc, r.g_oat)).collect(),
                },
            ],
            true,
        )?;
    }
    Ok(())
}

fn beta_sweep(b: &BetaSweep, man: &mut Manifest) -> Result<()> {
    if b.n_atoms.is_empty() || b.c.is_empty() {
        return Err(Error::Config {
            key: "beta.n_atoms".into(),
            reason: "the map needs at least one N and one C".into(),
        });
    }
    let pts = qfi_ratio_map(&b.n_atoms, &b.c, &b.scheme())?;
    for (name, tat) in [("fig4d_oat", false), ("fig4d_tat", true)] {
        let rows: Vec<Fig4dRow> = pts
            .iter()
            .map(|p| Fig4dRow {
                n_atoms: p.n_atoms,
                c: p.c,
                nc: p.n_atoms as f64 * p.c,
                above_line: p.above_line,
                eta_a: p.eta_a,
                tau_opt: p.tau_opt,
                qfi_three_body: p.qfi_three_body,
                qfi_other: if tat { p.qfi_tat } else { p.qfi_oat },
                ratio: if tat { p.ratio_tat } else { p.ratio_oat },
            })
            .collect();
        man.csv(&format!("{name}.csv"), &rows)?;
        if b.n_atoms.len() >= 2 && b.c.len() >= 2 {
            // Cells on index axes: rows follow C, columns follow N, in config order.
            let xs: Vec<f64> = (0..b.n_atoms.len()).map(|i| i as f64).collect();
            let ys: Vec<f64> = (0..b.c.len()).map(|i| i as f64).collect();
            let mut values = vec![vec![0.0; xs.len()]; ys.len()];
            for (k, r) in rows.iter().enumerate() {
                values[k % b.c.len()][k / b.c.len()] = r.ratio.log10();
            }
            let p = man.path(&format!("{name}.svg"));
            heatmap(&p, &format!("log10 QFI ratio ({name})"), &xs, &ys, &values)?;
        }
    }
    man.note("points", pts.len())
}

fn print_beta(n: usize, c: f64, bk: f64, bg: f64) -> Result<()> {
    let r = rate_ratios_beta(n, c, bk, bg)?;
    println!("Gamma/chi3 = {}", r.gamma_collective);
    println!("gamma_e/chi3 = {}", r.gamma_single);
    println!("chi2/chi3 = {}", r.chi2);
    println!("Delta_a/g = {}", r.chi2);
    println!("eta_a = {}", r.eta_a);
    println!("rescale_r = {}", r.rescale_r);
    println!("above_line = {}", r.above_line);
    Ok(())
}

fn print_fixed(n: usize, c: f64, eta_c: f64, d: f64) -> Result<()> {
    let r = rate_ratios_fixed_etac(n, c, d, eta_c)?;
    println!("Gamma/chi3 = {}", r.gamma_collective);
    println!("gamma_e/chi3 = {}", r.gamma_single);
    println!("chi2/chi3 = {}", r.chi2);
    println!("eta_a = {}", eta_c * d / 2.0);
    Ok(())
}

fn missing(key: &str) -> Error {
    Error::Config {
        key: key.into(),
        reason: "required".into(),
    }
}

fn couplings(a: &CouplingsArgs) -> Result<()> {
    if let Some(path) = &a.config {
        return couplings_config(path);
    }
    let n = a.n_atoms.ok_or_else(|| missing("--N"))?;
    let c = a.c.ok_or_else(|| missing("--C"))?;
    match (a.beta_kappa, a.beta_gamma, a.eta_c, a.d) {
        (Some(bk), Some(bg), None, None) => print_beta(n, c, bk, bg),
        (None, None, eta_c, Some(d)) => print_fixed(n, c, eta_c.unwrap_or(0.5), d),
        (Some(_), None, _, _) => Err(missing("--beta-gamma")),
        (None, Some(_), _, _) => Err(missing("--beta-kappa")),
        _ => Err(Error::Config {
            key: "--d".into(),
            reason: "give either --beta-kappa/--beta-gamma or --d (with optional --eta-c)".into(),
        }),
    }
}

fn couplings_config(path: &Path) -> Result<()> {
    let cfg: CouplingsConfig = config::load(path)?;
    let mut any = false;
    if let Some(p) = &cfg.physics {
        let d = derive(p)?;
        println!("{}", serde_json::to_string_pretty(&d).unwrap_or_default());
        any = true;
    }
    if let Some(s) = &cfg.scenario {
        if let Some(f) = &s.fixed_etac {
            print_fixed(f.n_atoms, f.c, f.eta_c, f.d)?;
            any = true;
        }
        if let Some(b) = &s.beta {
            print_beta(b.n_atoms, b.c, b.beta_kappa, b.beta_gamma)?;
            any = true;
        }
    }
    if !any {
        return Err(missing("physics"));
    }
    Ok(())
}
