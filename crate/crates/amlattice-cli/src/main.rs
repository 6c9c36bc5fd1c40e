//! Command-line driver: wires config files to the solvers and writes CSV/JSON
//! outputs plus a reproducibility manifest.

mod config;
mod output;

use amlattice::bands::{bloch_bands, landau_zener_check};
use amlattice::effective::{empirical_j, empirical_j_in_window, tunneling_rate};
use amlattice::fit::{estimate_g, fit_echo, fit_j_scaling, fit_linear_through_origin, fit_sinusoid, JSample};
use amlattice::protocol::{
    mirror_speeds, run_alpha_scan, run_burst_phase_scan, run_echo_scan, run_mirror, Backend,
    RunSettings,
};
use amlattice::tdse::{prepare_state, propagate, StateSpec};
use amlattice::wstark::wannier_stark_ladder;
use amlattice::{Error, F};
use clap::{Parser, Subcommand, ValueEnum};
use config::RunConfig;
use output::RunManifest;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Tdse,
    Tb,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Tdse => Backend::Tdse,
            BackendArg::Tb => Backend::TightBinding,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "amlattice", version, about = "Matter-wave transport in driven tilted lattices")]
struct Cli {
    /// Config file (key = value) or a previously written manifest.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Random seed recorded with the run.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0, global = true)]
    jobs: usize,
    /// Dynamics backend for protocol runs.
    #[arg(long, value_enum, default_value_t = BackendArg::Tdse, global = true)]
    backend: BackendArg,
    /// Use the published burst durations (287 Bloch periods; long-running).
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Also write per-member traces to members.csv.
    #[arg(long, global = true)]
    members: bool,
    /// Warn on unknown config keys instead of failing.
    #[arg(long, global = true)]
    lax: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bloch bands of the untilted lattice.
    Bands {
        #[arg(long, default_value_t = 65)]
        n_k: usize,
        #[arg(long, default_value_t = 3)]
        n_bands: usize,
        #[arg(long, default_value_t = 25)]
        n_planewaves: usize,
    },
    /// Wannier-Stark ladder states of the tilted lattice.
    Wstates {
        /// Sites to dump (comma-separated); defaults to the three most
        /// interior states.
        #[arg(long)]
        sites: Option<String>,
    },
    /// Tunneling rates from Wannier-Stark matrix elements vs the printed fit.
    Tunneling,
    /// Propagate the configured initial state through a program file.
    Propagate {
        /// Pulse program (`hold <tauB>` / `burst <tauB> <ell> <alpha> <deg>`);
        /// defaults to the config's single burst.
        #[arg(long)]
        program: Option<PathBuf>,
        /// Output samples.
        #[arg(long, default_value_t = 64)]
        points: usize,
        /// Write binary wavefunction snapshots.
        #[arg(long)]
        snapshots: bool,
    },
    /// Echo scan: cloud size vs freezing time.
    Echo {
        /// Scan points over (0, tfr_max * tau_ell].
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        ell: Option<u32>,
    },
    /// Barycentric displacement vs burst switch-on time.
    BurstScan {
        #[arg(long)]
        points: Option<usize>,
    },
    /// Atom-mirror trajectory with velocity reversal.
    Mirror,
    /// Spread speed vs modulation amplitude.
    AlphaScan,
    /// Fit a model to a points CSV.
    Fit {
        #[arg(long, value_parser = ["echo", "linear", "jscaling", "gravity"])]
        model: String,
        /// Input CSV (columns depend on the model).
        #[arg(long)]
        points: PathBuf,
        /// Harmonic for the gravity model.
        #[arg(long, default_value_t = 1)]
        ell: u32,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation { .. } | Error::Config { .. } => 2,
                _ => 3,
            }
        }
    });
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Bands { .. } => "bands",
        Command::Wstates { .. } => "wstates",
        Command::Tunneling => "tunneling",
        Command::Propagate { .. } => "propagate",
        Command::Echo { .. } => "echo",
        Command::BurstScan { .. } => "burst-scan",
        Command::Mirror => "mirror",
        Command::AlphaScan => "alpha-scan",
        Command::Fit { .. } => "fit",
    }
}

fn run(cli: Cli) -> amlattice::Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Error::validation("jobs", e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();

    let config_path = cli.config.clone().ok_or_else(|| Error::Config {
        line: None,
        message: "--config is required".into(),
    })?;
    let cfg = RunConfig::load(&config_path, cli.lax)?;
    let lattice = cfg.lattice()?;
    let backend: Backend = cli.backend.into();

    let mut outputs: Vec<String> = Vec::new();
    let mut run_meta: Option<serde_json::Value> = None;

    match &cli.command {
        Command::Bands { n_k, n_bands, n_planewaves } => {
            let spectrum = bloch_bands(&lattice, *n_bands, *n_k, *n_planewaves)?;
            let mut header = String::from("k_over_kL");
            for b in 1..=*n_bands {
                header.push_str(&format!(",E{b}_Er"));
            }
            let rows: Vec<Vec<F>> = (0..spectrum.k_samples.len())
                .map(|ik| {
                    let mut row = vec![spectrum.k_samples[ik]];
                    for band in &spectrum.band_energies {
                        row.push(band[ik]);
                    }
                    row
                })
                .collect();
            let path = cli.out.join("points.csv");
            output::write_csv(&path, &header, &rows)?;
            outputs.push("points.csv".into());
            let report = landau_zener_check(&lattice, &spectrum);
            let summary = serde_json::json!({
                "E_G_Er": spectrum.band_gap_at_edge,
                "gap_convergence_Er": spectrum.gap_convergence,
                "bandwidths_Er": spectrum.bandwidths,
                "landau_zener": report,
            });
            output::write_json(&cli.out.join("summary.json"), &summary)?;
            outputs.push("summary.json".into());
        }
        Command::Wstates { sites } => {
            let band = cfg.get_usize_or("band", 1)?;
            let box_sites = cfg.box_sites()?.unwrap_or(48);
            let pps = cfg.resolution()?.points_per_site;
            let ladder = wannier_stark_ladder(&lattice, band, box_sites, pps)?;
            let chosen: Vec<i64> = match sites {
                Some(s) => s
                    .split(',')
                    .map(|t| {
                        t.trim().parse().map_err(|_| Error::Config {
                            line: None,
                            message: format!("bad site `{t}`"),
                        })
                    })
                    .collect::<amlattice::Result<Vec<_>>>()?,
                None => {
                    let r = ladder.reference_index();
                    ladder.sites[r.saturating_sub(1)..(r + 2).min(ladder.sites.len())].to_vec()
                }
            };
            let mut header = String::from("z_over_kL");
            let mut cols: Vec<&Vec<F>> = Vec::new();
            for site in &chosen {
                let idx = ladder.state_for_site(*site).ok_or_else(|| {
                    Error::validation("sites", format!("site {site} not in the interior"))
                })?;
                header.push_str(&format!(",psi_{site}_re,psi_{site}_im"));
                cols.push(&ladder.site_states[idx]);
            }
            let rows: Vec<Vec<F>> = (0..ladder.grid.len())
                .map(|j| {
                    let mut row = vec![ladder.grid.z(j)];
                    for c in &cols {
                        row.push(c[j]);
                        row.push(0.0); // ladder states are real
                    }
                    row
                })
                .collect();
            output::write_csv(&cli.out.join("points.csv"), &header, &rows)?;
            outputs.push("points.csv".into());
            let spectrum = bloch_bands(&lattice, 2, 9, 25)?;
            let summary = serde_json::json!({
                "spacing_check": {
                    "max_relative_deviation": ladder.max_spacing_deviation,
                    "bloch_quantum_Er": lattice.scales.dimensionless_force,
                },
                "E_G_Er": spectrum.band_gap_at_edge,
                "band": band,
                "interior_sites": ladder.sites,
                "energies_Er": ladder.site_energies,
            });
            output::write_json(&cli.out.join("summary.json"), &summary)?;
            outputs.push("summary.json".into());
        }
        Command::Tunneling => {
            let u0 = lattice.depth();
            let alpha = cfg.get_f64("alpha")?;
            let band = cfg.get_usize_or("band", 1)?;
            let box_sites = cfg.box_sites()?.unwrap_or(48);
            let pps = cfg.resolution()?.points_per_site;
            let ladder = wannier_stark_ladder(&lattice, band, box_sites, pps)?;
            let mut rows = Vec::new();
            for ell in 1..=3u32 {
                let rate = tunneling_rate(&lattice, &ladder, ell, alpha)?;
                let fit = empirical_j(u0, alpha, ell);
                rows.push(vec![
                    u0,
                    ell as F,
                    alpha,
                    rate.value_rad_s.abs(),
                    rate.matrix_element,
                    fit,
                    rate.value_rad_s.abs() / fit,
                ]);
            }
            if !empirical_j_in_window(u0) {
                eprintln!("warning: U0 = {u0} E_R outside the fit window [5, 20]");
            }
            output::write_csv(
                &cli.out.join("points.csv"),
                "U0_Er,ell,alpha,J_over_hbar_s,matrix_element,empirical_fit_s,ratio",
                &rows,
            )?;
            outputs.push("points.csv".into());
        }
        Command::Propagate { program, points, snapshots } => {
            let prog = match program {
                Some(p) => config::parse_program(&std::fs::read_to_string(p)?, &lattice)?,
                None => cfg.single_burst_program(&lattice, cli.paper_scale)?,
            };
            let band = cfg.get_usize_or("band", 1)?;
            let res = cfg.resolution()?;
            let sigma0 = cfg.get_f64_or("sigma0_sites", 5.0)?;
            let k0 = cfg.get_f64_or("k0", 0.0)?;
            let box_sites = cfg.box_sites()?.unwrap_or(128);
            let ladder_sites = if band == 2 { 80 } else { 48 };
            let ladder =
                wannier_stark_ladder(&lattice, band, ladder_sites, res.points_per_site)?;
            let grid = amlattice::grid::SpatialGrid::new(box_sites, res.points_per_site)?;
            let psi0 = prepare_state(
                &ladder,
                &grid,
                StateSpec::BlochPacket {
                    k0,
                    delta_k: 1.0 / (2.0 * std::f64::consts::PI * sigma0),
                    center_site: 0,
                },
            )?;
            let total = prog.total_duration();
            let times: Vec<F> =
                (1..=*points).map(|i| total * i as F / *points as F).collect();
            let out = propagate(&lattice, &prog, &psi0, &times, &res, *snapshots)?;
            let um = 1e6 / lattice.scales.wave_vector;
            let rows: Vec<Vec<F>> = out
                .observables
                .iter()
                .map(|o| vec![o.time, o.barycenter * um, o.rms_size * um, o.fidelity, o.norm])
                .collect();
            output::write_csv(
                &cli.out.join("points.csv"),
                "t_s,barycenter_um,rms_um,fidelity,norm",
                &rows,
            )?;
            outputs.push("points.csv".into());
            if let Some(snaps) = &out.snapshots {
                let path = cli.out.join("snapshots.bin");
                let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
                for (wf, o) in snaps.iter().zip(&out.observables) {
                    output::append_snapshot(&mut f, wf, o.time)?;
                }
                outputs.push("snapshots.bin".into());
            }
            run_meta = Some(serde_json::json!({
                "max_edge_amplitude": out.max_edge_amplitude,
                "final_norm": out.observables.last().map(|o| o.norm),
            }));
        }
        Command::Echo { points, ell } => {
            let ell = ell.unwrap_or(cfg.harmonic()?);
            let alpha = cfg.get_f64("alpha")?;
            let spec = cfg.ensemble(backend, cli.seed)?;
            let settings = RunSettings {
                resolution: cfg.resolution()?,
                box_sites: cfg.box_sites()?,
                record_members: cli.members,
            };
            let burst = cfg.burst_duration(&lattice, cli.paper_scale)?;
            let tau_ell = lattice.scales.bloch_period / ell as F;
            let n = points.unwrap_or(cfg.get_usize_or("echo_points", 10)?);
            if n < 2 {
                return Err(Error::validation("points", "need at least 2 scan points"));
            }
            let tfr_max = cfg.get_f64_or("tfr_max_tauell", 1.2)? * tau_ell;
            let t_frs: Vec<F> = (0..n)
                .map(|i| 0.02 * tau_ell + (tfr_max - 0.02 * tau_ell) * i as F / (n - 1) as F)
                .collect();
            let result = run_echo_scan(&lattice, ell, alpha, burst, &t_frs, &spec, &settings)?;
            output::write_points(&cli.out, &result)?;
            outputs.push("points.csv".into());
            if output::write_members(&cli.out, &result)?.is_some() {
                outputs.push("members.csv".into());
            }
            let pts: Vec<(F, F)> =
                result.points.iter().map(|p| (p.scan_value, p.mean)).collect();
            let fit = fit_echo(&pts)?;
            output::write_json(&cli.out.join("fit.json"), &fit)?;
            outputs.push("fit.json".into());
            run_meta = Some(serde_json::to_value(&result.meta).unwrap());
        }
        Command::BurstScan { points } => {
            let ell = cfg.harmonic()?;
            let alpha = cfg.get_f64("alpha")?;
            let phase = cfg.get_f64("phase_deg")?.to_radians();
            let mut spec = cfg.ensemble(backend, cli.seed)?;
            if spec.k_rms.is_none() {
                // the scan needs a narrow quasimomentum distribution
                spec.k_rms = Some(0.02);
            }
            let settings = RunSettings {
                resolution: cfg.resolution()?,
                box_sites: cfg.box_sites()?,
                record_members: cli.members,
            };
            let burst = cfg.burst_duration(&lattice, cli.paper_scale)?;
            let n = points.unwrap_or(cfg.get_usize_or("t0_points", 12)?);
            if n < 2 {
                return Err(Error::validation("points", "need at least 2 scan points"));
            }
            let t0_max = cfg.get_f64_or("t0_max_taub", 1.3)? * lattice.scales.bloch_period;
            let t0s: Vec<F> = (0..n).map(|i| t0_max * i as F / (n - 1) as F).collect();
            let result =
                run_burst_phase_scan(&lattice, ell, alpha, phase, burst, &t0s, &spec, &settings)?;
            output::write_points(&cli.out, &result)?;
            outputs.push("points.csv".into());
            let ts: Vec<F> = result.points.iter().map(|p| p.scan_value).collect();
            let ys: Vec<F> = result.points.iter().map(|p| p.mean).collect();
            let fit = fit_sinusoid(&ts, &ys)?;
            output::write_json(&cli.out.join("fit.json"), &fit)?;
            outputs.push("fit.json".into());
            run_meta = Some(serde_json::to_value(&result.meta).unwrap());
        }
        Command::Mirror => {
            let ell = cfg.harmonic()?;
            let alpha = cfg.get_f64("alpha")?;
            let mut spec = cfg.ensemble(backend, cli.seed)?;
            if spec.k_rms.is_none() {
                spec.k_rms = Some(0.02);
            }
            let settings = RunSettings {
                resolution: cfg.resolution()?,
                box_sites: cfg.box_sites()?,
                record_members: cli.members,
            };
            let burst = cfg.burst_duration(&lattice, cli.paper_scale)?;
            let t_fr = cfg.get_f64_or("mirror_tfr_taub", 0.5)? * lattice.scales.bloch_period;
            let samples = cfg.get_usize_or("mirror_samples", 8)?;
            let result = run_mirror(&lattice, ell, alpha, burst, t_fr, samples, &spec, &settings)?;
            output::write_points(&cli.out, &result)?;
            outputs.push("points.csv".into());
            if output::write_members(&cli.out, &result)?.is_some() {
                outputs.push("members.csv".into());
            }
            let speeds = mirror_speeds(&result, burst, t_fr)?;
            output::write_json(&cli.out.join("fit.json"), &speeds)?;
            outputs.push("fit.json".into());
            run_meta = Some(serde_json::to_value(&result.meta).unwrap());
        }
        Command::AlphaScan => {
            let ell = cfg.harmonic()?;
            let alphas = cfg.alphas()?;
            let spec = cfg.ensemble(backend, cli.seed)?;
            let settings = RunSettings {
                resolution: cfg.resolution()?,
                box_sites: cfg.box_sites()?,
                record_members: cli.members,
            };
            let burst = cfg.burst_duration(&lattice, cli.paper_scale)?;
            let result = run_alpha_scan(&lattice, ell, &alphas, burst, &spec, &settings)?;
            output::write_points(&cli.out, &result)?;
            outputs.push("points.csv".into());
            let xs: Vec<F> = result.points.iter().map(|p| p.scan_value).collect();
            let ys: Vec<F> = result.points.iter().map(|p| p.mean).collect();
            let fit = fit_linear_through_origin(&xs, &ys)?;
            output::write_json(&cli.out.join("fit.json"), &fit)?;
            outputs.push("fit.json".into());
            run_meta = Some(serde_json::to_value(&result.meta).unwrap());
        }
        Command::Fit { model, points, ell } => {
            let rows = read_numeric_csv(points)?;
            let fit = match model.as_str() {
                "echo" => {
                    let pts: Vec<(F, F)> = rows.iter().map(|r| (r[0], r[1])).collect();
                    fit_echo(&pts)?
                }
                "linear" => {
                    let xs: Vec<F> = rows.iter().map(|r| r[0]).collect();
                    let ys: Vec<F> = rows.iter().map(|r| r[1]).collect();
                    fit_linear_through_origin(&xs, &ys)?
                }
                "jscaling" => {
                    let samples: Vec<JSample<F>> = rows
                        .iter()
                        .map(|r| JSample { u0: r[0], ell: r[1] as u32, alpha: r[2], j_rad_s: r[3] })
                        .collect();
                    fit_j_scaling(&samples)?
                }
                "gravity" => {
                    let pts: Vec<(F, F)> = rows.iter().map(|r| (r[0], r[1])).collect();
                    estimate_g(&pts, &lattice, *ell)?
                }
                _ => unreachable!(),
            };
            output::write_json(&cli.out.join("fit.json"), &fit)?;
            outputs.push("fit.json".into());
        }
    }

    let manifest = RunManifest {
        tool: "amlattice",
        version: env!("CARGO_PKG_VERSION"),
        command: command_name(&cli.command).to_string(),
        config: cfg.resolved(),
        seed: cli.seed,
        jobs: cli.jobs,
        backend: format!("{backend:?}"),
        paper_scale: cli.paper_scale,
        outputs,
        wall_clock_s: clock.elapsed().as_secs_f64(),
        started_unix_s: started,
        run_meta,
    };
    manifest.write(&cli.out)?;
    Ok(())
}

/// Reads a CSV of numbers, skipping a non-numeric header row.
fn read_numeric_csv(path: &PathBuf) -> amlattice::Result<Vec<Vec<F>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<F>, _> =
            line.split(',').map(|t| t.trim().parse::<F>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if lineno == 0 => continue, // header
            Err(_) => {
                return Err(Error::Config {
                    line: Some(lineno + 1),
                    message: format!("non-numeric CSV row `{line}`"),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Config { line: None, message: "CSV contains no data rows".into() });
    }
    Ok(rows)
}
