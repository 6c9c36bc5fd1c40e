//! Experiment drivers: thermal ensembles over quasimomentum, the echo scan,
//! the burst-switch-on-time scan, the atom-mirror trajectory, and the
//! modulation-amplitude scan, each runnable on the exact TDSE or on the
//! effective tight-binding backend.
//!
//! Ensembles are incoherent: members are Gaussian wavepackets at stratified
//! quasimomenta (midpoint rule over the zone), observables are pooled by
//! weighted second moments, amplitudes are never summed across members.
//! Member jobs run in parallel; the reduction is a fixed-order sequential
//! pass, so results are bit-identical for any worker count.

use crate::effective::{tunneling_rate, SiteState, TightBinding, TunnelingRate};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::num::Real;
use crate::program::ModulationProgram;
use crate::tdse::{self, prepare_state, Resolution, StateSpec};
use crate::units::LatticeConfig;
use crate::wstark::{wannier_stark_solve, WannierStarkLadder, WannierStarkOptions};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Backend {
    Tdse,
    TightBinding,
}

/// Thermal-ensemble recipe.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnsembleSpec<T> {
    pub backend: Backend,
    /// Stratified quasimomentum samples over the zone (midpoint rule).
    pub n_k: usize,
    /// Member envelope RMS in lattice sites; the pooled cloud has this
    /// spatial RMS, matching a site-Gaussian mixture.
    pub sigma0_sites: T,
    pub band: usize,
    /// Recorded for reproducibility; the sampling itself is deterministic.
    pub seed: u64,
    /// Center of the quasimomentum distribution (units of k_L).
    pub k_center: T,
    /// RMS of Gaussian stratum weights (units of k_L); `None` = uniform.
    pub k_rms: Option<T>,
}

impl<T: Real> Default for EnsembleSpec<T> {
    fn default() -> Self {
        EnsembleSpec {
            backend: Backend::Tdse,
            n_k: 32,
            sigma0_sites: T::lit(5.0),
            band: 1,
            seed: 0,
            k_center: T::zero(),
            k_rms: None,
        }
    }
}

/// One incoherent ensemble member: a Gaussian packet at quasimomentum `k0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Member<T> {
    pub k0: T,
    pub weight: T,
}

/// Stratified quasimomentum grid with midpoint nodes; weights uniform or
/// Gaussian about `k_center`, normalized to 1.
pub fn build_ensemble<T: Real>(spec: &EnsembleSpec<T>) -> Result<Vec<Member<T>>> {
    if spec.n_k < 8 {
        return Err(Error::validation("n_k", "need at least 8 quasimomentum strata"));
    }
    if !(spec.sigma0_sites > T::zero()) {
        return Err(Error::validation("sigma0_sites", "must be positive"));
    }
    if spec.band == 0 || spec.band > 2 {
        return Err(Error::validation("band", "only bands 1 and 2 are supported"));
    }
    let n = spec.n_k;
    let two = T::lit(2.0);
    let mut members: Vec<Member<T>> = (0..n)
        .map(|j| {
            let k0 = -T::one() + two * (T::lit(j as f64) + T::lit(0.5)) / T::lit(n as f64);
            let weight = match spec.k_rms {
                None => T::one(),
                Some(rms) => {
                    let mut d = (k0 - spec.k_center) % two;
                    if d > T::one() {
                        d -= two;
                    }
                    if d < -T::one() {
                        d += two;
                    }
                    (-d * d / (two * rms * rms)).exp()
                }
            };
            Member { k0, weight }
        })
        .collect();
    let total: T = members.iter().map(|m| m.weight).sum();
    if !(total > T::zero()) {
        return Err(Error::validation("k_rms", "all stratum weights vanished"));
    }
    for m in &mut members {
        m.weight /= total;
    }
    Ok(members)
}

/// Quasimomentum RMS of a member packet (units of k_L).
pub fn member_delta_k<T: Real>(spec: &EnsembleSpec<T>) -> T {
    T::one() / (T::lit(2.0) * T::pi() * spec.sigma0_sites)
}

/// Total quasimomentum RMS of the ensemble about its center: stratum spread
/// plus the member packet width in quadrature.
pub fn ensemble_momentum_rms<T: Real>(spec: &EnsembleSpec<T>) -> Result<T> {
    let members = build_ensemble(spec)?;
    let mean: T = members.iter().map(|m| m.weight * m.k0).sum();
    let var: T = members.iter().map(|m| m.weight * (m.k0 - mean) * (m.k0 - mean)).sum();
    let dk = member_delta_k(spec);
    Ok((var + dk * dk).sqrt())
}

/// Solver knobs for experiment runs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunSettings {
    pub resolution: Resolution,
    /// Propagation box (lattice sites); `None` sizes it from the expected
    /// transport distance.
    pub box_sites: Option<usize>,
    /// Keep per-member traces in the result.
    pub record_members: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { resolution: Resolution::default(), box_sites: None, record_members: false }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanPoint<T> {
    pub scan_value: T,
    pub mean: T,
    /// Weighted member-to-member standard deviation of the observable.
    pub spread: T,
    pub n_members: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberTrace<T> {
    pub scan_value: T,
    pub k0: T,
    pub weight: T,
    pub times: Vec<T>,
    pub barycenter_um: Vec<T>,
    pub rms_um: Vec<T>,
}

/// Run provenance and derived quantities worth keeping with the data.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta<T> {
    pub backend: Backend,
    pub n_k: usize,
    pub sigma0_sites: T,
    pub band: usize,
    pub seed: u64,
    pub box_sites: usize,
    pub points_per_site: usize,
    pub ladder_sites: usize,
    /// Tunneling rate used by the run (E_R and 1/s).
    pub j_er: T,
    pub j_rad_s: T,
    pub matrix_element: T,
    pub ladder_spacing_deviation: T,
    pub bloch_period_s: T,
    pub max_edge_amplitude: T,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult<T> {
    pub scan_name: String,
    pub observable: String,
    pub points: Vec<ScanPoint<T>>,
    /// Named auxiliary series aligned with `points`.
    pub aux: Vec<(String, Vec<T>)>,
    pub members: Option<Vec<MemberTrace<T>>>,
    pub meta: RunMeta<T>,
}

/// (mean, variance) of the pooled distribution from per-member
/// (weight, mean, variance) triples.
pub fn pool_moments<T: Real>(parts: &[(T, T, T)]) -> (T, T) {
    let mut m1 = T::zero();
    let mut m2 = T::zero();
    for &(w, mean, var) in parts {
        m1 += w * mean;
        m2 += w * (var + mean * mean);
    }
    (m1, (m2 - m1 * m1).max(T::zero()))
}

fn weighted_std<T: Real>(values: &[(T, T)]) -> T {
    let mean: T = values.iter().map(|&(w, v)| w * v).sum();
    let var: T = values.iter().map(|&(w, v)| w * (v - mean) * (v - mean)).sum();
    var.max(T::zero()).sqrt()
}

/// Per-member observables at the requested times (dimensionless lengths).
#[derive(Debug, Clone)]
struct MemberSeries<T> {
    barycenter: Vec<T>,
    variance: Vec<T>,
    max_edge: T,
}

struct Engine<T> {
    cfg: LatticeConfig<T>,
    ladder: WannierStarkLadder<T>,
    tb: TightBinding<T>,
    rate_unit: TunnelingRate<T>,
    grid: SpatialGrid<T>,
    tb_window: usize,
    backend: Backend,
    sigma0_sites: T,
    resolution: Resolution,
    flags: Vec<String>,
}

impl<T: Real> Engine<T> {
    /// Prepares ladder, couplings, and boxes for a run whose bursts use
    /// harmonic `ell` with amplitude up to `alpha` for `total_burst_s`
    /// seconds in total.
    fn new(
        cfg: &LatticeConfig<T>,
        spec: &EnsembleSpec<T>,
        settings: &RunSettings,
        ell: u32,
        alpha: T,
        total_burst_s: T,
    ) -> Result<Self> {
        if cfg.scales.untiltable() {
            return Err(Error::validation("gravity", "protocols need a tilted lattice"));
        }
        let pps = settings.resolution.points_per_site;
        let ladder_sites = if spec.band == 2 { 80 } else { 48 };
        let opts = WannierStarkOptions::default();
        let sol = wannier_stark_solve(cfg, ladder_sites, pps, &opts)?;
        let ladder = match spec.band {
            1 => sol.band1,
            2 => sol.band2.ok_or_else(|| {
                Error::numerical(
                    "protocol",
                    format!(
                        "band 2 not resolvable: {}",
                        sol.band2_issue.unwrap_or_else(|| "unknown".into())
                    ),
                )
            })?,
            _ => unreachable!(),
        };
        let rate_unit = tunneling_rate(cfg, &ladder, ell, T::one())?;
        let tb = TightBinding::from_ladder(cfg, &ladder, &[ell])?;

        // transport estimate in sites: ballistic front of the effective band
        let tau = total_burst_s * cfg.scales.recoil_frequency;
        let front =
            T::lit(ell as f64) * (alpha * rate_unit.value_er).abs() * tau;
        let half_extent = front.to_f64c() * 1.6 + 6.0 * spec.sigma0_sites.to_f64c() + 8.0;
        let box_sites = match settings.box_sites {
            Some(s) => s,
            None => {
                let mut s = 32usize;
                while (s as f64) < 2.0 * half_extent {
                    s *= 2;
                }
                s
            }
        };
        let grid = SpatialGrid::new(box_sites, pps)?;
        let tb_window = (2.0 * half_extent).ceil() as usize + 2;
        let tb_window = tb_window.next_power_of_two().max(64);
        Ok(Engine {
            cfg: *cfg,
            ladder,
            tb,
            rate_unit,
            grid,
            tb_window,
            backend: spec.backend,
            sigma0_sites: spec.sigma0_sites,
            resolution: settings.resolution,
            flags: Vec::new(),
        })
    }

    fn meta(&self, alpha: T, spec: &EnsembleSpec<T>, max_edge: T) -> RunMeta<T> {
        RunMeta {
            backend: self.backend,
            n_k: spec.n_k,
            sigma0_sites: spec.sigma0_sites,
            band: spec.band,
            seed: spec.seed,
            box_sites: self.grid.site_count(),
            points_per_site: self.grid.points_per_site(),
            ladder_sites: self.ladder.box_sites,
            j_er: alpha * self.rate_unit.value_er,
            j_rad_s: alpha * self.rate_unit.value_rad_s,
            matrix_element: self.rate_unit.matrix_element,
            ladder_spacing_deviation: self.ladder.max_spacing_deviation,
            bloch_period_s: self.cfg.scales.bloch_period,
            max_edge_amplitude: max_edge,
            flags: self.flags.clone(),
        }
    }

    /// Runs one member through `program`, sampling at `times` (s).
    fn run_member(
        &self,
        member: &Member<T>,
        program: &ModulationProgram<T>,
        times: &[T],
    ) -> Result<MemberSeries<T>> {
        match self.backend {
            Backend::Tdse => {
                let psi0 = prepare_state(
                    &self.ladder,
                    &self.grid,
                    StateSpec::BlochPacket {
                        k0: member.k0,
                        delta_k: T::one() / (T::lit(2.0) * T::pi() * self.sigma0_sites),
                        center_site: 0,
                    },
                )?;
                let out = tdse::propagate(&self.cfg, program, &psi0, times, &self.resolution, false)?;
                Ok(MemberSeries {
                    barycenter: out.observables.iter().map(|o| o.barycenter).collect(),
                    variance: out.observables.iter().map(|o| o.rms_size * o.rms_size).collect(),
                    max_edge: out.max_edge_amplitude,
                })
            }
            Backend::TightBinding => {
                let psi0 = SiteState::gaussian(self.tb_window, 0, self.sigma0_sites, member.k0);
                let samples = self.tb.propagate(&psi0, program, times)?;
                Ok(MemberSeries {
                    barycenter: samples.iter().map(|s| s.barycenter).collect(),
                    variance: samples.iter().map(|s| s.rms_size * s.rms_size).collect(),
                    max_edge: T::zero(),
                })
            }
        }
    }

    /// Runs every (scan point, member) job in parallel and reduces in member
    /// order. `programs[i]` pairs with `times[i]`.
    fn run_matrix(
        &self,
        members: &[Member<T>],
        programs: &[ModulationProgram<T>],
        times: &[Vec<T>],
    ) -> Result<Vec<Vec<MemberSeries<T>>>> {
        let jobs: Vec<(usize, usize)> = (0..programs.len())
            .flat_map(|s| (0..members.len()).map(move |m| (s, m)))
            .collect();
        let outcomes: Vec<(usize, usize, Result<MemberSeries<T>>)> = jobs
            .par_iter()
            .map(|&(s, m)| (s, m, self.run_member(&members[m], &programs[s], &times[s])))
            .collect();
        let mut table: Vec<Vec<Option<MemberSeries<T>>>> =
            vec![vec![None; members.len()]; programs.len()];
        for (s, m, r) in outcomes {
            let series = r.map_err(|e| {
                Error::numerical(
                    "protocol",
                    format!("scan point {s}, member {m} (k0 = {}): {e}", members[m].k0),
                )
            })?;
            table[s][m] = Some(series);
        }
        Ok(table.into_iter().map(|row| row.into_iter().map(|x| x.unwrap()).collect()).collect())
    }

    fn um(&self, z_dimless: T) -> T {
        z_dimless / self.cfg.scales.wave_vector * T::lit(1e6)
    }
}

/// Echo scan: two identical bursts separated by a variable freezing time;
/// observable is the pooled RMS cloud size (um) after the second burst.
#[allow(clippy::too_many_arguments)]
pub fn run_echo_scan<T: Real>(
    cfg: &LatticeConfig<T>,
    ell: u32,
    alpha: T,
    burst_s: T,
    t_fr_values: &[T],
    spec: &EnsembleSpec<T>,
    settings: &RunSettings,
) -> Result<ExperimentResult<T>> {
    let tau_b = cfg.scales.bloch_period;
    if burst_s < T::lit(5.0) * tau_b {
        return Err(Error::validation("burst_s", "echo bursts must last at least 5 Bloch periods"));
    }
    if t_fr_values.is_empty() {
        return Err(Error::validation("t_fr_values", "empty scan"));
    }
    let mut engine = Engine::new(cfg, spec, settings, ell, alpha, T::lit(2.0) * burst_s)?;
    // exact refocusing needs bursts commensurate with the reduced period
    let tau_ell = tau_b / T::lit(ell as f64);
    let ratio = burst_s / tau_ell;
    if (ratio - ratio.round()).abs() > T::lit(1e-6) {
        engine.flags.push(format!(
            "burst duration is not a multiple of tau_B/ell (ratio {ratio}); echo minima shift"
        ));
    }
    let members = build_ensemble(spec)?;
    let programs: Vec<ModulationProgram<T>> = t_fr_values
        .iter()
        .map(|&t_fr| ModulationProgram::echo(burst_s, ell, alpha, T::zero(), t_fr))
        .collect();
    let times: Vec<Vec<T>> = programs.iter().map(|p| vec![p.total_duration()]).collect();
    let table = engine.run_matrix(&members, &programs, &times)?;

    let mut points = Vec::with_capacity(t_fr_values.len());
    let mut max_edge = T::zero();
    let mut member_traces = Vec::new();
    for (i, row) in table.iter().enumerate() {
        let parts: Vec<(T, T, T)> =
            row.iter().zip(&members).map(|(s, m)| (m.weight, s.barycenter[0], s.variance[0])).collect();
        let (_, var) = pool_moments(&parts);
        let sigma_um = engine.um(var.sqrt());
        let spread = weighted_std(
            &row.iter()
                .zip(&members)
                .map(|(s, m)| (m.weight, engine.um(s.variance[0].sqrt())))
                .collect::<Vec<_>>(),
        );
        for (s, m) in row.iter().zip(&members) {
            max_edge = max_edge.max(s.max_edge);
            if settings.record_members {
                member_traces.push(MemberTrace {
                    scan_value: t_fr_values[i],
                    k0: m.k0,
                    weight: m.weight,
                    times: vec![programs[i].total_duration()],
                    barycenter_um: vec![engine.um(s.barycenter[0])],
                    rms_um: vec![engine.um(s.variance[0].sqrt())],
                });
            }
        }
        points.push(ScanPoint {
            scan_value: t_fr_values[i],
            mean: sigma_um,
            spread,
            n_members: members.len(),
        });
    }
    // pooled initial size for reference
    let sigma0_um = engine.um(initial_pooled_sigma(&engine, &members)?);
    Ok(ExperimentResult {
        scan_name: "t_fr_s".into(),
        observable: "rms_um".into(),
        points,
        aux: vec![("sigma0_um".into(), vec![sigma0_um])],
        members: settings.record_members.then_some(member_traces),
        meta: engine.meta(alpha, spec, max_edge),
    })
}

fn initial_pooled_sigma<T: Real>(engine: &Engine<T>, members: &[Member<T>]) -> Result<T> {
    let mut parts = Vec::with_capacity(members.len());
    for m in members {
        let (mean, var) = match engine.backend {
            Backend::Tdse => {
                let psi = prepare_state(
                    &engine.ladder,
                    &engine.grid,
                    StateSpec::BlochPacket {
                        k0: m.k0,
                        delta_k: T::one() / (T::lit(2.0) * T::pi() * engine.sigma0_sites),
                        center_site: 0,
                    },
                )?;
                let (m1, m2) = psi.position_moments();
                (m1, m2 - m1 * m1)
            }
            Backend::TightBinding => {
                let psi = SiteState::gaussian(engine.tb_window, 0, engine.sigma0_sites, m.k0);
                let (m1, m2) = psi.position_moments();
                (m1, m2 - m1 * m1)
            }
        };
        parts.push((m.weight, mean, var));
    }
    let (_, var) = pool_moments(&parts);
    Ok(var.sqrt())
}

/// Barycentric displacement (um) after a single burst vs its switch-on time.
#[allow(clippy::too_many_arguments)]
pub fn run_burst_phase_scan<T: Real>(
    cfg: &LatticeConfig<T>,
    ell: u32,
    alpha: T,
    phase: T,
    burst_s: T,
    t0_values: &[T],
    spec: &EnsembleSpec<T>,
    settings: &RunSettings,
) -> Result<ExperimentResult<T>> {
    let k_rms = ensemble_momentum_rms(spec)?;
    let limit = T::lit(0.2) / T::lit(ell as f64);
    if k_rms >= limit {
        return Err(Error::validation(
            "spec",
            format!("ensemble momentum RMS {k_rms} exceeds 0.2 k_L / ell = {limit}"),
        ));
    }
    if t0_values.is_empty() {
        return Err(Error::validation("t0_values", "empty scan"));
    }
    let mut engine = Engine::new(cfg, spec, settings, ell, alpha, burst_s)?;
    if phase != T::zero() {
        // a nonzero switch-on phase quenches the depth and ejects a small
        // above-barrier fraction; tolerate the resulting edge amplitude
        engine.resolution.guard_amplitude = engine.resolution.guard_amplitude.max(0.05);
        engine.flags.push("nonzero drive phase: depth quench at switch-on".into());
    }
    let members = build_ensemble(spec)?;
    let programs: Vec<ModulationProgram<T>> = t0_values
        .iter()
        .map(|&t0| ModulationProgram::delayed_burst(t0, burst_s, ell, alpha, phase))
        .collect();
    let times: Vec<Vec<T>> = programs.iter().map(|p| vec![p.total_duration()]).collect();
    let table = engine.run_matrix(&members, &programs, &times)?;

    let mut points = Vec::with_capacity(t0_values.len());
    let mut max_edge = T::zero();
    let x0 = {
        let parts: Vec<(T, T, T)> = members
            .iter()
            .map(|m| (m.weight, T::zero(), T::zero()))
            .collect();
        pool_moments(&parts).0
    };
    for (i, row) in table.iter().enumerate() {
        let parts: Vec<(T, T, T)> =
            row.iter().zip(&members).map(|(s, m)| (m.weight, s.barycenter[0], s.variance[0])).collect();
        let (mean, _) = pool_moments(&parts);
        let spread = weighted_std(
            &row.iter()
                .zip(&members)
                .map(|(s, m)| (m.weight, engine.um(s.barycenter[0])))
                .collect::<Vec<_>>(),
        );
        for s in row {
            max_edge = max_edge.max(s.max_edge);
        }
        points.push(ScanPoint {
            scan_value: t0_values[i],
            mean: engine.um(mean - x0),
            spread,
            n_members: members.len(),
        });
    }
    Ok(ExperimentResult {
        scan_name: "t0_s".into(),
        observable: "displacement_um".into(),
        points,
        aux: Vec::new(),
        members: None,
        meta: engine.meta(alpha, spec, max_edge),
    })
}

/// Atom-mirror trajectory: burst, freeze for `t_fr`, identical second burst.
/// Points carry the pooled barycenter (um) vs time; the pooled RMS size (um)
/// rides along in `aux`.
#[allow(clippy::too_many_arguments)]
pub fn run_mirror<T: Real>(
    cfg: &LatticeConfig<T>,
    ell: u32,
    alpha: T,
    burst_s: T,
    t_fr: T,
    samples_per_burst: usize,
    spec: &EnsembleSpec<T>,
    settings: &RunSettings,
) -> Result<ExperimentResult<T>> {
    if samples_per_burst < 2 {
        return Err(Error::validation("samples_per_burst", "need at least 2"));
    }
    let engine = Engine::new(cfg, spec, settings, ell, alpha, T::lit(2.0) * burst_s)?;
    let members = build_ensemble(spec)?;
    let program = ModulationProgram::echo(burst_s, ell, alpha, T::zero(), t_fr);
    let total = program.total_duration();
    // sample each burst uniformly plus the freeze endpoint
    let mut times: Vec<T> = Vec::new();
    for i in 1..=samples_per_burst {
        times.push(burst_s * T::lit(i as f64 / samples_per_burst as f64));
    }
    times.push(burst_s + t_fr);
    for i in 1..=samples_per_burst {
        times.push(burst_s + t_fr + burst_s * T::lit(i as f64 / samples_per_burst as f64));
    }
    debug_assert!(*times.last().unwrap() <= total * (T::one() + T::lit(1e-12)));

    let table = engine.run_matrix(&members, &[program], &[times.clone()])?;
    let row = &table[0];
    let mut points = Vec::with_capacity(times.len());
    let mut rms_um = Vec::with_capacity(times.len());
    let mut max_edge = T::zero();
    for s in row {
        max_edge = max_edge.max(s.max_edge);
    }
    for (i, &t) in times.iter().enumerate() {
        let parts: Vec<(T, T, T)> =
            row.iter().zip(&members).map(|(s, m)| (m.weight, s.barycenter[i], s.variance[i])).collect();
        let (mean, var) = pool_moments(&parts);
        let spread = weighted_std(
            &row.iter()
                .zip(&members)
                .map(|(s, m)| (m.weight, engine.um(s.barycenter[i])))
                .collect::<Vec<_>>(),
        );
        points.push(ScanPoint {
            scan_value: t,
            mean: engine.um(mean),
            spread,
            n_members: members.len(),
        });
        rms_um.push(engine.um(var.sqrt()));
    }
    let sigma0_um = engine.um(initial_pooled_sigma(&engine, &members)?);
    let mut member_traces = Vec::new();
    if settings.record_members {
        for (s, m) in row.iter().zip(&members) {
            member_traces.push(MemberTrace {
                scan_value: T::zero(),
                k0: m.k0,
                weight: m.weight,
                times: times.clone(),
                barycenter_um: s.barycenter.iter().map(|&b| engine.um(b)).collect(),
                rms_um: s.variance.iter().map(|&v| engine.um(v.sqrt())).collect(),
            });
        }
    }
    Ok(ExperimentResult {
        scan_name: "t_s".into(),
        observable: "barycenter_um".into(),
        points,
        aux: vec![("rms_um".into(), rms_um), ("sigma0_um".into(), vec![sigma0_um])],
        members: settings.record_members.then_some(member_traces),
        meta: engine.meta(alpha, spec, max_edge),
    })
}

/// Mirror figures of merit extracted from a [`run_mirror`] trajectory.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MirrorSpeeds<T> {
    /// Slope of the barycenter during the first burst (mm/s).
    pub v_burst1_mm_s: T,
    /// Slope during the second burst (mm/s).
    pub v_burst2_mm_s: T,
    pub sigma_initial_um: T,
    pub sigma_final_um: T,
}

/// Linear-fit speeds over each burst window of a mirror trajectory.
pub fn mirror_speeds<T: Real>(
    result: &ExperimentResult<T>,
    burst_s: T,
    t_fr: T,
) -> Result<MirrorSpeeds<T>> {
    let rms = &result
        .aux
        .iter()
        .find(|(n, _)| n == "rms_um")
        .ok_or_else(|| Error::validation("result", "missing rms_um series"))?
        .1;
    let sigma0 = result
        .aux
        .iter()
        .find(|(n, _)| n == "sigma0_um")
        .map(|(_, v)| v[0])
        .ok_or_else(|| Error::validation("result", "missing sigma0_um"))?;
    let slope = |lo: T, hi: T| -> T {
        let pts: Vec<(T, T)> = result
            .points
            .iter()
            .filter(|p| p.scan_value >= lo - T::lit(1e-15) && p.scan_value <= hi + T::lit(1e-15))
            .map(|p| (p.scan_value, p.mean))
            .collect();
        // closed-form least squares line
        let n = T::lit(pts.len() as f64);
        let sx: T = pts.iter().map(|p| p.0).sum();
        let sy: T = pts.iter().map(|p| p.1).sum();
        let sxx: T = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: T = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    // um/s -> mm/s
    let to_mm = T::lit(1e-3);
    let v1 = slope(T::zero(), burst_s) * to_mm;
    let v2 = slope(burst_s + t_fr, T::lit(2.0) * burst_s + t_fr) * to_mm;
    let sigma_final = *rms.last().unwrap();
    Ok(MirrorSpeeds {
        v_burst1_mm_s: v1,
        v_burst2_mm_s: v2,
        sigma_initial_um: sigma0,
        sigma_final_um: sigma_final,
    })
}

/// Spread speed (mm/s) vs modulation amplitude under a single resonant burst.
#[allow(clippy::too_many_arguments)]
pub fn run_alpha_scan<T: Real>(
    cfg: &LatticeConfig<T>,
    ell: u32,
    alphas: &[T],
    burst_s: T,
    spec: &EnsembleSpec<T>,
    settings: &RunSettings,
) -> Result<ExperimentResult<T>> {
    if alphas.is_empty() {
        return Err(Error::validation("alphas", "empty scan"));
    }
    for &a in alphas {
        if !(a >= T::zero() && a < T::one()) {
            return Err(Error::validation("alphas", "amplitudes must lie in [0, 1)"));
        }
    }
    let alpha_max = alphas.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let engine = Engine::new(cfg, spec, settings, ell, alpha_max, burst_s)?;
    let members = build_ensemble(spec)?;
    // sample halfway and at the end: the variance growth between the two is
    // past the switch-on transient
    let t1 = burst_s / T::lit(2.0);
    let t2 = burst_s;
    let mut programs = Vec::new();
    let mut scan_alpha = Vec::new();
    for &a in alphas {
        if a == T::zero() {
            continue; // handled analytically below: no drive, no spreading
        }
        programs.push(ModulationProgram::single_burst(burst_s, ell, a, T::zero()));
        scan_alpha.push(a);
    }
    let times: Vec<Vec<T>> = programs.iter().map(|_| vec![t1, t2]).collect();
    let table = engine.run_matrix(&members, &programs, &times)?;

    let omega_r = cfg.scales.recoil_frequency;
    let t1d = t1 * omega_r;
    let t2d = t2 * omega_r;
    let mut points = Vec::with_capacity(alphas.len());
    let mut max_edge = T::zero();
    let mut rows = table.iter().zip(&scan_alpha).peekable();
    for &a in alphas {
        if a == T::zero() {
            points.push(ScanPoint {
                scan_value: a,
                mean: T::zero(),
                spread: T::zero(),
                n_members: members.len(),
            });
            continue;
        }
        let (row, _) = rows.next().unwrap();
        let parts1: Vec<(T, T, T)> =
            row.iter().zip(&members).map(|(s, m)| (m.weight, s.barycenter[0], s.variance[0])).collect();
        let parts2: Vec<(T, T, T)> =
            row.iter().zip(&members).map(|(s, m)| (m.weight, s.barycenter[1], s.variance[1])).collect();
        let (_, var1) = pool_moments(&parts1);
        let (_, var2) = pool_moments(&parts2);
        let v_dimless = ((var2 - var1) / (t2d * t2d - t1d * t1d)).max(T::zero()).sqrt();
        let v_mm_s = v_dimless * cfg.scales.velocity_unit() * T::lit(1e3);
        // member-level speeds for the error bar
        let spread = weighted_std(
            &row.iter()
                .zip(&members)
                .map(|(s, m)| {
                    let v = ((s.variance[1] - s.variance[0]) / (t2d * t2d - t1d * t1d))
                        .max(T::zero())
                        .sqrt();
                    (m.weight, v * cfg.scales.velocity_unit() * T::lit(1e3))
                })
                .collect::<Vec<_>>(),
        );
        for s in row {
            max_edge = max_edge.max(s.max_edge);
        }
        points.push(ScanPoint { scan_value: a, mean: v_mm_s, spread, n_members: members.len() });
    }
    Ok(ExperimentResult {
        scan_name: "alpha".into(),
        observable: "spread_speed_mm_s".into(),
        points,
        aux: Vec::new(),
        members: None,
        meta: engine.meta(alpha_max, spec, max_edge),
    })
}
