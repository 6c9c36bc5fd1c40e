//! Wannier-Stark eigenstates of the tilted lattice by finite-box
//! diagonalization.
//!
//! The box has hard walls on potential barrier tops and is diagonalized in a
//! Dirichlet sine basis, where the kinetic term and all potential matrix
//! elements are analytic: the lattice couples sine indices through a single
//! cosine harmonic and the tilt through its odd cosine moments. Band
//! character is assigned by overlap with the eigenvectors of the untilted box
//! Hamiltonian (band projector), and only interior-site states are returned.

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::num::Real;
use crate::units::LatticeConfig;
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, Copy)]
pub struct WannierStarkOptions<T> {
    /// Sine-basis momentum cutoff in units of k_L.
    pub momentum_cutoff: T,
    /// Fraction of sites discarded at each box end.
    pub edge_fraction: f64,
    /// Largest tolerated |psi| in the outermost site of an interior state.
    pub edge_amplitude_limit: T,
    /// Minimum band-projector weight for a state to count as band-pure.
    pub min_band_weight: T,
}

impl<T: Real> Default for WannierStarkOptions<T> {
    fn default() -> Self {
        WannierStarkOptions {
            momentum_cutoff: T::lit(15.0),
            edge_fraction: 0.25,
            edge_amplitude_limit: T::lit(1e-8),
            min_band_weight: T::lit(0.6),
        }
    }
}

/// Localized eigenstates of one band of the tilted lattice, interior sites
/// only, ordered by site index.
#[derive(Debug, Clone, Serialize)]
pub struct WannierStarkLadder<T> {
    pub band_index: usize,
    pub box_sites: usize,
    #[serde(skip)]
    pub grid: SpatialGrid<T>,
    /// Lattice site index of each returned state.
    pub sites: Vec<i64>,
    /// Eigenenergies in E_R, same order as `sites`.
    pub site_energies: Vec<T>,
    /// Real eigenfunctions on the grid, same order as `sites`.
    #[serde(skip)]
    pub site_states: Vec<Vec<T>>,
    /// Largest relative deviation of consecutive spacings from hbar*omega_B.
    pub max_spacing_deviation: T,
    /// Band-projector weight of the least pure returned state.
    pub min_band_purity: T,
}

impl<T: Real> WannierStarkLadder<T> {
    /// Index into the ladder for a given lattice site.
    pub fn state_for_site(&self, site: i64) -> Option<usize> {
        self.sites.iter().position(|&s| s == site)
    }

    /// The most interior state: reference for translations.
    pub fn reference_index(&self) -> usize {
        let mid = (self.sites[0] + self.sites[self.sites.len() - 1]) / 2;
        self.state_for_site(mid).unwrap_or(self.sites.len() / 2)
    }
}

/// Both-band solve output.
#[derive(Debug, Clone)]
pub struct WannierStarkSolution<T> {
    pub band1: WannierStarkLadder<T>,
    pub band2: Option<WannierStarkLadder<T>>,
    /// Why band 2 is absent, when it is.
    pub band2_issue: Option<String>,
}

struct SineBox<T> {
    sites: usize,
    m_max: usize,
    length: T,
}

impl<T: Real> SineBox<T> {
    fn new(grid: &SpatialGrid<T>, cutoff: T) -> Self {
        let sites = grid.site_count();
        let m_max = (cutoff.to_f64c() * sites as f64).round() as usize;
        SineBox { sites, m_max, length: grid.length() }
    }

    /// Cosine moments c_p = (1/L) int V(x) cos(p pi x / L) dx of the box
    /// potential, local coordinate x in [0, L]. Analytic for tilt + lattice.
    fn cosine_moments(&self, depth: T, force: T, z_min: T) -> Vec<T> {
        let n = 2 * self.m_max + 1;
        let mut c = vec![T::zero(); n];
        let tilt = force / T::pi();
        // mean of the tilt over the box; lattice has zero mean
        c[0] = tilt * (z_min + self.length / T::lit(2.0));
        for p in 1..n {
            if p % 2 == 1 {
                // (1/L) int_0^L a x cos(p pi x/L) dx = -2 a L / (p pi)^2 for odd p
                let pp = T::pi() * T::lit(p as f64);
                c[p] = -T::lit(2.0) * tilt * self.length / (pp * pp);
            }
        }
        // lattice inside the box reads +(U0/2) cos(2x); its only cosine
        // harmonic over an even number of periods is p = 2*sites
        let p_lat = 2 * self.sites;
        if p_lat < n {
            c[p_lat] += depth / T::lit(4.0);
        }
        c
    }

    fn hamiltonian(&self, depth: T, force: T, z_min: T) -> DMatrix<T> {
        let m = self.m_max;
        let c = self.cosine_moments(depth, force, z_min);
        let s = T::lit(self.sites as f64);
        let mut h = DMatrix::<T>::zeros(m, m);
        for i in 0..m {
            let mi = (i + 1) as f64;
            for j in i..m {
                let mj = (j + 1) as f64;
                let diff = (mj - mi) as usize;
                let sum = (mj + mi) as usize;
                let mut v = c[diff] - c[sum];
                if i == j {
                    let k = T::lit(mi) / s; // sine momentum in k_L units
                    v += k * k;
                }
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    /// Evaluates a sine-coefficient vector on the grid, orthonormal
    /// normalization (sum |psi|^2 dz = 1).
    fn on_grid(&self, grid: &SpatialGrid<T>, coeffs: &[T]) -> Vec<T> {
        let n = grid.len();
        let scale = (T::lit(2.0) / self.length).sqrt();
        let mut out = vec![T::zero(); n];
        for (mi, &b) in coeffs.iter().enumerate() {
            if b == T::zero() {
                continue;
            }
            let m = (mi + 1) as f64;
            // rotate through sin(m pi j / n) with a complex recurrence
            let step = std::f64::consts::PI * m / n as f64;
            let (ws, wc) = step.sin_cos();
            let (ws, wc) = (T::lit(ws), T::lit(wc));
            let mut s = T::zero();
            let mut co = T::one();
            let amp = b * scale;
            for o in out.iter_mut().take(n) {
                *o += amp * s;
                let s_new = s * wc + co * ws;
                co = co * wc - s * ws;
                s = s_new;
            }
        }
        out
    }
}

fn eigh_sorted<T: Real>(h: DMatrix<T>, context: &'static str) -> Result<(Vec<T>, DMatrix<T>)> {
    let n = h.nrows();
    let eig = h
        .try_symmetric_eigen(T::default_epsilon(), 100_000)
        .ok_or_else(|| Error::numerical(context, "eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<T>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

/// Diagonalizes the tilted box and returns the band-1 ladder plus, when
/// resolvable, the band-2 ladder.
pub fn wannier_stark_solve<T: Real>(
    cfg: &LatticeConfig<T>,
    box_sites: usize,
    points_per_site: usize,
    opts: &WannierStarkOptions<T>,
) -> Result<WannierStarkSolution<T>> {
    if box_sites < 32 {
        return Err(Error::validation("box_sites", "must be >= 32"));
    }
    if opts.momentum_cutoff.to_f64c() >= points_per_site as f64 {
        return Err(Error::validation(
            "momentum_cutoff",
            "must stay below the grid Nyquist momentum (points_per_site in k_L units)",
        ));
    }
    let grid = SpatialGrid::<T>::new(box_sites, points_per_site)?;
    let sbox = SineBox::new(&grid, opts.momentum_cutoff);
    let depth = cfg.depth();
    let force = cfg.scales.dimensionless_force;

    let (energies, vectors) = eigh_sorted(
        sbox.hamiltonian(depth, force, grid.z_min()),
        "wannier_stark_solve(tilted)",
    )?;
    // Untilted box: eigenvectors come out grouped by band (bands do not
    // overlap in 1D), `box_sites` states per band.
    let (_, untilted) =
        eigh_sorted(sbox.hamiltonian(depth, T::zero(), grid.z_min()), "wannier_stark_solve(untilted)")?;

    // Band weights for every tilted state against bands 1 and 2.
    let s = box_sites;
    let overlaps = untilted.columns(0, 2 * s).transpose() * &vectors; // (2s) x M
    let m_dim = vectors.ncols();
    let mut best: Vec<(usize, T)> = Vec::with_capacity(m_dim); // (band, weight)
    for col in 0..m_dim {
        let mut w1 = T::zero();
        let mut w2 = T::zero();
        for row in 0..s {
            w1 += overlaps[(row, col)] * overlaps[(row, col)];
            w2 += overlaps[(row + s, col)] * overlaps[(row + s, col)];
        }
        if w2 > w1 {
            best.push((2, w2));
        } else {
            best.push((1, w1));
        }
    }

    let band1 = collect_band(cfg, &grid, &sbox, &energies, &vectors, &best, 1, opts)?;
    let (band2, band2_issue) =
        match collect_band(cfg, &grid, &sbox, &energies, &vectors, &best, 2, opts) {
            Ok(l) => (Some(l), None),
            Err(e) => (None, Some(e.to_string())),
        };
    Ok(WannierStarkSolution { band1, band2, band2_issue })
}

#[allow(clippy::too_many_arguments)]
fn collect_band<T: Real>(
    cfg: &LatticeConfig<T>,
    grid: &SpatialGrid<T>,
    sbox: &SineBox<T>,
    energies: &[T],
    vectors: &DMatrix<T>,
    band_of: &[(usize, T)],
    band: usize,
    opts: &WannierStarkOptions<T>,
) -> Result<WannierStarkLadder<T>> {
    let s = grid.site_count();
    let discard = ((s as f64) * opts.edge_fraction).ceil() as i64;
    let lo = grid.first_site() + discard;
    let hi = grid.last_site() - discard;

    let mut picked: Vec<(i64, T, Vec<T>, T)> = Vec::new(); // (site, energy, state, weight)
    for (col, &(b, w)) in band_of.iter().enumerate() {
        if b != band || w < opts.min_band_weight {
            continue;
        }
        let coeffs: Vec<T> = vectors.column(col).iter().copied().collect();
        let state = sbox.on_grid(grid, &coeffs);
        // density centroid, rounded to the nearest site
        let mut m0 = T::zero();
        let mut m1 = T::zero();
        for (j, &v) in state.iter().enumerate() {
            let p = v * v;
            m0 += p;
            m1 += p * grid.z(j);
        }
        let site_f = (m1 / m0 / T::pi()).to_f64c();
        let site = site_f.round() as i64;
        if site < lo || site > hi {
            continue;
        }
        picked.push((site, energies[col], state, w));
    }
    picked.sort_by_key(|p| p.0);
    picked.dedup_by_key(|p| p.0);

    if picked.len() < 2 {
        return Err(Error::numerical(
            "wannier_stark_solve",
            format!("band {band} has fewer than two clean interior states"),
        ));
    }
    // one state per interior site, no holes
    let contiguous = picked.windows(2).all(|w| w[1].0 - w[0].0 == 1);
    if !contiguous {
        return Err(Error::numerical(
            "wannier_stark_solve",
            format!("band {band} ladder has missing interior sites"),
        ));
    }

    // Fix the sign gauge so that translating state n by one site overlaps
    // positively with state n+1.
    let p = grid.points_per_site();
    for i in 1..picked.len() {
        let (head, tail) = picked.split_at_mut(i);
        let prev = &head[i - 1].2;
        let cur = &mut tail[0].2;
        let mut dot = T::zero();
        for j in p..grid.len() {
            dot += cur[j] * prev[j - p];
        }
        if dot < T::zero() {
            for v in cur.iter_mut() {
                *v = -*v;
            }
        }
    }

    // Edge-amplitude guard for every returned state.
    let edge_pts = p;
    let n = grid.len();
    let mut worst_edge = T::zero();
    for (_, _, state, _) in &picked {
        for j in 0..edge_pts {
            worst_edge = worst_edge.max(state[j].abs()).max(state[n - 1 - j].abs());
        }
    }
    if worst_edge > opts.edge_amplitude_limit {
        return Err(Error::BoxTooSmall {
            amplitude: worst_edge.to_f64c(),
            limit: opts.edge_amplitude_limit.to_f64c(),
            box_sites: s,
        });
    }

    let quantum = cfg.scales.dimensionless_force;
    let mut max_dev = T::zero();
    for w in picked.windows(2) {
        let spacing = w[1].1 - w[0].1;
        max_dev = max_dev.max(((spacing - quantum) / quantum).abs());
    }
    let min_purity = picked.iter().map(|p| p.3).fold(T::inf(), |a, b| a.min(b));

    Ok(WannierStarkLadder {
        band_index: band,
        box_sites: s,
        grid: *grid,
        sites: picked.iter().map(|p| p.0).collect(),
        site_energies: picked.iter().map(|p| p.1).collect(),
        site_states: picked.into_iter().map(|p| p.2).collect(),
        max_spacing_deviation: max_dev,
        min_band_purity: min_purity,
    })
}

/// Wannier-Stark ladder of one band (1 or 2).
pub fn wannier_stark_ladder<T: Real>(
    cfg: &LatticeConfig<T>,
    band: usize,
    box_sites: usize,
    points_per_site: usize,
) -> Result<WannierStarkLadder<T>> {
    let opts = WannierStarkOptions::default();
    let sol = wannier_stark_solve(cfg, box_sites, points_per_site, &opts)?;
    match band {
        1 => Ok(sol.band1),
        2 => sol.band2.ok_or_else(|| {
            Error::numerical(
                "wannier_stark_ladder",
                format!(
                    "band 2 not resolvable: {}",
                    sol.band2_issue.unwrap_or_else(|| "unknown".into())
                ),
            )
        }),
        _ => Err(Error::validation("band", "only bands 1 and 2 are supported")),
    }
}
