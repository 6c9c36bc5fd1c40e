//! Complex wavefunction on a [`SpatialGrid`] and its observables.

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::num::{cnorm, Cplx, Real};
use rustfft::FftPlanner;

#[derive(Debug, Clone)]
pub struct WaveFunction<T> {
    pub grid: SpatialGrid<T>,
    pub amplitudes: Vec<Cplx<T>>,
}

impl<T: Real> WaveFunction<T> {
    pub fn new(grid: SpatialGrid<T>, amplitudes: Vec<Cplx<T>>) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::validation("amplitudes", "length does not match grid"));
        }
        Ok(WaveFunction { grid, amplitudes })
    }

    pub fn zero(grid: SpatialGrid<T>) -> Self {
        let n = grid.len();
        WaveFunction { grid, amplitudes: vec![Cplx::new(T::zero(), T::zero()); n] }
    }

    /// L2 norm, integral of |psi|^2 dz.
    pub fn norm(&self) -> T {
        let s: T = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        (s * self.grid.dz()).sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > T::zero() {
            let inv = T::one() / n;
            for a in &mut self.amplitudes {
                *a *= inv;
            }
        }
    }

    /// <z> in 1/k_L units.
    pub fn barycenter(&self) -> T {
        self.position_moments().0
    }

    /// (<z>, <z^2>) in 1/k_L units, normalized by the current norm.
    pub fn position_moments(&self) -> (T, T) {
        let mut m0 = T::zero();
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for (j, a) in self.amplitudes.iter().enumerate() {
            let w = a.norm_sqr();
            let z = self.grid.z(j);
            m0 += w;
            m1 += w * z;
            m2 += w * z * z;
        }
        (m1 / m0, m2 / m0)
    }

    /// RMS size sqrt(<z^2> - <z>^2) in 1/k_L units.
    pub fn rms_size(&self) -> T {
        let (m1, m2) = self.position_moments();
        (m2 - m1 * m1).max(T::zero()).sqrt()
    }

    /// Overlap <self|other> (includes dz weight).
    pub fn inner(&self, other: &Self) -> Cplx<T> {
        let mut acc = Cplx::new(T::zero(), T::zero());
        for (a, b) in self.amplitudes.iter().zip(&other.amplitudes) {
            acc += a.conj() * b;
        }
        acc * Cplx::new(self.grid.dz(), T::zero())
    }

    /// |<self|other>|, 1 for identical normalized states.
    pub fn fidelity(&self, other: &Self) -> T {
        cnorm(self.inner(other))
    }

    /// Largest |psi| within `guard_sites` lattice periods of either box end.
    pub fn edge_amplitude(&self, guard_sites: usize) -> T {
        let p = self.grid.points_per_site() * guard_sites;
        let n = self.amplitudes.len();
        let mut m = T::zero();
        for j in 0..p.min(n) {
            m = m.max(cnorm(self.amplitudes[j]));
            m = m.max(cnorm(self.amplitudes[n - 1 - j]));
        }
        m
    }

    /// Momentum distribution: (k in k_L units, probability per bin), bins in
    /// FFT order, probabilities summing to 1.
    pub fn momentum_distribution(&self) -> Vec<(T, T)> {
        let n = self.amplitudes.len();
        let mut buf = self.amplitudes.clone();
        let mut planner = FftPlanner::<T>::new();
        planner.plan_fft_forward(n).process(&mut buf);
        let total: T = buf.iter().map(|a| a.norm_sqr()).sum();
        self.grid
            .k_values()
            .into_iter()
            .zip(buf.iter())
            .map(|(k, a)| (k, a.norm_sqr() / total))
            .collect()
    }

    /// RMS quasimomentum spread about `center` (k_L units), with all momenta
    /// folded into the first Brillouin zone relative to the center.
    pub fn quasimomentum_rms(&self, center: T) -> T {
        let two = T::lit(2.0);
        let mut m2 = T::zero();
        for (k, p) in self.momentum_distribution() {
            let mut dk = (k - center) % two;
            if dk > T::one() {
                dk -= two;
            }
            if dk < -T::one() {
                dk += two;
            }
            m2 += p * dk * dk;
        }
        m2.sqrt()
    }

    /// Translates the state by a whole number of lattice sites, zero-filling
    /// at the vacated edge. Exact on the grid.
    pub fn shifted_by_sites(&self, sites: i64) -> Self {
        let shift = sites * self.grid.points_per_site() as i64;
        let n = self.amplitudes.len() as i64;
        let mut amps = vec![Cplx::new(T::zero(), T::zero()); self.amplitudes.len()];
        for j in 0..n {
            let src = j - shift;
            if src >= 0 && src < n {
                amps[j as usize] = self.amplitudes[src as usize];
            }
        }
        WaveFunction { grid: self.grid, amplitudes: amps }
    }
}
