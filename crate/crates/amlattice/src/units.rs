//! Physical parameters, derived scales, and the dimensionless unit system.
//!
//! Internal convention used everywhere downstream: hbar = 1, energies in the
//! photon recoil energy E_R, lengths in 1/k_L, times in 1/omega_R. In these
//! units the kinetic operator is k^2 (k in units of k_L), lattice sites sit at
//! z = n*pi, and the tilt adds (F/pi) * z to the potential with
//! F = omega_B / omega_R.

use crate::error::{Error, Result};
use crate::num::Real;
use serde::Serialize;

/// Unified atomic mass unit (kg).
pub const ATOMIC_MASS_KG: f64 = 1.660_539_066_60e-27;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant (J s).
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Sr-88 mass in atomic mass units.
pub const SR88_MASS_U: f64 = 87.9056;

/// Static lattice and gravity parameters, in SI except the depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalParams<T> {
    /// Atomic mass (kg).
    pub atomic_mass: T,
    /// Lattice laser wavelength (m).
    pub lattice_wavelength: T,
    /// Gravity along the lattice axis (m/s^2). Zero is allowed and flags the
    /// configuration as untiltable.
    pub gravity: T,
    /// Lattice depth U_0 in recoil energies.
    pub lattice_depth: T,
}

impl<T: Real> PhysicalParams<T> {
    pub fn new(mass_u: T, lattice_wavelength: T, gravity: T, lattice_depth: T) -> Result<Self> {
        let p = PhysicalParams {
            atomic_mass: mass_u * T::lit(ATOMIC_MASS_KG),
            lattice_wavelength,
            gravity,
            lattice_depth,
        };
        p.validate()?;
        Ok(p)
    }

    /// Sr-88 in a 532 nm lattice under standard gravity, at the given depth.
    pub fn sr88(lattice_depth: T) -> Result<Self> {
        Self::new(T::lit(SR88_MASS_U), T::lit(532e-9), T::lit(9.805), lattice_depth)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.atomic_mass > T::zero()) {
            return Err(Error::validation("atomic_mass", "must be strictly positive"));
        }
        if !(self.lattice_wavelength > T::zero()) {
            return Err(Error::validation("lattice_wavelength", "must be strictly positive"));
        }
        if !(self.gravity >= T::zero()) {
            return Err(Error::validation("gravity", "must be non-negative"));
        }
        if !(self.lattice_depth >= T::zero() && self.lattice_depth <= T::lit(50.0)) {
            return Err(Error::validation(
                "lattice_depth",
                format!("{} E_R outside the validated range [0, 50]", self.lattice_depth),
            ));
        }
        Ok(())
    }
}

/// Scales derived from [`PhysicalParams`]; fixes the dimensionless system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedScales<T> {
    /// Recoil energy E_R = h^2 / (2 m lambda^2) (J).
    pub recoil_energy: T,
    /// Recoil angular frequency omega_R = E_R / hbar (rad/s).
    pub recoil_frequency: T,
    /// Lattice period d = lambda / 2 (m).
    pub lattice_period: T,
    /// Laser wave vector k_L = 2 pi / lambda (1/m).
    pub wave_vector: T,
    /// Bloch angular frequency omega_B = m g d / hbar (rad/s).
    pub bloch_frequency: T,
    /// Bloch period tau_B = 2 pi / omega_B (s); infinite when untiltable.
    pub bloch_period: T,
    /// Dimensionless force F = omega_B / omega_R: the Wannier-Stark ladder
    /// spacing in E_R, equal to the tilt slope per site.
    pub dimensionless_force: T,
}

impl<T: Real> DerivedScales<T> {
    /// True when gravity is zero: no tilt, no Bloch oscillation.
    pub fn untiltable(&self) -> bool {
        self.bloch_frequency == T::zero()
    }

    /// Velocity unit omega_R / k_L (m/s).
    pub fn velocity_unit(&self) -> T {
        self.recoil_frequency / self.wave_vector
    }

    /// Dimensionless Bloch period omega_R * tau_B = 2 pi / F.
    pub fn bloch_period_dimensionless(&self) -> T {
        T::two_pi() / self.dimensionless_force
    }
}

/// Computes all derived scales from validated physical parameters.
pub fn derive_scales<T: Real>(p: &PhysicalParams<T>) -> Result<DerivedScales<T>> {
    p.validate()?;
    let h = T::lit(PLANCK_H);
    let hbar = T::lit(HBAR);
    let two = T::lit(2.0);
    let recoil_energy = h * h / (two * p.atomic_mass * p.lattice_wavelength * p.lattice_wavelength);
    let recoil_frequency = recoil_energy / hbar;
    let lattice_period = p.lattice_wavelength / two;
    let wave_vector = T::two_pi() / p.lattice_wavelength;
    let bloch_frequency = p.atomic_mass * p.gravity * lattice_period / hbar;
    let bloch_period = if bloch_frequency > T::zero() {
        T::two_pi() / bloch_frequency
    } else {
        T::inf()
    };
    Ok(DerivedScales {
        recoil_energy,
        recoil_frequency,
        lattice_period,
        wave_vector,
        bloch_frequency,
        bloch_period,
        dimensionless_force: bloch_frequency / recoil_frequency,
    })
}

/// Gravity that reproduces a given Bloch frequency; used to anchor the
/// configuration on a measured omega_B instead of a local-g guess.
pub fn gravity_for_bloch_frequency<T: Real>(p: &PhysicalParams<T>, omega_b: T) -> T {
    let hbar = T::lit(HBAR);
    let d = p.lattice_wavelength / T::lit(2.0);
    hbar * omega_b / (p.atomic_mass * d)
}

/// Unit tags accepted by the dimensionless conversions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Unit {
    /// meters <-> 1/k_L
    Length,
    /// seconds <-> 1/omega_R
    Time,
    /// joules <-> E_R
    Energy,
    /// m/s <-> omega_R/k_L
    Velocity,
    /// rad/s <-> omega_R
    Frequency,
}

impl<T: Real> DerivedScales<T> {
    /// SI quantity -> dimensionless number in the crate convention.
    pub fn to_dimensionless(&self, value: T, unit: Unit) -> T {
        match unit {
            Unit::Length => value * self.wave_vector,
            Unit::Time => value * self.recoil_frequency,
            Unit::Energy => value / self.recoil_energy,
            Unit::Velocity => value / self.velocity_unit(),
            Unit::Frequency => value / self.recoil_frequency,
        }
    }

    /// Dimensionless number -> SI quantity. Inverse of [`Self::to_dimensionless`].
    pub fn from_dimensionless(&self, value: T, unit: Unit) -> T {
        match unit {
            Unit::Length => value / self.wave_vector,
            Unit::Time => value / self.recoil_frequency,
            Unit::Energy => value * self.recoil_energy,
            Unit::Velocity => value * self.velocity_unit(),
            Unit::Frequency => value * self.recoil_frequency,
        }
    }
}

/// Amplitude-modulation parameters of a single drive tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulationParams<T> {
    /// Harmonic index ell >= 1 of the Bloch frequency.
    pub harmonic: u32,
    /// Modulation amplitude alpha in (0, 1), in units of U_0.
    pub amplitude: T,
    /// Drive phase phi (rad).
    pub phase: T,
    /// Switch-on time t_0 (s).
    pub start_time: T,
    /// Drive angular frequency omega_M (rad/s).
    pub modulation_frequency: T,
}

impl<T: Real> ModulationParams<T> {
    /// Resonant drive at omega_M = ell * omega_B.
    pub fn resonant(
        scales: &DerivedScales<T>,
        harmonic: u32,
        amplitude: T,
        phase: T,
        start_time: T,
    ) -> Result<Self> {
        let m = ModulationParams {
            harmonic,
            amplitude,
            phase,
            start_time,
            modulation_frequency: T::lit(harmonic as f64) * scales.bloch_frequency,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.harmonic == 0 {
            return Err(Error::validation("harmonic", "must be a positive integer"));
        }
        if !(self.amplitude > T::zero() && self.amplitude < T::one()) {
            return Err(Error::validation("amplitude", "alpha must lie in (0, 1)"));
        }
        if !(self.modulation_frequency > T::zero()) {
            return Err(Error::validation("modulation_frequency", "must be strictly positive"));
        }
        Ok(())
    }
}

/// Physical parameters plus their derived scales; the bundle every solver takes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeConfig<T> {
    pub physical: PhysicalParams<T>,
    pub scales: DerivedScales<T>,
}

impl<T: Real> LatticeConfig<T> {
    pub fn new(physical: PhysicalParams<T>) -> Result<Self> {
        let scales = derive_scales(&physical)?;
        Ok(LatticeConfig { physical, scales })
    }

    /// Lattice depth U_0 in E_R.
    pub fn depth(&self) -> T {
        self.physical.lattice_depth
    }

    /// Same configuration at a different depth.
    pub fn with_depth(&self, depth_er: T) -> Result<Self> {
        let mut p = self.physical;
        p.lattice_depth = depth_er;
        Self::new(p)
    }
}
