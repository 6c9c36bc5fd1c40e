//! Coherent matter-wave transport in a gravity-tilted, amplitude-modulated
//! 1D optical lattice.
//!
//! On a common dimensionless unit system (hbar = 1, energies in the recoil
//! energy, lengths in 1/k_L, times in 1/omega_R) the crate provides:
//!
//! * Bloch bands of the untilted lattice and Wannier-Stark ladders of the
//!   tilted one ([`bands`], [`wstark`]);
//! * the effective description of resonant amplitude modulation: tunneling
//!   rates, sinusoidal dispersion, group velocities, and an exact
//!   tight-binding propagator for burst/hold programs ([`effective`]);
//! * split-step spectral propagation of the full time-dependent Hamiltonian
//!   ([`tdse`]);
//! * thermal-ensemble experiment drivers: echo scans, burst-switch-on scans,
//!   mirror trajectories, modulation-amplitude scans ([`protocol`]);
//! * model fits and the Bloch-frequency gravimetry pipeline ([`fit`]).
//!
//! Core numerics are generic over the scalar type via [`num::Real`]
//! (`f32`/`f64`); `f64` aliases for the main types live at the crate root.

pub mod bands;
pub mod effective;
pub mod error;
pub mod fit;
pub mod grid;
pub mod num;
pub mod program;
pub mod protocol;
pub mod tdse;
pub mod units;
pub mod wavefunction;
pub mod wstark;

pub use error::{Error, Result};
pub use num::{cis, cnorm, Cplx, Real};

/// Default application scalar.
pub type F = f64;

pub type PhysicalParams64 = units::PhysicalParams<F>;
pub type DerivedScales64 = units::DerivedScales<F>;
pub type LatticeConfig64 = units::LatticeConfig<F>;
pub type ModulationParams64 = units::ModulationParams<F>;
pub type BlochSpectrum64 = bands::BlochSpectrum<F>;
pub type WannierStarkLadder64 = wstark::WannierStarkLadder<F>;
pub type SpatialGrid64 = grid::SpatialGrid<F>;
pub type WaveFunction64 = wavefunction::WaveFunction<F>;
pub type ModulationProgram64 = program::ModulationProgram<F>;
pub type TunnelingRate64 = effective::TunnelingRate<F>;
pub type EffectiveDispersion64 = effective::EffectiveDispersion<F>;
pub type TightBinding64 = effective::TightBinding<F>;
pub type EnsembleSpec64 = protocol::EnsembleSpec<F>;
pub type ExperimentResult64 = protocol::ExperimentResult<F>;
pub type FitResult64 = fit::FitResult<F>;
