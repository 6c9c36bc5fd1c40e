//! Modulation programs: ordered AM bursts and static holds.
//!
//! Durations are in seconds. A burst drives the lattice depth as
//! U_0 [1 + alpha sin(omega_M (t - t_anchor) - phi)]; by default the waveform
//! is anchored at the burst's own start, so repeated bursts are identical
//! pulses. Anchoring to a global clock instead is available per burst.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::units::DerivedScales;
use serde::Serialize;

/// Waveform time reference of a burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BurstClock {
    /// f(t) = sin(omega_M (t - t_segment_start) - phi): identical pulses.
    SegmentStart,
    /// f(t) = sin(omega_M (t - t_global_start) - phi): one continuous tone,
    /// gated on and off.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Burst<T> {
    /// Burst length (s).
    pub duration: T,
    /// Harmonic ell of the Bloch frequency.
    pub harmonic: u32,
    /// Modulation amplitude alpha in (0, 1).
    pub amplitude: T,
    /// Waveform phase phi (rad).
    pub phase: T,
    /// Drive frequency override (rad/s); resonant ell*omega_B when absent.
    pub omega_m_override: Option<T>,
    pub clock: BurstClock,
}

impl<T: Real> Burst<T> {
    pub fn resonant(duration: T, harmonic: u32, amplitude: T, phase: T) -> Self {
        Burst {
            duration,
            harmonic,
            amplitude,
            phase,
            omega_m_override: None,
            clock: BurstClock::SegmentStart,
        }
    }

    /// Drive angular frequency (rad/s).
    pub fn omega_m(&self, scales: &DerivedScales<T>) -> T {
        self.omega_m_override
            .unwrap_or_else(|| T::lit(self.harmonic as f64) * scales.bloch_frequency)
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration > T::zero()) {
            return Err(Error::validation("duration", "segment durations must be positive"));
        }
        if self.harmonic == 0 {
            return Err(Error::validation("harmonic", "must be a positive integer"));
        }
        if !(self.amplitude > T::zero() && self.amplitude < T::one()) {
            return Err(Error::validation("amplitude", "alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Segment<T> {
    Hold { duration: T },
    Burst(Burst<T>),
}

impl<T: Real> Segment<T> {
    pub fn duration(&self) -> T {
        match self {
            Segment::Hold { duration } => *duration,
            Segment::Burst(b) => b.duration,
        }
    }
}

/// Ordered pulse sequence defining the time-dependent depth factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulationProgram<T> {
    pub segments: Vec<Segment<T>>,
    /// Reference time (s) for bursts with [`BurstClock::Global`].
    pub global_start: T,
}

impl<T: Real> Default for ModulationProgram<T> {
    fn default() -> Self {
        ModulationProgram { segments: Vec::new(), global_start: T::zero() }
    }
}

impl<T: Real> ModulationProgram<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hold(mut self, duration: T) -> Self {
        self.segments.push(Segment::Hold { duration });
        self
    }

    pub fn burst(mut self, burst: Burst<T>) -> Self {
        self.segments.push(Segment::Burst(burst));
        self
    }

    /// Single resonant burst.
    pub fn single_burst(duration: T, harmonic: u32, amplitude: T, phase: T) -> Self {
        Self::new().burst(Burst::resonant(duration, harmonic, amplitude, phase))
    }

    /// Two identical bursts separated by a freezing hold.
    pub fn echo(burst_duration: T, harmonic: u32, amplitude: T, phase: T, freeze: T) -> Self {
        let b = Burst::resonant(burst_duration, harmonic, amplitude, phase);
        Self::new().burst(b).hold(freeze).burst(b)
    }

    /// Static hold of `delay`, then one burst: the burst-switch-on-time scan.
    pub fn delayed_burst(delay: T, burst_duration: T, harmonic: u32, amplitude: T, phase: T) -> Self {
        let mut p = Self::new();
        if delay > T::zero() {
            p = p.hold(delay);
        }
        p.burst(Burst::resonant(burst_duration, harmonic, amplitude, phase))
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::validation("segments", "program must not be empty"));
        }
        for seg in &self.segments {
            match seg {
                Segment::Hold { duration } => {
                    if !(*duration > T::zero()) {
                        return Err(Error::validation("duration", "segment durations must be positive"));
                    }
                }
                Segment::Burst(b) => b.validate()?,
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> T {
        self.segments.iter().map(|s| s.duration()).sum()
    }

    /// Segment start times (s), one per segment.
    pub fn segment_starts(&self) -> Vec<T> {
        let mut t = T::zero();
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration();
                start
            })
            .collect()
    }

    /// Depth modulation alpha*f at absolute time `t` (s); zero during holds.
    /// Errors when `t` lies outside the program span.
    pub fn depth_modulation(&self, scales: &DerivedScales<T>, t: T) -> Result<T> {
        let total = self.total_duration();
        if t < T::zero() || t > total {
            return Err(Error::validation("t", format!("{t} outside program span [0, {total}]")));
        }
        let mut start = T::zero();
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            let end = start + seg.duration();
            // boundaries belong to the later segment
            if t < end || (i == last && t <= end) {
                return Ok(match seg {
                    Segment::Hold { .. } => T::zero(),
                    Segment::Burst(b) => {
                        let anchor = match b.clock {
                            BurstClock::SegmentStart => start,
                            BurstClock::Global => self.global_start,
                        };
                        let f = (b.omega_m(scales) * (t - anchor) - b.phase).sin();
                        b.amplitude * f
                    }
                });
            }
            start = end;
        }
        Ok(T::zero())
    }

    /// The program that undoes this one under time reversal: segments in
    /// reverse order, each burst waveform mirrored within its own span.
    pub fn time_mirrored(&self, scales: &DerivedScales<T>) -> Self {
        let starts = self.segment_starts();
        let segments = self
            .segments
            .iter()
            .zip(starts)
            .rev()
            .map(|(seg, start)| match seg {
                Segment::Hold { duration } => Segment::Hold { duration: *duration },
                Segment::Burst(b) => {
                    // phase of the waveform relative to the segment start
                    let seg_phase = match b.clock {
                        BurstClock::SegmentStart => b.phase,
                        BurstClock::Global => {
                            b.phase - b.omega_m(scales) * (start - self.global_start)
                        }
                    };
                    let phase = b.omega_m(scales) * b.duration - seg_phase - T::pi();
                    Segment::Burst(Burst { phase, clock: BurstClock::SegmentStart, ..*b })
                }
            })
            .collect();
        ModulationProgram { segments, global_start: self.global_start }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{LatticeConfig, PhysicalParams};
    use approx::assert_relative_eq;

    fn scales() -> crate::units::DerivedScales<f64> {
        LatticeConfig::new(PhysicalParams::sr88(10.0).unwrap()).unwrap().scales
    }

    #[test]
    fn echo_program_layout() {
        let s = scales();
        let tb = s.bloch_period;
        let p = ModulationProgram::echo(20.0 * tb, 1, 0.23, 0.0, 0.5 * tb);
        p.validate().unwrap();
        assert_eq!(p.segments.len(), 3);
        assert_relative_eq!(p.total_duration(), 40.5 * tb, max_relative = 1e-12);
        let starts = p.segment_starts();
        assert_relative_eq!(starts[1], 20.0 * tb, max_relative = 1e-12);
    }

    #[test]
    fn modulation_factor_follows_waveform() {
        let s = scales();
        let tb = s.bloch_period;
        let p = ModulationProgram::single_burst(2.0 * tb, 1, 0.5, 0.0);
        // switch-on instant: f = sin(-phi) = 0 at phi = 0
        assert_relative_eq!(p.depth_modulation(&s, 0.0).unwrap(), 0.0);
        // quarter drive period, phi = 0: f = 1
        let t_quarter = 0.25 * 2.0 * std::f64::consts::PI / s.bloch_frequency;
        assert_relative_eq!(p.depth_modulation(&s, t_quarter).unwrap(), 0.5, max_relative = 1e-12);
        assert!(p.depth_modulation(&s, 3.0 * tb).is_err());
        assert!(p.depth_modulation(&s, -1.0).is_err());
    }

    #[test]
    fn identical_bursts_restart_their_waveform() {
        let s = scales();
        let tb = s.bloch_period;
        let p = ModulationProgram::echo(5.0 * tb, 2, 0.4, 0.3, 0.37 * tb);
        let starts = p.segment_starts();
        for dt in [0.0, 0.1 * tb, 1.3 * tb] {
            let f1 = p.depth_modulation(&s, starts[0] + dt).unwrap();
            let f2 = p.depth_modulation(&s, starts[2] + dt).unwrap();
            assert_relative_eq!(f1, f2, epsilon = 1e-12);
        }
    }

    #[test]
    fn mirrored_program_reverses_the_waveform() {
        let s = scales();
        let tb = s.bloch_period;
        let p = ModulationProgram::new()
            .burst(Burst::resonant(1.7 * tb, 1, 0.3, 0.4))
            .hold(0.5 * tb)
            .burst(Burst {
                clock: BurstClock::Global,
                ..Burst::resonant(0.9 * tb, 2, 0.6, 1.1)
            });
        let m = p.time_mirrored(&s);
        let total = p.total_duration();
        for frac in [0.01, 0.2, 0.43, 0.77, 0.99] {
            let t = frac * total;
            let f = p.depth_modulation(&s, t).unwrap();
            let fm = m.depth_modulation(&s, total - t).unwrap();
            assert_relative_eq!(f, fm, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_bad_segments() {
        assert!(ModulationProgram::<f64>::new().validate().is_err());
        assert!(ModulationProgram::single_burst(1.0, 1, 1.2, 0.0).validate().is_err());
        assert!(ModulationProgram::single_burst(-1.0, 1, 0.2, 0.0).validate().is_err());
    }
}
