//! Uniform 1D spatial grid in dimensionless units (lengths in 1/k_L).
//!
//! The box covers an even number of lattice periods; sites sit at z = n*pi
//! for n in [-S/2, S/2). Both box ends fall on potential barrier tops, so the
//! periodic seam of the spectral method and the walls of the diagonalization
//! window coincide with potential maxima.

use crate::error::{Error, Result};
use crate::num::Real;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpatialGrid<T> {
    n_points: usize,
    site_count: usize,
    points_per_site: usize,
    z_min: T,
    dz: T,
}

impl<T: Real> SpatialGrid<T> {
    /// Grid over `site_count` lattice periods with `points_per_site` samples
    /// each. `site_count` must be even. Spectral propagation additionally
    /// requires a power-of-two point count, checked by the stepper.
    pub fn new(site_count: usize, points_per_site: usize) -> Result<Self> {
        if site_count < 2 || site_count % 2 != 0 {
            return Err(Error::validation("site_count", "must be even and >= 2"));
        }
        if points_per_site < 16 {
            return Err(Error::validation("points_per_site", "must be >= 16"));
        }
        let n_points = site_count * points_per_site;
        let dz = T::pi() / T::lit(points_per_site as f64);
        let z_min = -T::pi() * T::lit((site_count + 1) as f64) / T::lit(2.0);
        Ok(SpatialGrid { n_points, site_count, points_per_site, z_min, dz })
    }

    /// Enforces the spectral-method layout requirement.
    pub fn require_power_of_two(&self) -> Result<()> {
        if !self.n_points.is_power_of_two() {
            return Err(Error::validation(
                "n_points",
                format!("{} must be a power of two for spectral propagation", self.n_points),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn site_count(&self) -> usize {
        self.site_count
    }

    pub fn points_per_site(&self) -> usize {
        self.points_per_site
    }

    pub fn dz(&self) -> T {
        self.dz
    }

    pub fn z_min(&self) -> T {
        self.z_min
    }

    /// Box length S*pi.
    pub fn length(&self) -> T {
        self.dz * T::lit(self.n_points as f64)
    }

    pub fn z(&self, j: usize) -> T {
        self.z_min + self.dz * T::lit(j as f64)
    }

    pub fn z_values(&self) -> Vec<T> {
        (0..self.n_points).map(|j| self.z(j)).collect()
    }

    /// First lattice site index contained in the box.
    pub fn first_site(&self) -> i64 {
        -(self.site_count as i64) / 2
    }

    /// Last lattice site index contained in the box (inclusive).
    pub fn last_site(&self) -> i64 {
        (self.site_count as i64) / 2 - 1
    }

    /// Grid index of the center of lattice site `n`.
    pub fn site_center_index(&self, site: i64) -> usize {
        let p = self.points_per_site as i64;
        let idx = p * site + p * (self.site_count as i64 + 1) / 2;
        idx as usize
    }

    /// FFT wavenumbers in units of k_L, in FFT bin order.
    pub fn k_values(&self) -> Vec<T> {
        let n = self.n_points;
        let dk = T::two_pi() / (self.dz * T::lit(n as f64));
        (0..n)
            .map(|m| {
                let f = if m < n / 2 { m as i64 } else { m as i64 - n as i64 };
                dk * T::lit(f as f64)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn geometry_invariants() {
        let g = SpatialGrid::<f64>::new(64, 32).unwrap();
        assert_eq!(g.len(), 2048);
        assert_relative_eq!(g.length(), 64.0 * PI);
        assert_relative_eq!(g.dz() * g.len() as f64, g.length());
        // sites at n*pi, centered
        assert_relative_eq!(g.z(g.site_center_index(0)), 0.0, epsilon = 1e-12);
        assert_relative_eq!(g.z(g.site_center_index(-32)), -32.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(g.z(g.site_center_index(31)), 31.0 * PI, epsilon = 1e-12);
        // box ends on barrier tops: z_min/pi is half-integer
        let r = g.z_min() / PI;
        assert_relative_eq!((r - r.floor() - 0.5).abs(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_invalid_layouts() {
        assert!(SpatialGrid::<f64>::new(63, 32).is_err());
        assert!(SpatialGrid::<f64>::new(64, 8).is_err());
        // non-power-of-two totals are fine for diagonalization boxes but
        // rejected on the spectral path
        let g = SpatialGrid::<f64>::new(48, 24).unwrap();
        assert!(g.require_power_of_two().is_err());
        assert!(SpatialGrid::<f64>::new(64, 32).unwrap().require_power_of_two().is_ok());
    }

    #[test]
    fn k_grid_matches_fft_layout() {
        let g = SpatialGrid::<f64>::new(4, 16).unwrap();
        let k = g.k_values();
        assert_eq!(k.len(), 64);
        assert_relative_eq!(k[0], 0.0);
        // spacing 2/S in k_L units
        assert_relative_eq!(k[1], 2.0 / 4.0);
        assert_relative_eq!(k[32], -16.0); // Nyquist = points_per_site
        assert_relative_eq!(k[63], -0.5);
    }
}
