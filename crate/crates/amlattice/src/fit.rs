//! Least-squares fits of the transport models and the gravimetry pipeline:
//! damped Gauss-Newton with analytic Jacobians, closed-form linear fits, and
//! Bloch-frequency extraction from echo oscillations.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::units::LatticeConfig;
use serde::Serialize;

/// Fit output: named parameter estimates with 1-sigma uncertainties from the
/// residual covariance.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult<T> {
    pub param_names: Vec<String>,
    pub values: Vec<T>,
    pub uncertainties: Vec<T>,
    pub residual_rms: T,
    pub converged: bool,
    pub iterations: usize,
    pub r_squared: Option<T>,
    pub flags: Vec<String>,
}

impl<T: Real> FitResult<T> {
    pub fn value(&self, name: &str) -> Option<T> {
        self.param_names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn uncertainty(&self, name: &str) -> Option<T> {
        self.param_names.iter().position(|n| n == name).map(|i| self.uncertainties[i])
    }
}

/// Solves the k x k system a x = b in place by Gaussian elimination with
/// partial pivoting. Returns None when singular.
fn solve_small<T: Real>(a: &mut [Vec<T>], b: &mut [T]) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < T::lit(1e-300) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / d;
            if f != T::zero() {
                for c in col..n {
                    let v = a[col][c];
                    a[r][c] -= f * v;
                }
                let bb = b[col];
                b[r] -= f * bb;
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Inverse of a small symmetric matrix via the same elimination.
fn invert_small<T: Real>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut inv = vec![vec![T::zero(); n]; n];
    for col in 0..n {
        let mut m: Vec<Vec<T>> = a.to_vec();
        let mut e = vec![T::zero(); n];
        e[col] = T::one();
        let x = solve_small(&mut m, &mut e)?;
        for r in 0..n {
            inv[r][col] = x[r];
        }
    }
    Some(inv)
}

struct GaussNewton<T> {
    params: Vec<T>,
    covariance: Vec<Vec<T>>,
    residual_rms: T,
    converged: bool,
    iterations: usize,
}

/// Damped Gauss-Newton (Levenberg) minimizer with analytic Jacobians.
fn gauss_newton<T, M, J>(
    t: &[T],
    y: &[T],
    p0: Vec<T>,
    model: M,
    jacobian: J,
    max_iter: usize,
) -> GaussNewton<T>
where
    T: Real,
    M: Fn(&[T], T) -> T,
    J: Fn(&[T], T) -> Vec<T>,
{
    let n = t.len();
    let k = p0.len();
    let cost = |p: &[T]| -> T {
        t.iter().zip(y).map(|(&ti, &yi)| {
            let r = yi - model(p, ti);
            r * r
        }).sum()
    };
    let mut p = p0;
    let mut c = cost(&p);
    let mut lambda = T::lit(1e-3);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        // assemble normal equations
        let mut jtj = vec![vec![T::zero(); k]; k];
        let mut jtr = vec![T::zero(); k];
        for (&ti, &yi) in t.iter().zip(y) {
            let ji = jacobian(&p, ti);
            let ri = yi - model(&p, ti);
            for a in 0..k {
                jtr[a] += ji[a] * ri;
                for b in a..k {
                    jtj[a][b] += ji[a] * ji[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut m = jtj.clone();
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * (jtj[a][a] + T::lit(1e-30));
            }
            let mut rhs = jtr.clone();
            let Some(step) = solve_small(&mut m, &mut rhs) else {
                lambda *= T::lit(10.0);
                continue;
            };
            let trial: Vec<T> = p.iter().zip(&step).map(|(&a, &d)| a + d).collect();
            let ct = cost(&trial);
            if ct <= c {
                let step_size: T =
                    step.iter().map(|&s| s * s).sum::<T>().sqrt();
                let p_size: T = p.iter().map(|&s| s * s).sum::<T>().sqrt();
                let rel_drop = (c - ct) / c.max(T::lit(1e-300));
                p = trial;
                c = ct;
                lambda = (lambda * T::lit(0.3)).max(T::lit(1e-14));
                improved = true;
                if step_size <= T::lit(1e-13) * (p_size + T::one()) || rel_drop < T::lit(1e-15) {
                    converged = true;
                }
                break;
            }
            lambda *= T::lit(10.0);
        }
        if converged {
            break;
        }
        if !improved {
            // no damped step lowers the cost: numerical minimum reached
            converged = true;
            break;
        }
    }
    // covariance from the undamped normal equations
    let mut jtj = vec![vec![T::zero(); k]; k];
    for &ti in t {
        let ji = jacobian(&p, ti);
        for a in 0..k {
            for b in a..k {
                jtj[a][b] += ji[a] * ji[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    let dof = if n > k { T::lit((n - k) as f64) } else { T::one() };
    let s2 = c / dof;
    let covariance = invert_small(&jtj)
        .map(|inv| {
            inv.into_iter()
                .map(|row| row.into_iter().map(|v| v * s2).collect())
                .collect()
        })
        .unwrap_or_else(|| vec![vec![T::inf(); k]; k]);
    GaussNewton {
        params: p,
        covariance,
        residual_rms: (c / T::lit(n as f64)).sqrt(),
        converged,
        iterations,
    }
}

/// Echo model: sigma(t) = sqrt(s0^2 + s1^2 cos^2(pi t / tau)).
fn echo_model<T: Real>(p: &[T], t: T) -> T {
    let c = (T::pi() * t / p[2]).cos();
    (p[0] * p[0] + p[1] * p[1] * c * c).sqrt()
}

fn echo_jacobian<T: Real>(p: &[T], t: T) -> Vec<T> {
    let (s0, s1, tau) = (p[0], p[1], p[2]);
    let arg = T::pi() * t / tau;
    let (s, c) = arg.sin_cos();
    let sigma = (s0 * s0 + s1 * s1 * c * c).sqrt().max(T::lit(1e-300));
    vec![
        s0 / sigma,
        s1 * c * c / sigma,
        s1 * s1 * c * s * T::pi() * t / (tau * tau) / sigma,
    ]
}

/// Best period for the linear model y = c0 + cc cos(2 pi t / tau) + cs sin(...)
/// over a frequency grid; ties broken toward the lower frequency. Returns
/// (tau, c0, amplitude).
fn period_scan<T: Real>(t: &[T], y: &[T], tau_min: T, tau_max: T) -> (T, T, T) {
    let n_cand = 600;
    let f_lo = T::one() / tau_max;
    let f_hi = T::one() / tau_min;
    let mut best = (T::inf(), tau_max, T::zero(), T::zero());
    for i in 0..n_cand {
        let f = f_lo + (f_hi - f_lo) * T::lit(i as f64 / (n_cand - 1) as f64);
        let om = T::two_pi() * f;
        // closed-form least squares on (1, cos, sin)
        let mut a = vec![vec![T::zero(); 3]; 3];
        let mut b = vec![T::zero(); 3];
        for (&ti, &yi) in t.iter().zip(y) {
            let (s, c) = (om * ti).sin_cos();
            let basis = [T::one(), c, s];
            for p in 0..3 {
                b[p] += basis[p] * yi;
                for q in p..3 {
                    a[p][q] += basis[p] * basis[q];
                }
            }
        }
        for p in 0..3 {
            for q in 0..p {
                a[p][q] = a[q][p];
            }
        }
        let Some(x) = solve_small(&mut a, &mut b) else { continue };
        let mut chi = T::zero();
        for (&ti, &yi) in t.iter().zip(y) {
            let (s, c) = (om * ti).sin_cos();
            let r = yi - x[0] - x[1] * c - x[2] * s;
            chi += r * r;
        }
        // strictly-better keeps the earlier (lower-frequency) candidate on ties
        if chi < best.0 * (T::one() - T::lit(1e-12)) {
            let amp = (x[1] * x[1] + x[2] * x[2]).sqrt();
            best = (chi, T::one() / f, x[0], amp);
        }
    }
    (best.1, best.2, best.3)
}

/// Fits the echo RMS-size model to (t_fr, sigma) points.
/// Parameters: `sigma0`, `sigma1`, `tau_ell` (same units as the inputs).
pub fn fit_echo<T: Real>(points: &[(T, T)]) -> Result<FitResult<T>> {
    if points.len() < 8 {
        return Err(Error::validation("points", "need at least 8 echo samples"));
    }
    let t: Vec<T> = points.iter().map(|p| p.0).collect();
    let sig: Vec<T> = points.iter().map(|p| p.1).collect();
    let span = *t.last().unwrap() - t[0];
    if !(span > T::zero()) {
        return Err(Error::validation("points", "zero time span"));
    }
    // period start guess from the spectrum of sigma^2, which oscillates at
    // 2 pi / tau_ell
    let y2: Vec<T> = sig.iter().map(|&s| s * s).collect();
    let mut dt_min = T::inf();
    for w in t.windows(2) {
        dt_min = dt_min.min(w[1] - w[0]);
    }
    let (tau_sq, c0, amp) = period_scan(&t, &y2, dt_min * T::lit(2.2), span * T::lit(2.0));
    let s1sq = (T::lit(2.0) * amp).max(T::lit(1e-300));
    let s0sq = (c0 - amp).max(s1sq * T::lit(1e-12));
    let p0 = vec![s0sq.sqrt(), s1sq.sqrt(), tau_sq];

    let gn = gauss_newton(&t, &sig, p0, echo_model::<T>, echo_jacobian::<T>, 200);
    let mut flags = Vec::new();
    let s0 = gn.params[0].abs();
    let s1 = gn.params[1].abs();
    let tau = gn.params[2];
    if s1 < T::lit(1e-5) * s0.max(T::lit(1e-300)) {
        flags.push("degenerate: sigma1 ~ 0, period unidentifiable".to_string());
    }
    if !gn.converged {
        return Err(Error::numerical(
            "fit_echo",
            format!(
                "no convergence in {} iterations; best iterate sigma0={s0:.6e} sigma1={s1:.6e} tau={tau:.6e} (rms {:.3e})",
                gn.iterations, gn.residual_rms
            ),
        ));
    }
    if span < tau {
        flags.push("span shorter than one fitted period".to_string());
    }
    Ok(FitResult {
        param_names: vec!["sigma0".into(), "sigma1".into(), "tau_ell".into()],
        values: vec![s0, s1, tau],
        uncertainties: (0..3).map(|i| gn.covariance[i][i].max(T::zero()).sqrt()).collect(),
        residual_rms: gn.residual_rms,
        converged: gn.converged,
        iterations: gn.iterations,
        r_squared: None,
        flags,
    })
}

/// Closed-form regression y = slope * x; reports R^2 about the mean.
pub fn fit_linear_through_origin<T: Real>(x: &[T], y: &[T]) -> Result<FitResult<T>> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::validation("points", "need at least 3 (x, y) pairs"));
    }
    let sxx: T = x.iter().map(|&v| v * v).sum();
    if sxx == T::zero() {
        return Err(Error::validation("x", "all abscissas are zero"));
    }
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let slope = sxy / sxx;
    let n = T::lit(x.len() as f64);
    let mean_y: T = y.iter().copied().sum::<T>() / n;
    let mut ssr = T::zero();
    let mut sst = T::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        let r = yi - slope * xi;
        ssr += r * r;
        let d = yi - mean_y;
        sst += d * d;
    }
    let s2 = ssr / T::lit((x.len() - 1) as f64);
    let sigma_slope = (s2 / sxx).sqrt();
    let r_squared = if sst > T::zero() { T::one() - ssr / sst } else { T::one() };
    let mut flags = Vec::new();
    if slope.abs() <= sigma_slope {
        flags.push("slope consistent with zero".to_string());
    }
    Ok(FitResult {
        param_names: vec!["slope".into()],
        values: vec![slope],
        uncertainties: vec![sigma_slope],
        residual_rms: (ssr / n).sqrt(),
        converged: true,
        iterations: 1,
        r_squared: Some(r_squared),
        flags,
    })
}

/// One tunneling-rate sample for the depth-scaling fit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JSample<T> {
    /// Depth in E_R.
    pub u0: T,
    pub ell: u32,
    /// Modulation amplitude the rate was measured at.
    pub alpha: T,
    /// |J|/hbar in 1/s.
    pub j_rad_s: T,
}

/// Log-linear fit of |J|/hbar = A (alpha U0) exp(-b2 U0) exp(-b1 (ell-1) U0).
/// Parameters: `prefactor` (1/s), `beta1`, `beta2`.
pub fn fit_j_scaling<T: Real>(samples: &[JSample<T>]) -> Result<FitResult<T>> {
    let mut rows: Vec<([T; 3], T)> = Vec::new();
    let mut flags = Vec::new();
    let mut excluded = 0;
    for s in samples {
        if !(s.j_rad_s > T::zero()) || !(s.alpha > T::zero()) || !(s.u0 > T::zero()) {
            excluded += 1;
            continue;
        }
        let y = (s.j_rad_s / (s.alpha * s.u0)).ln();
        rows.push(([T::one(), -s.u0, -T::lit((s.ell - 1) as f64) * s.u0], y));
    }
    if excluded > 0 {
        flags.push(format!("excluded {excluded} nonpositive samples"));
    }
    let mut depths: Vec<T> = rows.iter().map(|r| -r.0[1]).collect();
    depths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    depths.dedup_by(|a, b| (*a - *b).abs() < T::lit(1e-9));
    if depths.len() < 4 {
        return Err(Error::validation("samples", "need at least 4 distinct depths"));
    }
    let multi_ell = samples.iter().any(|s| s.ell > 1) && samples.iter().any(|s| s.ell == 1);
    let k = if multi_ell { 3 } else { 2 };
    if !multi_ell {
        flags.push("single harmonic: beta1 unidentifiable".to_string());
    }
    let mut a = vec![vec![T::zero(); k]; k];
    let mut b = vec![T::zero(); k];
    for (basis, y) in &rows {
        for p in 0..k {
            b[p] += basis[p] * *y;
            for q in p..k {
                a[p][q] += basis[p] * basis[q];
            }
        }
    }
    for p in 0..k {
        for q in 0..p {
            a[p][q] = a[q][p];
        }
    }
    let a_copy = a.clone();
    let x = solve_small(&mut a, &mut b)
        .ok_or_else(|| Error::numerical("fit_j_scaling", "singular normal equations"))?;
    // residuals and covariance
    let mut ssr = T::zero();
    for (basis, y) in &rows {
        let mut pred = T::zero();
        for p in 0..k {
            pred += basis[p] * x[p];
        }
        let r = *y - pred;
        ssr += r * r;
    }
    let dof = rows.len().saturating_sub(k).max(1);
    let s2 = ssr / T::lit(dof as f64);
    let cov = invert_small(&a_copy).unwrap_or_else(|| vec![vec![T::inf(); k]; k]);
    let prefactor = x[0].exp();
    let sigma_ln_a = (cov[0][0] * s2).max(T::zero()).sqrt();
    let beta2 = x[1];
    let sigma_b2 = (cov[1][1] * s2).max(T::zero()).sqrt();
    let (beta1, sigma_b1) = if multi_ell {
        (x[2], (cov[2][2] * s2).max(T::zero()).sqrt())
    } else {
        (T::zero(), T::inf())
    };
    Ok(FitResult {
        param_names: vec!["prefactor".into(), "beta1".into(), "beta2".into()],
        values: vec![prefactor, beta1, beta2],
        uncertainties: vec![prefactor * sigma_ln_a, sigma_b1, sigma_b2],
        residual_rms: (ssr / T::lit(rows.len() as f64)).sqrt(),
        converged: true,
        iterations: 1,
        r_squared: None,
        flags,
    })
}

/// Gravity from an echo scan at harmonic `ell`: the fitted period gives
/// tau_B = ell * tau_ell, hence g = 2 pi hbar / (m d tau_B).
/// Parameters: `g` (m/s^2), `delta_g_over_g`, `tau_ell` (s).
pub fn estimate_g<T: Real>(
    points: &[(T, T)],
    cfg: &LatticeConfig<T>,
    ell: u32,
) -> Result<FitResult<T>> {
    if ell == 0 {
        return Err(Error::validation("ell", "must be a positive integer"));
    }
    let echo = fit_echo(points)?;
    let tau_ell = echo.value("tau_ell").unwrap();
    let sigma_tau = echo.uncertainty("tau_ell").unwrap();
    let tau_b = T::lit(ell as f64) * tau_ell;
    let hbar = T::lit(crate::units::HBAR);
    let g = T::two_pi() * hbar
        / (cfg.physical.atomic_mass * cfg.scales.lattice_period * tau_b);
    let rel = sigma_tau / tau_ell;
    Ok(FitResult {
        param_names: vec!["g".into(), "delta_g_over_g".into(), "tau_ell".into()],
        values: vec![g, rel, tau_ell],
        uncertainties: vec![g * rel, T::zero(), sigma_tau],
        residual_rms: echo.residual_rms,
        converged: echo.converged,
        iterations: echo.iterations,
        r_squared: None,
        flags: echo.flags,
    })
}

/// Sinusoid fit y = offset + amplitude * sin(2 pi t / period + phase), via a
/// period scan with closed-form subfits and Gauss-Newton polish.
/// Parameters: `offset`, `amplitude`, `period`, `phase`.
pub fn fit_sinusoid<T: Real>(t: &[T], y: &[T]) -> Result<FitResult<T>> {
    if t.len() != y.len() || t.len() < 5 {
        return Err(Error::validation("points", "need at least 5 samples"));
    }
    let span = *t.last().unwrap() - t[0];
    let mut dt_min = T::inf();
    for w in t.windows(2) {
        dt_min = dt_min.min(w[1] - w[0]);
    }
    let (tau, c0, _amp) = period_scan(t, y, dt_min * T::lit(2.2), span * T::lit(2.0));
    // linear subfit at the scanned period for the start phase
    let om = T::two_pi() / tau;
    let mut a = vec![vec![T::zero(); 3]; 3];
    let mut b = vec![T::zero(); 3];
    for (&ti, &yi) in t.iter().zip(y) {
        let (s, c) = (om * ti).sin_cos();
        let basis = [T::one(), s, c];
        for p in 0..3 {
            b[p] += basis[p] * yi;
            for q in p..3 {
                a[p][q] += basis[p] * basis[q];
            }
        }
    }
    for p in 0..3 {
        for q in 0..p {
            a[p][q] = a[q][p];
        }
    }
    let x = solve_small(&mut a, &mut b)
        .ok_or_else(|| Error::numerical("fit_sinusoid", "singular subfit"))?;
    let amp0 = (x[1] * x[1] + x[2] * x[2]).sqrt();
    let phase0 = x[2].atan2(x[1]);
    let p0 = vec![c0, amp0, tau, phase0];
    let model = |p: &[T], ti: T| p[0] + p[1] * (T::two_pi() * ti / p[2] + p[3]).sin();
    let jac = |p: &[T], ti: T| {
        let arg = T::two_pi() * ti / p[2] + p[3];
        let (s, c) = arg.sin_cos();
        vec![
            T::one(),
            s,
            -p[1] * c * T::two_pi() * ti / (p[2] * p[2]),
            p[1] * c,
        ]
    };
    let gn = gauss_newton(t, y, p0, model, jac, 200);
    if !gn.converged {
        return Err(Error::numerical(
            "fit_sinusoid",
            format!("no convergence in {} iterations", gn.iterations),
        ));
    }
    let mut amp = gn.params[1];
    let mut phase = gn.params[3];
    if amp < T::zero() {
        amp = -amp;
        phase += T::pi();
    }
    // principal value
    while phase > T::pi() {
        phase -= T::two_pi();
    }
    while phase < -T::pi() {
        phase += T::two_pi();
    }
    Ok(FitResult {
        param_names: vec!["offset".into(), "amplitude".into(), "period".into(), "phase".into()],
        values: vec![gn.params[0], amp, gn.params[2], phase],
        uncertainties: (0..4).map(|i| gn.covariance[i][i].max(T::zero()).sqrt()).collect(),
        residual_rms: gn.residual_rms,
        converged: true,
        iterations: gn.iterations,
        r_squared: None,
        flags: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::analytic_echo_sigma;
    use crate::units::PhysicalParams;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn echo_points(s0: f64, s1: f64, tau: f64, n: usize, span: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let t = span * i as f64 / (n - 1) as f64;
                (t, analytic_echo_sigma(s0, s1, tau, t))
            })
            .collect()
    }

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn echo_roundtrip_is_exact() {
        let pts = echo_points(3.0, 4.0, 1.7e-3, 40, 4.0e-3);
        let fit = fit_echo(&pts).unwrap();
        assert_relative_eq!(fit.value("sigma0").unwrap(), 3.0, max_relative = 1e-9);
        assert_relative_eq!(fit.value("sigma1").unwrap(), 4.0, max_relative = 1e-9);
        assert_relative_eq!(fit.value("tau_ell").unwrap(), 1.7e-3, max_relative = 1e-9);
        assert!(fit.converged);
        assert!(fit.iterations <= 200);
    }

    #[test]
    fn echo_recovers_period_under_noise() {
        // 1% noise, 50 points over 2 periods
        let tau = 1.0;
        let mut errors = Vec::new();
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(f64, f64)> = echo_points(3.0, 4.0, tau, 50, 2.0)
                .into_iter()
                .map(|(t, s)| (t, s * (1.0 + 0.01 * gaussian(&mut rng))))
                .collect();
            let fit = fit_echo(&pts).unwrap();
            errors.push((fit.value("tau_ell").unwrap() - tau).abs() / tau);
        }
        let mean: f64 = errors.iter().sum::<f64>() / errors.len() as f64;
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(mean < 3e-3, "mean period error {mean}");
        assert!(errors[94] < 3e-3, "95th-percentile period error {}", errors[94]);
    }

    #[test]
    fn echo_flags_flat_signal() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 0.1, 3.0)).collect();
        let fit = fit_echo(&pts).unwrap();
        assert!(fit.flags.iter().any(|f| f.contains("unidentifiable")));
    }

    #[test]
    fn echo_jacobian_matches_finite_differences() {
        let p = [2.7f64, 3.9, 1.3];
        for &t in &[0.0, 0.31, 0.77, 1.9] {
            let j = echo_jacobian(&p, t);
            for i in 0..3 {
                let mut ph = p;
                let h = 1e-7 * p[i].max(1e-3);
                ph[i] += h;
                let fd = (echo_model(&ph, t) - echo_model(&p, t)) / h;
                assert_relative_eq!(j[i], fd, max_relative = 1e-5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn echo_fit_is_scale_equivariant() {
        let pts = echo_points(2.0, 5.0, 0.8, 30, 2.0);
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(t, s)| (t, 10.0 * s)).collect();
        let f1 = fit_echo(&pts).unwrap();
        let f2 = fit_echo(&scaled).unwrap();
        assert_relative_eq!(10.0 * f1.value("sigma0").unwrap(), f2.value("sigma0").unwrap(), max_relative = 1e-8);
        assert_relative_eq!(10.0 * f1.value("sigma1").unwrap(), f2.value("sigma1").unwrap(), max_relative = 1e-8);
        assert_relative_eq!(f1.value("tau_ell").unwrap(), f2.value("tau_ell").unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn echo_uncertainty_brackets_truth() {
        // 1-sigma coverage should be at least a loose 60% over seeds
        let tau = 1.0;
        let mut covered = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let pts: Vec<(f64, f64)> = echo_points(3.0, 4.0, tau, 50, 2.0)
                .into_iter()
                .map(|(t, s)| (t, s * (1.0 + 0.01 * gaussian(&mut rng))))
                .collect();
            let fit = fit_echo(&pts).unwrap();
            let d = (fit.value("tau_ell").unwrap() - tau).abs();
            if d <= fit.uncertainty("tau_ell").unwrap() {
                covered += 1;
            }
        }
        assert!(covered >= 60, "coverage {covered}/100");
    }

    #[test]
    fn linear_through_origin() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        let fit = fit_linear_through_origin(&x, &y).unwrap();
        assert_relative_eq!(fit.value("slope").unwrap(), 2.0);
        assert_relative_eq!(fit.r_squared.unwrap(), 1.0);
        // zero signal: slope 0 with large relative uncertainty, flagged
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y0: Vec<f64> = x.iter().map(|_| 1e-6 * gaussian(&mut rng)).collect();
        let fit0 = fit_linear_through_origin(&x, &y0).unwrap();
        assert!(fit0.flags.iter().any(|f| f.contains("zero")));
        // degenerate abscissas
        assert!(fit_linear_through_origin(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn j_scaling_roundtrip_recovers_printed_constants() {
        let mut samples = Vec::new();
        for &u0 in &[5.0, 8.0, 11.0, 14.0, 17.0, 20.0] {
            for ell in 1..=3u32 {
                samples.push(JSample {
                    u0,
                    ell,
                    alpha: 0.5,
                    j_rad_s: crate::effective::empirical_j(u0, 0.5, ell),
                });
            }
        }
        let fit = fit_j_scaling(&samples).unwrap();
        assert_relative_eq!(fit.value("prefactor").unwrap(), 2500.0, max_relative = 1e-9);
        assert_relative_eq!(fit.value("beta1").unwrap(), 0.35, max_relative = 1e-9);
        assert_relative_eq!(fit.value("beta2").unwrap(), 0.25, max_relative = 1e-9);
    }

    #[test]
    fn j_scaling_flags_single_harmonic() {
        let samples: Vec<JSample<f64>> = [5.0, 8.0, 11.0, 14.0]
            .iter()
            .map(|&u0| JSample { u0, ell: 1, alpha: 0.3, j_rad_s: crate::effective::empirical_j(u0, 0.3, 1) })
            .collect();
        let fit = fit_j_scaling(&samples).unwrap();
        assert!(fit.flags.iter().any(|f| f.contains("beta1")));
        assert_eq!(fit.value("beta1").unwrap(), 0.0);
        assert_relative_eq!(fit.value("beta2").unwrap(), 0.25, max_relative = 1e-9);
        // nonpositive samples are excluded with a warning
        let mut bad = samples.clone();
        bad.push(JSample { u0: 17.0, ell: 1, alpha: 0.3, j_rad_s: -1.0 });
        let fit2 = fit_j_scaling(&bad).unwrap();
        assert!(fit2.flags.iter().any(|f| f.contains("excluded")));
    }

    fn sr88_cfg() -> LatticeConfig<f64> {
        LatticeConfig::new(PhysicalParams::sr88(10.0).unwrap()).unwrap()
    }

    #[test]
    fn gravity_inverts_noiseless_synthetic() {
        let cfg = sr88_cfg();
        for ell in [1u32, 3] {
            let tau_ell = cfg.scales.bloch_period / ell as f64;
            let pts = echo_points(10.0, 20.0, tau_ell, 40, 2.5 * tau_ell);
            let fit = estimate_g(&pts, &cfg, ell).unwrap();
            assert_relative_eq!(fit.value("g").unwrap(), 9.805, max_relative = 1e-9);
        }
    }

    #[test]
    fn gravity_uncertainty_halves_when_span_doubles() {
        let cfg = sr88_cfg();
        let tau_ell = cfg.scales.bloch_period / 3.0;
        let run = |span_periods: f64| -> f64 {
            // fixed number of points, variable span; average over seeds
            let mut acc = 0.0;
            let n_seeds = 40;
            for seed in 0..n_seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
                let pts: Vec<(f64, f64)> =
                    echo_points(10.0, 20.0, tau_ell, 60, span_periods * tau_ell)
                        .into_iter()
                        .map(|(t, s)| (t, s * (1.0 + 0.01 * gaussian(&mut rng))))
                        .collect();
                let fit = estimate_g(&pts, &cfg, 3).unwrap();
                acc += fit.value("delta_g_over_g").unwrap();
            }
            acc / n_seeds as f64
        };
        let rel1 = run(2.0);
        let rel2 = run(4.0);
        let ratio = rel2 / rel1;
        assert!(
            (0.4..=0.6).contains(&ratio),
            "expected halving, got ratio {ratio} ({rel1} -> {rel2})"
        );
    }

    #[test]
    fn sinusoid_fit_recovers_phase_and_period() {
        let period = 2.3;
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.12).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&ti| 1.5 + 0.8 * (2.0 * std::f64::consts::PI * ti / period + 0.6).sin())
            .collect();
        let fit = fit_sinusoid(&t, &y).unwrap();
        assert_relative_eq!(fit.value("period").unwrap(), period, max_relative = 1e-8);
        assert_relative_eq!(fit.value("amplitude").unwrap(), 0.8, max_relative = 1e-8);
        assert_relative_eq!(fit.value("phase").unwrap(), 0.6, max_relative = 1e-7);
        assert_abs_diff_eq!(fit.value("offset").unwrap(), 1.5, epsilon = 1e-8);
    }
}
