//! Additive stochastic heat equation `dZ = (D Z'' + A Z) dT + B_T dW`.
//!
//! The periodic backend is exact in law per Fourier mode; the line backend is a
//! Crank-Nicolson finite-difference scheme with pinned ends.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::UniformSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseCoef {
    Constant(f64),
    /// `B_T = e^{T/4}`
    ExpQuarter,
}

impl NoiseCoef {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            NoiseCoef::Constant(b) => b,
            NoiseCoef::ExpQuarter => (0.25 * t).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpdeDomain {
    /// Unit circle with Fourier modes `|k| <= n_modes`, evaluated on `n_grid` points.
    Periodic { n_modes: usize, n_grid: usize },
    /// `[x_min, x_max]` with spacing `dx`, pinned to zero at both ends.
    Line { x_min: f64, x_max: f64, dx: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeConfig {
    pub a: f64,
    pub b: NoiseCoef,
    pub diffusivity: f64,
    pub domain: SpdeDomain,
    pub dt: f64,
    pub t_end: f64,
    /// Output times in `[0, t_end]`; `t_end` alone when empty.
    pub sample_times: Vec<f64>,
}

impl SpdeConfig {
    pub fn periodic(a: f64, b: NoiseCoef, n_modes: usize, dt: f64, t_end: f64) -> Self {
        SpdeConfig {
            a,
            b,
            diffusivity: 1.0,
            domain: SpdeDomain::Periodic {
                n_modes,
                n_grid: 2 * n_modes + 2,
            },
            dt,
            t_end,
            sample_times: vec![t_end],
        }
    }

    pub fn line(a: f64, b: NoiseCoef, x_min: f64, x_max: f64, dx: f64, dt: f64, t_end: f64) -> Self {
        SpdeConfig {
            a,
            b,
            diffusivity: 1.0,
            domain: SpdeDomain::Line { x_min, x_max, dx },
            dt,
            t_end,
            sample_times: vec![t_end],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.a <= 0.0) {
            return bad(format!("A must be <= 0, got {}", self.a));
        }
        if !(self.diffusivity > 0.0) {
            return bad(format!("diffusivity must be positive, got {}", self.diffusivity));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::NegativeTime(self.t_end));
        }
        if let Some(&t) = self.sample_times.iter().find(|t| !(**t >= 0.0 && **t <= self.t_end)) {
            return bad(format!("sample time {t} outside [0, {}]", self.t_end));
        }
        if self.sample_times.windows(2).any(|w| w[1] < w[0]) {
            return bad("sample times must be nondecreasing".into());
        }
        match self.domain {
            SpdeDomain::Periodic { n_modes, n_grid } => {
                if n_grid < 2 * n_modes + 1 {
                    return bad(format!("n_grid {n_grid} cannot resolve {n_modes} modes"));
                }
            }
            SpdeDomain::Line { x_min, x_max, dx } => {
                if !(dx > 0.0 && x_max - x_min >= 2.0 * dx) {
                    return bad(format!("line grid [{x_min}, {x_max}] with dx {dx}"));
                }
                if self.dt > dx * (1.0 + 1e-12) {
                    return bad(format!("dt {} exceeds dx {dx}", self.dt));
                }
            }
        }
        Ok(())
    }

    fn times(&self) -> Vec<f64> {
        if self.sample_times.is_empty() {
            vec![self.t_end]
        } else {
            self.sample_times.clone()
        }
    }

    /// Grid points of the configured domain.
    pub fn grid(&self) -> Vec<f64> {
        match self.domain {
            SpdeDomain::Periodic { n_grid, .. } => (0..n_grid).map(|j| j as f64 / n_grid as f64).collect(),
            SpdeDomain::Line { x_min, x_max, dx } => {
                let n = ((x_max - x_min) / dx).round() as usize;
                (0..=n).map(|i| x_min + i as f64 * dx).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeField {
    pub config: SpdeConfig,
    pub times: Vec<f64>,
    pub grid: Vec<f64>,
    /// Row per time, column per grid point.
    pub values: Vec<Vec<f64>>,
    /// Periodic only: coefficients in the basis `1, sqrt2 cos(2 pi k X), sqrt2 sin(2 pi k X)`.
    pub modes: Option<Vec<Vec<f64>>>,
    /// Periodic only: `int_0^t` of each coefficient.
    pub mode_integrals: Option<Vec<Vec<f64>>>,
    pub seed: Option<u64>,
}

/// Wavenumber of basis index `j` in the layout `1, c1, s1, c2, s2, ...`.
#[inline]
pub fn mode_wavenumber(j: usize) -> usize {
    j.div_ceil(2)
}

/// `B^2 / (2 ((2 pi k)^2 - A))`
pub fn mode_stationary_variance(a: f64, b: f64, k: i64) -> Result<f64> {
    let lam = (2.0 * PI * k as f64).powi(2) - a;
    if !(lam > 0.0) {
        return Err(Error::NonDissipative { k, a });
    }
    Ok(b * b / (2.0 * lam))
}

/// Coefficients of grid samples in the real Fourier basis.
pub fn project_modes(values: &[f64], n_modes: usize) -> Vec<f64> {
    let len = values.len();
    let n = len as f64;
    let twiddle: Vec<(f64, f64)> = (0..len).map(|m| (2.0 * PI * m as f64 / n).sin_cos()).collect();
    let mut out = vec![0.0; 2 * n_modes + 1];
    out[0] = values.iter().sum::<f64>() / n;
    for k in 1..=n_modes {
        let (mut c, mut s) = (0.0, 0.0);
        for (j, v) in values.iter().enumerate() {
            let (sin, cos) = twiddle[(k * j) % len];
            c += v * cos;
            s += v * sin;
        }
        out[2 * k - 1] = 2f64.sqrt() * c / n;
        out[2 * k] = 2f64.sqrt() * s / n;
    }
    out
}

/// Evaluate real Fourier coefficients at the points `x`.
pub fn synthesize(modes: &[f64], x: &[f64]) -> Vec<f64> {
    let n_modes = (modes.len() - 1) / 2;
    x.iter()
        .map(|&xi| {
            let mut v = modes[0];
            for k in 1..=n_modes {
                let ang = 2.0 * PI * k as f64 * xi;
                v += 2f64.sqrt() * (modes[2 * k - 1] * ang.cos() + modes[2 * k] * ang.sin());
            }
            v
        })
        .collect()
}

/// [`synthesize`] on the uniform grid `j / n_grid`.
fn synthesize_uniform(modes: &[f64], n_grid: usize) -> Vec<f64> {
    let n_modes = (modes.len() - 1) / 2;
    let twiddle: Vec<(f64, f64)> = (0..n_grid)
        .map(|m| (2.0 * PI * m as f64 / n_grid as f64).sin_cos())
        .collect();
    (0..n_grid)
        .map(|j| {
            let mut v = modes[0];
            for k in 1..=n_modes {
                let (sin, cos) = twiddle[(k * j) % n_grid];
                v += 2f64.sqrt() * (modes[2 * k - 1] * cos + modes[2 * k] * sin);
            }
            v
        })
        .collect()
}

/// Covariance of `(u(h), int_0^h u)` for `du = -lam u dt + B dW` started at 0,
/// divided by `B^2`: `(var_u, var_int, cov)`.
pub fn ou_step_covariance(lam: f64, h: f64) -> (f64, f64, f64) {
    let x = lam * h;
    if x < 1e-3 {
        let v1 = if x > 0.0 { h * -(-2.0 * x).exp_m1() / (2.0 * x) } else { h };
        let v2 = h * h * h * (1.0 / 3.0 - x / 4.0 + 7.0 * x * x / 60.0 - x * x * x / 24.0);
        let c = h * h * (0.5 - 0.5 * x + 7.0 * x * x / 24.0 - x * x * x / 8.0);
        return (v1, v2, c);
    }
    let e1 = -(-x).exp_m1();
    let e2 = -(-2.0 * x).exp_m1();
    let v1 = e2 / (2.0 * lam);
    let v2 = (h - 2.0 * e1 / lam + e2 / (2.0 * lam)) / (lam * lam);
    let c = (e1 / lam - e2 / (2.0 * lam)) / lam;
    (v1, v2, c)
}

/// Exact per-mode evolution of the periodic equation.
pub fn solve_ou_periodic<R: UniformSource + ?Sized>(cfg: &SpdeConfig, z0: &[f64], rng: &mut R) -> Result<SpdeField> {
    cfg.validate()?;
    let SpdeDomain::Periodic { n_modes, n_grid } = cfg.domain else {
        return Err(Error::InvalidArgument("solve_ou_periodic needs a periodic domain".into()));
    };
    if z0.len() != n_grid {
        return Err(Error::GridMismatch(format!("{} initial values for {n_grid} grid points", z0.len())));
    }
    let grid = cfg.grid();
    let nm = 2 * n_modes + 1;
    let lam: Vec<f64> = (0..nm)
        .map(|j| cfg.diffusivity * (2.0 * PI * mode_wavenumber(j) as f64).powi(2) - cfg.a)
        .collect();
    let mut u = project_modes(z0, n_modes);
    let mut integ = vec![0.0; nm];

    // (v1, v2, c, decay, drift_int) per mode for a step of length h.
    let coefficients = |h: f64| -> Vec<(f64, f64, f64, f64, f64)> {
        lam.iter()
            .map(|&l| {
                let (v1, v2, c) = ou_step_covariance(l, h);
                let drift_int = if l * h < 1e-12 { h } else { -(-l * h).exp_m1() / l };
                (v1, v2, c, (-l * h).exp(), drift_int)
            })
            .collect()
    };
    let regular = coefficients(cfg.dt);
    let step = |u: &mut [f64], integ: &mut [f64], t0: f64, h: f64, rng: &mut R| {
        let b = cfg.b.at(t0 + 0.5 * h);
        let irregular;
        let coef = if h == cfg.dt {
            &regular
        } else {
            irregular = coefficients(h);
            &irregular
        };
        for j in 0..nm {
            let (v1, v2, c, decay, drift_int) = coef[j];
            let (g1, g2) = (rng.standard_normal(), rng.standard_normal());
            let (n1, n2) = if b == 0.0 || v1 <= 0.0 {
                (0.0, 0.0)
            } else {
                let s1 = v1.sqrt();
                let rest = (v2 - c * c / v1).max(0.0).sqrt();
                (b * s1 * g1, b * (c / s1 * g1 + rest * g2))
            };
            integ[j] += drift_int * u[j] + n2;
            u[j] = decay * u[j] + n1;
        }
    };

    let times = cfg.times();
    let mut values = Vec::with_capacity(times.len());
    let mut modes = Vec::with_capacity(times.len());
    let mut integrals = Vec::with_capacity(times.len());
    let mut clock = 0.0;
    for &ts in &times {
        while clock < ts {
            let h = cfg.dt.min(ts - clock);
            if ts - clock - h < 1e-12 * cfg.dt {
                step(&mut u, &mut integ, clock, ts - clock, rng);
                clock = ts;
            } else {
                step(&mut u, &mut integ, clock, h, rng);
                clock += h;
            }
        }
        values.push(synthesize_uniform(&u, grid.len()));
        modes.push(u.clone());
        integrals.push(integ.clone());
    }
    Ok(SpdeField {
        config: cfg.clone(),
        times,
        grid,
        values,
        modes: Some(modes),
        mode_integrals: Some(integrals),
        seed: None,
    })
}

/// Solve `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i` in place (Thomas algorithm).
fn solve_tridiagonal(lower: f64, diag: f64, upper: f64, d: &mut [f64], scratch: &mut [f64]) {
    let n = d.len();
    scratch[0] = upper / diag;
    d[0] /= diag;
    for i in 1..n {
        let m = diag - lower * scratch[i - 1];
        scratch[i] = upper / m;
        d[i] = (d[i] - lower * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= scratch[i] * d[i + 1];
    }
}

/// Crank-Nicolson finite differences on a line window with zero boundary values.
pub fn solve_ou_line<R: UniformSource + ?Sized>(cfg: &SpdeConfig, z0: &[f64], rng: &mut R) -> Result<SpdeField> {
    cfg.validate()?;
    let SpdeDomain::Line { dx, .. } = cfg.domain else {
        return Err(Error::InvalidArgument("solve_ou_line needs a line domain".into()));
    };
    let grid = cfg.grid();
    if z0.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} initial values for {} grid points",
            z0.len(),
            grid.len()
        )));
    }
    let n = grid.len();
    let h = cfg.dt;
    let r = cfg.diffusivity * h / (dx * dx);
    // (I - h/2 L) u' = (I + h/2 L) u + B sqrt(h/dx) xi on the interior.
    let (lo, di, up) = (-0.5 * r, 1.0 + r - 0.5 * h * cfg.a, -0.5 * r);
    let mut u = z0.to_vec();
    u[0] = 0.0;
    u[n - 1] = 0.0;
    let mut rhs = vec![0.0; n - 2];
    let mut scratch = vec![0.0; n - 2];

    let times = cfg.times();
    let mut values = Vec::with_capacity(times.len());
    let mut step_index: u64 = 0;
    for &ts in &times {
        let target = (ts / h).round() as u64;
        while step_index < target {
            let t0 = step_index as f64 * h;
            let amp = cfg.b.at(t0 + 0.5 * h) * (h / dx).sqrt();
            for i in 1..n - 1 {
                let lap = u[i - 1] - 2.0 * u[i] + u[i + 1];
                rhs[i - 1] = u[i] + 0.5 * r * lap + 0.5 * h * cfg.a * u[i] + amp * rng.standard_normal();
            }
            solve_tridiagonal(lo, di, up, &mut rhs, &mut scratch);
            u[1..n - 1].copy_from_slice(&rhs);
            step_index += 1;
        }
        values.push(u.clone());
    }
    Ok(SpdeField {
        config: cfg.clone(),
        times,
        grid,
        values,
        modes: None,
        mode_integrals: None,
        seed: None,
    })
}

/// Smooth compactly supported test function `exp(-1/(1-r^2))`, `r = (X - center)/radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
}

impl Bump {
    /// `(phi, phi'')` at `x`; periodic images are used when `periodic` is set.
    pub fn eval(&self, x: f64, periodic: bool) -> (f64, f64) {
        let mut d = x - self.center;
        if periodic {
            d -= d.round();
        }
        let u = d / self.radius;
        if u.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let w = 1.0 - u * u;
        let phi = (-1.0 / w).exp();
        let u2 = u * u;
        let dd = phi * (6.0 * u2 * u2 - 2.0) / (w * w * w * w) / (self.radius * self.radius);
        (phi, dd)
    }

    /// Real Fourier coefficients on the unit circle.
    pub fn modes(&self, n_modes: usize) -> Vec<f64> {
        let m = 8192.max(8 * n_modes);
        let samples: Vec<f64> = (0..m).map(|j| self.eval(j as f64 / m as f64, true).0).collect();
        project_modes(&samples, n_modes)
    }
}

/// Martingale-problem residuals `(M_t, N_t)` at the field's sample times.
///
/// `M_t = Z_t(phi) - Z_0(phi) - int_0^t Z_r(diffusivity phi'' + A phi) dr` and
/// `N_t = M_t^2 - (e^{2ct} - 1)/(2c) |phi|^2`. On the periodic backend the
/// integrals are exact and `|phi|^2` is the squared norm of the resolved modes;
/// on the line backend the time integral is trapezoidal over the samples.
pub fn martingale_problem_residual(
    field: &SpdeField,
    phi: &Bump,
    a: f64,
    c: f64,
    diffusivity: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let comp = |t: f64, norm2: f64| bracket_compensator(t, c, norm2);
    match (&field.modes, &field.mode_integrals, field.config.domain) {
        (Some(_), Some(_), SpdeDomain::Periodic { n_modes, .. }) => {
            periodic_residual(field, &phi.modes(n_modes), a, c, diffusivity)
        }
        (_, _, SpdeDomain::Line { dx, .. }) => {
            let w: Vec<(f64, f64)> = field.grid.iter().map(|&x| phi.eval(x, false)).collect();
            let norm2: f64 = w.iter().map(|p| p.0 * p.0).sum::<f64>() * dx;
            let pair = |row: &[f64]| -> (f64, f64) {
                row.iter()
                    .zip(&w)
                    .fold((0.0, 0.0), |(s, g), (z, (p, dd))| (s + z * p * dx, g + z * (diffusivity * dd + a * p) * dx))
            };
            let (z0, g0) = pair(field.values.first().ok_or(Error::InsufficientSamples { found: 0, required: 1 })?);
            if field.times[0] != 0.0 {
                return Err(Error::GridMismatch("line residual needs a sample at time 0".into()));
            }
            let mut m = vec![0.0];
            let mut nn = vec![0.0];
            let (mut prev_t, mut prev_g, mut acc) = (0.0, g0, 0.0);
            for (ti, &t) in field.times.iter().enumerate().skip(1) {
                let (zt, gt) = pair(&field.values[ti]);
                acc += 0.5 * (t - prev_t) * (gt + prev_g);
                let mv = zt - z0 - acc;
                m.push(mv);
                nn.push(mv * mv - comp(t, norm2));
                prev_t = t;
                prev_g = gt;
            }
            Ok((m, nn))
        }
        _ => Err(Error::InvalidArgument("periodic field without mode record".into())),
    }
}

/// Periodic residuals against precomputed test-function coefficients
/// (`phi_modes = project_modes(phi)` at the field's resolution).
pub fn periodic_residual(field: &SpdeField, phi_modes: &[f64], a: f64, c: f64, diffusivity: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (Some(modes), Some(integ)) = (&field.modes, &field.mode_integrals) else {
        return Err(Error::InvalidArgument("periodic field without mode record".into()));
    };
    if modes.first().map(Vec::len) != Some(phi_modes.len()) {
        return Err(Error::GridMismatch("test function and field have different mode counts".into()));
    }
    let ph = phi_modes;
    let norm2: f64 = ph.iter().map(|v| v * v).sum();
    let z0 = initial_modes(field)?;
    let dot = |v: &[f64]| -> f64 { v.iter().zip(ph).map(|(a, b)| a * b).sum() };
    let gen: Vec<f64> = (0..ph.len())
        .map(|j| ph[j] * (a - diffusivity * (2.0 * PI * mode_wavenumber(j) as f64).powi(2)))
        .collect();
    let mut m = Vec::new();
    let mut nn = Vec::new();
    for (ti, &t) in field.times.iter().enumerate() {
        let drift: f64 = integ[ti].iter().zip(&gen).map(|(i, g)| i * g).sum();
        let mv = dot(&modes[ti]) - dot(&z0) - drift;
        m.push(mv);
        nn.push(mv * mv - bracket_compensator(t, c, norm2));
    }
    Ok((m, nn))
}

fn bracket_compensator(t: f64, c: f64, norm2: f64) -> f64 {
    if c.abs() < 1e-12 {
        t * norm2
    } else {
        (2.0 * c * t).exp_m1() / (2.0 * c) * norm2
    }
}

/// Coefficients at time 0, which must be a sample time.
fn initial_modes(field: &SpdeField) -> Result<Vec<f64>> {
    let modes = field.modes.as_ref().ok_or_else(|| Error::InvalidArgument("missing modes".into()))?;
    if field.times.first() == Some(&0.0) {
        return Ok(modes[0].clone());
    }
    Err(Error::GridMismatch("periodic residual needs a sample at time 0".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn stationary_variance_values() {
        let v = mode_stationary_variance(0.0, 1.0, 1).unwrap();
        assert!((v - 1.0 / (8.0 * PI * PI)).abs() < 1e-16);
        assert_eq!(mode_stationary_variance(-1.0, 0.0, 3).unwrap(), 0.0);
        assert!((mode_stationary_variance(-0.25, 1.0, 0).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(mode_stationary_variance(0.0, 1.0, 0), Err(Error::NonDissipative { .. })));
    }

    #[test]
    fn covariance_series_matches_closed_form() {
        for lam in [1e-2, 0.5, 3.0] {
            let h = 0.99e-3 / lam;
            let (a1, a2, a3) = ou_step_covariance(lam, h);
            let x = lam * h;
            let e1 = -(-x).exp_m1();
            let e2 = -(-2.0 * x).exp_m1();
            let b1 = e2 / (2.0 * lam);
            let b3 = (e1 / lam - e2 / (2.0 * lam)) / lam;
            assert!((a1 / b1 - 1.0).abs() < 1e-12);
            assert!((a3 / b3 - 1.0).abs() < 1e-9);
            assert!(a2 > 0.0 && (a2 / (h * h * h / 3.0) - 1.0).abs() < 1e-3);
        }
        let (v1, v2, c) = ou_step_covariance(0.0, 2.0);
        assert_eq!((v1, v2, c), (2.0, 8.0 / 3.0, 2.0));
    }

    #[test]
    fn projection_round_trip() {
        let n_modes = 6;
        let grid: Vec<f64> = (0..20).map(|j| j as f64 / 20.0).collect();
        let modes: Vec<f64> = (0..13).map(|j| (j as f64 * 0.37).sin()).collect();
        let vals = synthesize(&modes, &grid);
        let back = project_modes(&vals, n_modes);
        for (a, b) in modes.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
        for (a, b) in synthesize_uniform(&modes, grid.len()).iter().zip(&vals) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn deterministic_heat_decay() {
        let mut cfg = SpdeConfig::periodic(0.0, NoiseCoef::Constant(0.0), 4, 0.01, 0.05);
        cfg.sample_times = vec![0.0, 0.05];
        let grid = cfg.grid();
        let z0: Vec<f64> = grid.iter().map(|x| 1.0 + (2.0 * PI * 3.0 * x).cos()).collect();
        let f = solve_ou_periodic(&cfg, &z0, &mut stream(1, 0)).unwrap();
        let decay = (-(6.0 * PI).powi(2) * 0.05).exp();
        for (x, v) in grid.iter().zip(&f.values[1]) {
            assert!((v - (1.0 + decay * (6.0 * PI * x).cos())).abs() < 1e-12);
        }
        let (m, _) = martingale_problem_residual(&f, &Bump { center: 0.4, radius: 0.2 }, 0.0, 0.0, 1.0).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-12), "{m:?}");
    }

    #[test]
    fn bump_second_derivative() {
        let b = Bump { center: 0.5, radius: 0.3 };
        let h = 1e-4;
        for x in [0.3, 0.45, 0.5, 0.61, 0.75] {
            let fd = (b.eval(x + h, false).0 - 2.0 * b.eval(x, false).0 + b.eval(x - h, false).0) / (h * h);
            assert!((fd - b.eval(x, false).1).abs() < 1e-5 * (1.0 + fd.abs()));
        }
        assert_eq!(b.eval(0.1, false), (0.0, 0.0));
    }

    #[test]
    fn line_deterministic_decay() {
        // Discrete sine mode decays by the Crank-Nicolson amplification factor.
        let (dx, dt) = (0.01, 0.005);
        let cfg = SpdeConfig::line(-0.25, NoiseCoef::Constant(0.0), 0.0, 1.0, dx, dt, 0.1);
        let grid = cfg.grid();
        let z0: Vec<f64> = grid.iter().map(|x| (PI * x).sin()).collect();
        let f = solve_ou_line(&cfg, &z0, &mut stream(1, 0)).unwrap();
        let lam = 4.0 / (dx * dx) * (0.5 * PI * dx).sin().powi(2) + 0.25;
        let amp = ((1.0 - 0.5 * dt * lam) / (1.0 + 0.5 * dt * lam)).powi(20);
        for (x, v) in grid.iter().zip(&f.values[0]) {
            assert!((v - amp * (PI * x).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SpdeConfig::periodic(0.5, NoiseCoef::Constant(1.0), 4, 0.01, 1.0);
        assert!(cfg.validate().is_err());
        cfg.a = 0.0;
        cfg.domain = SpdeDomain::Periodic { n_modes: 4, n_grid: 8 };
        assert!(cfg.validate().is_err());
        let cfg = SpdeConfig::line(0.0, NoiseCoef::Constant(1.0), 0.0, 1.0, 0.01, 0.02, 1.0);
        assert!(cfg.validate().is_err());
    }
}
