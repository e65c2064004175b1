//! Stationary one-point marginals, the window sampler and the spatial OU process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Domain, HeightFunction};
use crate::model::{ModelParams, RateFunction};
use crate::rng::UniformSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Parity of `s(x)` at site `x` under the convention that `s(0)` is even.
    pub fn of_site(x: i64) -> Self {
        if x.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    fn offset(self) -> i64 {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }
}

/// Sign and natural log of `|prod_{k>=0} (1 - a q^k)|`.
pub fn log_q_pochhammer(a: f64, q: f64, tol: f64) -> Result<(f64, f64)> {
    if !(q.abs() < 1.0) {
        return Err(Error::NonConvergent { q });
    }
    if a == 0.0 {
        return Ok((1.0, 0.0));
    }
    let tol = tol.max(f64::EPSILON);
    let mut sign = 1.0;
    let mut log = 0.0;
    let mut term = a;
    let one_minus_q = 1.0 - q.abs();
    let mut k = 0u64;
    loop {
        let f = 1.0 - term;
        if f == 0.0 {
            return Ok((0.0, f64::NEG_INFINITY));
        }
        if f < 0.0 {
            sign = -sign;
        }
        log += if term.abs() < 0.5 { (-term).ln_1p() } else { f.abs().ln() };
        term *= q;
        k += 1;
        // Remaining factors contribute at most ~|term| / (1 - q) to the log.
        if term.abs() < tol * one_minus_q || term == 0.0 {
            break;
        }
        if k > 100_000_000 {
            return Err(Error::NonConvergent { q });
        }
    }
    Ok((sign, log))
}

/// `prod_{k>=0} (1 - a q^k)`, truncated once the tail factor is within `tol` of 1.
pub fn q_pochhammer(a: f64, q: f64, tol: f64) -> Result<f64> {
    let (sign, log) = log_q_pochhammer(a, q, tol)?;
    Ok(sign * log.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalPMF {
    pub parity: Parity,
    /// Index `n` of the first entry; the height is `2n` (even) or `2n + 1` (odd).
    pub n_min: i64,
    pub probs: Vec<f64>,
    pub truncation_error: f64,
}

impl MarginalPMF {
    pub fn heights(&self) -> impl Iterator<Item = i64> + '_ {
        let off = self.parity.offset();
        (0..self.probs.len() as i64).map(move |k| 2 * (self.n_min + k) + off)
    }

    pub fn prob_of_height(&self, s: i64) -> f64 {
        let off = self.parity.offset();
        if (s - off).rem_euclid(2) != 0 {
            return 0.0;
        }
        let k = (s - off).div_euclid(2) - self.n_min;
        if k < 0 || k as usize >= self.probs.len() {
            0.0
        } else {
            self.probs[k as usize]
        }
    }

    /// Raw moment `E[(scale * s)^p]`.
    pub fn moment(&self, p: i32, scale: f64) -> f64 {
        self.heights()
            .zip(&self.probs)
            .map(|(s, w)| w * (scale * s as f64).powi(p))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1, 1.0)
    }

    /// Central moment `E[(scale (s - mean))^p]`.
    pub fn central_moment(&self, p: i32, scale: f64) -> f64 {
        let m = self.mean();
        self.heights()
            .zip(&self.probs)
            .map(|(s, w)| w * (scale * (s as f64 - m)).powi(p))
            .sum()
    }

    pub fn variance(&self, scale: f64) -> f64 {
        self.central_moment(2, scale)
    }

    pub fn kurtosis(&self) -> f64 {
        let v = self.central_moment(2, 1.0);
        self.central_moment(4, 1.0) / (v * v)
    }

    /// Inverse-CDF draw of a height.
    pub fn sample<R: UniformSource + ?Sized>(&self, rng: &mut R) -> i64 {
        let u = rng.uniform() * self.probs.iter().sum::<f64>();
        let mut acc = 0.0;
        let off = self.parity.offset();
        for (k, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u <= acc {
                return 2 * (self.n_min + k as i64) + off;
            }
        }
        2 * (self.n_min + self.probs.len() as i64 - 1) + off
    }
}

fn classic_only(params: &ModelParams) -> Result<()> {
    match params.rate_function {
        RateFunction::Classic => Ok(()),
        RateFunction::Generalized(_) => Err(Error::InvalidArgument(
            "the stationary measure is only known for the classic rates".into(),
        )),
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log of the unnormalized weight of `s = 2n` (even) or `s = 2n + 1` (odd).
fn log_weight(parity: Parity, n: i64, ln_alpha: f64, eps: f64) -> f64 {
    let n = n as f64;
    match parity {
        Parity::Even => -2.0 * n * ln_alpha - eps * n * (2.0 * n - 1.0) + softplus(-ln_alpha - 2.0 * eps * n),
        Parity::Odd => {
            -2.0 * n * ln_alpha - eps * n * (2.0 * n + 1.0) + softplus(-ln_alpha - eps * (2.0 * n + 1.0))
        }
    }
}

/// Log of the closed-form normalizer.
fn log_normalizer(parity: Parity, alpha: f64, q: f64, tol: f64) -> Result<f64> {
    let (a1, a2) = match parity {
        Parity::Even => (-1.0 / alpha, -q * alpha),
        Parity::Odd => (-q / alpha, -alpha),
    };
    let (_, l1) = log_q_pochhammer(a1, q, tol)?;
    let (_, l2) = log_q_pochhammer(a2, q, tol)?;
    let (_, l3) = log_q_pochhammer(q, q, tol)?;
    Ok(l1 + l2 + l3)
}

/// One-point stationary marginal of the given parity.
pub fn marginal_pmf(params: &ModelParams, parity: Parity, tol: f64) -> Result<MarginalPMF> {
    classic_only(params)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let eps = params.eps;
    let la = params.alpha.ln();
    let q = params.q();
    // The log weight is a concave quadratic in n up to the softplus term.
    let centre = (-la / (2.0 * eps)).round() as i64;
    let mut mode = centre;
    let lw = |n: i64| log_weight(parity, n, la, eps);
    while lw(mode + 1) > lw(mode) {
        mode += 1;
    }
    while lw(mode - 1) > lw(mode) {
        mode -= 1;
    }
    let peak = lw(mode);
    let cut = (tol * 1e-3).ln();
    let mut lo = mode;
    while lw(lo - 1) - peak > cut {
        lo -= 1;
    }
    let mut hi = mode;
    while lw(hi + 1) - peak > cut {
        hi += 1;
    }
    let log_z = log_normalizer(parity, params.alpha, q, tol * 1e-3)?;
    let probs: Vec<f64> = (lo..=hi).map(|n| (lw(n) - log_z).exp()).collect();
    let total: f64 = probs.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "marginal weights sum to {total}, exceeding the closed-form normalizer"
        )));
    }
    let truncation_error = (1.0 - total).max(0.0);
    if truncation_error > tol.max(1e-9) {
        return Err(Error::InvalidArgument(format!(
            "marginal weights cover only {total} of the closed-form mass"
        )));
    }
    Ok(MarginalPMF {
        parity,
        n_min: lo,
        probs,
        truncation_error,
    })
}

/// Probability that the height steps up when moving from `x` to `x - 1`.
#[inline]
pub fn left_step_up_probability(params: &ModelParams, s: i64) -> f64 {
    // q^s / (alpha + q^s) = 1 / (1 + alpha q^{-s}).
    let l = params.alpha.ln() + params.eps * s as f64;
    1.0 / (1.0 + l.exp())
}

/// Cached marginals for repeated window sampling.
#[derive(Debug, Clone)]
pub struct StationarySampler {
    params: ModelParams,
    even: MarginalPMF,
    odd: MarginalPMF,
}

impl StationarySampler {
    pub fn new(params: &ModelParams) -> Result<Self> {
        Ok(Self {
            params: *params,
            even: marginal_pmf(params, Parity::Even, 1e-13)?,
            odd: marginal_pmf(params, Parity::Odd, 1e-13)?,
        })
    }

    pub fn marginal(&self, parity: Parity) -> &MarginalPMF {
        match parity {
            Parity::Even => &self.even,
            Parity::Odd => &self.odd,
        }
    }

    pub fn sample<R: UniformSource + ?Sized>(&self, domain: Domain, rng: &mut R) -> Result<HeightFunction> {
        let (x_min, x_max) = match domain {
            Domain::LineWindow { x_min, x_max, .. } => (x_min, x_max),
            Domain::Ring { .. } => {
                return Err(Error::InvalidArgument(
                    "stationary sampling is defined on line windows".into(),
                ))
            }
        };
        let n = (x_max - x_min + 1) as usize;
        let mut values = vec![0i64; n];
        let mut s = self.marginal(Parity::of_site(x_max)).sample(rng);
        values[n - 1] = s;
        for i in (0..n - 1).rev() {
            let p_up = left_step_up_probability(&self.params, s);
            s += if rng.uniform() <= p_up { 1 } else { -1 };
            values[i] = s;
        }
        HeightFunction::from_values(domain, values)
    }
}

/// Draw a window configuration from the stationary measure.
pub fn sample_stationary<R: UniformSource + ?Sized>(
    params: &ModelParams,
    domain: Domain,
    rng: &mut R,
) -> Result<HeightFunction> {
    StationarySampler::new(params)?.sample(domain, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    pub theta: f64,
    pub sigma: f64,
    pub init_var: f64,
}

impl OUParams {
    pub fn new(theta: f64, sigma: f64, init_var: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::InvalidArgument(format!("theta = {theta} must be positive")));
        }
        if !(sigma >= 0.0) || !(init_var >= 0.0) {
            return Err(Error::InvalidArgument("sigma and init_var must be nonnegative".into()));
        }
        Ok(Self {
            theta,
            sigma,
            init_var,
        })
    }

    /// Stationary OU with the given spatial variance and decay rate.
    pub fn stationary(theta: f64, variance: f64) -> Result<Self> {
        Self::new(theta, (2.0 * theta * variance).sqrt(), variance)
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }
}

/// Exact OU path on a sorted grid, started at `X = 0` and run outward both ways.
pub fn spatial_ou_sample<R: UniformSource + ?Sized>(
    ou: &OUParams,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("grid must be sorted".into()));
    }
    let z0 = ou.init_var.sqrt() * rng.standard_normal();
    let mut out = vec![0.0; grid.len()];
    let step = |z: f64, h: f64, rng: &mut R| {
        let decay = (-ou.theta * h).exp();
        let var = ou.sigma * ou.sigma * -(-2.0 * ou.theta * h).exp_m1() / (2.0 * ou.theta);
        decay * z + var.sqrt() * rng.standard_normal()
    };
    let split = grid.partition_point(|&x| x < 0.0);
    let (mut z, mut at) = (z0, 0.0);
    for i in split..grid.len() {
        z = step(z, grid[i] - at, rng);
        at = grid[i];
        out[i] = z;
    }
    let (mut z, mut at) = (z0, 0.0);
    for i in (0..split).rev() {
        z = step(z, at - grid[i], rng);
        at = grid[i];
        out[i] = z;
    }
    Ok(out)
}
