//! Model parameters and jump rates.
//!
//! Both rate families are written in terms of a log-activity `L`: the classic
//! rates use `L = ln(alpha) + eps * s` (so `e^L = alpha q^{-s}`), the generalized
//! ones use `L = eps * f(s - chi x / N)`. With `k = 1 - q`,
//!
//! ```text
//! up   = 1 - (k/2) (1 + tanh((L + eps)/2))
//! down = 1 - (k/2) (1 - tanh((L - eps)/2))
//! ```
//!
//! which is algebraically identical to the rational form and never overflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Domain, HeightFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// `f(z) = slope * z + offset`
    Affine { slope: f64, offset: f64 },
    /// `f(z) = slope * z + amplitude * cos(z)`
    LinearCos { slope: f64, amplitude: f64 },
}

impl Shape {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Shape::Affine { slope, offset } => slope * z + offset,
            Shape::LinearCos { slope, amplitude } => slope * z + amplitude * z.cos(),
        }
    }

    /// `f(z) = z`, which reproduces the classic rates at `alpha = 1`.
    pub fn identity() -> Self {
        Shape::Affine {
            slope: 1.0,
            offset: 0.0,
        }
    }
}

/// Generalized rate function together with its growth constants `(a, gamma, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Generalized {
    pub shape: Shape,
    pub a: f64,
    pub gamma: f64,
    pub c: f64,
}

impl Generalized {
    pub fn new(shape: Shape, a: f64, gamma: f64, c: f64) -> Result<Self> {
        let g = Self { shape, a, gamma, c };
        g.check_assumption()?;
        Ok(g)
    }

    /// Largest violation of `|f(z) - f(0) - a z| <= c |z|^gamma` on a symmetric
    /// grid of `z` values (linear near 0, geometric out to 1e6). Zero when it holds.
    pub fn assumption_violation(&self) -> f64 {
        let f0 = self.shape.eval(0.0);
        let mut zs: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let mut z = 20.0;
        while z < 1e6 {
            z *= 1.1;
            zs.push(z);
        }
        let mut worst = 0.0f64;
        for &z in &zs {
            for z in [z, -z] {
                let lhs = (self.shape.eval(z) - f0 - self.a * z).abs();
                let rhs = self.c * z.abs().powf(self.gamma);
                // Relative slack for rounding in f at large |z|.
                let slack = 1e-12 * (1.0 + (self.a * z).abs());
                worst = worst.max(lhs - rhs - slack);
            }
        }
        worst.max(0.0)
    }

    pub fn check_assumption(&self) -> Result<()> {
        if !(self.a >= 0.0) {
            return Err(Error::InvalidArgument(format!("a = {} must be >= 0", self.a)));
        }
        if !(0.0..0.5).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!(
                "gamma = {} must lie in [0, 1/2)",
                self.gamma
            )));
        }
        if !(self.c >= 0.0) {
            return Err(Error::InvalidArgument(format!("c = {} must be >= 0", self.c)));
        }
        let v = self.assumption_violation();
        if v > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rate function violates its growth bound by {v:e}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateFunction {
    Classic,
    Generalized(Generalized),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub eps: f64,
    pub alpha: f64,
    pub rate_function: RateFunction,
    pub domain: Domain,
}

impl ModelParams {
    pub fn new(eps: f64, alpha: f64, rate_function: RateFunction, domain: Domain) -> Result<Self> {
        let p = Self {
            eps,
            alpha,
            rate_function,
            domain,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn classic(eps: f64, alpha: f64, domain: Domain) -> Result<Self> {
        Self::new(eps, alpha, RateFunction::Classic, domain)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps = {} must be positive", self.eps)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha = {} must be positive",
                self.alpha
            )));
        }
        self.domain.validate()?;
        if let RateFunction::Generalized(g) = self.rate_function {
            g.check_assumption()?;
        }
        Ok(())
    }

    pub fn q(&self) -> f64 {
        (-self.eps).exp()
    }

    /// `(1 - sqrt q)^2`
    pub fn theta1(&self) -> f64 {
        theta1(self.eps)
    }

    /// `2 sqrt q`
    pub fn theta2(&self) -> f64 {
        theta2(self.eps)
    }

    /// `log_q(alpha)`, the preferred height of the classic model.
    pub fn preferred_height(&self) -> f64 {
        -self.alpha.ln() / self.eps
    }

    /// Whether rates depend on `s` alone (and not on the site).
    pub fn rates_site_independent(&self) -> bool {
        match self.rate_function {
            RateFunction::Classic => true,
            RateFunction::Generalized(_) => self.domain.winding() == 0,
        }
    }

    /// Log-activity at height `s` and site `x`.
    #[inline]
    pub fn log_activity(&self, s: i64, x: i64) -> f64 {
        match self.rate_function {
            RateFunction::Classic => self.alpha.ln() + self.eps * s as f64,
            RateFunction::Generalized(g) => {
                let tilt = match self.domain {
                    Domain::Ring { period, winding } => winding as f64 * x as f64 / period as f64,
                    Domain::LineWindow { .. } => 0.0,
                };
                self.eps * g.shape.eval(s as f64 - tilt)
            }
        }
    }

    /// `(down, up)` rates at height `s` and site `x`, ignoring eligibility.
    #[inline]
    pub fn rates_at(&self, s: i64, x: i64) -> (f64, f64) {
        rates_from_log_activity(self.log_activity(s, x), self.eps)
    }
}

pub fn theta1(eps: f64) -> f64 {
    // 1 - sqrt(q) = -expm1(-eps/2)
    let d = -(-eps / 2.0).exp_m1();
    d * d
}

pub fn theta2(eps: f64) -> f64 {
    2.0 * (-eps / 2.0).exp()
}

/// `(down, up)` for log-activity `l`.
#[inline]
pub fn rates_from_log_activity(l: f64, eps: f64) -> (f64, f64) {
    let k = -(-eps).exp_m1();
    let up = 1.0 - 0.5 * k * (1.0 + (0.5 * (l + eps)).tanh());
    let down = 1.0 - 0.5 * k * (1.0 - (0.5 * (l - eps)).tanh());
    (down, up)
}

/// `(rho, lambda) = ((up + down)/2, (up - down)/2)` at log-activity `l`.
#[inline]
pub fn rho_lambda_from_log_activity(l: f64, eps: f64) -> (f64, f64) {
    let k = -(-eps).exp_m1();
    let tp = (0.5 * (l + eps)).tanh();
    let tm = (0.5 * (l - eps)).tanh();
    let rho = 1.0 - 0.5 * k + 0.25 * k * (tm - tp);
    let lambda = -0.25 * k * (tp + tm);
    (rho, lambda)
}

/// Down and up rates at site `x` of `h`. Eligibility is not applied.
pub fn jump_rates(params: &ModelParams, h: &HeightFunction, x: i64) -> Result<(f64, f64)> {
    let s = h.get(x)?;
    if let Domain::LineWindow { .. } = h.domain() {
        h.domain().index_of(x)?;
    }
    Ok(params.rates_at(s, x))
}

/// `(rho_eps, lambda_eps)` at rescaled height `shat` and macroscopic position `x_frac`.
///
/// The tilt `chi x / N` cancels against the recentring `chi X` of the rescaled
/// height, so the rate argument is `shat / sqrt(eps)` at every position.
pub fn rate_drift_decomposition(params: &ModelParams, shat: f64, x_frac: f64) -> Result<(f64, f64)> {
    let g = match params.rate_function {
        RateFunction::Generalized(g) => g,
        RateFunction::Classic => {
            return Err(Error::InvalidArgument(
                "rate/drift decomposition needs a generalized rate function".into(),
            ))
        }
    };
    if !x_frac.is_finite() || !shat.is_finite() {
        return Err(Error::InvalidArgument("non-finite argument".into()));
    }
    let eps = params.eps;
    let l = eps * g.shape.eval(shat / eps.sqrt());
    let (rho, lambda) = rho_lambda_from_log_activity(l, eps);
    Ok((rho, lambda * eps.powf(-1.5)))
}

/// Worst-case constants over a sweep of rescaled heights:
/// `c0 = max |rho - 1 + eps/2| / eps^2` and
/// `c1 = max |lambda + a shat / 4| / (eps^{1-gamma} (1 + sqrt(eps)|shat|)^gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    pub eps: f64,
    pub c0: f64,
    pub c1: f64,
    /// `max |lambda| * sqrt(eps)`
    pub lambda_sup: f64,
}

pub fn fit_drift_constants(params: &ModelParams, shat_grid: &[f64]) -> Result<DriftConstants> {
    let g = match params.rate_function {
        RateFunction::Generalized(g) => g,
        RateFunction::Classic => {
            return Err(Error::InvalidArgument(
                "drift constants need a generalized rate function".into(),
            ))
        }
    };
    let eps = params.eps;
    let mut out = DriftConstants {
        eps,
        c0: 0.0,
        c1: 0.0,
        lambda_sup: 0.0,
    };
    for &sh in shat_grid {
        let (rho, lambda) = rate_drift_decomposition(params, sh, 0.0)?;
        out.c0 = out.c0.max((rho - 1.0 + eps / 2.0).abs() / (eps * eps));
        let scale = eps.powf(1.0 - g.gamma) * (1.0 + eps.sqrt() * sh.abs()).powf(g.gamma);
        out.c1 = out.c1.max((lambda + g.a * sh / 4.0).abs() / scale);
        out.lambda_sup = out.lambda_sup.max(lambda.abs() * eps.sqrt());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{new_height, Profile};
    use proptest::prelude::*;

    fn line() -> Domain {
        Domain::line(-10, 10).unwrap()
    }

    fn rational(alpha: f64, q: f64, s: f64) -> (f64, f64) {
        let a = alpha * q.powf(-s);
        let down = q * (1.0 + a) / (1.0 + a * q);
        let up = (1.0 + a) / (1.0 + a / q);
        (down, up)
    }

    #[test]
    fn preferred_height_equal_rates() {
        let p = ModelParams::classic(2f64.ln(), 1.0, line()).unwrap();
        let (d, u) = p.rates_at(0, 0);
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
        assert!((u - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn small_alpha_limit_recovers_asep_rates() {
        let eps = 0.3;
        let p = ModelParams::classic(eps, 1e-200, line()).unwrap();
        let (d, u) = p.rates_at(5, 0);
        assert!((d - (-eps).exp()).abs() < 1e-14);
        assert!((u - 1.0).abs() < 1e-14);
        let p = ModelParams::classic(eps, 1e200, line()).unwrap();
        let (d, u) = p.rates_at(5, 0);
        assert!((d - 1.0).abs() < 1e-14);
        assert!((u - (-eps).exp()).abs() < 1e-14);
    }

    #[test]
    fn generalized_identity_matches_classic() {
        let d = Domain::ring(16, 0).unwrap();
        let c = ModelParams::classic(0.2, 1.0, d).unwrap();
        let g = ModelParams::new(
            0.2,
            1.0,
            RateFunction::Generalized(Generalized::new(Shape::identity(), 1.0, 0.0, 0.0).unwrap()),
            d,
        )
        .unwrap();
        for s in -30..30 {
            assert_eq!(c.rates_at(s, 3), g.rates_at(s, 3));
        }
    }

    #[test]
    fn jump_rates_reads_height() {
        let d = Domain::line(-2, 2).unwrap();
        let h = new_height(d, Profile::Wedge).unwrap();
        let p = ModelParams::classic(0.5, 1.0, d).unwrap();
        assert_eq!(jump_rates(&p, &h, 2).unwrap(), p.rates_at(2, 2));
        assert!(matches!(jump_rates(&p, &h, 3), Err(Error::OutOfDomain { site: 3 })));
    }

    #[test]
    fn zero_rate_function_has_zero_drift() {
        let d = Domain::ring(64, 0).unwrap();
        for eps in [0.3, 0.1, 0.01] {
            let g = Generalized::new(
                Shape::Affine {
                    slope: 0.0,
                    offset: 0.0,
                },
                0.0,
                0.0,
                0.0,
            )
            .unwrap();
            let p = ModelParams::new(eps, 1.0, RateFunction::Generalized(g), d).unwrap();
            for sh in [-3.0, 0.0, 2.5] {
                let (_, lambda) = rate_drift_decomposition(&p, sh, 0.25).unwrap();
                assert_eq!(lambda, 0.0);
            }
        }
    }

    #[test]
    fn assumption_check_rejects_bad_constants() {
        let shape = Shape::LinearCos {
            slope: 1.0,
            amplitude: 0.5,
        };
        assert!(Generalized::new(shape, 1.0, 0.0, 1.0).is_ok());
        assert!(Generalized::new(shape, 1.0, 0.0, 0.5).is_err());
        assert!(Generalized::new(shape, 0.5, 0.0, 1.0).is_err());
        assert!(Generalized::new(shape, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn theta_constants() {
        for eps in [1.0f64, 0.1, 0.01, 1e-4] {
            let q = (-eps).exp();
            assert!((theta1(eps) - (1.0 - q.sqrt()).powi(2)).abs() < 1e-15);
            assert!((theta1(eps) / (eps * eps) - 0.25).abs() <= eps / 4.0);
            assert!((theta2(eps) - 2.0 * q.sqrt()).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn stable_form_matches_rational(eps in 0.001f64..2.0, s in -40i64..40, la in -3.0f64..3.0) {
            let alpha = la.exp();
            let p = ModelParams::classic(eps, alpha, line()).unwrap();
            let (d, u) = p.rates_at(s, 0);
            let (dr, ur) = rational(alpha, (-eps).exp(), s as f64);
            prop_assert!((d - dr).abs() <= 1e-12);
            prop_assert!((u - ur).abs() <= 1e-12);
            let q = (-eps).exp();
            prop_assert!(d >= q - 1e-15 && d <= 1.0);
            prop_assert!(u >= q - 1e-15 && u <= 1.0);
        }

        #[test]
        fn rho_lambda_are_half_sum_and_difference(eps in 0.001f64..2.0, l in -50.0f64..50.0) {
            let (d, u) = rates_from_log_activity(l, eps);
            let (rho, lambda) = rho_lambda_from_log_activity(l, eps);
            prop_assert!((rho - (u + d) / 2.0).abs() < 1e-15);
            prop_assert!((lambda - (u - d) / 2.0).abs() < 1e-15);
        }

        #[test]
        fn height_shift_reduces_alpha(eps in 0.01f64..1.0, shift in -10i64..10, s in -20i64..20) {
            // alpha = q^shift, so log_q alpha = shift is an integer.
            let alpha = (-eps * shift as f64).exp();
            let p = ModelParams::classic(eps, alpha, line()).unwrap();
            let p1 = ModelParams::classic(eps, 1.0, line()).unwrap();
            let (d, u) = p.rates_at(s, 0);
            let (d1, u1) = p1.rates_at(s - shift, 0);
            prop_assert!((d - d1).abs() < 1e-13 && (u - u1).abs() < 1e-13);
        }
    }
}
