//! Macroscopic rescaling, ensemble statistics and hypothesis tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::hopf_cole::zeta;
use crate::lattice::{Domain, HeightFunction};
use crate::model::theta1;
use crate::sim::Trajectory;

/// Minimum ensemble size accepted by [`ensemble_compare`].
pub const MIN_SAMPLES: usize = 50;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn mean(x: &[f64]) -> f64 {
    compensated_sum(x.iter().copied()) / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    compensated_sum(x.iter().map(|v| (v - m) * (v - m))) / (x.len() as f64 - 1.0)
}

/// `(mean, standard error)`
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    (mean(x), (variance(x) / x.len() as f64).sqrt())
}

/// Values of one ensemble at a fixed set of `(T, X)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEnsemble {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Row per sample, column per point.
    pub samples: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
}

impl FieldEnsemble {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        FieldEnsemble {
            label: label.into(),
            points,
            samples: Vec::new(),
            seeds: Vec::new(),
        }
    }

    pub fn push(&mut self, values: Vec<f64>, seed: Option<u64>) -> Result<()> {
        if values.len() != self.points.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} points",
                values.len(),
                self.points.len()
            )));
        }
        self.samples.push(values);
        if let Some(s) = seed {
            self.seeds.push(s);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn column(&self, p: usize) -> Vec<f64> {
        self.samples.iter().map(|r| r[p]).collect()
    }
}

fn snapshot_at(traj: &Trajectory, t_micro: f64) -> Result<&HeightFunction> {
    traj.snapshots
        .iter()
        .find(|s| (s.time - t_micro).abs() <= 1e-9 * t_micro.max(1.0))
        .map(|s| &s.height)
        .ok_or_else(|| Error::GridMismatch(format!("no snapshot at microscopic time {t_micro}")))
}

/// Height at a real site by linear interpolation.
fn interpolated_height(h: &HeightFunction, x: f64) -> Result<f64> {
    let x0 = x.floor();
    let frac = x - x0;
    let a = h.get(x0 as i64)? as f64;
    if frac == 0.0 {
        return Ok(a);
    }
    let b = h.get(x0 as i64 + 1)? as f64;
    Ok(a + frac * (b - a))
}

fn check_ring_eps(domain: &Domain, eps: f64) -> Result<()> {
    if let Domain::Ring { period, .. } = *domain {
        if (eps * period as f64 - 1.0).abs() > 1e-12 {
            return Err(Error::GridMismatch(format!("ring of period {period} needs eps = 1/{period}, got {eps}")));
        }
    }
    Ok(())
}

/// Rescaled height `sqrt(eps)(s_{T/eps^2}(X/eps) - c)` at each `(T, X)`, with
/// `c = log_q alpha` on a line and `c = chi X` on a ring of winding `chi` and period `1/eps`.
pub fn rescale_height(traj: &Trajectory, eps: f64, alpha: f64, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    let dom = traj.initial.domain();
    check_ring_eps(dom, eps)?;
    let se = eps.sqrt();
    points
        .iter()
        .map(|&(t, x)| {
            let h = snapshot_at(traj, t / (eps * eps))?;
            let s = interpolated_height(h, x / eps)?;
            let centre = match *dom {
                Domain::Ring { winding, .. } => winding as f64 * x,
                Domain::LineWindow { .. } => -alpha.ln() / eps,
            };
            Ok(se * (s - centre))
        })
        .collect()
}

/// Inverse of [`rescale_height`] at a lattice point of a line window.
pub fn unscale_height(value: f64, eps: f64, alpha: f64) -> f64 {
    value / eps.sqrt() - alpha.ln() / eps
}

/// Rescaled transform `eps^{-1/2} Z_{T/eps^2}(X/eps)` and the Taylor diagnostic
/// `sup |e^{theta1 T/eps^2} s_hat - Z_hat|` over the points.
pub fn rescale_hopf_cole(traj: &Trajectory, eps: f64, points: &[(f64, f64)]) -> Result<(Vec<f64>, f64)> {
    let dom = traj.initial.domain();
    check_ring_eps(dom, eps)?;
    let alpha = traj.params.alpha;
    let la = alpha.ln();
    let th1 = theta1(traj.params.eps);
    let shat = rescale_height(traj, eps, alpha, points)?;
    let mut out = Vec::with_capacity(points.len());
    let mut diag: f64 = 0.0;
    for (&(t, x), sh) in points.iter().zip(&shat) {
        let tm = t / (eps * eps);
        let h = snapshot_at(traj, tm)?;
        let xm = x / eps;
        let x0 = xm.floor();
        let frac = xm - x0;
        let za = zeta(h.get(x0 as i64)?, traj.params.eps, la);
        let z = if frac == 0.0 {
            za
        } else {
            let zb = zeta(h.get(x0 as i64 + 1)?, traj.params.eps, la);
            za + frac * (zb - za)
        };
        let g = (th1 * tm).exp();
        let zhat = g * z / eps.sqrt();
        diag = diag.max((g * sh - zhat).abs());
        out.push(zhat);
    }
    Ok((out, diag))
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov distance; tied values are stepped together.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (m, n) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / m - j as f64 / n).abs());
    }
    d
}

/// Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI.powi(2);
        let mut s = 0.0;
        for k in (1..40).step_by(2) {
            s += (-(k * k) as f64 * pi2 / (8.0 * lambda * lambda)).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..100 {
            let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Exact `P(D >= d)` for continuous samples of sizes `m` and `n`, by lattice-path counting.
pub fn ks_exact_pvalue(d: f64, m: usize, n: usize) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let bound = d * mf * nf - 1e-7;
    let outside = |i: usize, j: usize| ((i as f64) * nf - (j as f64) * mf).abs() >= bound;
    // prob[j] after processing row i: probability a uniform path reaches (i, j) inside the band.
    let mut prob = vec![0.0; n + 1];
    prob[0] = 1.0;
    for j in 1..=n {
        prob[j] = if outside(0, j) { 0.0 } else { prob[j - 1] * (n - j + 1) as f64 / (m + n - j + 1) as f64 };
    }
    for i in 1..=m {
        let mut row = vec![0.0; n + 1];
        for j in 0..=n {
            if outside(i, j) {
                continue;
            }
            let rem = (m + n - i - j + 1) as f64;
            let from_left = prob[j] * (m - i + 1) as f64 / rem;
            let from_below = if j > 0 { row[j - 1] * (n - j + 1) as f64 / rem } else { 0.0 };
            row[j] = from_left + from_below;
        }
        prob = row;
    }
    (1.0 - prob[n]).clamp(0.0, 1.0)
}

/// `(D, p)` for the two-sample test; exact for `m n <= 250000`, asymptotic otherwise.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d = ks_statistic(a, b);
    let (m, n) = (a.len(), b.len());
    if d == 0.0 {
        return (0.0, 1.0);
    }
    let p = if m * n <= 250_000 {
        ks_exact_pvalue(d, m, n)
    } else {
        let en = ((m * n) as f64 / (m + n) as f64).sqrt();
        kolmogorov_sf((en + 0.12 + 0.11 / en) * d)
    };
    (d, p)
}

/// `(D, p)` for one sample against a continuous CDF (asymptotic p-value).
pub fn ks_one_sample<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> (f64, f64) {
    let v = sorted(x);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, xi) in v.iter().enumerate() {
        let f = cdf(*xi);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    (d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))
}

/// KS distance between a lattice-valued sample and a continuous sample, with
/// the continuous empirical CDF read at midpoints between lattice atoms of the
/// given spacing.
pub fn ks_midpoint(discrete: &[f64], continuous: &[f64], spacing: f64) -> f64 {
    let a = sorted(discrete);
    let b = sorted(continuous);
    let (m, n) = (a.len() as f64, b.len() as f64);
    let cdf_b = |x: f64| b.partition_point(|v| *v <= x) as f64 / n;
    let mut d: f64 = 0.0;
    let mut i = 0;
    let mut below = 0.0;
    while i < a.len() {
        let v = a[i];
        d = d.max((below - cdf_b(v - 0.5 * spacing)).abs());
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        below = i as f64 / m;
        d = d.max((below - cdf_b(v + 0.5 * spacing)).abs());
    }
    d
}

/// Pearson chi-square goodness of fit, merging adjacent bins until every
/// expected count is at least 5. Returns `(statistic, dof, p)`.
pub fn chi_square_gof(observed: &[u64], expected_prob: &[f64]) -> Result<(f64, usize, f64)> {
    if observed.len() != expected_prob.len() {
        return Err(Error::GridMismatch("observed and expected bins differ".into()));
    }
    let n: u64 = observed.iter().sum();
    let total_p: f64 = expected_prob.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (ob, p) in observed.iter().zip(expected_prob) {
        o += *ob as f64;
        e += p / total_p * n as f64;
        if e >= 5.0 {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => bins.push((o, e)),
        }
    }
    if bins.len() < 2 {
        return Err(Error::InsufficientSamples {
            found: bins.len(),
            required: 2,
        });
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((stat, dof, 1.0 - dist.cdf(stat)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    /// `E[X^p]` for `p = 1..4`
    pub raw: [f64; 4],
    pub se: [f64; 4],
}

pub fn moments(x: &[f64]) -> MomentRow {
    let mut raw = [0.0; 4];
    let mut se = [0.0; 4];
    for p in 0..4 {
        let v: Vec<f64> = x.iter().map(|a| a.powi(p as i32 + 1)).collect();
        let (m, s) = mean_se(&v);
        raw[p] = m;
        se[p] = s;
    }
    MomentRow { raw, se }
}

/// Sample covariance across points.
pub fn covariance_matrix(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = samples.first().map_or(0, |r| r.len());
    let n = samples.len() as f64;
    let means: Vec<f64> = (0..k).map(|p| compensated_sum(samples.iter().map(|r| r[p])) / n).collect();
    let mut c = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let v = compensated_sum(samples.iter().map(|r| (r[i] - means[i]) * (r[j] - means[j]))) / (n - 1.0);
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointComparison {
    pub point: (f64, f64),
    pub ks: f64,
    pub p_value: f64,
    /// Bonferroni-adjusted over the compared points.
    pub p_adjusted: f64,
    pub moments_a: MomentRow,
    pub moments_b: MomentRow,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub label_a: String,
    pub label_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub level: f64,
    pub points: Vec<PointComparison>,
    pub covariance_a: Vec<Vec<f64>>,
    pub covariance_b: Vec<Vec<f64>>,
    pub pass: bool,
}

/// Per-point two-sample comparison of ensembles sampled at the same points.
pub fn ensemble_compare(a: &FieldEnsemble, b: &FieldEnsemble, level: f64) -> Result<ComparisonReport> {
    for e in [a, b] {
        if e.len() < MIN_SAMPLES {
            return Err(Error::InsufficientSamples {
                found: e.len(),
                required: MIN_SAMPLES,
            });
        }
    }
    if a.points != b.points {
        return Err(Error::GridMismatch("ensembles are sampled at different points".into()));
    }
    let k = a.points.len();
    let mut points = Vec::with_capacity(k);
    for p in 0..k {
        let (ca, cb) = (a.column(p), b.column(p));
        let (ks, p_value) = ks_two_sample(&ca, &cb);
        let p_adjusted = (p_value * k as f64).min(1.0);
        points.push(PointComparison {
            point: a.points[p],
            ks,
            p_value,
            p_adjusted,
            moments_a: moments(&ca),
            moments_b: moments(&cb),
            pass: p_adjusted > level,
        });
    }
    let pass = points.iter().all(|p| p.pass);
    Ok(ComparisonReport {
        label_a: a.label.clone(),
        label_b: b.label.clone(),
        n_a: a.len(),
        n_b: b.len(),
        level,
        points,
        covariance_a: covariance_matrix(&a.samples),
        covariance_b: covariance_matrix(&b.samples),
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub u: f64,
    pub beta: f64,
    pub k_max: u32,
    /// `max ||exp(u |s(X)|)||_{2k}` over points and `k <= k_max`.
    pub exp_moment: f64,
    /// `max ||s(X1) - s(X2)||_{2k} / min(|X1-X2|^{2 beta}, 1)` over equal-time pairs.
    pub spatial_c: f64,
    /// `max ||s_{T1}(X) - s_{T2}(X)||_{2k} / |T1-T2|^beta` over equal-site pairs.
    pub temporal_c: f64,
    /// Log-log slope of `||s(X1) - s(X2)||_2` against `|X1 - X2|`.
    pub spatial_exponent: f64,
    /// Log-log slope of `||s_{T1} - s_{T2}||_2` against `|T1 - T2|`.
    pub temporal_exponent: f64,
    /// Names of constants exceeding the configured bound.
    pub violations: Vec<String>,
}

fn lp_norm(x: impl Iterator<Item = f64>, p: f64, n: usize) -> f64 {
    (compensated_sum(x.map(|v| v.abs().powf(p))) / n as f64).powf(1.0 / p)
}

/// Empirical moment bounds and Holder exponents of an ensemble.
pub fn regularity_report(
    ens: &FieldEnsemble,
    u: f64,
    beta: f64,
    k_max: u32,
    c0: Option<f64>,
) -> Result<RegularityReport> {
    if ens.len() < 2 {
        return Err(Error::InsufficientSamples {
            found: ens.len(),
            required: 2,
        });
    }
    let n = ens.len();
    let pts = &ens.points;
    let mut r = RegularityReport {
        u,
        beta,
        k_max,
        exp_moment: 0.0,
        spatial_c: 0.0,
        temporal_c: 0.0,
        spatial_exponent: f64::NAN,
        temporal_exponent: f64::NAN,
        violations: Vec::new(),
    };
    for k in 1..=k_max {
        let p = 2.0 * k as f64;
        for i in 0..pts.len() {
            let e = lp_norm(ens.samples.iter().map(|s| (u * s[i].abs()).exp()), p, n);
            r.exp_moment = r.exp_moment.max(e);
        }
    }
    let (mut sx, mut sy, mut tx, mut ty) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (ti, xi) = pts[i];
            let (tj, xj) = pts[j];
            let diffs = || ens.samples.iter().map(move |s| s[i] - s[j]);
            if ti == tj && xi != xj {
                let dx = (xi - xj).abs();
                for k in 1..=k_max {
                    let v = lp_norm(diffs(), 2.0 * k as f64, n);
                    r.spatial_c = r.spatial_c.max(v / dx.powf(2.0 * beta).min(1.0));
                }
                let v2 = lp_norm(diffs(), 2.0, n);
                if v2 > 0.0 {
                    sx.push(dx.ln());
                    sy.push(v2.ln());
                }
            } else if xi == xj && ti != tj {
                let dt = (ti - tj).abs();
                for k in 1..=k_max {
                    let v = lp_norm(diffs(), 2.0 * k as f64, n);
                    r.temporal_c = r.temporal_c.max(v / dt.powf(beta));
                }
                let v2 = lp_norm(diffs(), 2.0, n);
                if v2 > 0.0 {
                    tx.push(dt.ln());
                    ty.push(v2.ln());
                }
            }
        }
    }
    let distinct = |v: &[f64]| v.iter().any(|a| (a - v[0]).abs() > 1e-12);
    if sx.len() >= 2 && distinct(&sx) {
        r.spatial_exponent = crate::heat_kernel::ols_slope(&sx, &sy);
    }
    if tx.len() >= 2 && distinct(&tx) {
        r.temporal_exponent = crate::heat_kernel::ols_slope(&tx, &ty);
    }
    if let Some(c) = c0 {
        for (name, v) in [
            ("exp_moment", r.exp_moment),
            ("spatial_c", r.spatial_c),
            ("temporal_c", r.temporal_c),
        ] {
            if v > c {
                r.violations.push(name.to_string());
            }
        }
    }
    Ok(r)
}
