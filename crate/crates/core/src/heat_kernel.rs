//! Semi-discrete heat kernels, the gradient kernel and discrete Duhamel sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopf_cole::SiteIncrements;
use crate::model::{theta1, theta2};

/// Offsets beyond which `e^{-z} I_n(z)` is below `1e-40` of the peak.
#[inline]
pub fn negligible_offset(z: f64) -> usize {
    (30.0 + 14.0 * z.max(0.0).sqrt()).ceil() as usize
}

/// `e^{-z} I_n(z)` for `n = 0..=nmax`, by normalised backward recurrence.
pub fn scaled_bessel_i(z: f64, nmax: usize) -> Vec<f64> {
    let mut vals = vec![0.0; nmax + 1];
    if z <= 0.0 {
        vals[0] = 1.0;
        return vals;
    }
    if z < 1e-8 {
        let h = 0.5 * z;
        let mut term = (-z).exp();
        for (n, v) in vals.iter_mut().enumerate() {
            *v = term * (1.0 + h * h / (n as f64 + 1.0));
            term *= h / (n as f64 + 1.0);
            if term == 0.0 {
                break;
            }
        }
        return vals;
    }
    const BIG: f64 = 1e250;
    let start = nmax + negligible_offset(z);
    let mut next = 0.0; // f_{n+1}
    let mut cur = 1e-280; // f_n
    let mut sum = 0.0; // 2 * sum_{m >= n} f_m over m >= 1
    if start <= nmax {
        vals[start] = cur;
    }
    for n in (1..=start).rev() {
        sum += 2.0 * cur;
        let prev = (2.0 * n as f64 / z) * cur + next;
        next = cur;
        cur = prev;
        let m = n - 1;
        if m <= nmax {
            vals[m] = cur;
        }
        if cur > BIG {
            cur /= BIG;
            next /= BIG;
            sum /= BIG;
            for v in vals[m.min(nmax)..].iter_mut() {
                *v /= BIG;
            }
        }
    }
    sum += cur;
    for v in &mut vals {
        *v /= sum;
    }
    vals
}

/// `frak p_t(x)` for `x = 0..=max_offset` (symmetric in `x`).
pub fn microscopic_column(eps: f64, t: f64, max_offset: usize) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    Ok(scaled_bessel_i(theta2(eps) * t, max_offset))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFlavor {
    /// `frak p_t(x) = e^{-theta2 t} I_x(theta2 t)` on `Z`.
    Microscopic,
    /// `p^eps_t(eps k) = eps^{-1} e^{-2t/eps^2} I_k(2t/eps^2)` on `eps Z`, indexed by `k`.
    Rescaled,
    /// Microscopic kernel on the ring `Z/NZ`.
    RingSpectral { period: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub eps: f64,
    pub flavor: KernelFlavor,
    /// Jump rate to each neighbour.
    pub rate: f64,
    pub times: Vec<f64>,
    /// Nonnegative offsets; line kernels are even in the offset.
    pub offsets: Vec<i64>,
    /// Row per time, column per offset.
    pub values: Vec<Vec<f64>>,
}

impl KernelTable {
    /// Kernel at time index `ti` and signed lattice offset `x`.
    pub fn value(&self, ti: usize, x: i64) -> f64 {
        let row = &self.values[ti];
        let i = match self.flavor {
            KernelFlavor::RingSpectral { period } => x.rem_euclid(period as i64) as usize,
            _ => x.unsigned_abs() as usize,
        };
        row.get(i).copied().unwrap_or(0.0)
    }

    /// Total mass (`eps`-weighted for the rescaled flavor).
    pub fn mass(&self, ti: usize) -> f64 {
        let row = &self.values[ti];
        match self.flavor {
            KernelFlavor::RingSpectral { .. } => row.iter().sum(),
            KernelFlavor::Microscopic => row[0] + 2.0 * row[1..].iter().sum::<f64>(),
            KernelFlavor::Rescaled => self.eps * (row[0] + 2.0 * row[1..].iter().sum::<f64>()),
        }
    }

    pub fn max_offset(&self) -> i64 {
        self.offsets.last().copied().unwrap_or(0)
    }
}

fn ring_column(eps: f64, t: f64, period: usize) -> Vec<f64> {
    let n = period as f64;
    let th2 = theta2(eps);
    let decay: Vec<f64> = (0..period)
        .map(|k| (-th2 * t * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n).cos())).exp())
        .collect();
    (0..period)
        .map(|x| {
            let s: f64 = decay
                .iter()
                .enumerate()
                .map(|(k, d)| d * (2.0 * std::f64::consts::PI * ((k * x) % period) as f64 / n).cos())
                .sum();
            (s / n).max(0.0)
        })
        .collect()
}

/// Tabulate a heat kernel at the given times.
pub fn heat_kernel(eps: f64, times: &[f64], max_offset: usize, flavor: KernelFlavor) -> Result<KernelTable> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if let Some(&t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::NegativeTime(t));
    }
    let (rate, offsets, values) = match flavor {
        KernelFlavor::Microscopic => {
            let v = times
                .iter()
                .map(|&t| scaled_bessel_i(theta2(eps) * t, max_offset))
                .collect();
            (0.5 * theta2(eps), (0..=max_offset as i64).collect(), v)
        }
        KernelFlavor::Rescaled => {
            let v = times
                .iter()
                .map(|&t| {
                    let mut c = scaled_bessel_i(2.0 * t / (eps * eps), max_offset);
                    c.iter_mut().for_each(|x| *x /= eps);
                    c
                })
                .collect();
            (1.0 / (eps * eps), (0..=max_offset as i64).collect(), v)
        }
        KernelFlavor::RingSpectral { period } => {
            if period == 0 {
                return Err(Error::InvalidDomain("ring period must be positive".into()));
            }
            let v = times.iter().map(|&t| ring_column(eps, t, period)).collect();
            (0.5 * theta2(eps), (0..period as i64).collect(), v)
        }
    };
    Ok(KernelTable {
        eps,
        flavor,
        rate,
        times: times.to_vec(),
        offsets,
        values,
    })
}

/// `max_x |sum_y frak p_t(x-y) frak p_s(y) - frak p_{t+s}(x)|`
pub fn semigroup_residual(eps: f64, t: f64, s: f64, max_offset: usize) -> Result<f64> {
    let w = 2 * max_offset;
    let a = microscopic_column(eps, t, w)?;
    let b = microscopic_column(eps, s, w)?;
    let c = microscopic_column(eps, t + s, w)?;
    let at = |v: &[f64], x: i64| v.get(x.unsigned_abs() as usize).copied().unwrap_or(0.0);
    let mut worst: f64 = 0.0;
    for x in 0..=max_offset as i64 {
        let conv: f64 = (-(w as i64)..=w as i64).map(|y| at(&a, x - y) * at(&b, y)).sum();
        worst = worst.max((conv - c[x as usize]).abs());
    }
    Ok(worst)
}

/// Smallest constants making the kernel bounds hold on a tabulated grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub eps: f64,
    pub u: f64,
    pub v: f64,
    pub alpha: f64,
    /// `frak p_t(x) <= C / max(sqrt t, 1)`
    pub sup_c: f64,
    /// `sum_x frak p_t(x) (eps|x|)^alpha e^{u eps |x|} <= C max(sqrt t, 1)^alpha`
    pub moment_c: f64,
    /// `|grad+ frak p_t(x)| <= C min(t^{-3/2}, 1)`
    pub gradient_c: f64,
    /// `|frak p_t(x1) - frak p_t(x2)| <= C max(sqrt t, 1)^{-1-v} (eps|x1-x2|)^{2v}`
    pub holder_space_c: f64,
    /// `frak p_{t2}(x) <= C e^{eps^2 (t2-t1)} frak p_{t1}(x)` on the bulk `|x| <= 3 max(sqrt t2, 1)`.
    pub time_compare_c: f64,
    /// `|frak p_{t1}(x) - frak p_{t2}(x)| <= C max(sqrt t1, 1)^{-1-v} (eps^2 (t2-t1))^{v/2}`
    pub time_holder_c: f64,
    /// Log-log slope of `sup_x |grad+ frak p_t|` over the tabulated `t >= 10`.
    pub gradient_decay_exponent: f64,
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Fit the kernel bound constants on a microscopic table.
pub fn kernel_bound_report(table: &KernelTable, u: f64, v: f64, alpha: f64) -> Result<KernelBoundReport> {
    if table.flavor != KernelFlavor::Microscopic {
        return Err(Error::InvalidArgument("kernel bounds are fitted on the microscopic kernel".into()));
    }
    if !(0.0..0.5).contains(&v) {
        return Err(Error::InvalidArgument(format!("v must lie in [0, 1/2), got {v}")));
    }
    let eps = table.eps;
    let mut r = KernelBoundReport {
        eps,
        u,
        v,
        alpha,
        sup_c: 0.0,
        moment_c: 0.0,
        gradient_c: 0.0,
        holder_space_c: 0.0,
        time_compare_c: 0.0,
        time_holder_c: 0.0,
        gradient_decay_exponent: f64::NAN,
    };
    let mut lt = Vec::new();
    let mut lg = Vec::new();
    for (ti, &t) in table.times.iter().enumerate() {
        let row = &table.values[ti];
        let sc = t.sqrt().max(1.0);
        r.sup_c = r.sup_c.max(row[0] * sc);
        let mom: f64 = row
            .iter()
            .enumerate()
            .map(|(x, p)| {
                let ex = eps * x as f64;
                let w = if x == 0 { 1.0 } else { 2.0 };
                let pow = if alpha == 0.0 { 1.0 } else { ex.powf(alpha) };
                w * p * pow * (u * ex).exp()
            })
            .sum();
        r.moment_c = r.moment_c.max(mom / sc.powf(alpha));
        let grad = row.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        let gscale = if t > 0.0 { t.powf(-1.5).min(1.0) } else { 1.0 };
        r.gradient_c = r.gradient_c.max(grad / gscale);
        if t >= 10.0 && grad > 0.0 {
            lt.push(t.ln());
            lg.push(grad.ln());
        }
        // Spatial Holder: the largest difference at each separation is attained
        // between the origin and the separation for a unimodal even kernel.
        for d in 1..row.len() {
            let diff = row[0] - row[d];
            let denom = sc.powf(-1.0 - v) * (eps * d as f64).powf(2.0 * v);
            r.holder_space_c = r.holder_space_c.max(diff / denom);
        }
    }
    for i in 0..table.times.len() {
        for j in i + 1..table.times.len() {
            let (t1, t2) = (table.times[i], table.times[j]);
            if t2 <= t1 {
                continue;
            }
            let bulk = (3.0 * t2.sqrt().max(1.0)).ceil() as usize;
            let (a, b) = (&table.values[i], &table.values[j]);
            let growth = (eps * eps * (t2 - t1)).exp();
            let hden = t1.sqrt().max(1.0).powf(-1.0 - v) * (eps * eps * (t2 - t1)).powf(0.5 * v);
            for x in 0..a.len() {
                if x <= bulk && a[x] > 0.0 {
                    r.time_compare_c = r.time_compare_c.max(b[x] / (growth * a[x]));
                }
                r.time_holder_c = r.time_holder_c.max((a[x] - b[x]).abs() / hden);
            }
        }
    }
    if lt.len() >= 2 {
        r.gradient_decay_exponent = ols_slope(&lt, &lg);
    }
    Ok(r)
}

/// Ratio `max/min` of each fitted constant across reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundStability {
    pub sup: f64,
    pub moment: f64,
    pub gradient: f64,
    pub holder_space: f64,
    pub time_compare: f64,
    pub time_holder: f64,
}

impl BoundStability {
    pub fn within(&self, factor: f64) -> [(&'static str, bool); 6] {
        [
            ("sup", self.sup <= factor),
            ("moment", self.moment <= factor),
            ("gradient", self.gradient <= factor),
            ("holder_space", self.holder_space <= factor),
            ("time_compare", self.time_compare <= factor),
            ("time_holder", self.time_holder <= factor),
        ]
    }
}

pub fn bound_stability(reports: &[KernelBoundReport]) -> BoundStability {
    let ratio = |f: fn(&KernelBoundReport) -> f64| {
        let hi = reports.iter().map(f).fold(f64::MIN, f64::max);
        let lo = reports.iter().map(f).fold(f64::MAX, f64::min);
        hi / lo
    };
    BoundStability {
        sup: ratio(|r| r.sup_c),
        moment: ratio(|r| r.moment_c),
        gradient: ratio(|r| r.gradient_c),
        holder_space: ratio(|r| r.holder_space_c),
        time_compare: ratio(|r| r.time_compare_c),
        time_holder: ratio(|r| r.time_holder_c),
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Integrated gradient-kernel diagnostics on `eps Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientKernelReport {
    pub eps: f64,
    pub a: f64,
    pub t_grid: Vec<f64>,
    /// `S(T) = sum_x int_0^T K^eps_t(x) dt`
    pub s: Vec<f64>,
    /// `eps^2 sum_x int_0^T |K^eps_t(x)| e^{a|x|} dt`
    pub c1: Vec<f64>,
    /// `|S(T)| eps sqrt(max(T, eps^2))`
    pub c0: Vec<f64>,
    /// Log-log slope of `|S(T)|` over `t_grid`.
    pub decay_slope: f64,
    /// Largest weighted kernel mass left outside the window.
    pub tail_mass: f64,
}

/// Tail mass tolerance for the gradient-kernel window.
pub const GRADIENT_TAIL_TOL: f64 = 1e-12;

/// Quadrature of the gradient kernel over geometric time panels, in
/// microscopic time `tau = eps^{-2} t` where the kernel is `eps^{-4} K_tau(k)`.
pub fn gradient_kernel_report(eps: f64, t_grid: &[f64], a: f64, max_offset: usize) -> Result<GradientKernelReport> {
    if !(eps > 0.0) || a < 0.0 || t_grid.is_empty() {
        return Err(Error::InvalidArgument("need eps > 0, a >= 0 and a nonempty grid".into()));
    }
    if let Some(&t) = t_grid.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::NegativeTime(t));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let tau_end: Vec<f64> = grid.iter().map(|t| t / (eps * eps)).collect();
    let tau_max = *tau_end.last().unwrap();

    let weights: Vec<f64> = (0..=max_offset + 2).map(|k| (a * eps * k as f64).exp()).collect();
    // Panel boundaries: geometric from 0.05 with every grid point inserted.
    let mut edges = vec![0.0];
    let mut e = 0.05;
    while e < tau_max {
        edges.push(e);
        e *= 1.1;
    }
    edges.extend(tau_end.iter().copied());
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs().max(1.0));
    edges.retain(|&x| x <= tau_max * (1.0 + 1e-12));

    let (gx, gw) = gauss_legendre(10);
    let mut tail_mass: f64 = 0.0;
    let mut sum_k = 0.0;
    let mut sum_abs = 0.0;
    let mut s = Vec::new();
    let mut c1 = Vec::new();
    let mut next = 0;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        for (x, wt) in gx.iter().zip(&gw) {
            let tau = lo + half * (1.0 + x);
            let p = scaled_bessel_i(2.0 * tau, max_offset + 1);
            // Weighted tail beyond the window, bounded by a geometric series.
            let (w0, w1) = (p[max_offset] * weights[max_offset], p[max_offset + 1] * weights[max_offset + 1]);
            let tail = if w0 == 0.0 {
                0.0
            } else if w1 < w0 {
                2.0 * w1 / (1.0 - w1 / w0)
            } else {
                f64::INFINITY
            };
            tail_mass = tail_mass.max(tail);
            // K(0) = -(p0-p1)^2; K(k) = K(-k) = (p_k - p_{k-1})(p_{k+1} - p_k) for k >= 1.
            let mut g = -(p[0] - p[1]).powi(2);
            let mut ga = (p[0] - p[1]).powi(2);
            for k in 1..=max_offset {
                let kk = (p[k] - p[k - 1]) * (p[k + 1] - p[k]);
                g += 2.0 * kk;
                ga += 2.0 * kk.abs() * weights[k];
            }
            sum_k += wt * half * g;
            sum_abs += wt * half * ga;
        }
        while next < tau_end.len() && hi >= tau_end[next] * (1.0 - 1e-12) {
            s.push(sum_k / (eps * eps));
            c1.push(sum_abs);
            next += 1;
        }
    }
    if tail_mass > GRADIENT_TAIL_TOL {
        return Err(Error::WindowTooSmall {
            tail_mass,
            tolerance: GRADIENT_TAIL_TOL,
        });
    }
    let c0 = grid
        .iter()
        .zip(&s)
        .map(|(t, v)| v.abs() * eps * t.max(eps * eps).sqrt())
        .collect();
    let lx: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = s.iter().map(|v| v.abs().ln()).collect();
    let decay_slope = if grid.len() >= 2 { ols_slope(&lx, &ly) } else { f64::NAN };
    Ok(GradientKernelReport {
        eps,
        a,
        t_grid: grid,
        s,
        c1,
        c0,
        decay_slope,
        tail_mass,
    })
}

/// Offset window needed for the gradient report at the largest time.
pub fn gradient_window(eps: f64, t_max: f64) -> usize {
    negligible_offset(2.0 * t_max / (eps * eps))
}

/// `Z(t, x) = sum_y frak p_t(x-y) Z(0,y) + sum_y int_0^t frak p_{t-r}(x-y) dM_r(y)`
/// at the `targets`, with `initial[i]` the value at `increments[i].site`.
pub fn discrete_duhamel(
    initial: &[f64],
    increments: &[SiteIncrements],
    eps: f64,
    t: f64,
    targets: &[i64],
) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if initial.len() != increments.len() {
        return Err(Error::GridMismatch(format!(
            "{} initial values for {} sites",
            initial.len(),
            increments.len()
        )));
    }
    let th1 = theta1(eps);
    let th2 = theta2(eps);
    let reach = negligible_offset(th2 * t);
    let sites: Vec<i64> = increments.iter().map(|s| s.site).collect();

    let p_t = scaled_bessel_i(th2 * t, reach);
    let kern = |col: &[f64], d: i64| col.get(d.unsigned_abs() as usize).copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(targets.len());
    for &x in targets {
        let covered: f64 = sites.iter().map(|&y| kern(&p_t, x - y)).sum();
        let missing = 1.0 - covered;
        if missing > 1e-8 {
            return Err(Error::CoverageError { missing_mass: missing });
        }
        out.push(sites.iter().zip(initial).map(|(&y, z)| kern(&p_t, x - y) * z).sum::<f64>());
    }
    let near = |y: i64| targets.iter().any(|&x| (x - y).unsigned_abs() as usize <= reach);

    let (gx, gw) = gauss_legendre(8);
    const MAX_PANEL: f64 = 0.5;
    for inc in increments.iter().filter(|inc| near(inc.site)) {
        let y = inc.site;
        for &(tau, dz) in inc.jumps.iter().filter(|j| j.0 <= t) {
            let col = scaled_bessel_i(th2 * (t - tau), reach);
            for (o, &x) in out.iter_mut().zip(targets) {
                *o += kern(&col, x - y) * dz;
            }
        }
        for &(a, b, c) in &inc.pieces {
            let b = b.min(t);
            if b <= a {
                continue;
            }
            let panels = ((b - a) / MAX_PANEL).ceil().max(1.0) as usize;
            let h = (b - a) / panels as f64;
            for m in 0..panels {
                let lo = a + m as f64 * h;
                for (gxi, gwi) in gx.iter().zip(&gw) {
                    let r = lo + 0.5 * h * (1.0 + gxi);
                    let col = scaled_bessel_i(th2 * (t - r), reach);
                    let wr = 0.5 * h * gwi * c * (th1 * r).exp();
                    for (o, &x) in out.iter_mut().zip(targets) {
                        *o -= wr * kern(&col, x - y);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bessel_small_values() {
        // e^{-1} I_0(1), e^{-1} I_1(1), e^{-1} I_2(1)
        let v = scaled_bessel_i(1.0, 3);
        assert!((v[0] - 0.46575960759364043).abs() < 1e-15);
        assert!((v[1] - 0.20791041534970844).abs() < 1e-15);
        assert!((v[2] - 0.049938776894223539).abs() < 1e-15);
        let v = scaled_bessel_i(0.0, 2);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        let v = scaled_bessel_i(1e-12, 2);
        assert!((v[1] - 5e-13).abs() < 1e-24);
    }

    #[test]
    fn bessel_large_argument_normalised() {
        for z in [50.0, 1e3, 2e5] {
            let n = negligible_offset(z);
            let v = scaled_bessel_i(z, n);
            let mass = v[0] + 2.0 * v[1..].iter().sum::<f64>();
            assert!((mass - 1.0).abs() < 1e-12);
            // e^{-z} I_0(z) ~ 1/sqrt(2 pi z) (1 + 1/(8z))
            let asym = (2.0 * std::f64::consts::PI * z).sqrt().recip() * (1.0 + 1.0 / (8.0 * z));
            assert!((v[0] / asym - 1.0).abs() < 1e-4, "{z}");
        }
    }

    #[test]
    fn initial_conditions() {
        let t = heat_kernel(0.1, &[0.0], 5, KernelFlavor::Rescaled).unwrap();
        assert!((t.value(0, 0) - 10.0).abs() < 1e-12);
        assert_eq!(t.value(0, 3), 0.0);
        let t = heat_kernel(0.1, &[0.0], 5, KernelFlavor::Microscopic).unwrap();
        assert_eq!(t.value(0, 0), 1.0);
        assert!(matches!(
            heat_kernel(0.1, &[1.0, -0.5], 5, KernelFlavor::Microscopic),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn mass_conservation() {
        for flavor in [KernelFlavor::Microscopic, KernelFlavor::RingSpectral { period: 37 }] {
            let tab = heat_kernel(0.3, &[0.5, 5.0, 50.0], 200, flavor).unwrap();
            for i in 0..3 {
                assert!((tab.mass(i) - 1.0).abs() < 1e-10, "{flavor:?}");
            }
        }
        let tab = heat_kernel(0.1, &[0.01, 0.05], 400, KernelFlavor::Rescaled).unwrap();
        for i in 0..2 {
            assert!((tab.mass(i) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rescaled_relation() {
        let eps: f64 = 0.2;
        let t = 7.0;
        let micro = heat_kernel(eps, &[t], 60, KernelFlavor::Microscopic).unwrap();
        let s = eps * eps * theta2(eps) * t / 2.0;
        let resc = heat_kernel(eps, &[s], 60, KernelFlavor::Rescaled).unwrap();
        for x in 0..60 {
            assert!((micro.value(0, x) - eps * resc.value(0, x)).abs() < 1e-15);
        }
    }

    #[test]
    fn ring_matches_wrapped_line() {
        let (eps, t, n) = (0.5, 3.0, 11usize);
        let ring = heat_kernel(eps, &[t], 0, KernelFlavor::RingSpectral { period: n }).unwrap();
        let line = microscopic_column(eps, t, 200).unwrap();
        for x in 0..n as i64 {
            let wrapped: f64 = (-15..=15).map(|m| line[(x + m * n as i64).unsigned_abs() as usize]).sum();
            assert!((ring.value(0, x) - wrapped).abs() < 1e-13);
        }
    }

    #[test]
    fn semigroup() {
        for (t, s) in [(0.5, 2.0), (5.0, 5.0), (30.0, 12.0)] {
            assert!(semigroup_residual(0.1, t, s, 60).unwrap() < 1e-9);
        }
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        for p in 0..16 {
            let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "{p}");
        }
    }

    #[test]
    fn gradient_kernel_closed_form_unit_eps() {
        // sum_k K_tau(k) integrates to -e^{-4 tau} I_1(4 tau)/2.
        let rep = gradient_kernel_report(1.0, &[0.5, 2.0, 10.0], 0.0, gradient_window(1.0, 10.0)).unwrap();
        for (t, s) in rep.t_grid.iter().zip(&rep.s) {
            let exact = -0.5 * scaled_bessel_i(4.0 * t, 1)[1];
            assert!((s - exact).abs() < 1e-10, "{t}: {s} vs {exact}");
        }
    }

    #[test]
    fn gradient_kernel_window_check() {
        assert!(matches!(
            gradient_kernel_report(0.1, &[1.0], 0.0, 20),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn duhamel_without_increments_is_semigroup() {
        let sites: Vec<i64> = (-80..=80).collect();
        let init: Vec<f64> = sites.iter().map(|&y| if y == 0 { 1.0 } else { 0.0 }).collect();
        let inc: Vec<SiteIncrements> = sites
            .iter()
            .map(|&site| SiteIncrements {
                site,
                jumps: vec![],
                pieces: vec![],
            })
            .collect();
        let targets = [-3, 0, 5];
        let out = discrete_duhamel(&init, &inc, 0.1, 4.0, &targets).unwrap();
        let col = microscopic_column(0.1, 4.0, 10).unwrap();
        for (o, x) in out.iter().zip(targets) {
            assert!((o - col[x.unsigned_abs() as usize]).abs() < 1e-15);
        }
        assert!(matches!(
            discrete_duhamel(&init, &inc, 0.1, 4.0, &[75]),
            Err(Error::CoverageError { .. })
        ));
    }

    proptest! {
        #[test]
        fn kernel_shape(t in 0.0f64..200.0, eps in 0.01f64..1.0) {
            let col = microscopic_column(eps, t, negligible_offset(theta2(eps) * t)).unwrap();
            prop_assert!(col.iter().all(|v| *v >= 0.0));
            prop_assert!(col.windows(2).all(|w| w[1] <= w[0]));
            let mass = col[0] + 2.0 * col[1..].iter().sum::<f64>();
            prop_assert!((mass - 1.0).abs() < 1e-10);
        }

        #[test]
        fn bessel_recurrence(z in 0.01f64..500.0, n in 1usize..40) {
            let v = scaled_bessel_i(z, n + 1);
            let lhs = v[n - 1] - v[n + 1];
            let rhs = 2.0 * n as f64 / z * v[n];
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (v[n - 1].abs() + 1e-300) + 1e-300);
        }
    }
}
