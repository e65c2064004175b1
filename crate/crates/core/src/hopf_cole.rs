//! Microscopic Hopf-Cole transform, its generator identity and martingale.
//!
//! With `L = ln(alpha) + eps s` the transform is `Z = 2 e^{theta1 t} sinh(L/2)`,
//! which equals `e^{theta1 t}(alpha^{1/2} q^{-s/2} - alpha^{-1/2} q^{s/2})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Domain, Flip, HeightFunction};
use crate::model::{rates_from_log_activity, theta1, theta2, ModelParams, RateFunction};
use crate::sim::Trajectory;

/// Time-independent part `2 sinh((ln alpha + eps s)/2)`.
#[inline]
pub fn zeta(s: i64, eps: f64, ln_alpha: f64) -> f64 {
    2.0 * (0.5 * (ln_alpha + eps * s as f64)).sinh()
}

#[inline]
pub fn transform_value(s: i64, t: f64, eps: f64, alpha: f64) -> f64 {
    (theta1(eps) * t).exp() * zeta(s, eps, alpha.ln())
}

/// `(q^{-s/2}, q^{s/2})` recovered from `Ztilde = eps^{-1/2} Z` at time `t` (alpha = 1).
pub fn q_powers_from_z(ztilde: f64, t: f64, eps: f64) -> (f64, f64) {
    let half = 0.5 * eps.sqrt() * (-t * theta1(eps)).exp() * ztilde;
    let root = half.hypot(1.0);
    // The two roots multiply to one.
    if half >= 0.0 {
        let a = root + half;
        (a, 1.0 / a)
    } else {
        let b = root - half;
        (1.0 / b, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformField {
    pub times: Vec<f64>,
    pub sites: Vec<i64>,
    /// Row per time, column per site.
    pub z: Vec<Vec<f64>>,
    pub theta1: f64,
    pub theta2: f64,
}

fn require_classic(params: &ModelParams) -> Result<()> {
    match params.rate_function {
        RateFunction::Classic => Ok(()),
        RateFunction::Generalized(_) => Err(Error::InvalidArgument(
            "the Hopf-Cole transform needs the classic rates".into(),
        )),
    }
}

/// Evaluate the transform on every snapshot of `traj`.
pub fn hopf_cole_transform(traj: &Trajectory, alpha: f64) -> Result<TransformField> {
    require_classic(&traj.params)?;
    let eps = traj.params.eps;
    let la = alpha.ln();
    let th1 = theta1(eps);
    let sites: Vec<i64> = traj.initial.domain().sites().collect();
    let mut z = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let g = (th1 * snap.time).exp();
        z.push(snap.height.values().iter().map(|&s| g * zeta(s, eps, la)).collect());
    }
    Ok(TransformField {
        times: traj.snapshots.iter().map(|s| s.time).collect(),
        sites,
        z,
        theta1: th1,
        theta2: theta2(eps),
    })
}

/// `L Z + theta1 Z - (theta2/2) Delta Z` at `t = 0` for a site of height `s` whose
/// neighbours are `s - dm` (left) and `s + dp` (right).
pub fn generator_residual(eps: f64, ln_alpha: f64, s: i64, dm: i64, dp: i64) -> (f64, f64) {
    let (left, right) = (s - dm, s + dp);
    let z = |v: i64| zeta(v, eps, ln_alpha);
    let (down, up) = rates_from_log_activity(ln_alpha + eps * s as f64, eps);
    let lz = match crate::lattice::classify(left, s, right) {
        Flip::Down => down * (z(s - 2) - z(s)),
        Flip::Up => up * (z(s + 2) - z(s)),
        Flip::None => 0.0,
    };
    let lap = z(right) + z(left) - 2.0 * z(s);
    let r = lz + theta1(eps) * z(s) - 0.5 * theta2(eps) * lap;
    (r, z(s).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCheck {
    pub max_residual: f64,
    pub max_abs_z: f64,
    pub configurations: usize,
}

impl GeneratorCheck {
    pub fn relative(&self) -> f64 {
        self.max_residual / self.max_abs_z.max(f64::MIN_POSITIVE)
    }
}

/// Exhaustive sweep of the generator identity over `eps`, heights and the four
/// local slope patterns.
pub fn generator_identity_check(eps_grid: &[f64], s_range: (i64, i64)) -> GeneratorCheck {
    generator_identity_check_alpha(eps_grid, s_range, 1.0)
}

pub fn generator_identity_check_alpha(eps_grid: &[f64], s_range: (i64, i64), alpha: f64) -> GeneratorCheck {
    let mut out = GeneratorCheck {
        max_residual: 0.0,
        max_abs_z: 0.0,
        configurations: 0,
    };
    let la = alpha.ln();
    for &eps in eps_grid {
        for s in s_range.0..=s_range.1 {
            for dm in [-1, 1] {
                for dp in [-1, 1] {
                    let (r, z) = generator_residual(eps, la, s, dm, dp);
                    out.max_residual = out.max_residual.max(r.abs());
                    out.max_abs_z = out.max_abs_z.max(z);
                    out.configurations += 1;
                }
            }
        }
    }
    out
}

/// Local neighbourhood `(s(x-1), s(x), s(x+1))`, requiring an interior site.
fn neighbourhood(h: &HeightFunction, x: i64) -> Result<(i64, i64, i64)> {
    if let Domain::LineWindow { x_min, x_max, .. } = *h.domain() {
        if x <= x_min || x >= x_max {
            return Err(Error::OutOfDomain { site: x });
        }
    }
    Ok((h.get(x - 1)?, h.get(x)?, h.get(x + 1)?))
}

/// Exact bracket rate `eta_down a_down (dZ_down)^2 + eta_up a_up (dZ_up)^2` at time 0.
fn exact_rate_state(eps: f64, la: f64, l: i64, s: i64, r: i64) -> f64 {
    let z = |v: i64| zeta(v, eps, la);
    let (down, up) = rates_from_log_activity(la + eps * s as f64, eps);
    match crate::lattice::classify(l, s, r) {
        Flip::Down => down * (z(s - 2) - z(s)).powi(2),
        Flip::Up => up * (z(s + 2) - z(s)).powi(2),
        Flip::None => 0.0,
    }
}

/// Leading-order bracket rate as printed, at time 0, in shifted-height variables.
fn leading_rate_state(eps: f64, la: f64, l: i64, s: i64, r: i64) -> f64 {
    let q = (-eps).exp();
    let ls = la + eps * s as f64;
    let lmid = la + eps * 0.5 * (l + r) as f64;
    let gp = r - s;
    let gm = s - l;
    0.25 * eps * eps / q * (1.0 + ls.exp()) * ((-lmid).exp() + 1.0) * (1 - gp * gm) as f64
}

/// Sum of the two closed-form bracket terms from the product formulas, at time 0.
/// The local-maximum term is taken without the `1/q` prefactor of the local-minimum term.
pub fn product_form_rate(eps: f64, alpha: f64, l: i64, s: i64, r: i64) -> f64 {
    let q = (-eps).exp();
    let la = alpha.ln();
    // q^{-s'} for the shifted height s' = s - log_q alpha.
    let qms = (la + eps * s as f64).exp();
    let qs = 1.0 / qms;
    let p = |e: f64| q.powf(e) - 1.0;
    let a = p((1 + r - s) as f64 / 2.0) * p((1 + l - s) as f64 / 2.0) * (1.0 + qs * q) * (1.0 + qms) / q;
    let b = p((1 + s - r) as f64 / 2.0) * p((1 + s - l) as f64 / 2.0) * (1.0 + qs / q) * (1.0 + qms);
    a + b
}

/// `(leading, upper_bound)` for the bracket rate of the martingale at `x`.
pub fn predicted_qv_rate(h: &HeightFunction, x: i64, t: f64, params: &ModelParams) -> Result<(f64, f64)> {
    require_classic(params)?;
    let (l, s, r) = neighbourhood(h, x)?;
    let eps = params.eps;
    let la = params.alpha.ln();
    let g2 = (2.0 * theta1(eps) * t).exp();
    let leading = g2 * leading_rate_state(eps, la, l, s, r);
    let z = zeta(s, eps, la);
    let bound = 2.0 * eps * eps * g2 * (z * z + 2.0);
    Ok((leading, bound))
}

/// Exact bracket rate from the jump rates.
pub fn exact_qv_rate(h: &HeightFunction, x: i64, t: f64, params: &ModelParams) -> Result<f64> {
    require_classic(params)?;
    let (l, s, r) = neighbourhood(h, x)?;
    let g2 = (2.0 * theta1(params.eps) * t).exp();
    Ok(g2 * exact_rate_state(params.eps, params.alpha.ln(), l, s, r))
}

/// `eps^{-2} e^{-2 t theta1} grad+ Z grad- Z - grad+ s grad- s` together with the
/// reference bound value `(e^{-t theta1} Z)^2 / 4`.
pub fn gradient_identity_residual(h: &HeightFunction, x: i64, t: f64, params: &ModelParams) -> Result<(f64, f64)> {
    require_classic(params)?;
    let (l, s, r) = neighbourhood(h, x)?;
    let eps = params.eps;
    let la = params.alpha.ln();
    let z = |v: i64| zeta(v, eps, la);
    // e^{-t theta1} cancels against the time factor of Z exactly.
    let _ = t;
    let prod = (z(r) - z(s)) * (z(s) - z(l)) / (eps * eps);
    let residual = prod - ((r - s) * (s - l)) as f64;
    Ok((residual, 0.25 * z(s) * z(s)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingalePath {
    pub site: i64,
    pub times: Vec<f64>,
    pub m: Vec<f64>,
    /// Integrated leading-order bracket rate.
    pub qv_pred: Vec<f64>,
    /// Integrated exact bracket rate.
    pub qv_exact: Vec<f64>,
    /// Sum of squared jumps.
    pub qv_emp: Vec<f64>,
    /// Pieces of constant state where the exact rate exceeded the upper bound.
    pub bound_violations: usize,
}

/// `int_a^b e^{k r} dr`
#[inline]
fn exp_integral(k: f64, a: f64, b: f64) -> f64 {
    if k == 0.0 {
        b - a
    } else {
        (k * a).exp() * (k * (b - a)).exp_m1() / k
    }
}

/// Martingale `M_t = Z_t - Z_0 - int (theta2/2) Delta Z dr` at the snapshot times.
pub fn martingale_path(traj: &Trajectory, x: i64) -> Result<MartingalePath> {
    require_classic(&traj.params)?;
    let events = traj.events()?;
    let params = &traj.params;
    let eps = params.eps;
    let la = params.alpha.ln();
    let th1 = theta1(eps);
    let th2 = theta2(eps);
    let (mut l, mut s, mut r) = neighbourhood(&traj.initial, x)?;
    let dom = traj.initial.domain();
    let idx = |y: i64| dom.index_of(y);
    let (il, is, ir) = (idx(x - 1)?, idx(x)?, idx(x + 1)?);

    let z = |v: i64| zeta(v, eps, la);
    let z0 = z(s);
    let mut out = MartingalePath {
        site: x,
        times: Vec::new(),
        m: Vec::new(),
        qv_pred: Vec::new(),
        qv_exact: Vec::new(),
        qv_emp: Vec::new(),
        bound_violations: 0,
    };
    // Running totals.
    let mut clock = 0.0;
    let mut drift = 0.0;
    let mut pred = 0.0;
    let mut exact = 0.0;
    let mut emp = 0.0;

    let check_bound = |l: i64, s: i64, r: i64, count: &mut usize| {
        let e = exact_rate_state(eps, la, l, s, r);
        let zz = z(s);
        if e > 2.0 * eps * eps * (zz * zz + 2.0) {
            *count += 1;
        }
    };
    check_bound(l, s, r, &mut out.bound_violations);

    let advance = |from: f64, to: f64, l: i64, s: i64, r: i64, drift: &mut f64, pred: &mut f64, exact: &mut f64| {
        let c = 0.5 * th2 * (z(l) + z(r) - 2.0 * z(s));
        *drift += c * exp_integral(th1, from, to);
        let w2 = exp_integral(2.0 * th1, from, to);
        *pred += leading_rate_state(eps, la, l, s, r) * w2;
        *exact += exact_rate_state(eps, la, l, s, r) * w2;
    };

    let mut k = 0;
    let mut sample_times: Vec<f64> = traj.snapshots.iter().map(|sn| sn.time).collect();
    if sample_times.is_empty() {
        sample_times.push(traj.t_end);
    }
    for &ts in &sample_times {
        while k < events.len() && events[k].time <= ts {
            let e = events[k];
            k += 1;
            let j = idx(e.site)?;
            if j != il && j != is && j != ir {
                continue;
            }
            advance(clock, e.time, l, s, r, &mut drift, &mut pred, &mut exact);
            clock = e.time;
            let inc = e.direction.increment();
            if j == is {
                let g = (th1 * e.time).exp();
                let dz = g * (z(s + inc) - z(s));
                emp += dz * dz;
            }
            // A ring of period 2 can alias the left and right neighbour.
            if j == il {
                l += inc;
            }
            if j == ir {
                r += inc;
            }
            if j == is {
                s += inc;
            }
            check_bound(l, s, r, &mut out.bound_violations);
        }
        advance(clock, ts, l, s, r, &mut drift, &mut pred, &mut exact);
        clock = ts;
        let zt = (th1 * ts).exp() * z(s);
        out.times.push(ts);
        out.m.push(zt - z0 - drift);
        out.qv_pred.push(pred);
        out.qv_exact.push(exact);
        out.qv_emp.push(emp);
    }
    Ok(out)
}

/// Jumps and compensator of the martingale at one site, built from the rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteIncrements {
    pub site: i64,
    /// `(time, jump of Z)`
    pub jumps: Vec<(f64, f64)>,
    /// `(start, end, c)`: the compensator density is `c e^{theta1 r}` on `[start, end)`.
    pub pieces: Vec<(f64, f64, f64)>,
}

/// Compensator coefficient `eta_down a_down (zeta(s-2) - zeta(s)) + eta_up a_up (zeta(s+2) - zeta(s))`.
fn compensator_coef(h: &HeightFunction, i: usize, eps: f64, la: f64) -> f64 {
    let s = h.at_index(i);
    let (down, up) = rates_from_log_activity(la + eps * s as f64, eps);
    match h.eligibility_at_index(i) {
        Flip::Down => down * (zeta(s - 2, eps, la) - zeta(s, eps, la)),
        Flip::Up => up * (zeta(s + 2, eps, la) - zeta(s, eps, la)),
        Flip::None => 0.0,
    }
}

/// Martingale increments of every site on `[0, t]`.
pub fn martingale_increments(traj: &Trajectory, t: f64) -> Result<Vec<SiteIncrements>> {
    require_classic(&traj.params)?;
    let events = traj.events()?;
    let eps = traj.params.eps;
    let la = traj.params.alpha.ln();
    let th1 = theta1(eps);
    let mut h = traj.initial.clone();
    let dom = *h.domain();
    let n = h.values().len();
    let mut out: Vec<SiteIncrements> = (0..n)
        .map(|i| SiteIncrements {
            site: dom.site(i),
            jumps: Vec::new(),
            pieces: Vec::new(),
        })
        .collect();
    let mut start = vec![0.0; n];
    let mut coef: Vec<f64> = (0..n).map(|i| compensator_coef(&h, i, eps, la)).collect();
    let neighbours = |i: usize| -> [Option<usize>; 3] {
        match dom {
            Domain::Ring { .. } => [Some((i + n - 1) % n), Some(i), Some((i + 1) % n)],
            Domain::LineWindow { .. } => [i.checked_sub(1), Some(i), (i + 1 < n).then_some(i + 1)],
        }
    };
    for e in events.iter().take_while(|e| e.time <= t) {
        let i = dom.index_of(e.site)?;
        let s = h.at_index(i);
        let inc = e.direction.increment();
        let g = (th1 * e.time).exp();
        out[i].jumps.push((e.time, g * (zeta(s + inc, eps, la) - zeta(s, eps, la))));
        let touched = neighbours(i);
        for j in touched.into_iter().flatten() {
            if start[j] < e.time && coef[j] != 0.0 {
                out[j].pieces.push((start[j], e.time, coef[j]));
            }
            start[j] = e.time;
        }
        h.apply(i, e.direction.flip());
        for j in touched.into_iter().flatten() {
            coef[j] = compensator_coef(&h, j, eps, la);
        }
    }
    for j in 0..n {
        if start[j] < t && coef[j] != 0.0 {
            out[j].pieces.push((start[j], t, coef[j]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{new_height, Profile};
    use crate::sim::{simulate_seeded, SimOptions};
    use proptest::prelude::*;

    #[test]
    fn transform_values() {
        assert_eq!(transform_value(0, 3.0, 0.4, 1.0), 0.0);
        let q: f64 = 0.25;
        let eps = -q.ln();
        assert!((transform_value(2, 0.0, eps, 1.0) - 3.75).abs() < 1e-14);
        // General alpha matches the two-term form.
        let alpha: f64 = 1.7;
        let s = 3;
        let direct = alpha.sqrt() * q.powf(-s as f64 / 2.0) - q.powf(s as f64 / 2.0) / alpha.sqrt();
        assert!((transform_value(s, 0.0, eps, alpha) - direct).abs() < 1e-13);
    }

    #[test]
    fn generator_identity_holds_exhaustively() {
        let c = generator_identity_check(&[1.0, 0.1, 0.01], (-20, 20));
        assert_eq!(c.configurations, 3 * 41 * 4);
        assert!(c.max_residual <= 1e-10 * c.max_abs_z, "{c:?}");
    }

    #[test]
    fn slope_sites_are_included() {
        for eps in [0.5, 0.05] {
            for s in -5..=5 {
                let (r, z) = generator_residual(eps, 0.0, s, 1, 1);
                assert!(r.abs() <= 1e-12 * (1.0 + z));
                let (r, z) = generator_residual(eps, 0.0, s, -1, -1);
                assert!(r.abs() <= 1e-12 * (1.0 + z));
            }
        }
    }

    #[test]
    fn leading_rate_at_local_max() {
        let eps: f64 = 0.1;
        let q = (-eps).exp();
        // (s(x-1), s(x), s(x+1)) = (-1, 0, -1)
        let v = leading_rate_state(eps, 0.0, -1, 0, -1);
        let expect = eps * eps / 4.0 / q * 2.0 * (1.0 / q + 1.0) * 2.0;
        assert!((v - expect).abs() < 1e-15);
        assert_eq!(leading_rate_state(eps, 0.0, -1, 0, 1), 0.0);
    }

    #[test]
    fn product_form_equals_rate_form() {
        for eps in [1.0, 0.3, 0.05] {
            for alpha in [1.0, 0.5, 3.0] {
                for s in -15i64..=15 {
                    for (dm, dp) in [(-1i64, 1i64), (1, -1), (1, 1), (-1, -1)] {
                        let (l, r) = (s - dm, s + dp);
                        let direct = exact_rate_state(eps, f64::ln(alpha), l, s, r);
                        let prod = product_form_rate(eps, alpha, l, s, r);
                        assert!(
                            (direct - prod).abs() <= 1e-12 * (1.0 + direct.abs()),
                            "eps={eps} alpha={alpha} s={s} ({dm},{dp}): {direct} vs {prod}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn exact_rate_is_twice_leading_rate() {
        for eps in [1e-2, 1e-3, 1e-4] {
            for s in [-3i64, 0, 5] {
                for (dm, dp) in [(-1i64, 1i64), (1, -1), (1, 1), (-1, -1)] {
                    let lead = leading_rate_state(eps, 0.0, s - dm, s, s + dp);
                    let exact = exact_rate_state(eps, 0.0, s - dm, s, s + dp);
                    if dm == dp {
                        assert_eq!(exact, 0.0);
                        assert_eq!(lead, 0.0);
                    } else {
                        assert!((exact / lead - 2.0).abs() < 10.0 * eps * (1.0 + s.abs() as f64));
                    }
                }
            }
        }
    }

    #[test]
    fn alpha_shift_matches_unit_alpha() {
        let eps = 0.2;
        let shift = 4;
        let alpha = (-eps * shift as f64).exp();
        for s in -10..10 {
            for (dm, dp) in [(-1, 1), (1, -1), (1, 1), (-1, -1)] {
                let (a, za) = generator_residual(eps, alpha.ln(), s, dm, dp);
                let (b, zb) = generator_residual(eps, 0.0, s - shift, dm, dp);
                assert!((a - b).abs() < 1e-13 && (za - zb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn martingale_vanishes_without_events() {
        let h = new_height(Domain::line(-3, 3).unwrap(), Profile::FlatAlternating).unwrap();
        let p = ModelParams::classic(0.1, 1.0, *h.domain()).unwrap();
        let tr = crate::sim::Trajectory {
            params: p,
            initial: h.clone(),
            t_end: 2.0,
            events: Some(vec![]),
            event_count: 0,
            snapshots: vec![],
            seed: None,
        };
        let mp = martingale_path(&tr, 0).unwrap();
        // Flat alternating around x=0 with alpha=1: s = (0,1,0) pattern; Z(0) = 0 and
        // (theta2/2) Delta Z = theta2 * zeta(1), so M_t = -theta2 zeta(1) (e^{theta1 t}-1)/theta1.
        let eps = 0.1;
        let expect = -theta2(eps) * zeta(1, eps, 0.0) * exp_integral(theta1(eps), 0.0, 2.0);
        assert!((mp.m[0] - expect).abs() < 1e-12);
        assert_eq!(mp.qv_emp[0], 0.0);
    }

    #[test]
    fn martingale_requires_event_log() {
        let d = Domain::line(-10, 10).unwrap();
        let h = new_height(d, Profile::Wedge).unwrap();
        let p = ModelParams::classic(0.1, 1.0, d).unwrap();
        let tr = simulate_seeded(h, &p, 1.0, &[1.0], 1, 1, SimOptions::default()).unwrap();
        assert!(matches!(martingale_path(&tr, 0), Err(Error::MissingEventLog)));
    }

    #[test]
    fn increments_reconstruct_martingale() {
        // Sum of jumps minus compensator at x equals the martingale path at x.
        let d = Domain::line(-30, 30).unwrap();
        let h = new_height(d, Profile::Wedge).unwrap();
        let p = ModelParams::classic(0.2, 1.0, d).unwrap();
        let tr = simulate_seeded(h, &p, 6.0, &[6.0], 3, 0, SimOptions { record_events: true }).unwrap();
        let inc = martingale_increments(&tr, 6.0).unwrap();
        let th1 = theta1(0.2);
        for x in [-5i64, 0, 7] {
            let mp = martingale_path(&tr, x).unwrap();
            let si = &inc[d.index_of(x).unwrap()];
            let jumps: f64 = si.jumps.iter().map(|j| j.1).sum();
            let comp: f64 = si.pieces.iter().map(|&(a, b, c)| c * exp_integral(th1, a, b)).sum();
            let m2 = jumps - comp;
            assert!((mp.m[0] - m2).abs() < 1e-10 * (1.0 + mp.m[0].abs()), "{} vs {}", mp.m[0], m2);
        }
    }

    proptest! {
        #[test]
        fn q_to_z_identity(eps in 0.001f64..1.0, s in -40i64..40, t in 0.0f64..50.0) {
            let z = transform_value(s, t, eps, 1.0);
            let zt = z / eps.sqrt();
            let (qm, qp) = q_powers_from_z(zt, t, eps);
            let q = (-eps).exp();
            let em = q.powf(-s as f64 / 2.0);
            let ep = q.powf(s as f64 / 2.0);
            prop_assert!((qm - em).abs() <= 1e-12 * em);
            prop_assert!((qp - ep).abs() <= 1e-12 * ep);
        }

        #[test]
        fn exact_rate_within_bound(eps in 0.001f64..1.0, s in -60i64..60, dm in prop::sample::select(vec![-1i64, 1]), dp in prop::sample::select(vec![-1i64, 1])) {
            let e = exact_rate_state(eps, 0.0, s - dm, s, s + dp);
            let z = zeta(s, eps, 0.0);
            prop_assert!(e <= 2.0 * eps * eps * (z * z + 2.0));
        }

        #[test]
        fn gradient_identity_bound(s in -80i64..80, dm in prop::sample::select(vec![-1i64, 1]), dp in prop::sample::select(vec![-1i64, 1])) {
            let eps = 0.05;
            let d = Domain::line(-1, 1).unwrap();
            let h = HeightFunction::from_values(d, vec![s - dm, s, s + dp]).unwrap();
            let p = ModelParams::classic(eps, 1.0, d).unwrap();
            let (res, quarter_z2) = gradient_identity_residual(&h, 0, 0.0, &p).unwrap();
            prop_assert!(res.abs() <= quarter_z2 + 10.0 * eps);
        }
    }
}
