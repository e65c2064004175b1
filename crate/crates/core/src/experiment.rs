//! Experiment orchestration.
//!
//! Each experiment kind is a library function returning a typed report, so the
//! CLI and the test suites run the same code. [`run_experiment`] turns a report
//! into CSV/JSON artifacts, acceptance checks and a manifest.
//!
//! Trajectories fan out over rayon; results are collected in index order and
//! reduced sequentially, so the output does not depend on the thread count.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ConvergeSpec, ExperimentConfig, ExperimentKind, InitialSpec, KernelSpec, SpdeSpec, SEED_ENV};
use crate::error::{Error, Result};
use crate::heat_kernel::{
    bound_stability, gradient_kernel_report, gradient_window, heat_kernel, kernel_bound_report, negligible_offset,
    discrete_duhamel, semigroup_residual, BoundStability, GradientKernelReport, KernelBoundReport, KernelFlavor,
};
use crate::hopf_cole::{
    generator_identity_check, generator_identity_check_alpha, martingale_increments, martingale_path,
    transform_value, GeneratorCheck,
};
use crate::lattice::{new_height, Domain, HeightFunction};
use crate::model::{fit_drift_constants, theta2, DriftConstants, Generalized, ModelParams, RateFunction, Shape};
use crate::output::{write_outputs, Artifact, Check, CsvTable, RunManifest};
use crate::rng::{derive_seed, from_seed, UniformSource};
use crate::sim::{simulate, SimOptions, Trajectory};
use crate::spde::{
    mode_wavenumber, periodic_residual, solve_ou_line, solve_ou_periodic, synthesize, Bump,
    NoiseCoef, SpdeConfig,
};
use crate::stationary::{marginal_pmf, spatial_ou_sample, OUParams, Parity, StationarySampler};
use crate::stats::{
    chi_square_gof, ensemble_compare, ks_midpoint, ks_two_sample, mean_se, regularity_report, rescale_height,
    ComparisonReport, FieldEnsemble, RegularityReport,
};

/// Master seed of a named sub-experiment.
pub fn sub_master(master: u64, tag: &str) -> u64 {
    let h = Sha256::digest(tag.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&h[..8]);
    derive_seed(master, u64::from_le_bytes(b))
}

pub fn trajectory_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(master, i)).collect()
}

fn par_collect<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

fn initial_height<R: UniformSource + ?Sized>(
    spec: InitialSpec,
    domain: Domain,
    sampler: Option<&StationarySampler>,
    rng: &mut R,
) -> Result<HeightFunction> {
    match (spec.profile(), sampler) {
        (Some(p), _) => new_height(domain, p),
        (None, Some(s)) => s.sample(domain, rng),
        (None, None) => Err(Error::InvalidArgument("stationary start without a sampler".into())),
    }
}

/// Variance of `sqrt(eps) s(0)` under the classic stationary marginal at `alpha = 1`.
pub fn stationary_variance(eps: f64) -> Result<f64> {
    let p = ModelParams::classic(eps, 1.0, Domain::line(0, 1)?)?;
    Ok(marginal_pmf(&p, Parity::Even, 1e-13)?.variance(eps.sqrt()))
}

/// Noise coefficient of the limiting equation `dZ = Z'' + A Z + B xi` whose
/// stationary spatial variance is `v`: `B^2 / (4 sqrt(-A)) = v`.
pub fn calibrated_noise(a: f64, v: f64) -> f64 {
    (4.0 * (-a).sqrt() * v).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorReport {
    pub eps: Vec<f64>,
    pub s_range: (i64, i64),
    pub unit_alpha: GeneratorCheck,
    /// Same sweep at `alpha = 2`.
    pub shifted_alpha: GeneratorCheck,
    pub relative: f64,
}

pub fn verify_generator(eps: &[f64], s_range: (i64, i64)) -> GeneratorReport {
    let unit_alpha = generator_identity_check(eps, s_range);
    let shifted_alpha = generator_identity_check_alpha(eps, s_range, 2.0);
    GeneratorReport {
        eps: eps.to_vec(),
        s_range,
        relative: unit_alpha.relative().max(shifted_alpha.relative()),
        unit_alpha,
        shifted_alpha,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRow {
    pub site: i64,
    pub time: f64,
    pub mean_m: f64,
    pub se_m: f64,
    pub mean_qv_emp: f64,
    pub mean_qv_exact: f64,
    pub mean_qv_pred: f64,
    /// Mean and standard error of `qv_emp - qv_exact`.
    pub mean_gap: f64,
    pub se_gap: f64,
    pub mean_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub eps: f64,
    pub domain: Domain,
    pub t_end: f64,
    pub ensemble: usize,
    pub rows: Vec<MartingaleRow>,
    pub bound_violations: usize,
    pub events: u64,
    pub seeds: Vec<u64>,
}

impl MartingaleReport {
    /// Largest `|mean| / SE` of the martingale and of the bracket gap.
    pub fn worst_z(&self) -> (f64, f64) {
        let z = |m: f64, s: f64| if s > 0.0 { m.abs() / s } else if m == 0.0 { 0.0 } else { f64::INFINITY };
        self.rows.iter().fold((0.0f64, 0.0f64), |(a, b), r| {
            (a.max(z(r.mean_m, r.se_m)), b.max(z(r.mean_gap, r.se_gap)))
        })
    }
}

/// Stationary-start ensemble on a line window; martingale and bracket
/// statistics at `checkpoints` equally spaced times and the given sites.
pub fn martingale_suite(
    params: &ModelParams,
    t_end: f64,
    checkpoints: usize,
    sites: &[i64],
    ensemble: usize,
    master: u64,
) -> Result<MartingaleReport> {
    let sampler = StationarySampler::new(params)?;
    let times: Vec<f64> = (1..=checkpoints).map(|k| t_end * k as f64 / checkpoints as f64).collect();
    let seeds = trajectory_seeds(master, ensemble);
    let opts = SimOptions { record_events: true };
    // Per trajectory: (events, violations, [site][checkpoint] -> (m, emp, exact, pred)).
    type Row = Vec<Vec<(f64, f64, f64, f64)>>;
    let per: Vec<(u64, usize, Row)> = par_collect(ensemble, |i| {
        let mut rng = from_seed(seeds[i]);
        let h0 = sampler.sample(params.domain, &mut rng)?;
        let traj = simulate(h0, params, t_end, &times, &mut rng, opts)?;
        let mut viol = 0;
        let mut rows = Vec::with_capacity(sites.len());
        for &x in sites {
            let p = martingale_path(&traj, x)?;
            viol += p.bound_violations;
            rows.push(
                (0..p.times.len())
                    .map(|k| (p.m[k], p.qv_emp[k], p.qv_exact[k], p.qv_pred[k]))
                    .collect(),
            );
        }
        Ok((traj.event_count, viol, rows))
    })?;
    let mut rows = Vec::new();
    for (si, &x) in sites.iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            let col = |f: &dyn Fn(&(f64, f64, f64, f64)) -> f64| -> Vec<f64> {
                per.iter().map(|r| f(&r.2[si][k])).collect()
            };
            let m = col(&|v| v.0);
            let (mean_m, se_m) = mean_se(&m);
            let (mean_gap, se_gap) = mean_se(&col(&|v| v.1 - v.2));
            rows.push(MartingaleRow {
                site: x,
                time: t,
                mean_m,
                se_m,
                mean_qv_emp: mean_se(&col(&|v| v.1)).0,
                mean_qv_exact: mean_se(&col(&|v| v.2)).0,
                mean_qv_pred: mean_se(&col(&|v| v.3)).0,
                mean_gap,
                se_gap,
                mean_m2: mean_se(&col(&|v| v.0 * v.0)).0,
            });
        }
    }
    Ok(MartingaleReport {
        eps: params.eps,
        domain: params.domain,
        t_end,
        ensemble,
        rows,
        bound_violations: per.iter().map(|r| r.1).sum(),
        events: per.iter().map(|r| r.0).sum(),
        seeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuhamelReport {
    pub eps: f64,
    pub t: f64,
    pub targets: Vec<i64>,
    pub seeds: Vec<u64>,
    /// Per trajectory: max over targets of `|Z - duhamel| / sup_x |Z|`.
    pub errors: Vec<f64>,
    pub events: u64,
}

impl DuhamelReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Rebuild `Z_t` at `targets` from `Z_0` and the martingale increments, and
/// compare against the transform of the simulated height.
pub fn duhamel_check(params: &ModelParams, t: f64, targets: &[i64], runs: usize, master: u64) -> Result<DuhamelReport> {
    let sampler = StationarySampler::new(params)?;
    let seeds = trajectory_seeds(master, runs);
    let (eps, alpha) = (params.eps, params.alpha);
    let per: Vec<(f64, u64)> = par_collect(runs, |i| {
        let mut rng = from_seed(seeds[i]);
        let h0 = sampler.sample(params.domain, &mut rng)?;
        let traj = simulate(h0, params, t, &[t], &mut rng, SimOptions { record_events: true })?;
        let inc = martingale_increments(&traj, t)?;
        let init: Vec<f64> = traj.initial.values().iter().map(|&s| transform_value(s, 0.0, eps, alpha)).collect();
        let rebuilt = discrete_duhamel(&init, &inc, eps, t, targets)?;
        let fin = &traj.snapshots[0].height;
        let sup = fin
            .values()
            .iter()
            .map(|&s| transform_value(s, t, eps, alpha).abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut err: f64 = 0.0;
        for (r, &x) in rebuilt.iter().zip(targets) {
            let z = transform_value(fin.get(x)?, t, eps, alpha);
            err = err.max((r - z).abs() / sup);
        }
        Ok((err, traj.event_count))
    })?;
    Ok(DuhamelReport {
        eps,
        t,
        targets: targets.to_vec(),
        seeds,
        errors: per.iter().map(|p| p.0).collect(),
        events: per.iter().map(|p| p.1).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub eps: f64,
    pub alpha: f64,
    /// Site 0, reached through the left transition from an odd-marginal draw at site 1.
    pub chi2_even: ChiSquare,
    /// Site 1, drawn from the odd marginal.
    pub chi2_odd: ChiSquare,
    pub invariance_t: f64,
    pub invariance_n: usize,
    pub invariance_ks: f64,
    pub invariance_p: f64,
    pub variance_eps: f64,
    /// `Var(sqrt(eps) s(0))` by summation of the even marginal.
    pub variance: f64,
    pub events: u64,
    pub seeds: Vec<u64>,
}

fn chi_square_of(draws: &[i64], pmf: &crate::stationary::MarginalPMF) -> Result<ChiSquare> {
    let heights: Vec<i64> = pmf.heights().collect();
    let lo = heights[0];
    let mut counts = vec![0u64; heights.len()];
    for &s in draws {
        let k = (s - lo).div_euclid(2);
        if (s - lo).rem_euclid(2) != 0 || k < 0 || k as usize >= counts.len() {
            return Err(Error::InvalidArgument(format!("draw {s} outside the tabulated marginal")));
        }
        counts[k as usize] += 1;
    }
    let (statistic, dof, p_value) = chi_square_gof(&counts, &pmf.probs)?;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value,
        draws: draws.len(),
    })
}

/// Sampler goodness of fit, dynamic invariance on a frozen window of
/// half-width `half_width` over microscopic time `t`, and the marginal variance.
pub fn stationary_checks(
    eps: f64,
    alpha: f64,
    draws: usize,
    half_width: i64,
    t: f64,
    n: usize,
    variance_eps: f64,
    master: u64,
) -> Result<StationaryReport> {
    let pair = ModelParams::classic(eps, alpha, Domain::line(0, 1)?)?;
    let sampler = StationarySampler::new(&pair)?;
    const CHUNK: usize = 1000;
    let chunks = draws.div_ceil(CHUNK);
    let chi_master = sub_master(master, "chi-square");
    let pairs: Vec<Vec<(i64, i64)>> = par_collect(chunks, |c| {
        let mut rng = from_seed(derive_seed(chi_master, c as u64));
        let m = CHUNK.min(draws - c * CHUNK);
        (0..m)
            .map(|_| {
                let h = sampler.sample(pair.domain, &mut rng)?;
                Ok((h.at_index(0), h.at_index(1)))
            })
            .collect()
    })?;
    let even: Vec<i64> = pairs.iter().flatten().map(|p| p.0).collect();
    let odd: Vec<i64> = pairs.iter().flatten().map(|p| p.1).collect();
    let chi2_even = chi_square_of(&even, sampler.marginal(Parity::Even))?;
    let chi2_odd = chi_square_of(&odd, sampler.marginal(Parity::Odd))?;

    let params = ModelParams::classic(eps, alpha, Domain::centered_line(half_width)?)?;
    let seeds = trajectory_seeds(sub_master(master, "invariance"), 2 * n);
    let per: Vec<(f64, u64)> = par_collect(2 * n, |i| {
        let mut rng = from_seed(seeds[i]);
        let h0 = sampler.sample(params.domain, &mut rng)?;
        if i < n {
            return Ok((h0.get(0)? as f64, 0));
        }
        let traj = simulate(h0, &params, t, &[t], &mut rng, SimOptions::default())?;
        Ok((traj.snapshots[0].height.get(0)? as f64, traj.event_count))
    })?;
    let (a, b): (Vec<f64>, Vec<f64>) = (
        per[..n].iter().map(|p| p.0).collect(),
        per[n..].iter().map(|p| p.0).collect(),
    );
    let (invariance_ks, invariance_p) = ks_two_sample(&a, &b);
    Ok(StationaryReport {
        eps,
        alpha,
        chi2_even,
        chi2_odd,
        invariance_t: t,
        invariance_n: n,
        invariance_ks,
        invariance_p,
        variance_eps,
        variance: stationary_variance(variance_eps)?,
        events: per.iter().map(|p| p.1).sum(),
        seeds,
    })
}

/// Kernel `e^{-theta2 t} I_x(theta2 t)` by RK4 integration of
/// `dp/dt = (theta2/2)(p(x+1) + p(x-1) - 2p(x))` from a point mass, on `|x| <= width`.
pub fn kernel_ode_reference(eps: f64, t: f64, width: usize) -> Vec<f64> {
    let rate = 0.5 * theta2(eps);
    let n = 2 * width + 1;
    let steps = ((4.0 * rate * t / 0.02).ceil() as usize).max(1);
    let h = t / steps as f64;
    let rhs = |p: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let l = if i > 0 { p[i - 1] } else { 0.0 };
            let r = if i + 1 < n { p[i + 1] } else { 0.0 };
            out[i] = rate * (l + r - 2.0 * p[i]);
        }
    };
    let mut p = vec![0.0; n];
    p[width] = 1.0;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..steps {
        rhs(&p, &mut k1);
        for i in 0..n {
            tmp[i] = p[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = p[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = p[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p[width..].to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub eps: f64,
    pub ode_t: f64,
    /// `max_x |Bessel - ODE|` at `ode_t`.
    pub ode_error: f64,
    /// `max |mass - 1|` over the microscopic, rescaled and ring tables.
    pub mass_error: f64,
    pub semigroup_residual: f64,
    pub bounds: KernelBoundReport,
    pub gradient: GradientKernelReport,
}

impl KernelReport {
    pub fn c1_max(&self) -> f64 {
        self.gradient.c1.iter().copied().fold(0.0, f64::max)
    }
}

pub fn kernel_checks(eps: f64, spec: &KernelSpec) -> Result<KernelReport> {
    let width = negligible_offset(theta2(eps) * spec.ode_t) + 10;
    let ode = kernel_ode_reference(eps, spec.ode_t, width);
    let table = heat_kernel(eps, &[spec.ode_t], width, KernelFlavor::Microscopic)?;
    let ode_error = (0..=width).map(|x| (table.value(0, x as i64) - ode[x]).abs()).fold(0.0, f64::max);

    let mut times = vec![0.0];
    times.extend(crate::config::log_grid(0.1, 200.0, 12));
    let t_max = *times.last().unwrap();
    let off = negligible_offset(theta2(eps) * t_max) + (40.0 / eps.max(1e-3)) as usize;
    let micro = heat_kernel(eps, &times, off, KernelFlavor::Microscopic)?;
    let rescaled_times: Vec<f64> = times.iter().map(|t| t * eps * eps).collect();
    let rescaled = heat_kernel(eps, &rescaled_times, negligible_offset(2.0 * t_max), KernelFlavor::Rescaled)?;
    let ring = heat_kernel(eps, &times, 0, KernelFlavor::RingSpectral { period: 64 })?;
    let mut mass_error: f64 = 0.0;
    for ti in 0..times.len() {
        for m in [micro.mass(ti), rescaled.mass(ti), ring.mass(ti)] {
            mass_error = mass_error.max((m - 1.0).abs());
        }
    }
    let semigroup = semigroup_residual(eps, 3.0, 7.0, negligible_offset(theta2(eps) * 10.0))?;
    let bounds = kernel_bound_report(&micro, spec.u, spec.v, spec.moment)?;
    let grid = spec.t_grid();
    let t_top = grid.iter().copied().fold(0.0, f64::max);
    let mut window = gradient_window(eps, t_top);
    let gradient = loop {
        match gradient_kernel_report(eps, &grid, spec.a, window) {
            Err(Error::WindowTooSmall { .. }) if window < 1 << 22 => window *= 2,
            r => break r?,
        }
    };
    Ok(KernelReport {
        eps,
        ode_t: spec.ode_t,
        ode_error,
        mass_error,
        semigroup_residual: semigroup,
        bounds,
        gradient,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub index: usize,
    pub k: usize,
    pub predicted: f64,
    pub sample: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub diffusivity: f64,
    pub time: f64,
    pub mean_m: f64,
    pub se_m: f64,
    pub mean_n: f64,
    pub se_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeReport {
    pub a: f64,
    pub b: f64,
    pub ensemble: usize,
    pub modes: Vec<ModeRow>,
    pub residuals: Vec<ResidualRow>,
    /// Diffusivities for which every residual mean is within the SE band.
    pub zeroing_diffusivities: Vec<f64>,
    pub chain_rule: ComparisonReport,
}

impl SpdeReport {
    pub fn worst_mode_z(&self) -> f64 {
        self.modes
            .iter()
            .map(|r| (r.sample - r.predicted).abs() / r.se)
            .fold(0.0, f64::max)
    }
}

fn residuals_ok(rows: &[ResidualRow], d: f64, se_factor: f64) -> bool {
    rows.iter()
        .filter(|r| r.diffusivity == d)
        .all(|r| r.mean_m.abs() <= se_factor * r.se_m && r.mean_n.abs() <= se_factor * r.se_n)
}

/// Mode variances at stationarity, martingale-problem residuals for
/// `(A = 0, B_T = e^{T/4})`, and the `e^{-T/4}` chain rule against `(A = -1/4, B = 1)`.
pub fn spde_checks(spec: &SpdeSpec, se_factor: f64, level: f64, master: u64) -> Result<SpdeReport> {
    let n = spec.ensemble;
    let cfg = SpdeConfig::periodic(spec.a, NoiseCoef::Constant(spec.b), spec.modes, spec.t_end, spec.t_end);
    let grid = cfg.grid();
    let nm = 2 * spec.modes + 1;
    let lam: Vec<f64> = (0..nm)
        .map(|j| (2.0 * std::f64::consts::PI * mode_wavenumber(j) as f64).powi(2) - spec.a)
        .collect();
    let seeds = trajectory_seeds(sub_master(master, "modes"), n);
    let finals: Vec<Vec<f64>> = par_collect(n, |i| {
        let mut rng = from_seed(seeds[i]);
        let u0: Vec<f64> = lam.iter().map(|l| spec.b / (2.0 * l).sqrt() * rng.standard_normal()).collect();
        let z0 = synthesize(&u0, &grid);
        let f = solve_ou_periodic(&cfg, &z0, &mut rng)?;
        Ok(f.modes.unwrap().pop().unwrap())
    })?;
    let modes = (0..nm)
        .map(|j| {
            let sq: Vec<f64> = finals.iter().map(|u| u[j] * u[j]).collect();
            let (sample, se) = mean_se(&sq);
            ModeRow {
                index: j,
                k: mode_wavenumber(j),
                predicted: spec.b * spec.b / (2.0 * lam[j]),
                sample,
                se,
            }
        })
        .collect();

    let times: Vec<f64> = (0..=4).map(|k| spec.t_end * k as f64 / 4.0).collect();
    let mut growth = SpdeConfig::periodic(0.0, NoiseCoef::ExpQuarter, spec.modes, spec.dt, spec.t_end);
    growth.sample_times = times.clone();
    let cos_init: Vec<f64> = growth.grid().iter().map(|x| (2.0 * std::f64::consts::PI * x).cos()).collect();
    let bump = Bump {
        center: 0.5,
        radius: spec.bump_radius,
    };
    let diffusivities = [1.0, 2.0];
    let seeds_g = trajectory_seeds(sub_master(master, "martingale-problem"), n);
    let phi = bump.modes(spec.modes);
    let per: Vec<Vec<(Vec<f64>, Vec<f64>)>> = par_collect(n, |i| {
        let mut rng = from_seed(seeds_g[i]);
        let f = solve_ou_periodic(&growth, &cos_init, &mut rng)?;
        diffusivities
            .iter()
            .map(|&d| periodic_residual(&f, &phi, 0.0, spec.c, d))
            .collect()
    })?;
    let mut residuals = Vec::new();
    for (di, &d) in diffusivities.iter().enumerate() {
        for (ti, &t) in times.iter().enumerate().skip(1) {
            let (mean_m, se_m) = mean_se(&per.iter().map(|r| r[di].0[ti]).collect::<Vec<_>>());
            let (mean_n, se_n) = mean_se(&per.iter().map(|r| r[di].1[ti]).collect::<Vec<_>>());
            residuals.push(ResidualRow {
                diffusivity: d,
                time: t,
                mean_m,
                se_m,
                mean_n,
                se_n,
            });
        }
    }
    let zeroing_diffusivities = diffusivities
        .iter()
        .copied()
        .filter(|&d| residuals_ok(&residuals, d, se_factor))
        .collect();

    let points: Vec<(f64, f64)> = [0.0, 0.25, 0.5].iter().map(|&x| (spec.t_end, x)).collect();
    let xs: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut direct_cfg = SpdeConfig::periodic(-0.25, NoiseCoef::Constant(1.0), spec.modes, spec.dt, spec.t_end);
    direct_cfg.sample_times = vec![spec.t_end];
    let mut growth_end = growth.clone();
    growth_end.sample_times = vec![spec.t_end];
    let seeds_c = trajectory_seeds(sub_master(master, "chain-rule"), 2 * n);
    let damp = (-0.25 * spec.t_end).exp();
    let vals: Vec<Vec<f64>> = par_collect(2 * n, |i| {
        let mut rng = from_seed(seeds_c[i]);
        if i < n {
            let f = solve_ou_periodic(&growth_end, &cos_init, &mut rng)?;
            Ok(synthesize(f.modes.as_ref().unwrap().last().unwrap(), &xs).iter().map(|v| damp * v).collect())
        } else {
            let f = solve_ou_periodic(&direct_cfg, &cos_init, &mut rng)?;
            Ok(synthesize(f.modes.as_ref().unwrap().last().unwrap(), &xs))
        }
    })?;
    let mut rescaled = FieldEnsemble::new("damped growth solution", points.clone());
    let mut direct = FieldEnsemble::new("damped equation", points);
    for (i, v) in vals.into_iter().enumerate() {
        if i < n {
            rescaled.push(v, Some(seeds_c[i]))?;
        } else {
            direct.push(v, Some(seeds_c[i]))?;
        }
    }
    let chain_rule = ensemble_compare(&rescaled, &direct, level)?;
    Ok(SpdeReport {
        a: spec.a,
        b: spec.b,
        ensemble: n,
        modes,
        residuals,
        zeroing_diffusivities,
        chain_rule,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointKs {
    pub x: f64,
    pub ks: f64,
    pub p_value: f64,
    /// Continuity-corrected distance for the lattice-valued particle sample.
    pub ks_midpoint: f64,
    pub mean_particle: f64,
    pub var_particle: f64,
    pub mean_spde: f64,
    pub var_spde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeRow {
    pub eps: f64,
    /// Ring period, for the periodic study.
    pub period: Option<usize>,
    pub t_micro: f64,
    pub window: Option<(i64, i64)>,
    /// Stationary variance used to calibrate the limiting noise.
    pub calibration_variance: f64,
    pub noise_b: f64,
    pub n_particle: usize,
    pub n_spde: usize,
    pub points: Vec<PointKs>,
    pub events: u64,
    pub regularity: Option<RegularityReport>,
    pub particle_seeds: Vec<u64>,
    pub spde_seeds: Vec<u64>,
    #[serde(skip)]
    pub particle: Vec<Vec<f64>>,
    #[serde(skip)]
    pub spde: Vec<Vec<f64>>,
}

impl ConvergeRow {
    pub fn max_ks(&self) -> f64 {
        self.points.iter().map(|p| p.ks).fold(0.0, f64::max)
    }

    pub fn max_ks_midpoint(&self) -> f64 {
        self.points.iter().map(|p| p.ks_midpoint).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeReport {
    pub t: f64,
    pub rows: Vec<ConvergeRow>,
}

impl ConvergeReport {
    /// Rows ordered from coarse to fine `eps`.
    fn by_eps(&self) -> Vec<&ConvergeRow> {
        let mut v: Vec<&ConvergeRow> = self.rows.iter().collect();
        v.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        v
    }

    /// Whether the distance strictly decreases with `eps`.
    pub fn monotone(&self, f: impl Fn(&ConvergeRow) -> f64) -> bool {
        self.by_eps().windows(2).all(|w| f(w[1]) < f(w[0]))
    }

    pub fn finest(&self) -> Option<&ConvergeRow> {
        self.by_eps().last().copied()
    }
}

fn point_rows(xs: &[f64], particle: &[Vec<f64>], spde: &[Vec<f64>], col0: usize, spacing: f64) -> Vec<PointKs> {
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let a: Vec<f64> = particle.iter().map(|r| r[col0 + k]).collect();
            let b: Vec<f64> = spde.iter().map(|r| r[k]).collect();
            let (ks, p_value) = ks_two_sample(&a, &b);
            let (ma, va) = (crate::stats::mean(&a), crate::stats::variance(&a));
            let (mb, vb) = (crate::stats::mean(&b), crate::stats::variance(&b));
            PointKs {
                x,
                ks,
                p_value,
                ks_midpoint: ks_midpoint(&a, &b, spacing),
                mean_particle: ma,
                var_particle: va,
                mean_spde: mb,
                var_spde: vb,
            }
        })
        .collect()
}

/// Stationary-start line ensembles against the stationary space-time OU solver.
pub fn converge_line(spec: &ConvergeSpec, ensemble: usize, master: u64) -> Result<ConvergeReport> {
    let t = spec.t;
    let xs = &spec.x;
    let xmax = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut rows = Vec::new();
    for (ei, &eps) in spec.eps.iter().enumerate() {
        let t_micro = t / (eps * eps);
        let half = (xmax / eps + 8.0 * (2.0 * t_micro).sqrt() + 20.0).ceil() as i64;
        let params = ModelParams::classic(eps, 1.0, Domain::centered_line(half)?)?;
        let sampler = StationarySampler::new(&params)?;
        let mut points: Vec<(f64, f64)> = xs.iter().map(|&x| (0.0, x)).collect();
        points.extend(xs.iter().map(|&x| (t, x)));
        let pseeds = trajectory_seeds(sub_master(master, &format!("converge-particle-{ei}")), ensemble);
        let per: Vec<(Vec<f64>, u64)> = par_collect(ensemble, |i| {
            let mut rng = from_seed(pseeds[i]);
            let h0 = sampler.sample(params.domain, &mut rng)?;
            let traj = simulate(h0, &params, t_micro, &[0.0, t_micro], &mut rng, SimOptions::default())?;
            Ok((rescale_height(&traj, eps, 1.0, &points)?, traj.event_count))
        })?;
        let events = per.iter().map(|p| p.1).sum();
        let particle: Vec<Vec<f64>> = per.into_iter().map(|p| p.0).collect();

        let v = stationary_variance(eps)?;
        let a = -0.25;
        let b = calibrated_noise(a, v);
        let l = spec.spde_half_width;
        let mut cfg = SpdeConfig::line(a, NoiseCoef::Constant(b), -l, l, spec.spde_dx, spec.spde_dt, t);
        cfg.sample_times = vec![t];
        let grid = cfg.grid();
        let idx: Vec<usize> = xs.iter().map(|&x| ((x + l) / spec.spde_dx).round() as usize).collect();
        let ou = OUParams::stationary(0.5, v)?;
        let sseeds = trajectory_seeds(sub_master(master, &format!("converge-spde-{ei}")), ensemble);
        let spde: Vec<Vec<f64>> = par_collect(ensemble, |i| {
            let mut rng = from_seed(sseeds[i]);
            let z0 = spatial_ou_sample(&ou, &grid, &mut rng)?;
            let f = solve_ou_line(&cfg, &z0, &mut rng)?;
            Ok(idx.iter().map(|&j| f.values[0][j]).collect())
        })?;

        let mut ens = FieldEnsemble::new(format!("particle eps={eps}"), points);
        for (row, s) in particle.iter().zip(&pseeds) {
            ens.push(row.clone(), Some(*s))?;
        }
        let regularity = regularity_report(&ens, 1.0, 0.2, 2, None)?;
        rows.push(ConvergeRow {
            eps,
            period: None,
            t_micro,
            window: Some((-half, half)),
            calibration_variance: v,
            noise_b: b,
            n_particle: ensemble,
            n_spde: ensemble,
            points: point_rows(xs, &particle, &spde, xs.len(), 2.0 * eps.sqrt()),
            events,
            regularity: Some(regularity),
            particle_seeds: pseeds,
            spde_seeds: sseeds,
            particle,
            spde,
        });
    }
    Ok(ConvergeReport { t, rows })
}

/// Generalized periodic model from a flat start against the periodic OU solver
/// with `A = -a/4` started from zero.
pub fn converge_periodic(
    spec: &ConvergeSpec,
    rate: Generalized,
    ensemble: usize,
    master: u64,
) -> Result<ConvergeReport> {
    let t = spec.t;
    let xs = &spec.ring_x;
    let points: Vec<(f64, f64)> = xs.iter().map(|&x| (t, x)).collect();
    let mut rows = Vec::new();
    for (pi, &n) in spec.periods.iter().enumerate() {
        let eps = 1.0 / n as f64;
        let t_micro = t / (eps * eps);
        let params = ModelParams::new(eps, 1.0, RateFunction::Generalized(rate), Domain::ring(n, 0)?)?;
        let h0 = new_height(params.domain, crate::lattice::Profile::FlatAlternating)?;
        let pseeds = trajectory_seeds(sub_master(master, &format!("periodic-particle-{pi}")), ensemble);
        let per: Vec<(Vec<f64>, u64)> = par_collect(ensemble, |i| {
            let mut rng = from_seed(pseeds[i]);
            let traj = simulate(h0.clone(), &params, t_micro, &[t_micro], &mut rng, SimOptions::default())?;
            Ok((rescale_height(&traj, eps, 1.0, &points)?, traj.event_count))
        })?;
        let events = per.iter().map(|p| p.1).sum();
        let particle: Vec<Vec<f64>> = per.into_iter().map(|p| p.0).collect();

        let v = stationary_variance(eps)?;
        let a = -rate.a / 4.0;
        let b = calibrated_noise(-0.25, v);
        let cfg = SpdeConfig::periodic(a, NoiseCoef::Constant(b), spec.spde_modes, t, t);
        let z0 = vec![0.0; cfg.grid().len()];
        let sseeds = trajectory_seeds(sub_master(master, &format!("periodic-spde-{pi}")), ensemble);
        let spde: Vec<Vec<f64>> = par_collect(ensemble, |i| {
            let mut rng = from_seed(sseeds[i]);
            let f = solve_ou_periodic(&cfg, &z0, &mut rng)?;
            Ok(synthesize(f.modes.as_ref().unwrap().last().unwrap(), xs))
        })?;
        rows.push(ConvergeRow {
            eps,
            period: Some(n),
            t_micro,
            window: None,
            calibration_variance: v,
            noise_b: b,
            n_particle: ensemble,
            n_spde: ensemble,
            points: point_rows(xs, &particle, &spde, 0, 2.0 * eps.sqrt()),
            events,
            regularity: None,
            particle_seeds: pseeds,
            spde_seeds: sseeds,
            particle,
            spde,
        });
    }
    Ok(ConvergeReport { t, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub shape: Shape,
    pub rows: Vec<DriftConstants>,
}

impl DriftReport {
    /// `max/min` of `(c0, c1)` across the sweep.
    pub fn spread(&self) -> (f64, f64) {
        let ratio = |f: &dyn Fn(&DriftConstants) -> f64| {
            let (lo, hi) = self
                .rows
                .iter()
                .map(f)
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi / lo
        };
        (ratio(&|d| d.c0), ratio(&|d| d.c1))
    }

    pub fn finite(&self) -> bool {
        self.rows.iter().all(|d| d.c0.is_finite() && d.c1.is_finite())
    }
}

pub fn drift_diagnostics(rate: Generalized, eps: &[f64], shat: &[f64]) -> Result<DriftReport> {
    let rows = eps
        .iter()
        .map(|&e| {
            let p = ModelParams::new(e, 1.0, RateFunction::Generalized(rate), Domain::line(0, 1)?)?;
            fit_drift_constants(&p, shat)
        })
        .collect::<Result<_>>()?;
    Ok(DriftReport {
        shape: rate.shape,
        rows,
    })
}

/// Everything an experiment produces before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    pub seeds: BTreeMap<String, Vec<u64>>,
    pub metrics: BTreeMap<String, f64>,
    pub event_count: u64,
}

impl Outcome {
    fn metric(&mut self, key: impl Into<String>, v: f64) {
        if v.is_finite() {
            self.metrics.insert(key.into(), v);
        }
    }
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let params = cfg.model_params()?;
    let sampler = match cfg.initial {
        InitialSpec::Stationary => Some(StationarySampler::new(&params)?),
        _ => None,
    };
    let times = cfg.sample_times();
    let seeds = trajectory_seeds(sub_master(cfg.seed, "simulate"), cfg.ensemble);
    let opts = SimOptions {
        record_events: cfg.record_events,
    };
    let trajs: Vec<Trajectory> = par_collect(cfg.ensemble, |i| {
        let mut rng = from_seed(seeds[i]);
        let h0 = initial_height(cfg.initial, params.domain, sampler.as_ref(), &mut rng)?;
        let mut tr = simulate(h0, &params, cfg.t_end, &times, &mut rng, opts)?;
        tr.seed = Some(seeds[i]);
        Ok(tr)
    })?;
    let mut out = Outcome::default();
    let mut summary = CsvTable::new(&["trajectory", "seed", "events"]);
    let mut snaps = CsvTable::new(&["trajectory", "time", "site", "height"]);
    let mut events = CsvTable::new(&["trajectory", "time", "site", "direction"]);
    let mut valid = true;
    for (i, tr) in trajs.iter().enumerate() {
        summary.push(vec![i.into(), seeds[i].into(), (tr.event_count as i64).into()])?;
        let frames = std::iter::once((0.0, &tr.initial)).chain(tr.snapshots.iter().map(|s| (s.time, &s.height)));
        for (t, h) in frames {
            valid &= h.check_invariants().is_ok();
            for (k, x) in h.domain().sites().enumerate() {
                snaps.push(vec![i.into(), t.into(), x.into(), h.at_index(k).into()])?;
            }
        }
        if let Some(ev) = &tr.events {
            for e in ev {
                let d = match e.direction {
                    crate::sim::Direction::Up => "up",
                    crate::sim::Direction::Down => "down",
                };
                events.push(vec![i.into(), e.time.into(), e.site.into(), d.into()])?;
            }
        }
        out.event_count += tr.event_count;
    }
    out.artifacts.push(Artifact::csv("trajectories.csv", summary));
    out.artifacts.push(Artifact::csv("snapshots.csv", snaps));
    if cfg.record_events {
        out.artifacts.push(Artifact::csv("events.csv", events));
    }
    out.checks.push(Check::flag("height invariants", valid, "solid-on-solid and winding at every snapshot"));
    out.seeds.insert("trajectories".into(), seeds);
    Ok(out)
}

fn run_stationary(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.stationary;
    let eps = cfg.model.eps;
    let t = 10.0 * s.macro_t / (eps * eps);
    let r = stationary_checks(eps, cfg.model.alpha, s.draws, s.half_width, t, s.ks_size, s.variance_eps, cfg.seed)?;
    let level = cfg.tolerances.p_value;
    let mut out = Outcome {
        event_count: r.events,
        ..Default::default()
    };
    out.checks.push(Check::above("chi-square even marginal p", r.chi2_even.p_value, level));
    out.checks.push(Check::above("chi-square odd marginal p", r.chi2_odd.p_value, level));
    out.checks.push(Check::above("dynamic invariance KS p", r.invariance_p, level));
    out.checks.push(Check::at_most(
        "variance of sqrt(eps) s(0) relative error",
        (r.variance - 1.0).abs(),
        cfg.tolerances.variance,
    ));
    let params = ModelParams::classic(eps, cfg.model.alpha, Domain::line(0, 1)?)?;
    let mut pmf = CsvTable::new(&["parity", "height", "probability"]);
    for parity in [Parity::Even, Parity::Odd] {
        let m = marginal_pmf(&params, parity, 1e-13)?;
        let name = if parity == Parity::Even { "even" } else { "odd" };
        for (h, p) in m.heights().zip(&m.probs) {
            pmf.push(vec![name.into(), h.into(), (*p).into()])?;
        }
    }
    out.artifacts.push(Artifact::csv("marginal_pmf.csv", pmf));
    out.seeds.insert("invariance".into(), r.seeds.clone());
    out.artifacts.push(Artifact::json("stationary.json", &r)?);
    Ok(out)
}

fn run_generator(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = &cfg.generator;
    let r = verify_generator(&g.eps, (g.s_min, g.s_max));
    let mut out = Outcome::default();
    out.checks.push(Check::at_most(
        "generator residual / max |Z|",
        r.relative,
        cfg.tolerances.generator,
    ));
    out.metric("configurations", (r.unit_alpha.configurations + r.shifted_alpha.configurations) as f64);
    out.artifacts.push(Artifact::json("generator.json", &r)?);
    Ok(out)
}

fn run_martingale(cfg: &ExperimentConfig) -> Result<Outcome> {
    let params = cfg.model_params()?;
    let m = &cfg.martingale;
    let r = martingale_suite(&params, cfg.t_end, cfg.samples, &m.sites, cfg.ensemble, sub_master(cfg.seed, "martingale"))?;
    let dparams = ModelParams::classic(cfg.model.eps, cfg.model.alpha, Domain::line(-m.duhamel_half_width, m.duhamel_half_width - 1)?)?;
    let step = (m.duhamel_half_width / 8).max(1);
    let targets: Vec<i64> = (-4..=4).map(|k| k * step).collect();
    let d = if m.duhamel_runs > 0 {
        Some(duhamel_check(&dparams, m.duhamel_t, &targets, m.duhamel_runs, sub_master(cfg.seed, "duhamel"))?)
    } else {
        None
    };
    let k = cfg.tolerances.se_factor;
    let (zm, zq) = r.worst_z();
    let mut out = Outcome {
        event_count: r.events + d.as_ref().map_or(0, |d| d.events),
        ..Default::default()
    };
    out.checks.push(Check::at_most("martingale mean |mean|/SE", zm, k));
    out.checks.push(Check::at_most("bracket gap |mean|/SE", zq, k));
    out.checks.push(Check::at_most("bracket bound violations", r.bound_violations as f64, 0.0));
    let mut table = CsvTable::new(&[
        "site", "time", "mean_m", "se_m", "mean_m2", "mean_qv_emp", "mean_qv_exact", "mean_qv_pred", "mean_gap", "se_gap",
    ]);
    for row in &r.rows {
        table.push(vec![
            row.site.into(),
            row.time.into(),
            row.mean_m.into(),
            row.se_m.into(),
            row.mean_m2.into(),
            row.mean_qv_emp.into(),
            row.mean_qv_exact.into(),
            row.mean_qv_pred.into(),
            row.mean_gap.into(),
            row.se_gap.into(),
        ])?;
    }
    out.artifacts.push(Artifact::csv("martingale.csv", table));
    out.seeds.insert("martingale".into(), r.seeds.clone());
    if let Some(d) = &d {
        out.checks.push(Check::at_most("Duhamel relative error", d.max_error(), cfg.tolerances.duhamel));
        let mut dt = CsvTable::new(&["trajectory", "seed", "max_relative_error"]);
        for (i, (s, e)) in d.seeds.iter().zip(&d.errors).enumerate() {
            dt.push(vec![i.into(), (*s).into(), (*e).into()])?;
        }
        out.artifacts.push(Artifact::csv("duhamel.csv", dt));
        out.seeds.insert("duhamel".into(), d.seeds.clone());
    }
    Ok(out)
}

fn run_kernels(cfg: &ExperimentConfig) -> Result<Outcome> {
    let k = &cfg.kernel;
    let tol = &cfg.tolerances;
    let reports: Vec<KernelReport> = k.eps.iter().map(|&e| kernel_checks(e, k)).collect::<Result<_>>()?;
    let mut out = Outcome::default();
    let mut grad = CsvTable::new(&["eps", "t", "s", "c1", "c0"]);
    for r in &reports {
        let e = r.eps;
        out.checks.push(Check::at_most(format!("eps={e} Bessel vs ODE"), r.ode_error, tol.bessel));
        out.checks.push(Check::at_most(format!("eps={e} mass conservation"), r.mass_error, tol.mass));
        out.checks.push(Check::at_most(
            format!("eps={e} gradient decay slope |slope + 1/2|"),
            (r.gradient.decay_slope + 0.5).abs(),
            tol.slope,
        ));
        out.checks.push(Check::above(format!("eps={e} gradient c1 margin"), tol.c1 - r.c1_max(), 0.0)
            .with_detail(format!("max c1 = {}", r.c1_max())));
        out.checks.push(Check::flag(
            format!("eps={e} bound constants finite"),
            [r.bounds.sup_c, r.bounds.moment_c, r.bounds.holder_space_c, r.bounds.time_holder_c]
                .iter()
                .all(|c| c.is_finite()),
            "",
        ));
        for i in 0..r.gradient.t_grid.len() {
            grad.push(vec![
                e.into(),
                r.gradient.t_grid[i].into(),
                r.gradient.s[i].into(),
                r.gradient.c1[i].into(),
                r.gradient.c0[i].into(),
            ])?;
        }
    }
    out.artifacts.push(Artifact::csv("gradient_kernel.csv", grad));
    let stability: Option<BoundStability> = (reports.len() > 1)
        .then(|| bound_stability(&reports.iter().map(|r| r.bounds).collect::<Vec<_>>()));
    #[derive(Serialize)]
    struct Doc<'a> {
        reports: &'a [KernelReport],
        stability: Option<BoundStability>,
    }
    out.artifacts.push(Artifact::json(
        "kernels.json",
        &Doc {
            reports: &reports,
            stability,
        },
    )?);
    Ok(out)
}

fn run_spde(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let r = spde_checks(&cfg.spde, tol.se_factor, tol.p_value, sub_master(cfg.seed, "spde"))?;
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("mode variance |error|/SE", r.worst_mode_z(), tol.se_factor));
    out.checks.push(Check::flag(
        "martingale problem residuals at diffusivity 1",
        r.zeroing_diffusivities.contains(&1.0),
        format!("zeroing diffusivities {:?}", r.zeroing_diffusivities),
    ));
    let min_p = r.chain_rule.points.iter().map(|p| p.p_adjusted).fold(1.0, f64::min);
    out.checks.push(Check::above("chain rule KS adjusted p", min_p, tol.p_value));
    let mut modes = CsvTable::new(&["index", "k", "predicted", "sample", "se"]);
    for m in &r.modes {
        modes.push(vec![m.index.into(), m.k.into(), m.predicted.into(), m.sample.into(), m.se.into()])?;
    }
    out.artifacts.push(Artifact::csv("mode_variance.csv", modes));
    let mut res = CsvTable::new(&["diffusivity", "time", "mean_m", "se_m", "mean_n", "se_n"]);
    for m in &r.residuals {
        res.push(vec![
            m.diffusivity.into(),
            m.time.into(),
            m.mean_m.into(),
            m.se_m.into(),
            m.mean_n.into(),
            m.se_n.into(),
        ])?;
    }
    out.artifacts.push(Artifact::csv("martingale_problem.csv", res));
    out.artifacts.push(Artifact::json("spde.json", &r)?);
    Ok(out)
}

fn converge_outcome(report: &ConvergeReport, label: &str, ks_tol: f64) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut table = CsvTable::new(&[
        "eps", "x", "ks", "p_value", "ks_midpoint", "mean_particle", "var_particle", "mean_spde", "var_spde",
    ]);
    for row in &report.rows {
        for p in &row.points {
            table.push(vec![
                row.eps.into(),
                p.x.into(),
                p.ks.into(),
                p.p_value.into(),
                p.ks_midpoint.into(),
                p.mean_particle.into(),
                p.var_particle.into(),
                p.mean_spde.into(),
                p.var_spde.into(),
            ])?;
        }
        let e = row.eps;
        out.metric(format!("calibration.eps={e}.variance"), row.calibration_variance);
        out.metric(format!("calibration.eps={e}.noise_b"), row.noise_b);
        out.metric(format!("eps={e}.max_ks"), row.max_ks());
        out.metric(format!("eps={e}.max_ks_midpoint"), row.max_ks_midpoint());
        out.seeds.insert(format!("{label} particle eps={e}"), row.particle_seeds.clone());
        out.seeds.insert(format!("{label} spde eps={e}"), row.spde_seeds.clone());
        out.event_count += row.events;
        let mut samples = CsvTable::new(&["source", "sample", "x", "value"]);
        let off = row.particle.first().map_or(0, |r| r.len() - row.points.len());
        for (i, r) in row.particle.iter().enumerate() {
            for (k, p) in row.points.iter().enumerate() {
                samples.push(vec!["particle".into(), i.into(), p.x.into(), r[off + k].into()])?;
            }
        }
        for (i, r) in row.spde.iter().enumerate() {
            for (k, p) in row.points.iter().enumerate() {
                samples.push(vec!["spde".into(), i.into(), p.x.into(), r[k].into()])?;
            }
        }
        out.artifacts.push(Artifact::csv(format!("samples_eps_{e}.csv"), samples));
    }
    out.artifacts.push(Artifact::csv(format!("{label}.csv"), table));
    out.artifacts.push(Artifact::json(format!("{label}.json"), report)?);
    out.checks.push(Check::flag(
        "KS distance decreasing in eps",
        report.monotone(ConvergeRow::max_ks),
        format!(
            "max KS by eps: {:?}",
            report.rows.iter().map(|r| (r.eps, r.max_ks())).collect::<Vec<_>>()
        ),
    ));
    if let Some(f) = report.finest() {
        out.checks.push(
            Check::at_most(format!("KS distance at eps={}", f.eps), f.max_ks(), ks_tol)
                .with_detail(format!("continuity-corrected {}", f.max_ks_midpoint())),
        );
    }
    Ok(out)
}

fn run_converge(cfg: &ExperimentConfig) -> Result<Outcome> {
    let r = converge_line(&cfg.converge, cfg.ensemble, sub_master(cfg.seed, "converge"))?;
    let mut out = converge_outcome(&r, "converge", cfg.tolerances.ks_distance)?;
    let regs: Vec<&RegularityReport> = r.rows.iter().filter_map(|r| r.regularity.as_ref()).collect();
    let spread = |f: &dyn Fn(&RegularityReport) -> f64| {
        let v: Vec<f64> = regs.iter().map(|r| f(r)).collect();
        v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let finite = regs
        .iter()
        .all(|r| r.exp_moment.is_finite() && r.spatial_c.is_finite() && r.temporal_c.is_finite());
    out.checks.push(Check::flag("regularity constants finite", finite, ""));
    for (name, s) in [
        ("exp moment", spread(&|r| r.exp_moment)),
        ("spatial increment constant", spread(&|r| r.spatial_c)),
        ("temporal increment constant", spread(&|r| r.temporal_c)),
    ] {
        out.checks.push(Check::at_most(format!("{name} spread across eps"), s, cfg.tolerances.stability));
    }
    Ok(out)
}

fn generalized_rate(cfg: &ExperimentConfig) -> Result<Generalized> {
    match cfg.model.rate_function {
        RateFunction::Generalized(g) => Ok(g),
        RateFunction::Classic => Err(Error::InvalidArgument(
            "periodic-converge needs model.rate = \"generalized\"".into(),
        )),
    }
}

fn run_periodic(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = generalized_rate(cfg)?;
    let r = converge_periodic(&cfg.converge, g, cfg.ensemble, sub_master(cfg.seed, "periodic"))?;
    let mut out = converge_outcome(&r, "periodic_converge", cfg.tolerances.ks_periodic)?;
    let identity = Generalized::new(Shape::identity(), 1.0, 0.0, 1.0)?;
    let shat = cfg.drift.shat_grid();
    let mut table = CsvTable::new(&["shape", "eps", "c0", "c1", "lambda_sup"]);
    let eps_min = cfg.drift.eps.iter().copied().fold(f64::INFINITY, f64::min);
    let reach = 30.0 / eps_min.sqrt();
    let wide: Vec<f64> = (0..=20000).map(|i| -reach + 2.0 * reach * i as f64 / 20000.0).collect();
    for (name, rate, grid) in [("identity", identity, &shat), ("configured", g, &shat), ("identity-wide", identity, &wide)] {
        let d = drift_diagnostics(rate, &cfg.drift.eps, grid)?;
        for row in &d.rows {
            table.push(vec![name.into(), row.eps.into(), row.c0.into(), row.c1.into(), row.lambda_sup.into()])?;
        }
        if name == "identity" {
            let (s0, s1) = d.spread();
            out.checks.push(Check::flag("drift constants finite", d.finite(), ""));
            out.checks.push(Check::at_most("drift c0 spread across eps", s0, cfg.tolerances.stability));
            out.checks.push(Check::at_most("drift c1 spread across eps", s1, cfg.tolerances.stability));
        }
        for row in &d.rows {
            out.metric(format!("drift.{name}.eps={}.c0", row.eps), row.c0);
            out.metric(format!("drift.{name}.eps={}.c1", row.eps), row.c1);
        }
    }
    out.artifacts.push(Artifact::csv("drift_constants.csv", table));
    Ok(out)
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.kind {
        ExperimentKind::Simulate => run_simulate(cfg),
        ExperimentKind::Stationary => run_stationary(cfg),
        ExperimentKind::VerifyGenerator => run_generator(cfg),
        ExperimentKind::VerifyMartingale => run_martingale(cfg),
        ExperimentKind::VerifyKernels => run_kernels(cfg),
        ExperimentKind::SolveSpde => run_spde(cfg),
        ExperimentKind::Converge => run_converge(cfg),
        ExperimentKind::PeriodicConverge => run_periodic(cfg),
    }
}

/// Run with the seed override taken from the environment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let env = std::env::var(SEED_ENV).ok();
    run_experiment_with(cfg, env.as_deref())
}

/// Run with an explicit seed override (the value of the override variable, if set).
pub fn run_experiment_with(cfg: &ExperimentConfig, seed_override: Option<&str>) -> Result<RunManifest> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed_override {
        cfg.seed = s.trim().parse().map_err(|_| {
            Error::Config(vec![crate::error::ConfigError::Range {
                key: SEED_ENV.into(),
                value: s.into(),
                message: "is not a nonnegative integer".into(),
            }])
        })?;
    }
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let phase = cfg.kind.name();
    let out = pool.install(|| dispatch(&cfg)).map_err(|e| e.in_phase(phase))?;
    let files = write_outputs(&out.artifacts, &cfg.out_dir).map_err(|e| e.in_phase("writing outputs"))?;
    let pass = out.checks.iter().all(|c| c.pass);
    let manifest = RunManifest {
        tool: "dasep-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed_override: seed_override.map(str::to_string),
        config: cfg.clone(),
        seeds: out.seeds,
        files,
        event_count: out.event_count,
        wall_clock_s: start.elapsed().as_secs_f64(),
        metrics: out.metrics,
        checks: out.checks,
        pass,
    };
    manifest.write(&cfg.out_dir).map_err(|e| e.in_phase("writing manifest"))?;
    Ok(manifest)
}
