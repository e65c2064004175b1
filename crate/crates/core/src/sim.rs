//! Exact continuous-time simulation.
//!
//! The engine keeps an indexed bag of eligible sites together with their
//! current jump rate. The waiting time is exponential with the total rate; the
//! jumping site is chosen by rejection sampling against the uniform bound 1,
//! which dominates every rate in both model families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Domain, Flip, HeightFunction};
use crate::model::ModelParams;
use crate::rng::UniformSource;

const RECOMPUTE_EVERY: u64 = 1 << 16;
const NOT_IN_BAG: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn flip(self) -> Flip {
        match self {
            Direction::Up => Flip::Up,
            Direction::Down => Flip::Down,
        }
    }

    pub fn increment(self) -> i64 {
        match self {
            Direction::Up => 2,
            Direction::Down => -2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub site: i64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Event(Event),
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub height: HeightFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub initial: HeightFunction,
    pub t_end: f64,
    pub events: Option<Vec<Event>>,
    pub event_count: u64,
    pub snapshots: Vec<Snapshot>,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn events(&self) -> Result<&[Event]> {
        self.events.as_deref().ok_or(Error::MissingEventLog)
    }

    /// Rebuild the height at every snapshot time from the event log.
    pub fn replay(&self) -> Result<Vec<HeightFunction>> {
        let events = self.events()?;
        let mut h = self.initial.clone();
        let mut out = Vec::with_capacity(self.snapshots.len());
        let mut k = 0;
        for snap in &self.snapshots {
            while k < events.len() && events[k].time <= snap.time {
                let e = events[k];
                let i = h.domain().index_of(e.site)?;
                if h.eligibility_at_index(i) != e.direction.flip() {
                    return Err(Error::InvalidArgument(format!(
                        "event at t={} site {} is not eligible",
                        e.time, e.site
                    )));
                }
                h.apply(i, e.direction.flip());
                k += 1;
            }
            out.push(h.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    pub record_events: bool,
}

/// Rates keyed by height, for models whose rates do not depend on the site.
#[derive(Debug, Clone)]
struct RateCache {
    lo: i64,
    down: Vec<f64>,
    up: Vec<f64>,
}

impl RateCache {
    fn new() -> Self {
        Self {
            lo: 0,
            down: Vec::new(),
            up: Vec::new(),
        }
    }

    #[inline]
    fn get(&mut self, params: &ModelParams, s: i64) -> (f64, f64) {
        let idx = s - self.lo;
        if idx >= 0 && (idx as usize) < self.up.len() {
            let i = idx as usize;
            return (self.down[i], self.up[i]);
        }
        self.grow(params, s);
        let i = (s - self.lo) as usize;
        (self.down[i], self.up[i])
    }

    fn grow(&mut self, params: &ModelParams, s: i64) {
        let (mut lo, mut hi) = if self.up.is_empty() {
            (s - 64, s + 64)
        } else {
            (self.lo, self.lo + self.up.len() as i64 - 1)
        };
        while s < lo {
            lo -= 64.max(hi - lo);
        }
        while s > hi {
            hi += 64.max(hi - lo);
        }
        let mut down = Vec::with_capacity((hi - lo + 1) as usize);
        let mut up = Vec::with_capacity((hi - lo + 1) as usize);
        for v in lo..=hi {
            let (d, u) = params.rates_at(v, 0);
            down.push(d);
            up.push(u);
        }
        self.lo = lo;
        self.down = down;
        self.up = up;
    }
}

/// Incremental Gillespie engine for one trajectory.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ModelParams,
    h: HeightFunction,
    clock: f64,
    pending: Option<f64>,
    bag: Vec<u32>,
    pos: Vec<u32>,
    rate: Vec<f64>,
    dir: Vec<Flip>,
    total: f64,
    since_recompute: u64,
    event_count: u64,
    cache: Option<RateCache>,
}

impl Simulator {
    pub fn new(initial: HeightFunction, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        if initial.domain() != &params.domain {
            return Err(Error::InvalidArgument(
                "initial height and model parameters use different domains".into(),
            ));
        }
        let n = initial.values().len();
        let mut sim = Self {
            params: *params,
            h: initial,
            clock: 0.0,
            pending: None,
            bag: Vec::with_capacity(n),
            pos: vec![NOT_IN_BAG; n],
            rate: vec![0.0; n],
            dir: vec![Flip::None; n],
            total: 0.0,
            since_recompute: 0,
            event_count: 0,
            cache: params.rates_site_independent().then(RateCache::new),
        };
        for i in 0..n {
            sim.refresh(i);
        }
        sim.recompute_total();
        Ok(sim)
    }

    pub fn height(&self) -> &HeightFunction {
        &self.h
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    pub fn total_rate(&self) -> f64 {
        self.total
    }

    pub fn eligible_sites(&self) -> usize {
        self.bag.len()
    }

    #[inline]
    fn site_rates(&mut self, i: usize) -> (f64, f64) {
        let s = self.h.at_index(i);
        match &mut self.cache {
            Some(c) => c.get(&self.params, s),
            None => self.params.rates_at(s, self.h.domain().site(i)),
        }
    }

    #[inline]
    fn refresh(&mut self, i: usize) {
        let flip = self.h.eligibility_at_index(i);
        let r = match flip {
            Flip::None => 0.0,
            Flip::Up => self.site_rates(i).1,
            Flip::Down => self.site_rates(i).0,
        };
        self.total += r - self.rate[i];
        self.rate[i] = r;
        self.dir[i] = flip;
        let in_bag = self.pos[i] != NOT_IN_BAG;
        match (flip != Flip::None, in_bag) {
            (true, false) => {
                self.pos[i] = self.bag.len() as u32;
                self.bag.push(i as u32);
            }
            (false, true) => {
                let p = self.pos[i] as usize;
                let last = *self.bag.last().expect("bag holds i");
                self.bag.swap_remove(p);
                if last as usize != i {
                    self.pos[last as usize] = p as u32;
                }
                self.pos[i] = NOT_IN_BAG;
            }
            _ => {}
        }
    }

    fn recompute_total(&mut self) {
        self.total = self.bag.iter().map(|&i| self.rate[i as usize]).sum();
        self.since_recompute = 0;
    }

    fn neighbour_indices(&self, i: usize) -> [Option<usize>; 2] {
        let n = self.pos.len();
        match self.h.domain() {
            Domain::Ring { .. } => [Some((i + n - 1) % n), Some((i + 1) % n)],
            Domain::LineWindow { .. } => [i.checked_sub(1), (i + 1 < n).then_some(i + 1)],
        }
    }

    /// Choose a site with probability proportional to its rate.
    fn select<R: UniformSource + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.bag.len();
        loop {
            let j = ((rng.uniform() * n as f64) as usize).min(n - 1);
            let i = self.bag[j] as usize;
            if rng.uniform() <= self.rate[i] {
                return i;
            }
        }
    }

    fn fire(&mut self, i: usize, time: f64) -> Event {
        let flip = self.dir[i];
        self.h.apply(i, flip);
        self.refresh(i);
        for j in self.neighbour_indices(i).into_iter().flatten() {
            if j != i {
                self.refresh(j);
            }
        }
        self.event_count += 1;
        self.since_recompute += 1;
        if self.since_recompute >= RECOMPUTE_EVERY {
            self.recompute_total();
        }
        Event {
            time,
            site: self.h.domain().site(i),
            direction: match flip {
                Flip::Up => Direction::Up,
                Flip::Down => Direction::Down,
                Flip::None => unreachable!("bag only holds eligible sites"),
            },
        }
    }

    /// Run until `t`, applying every event with time `<= t`.
    pub fn advance_to<R, F>(&mut self, t: f64, rng: &mut R, mut on_event: F)
    where
        R: UniformSource + ?Sized,
        F: FnMut(&Event, &HeightFunction),
    {
        loop {
            let next = match self.pending {
                Some(tn) => tn,
                None => {
                    if self.bag.is_empty() {
                        self.clock = self.clock.max(t);
                        return;
                    }
                    let tn = self.clock - rng.uniform().ln() / self.total;
                    self.pending = Some(tn);
                    tn
                }
            };
            if next > t {
                self.clock = self.clock.max(t);
                return;
            }
            self.pending = None;
            self.clock = next;
            let i = self.select(rng);
            let e = self.fire(i, next);
            on_event(&e, &self.h);
        }
    }

    /// Apply the next event regardless of time.
    pub fn step<R: UniformSource + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        let mut out = StepOutcome::Frozen;
        if self.bag.is_empty() && self.pending.is_none() {
            return out;
        }
        let next = match self.pending.take() {
            Some(t) => t,
            None => self.clock - rng.uniform().ln() / self.total,
        };
        self.clock = next;
        let i = self.select(rng);
        out = StepOutcome::Event(self.fire(i, next));
        out
    }
}

/// Sum over eligible sites of their jump rate.
pub fn total_event_rate(params: &ModelParams, h: &HeightFunction) -> f64 {
    (0..h.values().len())
        .map(|i| {
            let s = h.at_index(i);
            let (d, u) = params.rates_at(s, h.domain().site(i));
            match h.eligibility_at_index(i) {
                Flip::Up => u,
                Flip::Down => d,
                Flip::None => 0.0,
            }
        })
        .sum()
}

/// One exact step by linear scan: exponential waiting time from the total rate,
/// then inverse-CDF site selection. Consumes exactly two uniforms per event.
pub fn step_event<R: UniformSource + ?Sized>(
    h: &mut HeightFunction,
    params: &ModelParams,
    clock: f64,
    rng: &mut R,
) -> StepOutcome {
    let n = h.values().len();
    let mut rates = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        let s = h.at_index(i);
        let (d, u) = params.rates_at(s, h.domain().site(i));
        let r = match h.eligibility_at_index(i) {
            Flip::Up => u,
            Flip::Down => d,
            Flip::None => 0.0,
        };
        total += r;
        rates.push(r);
    }
    if total == 0.0 {
        return StepOutcome::Frozen;
    }
    let time = clock - rng.uniform().ln() / total;
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &r) in rates.iter().enumerate() {
        if r > 0.0 {
            acc += r;
            chosen = Some(i);
            if acc >= target {
                break;
            }
        }
    }
    let i = chosen.expect("positive total rate");
    let flip = h.eligibility_at_index(i);
    h.apply(i, flip);
    StepOutcome::Event(Event {
        time,
        site: h.domain().site(i),
        direction: if flip == Flip::Up {
            Direction::Up
        } else {
            Direction::Down
        },
    })
}

/// Simulate on `[0, t_end]`, recording snapshots at `sample_times`.
pub fn simulate<R: UniformSource + ?Sized>(
    initial: HeightFunction,
    params: &ModelParams,
    t_end: f64,
    sample_times: &[f64],
    rng: &mut R,
    opts: SimOptions,
) -> Result<Trajectory> {
    if !(t_end >= 0.0) {
        return Err(Error::NegativeTime(t_end));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("sample times must be sorted".into()));
    }
    if let Some(&t) = sample_times.iter().find(|&&t| !(0.0..=t_end).contains(&t)) {
        return Err(Error::InvalidArgument(format!(
            "sample time {t} outside [0, {t_end}]"
        )));
    }
    let mut sim = Simulator::new(initial.clone(), params)?;
    let mut events = opts.record_events.then(Vec::new);
    let mut snapshots = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        sim.advance_to(t, rng, |e, _| {
            if let Some(v) = events.as_mut() {
                v.push(*e)
            }
        });
        snapshots.push(Snapshot {
            time: t,
            height: sim.height().clone(),
        });
    }
    sim.advance_to(t_end, rng, |e, _| {
        if let Some(v) = events.as_mut() {
            v.push(*e)
        }
    });
    Ok(Trajectory {
        params: *params,
        initial,
        t_end,
        events,
        event_count: sim.event_count(),
        snapshots,
        seed: None,
    })
}

/// [`simulate`] on the trajectory stream derived from `(master, index)`.
pub fn simulate_seeded(
    initial: HeightFunction,
    params: &ModelParams,
    t_end: f64,
    sample_times: &[f64],
    master: u64,
    index: u64,
    opts: SimOptions,
) -> Result<Trajectory> {
    let seed = crate::rng::derive_seed(master, index);
    let mut rng = crate::rng::from_seed(seed);
    let mut traj = simulate(initial, params, t_end, sample_times, &mut rng, opts)?;
    traj.seed = Some(seed);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{new_height, Profile};
    use crate::rng::stream;
    use proptest::prelude::*;

    struct Scripted(Vec<f64>, usize);

    impl UniformSource for Scripted {
        fn uniform(&mut self) -> f64 {
            let u = self.0[self.1 % self.0.len()];
            self.1 += 1;
            u
        }
    }

    fn ring(n: usize, w: i64, eps: f64) -> (HeightFunction, ModelParams) {
        let d = Domain::ring(n, w).unwrap();
        (
            new_height(d, Profile::FlatAlternating).unwrap(),
            ModelParams::classic(eps, 1.0, d).unwrap(),
        )
    }

    #[test]
    fn max_slope_ring_is_frozen() {
        let d = Domain::ring(16, 16).unwrap();
        let mut h = new_height(d, Profile::MaxSlope).unwrap();
        let p = ModelParams::classic(0.1, 1.0, d).unwrap();
        let mut r = stream(1, 0);
        assert_eq!(step_event(&mut h, &p, 0.0, &mut r), StepOutcome::Frozen);
        let mut sim = Simulator::new(h.clone(), &p).unwrap();
        assert_eq!(sim.step(&mut r), StepOutcome::Frozen);
        let tr = simulate(h.clone(), &p, 5.0, &[0.0, 1.0, 5.0], &mut r, SimOptions::default())
            .unwrap();
        assert!(tr.snapshots.iter().all(|s| s.height == h));
    }

    #[test]
    fn single_site_inverse_cdf() {
        // Window 0..2 with a minimum at site 1 and frozen ends.
        let d = Domain::line(0, 2).unwrap();
        let mut h = HeightFunction::from_values(d, vec![1, 0, 1]).unwrap();
        let p = ModelParams::classic(0.7, 1.0, d).unwrap();
        let r = p.rates_at(0, 1).1;
        let u = 0.3;
        let mut rng = Scripted(vec![u], 0);
        match step_event(&mut h, &p, 2.0, &mut rng) {
            StepOutcome::Event(e) => {
                assert!((e.time - (2.0 - u.ln() / r)).abs() < 1e-15);
                assert_eq!(e.site, 1);
                assert_eq!(e.direction, Direction::Up);
            }
            StepOutcome::Frozen => panic!("site 1 is eligible"),
        }
        assert_eq!(h.values(), &[1, 2, 1]);
        let h0 = HeightFunction::from_values(d, vec![1, 0, 1]).unwrap();
        let mut sim = Simulator::new(h0, &p).unwrap();
        let mut rng = Scripted(vec![u], 0);
        match sim.step(&mut rng) {
            StepOutcome::Event(e) => {
                assert!((e.time + u.ln() / r).abs() < 1e-15);
                assert_eq!(e.site, 1);
            }
            StepOutcome::Frozen => panic!(),
        }
    }

    #[test]
    fn zero_horizon_keeps_initial() {
        let (h, p) = ring(32, 0, 0.1);
        let mut r = stream(3, 0);
        let tr = simulate(h.clone(), &p, 0.0, &[0.0], &mut r, SimOptions::default()).unwrap();
        assert_eq!(tr.snapshots.len(), 1);
        assert_eq!(tr.snapshots[0].height, h);
        assert_eq!(tr.event_count, 0);
    }

    #[test]
    fn incremental_total_matches_scan() {
        let (h, p) = ring(64, 4, 0.3);
        let mut sim = Simulator::new(h, &p).unwrap();
        let mut r = stream(9, 9);
        for _ in 0..5000 {
            sim.step(&mut r);
            let scan = total_event_rate(&p, sim.height());
            assert!((sim.total_rate() - scan).abs() < 1e-9);
        }
    }

    #[test]
    fn generalized_site_dependent_total_matches_scan() {
        use crate::model::{Generalized, RateFunction, Shape};
        let d = Domain::ring(30, 6).unwrap();
        let g = Generalized::new(
            Shape::LinearCos {
                slope: 1.0,
                amplitude: 0.5,
            },
            1.0,
            0.0,
            1.0,
        )
        .unwrap();
        let p = ModelParams::new(0.2, 1.0, RateFunction::Generalized(g), d).unwrap();
        let h = new_height(d, Profile::FlatAlternating).unwrap();
        let mut sim = Simulator::new(h, &p).unwrap();
        let mut r = stream(2, 2);
        for _ in 0..3000 {
            sim.step(&mut r);
            assert!((sim.total_rate() - total_event_rate(&p, sim.height())).abs() < 1e-9);
            sim.height().check_invariants().unwrap();
        }
    }

    #[test]
    fn replay_reproduces_snapshots() {
        let d = Domain::line(-40, 40).unwrap();
        let h = new_height(d, Profile::Wedge).unwrap();
        let p = ModelParams::classic(0.2, 1.0, d).unwrap();
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let tr = simulate_seeded(h, &p, 10.0, &times, 5, 1, SimOptions { record_events: true })
            .unwrap();
        let rebuilt = tr.replay().unwrap();
        for (s, r) in tr.snapshots.iter().zip(&rebuilt) {
            assert_eq!(&s.height, r);
        }
        let ev = tr.events().unwrap();
        assert!(ev.windows(2).all(|w| w[0].time < w[1].time));
        assert_eq!(ev.len() as u64, tr.event_count);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let (h, p) = ring(48, 0, 0.1);
        let times = [1.0, 2.0, 3.0];
        let opts = SimOptions { record_events: true };
        let a = simulate_seeded(h.clone(), &p, 3.0, &times, 11, 4, opts).unwrap();
        let b = simulate_seeded(h.clone(), &p, 3.0, &times, 11, 4, opts).unwrap();
        let c = simulate_seeded(h, &p, 3.0, &times, 11, 5, opts).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn sampling_does_not_perturb_the_path() {
        let (h, p) = ring(40, 0, 0.2);
        let opts = SimOptions { record_events: true };
        let a = simulate_seeded(h.clone(), &p, 4.0, &[], 3, 3, opts).unwrap();
        let b = simulate_seeded(h, &p, 4.0, &[0.5, 1.0, 3.999], 3, 3, opts).unwrap();
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn missing_log_is_reported() {
        let (h, p) = ring(8, 0, 0.2);
        let tr = simulate_seeded(h, &p, 1.0, &[1.0], 1, 1, SimOptions::default()).unwrap();
        assert!(matches!(tr.replay(), Err(Error::MissingEventLog)));
    }

    #[test]
    fn event_count_is_bounded() {
        let n = 64usize;
        let t = 20.0;
        let (h, p) = ring(n, 0, 0.1);
        let mut total = 0.0;
        let reps = 20;
        for k in 0..reps {
            let tr = simulate_seeded(h.clone(), &p, t, &[], 77, k, SimOptions::default()).unwrap();
            total += tr.event_count as f64;
        }
        let mean = total / reps as f64;
        let bound = 2.0 * n as f64 * t;
        assert!(mean <= bound + 5.0 * (bound / reps as f64).sqrt());
    }

    #[test]
    fn alpha_height_shift_gives_identical_paths() {
        // log_q alpha = 3, so (alpha, s0) and (1, s0 - 3) share every rate.
        let eps = 0.25;
        let d = Domain::line(-30, 30).unwrap();
        let alpha = (-3.0 * eps as f64).exp();
        let pa = ModelParams::classic(eps, alpha, d).unwrap();
        let p1 = ModelParams::classic(eps, 1.0, d).unwrap();
        let ha = new_height(d, Profile::Wedge).unwrap();
        let h1 = HeightFunction::from_values(d, ha.values().iter().map(|v| v - 3).collect())
            .unwrap();
        let opts = SimOptions { record_events: true };
        let a = simulate_seeded(ha, &pa, 15.0, &[15.0], 8, 0, opts).unwrap();
        let b = simulate_seeded(h1, &p1, 15.0, &[15.0], 8, 0, opts).unwrap();
        let ea = a.events.unwrap();
        let eb = b.events.unwrap();
        assert_eq!(ea.len(), eb.len());
        for (x, y) in ea.iter().zip(&eb) {
            assert_eq!((x.site, x.direction), (y.site, y.direction));
            assert!((x.time - y.time).abs() <= 1e-9 * (1.0 + x.time));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn snapshots_keep_invariants(seed in any::<u64>()) {
            let d = Domain::ring(24, 4).unwrap();
            let h = new_height(d, Profile::FlatAlternating).unwrap();
            let p = ModelParams::classic(0.3, 1.5, d).unwrap();
            let times = [0.5, 1.0, 2.0];
            let tr = simulate_seeded(h, &p, 2.0, &times, seed, 0, SimOptions::default()).unwrap();
            for s in &tr.snapshots {
                prop_assert!(s.height.check_invariants().is_ok());
                prop_assert_eq!(s.height.get(24).unwrap() - s.height.get(0).unwrap(), 4);
            }
        }
    }
}
