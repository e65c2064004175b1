//! Lattice domains and solid-on-solid height functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Boundary sites never flip.
    Frozen,
    /// The missing outer neighbour mirrors the inner one, `s(x_min - 1) = s(x_min + 1)`.
    ReflectingBuffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Periodic lattice: `s(x + m N) = s(x) + winding * m`.
    Ring { period: usize, winding: i64 },
    /// Finite window `x_min..=x_max` of the full line.
    LineWindow {
        x_min: i64,
        x_max: i64,
        boundary: Boundary,
    },
}

impl Domain {
    pub fn ring(period: usize, winding: i64) -> Result<Self> {
        let d = Domain::Ring { period, winding };
        d.validate()?;
        Ok(d)
    }

    pub fn line(x_min: i64, x_max: i64) -> Result<Self> {
        let d = Domain::LineWindow {
            x_min,
            x_max,
            boundary: Boundary::Frozen,
        };
        d.validate()?;
        Ok(d)
    }

    /// Symmetric frozen window `-half..=half`.
    pub fn centered_line(half: i64) -> Result<Self> {
        Self::line(-half, half)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Ring { period, winding } => {
                if period == 0 {
                    return Err(Error::InvalidDomain("ring period must be positive".into()));
                }
                if (winding - period as i64).rem_euclid(2) != 0 {
                    return Err(Error::ParityViolation { period, winding });
                }
                if winding.unsigned_abs() as usize > period {
                    return Err(Error::InvalidDomain(format!(
                        "|winding| = {} exceeds period {period}",
                        winding.abs()
                    )));
                }
                Ok(())
            }
            Domain::LineWindow { x_min, x_max, .. } => {
                if x_min >= x_max {
                    return Err(Error::InvalidDomain(format!(
                        "window requires x_min < x_max, got {x_min}..{x_max}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Domain::Ring { period, .. } => period,
            Domain::LineWindow { x_min, x_max, .. } => (x_max - x_min + 1) as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lattice coordinate of storage index `i`.
    pub fn site(&self, i: usize) -> i64 {
        match *self {
            Domain::Ring { .. } => i as i64,
            Domain::LineWindow { x_min, .. } => x_min + i as i64,
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    /// Storage index of site `x`. Ring sites wrap; window sites must lie inside.
    pub fn index_of(&self, x: i64) -> Result<usize> {
        match *self {
            Domain::Ring { period, .. } => Ok(x.rem_euclid(period as i64) as usize),
            Domain::LineWindow { x_min, x_max, .. } => {
                if x < x_min || x > x_max {
                    Err(Error::OutOfDomain { site: x })
                } else {
                    Ok((x - x_min) as usize)
                }
            }
        }
    }

    pub fn winding(&self) -> i64 {
        match *self {
            Domain::Ring { winding, .. } => winding,
            Domain::LineWindow { .. } => 0,
        }
    }

    /// One-line metadata used in CSV header comments.
    pub fn describe(&self) -> String {
        match *self {
            Domain::Ring { period, winding } => format!("ring period={period} winding={winding}"),
            Domain::LineWindow {
                x_min,
                x_max,
                boundary,
            } => format!("line x_min={x_min} x_max={x_max} boundary={boundary:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    /// `s(x) = |x|`; on a ring, the tent `min(x, N - x)`.
    Wedge,
    /// Flattest profile with the domain's winding, starting `0, 1, ...`.
    FlatAlternating,
    /// Every step goes the same way.
    MaxSlope,
    Custom(Vec<i64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flip {
    Up,
    Down,
    None,
}

/// Classify a site from its neighbourhood `(s(x-1), s(x), s(x+1))`.
#[inline]
pub fn classify(left: i64, center: i64, right: i64) -> Flip {
    if center < left && center < right {
        Flip::Up
    } else if center > left && center > right {
        Flip::Down
    } else {
        Flip::None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightFunction {
    domain: Domain,
    values: Vec<i64>,
}

impl HeightFunction {
    /// Validating constructor from raw values (one period for rings).
    pub fn from_values(domain: Domain, values: Vec<i64>) -> Result<Self> {
        domain.validate()?;
        if values.len() != domain.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} heights, got {}",
                domain.len(),
                values.len()
            )));
        }
        for (i, w) in values.windows(2).enumerate() {
            let inc = w[1] - w[0];
            if inc.abs() != 1 {
                return Err(Error::SlopeViolation {
                    left: domain.site(i),
                    right: domain.site(i + 1),
                    increment: inc,
                });
            }
        }
        if let Domain::Ring { period, winding } = domain {
            let last = values[period - 1];
            let wrapped = values[0] + winding;
            let gain = if period == 1 { winding } else { wrapped - last };
            if gain.abs() != 1 {
                // The profile's own winding is ambiguous when the wrap step is bad;
                // report what a consistent closure would need.
                let found = last + 1 - values[0];
                let found_alt = last - 1 - values[0];
                let found = if (found - winding).abs() <= (found_alt - winding).abs() {
                    found
                } else {
                    found_alt
                };
                return Err(Error::WindingMismatch {
                    expected: winding,
                    found,
                });
            }
        }
        Ok(Self { domain, values })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    /// Height at an arbitrary lattice site; rings use the winding extension.
    pub fn get(&self, x: i64) -> Result<i64> {
        match self.domain {
            Domain::Ring { period, winding } => {
                let n = period as i64;
                let m = x.div_euclid(n);
                Ok(self.values[x.rem_euclid(n) as usize] + winding * m)
            }
            Domain::LineWindow { .. } => Ok(self.values[self.domain.index_of(x)?]),
        }
    }

    #[inline]
    pub fn at_index(&self, i: usize) -> i64 {
        self.values[i]
    }

    /// Neighbour heights `(s(x-1), s(x+1))` of storage index `i`, or `None` at a
    /// frozen window boundary.
    #[inline]
    pub fn neighbours(&self, i: usize) -> Option<(i64, i64)> {
        let v = &self.values;
        match self.domain {
            Domain::Ring { period, winding } => {
                let left = if i == 0 { v[period - 1] - winding } else { v[i - 1] };
                let right = if i + 1 == period { v[0] + winding } else { v[i + 1] };
                Some((left, right))
            }
            Domain::LineWindow { boundary, .. } => {
                let last = v.len() - 1;
                match (i == 0, i == last, boundary) {
                    (false, false, _) => Some((v[i - 1], v[i + 1])),
                    (_, _, Boundary::Frozen) => None,
                    (true, _, Boundary::ReflectingBuffer) => Some((v[1], v[1])),
                    (_, true, Boundary::ReflectingBuffer) => Some((v[last - 1], v[last - 1])),
                }
            }
        }
    }

    #[inline]
    pub fn eligibility_at_index(&self, i: usize) -> Flip {
        match self.neighbours(i) {
            Some((l, r)) => classify(l, self.values[i], r),
            None => Flip::None,
        }
    }

    /// Apply a flip at storage index `i`: `Up` adds 2, `Down` subtracts 2.
    #[inline]
    pub fn apply(&mut self, i: usize, flip: Flip) {
        debug_assert_eq!(self.eligibility_at_index(i), flip);
        match flip {
            Flip::Up => self.values[i] += 2,
            Flip::Down => self.values[i] -= 2,
            Flip::None => {}
        }
    }

    /// Re-run every structural check; used by property tests.
    pub fn check_invariants(&self) -> Result<()> {
        Self::from_values(self.domain, self.values.clone()).map(|_| ())
    }

    /// Number of sites with a strict local extremum.
    pub fn eligible_count(&self) -> usize {
        (0..self.values.len())
            .filter(|&i| self.eligibility_at_index(i) != Flip::None)
            .count()
    }
}

pub fn new_height(domain: Domain, profile: Profile) -> Result<HeightFunction> {
    domain.validate()?;
    let n = domain.len();
    let values: Vec<i64> = match (&profile, domain) {
        (Profile::Wedge, Domain::LineWindow { .. }) => domain.sites().map(i64::abs).collect(),
        (Profile::Wedge, Domain::Ring { period, winding }) => {
            if winding != 0 {
                return Err(Error::WindingMismatch {
                    expected: winding,
                    found: 0,
                });
            }
            (0..period as i64).map(|x| x.min(period as i64 - x)).collect()
        }
        (Profile::FlatAlternating, Domain::LineWindow { .. }) => {
            domain.sites().map(|x| x.rem_euclid(2)).collect()
        }
        (Profile::FlatAlternating, Domain::Ring { period, winding }) => {
            // Track the line winding * x / N from below, stepping up when at or under it.
            let mut v = Vec::with_capacity(period);
            let mut s = 0i64;
            for x in 0..period as i64 {
                v.push(s);
                let target = winding as f64 * (x + 1) as f64 / period as f64;
                s += if (s as f64) <= target { 1 } else { -1 };
            }
            v
        }
        (Profile::MaxSlope, Domain::LineWindow { .. }) => domain.sites().collect(),
        (Profile::MaxSlope, Domain::Ring { period, winding }) => {
            let n = period as i64;
            if winding.abs() != n {
                return Err(Error::WindingMismatch {
                    expected: winding,
                    found: n,
                });
            }
            (0..n).map(|x| x * winding.signum()).collect()
        }
        (Profile::Custom(v), _) => {
            if v.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "custom profile has {} values, domain has {n} sites",
                    v.len()
                )));
            }
            v.clone()
        }
    };
    HeightFunction::from_values(domain, values)
}

/// Eligibility of site `x` for an up or down flip.
pub fn flip_eligibility(h: &HeightFunction, x: i64) -> Result<Flip> {
    let i = h.domain.index_of(x)?;
    Ok(h.eligibility_at_index(i))
}

/// `∇⁻s(x) = s(x) - s(x-1)` and `∇⁺s(x) = s(x+1) - s(x)`.
pub fn slopes(left: i64, center: i64, right: i64) -> (i64, i64) {
    (center - left, right - center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_ring_flat_profile() {
        let h = new_height(Domain::ring(4, 0).unwrap(), Profile::FlatAlternating).unwrap();
        assert_eq!(h.values(), &[0, 1, 0, 1]);
    }

    #[test]
    fn odd_ring_with_zero_winding_is_rejected() {
        assert!(matches!(
            Domain::ring(3, 0),
            Err(Error::ParityViolation { period: 3, winding: 0 })
        ));
    }

    #[test]
    fn wedge_on_window() {
        let h = new_height(Domain::line(-2, 2).unwrap(), Profile::Wedge).unwrap();
        assert_eq!(h.values(), &[2, 1, 0, 1, 2]);
    }

    #[test]
    fn custom_profile_errors() {
        let d = Domain::line(0, 3).unwrap();
        assert!(matches!(
            new_height(d, Profile::Custom(vec![0, 1, 3, 2])),
            Err(Error::SlopeViolation { .. })
        ));
        let ring = Domain::ring(4, 2).unwrap();
        assert!(matches!(
            new_height(ring, Profile::Custom(vec![0, 1, 0, -1])),
            Err(Error::WindingMismatch { expected: 2, .. })
        ));
        assert!(new_height(ring, Profile::Custom(vec![0, 1, 2, 1])).is_ok());
        assert!(matches!(
            new_height(ring, Profile::MaxSlope),
            Err(Error::WindingMismatch { .. })
        ));
    }

    #[test]
    fn window_requires_increasing_bounds() {
        assert!(matches!(Domain::line(3, 3), Err(Error::InvalidDomain(_))));
        assert!(matches!(Domain::ring(4, 6), Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn neighbourhood_classification() {
        assert_eq!(classify(1, 0, 1), Flip::Up);
        assert_eq!(classify(0, 1, 0), Flip::Down);
        assert_eq!(classify(0, 1, 2), Flip::None);
        assert_eq!(classify(2, 1, 0), Flip::None);
    }

    #[test]
    fn ring_wraps_with_winding() {
        let h = new_height(Domain::ring(4, 2).unwrap(), Profile::Custom(vec![0, 1, 2, 1]))
            .unwrap();
        assert_eq!(h.get(4).unwrap(), 2);
        assert_eq!(h.get(-1).unwrap(), -1);
        assert_eq!(h.get(7).unwrap(), 3);
        // site 0: neighbours -1 and 1 -> slope
        assert_eq!(flip_eligibility(&h, 0).unwrap(), Flip::None);
        assert_eq!(flip_eligibility(&h, 2).unwrap(), Flip::Down);
        assert_eq!(flip_eligibility(&h, 3).unwrap(), Flip::Up);
    }

    #[test]
    fn frozen_boundaries_and_outside_sites() {
        let h = new_height(Domain::line(-2, 2).unwrap(), Profile::FlatAlternating).unwrap();
        assert_eq!(flip_eligibility(&h, -2).unwrap(), Flip::None);
        assert_eq!(flip_eligibility(&h, 2).unwrap(), Flip::None);
        assert!(matches!(
            flip_eligibility(&h, 3),
            Err(Error::OutOfDomain { site: 3 })
        ));
    }

    #[test]
    fn reflecting_boundary_mirrors_inner_neighbour() {
        let d = Domain::LineWindow {
            x_min: 0,
            x_max: 3,
            boundary: Boundary::ReflectingBuffer,
        };
        let h = HeightFunction::from_values(d, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(flip_eligibility(&h, 0).unwrap(), Flip::Up);
        assert_eq!(flip_eligibility(&h, 3).unwrap(), Flip::Down);
    }

    #[test]
    fn max_slope_ring_has_no_eligible_site() {
        for n in 1..20usize {
            for w in [n as i64, -(n as i64)] {
                let h = new_height(Domain::ring(n, w).unwrap(), Profile::MaxSlope).unwrap();
                assert_eq!(h.eligible_count(), 0);
            }
        }
    }

    #[test]
    fn eligibility_matches_slope_indicator_products() {
        // Exhaustive over the four slope patterns.
        for dm in [-1i64, 1] {
            for dp in [-1i64, 1] {
                let (l, c, r) = (0 - dm, 0, dp);
                let (gm, gp) = slopes(l, c, r);
                assert_eq!((gm, gp), (dm, dp));
                let up = (1 - gm) * (1 + gp) / 4;
                let down = (1 + gm) * (1 - gp) / 4;
                let f = classify(l, c, r);
                assert_eq!(up == 1, f == Flip::Up);
                assert_eq!(down == 1, f == Flip::Down);
                assert!(up + down <= 1);
            }
        }
    }

    proptest! {
        #[test]
        fn flat_ring_profile_is_valid(n in 1usize..200, frac in 0.0f64..=1.0) {
            let k = (frac * n as f64).round() as i64;
            let w = 2 * k - n as i64;
            let h = new_height(Domain::ring(n, w).unwrap(), Profile::FlatAlternating).unwrap();
            prop_assert!(h.check_invariants().is_ok());
        }

        #[test]
        fn flips_preserve_solid_on_solid(steps in proptest::collection::vec(0usize..64, 1..200)) {
            let mut h = new_height(Domain::ring(64, 0).unwrap(), Profile::FlatAlternating).unwrap();
            for i in steps {
                let f = h.eligibility_at_index(i);
                h.apply(i, f);
                prop_assert!(h.check_invariants().is_ok());
            }
        }
    }
}
