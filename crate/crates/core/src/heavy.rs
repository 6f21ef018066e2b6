//! Supports of norming functionals all of whose coordinates stay above a
//! threshold.
//!
//! A functional's coordinate at a leaf is the product of the weights on the
//! path down to it. Scaling by a level weight only shrinks coordinates, so
//! any subtree of a heavy functional is itself heavy once the scaling above
//! it is dropped. The closure below therefore finds every heavy coefficient
//! profile on a window: start from unit leaves, repeatedly combine profiles
//! whose scaled coordinates still clear the threshold, stop when nothing new
//! appears.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::Error;
use crate::families::{FeedState, FiniteSet, Index, MinAutomaton};
use crate::spec::{SpaceSpec, SplitMode};

/// Window lengths beyond this are refused; profile counts grow fast.
const HEAVY_WINDOW_CAP: Index = 12;
const HEAVY_STEP_BUDGET: u64 = 10_000_000;

#[derive(Clone, Debug)]
pub struct HeavySupports {
    /// Distinct supports of heavy functionals, sorted.
    pub supports: Vec<FiniteSet>,
    /// Distinct heavy coefficient profiles behind them.
    pub profiles: usize,
    /// Heavy functionals counted with signs: each profile on `s` points
    /// admits `2^s` sign patterns, all realized by flipping leaves.
    /// Saturates at `u64::MAX`.
    pub signed_count: u64,
    /// False when a cap stopped the closure early; the supports listed are
    /// then a lower approximation.
    pub complete: bool,
}

#[derive(Clone)]
struct Profile {
    coeffs: BTreeMap<Index, BigRational>,
    mask: u16,
    min: Index,
    max: Index,
    /// Smallest coordinate, for threshold prefiltering.
    floor: BigRational,
}

impl Profile {
    fn new(coeffs: BTreeMap<Index, BigRational>) -> Self {
        let mask = coeffs.keys().fold(0u16, |m, i| m | (1 << (i - 1)));
        let min = *coeffs.keys().next().unwrap();
        let max = *coeffs.keys().next_back().unwrap();
        let floor = coeffs.values().min().unwrap().clone();
        Profile { coeffs, mask, min, max, floor }
    }
}

struct Closure {
    seen: HashSet<BTreeMap<Index, BigRational>>,
    steps: u64,
    complete: bool,
    max_profiles: usize,
}

impl Closure {
    fn admit(&mut self, coeffs: BTreeMap<Index, BigRational>, fresh: &mut Vec<Profile>) {
        if self.seen.contains(&coeffs) {
            return;
        }
        if self.seen.len() >= self.max_profiles {
            self.complete = false;
            return;
        }
        self.seen.insert(coeffs.clone());
        fresh.push(Profile::new(coeffs));
    }

    /// Extends a partial combination part by part, minima strictly
    /// increasing, and records every union of two or more parts. Parts were
    /// prefiltered, so their scaled coordinates all clear the threshold and
    /// no further check is needed here.
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &mut self,
        profiles: &[Profile],
        cands: &[usize],
        aut: &MinAutomaton<'_>,
        mode: SplitMode,
        theta: &BigRational,
        union: &mut BTreeMap<Index, BigRational>,
        mask: u16,
        last_min: Index,
        max_sup: Index,
        state: &FeedState,
        count: u32,
        fresh: &mut Vec<Profile>,
    ) {
        for &ci in cands {
            if !self.complete {
                return;
            }
            let q = &profiles[ci];
            if q.min <= last_min {
                continue;
            }
            let fits = match mode {
                SplitMode::Admissible => q.min > max_sup,
                SplitMode::Allowable => q.mask & mask == 0,
            };
            if !fits {
                continue;
            }
            self.steps += 1;
            if self.steps > HEAVY_STEP_BUDGET {
                self.complete = false;
                return;
            }
            let Some(st2) = aut.feed(state, q.min) else { continue };
            for (i, c) in &q.coeffs {
                union.insert(*i, c.clone());
            }
            if count + 1 >= 2 {
                let combined: BTreeMap<Index, BigRational> =
                    union.iter().map(|(i, c)| (*i, theta * c)).collect();
                self.admit(combined, fresh);
            }
            if self.complete {
                self.dfs(
                    profiles,
                    cands,
                    aut,
                    mode,
                    theta,
                    union,
                    mask | q.mask,
                    q.min,
                    max_sup.max(q.max),
                    &st2,
                    count + 1,
                    fresh,
                );
            }
            for i in q.coeffs.keys().copied().collect::<Vec<_>>() {
                union.remove(&i);
            }
        }
    }
}

/// Enumerates supports of functionals on the window `1..=window` whose
/// coordinates all exceed `tau`. The closure stops early (reported via
/// `complete`) once it holds `max_profiles` profiles or runs out of steps;
/// the supports found so far are still genuine.
pub fn enumerate_heavy_supports(
    spec: &SpaceSpec,
    window: Index,
    tau: &BigRational,
    max_profiles: usize,
) -> Result<HeavySupports, Error> {
    if window == 0 {
        return Err(Error::bad_input("window must be nonempty"));
    }
    if window > HEAVY_WINDOW_CAP {
        return Err(Error::resource("heavy-support window", HEAVY_WINDOW_CAP as u64));
    }
    if tau <= &BigRational::zero() {
        return Err(Error::bad_input(
            "threshold must be positive, otherwise coordinate products never bottom out",
        ));
    }

    let whole = FiniteSet::new((1..=window).collect()).unwrap();
    let levels = spec.levels_for(&whole);
    let one = BigRational::one();

    let mut cl = Closure {
        seen: HashSet::new(),
        steps: 0,
        complete: true,
        max_profiles,
    };
    let mut profiles: Vec<Profile> = Vec::new();
    if one > *tau {
        let mut fresh = Vec::new();
        for i in 1..=window {
            cl.admit(BTreeMap::from([(i, one.clone())]), &mut fresh);
        }
        profiles.append(&mut fresh);
    }

    while cl.complete {
        let before = profiles.len();
        for (k, level) in &levels {
            let scaled_floor = tau / &level.theta;
            let candidates: Vec<usize> = (0..profiles.len())
                .filter(|&i| profiles[i].floor > scaled_floor)
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let aut = MinAutomaton::new(&level.family, window);
            let mut fresh = Vec::new();
            let mut union = BTreeMap::new();
            cl.dfs(
                &profiles,
                &candidates,
                &aut,
                spec.mode(*k),
                &level.theta,
                &mut union,
                0,
                0,
                0,
                &FeedState::Fresh,
                0,
                &mut fresh,
            );
            profiles.append(&mut fresh);
        }
        if profiles.len() == before {
            break;
        }
    }

    let mut supports: BTreeSet<Vec<Index>> = BTreeSet::new();
    let mut signed_count: u64 = 0;
    for p in &profiles {
        supports.insert(p.coeffs.keys().copied().collect());
        let per = 1u64.checked_shl(p.coeffs.len() as u32).unwrap_or(u64::MAX);
        signed_count = signed_count.saturating_add(per);
    }
    Ok(HeavySupports {
        supports: supports
            .into_iter()
            .map(|v| FiniteSet::new(v).unwrap())
            .collect(),
        profiles: profiles.len(),
        signed_count,
        complete: cl.complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rational;
    use crate::spec::{Level, LevelRule, Variant};

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn tsirelson(variant: Variant) -> SpaceSpec {
        SpaceSpec::new(
            "halves",
            variant,
            LevelRule::Explicit(vec![Level {
                family: "S(1)".parse().unwrap(),
                theta: rat("1/2"),
            }]),
        )
        .unwrap()
    }

    fn support_vec(h: &HeavySupports) -> Vec<Vec<Index>> {
        h.supports.iter().map(|s| s.elements().to_vec()).collect()
    }

    #[test]
    fn single_point_window() {
        let spec = tsirelson(Variant::Plain);
        let h = enumerate_heavy_supports(&spec, 1, &rat("1/4"), 1000).unwrap();
        assert!(h.complete);
        assert_eq!(support_vec(&h), vec![vec![1]]);
    }

    #[test]
    fn threshold_at_one_leaves_nothing() {
        let spec = tsirelson(Variant::Plain);
        let h = enumerate_heavy_supports(&spec, 4, &rat("1"), 1000).unwrap();
        assert!(h.complete);
        assert!(h.supports.is_empty());
        assert_eq!(h.profiles, 0);
    }

    #[test]
    fn frozen_window_three() {
        let spec = tsirelson(Variant::Plain);
        let h = enumerate_heavy_supports(&spec, 3, &rat("49/100"), 1000).unwrap();
        assert!(h.complete);
        assert_eq!(
            support_vec(&h),
            vec![vec![1], vec![2], vec![2, 3], vec![3]],
        );
        assert_eq!(h.profiles, 4);
        // Three singleton profiles and one pair: 2 + 2 + 2 + 4 signed leaves.
        assert_eq!(h.signed_count, 10);
    }

    #[test]
    fn disjoint_splits_only_widen_the_list() {
        let plain = SpaceSpec::new(
            "geo",
            Variant::Plain,
            LevelRule::GeometricSchreier { delta: rat("1/2") },
        )
        .unwrap();
        let modified = SpaceSpec::new(
            "geo-mod",
            Variant::Modified,
            LevelRule::GeometricSchreier { delta: rat("1/2") },
        )
        .unwrap();
        let hp = enumerate_heavy_supports(&plain, 5, &rat("1/20"), 100_000).unwrap();
        let hm = enumerate_heavy_supports(&modified, 5, &rat("1/20"), 100_000).unwrap();
        assert!(hp.complete && hm.complete);
        let ms: BTreeSet<_> = hm.supports.iter().collect();
        for s in &hp.supports {
            assert!(ms.contains(s), "missing {s:?}");
        }
        assert!(hm.profiles >= hp.profiles);
    }

    #[test]
    fn profile_cap_reports_incomplete() {
        let spec = tsirelson(Variant::Plain);
        let h = enumerate_heavy_supports(&spec, 6, &rat("1/100"), 3).unwrap();
        assert!(!h.complete);
        assert!(h.profiles <= 3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = tsirelson(Variant::Plain);
        assert!(enumerate_heavy_supports(&spec, 0, &rat("1/2"), 10).is_err());
        assert!(enumerate_heavy_supports(&spec, 13, &rat("1/2"), 10).is_err());
        assert!(enumerate_heavy_supports(&spec, 3, &rat("0"), 10).is_err());
    }
}
