//! Space specifications: which family and weight act at each level, and how
//! parts are allowed to combine.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::families::{FamilyDescriptor, FiniteSet};
use crate::rational::{format_rational, parse_rational};

/// How the parts of a split may sit relative to each other.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Successive parts whose minima form a member set.
    Admissible,
    /// Pairwise disjoint parts whose minima form a member set.
    Allowable,
}

/// Which levels use allowable splits.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Variant {
    /// All levels admissible.
    Plain,
    /// All levels allowable.
    Modified,
    /// Levels up to the threshold allowable, the rest admissible.
    BoundedlyModified(u32),
}

impl Variant {
    pub fn mode(&self, level: u32) -> SplitMode {
        match self {
            Variant::Plain => SplitMode::Admissible,
            Variant::Modified => SplitMode::Allowable,
            Variant::BoundedlyModified(s) => {
                if level <= *s {
                    SplitMode::Allowable
                } else {
                    SplitMode::Admissible
                }
            }
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Plain => write!(f, "plain"),
            Variant::Modified => write!(f, "modified"),
            Variant::BoundedlyModified(s) => write!(f, "bm({s})"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        match s {
            "plain" => Ok(Variant::Plain),
            "modified" => Ok(Variant::Modified),
            _ => {
                let inner = s
                    .strip_prefix("bm(")
                    .and_then(|t| t.strip_suffix(')'))
                    .ok_or_else(|| Error::bad_input(format!("unknown variant {s:?}")))?;
                let n: u32 = inner
                    .trim()
                    .parse()
                    .map_err(|_| Error::bad_input(format!("bad variant threshold {inner:?}")))?;
                Ok(Variant::BoundedlyModified(n))
            }
        }
    }
}

/// One level of the norming hierarchy.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Level {
    pub family: FamilyDescriptor,
    pub theta: BigRational,
}

/// How levels are produced.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum LevelRule {
    /// Fixed finite list; entry `i` is level `i + 1`.
    Explicit(Vec<Level>),
    /// Level `k` is the Schreier family of order `k` with weight `delta^k`.
    GeometricSchreier { delta: BigRational },
    /// Level `k` is the Schreier family of order `k` with weight `1/(k+1)`.
    ReciprocalSchreier,
    /// Level `k >= 2` caps cardinality at `k` with weight `d_k / 2^bits`,
    /// where `d_k` is the least `d` with `(k+1)^d >= 2^(2^bits)`. That makes
    /// the weight the upward rounding of `1 / log2(k+1)` on a dyadic grid.
    LogCardinality { bits: u32 },
}

impl LevelRule {
    pub fn min_level(&self) -> u32 {
        match self {
            LevelRule::LogCardinality { .. } => 2,
            _ => 1,
        }
    }

    pub fn max_level(&self) -> Option<u32> {
        match self {
            LevelRule::Explicit(levels) => Some(levels.len() as u32),
            _ => None,
        }
    }

    pub fn level(&self, k: u32) -> Option<Level> {
        if k < self.min_level() {
            return None;
        }
        match self {
            LevelRule::Explicit(levels) => levels.get(k as usize - 1).cloned(),
            LevelRule::GeometricSchreier { delta } => Some(Level {
                family: FamilyDescriptor::Schreier(k),
                theta: pow_rational(delta, k),
            }),
            LevelRule::ReciprocalSchreier => Some(Level {
                family: FamilyDescriptor::Schreier(k),
                theta: BigRational::new(BigInt::one(), BigInt::from(k as u64 + 1)),
            }),
            LevelRule::LogCardinality { bits } => Some(Level {
                family: FamilyDescriptor::Cardinality(k),
                theta: BigRational::new(
                    BigInt::from(log_threshold(k, *bits)),
                    BigInt::one() << (*bits as usize),
                ),
            }),
        }
    }

    /// Weights never increase with the level. Generated rules guarantee it;
    /// explicit lists are inspected.
    pub fn thetas_nonincreasing(&self) -> bool {
        match self {
            LevelRule::Explicit(levels) => {
                levels.windows(2).all(|w| w[1].theta <= w[0].theta)
            }
            _ => true,
        }
    }

    /// Each level's family contains the previous one. Generated rules
    /// guarantee it; explicit lists are inspected for the two recognizable
    /// shapes.
    pub fn families_nested(&self) -> bool {
        match self {
            LevelRule::Explicit(levels) => {
                levels.windows(2).all(|w| match (&w[0].family, &w[1].family) {
                    (FamilyDescriptor::Schreier(a), FamilyDescriptor::Schreier(b)) => a <= b,
                    (FamilyDescriptor::Cardinality(a), FamilyDescriptor::Cardinality(b)) => a <= b,
                    _ => false,
                })
            }
            _ => true,
        }
    }
}

fn pow_rational(r: &BigRational, k: u32) -> BigRational {
    BigRational::new(r.numer().pow(k), r.denom().pow(k))
}

/// Least `d` with `(k+1)^d >= 2^(2^bits)`. A fixed-point logarithm gives the
/// neighbourhood; exact big-integer powers settle minimality.
fn log_threshold(k: u32, bits: u32) -> u64 {
    assert!(k >= 2, "levels below 2 have weight 1 under this rule");
    assert!(bits <= 20, "exponent tower too large");
    let e: u64 = 1 << bits;
    let l = fixed_log2(k as u64 + 1);
    let approx = ((e as u128) << 60) / l;
    let mut d = approx.saturating_sub(2).max(1) as u64;
    let target = BigUint::one() << (e as usize);
    let base = BigUint::from(k as u64 + 1);
    while base.pow(d as u32) < target {
        d += 1;
    }
    debug_assert!(base.pow(d as u32 - 1) < target);
    d
}

/// `floor(2^60 * log2(m))` for `m >= 2`, by fixed-point squaring.
fn fixed_log2(m: u64) -> u128 {
    debug_assert!(m >= 2);
    let msb = 63 - m.leading_zeros() as u128;
    let mut x: u128 = (m as u128) << (60 - msb);
    let mut frac: u128 = 0;
    for i in (0..60).rev() {
        x = (x * x) >> 60;
        if x >= 2u128 << 60 {
            frac |= 1 << i;
            x >>= 1;
        }
    }
    (msb << 60) | frac
}

/// A complete space description: levels plus split discipline.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SpaceSpec {
    pub name: String,
    pub variant: Variant,
    pub levels: LevelRule,
}

impl SpaceSpec {
    pub fn new(name: impl Into<String>, variant: Variant, levels: LevelRule) -> Result<Self, Error> {
        let spec = SpaceSpec { name: name.into(), variant, levels };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), Error> {
        let one = BigRational::one();
        match &self.levels {
            LevelRule::Explicit(levels) => {
                if levels.is_empty() {
                    return Err(Error::bad_input("no levels"));
                }
                for (i, l) in levels.iter().enumerate() {
                    if l.theta <= BigRational::new(0.into(), 1.into()) || l.theta >= one {
                        return Err(Error::bad_input(format!(
                            "weight at level {} must lie strictly between 0 and 1",
                            i + 1
                        )));
                    }
                }
                for w in levels.windows(2) {
                    if w[1].theta > w[0].theta {
                        return Err(Error::bad_input(
                            "weights must not increase from level to level",
                        ));
                    }
                    if let (FamilyDescriptor::Schreier(a), FamilyDescriptor::Schreier(b)) =
                        (&w[0].family, &w[1].family)
                    {
                        if b < a {
                            return Err(Error::bad_input(
                                "families must not shrink from level to level",
                            ));
                        }
                    }
                }
            }
            LevelRule::GeometricSchreier { delta } => {
                if *delta <= BigRational::new(0.into(), 1.into()) || *delta >= one {
                    return Err(Error::bad_input("ratio must lie strictly between 0 and 1"));
                }
            }
            LevelRule::LogCardinality { bits } => {
                if *bits == 0 || *bits > 20 {
                    return Err(Error::bad_input("precision bits must lie in 1..=20"));
                }
            }
            LevelRule::ReciprocalSchreier => {}
        }
        Ok(())
    }

    pub fn level(&self, k: u32) -> Option<Level> {
        self.levels.level(k)
    }

    pub fn theta(&self, k: u32) -> Option<BigRational> {
        self.level(k).map(|l| l.theta)
    }

    pub fn mode(&self, k: u32) -> SplitMode {
        self.variant.mode(k)
    }

    pub fn min_level(&self) -> u32 {
        self.levels.min_level()
    }

    pub fn max_level(&self) -> Option<u32> {
        self.levels.max_level()
    }

    /// Levels the norm of a vector with the given support can use. The scan
    /// stops once every singleton split of the support is admissible and
    /// later levels are pointless (weights non-increasing, families nested).
    pub fn levels_for(&self, support: &FiniteSet) -> Vec<(u32, Level)> {
        let truncatable = self.levels.thetas_nonincreasing() && self.levels.families_nested();
        let hard_cap = self
            .max_level()
            .unwrap_or_else(|| (support.len() as u32).max(self.min_level()));
        let mut out = Vec::new();
        for k in self.min_level()..=hard_cap {
            let Some(level) = self.level(k) else { break };
            let saturated = truncatable && level.family.member(support);
            out.push((k, level));
            if saturated {
                break;
            }
        }
        out
    }

    /// Regularity report: weights in range and non-increasing, and
    /// super-multiplicative across level sums. Empty means no violation
    /// among levels up to the bound.
    pub fn check_regular(&self, upto: u32) -> Vec<String> {
        let mut issues = Vec::new();
        let hi = self.max_level().unwrap_or(upto).min(upto);
        let one = BigRational::one();
        let mut thetas = Vec::new();
        for k in self.min_level()..=hi {
            match self.theta(k) {
                Some(t) => {
                    if t <= BigRational::new(0.into(), 1.into()) || t >= one {
                        issues.push(format!("theta({k}) out of range"));
                    }
                    thetas.push((k, t));
                }
                None => issues.push(format!("missing level {k}")),
            }
        }
        for w in thetas.windows(2) {
            if w[1].1 > w[0].1 {
                issues.push(format!("theta({}) exceeds theta({})", w[1].0, w[0].0));
            }
        }
        for (n, tn) in &thetas {
            for (m, tm) in &thetas {
                if let Some(ts) = thetas.iter().find(|(k, _)| k == &(n + m)) {
                    if ts.1 < tn * tm {
                        issues.push(format!(
                            "theta({}) falls below theta({n})*theta({m})",
                            n + m
                        ));
                    }
                }
            }
        }
        issues.sort();
        issues.dedup();
        issues
    }

    /// Parses the line-based config format. Lines: `name = ...`,
    /// `variant = plain|modified|bm(N)`, then either repeated
    /// `level = FAMILY : WEIGHT` lines or a single `rule = ...` line
    /// (`geometric RATIO`, `reciprocal`, or `log-cardinality BITS`).
    pub fn parse_config(text: &str) -> Result<SpaceSpec, Error> {
        let mut name = None;
        let mut variant = Variant::Plain;
        let mut levels: Vec<Level> = Vec::new();
        let mut rule: Option<LevelRule> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::bad_input(format!("line {}: expected key = value", lineno + 1)))?;
            let value = value.trim();
            match key.trim() {
                "name" => name = Some(value.to_string()),
                "variant" => variant = value.parse()?,
                "level" => {
                    let (fam, theta) = value.split_once(':').ok_or_else(|| {
                        Error::bad_input(format!("line {}: expected FAMILY : WEIGHT", lineno + 1))
                    })?;
                    levels.push(Level {
                        family: fam.trim().parse()?,
                        theta: parse_rational(theta)?,
                    });
                }
                "rule" => {
                    let mut parts = value.split_whitespace();
                    let kind = parts.next().unwrap_or("");
                    let arg = parts.next().unwrap_or("");
                    rule = Some(match kind {
                        "geometric" => LevelRule::GeometricSchreier { delta: parse_rational(arg)? },
                        "reciprocal" => LevelRule::ReciprocalSchreier,
                        "log-cardinality" => LevelRule::LogCardinality {
                            bits: arg.parse().map_err(|_| Error::bad_input("bad bits"))?,
                        },
                        other => {
                            return Err(Error::bad_input(format!("unknown rule {other:?}")))
                        }
                    });
                }
                other => return Err(Error::bad_input(format!("unknown key {other:?}"))),
            }
        }
        let levels = match (levels.is_empty(), rule) {
            (false, None) => LevelRule::Explicit(levels),
            (true, Some(r)) => r,
            (true, None) => return Err(Error::bad_input("config defines no levels")),
            (false, Some(_)) => {
                return Err(Error::bad_input("config mixes level lines with a rule"))
            }
        };
        SpaceSpec::new(name.unwrap_or_else(|| "custom".into()), variant, levels)
    }

    /// Renders the spec in the config format.
    pub fn to_config(&self) -> String {
        let mut out = format!("name = {}\nvariant = {}\n", self.name, self.variant);
        match &self.levels {
            LevelRule::Explicit(levels) => {
                for l in levels {
                    out.push_str(&format!("level = {} : {}\n", l.family, format_rational(&l.theta)));
                }
            }
            LevelRule::GeometricSchreier { delta } => {
                out.push_str(&format!("rule = geometric {}\n", format_rational(delta)));
            }
            LevelRule::ReciprocalSchreier => {
                out.push_str("rule = reciprocal\n");
            }
            LevelRule::LogCardinality { bits } => {
                out.push_str(&format!("rule = log-cardinality {bits}\n"));
            }
        }
        out
    }
}

/// Work budget for norm computations, counted in subproblem evaluations.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    pub limit: u64,
}

impl Budget {
    pub const DEFAULT: u64 = 8_000_000;

    pub fn new(limit: u64) -> Self {
        Budget { limit }
    }

    /// Reads `TSLAB_BUDGET`, falling back to the default.
    pub fn from_env() -> Self {
        match std::env::var("TSLAB_BUDGET") {
            Ok(v) => match v.trim().parse() {
                Ok(limit) => Budget { limit },
                Err(_) => Budget { limit: Self::DEFAULT },
            },
            Err(_) => Budget { limit: Self::DEFAULT },
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget { limit: Self::DEFAULT }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn explicit(pairs: &[(&str, &str)]) -> LevelRule {
        LevelRule::Explicit(
            pairs
                .iter()
                .map(|(f, t)| Level { family: f.parse().unwrap(), theta: rat(t) })
                .collect(),
        )
    }

    #[test]
    fn variant_modes() {
        assert_eq!(Variant::Plain.mode(3), SplitMode::Admissible);
        assert_eq!(Variant::Modified.mode(3), SplitMode::Allowable);
        let bm = Variant::BoundedlyModified(1);
        assert_eq!(bm.mode(1), SplitMode::Allowable);
        assert_eq!(bm.mode(2), SplitMode::Admissible);
        assert_eq!("bm(2)".parse::<Variant>().unwrap(), Variant::BoundedlyModified(2));
        assert_eq!(Variant::BoundedlyModified(2).to_string(), "bm(2)");
    }

    #[test]
    fn geometric_levels() {
        let rule = LevelRule::GeometricSchreier { delta: rat("1/2") };
        let l2 = rule.level(2).unwrap();
        assert_eq!(l2.family, FamilyDescriptor::Schreier(2));
        assert_eq!(l2.theta, rat("1/4"));
        assert!(rule.level(0).is_none());
        assert!(rule.thetas_nonincreasing());
        assert!(rule.families_nested());
    }

    #[test]
    fn log_rule_matches_independent_powers() {
        // Independently checked: 3^41349 >= 2^65536 > 3^41348, and powers of
        // 4 make the threshold exact.
        assert_eq!(log_threshold(2, 16), 41349);
        assert_eq!(log_threshold(3, 16), 32768);
        let rule = LevelRule::LogCardinality { bits: 16 };
        assert_eq!(rule.level(3).unwrap().theta, rat("1/2"));
        assert_eq!(rule.level(2).unwrap().theta, rat("41349/65536"));
        assert!(rule.level(1).is_none());
        // Small precision is easy to verify by hand: least d with 3^d >= 16
        // is 3, and least d with 4^d >= 16 is 2.
        assert_eq!(log_threshold(2, 2), 3);
        assert_eq!(log_threshold(3, 2), 2);
    }

    #[test]
    fn spec_validation() {
        assert!(SpaceSpec::new(
            "bad",
            Variant::Plain,
            explicit(&[("S(1)", "1")]),
        )
        .is_err());
        assert!(SpaceSpec::new(
            "bad",
            Variant::Plain,
            LevelRule::GeometricSchreier { delta: rat("3/2") },
        )
        .is_err());
        assert!(SpaceSpec::new("ok", Variant::Plain, explicit(&[("S(1)", "1/2")])).is_ok());
    }

    #[test]
    fn level_scan_saturates() {
        let spec = SpaceSpec::new(
            "geo",
            Variant::Plain,
            LevelRule::GeometricSchreier { delta: rat("1/2") },
        )
        .unwrap();
        let support = FiniteSet::new(vec![2, 3, 6, 7, 8]).unwrap();
        let ks: Vec<u32> = spec.levels_for(&support).iter().map(|(k, _)| *k).collect();
        // The set lies in the order-2 family, so the scan stops there.
        assert_eq!(ks, vec![1, 2]);
        let spread = FiniteSet::new(vec![1, 2, 3, 4, 5]).unwrap();
        let ks: Vec<u32> = spec.levels_for(&spread).iter().map(|(k, _)| *k).collect();
        assert_eq!(ks, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn regularity_report() {
        let good = SpaceSpec::new(
            "geo",
            Variant::Plain,
            LevelRule::GeometricSchreier { delta: rat("1/2") },
        )
        .unwrap();
        assert!(good.check_regular(8).is_empty());
        let bad = SpaceSpec::new(
            "bad",
            Variant::Plain,
            explicit(&[("S(1)", "1/2"), ("S(2)", "1/5")]),
        )
        .unwrap();
        let issues = bad.check_regular(2);
        assert!(issues.iter().any(|m| m.contains("theta(2) falls below")));
    }

    #[test]
    fn config_round_trip() {
        let text = "# demo\nname = demo\nvariant = bm(1)\nlevel = S(1) : 1/2\nlevel = S(11) : 1/5\n";
        let spec = SpaceSpec::parse_config(text).unwrap();
        assert_eq!(spec.name, "demo");
        assert_eq!(spec.variant, Variant::BoundedlyModified(1));
        assert_eq!(spec.theta(2).unwrap(), rat("1/5"));
        let again = SpaceSpec::parse_config(&spec.to_config()).unwrap();
        assert_eq!(again, spec);
        let ruled = SpaceSpec::parse_config("rule = geometric 2/3\n").unwrap();
        assert_eq!(ruled.theta(2).unwrap(), rat("4/9"));
        assert!(SpaceSpec::parse_config("junk\n").is_err());
        assert!(SpaceSpec::parse_config("level = S(1) : 1/2\nrule = geometric 1/2\n").is_err());
    }

    #[test]
    fn budget_from_env() {
        assert_eq!(Budget::default().limit, Budget::DEFAULT);
        assert_eq!(Budget::new(5).limit, 5);
    }
}
