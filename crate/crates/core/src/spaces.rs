//! Named space presets and the recursive parameter schedule behind the
//! boundedly modified example space.
//!
//! Preset names take optional arguments in parentheses, e.g. `t_delta(2/3)`,
//! `mixed_fn(geometric:3/4)`, `xm1u(3)`, or
//! `xm1u_toy(m=2,5;k=1,11)`.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use crate::error::Error;
use crate::families::FamilyDescriptor;
use crate::rational::{format_rational, parse_rational};
use crate::spec::{Level, LevelRule, SpaceSpec, Variant};

/// Deepest schedule the tower recursion will attempt.
pub const XM1U_DEPTH_CAP: usize = 4;

/// The recursive parameter schedule of the boundedly modified example space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Xm1uParams {
    pub depth: usize,
    /// `m_1 = 2`, then `m_j = m_{j-1}^{m_{j-1}} + 1`.
    #[serde(serialize_with = "ser_biguints")]
    pub ms: Vec<BigUint>,
    /// Least `t_j` with `2^{t_j} >= m_j^2`.
    pub ts: Vec<u32>,
    /// `k_1 = 1`, then `k_j = t_j (k_{j-1} + 1) + 1`.
    pub ks: Vec<u32>,
}

/// Renders arbitrarily large counters as decimal strings.
fn ser_biguints<S: serde::Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|m| m.to_string()))
}

/// Least `t` with `2^t >= x`.
fn ceil_log2(x: &BigUint, depth: usize) -> Result<u32, Error> {
    let bits = x.bits();
    let floor = bits - 1;
    let t = if *x == BigUint::one() << floor { floor } else { bits };
    u32::try_from(t).map_err(|_| Error::Overflow { what: "dyadic exponent".into(), depth })
}

/// Builds the minimal-choice schedule to the requested depth. Every value is
/// pinned: the `m` tower, the least dyadic exponent covering `m^2`, and the
/// index recursion it drives.
pub fn build_xm1u_params(depth: usize) -> Result<Xm1uParams, Error> {
    if depth == 0 || depth > XM1U_DEPTH_CAP {
        return Err(Error::bad_input(format!(
            "schedule depth must lie in 1..={XM1U_DEPTH_CAP}"
        )));
    }
    let mut ms: Vec<BigUint> = vec![BigUint::from(2u8)];
    for j in 1..depth {
        let prev = &ms[j - 1];
        let exp = prev
            .to_u32()
            .ok_or(Error::Overflow { what: "tower exponent".into(), depth: j + 1 })?;
        ms.push(prev.pow(exp) + BigUint::one());
    }
    let mut ts = Vec::with_capacity(depth);
    for (j, m) in ms.iter().enumerate() {
        ts.push(ceil_log2(&(m * m), j + 1)?);
    }
    let mut ks: Vec<u32> = vec![1];
    for j in 1..depth {
        let k = u64::from(ts[j]) * (u64::from(ks[j - 1]) + 1) + 1;
        ks.push(
            u32::try_from(k)
                .map_err(|_| Error::Overflow { what: "level family index".into(), depth: j + 1 })?,
        );
    }
    Ok(Xm1uParams { depth, ms, ts, ks })
}

impl Xm1uParams {
    /// The space this schedule describes: one level per depth, Schreier
    /// family `S(k_j)` with weight `1/m_j`, splitting boundedly modified at
    /// level 1.
    pub fn spec(&self) -> Result<SpaceSpec, Error> {
        let levels = self
            .ms
            .iter()
            .zip(&self.ks)
            .map(|(m, k)| Level {
                family: FamilyDescriptor::schreier(*k),
                theta: BigRational::new(BigInt::one(), BigInt::from(m.clone())),
            })
            .collect();
        SpaceSpec::new(
            format!("xm1u({})", self.depth),
            Variant::BoundedlyModified(1),
            LevelRule::Explicit(levels),
        )
    }
}

/// One catalog row per preset: name pattern and a one-line description.
pub fn preset_catalog() -> Vec<(&'static str, &'static str)> {
    vec![
        ("tsirelson", "one level: Schreier(1) with weight 1/2"),
        ("tsirelson_modified", "the same level with modified (disjoint) splitting"),
        ("t_delta(Q)", "one level: Schreier(1) with weight Q, 0 < Q < 1"),
        (
            "schlumprecht",
            "cardinality levels with 16-bit dyadic weights rounding 1/log2(k+1) upward",
        ),
        ("schlumprecht_modified", "the same levels with modified (disjoint) splitting"),
        ("mixed_fn", "Schreier levels S(n) with weights 1/(n+1)"),
        ("mixed_fn(geometric:Q)", "Schreier levels S(n) with weights Q^n"),
        ("mixed_fn_modified", "modified-splitting variant of mixed_fn"),
        ("xm1u(D)", "boundedly modified example space at schedule depth D, 1 <= D <= 4"),
        ("xm1u_toy(m=A,B;k=X,Y)", "boundedly modified space over a hand-picked schedule"),
    ]
}

fn split_name(name: &str) -> Result<(&str, Option<&str>), Error> {
    let name = name.trim();
    match name.split_once('(') {
        None => Ok((name, None)),
        Some((base, rest)) => {
            let args = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::bad_input(format!("unbalanced parentheses in {name:?}")))?;
            Ok((base.trim(), Some(args.trim())))
        }
    }
}

fn no_args(base: &str, args: Option<&str>) -> Result<(), Error> {
    match args {
        None => Ok(()),
        Some(_) => Err(Error::bad_input(format!("{base} takes no arguments"))),
    }
}

fn mixed_rule(args: Option<&str>) -> Result<LevelRule, Error> {
    match args {
        None | Some("reciprocal") => Ok(LevelRule::ReciprocalSchreier),
        Some(a) => match a.split_once(':') {
            Some(("geometric", q)) => {
                let delta = parse_rational(q)?;
                Ok(LevelRule::GeometricSchreier { delta })
            }
            _ => Err(Error::bad_input(format!(
                "mixed_fn understands `reciprocal` or `geometric:Q`, not {a:?}"
            ))),
        },
    }
}

fn toy_schedule(args: &str) -> Result<SpaceSpec, Error> {
    let mut ms: Option<Vec<u64>> = None;
    let mut ks: Option<Vec<u32>> = None;
    for part in args.split(';') {
        let (key, csv) = part
            .split_once('=')
            .ok_or_else(|| Error::bad_input("toy schedule parts look like m=2,5;k=1,11"))?;
        match key.trim() {
            "m" => {
                ms = Some(
                    csv.split(',')
                        .map(|t| t.trim().parse::<u64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| Error::bad_input(format!("bad m list {csv:?}")))?,
                )
            }
            "k" => {
                ks = Some(
                    csv.split(',')
                        .map(|t| t.trim().parse::<u32>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| Error::bad_input(format!("bad k list {csv:?}")))?,
                )
            }
            other => return Err(Error::bad_input(format!("unknown toy schedule key {other:?}"))),
        }
    }
    let (ms, ks) = match (ms, ks) {
        (Some(m), Some(k)) => (m, k),
        _ => return Err(Error::bad_input("toy schedule needs both m= and k= lists")),
    };
    if ms.len() != ks.len() || ms.is_empty() {
        return Err(Error::bad_input("m and k lists must be nonempty and equally long"));
    }
    if ms.iter().any(|&m| m < 2) {
        return Err(Error::bad_input("toy weights need m at least 2"));
    }
    let levels = ms
        .iter()
        .zip(&ks)
        .map(|(m, k)| Level {
            family: FamilyDescriptor::schreier(*k),
            theta: BigRational::new(BigInt::one(), BigInt::from(*m)),
        })
        .collect();
    let canonical: Vec<String> = ms.iter().map(u64::to_string).collect();
    let canonical_k: Vec<String> = ks.iter().map(u32::to_string).collect();
    SpaceSpec::new(
        format!("xm1u_toy(m={};k={})", canonical.join(","), canonical_k.join(",")),
        Variant::BoundedlyModified(1),
        LevelRule::Explicit(levels),
    )
}

/// Resolves a preset name (see [`preset_catalog`]) into a space.
pub fn preset(name: &str) -> Result<SpaceSpec, Error> {
    let (base, args) = split_name(name)?;
    match base {
        "tsirelson" | "tsirelson_modified" => {
            no_args(base, args)?;
            let variant =
                if base == "tsirelson" { Variant::Plain } else { Variant::Modified };
            SpaceSpec::new(
                base,
                variant,
                LevelRule::Explicit(vec![Level {
                    family: FamilyDescriptor::schreier(1),
                    theta: BigRational::new(BigInt::one(), BigInt::from(2u8)),
                }]),
            )
        }
        "t_delta" => {
            let q = args.ok_or_else(|| Error::bad_input("t_delta needs a weight, e.g. t_delta(2/3)"))?;
            let delta = parse_rational(q)?;
            SpaceSpec::new(
                format!("t_delta({})", format_rational(&delta)),
                Variant::Plain,
                LevelRule::Explicit(vec![Level {
                    family: FamilyDescriptor::schreier(1),
                    theta: delta,
                }]),
            )
        }
        "schlumprecht" => {
            no_args(base, args)?;
            SpaceSpec::new("schlumprecht", Variant::Plain, LevelRule::LogCardinality { bits: 16 })
        }
        "schlumprecht_modified" => {
            no_args(base, args)?;
            SpaceSpec::new(
                "schlumprecht_modified",
                Variant::Modified,
                LevelRule::LogCardinality { bits: 16 },
            )
        }
        "mixed_fn" => SpaceSpec::new("mixed_fn", Variant::Plain, mixed_rule(args)?),
        "mixed_fn_modified" => {
            SpaceSpec::new("mixed_fn_modified", Variant::Modified, mixed_rule(args)?)
        }
        "xm1u" => {
            let d = args
                .and_then(|a| a.parse::<usize>().ok())
                .ok_or_else(|| Error::bad_input("xm1u needs a depth, e.g. xm1u(3)"))?;
            build_xm1u_params(d)?.spec()
        }
        "xm1u_toy" => {
            let a = args.ok_or_else(|| {
                Error::bad_input("xm1u_toy needs a schedule, e.g. xm1u_toy(m=2,5;k=1,11)")
            })?;
            toy_schedule(a)
        }
        other => Err(Error::bad_input(format!(
            "unknown space preset {other:?}; `spaces list` prints the catalog"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_minimal_schedule_to_depth_three() {
        let p = build_xm1u_params(3).unwrap();
        assert_eq!(p.ms, vec![BigUint::from(2u8), BigUint::from(5u8), BigUint::from(3126u32)]);
        assert_eq!(p.ts, vec![2, 5, 24]);
        assert_eq!(p.ks, vec![1, 11, 289]);
    }

    #[test]
    fn schedule_satisfies_its_own_recursion() {
        let p = build_xm1u_params(4).unwrap();
        for j in 1..p.depth {
            let prev = &p.ms[j - 1];
            let exp = prev.to_u32().unwrap();
            assert_eq!(p.ms[j], prev.pow(exp) + BigUint::one());
            assert_eq!(
                u64::from(p.ks[j]),
                u64::from(p.ts[j]) * (u64::from(p.ks[j - 1]) + 1) + 1
            );
        }
        for (j, m) in p.ms.iter().enumerate() {
            let t = p.ts[j];
            let square = m * m;
            assert!(BigUint::one() << t >= square);
            if t > 0 {
                assert!(BigUint::one() << (t - 1) < square);
            }
        }
    }

    #[test]
    fn schedule_depth_is_bounded() {
        assert!(build_xm1u_params(0).is_err());
        assert!(build_xm1u_params(5).is_err());
    }

    #[test]
    fn example_space_levels_at_depth_two() {
        let spec = preset("xm1u(2)").unwrap();
        assert_eq!(spec.variant, Variant::BoundedlyModified(1));
        assert_eq!(spec.max_level(), Some(2));
        let l1 = spec.level(1).unwrap();
        assert_eq!(l1.family, FamilyDescriptor::schreier(1));
        assert_eq!(l1.theta, BigRational::new(BigInt::one(), BigInt::from(2u8)));
        let l2 = spec.level(2).unwrap();
        assert_eq!(l2.family, FamilyDescriptor::schreier(11));
        assert_eq!(l2.theta, BigRational::new(BigInt::one(), BigInt::from(5u8)));
    }

    #[test]
    fn named_presets_resolve() {
        let t = preset("tsirelson").unwrap();
        assert_eq!(t.theta(1).unwrap(), BigRational::new(BigInt::one(), BigInt::from(2u8)));
        assert_eq!(t.max_level(), Some(1));
        assert_eq!(t.variant, Variant::Plain);
        let tm = preset("tsirelson_modified").unwrap();
        assert_eq!(tm.variant, Variant::Modified);
        assert_eq!(tm.theta(1), t.theta(1));

        let td = preset("t_delta(2/3)").unwrap();
        assert_eq!(td.theta(1).unwrap(), parse_rational("2/3").unwrap());
        assert!(preset("t_delta(3/2)").is_err());

        let s = preset("schlumprecht").unwrap();
        assert_eq!(s.min_level(), 2);
        assert!(matches!(s.level(2).unwrap().family, FamilyDescriptor::Cardinality(2)));

        let m = preset("mixed_fn").unwrap();
        assert_eq!(m.theta(3).unwrap(), parse_rational("1/4").unwrap());
        let g = preset("mixed_fn(geometric:3/4)").unwrap();
        assert_eq!(g.theta(2).unwrap(), parse_rational("9/16").unwrap());

        let toy = preset("xm1u_toy(m=2,5;k=1,11)").unwrap();
        assert_eq!(toy.variant, Variant::BoundedlyModified(1));
        assert_eq!(toy.theta(2).unwrap(), parse_rational("1/5").unwrap());

        assert!(preset("nonsense").is_err());
        assert!(preset("tsirelson(1)").is_err());
        assert!(preset("xm1u(9)").is_err());
    }

    #[test]
    fn toy_schedules_validate_like_any_space() {
        // Weights must not increase, so m must not decrease.
        assert!(preset("xm1u_toy(m=5,2;k=1,11)").is_err());
        // Families must nest, so k must not decrease.
        assert!(preset("xm1u_toy(m=2,5;k=11,1)").is_err());
        assert!(preset("xm1u_toy(m=1,2;k=1,2)").is_err());
        assert!(preset("xm1u_toy(m=2,5)").is_err());
    }
}
