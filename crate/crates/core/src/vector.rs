//! Finitely supported vectors with exact rational coordinates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::families::{FiniteSet, Index};
use crate::rational::{format_rational, parse_rational};

/// A vector over the unit basis, indexed from 1. Zero coordinates are never
/// stored.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(try_from = "SparseVectorRepr", into = "SparseVectorRepr")]
pub struct SparseVector {
    coeffs: BTreeMap<Index, BigRational>,
}

#[derive(Serialize, Deserialize)]
struct SparseVectorRepr {
    coeffs: BTreeMap<Index, String>,
}

impl TryFrom<SparseVectorRepr> for SparseVector {
    type Error = Error;
    fn try_from(r: SparseVectorRepr) -> Result<Self, Error> {
        let mut entries = Vec::with_capacity(r.coeffs.len());
        for (i, s) in r.coeffs {
            entries.push((i, parse_rational(&s)?));
        }
        SparseVector::from_entries(entries)
    }
}

impl From<SparseVector> for SparseVectorRepr {
    fn from(v: SparseVector) -> SparseVectorRepr {
        SparseVectorRepr {
            coeffs: v
                .coeffs
                .iter()
                .map(|(i, c)| (*i, format_rational(c)))
                .collect(),
        }
    }
}

impl SparseVector {
    pub fn zero() -> Self {
        SparseVector::default()
    }

    /// Builds a vector from coordinate entries. Duplicate indices and index 0
    /// are rejected; zero coefficients are dropped.
    pub fn from_entries(entries: Vec<(Index, BigRational)>) -> Result<Self, Error> {
        let mut coeffs = BTreeMap::new();
        for (i, c) in entries {
            if i == 0 {
                return Err(Error::bad_input("indices start at 1"));
            }
            if c.is_zero() {
                continue;
            }
            if coeffs.insert(i, c).is_some() {
                return Err(Error::bad_input(format!("duplicate index {i}")));
            }
        }
        Ok(SparseVector { coeffs })
    }

    /// Unit basis vector.
    pub fn unit(i: Index) -> Self {
        SparseVector::from_entries(vec![(i, BigRational::new(1.into(), 1.into()))]).unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn support(&self) -> FiniteSet {
        FiniteSet::new(self.coeffs.keys().copied().collect()).unwrap()
    }

    pub fn min_support(&self) -> Option<Index> {
        self.coeffs.keys().next().copied()
    }

    pub fn max_support(&self) -> Option<Index> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn entry(&self, i: Index) -> BigRational {
        self.coeffs.get(&i).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Index, &BigRational)> {
        self.coeffs.iter().map(|(i, c)| (*i, c))
    }

    /// Entries as `(index, |coefficient|)`, ascending by index.
    pub fn abs_entries(&self) -> Vec<(Index, BigRational)> {
        self.coeffs.iter().map(|(i, c)| (*i, c.abs())).collect()
    }

    pub fn l1(&self) -> BigRational {
        self.coeffs.values().map(|c| c.abs()).sum()
    }

    pub fn sup_norm(&self) -> BigRational {
        self.coeffs
            .values()
            .map(|c| c.abs())
            .max()
            .unwrap_or_else(BigRational::zero)
    }

    /// Restriction to the given index set.
    pub fn restrict_to_set(&self, set: &FiniteSet) -> SparseVector {
        SparseVector {
            coeffs: self
                .coeffs
                .iter()
                .filter(|(i, _)| set.contains(**i))
                .map(|(i, c)| (*i, c.clone()))
                .collect(),
        }
    }

    /// Restriction to the interval `[lo, hi]`.
    pub fn restrict_interval(&self, lo: Index, hi: Index) -> SparseVector {
        SparseVector {
            coeffs: self
                .coeffs
                .range(lo..=hi)
                .map(|(i, c)| (*i, c.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, by: &BigRational) -> SparseVector {
        if by.is_zero() {
            return SparseVector::zero();
        }
        SparseVector {
            coeffs: self.coeffs.iter().map(|(i, c)| (*i, c * by)).collect(),
        }
    }

    pub fn add(&self, other: &SparseVector) -> SparseVector {
        let mut coeffs = self.coeffs.clone();
        for (i, c) in &other.coeffs {
            let v = coeffs.entry(*i).or_insert_with(BigRational::zero);
            *v += c;
            if v.is_zero() {
                coeffs.remove(i);
            }
        }
        SparseVector { coeffs }
    }

    /// Coordinate-wise square.
    pub fn square(&self) -> SparseVector {
        SparseVector {
            coeffs: self.coeffs.iter().map(|(i, c)| (*i, c * c)).collect(),
        }
    }
}

impl fmt::Display for SparseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        for (n, (i, c)) in self.coeffs.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}:{}", format_rational(c))?;
        }
        Ok(())
    }
}

/// Parses `2:1,3:1/2`; `0` parses to the zero vector.
impl FromStr for SparseVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        if s.is_empty() || s == "0" {
            return Ok(SparseVector::zero());
        }
        let mut entries = Vec::new();
        for part in s.split(',') {
            let (idx, coeff) = part
                .split_once(':')
                .ok_or_else(|| Error::bad_input(format!("expected index:coeff, got {part:?}")))?;
            let i: Index = idx
                .trim()
                .parse()
                .map_err(|_| Error::bad_input(format!("bad index {idx:?}")))?;
            entries.push((i, parse_rational(coeff)?));
        }
        SparseVector::from_entries(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_of(s: &str) -> SparseVector {
        s.parse().unwrap()
    }

    #[test]
    fn parse_display_round_trip() {
        for s in ["2:1,3:1", "4:1/3,9:-2/5", "1:7", "0"] {
            let v = vec_of(s);
            assert_eq!(v.to_string(), s);
        }
        assert!("2:1,2:3".parse::<SparseVector>().is_err());
        assert!("0:1".parse::<SparseVector>().is_err());
        assert!("2".parse::<SparseVector>().is_err());
    }

    #[test]
    fn zero_coefficients_are_dropped() {
        let v = vec_of("2:0,3:1");
        assert_eq!(v.support_len(), 1);
        assert_eq!(v.entry(2), BigRational::zero());
    }

    #[test]
    fn norms_and_restrictions() {
        let v = vec_of("2:1/2,3:-1/2,6:1/4");
        assert_eq!(v.l1(), crate::rational::parse_rational("5/4").unwrap());
        assert_eq!(v.sup_norm(), crate::rational::parse_rational("1/2").unwrap());
        assert_eq!(v.restrict_interval(3, 6).to_string(), "3:-1/2,6:1/4");
        let set = FiniteSet::new(vec![2, 6]).unwrap();
        assert_eq!(v.restrict_to_set(&set).to_string(), "2:1/2,6:1/4");
        assert_eq!(v.support().to_string(), "{2,3,6}");
    }

    #[test]
    fn arithmetic() {
        let v = vec_of("2:1,3:1");
        let w = vec_of("3:-1,4:2");
        assert_eq!(v.add(&w).to_string(), "2:1,4:2");
        assert_eq!(v.scale(&crate::rational::parse_rational("1/2").unwrap()).to_string(), "2:1/2,3:1/2");
        assert_eq!(vec_of("2:1/2,3:-1/3").square().to_string(), "2:1/4,3:1/9");
    }

    #[test]
    fn json_round_trip() {
        let v = vec_of("2:1/3,5:-4");
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"coeffs":{"2":"1/3","5":"-4"}}"#);
        let back: SparseVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
