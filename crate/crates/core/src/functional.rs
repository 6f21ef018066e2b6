//! Norming functionals as explicit trees, used as norm certificates.
//!
//! A tree evaluates against a vector to an exact rational. A valid tree for
//! a given space certifies a lower bound on the norm, because it denotes an
//! element of the norming set: leaves are signed coordinate functionals and
//! each node scales a split of child functionals by its level weight.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::families::{FiniteSet, Index};
use crate::rational::{format_rational, parse_rational};
use crate::spec::{SpaceSpec, SplitMode};
use crate::vector::SparseVector;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn of(r: &BigRational) -> Sign {
        use num_traits::Signed;
        if r.is_negative() {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn apply(&self, r: &BigRational) -> BigRational {
        match self {
            Sign::Plus => r.clone(),
            Sign::Minus => -r.clone(),
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Plus => write!(f, "+"),
            Sign::Minus => write!(f, "-"),
        }
    }
}

/// A norming functional.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub enum FunctionalTree {
    /// `±e_i^*`.
    Leaf { sign: Sign, index: Index },
    /// `theta * (f_1 + ... + f_d)` over a split at the given level.
    Node {
        level: u32,
        weight: BigRational,
        mode: SplitMode,
        children: Vec<FunctionalTree>,
    },
}

impl FunctionalTree {
    pub fn leaf(sign: Sign, index: Index) -> Self {
        FunctionalTree::Leaf { sign, index }
    }

    pub fn evaluate(&self, x: &SparseVector) -> BigRational {
        match self {
            FunctionalTree::Leaf { sign, index } => sign.apply(&x.entry(*index)),
            FunctionalTree::Node { weight, children, .. } => {
                let sum: BigRational = children.iter().map(|c| c.evaluate(x)).sum();
                weight * sum
            }
        }
    }

    /// Indices of all leaves.
    pub fn support(&self) -> FiniteSet {
        let mut set = BTreeSet::new();
        self.collect_support(&mut set);
        FiniteSet::new(set.into_iter().collect()).expect("leaf indices are positive")
    }

    fn collect_support(&self, out: &mut BTreeSet<Index>) {
        match self {
            FunctionalTree::Leaf { index, .. } => {
                out.insert(*index);
            }
            FunctionalTree::Node { children, .. } => {
                for c in children {
                    c.collect_support(out);
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            FunctionalTree::Leaf { .. } => 1,
            FunctionalTree::Node { children, .. } => children.iter().map(|c| c.leaf_count()).sum(),
        }
    }

    /// Height with leaves at 1.
    pub fn height(&self) -> usize {
        match self {
            FunctionalTree::Leaf { .. } => 1,
            FunctionalTree::Node { children, .. } => {
                1 + children.iter().map(|c| c.height()).max().unwrap_or(0)
            }
        }
    }

    /// Checks that the tree denotes a norming functional of the space:
    /// leaves are distinct, every node carries its level's exact weight and
    /// split mode, the children's supports split accordingly, and their
    /// minima form a member set of the level's family.
    pub fn validate(&self, spec: &SpaceSpec) -> Result<(), Error> {
        match self {
            FunctionalTree::Leaf { index, .. } => {
                if *index == 0 {
                    return Err(Error::bad_input("leaf index 0"));
                }
                Ok(())
            }
            FunctionalTree::Node { level, weight, mode, children } => {
                let l = spec
                    .level(*level)
                    .ok_or_else(|| Error::bad_input(format!("no level {level} in space")))?;
                if *weight != l.theta {
                    return Err(Error::bad_input(format!(
                        "node at level {level} carries weight {}, space says {}",
                        format_rational(weight),
                        format_rational(&l.theta)
                    )));
                }
                if *mode != spec.mode(*level) {
                    return Err(Error::bad_input(format!(
                        "node at level {level} uses the wrong split mode"
                    )));
                }
                if children.is_empty() {
                    return Err(Error::bad_input("node without children"));
                }
                let supports: Vec<FiniteSet> = children.iter().map(|c| c.support()).collect();
                match mode {
                    SplitMode::Admissible => {
                        if !l.family.is_admissible(&supports) {
                            return Err(Error::bad_input(format!(
                                "children at level {level} are not admissible"
                            )));
                        }
                    }
                    SplitMode::Allowable => {
                        if !l.family.is_allowable(&supports) {
                            return Err(Error::bad_input(format!(
                                "children at level {level} are not allowable"
                            )));
                        }
                    }
                }
                for c in children {
                    c.validate(spec)?;
                }
                Ok(())
            }
        }
    }

    fn fmt_indented(&self, f: &mut fmt::Formatter<'_>, indent: usize) -> fmt::Result {
        let pad = "  ".repeat(indent);
        match self {
            FunctionalTree::Leaf { sign, index } => writeln!(f, "{pad}{sign}e*{index}"),
            FunctionalTree::Node { level, weight, mode, children } => {
                let mode = match mode {
                    SplitMode::Admissible => "admissible",
                    SplitMode::Allowable => "allowable",
                };
                writeln!(f, "{pad}level {level} ({mode}) x {}", format_rational(weight))?;
                for c in children {
                    c.fmt_indented(f, indent + 1)?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for FunctionalTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indented(f, 0)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TreeRepr {
    Leaf {
        sign: Sign,
        index: Index,
    },
    Node {
        level: u32,
        weight: String,
        mode: SplitMode,
        children: Vec<TreeRepr>,
    },
}

impl TryFrom<TreeRepr> for FunctionalTree {
    type Error = Error;
    fn try_from(r: TreeRepr) -> Result<Self, Error> {
        Ok(match r {
            TreeRepr::Leaf { sign, index } => FunctionalTree::Leaf { sign, index },
            TreeRepr::Node { level, weight, mode, children } => FunctionalTree::Node {
                level,
                weight: parse_rational(&weight)?,
                mode,
                children: children
                    .into_iter()
                    .map(FunctionalTree::try_from)
                    .collect::<Result<_, _>>()?,
            },
        })
    }
}

impl From<FunctionalTree> for TreeRepr {
    fn from(t: FunctionalTree) -> TreeRepr {
        match t {
            FunctionalTree::Leaf { sign, index } => TreeRepr::Leaf { sign, index },
            FunctionalTree::Node { level, weight, mode, children } => TreeRepr::Node {
                level,
                weight: format_rational(&weight),
                mode,
                children: children.into_iter().map(TreeRepr::from).collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{Level, LevelRule, SpaceSpec, Variant};

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn half_space() -> SpaceSpec {
        SpaceSpec::new(
            "halves",
            Variant::Plain,
            LevelRule::Explicit(vec![Level {
                family: "S(1)".parse().unwrap(),
                theta: rat("1/2"),
            }]),
        )
        .unwrap()
    }

    fn pair_node(i: Index, j: Index) -> FunctionalTree {
        FunctionalTree::Node {
            level: 1,
            weight: rat("1/2"),
            mode: SplitMode::Admissible,
            children: vec![
                FunctionalTree::leaf(Sign::Plus, i),
                FunctionalTree::leaf(Sign::Plus, j),
            ],
        }
    }

    #[test]
    fn evaluation_and_support() {
        let x: SparseVector = "2:1,3:1".parse().unwrap();
        let t = pair_node(2, 3);
        assert_eq!(t.evaluate(&x), rat("1"));
        assert_eq!(t.support().to_string(), "{2,3}");
        assert_eq!(t.leaf_count(), 2);
        assert_eq!(t.height(), 2);
        let neg = FunctionalTree::leaf(Sign::Minus, 3);
        assert_eq!(neg.evaluate(&x), rat("-1"));
    }

    #[test]
    fn validation_accepts_proper_trees() {
        let spec = half_space();
        assert!(pair_node(2, 3).validate(&spec).is_ok());
        assert!(FunctionalTree::leaf(Sign::Plus, 7).validate(&spec).is_ok());
    }

    #[test]
    fn validation_rejects_bad_trees() {
        let spec = half_space();
        // Wrong weight.
        let mut t = pair_node(2, 3);
        if let FunctionalTree::Node { weight, .. } = &mut t {
            *weight = rat("2/3");
        }
        assert!(t.validate(&spec).is_err());
        // Split too wide for the minimum.
        let wide = FunctionalTree::Node {
            level: 1,
            weight: rat("1/2"),
            mode: SplitMode::Admissible,
            children: vec![
                FunctionalTree::leaf(Sign::Plus, 2),
                FunctionalTree::leaf(Sign::Plus, 3),
                FunctionalTree::leaf(Sign::Plus, 4),
            ],
        };
        assert!(wide.validate(&spec).is_err());
        // Overlapping children.
        let overlap = FunctionalTree::Node {
            level: 1,
            weight: rat("1/2"),
            mode: SplitMode::Admissible,
            children: vec![pair_node(2, 5), pair_node(3, 6)],
        };
        assert!(overlap.validate(&spec).is_err());
        // Wrong mode for the variant.
        let disjoint = FunctionalTree::Node {
            level: 1,
            weight: rat("1/2"),
            mode: SplitMode::Allowable,
            children: vec![pair_node(2, 5), pair_node(3, 6)],
        };
        assert!(disjoint.validate(&spec).is_err());
        // No such level.
        let deep = FunctionalTree::Node {
            level: 2,
            weight: rat("1/4"),
            mode: SplitMode::Admissible,
            children: vec![FunctionalTree::leaf(Sign::Plus, 2)],
        };
        assert!(deep.validate(&spec).is_err());
    }

    #[test]
    fn allowable_trees_validate_in_modified_spaces() {
        let spec = SpaceSpec::new(
            "halves-mod",
            Variant::Modified,
            LevelRule::Explicit(vec![Level {
                family: "S(1)".parse().unwrap(),
                theta: rat("1/2"),
            }]),
        )
        .unwrap();
        let interleaved = FunctionalTree::Node {
            level: 1,
            weight: rat("1/2"),
            mode: SplitMode::Allowable,
            children: vec![
                FunctionalTree::Node {
                    level: 1,
                    weight: rat("1/2"),
                    mode: SplitMode::Allowable,
                    children: vec![
                        FunctionalTree::leaf(Sign::Plus, 2),
                        FunctionalTree::leaf(Sign::Plus, 5),
                    ],
                },
                FunctionalTree::Node {
                    level: 1,
                    weight: rat("1/2"),
                    mode: SplitMode::Allowable,
                    children: vec![
                        FunctionalTree::leaf(Sign::Plus, 3),
                        FunctionalTree::leaf(Sign::Plus, 6),
                    ],
                },
            ],
        };
        assert!(interleaved.validate(&spec).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let t = pair_node(2, 3);
        let json = serde_json::to_string(&t).unwrap();
        let back: FunctionalTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(json.contains("\"weight\":\"1/2\""));
    }
}
