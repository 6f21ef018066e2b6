//! Exact-arithmetic toolkit for norms of mixed Tsirelson-type sequence spaces
//! and their (boundedly) modified variants.
//!
//! The crate is organised around six concerns:
//!
//! * [`families`] — regular families of finite sets (Schreier hierarchy,
//!   cardinality caps, brackets, disjoint-pair closures) together with
//!   admissibility/allowability tests, weighted maximisation, and window
//!   enumeration.
//! * [`vector`] / [`functional`] — sparse rational vectors and the tree-shaped
//!   norming functionals acting on them.
//! * [`spec`] / [`engine`] — space descriptions (level families, weights,
//!   variant) and the exact norm engine with dual certificates.
//! * [`heavy`] — enumeration of norming functionals whose coordinates all
//!   exceed a threshold.
//! * [`scc`] — smallness-controlled convex combinations: constructions,
//!   checkers, nested tree systems, and rapidly-increasing sequence checks.
//! * [`spaces`] — named presets and the recursive parameter schedule for the
//!   boundedly modified example space.
//!
//! All arithmetic is exact (`BigRational`); floating point appears only in
//! report formatting helpers.

pub mod engine;
pub mod error;
pub mod families;
pub mod functional;
pub mod heavy;
pub mod rational;
pub mod scc;
pub mod spaces;
pub mod spec;
pub mod vector;

pub use engine::{
    distorted_norm, norm, norm_bruteforce, norm_level, two_convexified_norm, DistortedNorm,
    NormBounds, NormOptions, NormOutcome, NormResult,
};
pub use error::Error;
pub use families::{FamilyDescriptor, FiniteSet, Index};
pub use functional::{FunctionalTree, Sign};
pub use heavy::{enumerate_heavy_supports, HeavySupports};
pub use scc::{
    check_basic_scc, check_ris, check_scc_witness, find_seminormalized_scc, make_basic_scc,
    make_block_scc, make_compact_scc, make_nested_trees, ClauseStatus, IndexStream, NestedTrees,
    RisContext, RisReport, RisWitness, SccKind, SccWitness, Seminormalized,
};
pub use spaces::{build_xm1u_params, preset, preset_catalog, Xm1uParams};
pub use spec::{Budget, Level, LevelRule, SpaceSpec, SplitMode, Variant};
pub use vector::SparseVector;
