//! Smallness-controlled convex combinations.
//!
//! A basic `(epsilon, n)` combination is a convex combination of basis
//! vectors whose support lies in the `n`-th Schreier family while every
//! member of the `(n-1)`-st family carries strictly less than `epsilon` of
//! the mass. The module builds them canonically ([`make_basic_scc`]), in a
//! compact doubling layout ([`make_compact_scc`]), over block sequences
//! ([`make_block_scc`]), iteratively until one is seminormalized
//! ([`find_seminormalized_scc`]), and as nested tree systems sharing one
//! index tree ([`make_nested_trees`]). [`check_basic_scc`] re-checks the
//! defining inequalities from scratch, and [`check_ris`] reports, clause by
//! clause, whether a sequence of such combinations is rapidly increasing.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::engine::{norm, NormOptions};
use crate::error::Error;
use crate::families::{FamilyDescriptor, FiniteSet, Index};
use crate::heavy::enumerate_heavy_supports;
use crate::rational::{format_rational, serde_rat, serde_rat_vec};
use crate::spec::SpaceSpec;
use crate::vector::SparseVector;

/// Most support points any single construction may consume.
const BASIC_POINT_CAP: u64 = 200_000;
/// Most tree nodes a nested system may allocate.
const TREE_NODE_CAP: usize = 60_000;
/// Most coefficient profiles the growth clause enumerates exactly.
const GROWTH_PROFILE_CAP: usize = 200_000;
/// Most weight products enumerated when certifying a growth upper bound.
const WEIGHT_PRODUCT_CAP: u64 = 100_000;

fn one() -> BigRational {
    BigRational::one()
}

fn half() -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(2u8))
}

fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Smallest integer strictly greater than `r`, as a checked `u64`.
fn strict_next_int(r: &BigRational, what: &str) -> Result<u64, Error> {
    if !r.is_positive() {
        return Err(Error::bad_input(format!("{what} must be positive")));
    }
    let m = r.floor().to_integer() + BigInt::one();
    m.to_u64().ok_or_else(|| Error::resource(format!("{what} block count"), BASIC_POINT_CAP))
}

// ---------------------------------------------------------------------------
// Index streams
// ---------------------------------------------------------------------------

/// Source of fresh basis indices for constructions. Constructions only ever
/// move forward through a stream; skipped elements are dropped, not reused.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexStream {
    /// `start`, `start + step`, `start + 2 step`, …
    Arithmetic { start: Index, step: Index },
    /// A finite pool, consumed left to right. Strictly increasing.
    Explicit(Vec<Index>),
}

impl IndexStream {
    pub fn naturals() -> Self {
        IndexStream::Arithmetic { start: 1, step: 1 }
    }

    pub fn evens() -> Self {
        IndexStream::Arithmetic { start: 2, step: 2 }
    }

    pub fn odds() -> Self {
        IndexStream::Arithmetic { start: 1, step: 2 }
    }

    pub fn explicit(pool: Vec<Index>) -> Result<Self, Error> {
        if pool.is_empty() {
            return Err(Error::bad_input("explicit index stream is empty"));
        }
        if pool[0] == 0 {
            return Err(Error::bad_input("indices start at 1"));
        }
        if pool.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::bad_input("explicit index stream must be strictly increasing"));
        }
        Ok(IndexStream::Explicit(pool))
    }

    /// Accepts `naturals`, `evens`, `odds`, `start:step`, or a comma list.
    pub fn parse(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        match s {
            "naturals" => return Ok(Self::naturals()),
            "evens" => return Ok(Self::evens()),
            "odds" => return Ok(Self::odds()),
            _ => {}
        }
        if let Some((a, b)) = s.split_once(':') {
            let start: Index = a
                .trim()
                .parse()
                .map_err(|_| Error::bad_input(format!("bad stream start in {s:?}")))?;
            let step: Index = b
                .trim()
                .parse()
                .map_err(|_| Error::bad_input(format!("bad stream step in {s:?}")))?;
            if start == 0 || step == 0 {
                return Err(Error::bad_input("stream start and step must be at least 1"));
            }
            return Ok(IndexStream::Arithmetic { start, step });
        }
        let pool = s
            .split(',')
            .map(|t| t.trim().parse::<Index>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Error::bad_input(format!("bad index list {s:?}")))?;
        Self::explicit(pool)
    }
}

/// Forward-only reader over an [`IndexStream`].
struct Cursor<'a> {
    stream: &'a IndexStream,
    pos: usize,
    last: Index,
}

impl<'a> Cursor<'a> {
    fn new(stream: &'a IndexStream) -> Self {
        Cursor { stream, pos: 0, last: 0 }
    }

    /// Next stream element strictly above `lo` (and above everything already
    /// taken).
    fn next_above(&mut self, lo: Index) -> Result<Index, Error> {
        let lo = lo.max(self.last);
        let next = match self.stream {
            IndexStream::Arithmetic { start, step } => {
                let (start, step) = (*start as u64, *step as u64);
                let candidate = if start > lo as u64 {
                    start
                } else {
                    let k = (lo as u64 - start) / step + 1;
                    start + k * step
                };
                Index::try_from(candidate)
                    .map_err(|_| Error::bad_input("index stream outgrew the index range"))?
            }
            IndexStream::Explicit(pool) => {
                while self.pos < pool.len() && pool[self.pos] <= lo {
                    self.pos += 1;
                }
                if self.pos == pool.len() {
                    return Err(Error::Infeasible(format!("index stream exhausted above {lo}")));
                }
                let v = pool[self.pos];
                self.pos += 1;
                v
            }
        };
        self.last = next;
        Ok(next)
    }
}

// ---------------------------------------------------------------------------
// Witnesses
// ---------------------------------------------------------------------------

/// What shape of combination a witness certifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SccKind {
    /// Convex combination of basis vectors.
    Basic,
    /// Convex combination of block vectors, anchored at each block's last
    /// support point.
    Block,
    /// Combination measured against a space's own level families; the
    /// coefficients must additionally be non-increasing.
    Relative,
}

/// A smallness-controlled combination plus everything needed to re-check it.
///
/// For `Basic` and `Relative` witnesses the anchors are the support itself
/// and the coefficients are the entries. For `Block` witnesses the anchors
/// are the chosen block ends and the coefficients the convex weights; the
/// vector then splits at the anchors back into the weighted blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SccWitness {
    pub vector: SparseVector,
    /// Strict smallness threshold.
    #[serde(with = "serde_rat")]
    pub epsilon: BigRational,
    /// Hierarchy level the combination is built for.
    pub level: u32,
    pub anchors: FiniteSet,
    #[serde(with = "serde_rat_vec")]
    pub anchor_coefficients: Vec<BigRational>,
    pub kind: SccKind,
}

fn basic_witness(
    entries: Vec<(Index, BigRational)>,
    epsilon: BigRational,
    level: u32,
) -> Result<SccWitness, Error> {
    let anchor_coefficients = entries.iter().map(|(_, c)| c.clone()).collect();
    let vector = SparseVector::from_entries(entries)?;
    Ok(SccWitness {
        anchors: vector.support(),
        vector,
        epsilon,
        level,
        anchor_coefficients,
        kind: SccKind::Basic,
    })
}

// ---------------------------------------------------------------------------
// Canonical construction
// ---------------------------------------------------------------------------

/// Canonical `(epsilon, n)` combination drawn from `stream`.
///
/// Level 1 takes the first `m` stream elements strictly above `m` with
/// weight `1/m` each, where `m` is the smallest integer with `m epsilon > 1`.
/// Higher levels stack `m` level-`(n-1)` combinations, the `k`-th built with
/// threshold `1/(2 w)` where `w` is the largest index consumed so far; that
/// threshold schedule is what keeps the lower-family mass under `epsilon`.
pub fn make_basic_scc(
    epsilon: &BigRational,
    n: u32,
    stream: &IndexStream,
) -> Result<SccWitness, Error> {
    if n == 0 {
        return Err(Error::bad_input("combination level must be at least 1"));
    }
    let mut cursor = Cursor::new(stream);
    let mut points_left = BASIC_POINT_CAP;
    let entries = grow_basic(epsilon, n, &mut cursor, 0, &mut points_left)?;
    basic_witness(entries, epsilon.clone(), n)
}

fn grow_basic(
    epsilon: &BigRational,
    n: u32,
    cursor: &mut Cursor,
    lo: Index,
    points_left: &mut u64,
) -> Result<Vec<(Index, BigRational)>, Error> {
    if n == 1 {
        let m = strict_next_int(&epsilon.recip(), "level-1 combination")?;
        if m > *points_left {
            return Err(Error::resource("basic combination support points", BASIC_POINT_CAP));
        }
        *points_left -= m;
        let floor = Index::try_from(m)
            .map_err(|_| Error::resource("basic combination support points", BASIC_POINT_CAP))?
            .max(lo);
        let coeff = BigRational::new(BigInt::one(), BigInt::from(m));
        let mut out = Vec::with_capacity(m as usize);
        let mut at = floor;
        for _ in 0..m {
            at = cursor.next_above(at)?;
            out.push((at, coeff.clone()));
        }
        return Ok(out);
    }
    let m = strict_next_int(&(ratio(2, 1) / epsilon), "stacked combination")?;
    let scale = BigRational::new(BigInt::one(), BigInt::from(m));
    let mut prev = Index::try_from(m)
        .map_err(|_| Error::resource("basic combination support points", BASIC_POINT_CAP))?
        .max(lo);
    let mut out = Vec::new();
    for _ in 0..m {
        let eps_k = BigRational::new(BigInt::one(), BigInt::from(2u64 * prev as u64));
        let sub = grow_basic(&eps_k, n - 1, cursor, prev, points_left)?;
        prev = sub.last().expect("sub-combination is nonempty").0;
        out.extend(sub.into_iter().map(|(i, c)| (i, c * &scale)));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Compact construction
// ---------------------------------------------------------------------------

/// Short `(epsilon, level)` combination on a doubling layout, for levels 1
/// and 2.
///
/// Level 1 is one uniform run of `d` points starting at `max(start, d)`.
/// Level 2 spreads mass `1/d` uniformly over each of `d` runs whose lengths
/// double, starting at `s = max(start, d)`; a one-set grab from a minimum
/// inside run `i` trades leftover run-`i` points one-for-two against the
/// half-weight points of run `i+1`, so the best grab is exactly `1/d`.
/// `d` is the smallest integer with `d epsilon > 1`, making the layout the
/// shortest of its shape. Higher levels have no short layout: their supports
/// must outgrow every lower family, which forces tower-sized supports.
pub fn make_compact_scc(
    epsilon: &BigRational,
    level: u32,
    start: Index,
) -> Result<SccWitness, Error> {
    let d = strict_next_int(&epsilon.recip(), "compact combination")?;
    match level {
        1 => {
            let s = (start as u64).max(d);
            if s + d > u32::MAX as u64 {
                return Err(Error::bad_input("compact combination outgrew the index range"));
            }
            let coeff = BigRational::new(BigInt::one(), BigInt::from(d));
            let entries = (s..s + d).map(|i| (i as Index, coeff.clone())).collect();
            basic_witness(entries, epsilon.clone(), 1)
        }
        2 => {
            let s = (start as u64).max(d);
            let total = s
                .checked_mul(2u64.checked_pow(d as u32).unwrap_or(u64::MAX).saturating_sub(1))
                .unwrap_or(u64::MAX);
            if total > BASIC_POINT_CAP {
                return Err(Error::resource("compact combination support points", BASIC_POINT_CAP));
            }
            if s * (1 << d) > u32::MAX as u64 {
                return Err(Error::bad_input("compact combination outgrew the index range"));
            }
            let mut entries = Vec::with_capacity(total as usize);
            for run in 0..d {
                let run_start = s << run;
                let run_len = run_start;
                let coeff = BigRational::new(BigInt::one(), BigInt::from(d * run_len));
                for i in run_start..run_start + run_len {
                    entries.push((i as Index, coeff.clone()));
                }
            }
            let w = basic_witness(entries, epsilon.clone(), 2)?;
            // The layout argument above is exact; re-check it anyway so a
            // regression here can never hand out a bad witness.
            if !check_basic_scc(&w.vector, epsilon, 2, None)? {
                return Err(Error::Infeasible(
                    "compact layout failed its own smallness audit".into(),
                ));
            }
            Ok(w)
        }
        0 => Err(Error::bad_input("combination level must be at least 1")),
        _ => Err(Error::bad_input(
            "compact layouts exist for levels 1 and 2 only; higher levels need tower-sized supports",
        )),
    }
}

// ---------------------------------------------------------------------------
// Checking
// ---------------------------------------------------------------------------

/// Checks the defining inequalities of an `(epsilon, n)` combination from
/// scratch: positive coefficients summing to one, support in the level-`n`
/// Schreier family, and every level-`(n-1)` member holding strictly less
/// than `epsilon` of the mass.
///
/// With `relative_to` set, the families come from the space instead: the
/// support must lie in the level-`n` family `S(k_n)`, every union of two
/// disjoint `S(k_n - 1)` sets must stay under `epsilon`, and the
/// coefficients must be non-increasing.
pub fn check_basic_scc(
    x: &SparseVector,
    epsilon: &BigRational,
    n: u32,
    relative_to: Option<&SpaceSpec>,
) -> Result<bool, Error> {
    if !epsilon.is_positive() {
        return Err(Error::bad_input("smallness threshold must be positive"));
    }
    if x.is_zero() {
        return Ok(false);
    }
    let entries: Vec<(Index, BigRational)> = x.iter().map(|(i, c)| (i, c.clone())).collect();
    if entries.iter().any(|(_, c)| !c.is_positive()) {
        return Ok(false);
    }
    let total: BigRational = entries.iter().map(|(_, c)| c.clone()).sum();
    if total != one() {
        return Ok(false);
    }
    let (member_family, grab_family) = match relative_to {
        None => {
            if n == 0 {
                return Err(Error::bad_input("combination level must be at least 1"));
            }
            (FamilyDescriptor::schreier(n), FamilyDescriptor::schreier(n - 1))
        }
        Some(spec) => {
            if n < 2 {
                return Err(Error::bad_input("relative combinations start at level 2"));
            }
            if entries.windows(2).any(|w| w[0].1 < w[1].1) {
                return Ok(false);
            }
            let level = spec
                .level(n)
                .ok_or_else(|| Error::bad_input(format!("space has no level {n}")))?;
            let k = match level.family {
                FamilyDescriptor::Schreier(k) => k,
                _ => {
                    return Err(Error::bad_input(
                        "relative checks need Schreier-family levels",
                    ))
                }
            };
            if k == 0 {
                return Err(Error::bad_input("relative checks need level families above S(0)"));
            }
            (
                FamilyDescriptor::schreier(k),
                FamilyDescriptor::prime(FamilyDescriptor::schreier(k - 1)),
            )
        }
    };
    if !member_family.member(&x.support()) {
        return Ok(false);
    }
    Ok(grab_family.max_weight(x)? < *epsilon)
}

/// Re-checks a witness from scratch. Basic and relative witnesses must carry
/// their support as anchors; block witnesses are re-sliced at their anchors
/// and their anchor skeleton must itself pass [`check_basic_scc`]. Norms are
/// not consulted here; seminormalizedness is a property of constructions and
/// sequence checks, not of the witness shape.
pub fn check_scc_witness(
    w: &SccWitness,
    relative_to: Option<&SpaceSpec>,
) -> Result<bool, Error> {
    if w.anchors.len() != w.anchor_coefficients.len() {
        return Err(Error::bad_input("witness anchors and coefficients differ in length"));
    }
    match w.kind {
        SccKind::Basic | SccKind::Relative => {
            if w.anchors != w.vector.support() {
                return Ok(false);
            }
            let matches = w
                .anchors
                .elements()
                .iter()
                .zip(&w.anchor_coefficients)
                .all(|(i, c)| w.vector.entry(*i) == *c);
            if !matches {
                return Ok(false);
            }
            let rel = match w.kind {
                SccKind::Relative => Some(relative_to.ok_or_else(|| {
                    Error::bad_input("relative witness needs a space to check against")
                })?),
                _ => None,
            };
            check_basic_scc(&w.vector, &w.epsilon, w.level, rel)
        }
        SccKind::Block => {
            if w.anchors.is_empty() || w.vector.is_zero() {
                return Ok(false);
            }
            let anchors = w.anchors.elements();
            if w.vector.max_support() > anchors.last().copied() {
                return Ok(false);
            }
            if w.anchor_coefficients.iter().any(|c| !c.is_positive()) {
                return Ok(false);
            }
            let mut prev = 0;
            for &a in anchors {
                if w.vector.restrict_interval(prev + 1, a).is_zero() {
                    return Ok(false);
                }
                prev = a;
            }
            let skeleton = SparseVector::from_entries(
                anchors.iter().zip(&w.anchor_coefficients).map(|(i, c)| (*i, c.clone())).collect(),
            )?;
            check_basic_scc(&skeleton, &w.epsilon, w.level, None)
        }
    }
}

// ---------------------------------------------------------------------------
// Block combinations
// ---------------------------------------------------------------------------

fn validate_blocks(blocks: &[SparseVector]) -> Result<(), Error> {
    if blocks.is_empty() {
        return Err(Error::bad_input("no blocks supplied"));
    }
    if blocks.iter().any(SparseVector::is_zero) {
        return Err(Error::bad_input("blocks must be nonzero"));
    }
    if blocks[0].min_support().unwrap() <= 2 {
        return Err(Error::bad_input("blocks must live above index 2"));
    }
    for pair in blocks.windows(2) {
        if pair[0].max_support() >= pair[1].min_support() {
            return Err(Error::bad_input("blocks must be successive"));
        }
    }
    Ok(())
}

/// Builds an `(epsilon, j)` combination over the anchors first, then returns
/// the same convex weights applied to the blocks. The witness records which
/// anchors were used and how many input blocks were consumed.
fn carve_block_scc(
    blocks: &[SparseVector],
    epsilon: &BigRational,
    j: u32,
) -> Result<(SccWitness, usize), Error> {
    let anchors: Vec<Index> = blocks.iter().map(|z| z.max_support().unwrap()).collect();
    let stream = IndexStream::Explicit(anchors.clone());
    let mut cursor = Cursor::new(&stream);
    let mut points_left = BASIC_POINT_CAP;
    let skeleton = grow_basic(epsilon, j, &mut cursor, 0, &mut points_left).map_err(|e| match e {
        Error::Infeasible(detail) => {
            Error::Infeasible(format!("block supply exhausted before the combination closed ({detail})"))
        }
        other => other,
    })?;
    let mut vector = SparseVector::zero();
    let mut used = Vec::with_capacity(skeleton.len());
    let mut coeffs = Vec::with_capacity(skeleton.len());
    let mut consumed = 0;
    for (anchor, coeff) in &skeleton {
        let idx = anchors.iter().position(|a| a == anchor).expect("anchor comes from the list");
        vector = vector.add(&blocks[idx].scale(coeff));
        used.push(*anchor);
        coeffs.push(coeff.clone());
        consumed = idx + 1;
    }
    let witness = SccWitness {
        vector,
        epsilon: epsilon.clone(),
        level: j,
        anchors: FiniteSet::new(used)?,
        anchor_coefficients: coeffs,
        kind: SccKind::Block,
    };
    Ok((witness, consumed))
}

/// Convex `(epsilon, j)` combination of successive blocks, anchored at each
/// block's last support point. Blocks whose anchors the underlying
/// construction skips are dropped. Errors when the blocks run out before the
/// combination closes.
pub fn make_block_scc(
    blocks: &[SparseVector],
    epsilon: &BigRational,
    j: u32,
) -> Result<SccWitness, Error> {
    if j == 0 {
        return Err(Error::bad_input("combination level must be at least 1"));
    }
    validate_blocks(blocks)?;
    carve_block_scc(blocks, epsilon, j).map(|(w, _)| w)
}

/// A seminormalized combination found by iterating [`make_block_scc`].
#[derive(Clone, Debug)]
pub struct Seminormalized {
    pub witness: SccWitness,
    /// 1 means it came directly from the supplied blocks.
    pub generation: u32,
    #[allow(clippy::struct_field_names)]
    pub norm: BigRational,
}

/// Repeatedly forms `(epsilon, j)` combinations of the (normalized) blocks,
/// then of the results, until one has norm at least `1/2`. Each generation
/// carves as many combinations as the supply allows; the supply running dry
/// is an infeasibility error, while reaching `generation_cap` without a
/// seminormalized combination reports the cap itself.
pub fn find_seminormalized_scc(
    blocks: &[SparseVector],
    epsilon: &BigRational,
    j: u32,
    spec: &SpaceSpec,
    generation_cap: u32,
    opts: &NormOptions,
) -> Result<Seminormalized, Error> {
    if generation_cap == 0 {
        return Err(Error::bad_input("generation cap must be at least 1"));
    }
    if j == 0 {
        return Err(Error::bad_input("combination level must be at least 1"));
    }
    validate_blocks(blocks)?;
    let exact = NormOptions { budget: opts.budget, require_exact: true };
    let normalize = |z: &SparseVector| -> Result<SparseVector, Error> {
        let value = norm(z, spec, &exact)?;
        Ok(z.scale(&value.value().recip()))
    };
    let mut current: Vec<SparseVector> =
        blocks.iter().map(&normalize).collect::<Result<_, _>>()?;
    for generation in 1..=generation_cap {
        let mut carved = Vec::new();
        let mut rest = current.as_slice();
        loop {
            match carve_block_scc(rest, epsilon, j) {
                Ok((witness, consumed)) => {
                    rest = &rest[consumed..];
                    carved.push(witness);
                    if rest.is_empty() {
                        break;
                    }
                }
                Err(Error::Infeasible(_)) | Err(Error::BadInput(_)) => break,
                Err(other) => return Err(other),
            }
        }
        if carved.is_empty() {
            return Err(Error::Infeasible(format!(
                "block supply exhausted at generation {generation}"
            )));
        }
        for witness in &carved {
            let value = norm(&witness.vector, spec, &exact)?;
            if *value.value() >= half() {
                return Ok(Seminormalized {
                    witness: witness.clone(),
                    generation,
                    norm: value.value().clone(),
                });
            }
        }
        current = carved.iter().map(|w| normalize(&w.vector)).collect::<Result<_, _>>()?;
    }
    Err(Error::GenerationCap {
        what: "no combination reached norm 1/2".into(),
        cap: generation_cap,
    })
}

// ---------------------------------------------------------------------------
// Nested tree systems
// ---------------------------------------------------------------------------

/// One node of a nested tree system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub depth: u32,
    /// Convex weight within the parent's combination; 1 at the root.
    #[serde(with = "serde_rat")]
    pub coefficient: BigRational,
    /// Index this node contributes when the system is truncated at its
    /// depth. The root contributes none.
    pub anchor: Option<Index>,
    pub children: Vec<usize>,
}

/// A family of combinations sharing one index tree: truncating the tree at
/// depth `r` and reading the depth-`r` anchors with path-product
/// coefficients yields the `r`-th vector of the system. Anchors strictly
/// increase in preorder, so each node's anchor precedes its whole subtree,
/// which in turn precedes the next sibling's anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedTrees {
    #[serde(with = "serde_rat")]
    pub epsilon: BigRational,
    /// Per-depth levels `j_1 .. j_n`.
    pub levels: Vec<u32>,
    /// Preorder; node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl NestedTrees {
    pub fn height(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn node_ids_at(&self, depth: u32) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].depth == depth).collect()
    }

    /// The truncation-`r` vector rooted at `node`: depth-`r` anchors below
    /// it, each weighted by the product of coefficients strictly below
    /// `node` on its path.
    pub fn vector(&self, node: usize, r: u32) -> SparseVector {
        let mut entries = Vec::new();
        let mut stack = vec![(node, one())];
        while let Some((idx, acc)) = stack.pop() {
            let n = &self.nodes[idx];
            if n.depth == r {
                if let Some(anchor) = n.anchor {
                    entries.push((anchor, acc));
                }
                continue;
            }
            for &child in &n.children {
                stack.push((child, &acc * &self.nodes[child].coefficient));
            }
        }
        SparseVector::from_entries(entries).expect("anchors are distinct")
    }

    /// Anchors strictly increase in preorder; this is the interleaving of a
    /// node's own anchor, its subtree, and its next sibling.
    pub fn interleaving_ok(&self) -> bool {
        let mut last = 0;
        let mut ok = true;
        self.preorder(0, &mut |n: &TreeNode| {
            if let Some(a) = n.anchor {
                ok &= a > last;
                last = a;
            }
        });
        ok
    }

    fn preorder(&self, idx: usize, f: &mut impl FnMut(&TreeNode)) {
        f(&self.nodes[idx]);
        for &child in &self.nodes[idx].children {
            self.preorder(child, f);
        }
    }
}

struct TreeBuilder<'a> {
    nodes: Vec<TreeNode>,
    cursor: Cursor<'a>,
    w: Index,
}

impl TreeBuilder<'_> {
    fn push(&mut self, parent: usize, coefficient: BigRational, anchor: Index) -> Result<usize, Error> {
        if self.nodes.len() >= TREE_NODE_CAP {
            return Err(Error::resource("nested tree nodes", TREE_NODE_CAP as u64));
        }
        let idx = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(TreeNode {
            parent: Some(parent),
            depth,
            coefficient,
            anchor: Some(anchor),
            children: Vec::new(),
        });
        self.nodes[parent].children.push(idx);
        Ok(idx)
    }

    /// Gives `parent` the children of an `(eps, rest[0])` combination, each
    /// child continuing with `rest[1..]`. `scale` carries the chunk weights
    /// accumulated by levels above 1.
    fn expand(
        &mut self,
        parent: usize,
        scale: &BigRational,
        eps: &BigRational,
        level_j: u32,
        rest: &[u32],
    ) -> Result<(), Error> {
        // Deeper truncations stack this combination under its successors,
        // which needs the stronger `m eps > 2` block count.
        let m = if level_j >= 2 || rest.len() >= 2 {
            strict_next_int(&(ratio(2, 1) / eps), "nested tree combination")?
        } else {
            strict_next_int(&eps.recip(), "nested tree combination")?
        };
        let m_idx = Index::try_from(m)
            .map_err(|_| Error::resource("nested tree nodes", TREE_NODE_CAP as u64))?;
        self.w = self.w.max(m_idx);
        let coeff = scale / BigRational::from(BigInt::from(m));
        for _ in 0..m {
            let sub_eps = BigRational::new(BigInt::one(), BigInt::from(2u64 * self.w as u64));
            if level_j == 1 {
                let anchor = self.cursor.next_above(self.w)?;
                self.w = anchor;
                let child = self.push(parent, coeff.clone(), anchor)?;
                if rest.len() >= 2 {
                    self.expand(child, &one(), &sub_eps, rest[1], &rest[1..])?;
                }
            } else {
                self.expand(parent, &coeff, &sub_eps, level_j - 1, rest)?;
            }
        }
        Ok(())
    }
}

/// Builds a nested tree system for `(epsilon, levels)` on `stream`. Anchors
/// are assigned in preorder, so the interleaving property holds by
/// construction; the per-child thresholds shrink as `1/(2 w)` with the
/// largest consumed index `w`, which is what makes every truncation of every
/// subtree a valid combination. Systems whose level sums force more than the
/// node cap fail with a resource error.
pub fn make_nested_trees(
    epsilon: &BigRational,
    levels: &[u32],
    stream: &IndexStream,
) -> Result<NestedTrees, Error> {
    if !epsilon.is_positive() {
        return Err(Error::bad_input("smallness threshold must be positive"));
    }
    if levels.is_empty() || levels.len() > 3 {
        return Err(Error::bad_input("nested systems take 1 to 3 levels"));
    }
    if levels.contains(&0) {
        return Err(Error::bad_input("combination levels must be at least 1"));
    }
    let root = TreeNode {
        parent: None,
        depth: 0,
        coefficient: one(),
        anchor: None,
        children: Vec::new(),
    };
    let mut builder = TreeBuilder { nodes: vec![root], cursor: Cursor::new(stream), w: 0 };
    builder.expand(0, &one(), epsilon, levels[0], levels)?;
    Ok(NestedTrees { epsilon: epsilon.clone(), levels: levels.to_vec(), nodes: builder.nodes })
}

// ---------------------------------------------------------------------------
// Rapidly increasing sequences
// ---------------------------------------------------------------------------

/// Which set of clauses a sequence is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RisContext {
    /// Weight-ratio growth, seminormalized combinations, and flatness.
    Plain,
    /// The variant whose blocks are relative combinations and whose growth
    /// clause counts signed heavy functionals on the preceding window.
    NormingSubset,
}

/// A candidate rapidly increasing sequence: blocks with their level indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RisWitness {
    pub blocks: Vec<SccWitness>,
    /// One level index per block.
    pub indices: Vec<u32>,
    pub context: RisContext,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseStatus {
    Pass,
    Fail,
    /// The clause could not be decided within desk budgets; only an
    /// over-approximation failed, or a value did not resolve.
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RisClause {
    pub id: String,
    pub status: ClauseStatus,
    pub details: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RisReport {
    pub clauses: Vec<RisClause>,
    /// Fail if any clause fails, else indeterminate if any clause is, else
    /// pass.
    pub status: ClauseStatus,
}

impl RisReport {
    fn from_clauses(clauses: Vec<RisClause>) -> Self {
        let status = if clauses.iter().any(|c| c.status == ClauseStatus::Fail) {
            ClauseStatus::Fail
        } else if clauses.iter().any(|c| c.status == ClauseStatus::Indeterminate) {
            ClauseStatus::Indeterminate
        } else {
            ClauseStatus::Pass
        };
        RisReport { clauses, status }
    }
}

struct ClauseSink {
    clauses: Vec<RisClause>,
}

impl ClauseSink {
    fn push(&mut self, id: impl Into<String>, status: ClauseStatus, details: impl Into<String>) {
        self.clauses.push(RisClause { id: id.into(), status, details: details.into() });
    }
}

/// Checks every clause of the rapidly-increasing-sequence definition and
/// reports each one separately. Ratio comparisons are non-strict unless
/// `strict_ratios` is set. Norm evaluations that exhaust their budget mark
/// their clause indeterminate rather than failing the report.
pub fn check_ris(
    w: &RisWitness,
    spec: &SpaceSpec,
    strict_ratios: bool,
    opts: &NormOptions,
) -> Result<RisReport, Error> {
    if w.blocks.len() != w.indices.len() {
        return Err(Error::bad_input("one level index per block is required"));
    }
    let mut sink = ClauseSink { clauses: Vec::new() };
    if w.blocks.is_empty() {
        sink.push("shape", ClauseStatus::Pass, "no blocks: vacuously rapidly increasing");
        return Ok(RisReport::from_clauses(sink.clauses));
    }
    let successive = w.blocks.windows(2).all(|p| {
        p[0].vector.max_support().unwrap_or(0) < p[1].vector.min_support().unwrap_or(Index::MAX)
    }) && w.blocks.iter().all(|b| !b.vector.is_zero());
    sink.push(
        "shape",
        if successive { ClauseStatus::Pass } else { ClauseStatus::Fail },
        if successive { "blocks are nonzero and successive".into() } else {
            "blocks must be nonzero and successive".to_string()
        },
    );
    match w.context {
        RisContext::Plain => check_plain_ris(w, spec, strict_ratios, opts, &mut sink)?,
        RisContext::NormingSubset => check_norming_subset_ris(w, spec, opts, &mut sink)?,
    }
    Ok(RisReport::from_clauses(sink.clauses))
}

fn theta_or_none(spec: &SpaceSpec, k: u32) -> Option<BigRational> {
    spec.theta(k)
}

fn seminormalized_clause(
    sink: &mut ClauseSink,
    id: String,
    vector: &SparseVector,
    spec: &SpaceSpec,
    opts: &NormOptions,
) -> Result<(), Error> {
    let exact = NormOptions { budget: opts.budget, require_exact: true };
    match norm(vector, spec, &exact) {
        Ok(r) => {
            let v = r.value();
            if *v >= half() {
                sink.push(id, ClauseStatus::Pass, format!("norm {} is at least 1/2", format_rational(v)));
            } else {
                sink.push(id, ClauseStatus::Fail, format!("norm {} is below 1/2", format_rational(v)));
            }
        }
        Err(Error::ResourceLimit { what, budget }) => {
            sink.push(
                id,
                ClauseStatus::Indeterminate,
                format!("norm did not resolve within budget: {what} (budget {budget})"),
            );
        }
        Err(other) => return Err(other),
    }
    Ok(())
}

fn check_plain_ris(
    w: &RisWitness,
    spec: &SpaceSpec,
    strict_ratios: bool,
    opts: &NormOptions,
    sink: &mut ClauseSink,
) -> Result<(), Error> {
    let n = w.blocks.len();
    let t = &w.indices;
    // (a) consecutive weight ratios all exceed 2 and never shrink.
    let mut ratios = Vec::new();
    let mut missing = None;
    for k in 0..n.saturating_sub(1) {
        match (theta_or_none(spec, t[k]), theta_or_none(spec, t[k + 1])) {
            (Some(a), Some(b)) => ratios.push(a / b),
            _ => {
                missing = Some(format!("space lacks level {} or {}", t[k], t[k + 1]));
                break;
            }
        }
    }
    if let Some(msg) = missing {
        sink.push("a-ratios", ClauseStatus::Indeterminate, msg);
    } else if n <= 1 {
        sink.push("a-ratios", ClauseStatus::Pass, "fewer than two blocks: nothing to compare");
    } else {
        let two = ratio(2, 1);
        let all_big = ratios.iter().all(|r| *r > two);
        let monotone = ratios
            .windows(2)
            .all(|p| if strict_ratios { p[1] > p[0] } else { p[1] >= p[0] });
        let rendered: Vec<String> = ratios.iter().map(format_rational).collect();
        let status = if all_big && monotone { ClauseStatus::Pass } else { ClauseStatus::Fail };
        sink.push(
            "a-ratios",
            status,
            format!(
                "ratios [{}] must each exceed 2 and be {}decreasing-free",
                rendered.join(", "),
                if strict_ratios { "strictly " } else { "" },
            ),
        );
    }
    // (b) each block is a seminormalized combination at its level with
    // threshold at most the squared weight.
    for (k, block) in w.blocks.iter().enumerate() {
        let id = format!("b-combination-{}", k + 1);
        let Some(theta) = theta_or_none(spec, t[k]) else {
            sink.push(id, ClauseStatus::Indeterminate, format!("space lacks level {}", t[k]));
            continue;
        };
        let theta_sq = &theta * &theta;
        if block.level != t[k] {
            sink.push(
                id,
                ClauseStatus::Fail,
                format!("witness level {} does not match index {}", block.level, t[k]),
            );
            continue;
        }
        if block.epsilon > theta_sq {
            sink.push(
                id,
                ClauseStatus::Fail,
                format!(
                    "threshold {} exceeds squared weight {}",
                    format_rational(&block.epsilon),
                    format_rational(&theta_sq)
                ),
            );
            continue;
        }
        match check_scc_witness(block, None) {
            Ok(true) => {}
            Ok(false) => {
                sink.push(id, ClauseStatus::Fail, "witness fails its combination check");
                continue;
            }
            Err(Error::ResourceLimit { what, budget }) => {
                sink.push(
                    id,
                    ClauseStatus::Indeterminate,
                    format!("combination check hit a budget: {what} (budget {budget})"),
                );
                continue;
            }
            Err(e) => {
                sink.push(id, ClauseStatus::Fail, format!("malformed witness: {e}"));
                continue;
            }
        }
        seminormalized_clause(sink, id, &block.vector, spec, opts)?;
    }
    // (c) each block's l1 mass fits under the next weight ratio.
    for k in 0..n.saturating_sub(1) {
        let id = format!("c-flatness-{}", k + 1);
        match (theta_or_none(spec, t[k]), theta_or_none(spec, t[k + 1])) {
            (Some(a), Some(b)) => {
                let bound = a / b;
                let mass = w.blocks[k].vector.l1();
                let status = if mass <= bound { ClauseStatus::Pass } else { ClauseStatus::Fail };
                sink.push(
                    id,
                    status,
                    format!(
                        "l1 mass {} against ratio {}",
                        format_rational(&mass),
                        format_rational(&bound)
                    ),
                );
            }
            _ => {
                sink.push(
                    id,
                    ClauseStatus::Indeterminate,
                    format!("space lacks level {} or {}", t[k], t[k + 1]),
                );
            }
        }
    }
    Ok(())
}

/// Counts, as an upper bound, the signed functionals on a window of length
/// `l` whose coordinates are all products of level weights above `tau`:
/// every coordinate is zero or a signed product, so `(1 + 2 D)^l - 1` counts
/// everything, with `D` the number of weight products above `tau` (the empty
/// product included).
fn signed_count_upper_bound(
    spec: &SpaceSpec,
    window: u64,
    tau: &BigRational,
) -> Result<BigUint, Error> {
    let mut weights = Vec::new();
    let mut k = spec.min_level();
    loop {
        match spec.theta(k) {
            Some(th) => {
                if th > *tau {
                    weights.push(th);
                } else {
                    break;
                }
            }
            None => break,
        }
        if let Some(max) = spec.max_level() {
            if k >= max {
                break;
            }
        }
        k += 1;
    }
    // Distinct products above tau, counted as multisets over the weights.
    let mut budget = WEIGHT_PRODUCT_CAP;
    fn products(
        weights: &[BigRational],
        from: usize,
        acc: &BigRational,
        tau: &BigRational,
        budget: &mut u64,
    ) -> Result<u64, Error> {
        let mut count = 0;
        for i in from..weights.len() {
            let next = acc * &weights[i];
            if next <= *tau {
                continue;
            }
            if *budget == 0 {
                return Err(Error::resource("weight product enumeration", WEIGHT_PRODUCT_CAP));
            }
            *budget -= 1;
            count += 1 + products(weights, i, &next, tau, budget)?;
        }
        Ok(count)
    }
    let d = 1 + products(&weights, 0, &one(), tau, &mut budget)?;
    let base = BigUint::from(2 * d + 1);
    Ok(base.pow(u32::try_from(window).map_err(|_| {
        Error::bad_input("window outgrew the index range")
    })?) - BigUint::one())
}

fn check_norming_subset_ris(
    w: &RisWitness,
    spec: &SpaceSpec,
    opts: &NormOptions,
    sink: &mut ClauseSink,
) -> Result<(), Error> {
    let n = w.blocks.len();
    let j = &w.indices;
    // (i) level indices start at 2 and strictly increase.
    let increasing = j.windows(2).all(|p| p[0] < p[1]);
    let start_ok = j[0] >= 2;
    sink.push(
        "i-levels",
        if increasing && start_ok { ClauseStatus::Pass } else { ClauseStatus::Fail },
        format!("indices {:?} must start at 2 or above and strictly increase", j),
    );
    // (ii) each block is a seminormalized relative combination with
    // threshold at most the fourth power of its level weight.
    for (k, block) in w.blocks.iter().enumerate() {
        let id = format!("ii-combination-{}", k + 1);
        let Some(theta) = theta_or_none(spec, j[k]) else {
            sink.push(id, ClauseStatus::Indeterminate, format!("space lacks level {}", j[k]));
            continue;
        };
        let theta4 = (&theta * &theta) * (&theta * &theta);
        if block.level != j[k] {
            sink.push(
                id,
                ClauseStatus::Fail,
                format!("witness level {} does not match index {}", block.level, j[k]),
            );
            continue;
        }
        if block.kind != SccKind::Relative {
            sink.push(id, ClauseStatus::Fail, "block witnesses must be relative combinations");
            continue;
        }
        if block.epsilon > theta4 {
            sink.push(
                id,
                ClauseStatus::Fail,
                format!(
                    "threshold {} exceeds fourth-power weight {}",
                    format_rational(&block.epsilon),
                    format_rational(&theta4)
                ),
            );
            continue;
        }
        match check_scc_witness(block, Some(spec)) {
            Ok(true) => {}
            Ok(false) => {
                sink.push(id, ClauseStatus::Fail, "witness fails its relative combination check");
                continue;
            }
            Err(Error::ResourceLimit { what, budget }) => {
                sink.push(
                    id,
                    ClauseStatus::Indeterminate,
                    format!("combination check hit a budget: {what} (budget {budget})"),
                );
                continue;
            }
            Err(e) => {
                sink.push(id, ClauseStatus::Fail, format!("malformed witness: {e}"));
                continue;
            }
        }
        seminormalized_clause(sink, id, &block.vector, spec, opts)?;
    }
    // (iii) the signed heavy functionals on [1, l_k] at threshold 1/2^{n_k}
    // are outnumbered by both the next weight denominator and the next
    // block's first index.
    for k in 0..n.saturating_sub(1) {
        let id = format!("iii-growth-{}", k + 1);
        let (Some(theta_k), Some(theta_next)) =
            (theta_or_none(spec, j[k]), theta_or_none(spec, j[k + 1]))
        else {
            sink.push(
                id,
                ClauseStatus::Indeterminate,
                format!("space lacks level {} or {}", j[k], j[k + 1]),
            );
            continue;
        };
        let l_k = w.blocks[k].vector.max_support().unwrap_or(0);
        // Smallest n with l_k / 2^n below the level weight.
        let mut n_k = 0u32;
        let mut tau = BigRational::from(BigInt::from(l_k));
        while tau >= theta_k {
            tau /= ratio(2, 1);
            n_k += 1;
            if n_k > 512 {
                break;
            }
        }
        let next_min = w.blocks[k + 1].vector.min_support().unwrap_or(0);
        let m_next = theta_next.recip();
        let exact = enumerate_heavy_supports(spec, l_k, &tau, GROWTH_PROFILE_CAP);
        match exact {
            Ok(h) if h.complete && h.signed_count < u64::MAX => {
                let count = h.signed_count;
                let count_rat = BigRational::from(BigInt::from(count));
                let pass = m_next > count_rat && BigInt::from(next_min) > BigInt::from(count);
                sink.push(
                    id,
                    if pass { ClauseStatus::Pass } else { ClauseStatus::Fail },
                    format!(
                        "window {l_k} at threshold {} holds {count} signed heavy functionals; next weight denominator {} and next block start {next_min} must both exceed it",
                        format_rational(&tau),
                        format_rational(&m_next),
                    ),
                );
            }
            Ok(_) | Err(Error::ResourceLimit { .. }) => {
                match signed_count_upper_bound(spec, l_k as u64, &tau) {
                    Ok(bound) => {
                        let bound_int = BigInt::from(bound.clone());
                        let pass = m_next > BigRational::from(bound_int.clone())
                            && BigInt::from(next_min) > bound_int;
                        if pass {
                            sink.push(
                                id,
                                ClauseStatus::Pass,
                                format!(
                                    "certified upper bound {bound} on signed heavy functionals stays below the next weight denominator and block start"
                                ),
                            );
                        } else {
                            sink.push(
                                id,
                                ClauseStatus::Indeterminate,
                                format!(
                                    "upper bound {bound} is not small enough to decide; the true count may still be"
                                ),
                            );
                        }
                    }
                    Err(Error::ResourceLimit { what, budget }) => {
                        sink.push(
                            id,
                            ClauseStatus::Indeterminate,
                            format!("bound enumeration hit a budget: {what} (budget {budget})"),
                        );
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e) => return Err(e),
        }
    }
    // (iv) each block's l1 mass fits under the next consecutive weight
    // ratio.
    for k in 0..n.saturating_sub(1) {
        let id = format!("iv-flatness-{}", k + 1);
        if j[k + 1] < 1 {
            sink.push(id, ClauseStatus::Indeterminate, "next level index below 1".to_string());
            continue;
        }
        match (theta_or_none(spec, j[k + 1] - 1), theta_or_none(spec, j[k + 1])) {
            (Some(a), Some(b)) => {
                let bound = a / b;
                let mass = w.blocks[k].vector.l1();
                let status = if mass <= bound { ClauseStatus::Pass } else { ClauseStatus::Fail };
                sink.push(
                    id,
                    status,
                    format!(
                        "l1 mass {} against consecutive ratio {}",
                        format_rational(&mass),
                        format_rational(&bound)
                    ),
                );
            }
            _ => {
                sink.push(
                    id,
                    ClauseStatus::Indeterminate,
                    format!("space lacks level {} or {}", j[k + 1] - 1, j[k + 1]),
                );
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rational;
    use crate::spec::{Budget, Level, LevelRule, SpaceSpec, Variant};

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn unit(i: Index) -> SparseVector {
        SparseVector::unit(i)
    }

    fn plain_spec(levels: Vec<(u32, &str)>) -> SpaceSpec {
        let levels = levels
            .into_iter()
            .map(|(k, th)| Level { family: FamilyDescriptor::schreier(k), theta: rat(th) })
            .collect();
        SpaceSpec::new("test", Variant::Plain, LevelRule::Explicit(levels)).unwrap()
    }

    #[test]
    fn frozen_basic_combination_on_evens() {
        let w = make_basic_scc(&rat("1/2"), 1, &IndexStream::evens()).unwrap();
        let expected = SparseVector::from_entries(vec![
            (4, rat("1/3")),
            (6, rat("1/3")),
            (8, rat("1/3")),
        ])
        .unwrap();
        assert_eq!(w.vector, expected);
        assert_eq!(w.anchors, FiniteSet::new(vec![4, 6, 8]).unwrap());
        assert_eq!(w.anchor_coefficients, vec![rat("1/3"); 3]);
        assert_eq!(w.kind, SccKind::Basic);
        assert!(check_scc_witness(&w, None).unwrap());
    }

    #[test]
    fn checker_accepts_the_frozen_example_and_rejects_neighbours() {
        let good = SparseVector::from_entries(vec![
            (4, rat("1/3")),
            (6, rat("1/3")),
            (8, rat("1/3")),
        ])
        .unwrap();
        assert!(check_basic_scc(&good, &rat("1/2"), 1, None).unwrap());
        // A single basis vector concentrates all mass in one singleton.
        assert!(!check_basic_scc(&unit(5), &rat("1/2"), 1, None).unwrap());
        // Half the mass in one point is not strictly under 1/2.
        let pair =
            SparseVector::from_entries(vec![(4, rat("1/2")), (6, rat("1/2"))]).unwrap();
        assert!(!check_basic_scc(&pair, &rat("1/2"), 1, None).unwrap());
        // Coefficients must sum to one.
        let short = SparseVector::from_entries(vec![(4, rat("1/3")), (6, rat("1/3"))]).unwrap();
        assert!(!check_basic_scc(&short, &rat("1/2"), 1, None).unwrap());
        // Negative entries are not convex combinations.
        let signed =
            SparseVector::from_entries(vec![(4, rat("4/3")), (6, rat("-1/3"))]).unwrap();
        assert!(!check_basic_scc(&signed, &rat("1/2"), 1, None).unwrap());
    }

    #[test]
    fn canonical_level_two_shape() {
        let w = make_basic_scc(&rat("1/2"), 2, &IndexStream::naturals()).unwrap();
        // Five stacks of 11, 45, 181, 725, 2901 points.
        assert_eq!(w.vector.support_len(), 3863);
        assert_eq!(w.vector.min_support(), Some(12));
        assert_eq!(w.vector.max_support(), Some(5802));
        assert!(check_basic_scc(&w.vector, &rat("1/2"), 2, None).unwrap());
    }

    #[test]
    fn compact_level_two_pins_the_grab_at_one_over_d() {
        let w = make_compact_scc(&rat("1/2"), 2, 3).unwrap();
        assert_eq!(w.vector.support_len(), 21);
        assert_eq!(w.vector.min_support(), Some(3));
        assert_eq!(w.vector.max_support(), Some(23));
        let grab = FamilyDescriptor::schreier(1).max_weight(&w.vector).unwrap();
        assert_eq!(grab, rat("1/3"));

        let w = make_compact_scc(&rat("1/3"), 2, 4).unwrap();
        assert_eq!(w.vector.support_len(), 60);
        assert_eq!(w.vector.max_support(), Some(63));
        let grab = FamilyDescriptor::schreier(1).max_weight(&w.vector).unwrap();
        assert_eq!(grab, rat("1/4"));
    }

    #[test]
    fn compact_level_one_is_a_uniform_run() {
        let w = make_compact_scc(&rat("2/5"), 1, 10).unwrap();
        let expected = SparseVector::from_entries(vec![
            (10, rat("1/3")),
            (11, rat("1/3")),
            (12, rat("1/3")),
        ])
        .unwrap();
        assert_eq!(w.vector, expected);
        assert!(check_basic_scc(&w.vector, &rat("2/5"), 1, None).unwrap());
    }

    #[test]
    fn compact_rejects_higher_levels() {
        assert!(matches!(
            make_compact_scc(&rat("1/2"), 3, 3),
            Err(Error::BadInput(_))
        ));
    }

    #[test]
    fn block_combination_reuses_the_anchor_recursion() {
        let blocks = vec![unit(4), unit(6), unit(8)];
        let w = make_block_scc(&blocks, &rat("1/2"), 1).unwrap();
        let expected = SparseVector::from_entries(vec![
            (4, rat("1/3")),
            (6, rat("1/3")),
            (8, rat("1/3")),
        ])
        .unwrap();
        assert_eq!(w.vector, expected);
        assert_eq!(w.anchors, FiniteSet::new(vec![4, 6, 8]).unwrap());
        assert_eq!(w.kind, SccKind::Block);
        assert!(check_scc_witness(&w, None).unwrap());

        let wide = vec![
            SparseVector::from_entries(vec![(3, rat("1/2")), (4, rat("1/2"))]).unwrap(),
            SparseVector::from_entries(vec![(5, rat("1")), (6, rat("1"))]).unwrap(),
            SparseVector::from_entries(vec![(7, rat("2")), (8, rat("1"))]).unwrap(),
        ];
        let w = make_block_scc(&wide, &rat("1/2"), 1).unwrap();
        assert_eq!(w.anchors, FiniteSet::new(vec![4, 6, 8]).unwrap());
        assert_eq!(w.vector.entry(3), rat("1/6"));
        assert_eq!(w.vector.entry(7), rat("2/3"));
        assert!(check_scc_witness(&w, None).unwrap());
    }

    #[test]
    fn block_combination_errors_when_supply_is_short() {
        let blocks = vec![unit(4), unit(6)];
        assert!(matches!(
            make_block_scc(&blocks, &rat("1/2"), 1),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn tampered_block_witness_fails_its_check() {
        let blocks = vec![unit(4), unit(6), unit(8)];
        let mut w = make_block_scc(&blocks, &rat("1/2"), 1).unwrap();
        w.anchor_coefficients[0] = rat("1/2");
        assert!(!check_scc_witness(&w, None).unwrap());
    }

    #[test]
    fn seminormalized_found_in_one_generation() {
        // One level of weight 1/2: the first combination already has norm
        // 1/2 through the block split.
        let spec = plain_spec(vec![(1, "1/2")]);
        let blocks: Vec<SparseVector> = (4..10).map(unit).collect();
        let found = find_seminormalized_scc(
            &blocks,
            &rat("1/2"),
            1,
            &spec,
            8,
            &NormOptions::default(),
        )
        .unwrap();
        assert_eq!(found.generation, 1);
        assert_eq!(found.norm, rat("1/2"));
        assert_eq!(found.witness.anchors, FiniteSet::new(vec![4, 5, 6]).unwrap());
    }

    #[test]
    fn generation_cap_names_the_cap() {
        // Weight 1/4 keeps first-generation combinations at norm 1/3.
        let spec = SpaceSpec::new(
            "thin",
            Variant::Plain,
            LevelRule::GeometricSchreier { delta: rat("1/4") },
        )
        .unwrap();
        let blocks: Vec<SparseVector> = (4..13).map(unit).collect();
        let err = find_seminormalized_scc(
            &blocks,
            &rat("1/2"),
            1,
            &spec,
            1,
            &NormOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::GenerationCap { cap, .. } => assert_eq!(cap, 1),
            other => panic!("expected a generation cap error, got {other}"),
        }
    }

    #[test]
    fn nested_single_level_reduces_to_the_basic_combination() {
        let trees = make_nested_trees(&rat("1/2"), &[1], &IndexStream::evens()).unwrap();
        assert_eq!(trees.nodes.len(), 4);
        assert!(trees.interleaving_ok());
        let basic = make_basic_scc(&rat("1/2"), 1, &IndexStream::evens()).unwrap();
        assert_eq!(trees.vector(0, 1), basic.vector);
    }

    #[test]
    fn nested_two_level_system_checks_at_every_truncation() {
        let trees = make_nested_trees(&rat("1"), &[1, 1], &IndexStream::naturals()).unwrap();
        assert!(trees.interleaving_ok());
        assert!(check_basic_scc(&trees.vector(0, 1), &rat("1"), 1, None).unwrap());
        assert!(check_basic_scc(&trees.vector(0, 2), &rat("1"), 2, None).unwrap());
        for idx in trees.node_ids_at(1) {
            let leaf_scc = trees.vector(idx, 2);
            assert!(check_basic_scc(&leaf_scc, &rat("1"), 1, None).unwrap());
            // The child's combination is strictly finer than the system
            // threshold asks.
            let node = &trees.nodes[idx];
            let anchor = node.anchor.unwrap();
            assert!(leaf_scc.min_support().unwrap() > anchor);
        }
    }

    #[test]
    fn nested_three_ones_exhaust_the_node_cap() {
        let err =
            make_nested_trees(&rat("1/2"), &[1, 1, 1], &IndexStream::naturals()).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { .. }));
    }

    #[test]
    fn plain_ris_single_block_passes() {
        let spec = plain_spec(vec![(1, "99/100"), (2, "12/25")]);
        let block = make_compact_scc(&rat("9801/10000"), 1, 3).unwrap();
        let w = RisWitness { blocks: vec![block], indices: vec![1], context: RisContext::Plain };
        let report = check_ris(&w, &spec, false, &NormOptions::default()).unwrap();
        assert_eq!(report.status, ClauseStatus::Pass);
    }

    #[test]
    fn plain_ris_reports_each_clause() {
        let spec = plain_spec(vec![(1, "99/100"), (2, "12/25")]);
        let b1 = make_compact_scc(&rat("9801/10000"), 1, 3).unwrap();
        let b2 = make_compact_scc(&rat("144/625"), 2, 10).unwrap();
        assert!(b2.vector.min_support().unwrap() > b1.vector.max_support().unwrap());
        let w = RisWitness {
            blocks: vec![b1, b2],
            indices: vec![1, 2],
            context: RisContext::Plain,
        };
        // A small budget keeps the wide second block from resolving, which
        // must surface as indeterminate, not as a failure.
        let opts = NormOptions { budget: Budget::new(50_000), require_exact: true };
        let report = check_ris(&w, &spec, false, &opts).unwrap();
        let by_id = |id: &str| {
            report
                .clauses
                .iter()
                .find(|c| c.id == id)
                .unwrap_or_else(|| panic!("missing clause {id}"))
                .status
        };
        assert_eq!(by_id("shape"), ClauseStatus::Pass);
        // 99/100 over 12/25 is 33/16, above 2.
        assert_eq!(by_id("a-ratios"), ClauseStatus::Pass);
        assert_eq!(by_id("b-combination-1"), ClauseStatus::Pass);
        assert_eq!(by_id("b-combination-2"), ClauseStatus::Indeterminate);
        assert_eq!(by_id("c-flatness-1"), ClauseStatus::Pass);
        assert_eq!(report.status, ClauseStatus::Indeterminate);
    }

    #[test]
    fn plain_ris_fails_on_a_thin_ratio() {
        let spec = plain_spec(vec![(1, "1/2"), (2, "1/3")]);
        let b1 = make_compact_scc(&rat("1/4"), 1, 3).unwrap();
        let b2 = make_compact_scc(&rat("1/9"), 1, 20).unwrap();
        let w = RisWitness {
            blocks: vec![b1, b2],
            indices: vec![1, 2],
            context: RisContext::Plain,
        };
        let report = check_ris(&w, &spec, false, &NormOptions::default()).unwrap();
        let ratios = report.clauses.iter().find(|c| c.id == "a-ratios").unwrap();
        assert_eq!(ratios.status, ClauseStatus::Fail);
        assert_eq!(report.status, ClauseStatus::Fail);
    }

    #[test]
    fn empty_ris_is_vacuously_rapidly_increasing() {
        let spec = plain_spec(vec![(1, "1/2")]);
        let w = RisWitness { blocks: vec![], indices: vec![], context: RisContext::Plain };
        let report = check_ris(&w, &spec, false, &NormOptions::default()).unwrap();
        assert_eq!(report.status, ClauseStatus::Pass);
    }

    #[test]
    fn index_stream_parsing_and_exhaustion() {
        assert_eq!(IndexStream::parse("evens").unwrap(), IndexStream::evens());
        assert_eq!(
            IndexStream::parse("5:3").unwrap(),
            IndexStream::Arithmetic { start: 5, step: 3 }
        );
        assert_eq!(
            IndexStream::parse("4, 6, 8").unwrap(),
            IndexStream::Explicit(vec![4, 6, 8])
        );
        assert!(IndexStream::parse("8,6").is_err());
        assert!(IndexStream::parse("0:2").is_err());

        let stream = IndexStream::explicit(vec![4, 6]).unwrap();
        let mut cursor = Cursor::new(&stream);
        assert_eq!(cursor.next_above(3).unwrap(), 4);
        assert_eq!(cursor.next_above(0).unwrap(), 6);
        assert!(matches!(cursor.next_above(0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn witness_serialization_round_trips() {
        let w = make_basic_scc(&rat("1/2"), 1, &IndexStream::evens()).unwrap();
        let json = serde_json::to_string(&w).unwrap();
        let back: SccWitness = serde_json::from_str(&json).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn relative_check_needs_decreasing_coefficients_and_space_families() {
        let spec = SpaceSpec::new(
            "bm",
            Variant::BoundedlyModified(1),
            LevelRule::Explicit(vec![
                Level { family: FamilyDescriptor::schreier(1), theta: rat("1/2") },
                Level { family: FamilyDescriptor::schreier(11), theta: rat("1/5") },
            ]),
        )
        .unwrap();
        // Thresholds above 1 are structurally checkable at desk scale even
        // though no single set stays under a sub-1 threshold here.
        let pair =
            SparseVector::from_entries(vec![(5, rat("1/2")), (6, rat("1/2"))]).unwrap();
        assert!(check_basic_scc(&pair, &rat("3/2"), 2, Some(&spec)).unwrap());
        assert!(!check_basic_scc(&pair, &rat("1/2"), 2, Some(&spec)).unwrap());
        let increasing =
            SparseVector::from_entries(vec![(5, rat("1/3")), (6, rat("2/3"))]).unwrap();
        assert!(!check_basic_scc(&increasing, &rat("3/2"), 2, Some(&spec)).unwrap());
        assert!(check_basic_scc(&pair, &rat("3/2"), 1, Some(&spec)).is_err());
    }
}
