//! Regular families of finite index sets and their membership algorithms.
//!
//! Every family built here is hereditary (closed under subsets), spreading
//! (closed under moving elements to the right while keeping them distinct),
//! and compact. Four constructors cover all uses:
//!
//! * `S(n)`: Schreier family of order `n`. `S(0)` holds the empty set and
//!   singletons; `S(n+1)` holds unions of `d` successive `S(n)` sets with
//!   `d <= min` of the first set.
//! * `A(k)`: sets of cardinality at most `k`.
//! * `B(M,N)`: sets splitting into successive `N` chunks whose minima form an
//!   `M` set.
//! * `P(F)`: sets splitting into two disjoint `F` sets.
//!
//! Membership uses greedy maximal-prefix decomposition, which is exact for
//! hereditary spreading families: if the greedy parse fails, no other split
//! succeeds. For `P(F)` the greedy form relies on the normal form where one
//! part is an initial segment; unit tests check it against exhaustive
//! two-colourings.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::vector::SparseVector;

/// Basis index. Indices are 1-based throughout.
pub type Index = u32;

/// Support cap for the modified-membership oracle (exponential search).
const MODIFIED_SUPPORT_CAP: usize = 14;
/// Step budget for the modified-membership oracle.
const MODIFIED_BUDGET: u64 = 40_000_000;
/// Transition budget for the generic maximal-weight dynamic program.
const WEIGHT_BUDGET: u64 = 25_000_000;
/// Support cap for the dedicated two-part Schreier weight scan.
const PRIME_SCHREIER_WEIGHT_CAP: usize = 6_000;
/// Candidate budget for maximal-member enumeration.
const MAXIMAL_BUDGET: u64 = 1 << 24;
/// Widest window accepted by maximal-member enumeration.
const MAXIMAL_WINDOW_CAP: u32 = 30;

/// A finite set of indices, stored strictly increasing.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<Index>", into = "Vec<Index>")]
pub struct FiniteSet(Vec<Index>);

impl FiniteSet {
    /// Builds a set from arbitrary input, sorting it. Duplicates and zeros
    /// are rejected.
    pub fn new(mut elements: Vec<Index>) -> Result<Self, Error> {
        elements.sort_unstable();
        if elements.first() == Some(&0) {
            return Err(Error::bad_input("indices start at 1"));
        }
        if elements.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::bad_input("duplicate index in set"));
        }
        Ok(FiniteSet(elements))
    }

    pub fn empty() -> Self {
        FiniteSet(Vec::new())
    }

    pub fn singleton(e: Index) -> Self {
        FiniteSet(vec![e])
    }

    pub fn elements(&self) -> &[Index] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> Option<Index> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<Index> {
        self.0.last().copied()
    }

    pub fn contains(&self, e: Index) -> bool {
        self.0.binary_search(&e).is_ok()
    }

    /// Parses `2,3,6` or `{2,3,6}`; empty input yields the empty set.
    pub fn parse(s: &str) -> Result<Self, Error> {
        let inner = s.trim().trim_start_matches('{').trim_end_matches('}').trim();
        if inner.is_empty() {
            return Ok(FiniteSet::empty());
        }
        let mut v = Vec::new();
        for part in inner.split(',') {
            let e: Index = part
                .trim()
                .parse()
                .map_err(|_| Error::bad_input(format!("bad index {part:?} in set {s:?}")))?;
            v.push(e);
        }
        FiniteSet::new(v)
    }
}

impl TryFrom<Vec<Index>> for FiniteSet {
    type Error = Error;
    fn try_from(v: Vec<Index>) -> Result<Self, Error> {
        FiniteSet::new(v)
    }
}

impl From<FiniteSet> for Vec<Index> {
    fn from(s: FiniteSet) -> Vec<Index> {
        s.0
    }
}

impl fmt::Display for FiniteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "}}")
    }
}

/// Description of a regular family.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FamilyDescriptor {
    /// Schreier family of the given order.
    Schreier(u32),
    /// Sets of at most the given cardinality.
    Cardinality(u32),
    /// Successive chunks from the second family, minima in the first.
    Bracket(Box<FamilyDescriptor>, Box<FamilyDescriptor>),
    /// Unions of two disjoint sets from the base family.
    Prime(Box<FamilyDescriptor>),
}

impl FamilyDescriptor {
    pub fn schreier(n: u32) -> Self {
        FamilyDescriptor::Schreier(n)
    }

    pub fn cardinality(k: u32) -> Self {
        FamilyDescriptor::Cardinality(k)
    }

    pub fn bracket(outer: FamilyDescriptor, inner: FamilyDescriptor) -> Self {
        FamilyDescriptor::Bracket(Box::new(outer), Box::new(inner))
    }

    pub fn prime(base: FamilyDescriptor) -> Self {
        FamilyDescriptor::Prime(Box::new(base))
    }

    /// Exact membership test.
    pub fn member(&self, a: &FiniteSet) -> bool {
        if a.is_empty() {
            return true;
        }
        let v = a.elements();
        match self {
            FamilyDescriptor::Schreier(n) => sch_prefix_end(v, 0, *n) == v.len(),
            FamilyDescriptor::Cardinality(k) => v.len() <= *k as usize,
            FamilyDescriptor::Bracket(m, n) => match greedy_chunk_mins(v, n) {
                Some(mins) => m.member(&FiniteSet(mins)),
                None => false,
            },
            FamilyDescriptor::Prime(b) => {
                let split = max_prefix_len(v, b);
                b.member(&FiniteSet(v[split..].to_vec()))
            }
        }
    }

    /// Membership when successive chunks are relaxed to pairwise disjoint
    /// ones. Exponential in the support, hence the hard cap; exact within it.
    pub fn member_modified(&self, a: &FiniteSet) -> Result<bool, Error> {
        if a.len() <= 1 {
            return Ok(self.member(a));
        }
        if a.len() > MODIFIED_SUPPORT_CAP {
            return Err(Error::resource(
                "modified membership support",
                MODIFIED_SUPPORT_CAP as u64,
            ));
        }
        let mut ctx = ModCtx {
            vals: a.elements().to_vec(),
            minparts: HashMap::new(),
            cover: HashMap::new(),
            budget: MODIFIED_BUDGET,
        };
        self.member_modified_mask(full_mask(a.len()), &mut ctx)
    }

    fn member_modified_mask(&self, mask: u32, ctx: &mut ModCtx) -> Result<bool, Error> {
        let count = mask.count_ones();
        if count <= 1 {
            if count == 1 {
                let e = ctx.vals[mask.trailing_zeros() as usize];
                return Ok(self.member(&FiniteSet::singleton(e)));
            }
            return Ok(true);
        }
        match self {
            FamilyDescriptor::Schreier(0) => Ok(false),
            FamilyDescriptor::Schreier(n) => {
                // Levels at or above the cardinality all admit the same sets.
                let n = (*n).min(count);
                let first = ctx.vals[mask.trailing_zeros() as usize];
                let parts = min_disjoint_parts(mask, n - 1, ctx)?;
                Ok(parts as u64 <= first as u64)
            }
            FamilyDescriptor::Cardinality(k) => Ok(count as u64 <= *k as u64),
            FamilyDescriptor::Bracket(m, n) => {
                let cap = count;
                let aut = MinAutomaton::new(m, cap);
                self_bracket_cover(mask, FeedState::Fresh, &aut, n, ctx)
            }
            FamilyDescriptor::Prime(b) => {
                // Enumerate the part holding the minimum element.
                let first_bit = 1u32 << mask.trailing_zeros();
                let rest = mask & !first_bit;
                let mut sub = rest;
                loop {
                    ctx.spend(1)?;
                    let part = sub | first_bit;
                    if b.member_modified_mask(part, ctx)?
                        && b.member_modified_mask(mask & !part, ctx)?
                    {
                        return Ok(true);
                    }
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & rest;
                }
                Ok(false)
            }
        }
    }

    /// Checks that the parts are nonempty, pairwise successive in the given
    /// order, and have minima forming a member set.
    pub fn is_admissible(&self, parts: &[FiniteSet]) -> bool {
        if parts.iter().any(|p| p.is_empty()) {
            return false;
        }
        for w in parts.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            if prev.max() >= next.min() {
                return false;
            }
        }
        let mins: Vec<Index> = parts.iter().filter_map(|p| p.min()).collect();
        self.member(&FiniteSet(mins))
    }

    /// Checks that the parts are nonempty, pairwise disjoint, and have minima
    /// forming a member set.
    pub fn is_allowable(&self, parts: &[FiniteSet]) -> bool {
        if parts.iter().any(|p| p.is_empty()) {
            return false;
        }
        let mut all: Vec<Index> = parts.iter().flat_map(|p| p.elements().iter().copied()).collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != total {
            return false;
        }
        let mut mins: Vec<Index> = parts.iter().filter_map(|p| p.min()).collect();
        mins.sort_unstable();
        self.member(&FiniteSet(mins))
    }

    /// Largest sum of `|x_i|` over member sets. The empty set contributes 0.
    pub fn max_weight(&self, x: &SparseVector) -> Result<BigRational, Error> {
        let pts: Vec<(Index, BigRational)> = x.abs_entries();
        self.max_weight_points(&pts)
    }

    fn max_weight_points(&self, pts: &[(Index, BigRational)]) -> Result<BigRational, Error> {
        if pts.is_empty() {
            return Ok(BigRational::zero());
        }
        match self {
            FamilyDescriptor::Schreier(0) => {
                Ok(pts.iter().map(|(_, v)| v).max().cloned().unwrap())
            }
            FamilyDescriptor::Cardinality(k) => Ok(top_k_sum(pts, *k as usize)),
            FamilyDescriptor::Schreier(1) => Ok(schreier1_weight(pts)),
            FamilyDescriptor::Prime(b) => match b.as_ref() {
                FamilyDescriptor::Cardinality(k) => Ok(top_k_sum(pts, 2 * *k as usize)),
                FamilyDescriptor::Schreier(1) => {
                    if pts.len() > PRIME_SCHREIER_WEIGHT_CAP {
                        return Err(Error::resource(
                            "two-part Schreier weight support",
                            PRIME_SCHREIER_WEIGHT_CAP as u64,
                        ));
                    }
                    Ok(prime_schreier1_weight(pts))
                }
                _ => {
                    // One part is an initial segment; scan the split point.
                    let mut best = BigRational::zero();
                    for s in 0..=pts.len() {
                        let cand =
                            b.max_weight_points(&pts[..s])? + b.max_weight_points(&pts[s..])?;
                        if cand > best {
                            best = cand;
                        }
                    }
                    Ok(best)
                }
            },
            _ => weight_dp(self, pts),
        }
    }

    /// Nonempty member sets inside `[lo, hi]` that stay members under no
    /// single-element enlargement within the window.
    pub fn maximal_members(&self, lo: Index, hi: Index) -> Result<Vec<FiniteSet>, Error> {
        let (lo, hi) = check_window(lo, hi)?;
        let mut out = Vec::new();
        let mut budget = MAXIMAL_BUDGET;
        let mut stack: Vec<Vec<Index>> = (lo..=hi).rev().map(|e| vec![e]).collect();
        while let Some(cur) = stack.pop() {
            if budget == 0 {
                return Err(Error::resource("maximal member candidates", MAXIMAL_BUDGET));
            }
            budget -= 1;
            let set = FiniteSet(cur.clone());
            if !self.member(&set) {
                continue;
            }
            let last = *cur.last().unwrap();
            for e in ((last + 1)..=hi).rev() {
                let mut ext = cur.clone();
                ext.push(e);
                stack.push(ext);
            }
            let maximal = (lo..=hi)
                .filter(|e| !set.contains(*e))
                .all(|e| {
                    let mut ext = cur.clone();
                    ext.push(e);
                    ext.sort_unstable();
                    !self.member(&FiniteSet(ext))
                });
            if maximal {
                out.push(set);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Nonempty member sets inside `[lo, hi]`, sorted. The empty set is a
    /// member of every family here and is left implicit.
    pub fn members(&self, lo: Index, hi: Index) -> Result<Vec<FiniteSet>, Error> {
        let (lo, hi) = check_window(lo, hi)?;
        let mut out = Vec::new();
        let mut budget = MAXIMAL_BUDGET;
        let mut stack: Vec<Vec<Index>> = (lo..=hi).rev().map(|e| vec![e]).collect();
        while let Some(cur) = stack.pop() {
            if budget == 0 {
                return Err(Error::resource("member candidates", MAXIMAL_BUDGET));
            }
            budget -= 1;
            let set = FiniteSet(cur.clone());
            if !self.member(&set) {
                continue;
            }
            let last = *cur.last().unwrap();
            for e in ((last + 1)..=hi).rev() {
                let mut ext = cur.clone();
                ext.push(e);
                stack.push(ext);
            }
            out.push(set);
        }
        out.sort();
        Ok(out)
    }

    /// Number of nonempty member sets inside `[lo, hi]`.
    pub fn count_members(&self, lo: Index, hi: Index) -> Result<u64, Error> {
        let (lo, hi) = check_window(lo, hi)?;
        let mut count = 0u64;
        let mut budget = MAXIMAL_BUDGET;
        let mut stack: Vec<Vec<Index>> = (lo..=hi).rev().map(|e| vec![e]).collect();
        while let Some(cur) = stack.pop() {
            if budget == 0 {
                return Err(Error::resource("member candidates", MAXIMAL_BUDGET));
            }
            budget -= 1;
            if !self.member(&FiniteSet(cur.clone())) {
                continue;
            }
            count += 1;
            let last = *cur.last().unwrap();
            for e in ((last + 1)..=hi).rev() {
                let mut ext = cur.clone();
                ext.push(e);
                stack.push(ext);
            }
        }
        Ok(count)
    }
}

fn check_window(lo: Index, hi: Index) -> Result<(Index, Index), Error> {
    if lo == 0 || hi < lo {
        return Err(Error::bad_input(format!("bad window {lo}..{hi}")));
    }
    if hi - lo + 1 > MAXIMAL_WINDOW_CAP {
        return Err(Error::resource("enumeration window width", MAXIMAL_WINDOW_CAP as u64));
    }
    Ok((lo, hi))
}

fn full_mask(len: usize) -> u32 {
    if len >= 32 {
        u32::MAX
    } else {
        (1u32 << len) - 1
    }
}

struct ModCtx {
    vals: Vec<Index>,
    /// mask, level -> least number of disjoint parts from that Schreier level.
    minparts: HashMap<(u32, u32), u32>,
    cover: HashMap<(u32, FeedState), bool>,
    budget: u64,
}

impl ModCtx {
    fn spend(&mut self, n: u64) -> Result<(), Error> {
        if self.budget < n {
            return Err(Error::resource("modified membership steps", MODIFIED_BUDGET));
        }
        self.budget -= n;
        Ok(())
    }
}

/// Least number of pairwise disjoint sets, each a modified Schreier member of
/// the given level, covering `mask`. Singleton parts always work, so the
/// result is at most `popcount(mask)`.
fn min_disjoint_parts(mask: u32, level: u32, ctx: &mut ModCtx) -> Result<u32, Error> {
    if mask == 0 {
        return Ok(0);
    }
    let level = level.min(mask.count_ones());
    if level == 0 {
        return Ok(mask.count_ones());
    }
    if let Some(&r) = ctx.minparts.get(&(mask, level)) {
        return Ok(r);
    }
    let first_bit = 1u32 << mask.trailing_zeros();
    let first_val = ctx.vals[mask.trailing_zeros() as usize];
    let rest = mask & !first_bit;
    let mut best = 1 + min_disjoint_parts(rest, level, ctx)?;
    let mut sub = rest;
    loop {
        ctx.spend(1)?;
        if sub != 0 {
            let part = sub | first_bit;
            let part_ok = if part.count_ones() == 1 {
                true
            } else {
                min_disjoint_parts(part, level - 1, ctx)? as u64 <= first_val as u64
            };
            if part_ok {
                let cand = 1 + min_disjoint_parts(mask & !part, level, ctx)?;
                if cand < best {
                    best = cand;
                }
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & rest;
    }
    ctx.minparts.insert((mask, level), best);
    Ok(best)
}

/// Can `mask` be covered by disjoint modified members of `inner`, feeding the
/// part minima (in increasing order) through the automaton?
fn self_bracket_cover(
    mask: u32,
    state: FeedState,
    aut: &MinAutomaton<'_>,
    inner: &FamilyDescriptor,
    ctx: &mut ModCtx,
) -> Result<bool, Error> {
    if mask == 0 {
        return Ok(true);
    }
    let key = (mask, state.clone());
    if let Some(&r) = ctx.cover.get(&key) {
        return Ok(r);
    }
    let first_bit = 1u32 << mask.trailing_zeros();
    let first_val = ctx.vals[mask.trailing_zeros() as usize];
    let rest = mask & !first_bit;
    let mut found = false;
    if let Some(next) = aut.feed(&state, first_val) {
        let mut sub = rest;
        loop {
            ctx.spend(1)?;
            let part = sub | first_bit;
            if inner.member_modified_mask(part, ctx)?
                && self_bracket_cover(mask & !part, next.clone(), aut, inner, ctx)?
            {
                found = true;
                break;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    ctx.cover.insert(key, found);
    Ok(found)
}

/// End of the greedy maximal level-`lvl` prefix starting at `i`.
///
/// Level 0 consumes one element. If the remaining tail fits under the pivot
/// value, the whole tail is consumed (a short set lies in every level at or
/// above 1). Otherwise the prefix is the union of `a[i]` greedy prefixes one
/// level down. Levels at or above the tail length all admit the same sets,
/// so the level is clamped; this also bounds the recursion depth.
fn sch_prefix_end(a: &[Index], i: usize, lvl: u32) -> usize {
    if i >= a.len() {
        return i;
    }
    let lvl = lvl.min((a.len() - i) as u32);
    if lvl == 0 {
        return i + 1;
    }
    let budget = a[i] as usize;
    if a.len() - i <= budget {
        return a.len();
    }
    if lvl == 1 {
        return i + budget;
    }
    let mut j = i;
    for _ in 0..budget {
        if j >= a.len() {
            break;
        }
        j = sch_prefix_end(a, j, lvl - 1);
    }
    j
}

/// Minima of the greedy successive chunk decomposition, or `None` when some
/// element cannot start a chunk.
fn greedy_chunk_mins(v: &[Index], inner: &FamilyDescriptor) -> Option<Vec<Index>> {
    let mut mins = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let end = i + max_prefix_len(&v[i..], inner);
        if end == i {
            return None;
        }
        mins.push(v[i]);
        i = end;
    }
    Some(mins)
}

/// Length of the longest prefix of `v` lying in the family. Prefix
/// membership is monotone because the family is hereditary.
fn max_prefix_len(v: &[Index], f: &FamilyDescriptor) -> usize {
    let (mut lo, mut hi) = (0usize, v.len());
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if f.member(&FiniteSet(v[..mid].to_vec())) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

fn top_k_sum(pts: &[(Index, BigRational)], k: usize) -> BigRational {
    let mut vals: Vec<&BigRational> = pts.iter().map(|(_, v)| v).collect();
    vals.sort_by(|a, b| b.cmp(a));
    vals.into_iter().take(k).cloned().sum()
}

/// Fenwick tree over value ranks holding element counts and value sums.
/// Rank 1 is the largest value; ranks are unique per element.
struct Fenwick {
    counts: Vec<u64>,
    sums: Vec<BigRational>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            counts: vec![0; n + 1],
            sums: vec![BigRational::zero(); n + 1],
        }
    }

    fn insert(&mut self, mut rank: usize, val: &BigRational) {
        while rank < self.counts.len() {
            self.counts[rank] += 1;
            self.sums[rank] += val;
            rank += rank & rank.wrapping_neg();
        }
    }

    /// Sum of the `k` largest inserted values (all of them if fewer).
    fn top_sum(&self, k: u64) -> BigRational {
        if k == 0 {
            return BigRational::zero();
        }
        let mut pos = 0usize;
        let mut remaining = k;
        let mut acc = BigRational::zero();
        let mut step = self.counts.len().next_power_of_two() / 2;
        while step > 0 {
            let next = pos + step;
            if next < self.counts.len() && self.counts[next] <= remaining {
                remaining -= self.counts[next];
                acc += &self.sums[next];
                pos = next;
            }
            step /= 2;
        }
        acc
    }
}

/// Ranks positions by descending value; ties broken by position.
fn value_ranks(pts: &[(Index, BigRational)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[b].1.cmp(&pts[a].1).then(a.cmp(&b)));
    let mut rank = vec![0usize; pts.len()];
    for (r, &p) in order.iter().enumerate() {
        rank[p] = r + 1;
    }
    rank
}

/// Maximal weight over sets with cardinality at most their minimum: scan the
/// starting position, take the largest values from the suffix.
fn schreier1_weight(pts: &[(Index, BigRational)]) -> BigRational {
    let n = pts.len();
    let rank = value_ranks(pts);
    let mut fen = Fenwick::new(n);
    let mut best = BigRational::zero();
    for k in (0..n).rev() {
        fen.insert(rank[k], &pts[k].1);
        let cap = (pts[k].0 as u64).min((n - k) as u64);
        let cand = fen.top_sum(cap);
        if cand > best {
            best = cand;
        }
    }
    best
}

/// Per-start suffix weights, as in `schreier1_weight`, but reported per
/// position: entry `k` is the best weight of a set starting at `k` or later.
fn schreier1_suffix_best(pts: &[(Index, BigRational)]) -> Vec<BigRational> {
    let n = pts.len();
    let rank = value_ranks(pts);
    let mut fen = Fenwick::new(n);
    let mut out = vec![BigRational::zero(); n + 1];
    for k in (0..n).rev() {
        fen.insert(rank[k], &pts[k].1);
        let cap = (pts[k].0 as u64).min((n - k) as u64);
        let cand = fen.top_sum(cap);
        out[k] = if cand > out[k + 1] { cand } else { out[k + 1].clone() };
    }
    out
}

/// Weight over unions of two successive `S(1)` sets: the first part starts
/// at `k` and stays left of `j`, the second is the best suffix set from `j`.
fn prime_schreier1_weight(pts: &[(Index, BigRational)]) -> BigRational {
    let n = pts.len();
    let sufbest = schreier1_suffix_best(pts);
    let rank = value_ranks(pts);
    let mut best = sufbest[0].clone();
    for k in 0..n {
        let mut fen = Fenwick::new(n);
        let cap_k = pts[k].0 as u64;
        for j in k + 1..=n {
            fen.insert(rank[j - 1], &pts[j - 1].1);
            let cand = fen.top_sum(cap_k.min((j - k) as u64)) + &sufbest[j.min(n)];
            if cand > best {
                best = cand;
            }
        }
    }
    best
}

/// Maximal weight by dynamic programming over automaton states. Exact for
/// every descriptor; cost grows with the reachable state count.
fn weight_dp(f: &FamilyDescriptor, pts: &[(Index, BigRational)]) -> Result<BigRational, Error> {
    let aut = MinAutomaton::new(f, pts.len() as u32);
    let mut frontier: HashMap<FeedState, BigRational> = HashMap::new();
    frontier.insert(FeedState::Fresh, BigRational::zero());
    let mut budget = WEIGHT_BUDGET;
    let mut best = BigRational::zero();
    for (idx, val) in pts {
        let mut next = frontier.clone();
        for (st, sum) in &frontier {
            if budget == 0 {
                return Err(Error::resource("weight search transitions", WEIGHT_BUDGET));
            }
            budget -= 1;
            if let Some(st2) = aut.feed(st, *idx) {
                let cand = sum + val;
                if cand > best {
                    best = cand.clone();
                }
                match next.get_mut(&st2) {
                    Some(cur) if *cur >= cand => {}
                    Some(cur) => *cur = cand,
                    None => {
                        next.insert(st2, cand);
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(best)
}

/// Incremental membership state for feeding part minima in increasing order.
///
/// States compare and hash structurally. Counters are clamped to `cap`, which
/// must be at least the number of elements still to be fed; clamping keeps
/// the reachable state space small without changing accepted prefixes.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum FeedState {
    Fresh,
    /// Remaining block capacities per Schreier level, deepest first.
    Sch(Vec<u32>),
    /// Remaining element count.
    Card(u32),
    /// Bracket: minima state, current chunk state.
    Pair(Box<FeedState>, Box<FeedState>),
    /// Two disjoint parts: first part state, second once opened.
    Split(Box<FeedState>, Option<Box<FeedState>>),
}

/// Transition table for [`FeedState`] under a fixed family.
pub struct MinAutomaton<'a> {
    f: &'a FamilyDescriptor,
    cap: u32,
}

impl<'a> MinAutomaton<'a> {
    pub fn new(f: &'a FamilyDescriptor, cap: u32) -> Self {
        MinAutomaton { f, cap }
    }

    pub fn fresh(&self) -> FeedState {
        FeedState::Fresh
    }

    /// Feeds one element, strictly larger than all previous ones. `None`
    /// means no member set extends the fed prefix this way.
    pub fn feed(&self, st: &FeedState, e: Index) -> Option<FeedState> {
        feed_state(self.f, st, e, self.cap)
    }

    /// Folds the whole set through the automaton.
    pub fn accepts(&self, a: &FiniteSet) -> bool {
        let mut st = FeedState::Fresh;
        for &e in a.elements() {
            match self.feed(&st, e) {
                Some(next) => st = next,
                None => return false,
            }
        }
        true
    }
}

fn fresh_feed(f: &FamilyDescriptor, e: Index, cap: u32) -> Option<FeedState> {
    match f {
        FamilyDescriptor::Schreier(0) => Some(FeedState::Card(0)),
        FamilyDescriptor::Schreier(n) => {
            // Levels beyond the number of fed elements never open; clamping
            // them keeps states small for huge orders.
            let depth = (*n).min(cap.max(1)) as usize;
            Some(FeedState::Sch(vec![(e - 1).min(cap); depth]))
        }
        FamilyDescriptor::Cardinality(0) => None,
        FamilyDescriptor::Cardinality(k) => Some(FeedState::Card((k - 1).min(cap))),
        FamilyDescriptor::Bracket(m, n) => {
            let ms = fresh_feed(m, e, cap)?;
            let ns = fresh_feed(n, e, cap)?;
            Some(FeedState::Pair(Box::new(ms), Box::new(ns)))
        }
        FamilyDescriptor::Prime(b) => {
            Some(FeedState::Split(Box::new(fresh_feed(b, e, cap)?), None))
        }
    }
}

fn feed_state(f: &FamilyDescriptor, st: &FeedState, e: Index, cap: u32) -> Option<FeedState> {
    match (f, st) {
        (_, FeedState::Fresh) => fresh_feed(f, e, cap),
        (FamilyDescriptor::Schreier(_), FeedState::Sch(rem)) => {
            let j = rem.iter().position(|&r| r > 0)?;
            let mut next = rem.clone();
            next[j] -= 1;
            for r in next.iter_mut().take(j) {
                *r = (e - 1).min(cap);
            }
            Some(FeedState::Sch(next))
        }
        (_, FeedState::Card(r)) => {
            if *r > 0 {
                Some(FeedState::Card(r - 1))
            } else {
                None
            }
        }
        (FamilyDescriptor::Bracket(m, n), FeedState::Pair(ms, ns)) => {
            if let Some(ns2) = feed_state(n, ns, e, cap) {
                return Some(FeedState::Pair(ms.clone(), Box::new(ns2)));
            }
            let ms2 = feed_state(m, ms, e, cap)?;
            let ns2 = fresh_feed(n, e, cap)?;
            Some(FeedState::Pair(Box::new(ms2), Box::new(ns2)))
        }
        (FamilyDescriptor::Prime(b), FeedState::Split(first, second)) => match second {
            None => {
                if let Some(f2) = feed_state(b, first, e, cap) {
                    return Some(FeedState::Split(Box::new(f2), None));
                }
                let s = fresh_feed(b, e, cap)?;
                Some(FeedState::Split(first.clone(), Some(Box::new(s))))
            }
            Some(s) => {
                let s2 = feed_state(b, s, e, cap)?;
                Some(FeedState::Split(first.clone(), Some(Box::new(s2))))
            }
        },
        _ => None,
    }
}

impl fmt::Display for FamilyDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyDescriptor::Schreier(n) => write!(f, "S({n})"),
            FamilyDescriptor::Cardinality(k) => write!(f, "A({k})"),
            FamilyDescriptor::Bracket(m, n) => write!(f, "B({m},{n})"),
            FamilyDescriptor::Prime(b) => write!(f, "P({b})"),
        }
    }
}

impl FromStr for FamilyDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let mut p = Parser { b: s.as_bytes(), i: 0 };
        let f = p.family()?;
        p.skip_ws();
        if p.i != p.b.len() {
            return Err(Error::bad_input(format!("trailing input in family {s:?}")));
        }
        Ok(f)
    }
}

impl TryFrom<String> for FamilyDescriptor {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<FamilyDescriptor> for String {
    fn from(f: FamilyDescriptor) -> String {
        f.to_string()
    }
}

struct Parser<'a> {
    b: &'a [u8],
    i: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.i < self.b.len() && self.b[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), Error> {
        self.skip_ws();
        if self.i < self.b.len() && self.b[self.i] == c {
            self.i += 1;
            Ok(())
        } else {
            Err(Error::bad_input(format!(
                "expected {:?} at byte {} of family expression",
                c as char, self.i
            )))
        }
    }

    fn number(&mut self) -> Result<u32, Error> {
        self.skip_ws();
        let start = self.i;
        while self.i < self.b.len() && self.b[self.i].is_ascii_digit() {
            self.i += 1;
        }
        if start == self.i {
            return Err(Error::bad_input(format!("expected number at byte {start}")));
        }
        std::str::from_utf8(&self.b[start..self.i])
            .unwrap()
            .parse()
            .map_err(|_| Error::bad_input("number out of range"))
    }

    fn family(&mut self) -> Result<FamilyDescriptor, Error> {
        self.skip_ws();
        if self.i >= self.b.len() {
            return Err(Error::bad_input("empty family expression"));
        }
        let tag = self.b[self.i].to_ascii_uppercase();
        self.i += 1;
        match tag {
            b'S' => {
                self.expect(b'(')?;
                let n = self.number()?;
                self.expect(b')')?;
                Ok(FamilyDescriptor::Schreier(n))
            }
            b'A' => {
                self.expect(b'(')?;
                let k = self.number()?;
                self.expect(b')')?;
                Ok(FamilyDescriptor::Cardinality(k))
            }
            b'B' => {
                self.expect(b'(')?;
                let m = self.family()?;
                self.expect(b',')?;
                let n = self.family()?;
                self.expect(b')')?;
                Ok(FamilyDescriptor::bracket(m, n))
            }
            b'P' => {
                self.expect(b'(')?;
                let b = self.family()?;
                self.expect(b')')?;
                Ok(FamilyDescriptor::prime(b))
            }
            other => Err(Error::bad_input(format!(
                "unknown family tag {:?}",
                other as char
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fs(v: &[Index]) -> FiniteSet {
        FiniteSet::new(v.to_vec()).unwrap()
    }

    fn fam(s: &str) -> FamilyDescriptor {
        s.parse().unwrap()
    }

    /// Definitional membership for Schreier families: try every split into
    /// at most `min` successive nonempty blocks one level down.
    fn naive_schreier(v: &[Index], n: u32) -> bool {
        if v.is_empty() {
            return true;
        }
        if n == 0 {
            return v.len() == 1;
        }
        fn split(v: &[Index], blocks: u32, n: u32) -> bool {
            if v.is_empty() {
                return true;
            }
            if blocks == 0 {
                return false;
            }
            (1..=v.len()).any(|l| naive_schreier(&v[..l], n) && split(&v[l..], blocks - 1, n))
        }
        split(v, v[0], n - 1)
    }

    fn naive_bracket(v: &[Index], m: &FamilyDescriptor, n: &FamilyDescriptor) -> bool {
        if v.is_empty() {
            return true;
        }
        fn go(v: &[Index], mins: &mut Vec<Index>, m: &FamilyDescriptor, n: &FamilyDescriptor) -> bool {
            if v.is_empty() {
                return m.member(&FiniteSet::new(mins.clone()).unwrap());
            }
            for l in 1..=v.len() {
                if n.member(&FiniteSet::new(v[..l].to_vec()).unwrap()) {
                    mins.push(v[0]);
                    if go(&v[l..], mins, m, n) {
                        return true;
                    }
                    mins.pop();
                }
            }
            false
        }
        go(v, &mut Vec::new(), m, n)
    }

    fn naive_prime(v: &[Index], b: &FamilyDescriptor) -> bool {
        let n = v.len();
        if n == 0 {
            return true;
        }
        for mask in 0..(1u32 << (n - 1)) {
            let mut left = vec![v[0]];
            let mut right = Vec::new();
            for (i, &e) in v.iter().enumerate().skip(1) {
                if mask & (1 << (i - 1)) != 0 {
                    left.push(e);
                } else {
                    right.push(e);
                }
            }
            if b.member(&FiniteSet::new(left).unwrap())
                && b.member(&FiniteSet::new(right).unwrap())
            {
                return true;
            }
        }
        false
    }

    fn subsets_of_window(lo: Index, hi: Index) -> Vec<Vec<Index>> {
        let w: Vec<Index> = (lo..=hi).collect();
        let mut out = Vec::new();
        for mask in 0u32..(1 << w.len()) {
            out.push(
                w.iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &e)| e)
                    .collect(),
            );
        }
        out
    }

    #[test]
    fn schreier_membership_matches_definition() {
        for n in 0..=3 {
            let f = FamilyDescriptor::Schreier(n);
            for sub in subsets_of_window(1, 9) {
                let got = f.member(&fs(&sub));
                let want = naive_schreier(&sub, n);
                assert_eq!(got, want, "S({n}) on {sub:?}");
            }
        }
    }

    #[test]
    fn known_membership_facts() {
        let s1 = fam("S(1)");
        let s2 = fam("S(2)");
        assert!(!s1.member(&fs(&[1, 2])));
        assert!(s1.member(&fs(&[2, 3])));
        assert!(!s1.member(&fs(&[2, 3, 4])));
        assert!(s2.member(&fs(&[2, 3, 6, 7, 8])));
        assert!(s2.member(&fs(&[2, 3, 6, 7, 8, 9])));
        assert!(!s2.member(&fs(&[1, 2])));
        assert!(s2.member(&fs(&[1])));
        assert!(s1.member(&FiniteSet::empty()));
    }

    #[test]
    fn bracket_matches_naive_and_composes() {
        let cases = [
            ("B(S(1),S(1))", fam("S(1)"), fam("S(1)")),
            ("B(S(2),S(1))", fam("S(2)"), fam("S(1)")),
            ("B(S(1),A(2))", fam("S(1)"), fam("A(2)")),
        ];
        for (expr, m, n) in cases {
            let f = fam(expr);
            for sub in subsets_of_window(1, 8) {
                assert_eq!(
                    f.member(&fs(&sub)),
                    naive_bracket(&sub, &m, &n),
                    "{expr} on {sub:?}"
                );
            }
        }
        // Bracket of Schreier families composes additively in the order.
        let b = fam("B(S(1),S(1))");
        let s2 = fam("S(2)");
        for sub in subsets_of_window(1, 9) {
            assert_eq!(b.member(&fs(&sub)), s2.member(&fs(&sub)), "on {sub:?}");
        }
    }

    #[test]
    fn prime_matches_exhaustive_two_colouring() {
        for expr in ["P(S(1))", "P(S(2))", "P(A(2))", "P(B(S(1),S(1)))"] {
            let f = fam(expr);
            let base = match &f {
                FamilyDescriptor::Prime(b) => b.as_ref().clone(),
                _ => unreachable!(),
            };
            for sub in subsets_of_window(1, 8) {
                assert_eq!(
                    f.member(&fs(&sub)),
                    naive_prime(&sub, &base),
                    "{expr} on {sub:?}"
                );
            }
        }
    }

    #[test]
    fn modified_equals_plain_for_schreier() {
        for n in 0..=3 {
            let f = FamilyDescriptor::Schreier(n);
            for sub in subsets_of_window(1, 10) {
                let set = fs(&sub);
                assert_eq!(
                    f.member_modified(&set).unwrap(),
                    f.member(&set),
                    "S({n}) on {sub:?}"
                );
            }
        }
    }

    #[test]
    fn modified_equals_plain_for_schreier_brackets() {
        for expr in ["B(S(1),S(1))", "B(S(1),S(2))", "B(S(2),S(1))"] {
            let f = fam(expr);
            for sub in subsets_of_window(2, 10) {
                let set = fs(&sub);
                assert_eq!(
                    f.member_modified(&set).unwrap(),
                    f.member(&set),
                    "{expr} on {sub:?}"
                );
            }
        }
    }

    #[test]
    fn modified_membership_caps_support() {
        let f = fam("S(2)");
        let big: Vec<Index> = (10..40).collect();
        assert!(matches!(
            f.member_modified(&fs(&big)),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn automaton_agrees_with_membership() {
        for expr in ["S(0)", "S(1)", "S(2)", "S(3)", "A(2)", "B(S(1),S(1))", "B(S(1),S(2))", "P(S(1))", "P(S(2))"] {
            let f = fam(expr);
            let aut = MinAutomaton::new(&f, 16);
            for sub in subsets_of_window(1, 9) {
                let set = fs(&sub);
                assert_eq!(aut.accepts(&set), f.member(&set), "{expr} on {sub:?}");
            }
        }
    }

    #[test]
    fn admissibility_and_allowability() {
        let s1 = fam("S(1)");
        let a = fs(&[2, 3]);
        let b = fs(&[5, 6]);
        let c = fs(&[4, 6]);
        assert!(s1.is_admissible(&[a.clone(), b.clone()]));
        assert!(!s1.is_admissible(&[b.clone(), a.clone()]));
        assert!(s1.is_allowable(&[b.clone(), a.clone()]));
        assert!(!s1.is_allowable(&[c.clone(), b.clone()]));
        assert!(s1.is_allowable(&[fs(&[2, 5]), fs(&[3, 6])]));
        assert!(!s1.is_admissible(&[fs(&[2, 5]), fs(&[3, 6])]));
        // Three parts need a minimum of at least three.
        assert!(!s1.is_allowable(&[fs(&[2]), fs(&[3]), fs(&[4])]));
        assert!(s1.is_allowable(&[fs(&[3]), fs(&[4]), fs(&[5])]));
    }

    fn brute_weight(f: &FamilyDescriptor, pts: &[(Index, BigRational)]) -> BigRational {
        let mut best = BigRational::zero();
        for mask in 0u32..(1 << pts.len()) {
            let idx: Vec<Index> = pts
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, (e, _))| *e)
                .collect();
            if f.member(&FiniteSet::new(idx).unwrap()) {
                let w: BigRational = pts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, (_, v))| v.clone())
                    .sum();
                if w > best {
                    best = w;
                }
            }
        }
        best
    }

    fn test_points(n: usize, start: Index) -> Vec<(Index, BigRational)> {
        // Deterministic, uneven positive values.
        (0..n)
            .map(|i| {
                let idx = start + i as Index;
                let num = 7 + ((i * 13 + 5) % 23) as i64;
                let den = 50 + ((i * 31) % 17) as i64;
                (idx, BigRational::new(num.into(), den.into()))
            })
            .collect()
    }

    #[test]
    fn weights_match_brute_force() {
        let pts = test_points(10, 2);
        for expr in ["S(0)", "S(1)", "S(2)", "A(3)", "P(S(1))", "P(A(2))", "B(S(1),S(1))", "P(S(2))"] {
            let f = fam(expr);
            let sv = SparseVector::from_entries(
                pts.iter().map(|(i, v)| (*i, v.clone())).collect(),
            )
            .unwrap();
            assert_eq!(f.max_weight(&sv).unwrap(), brute_weight(&f, &pts), "{expr}");
        }
    }

    #[test]
    fn weight_known_values() {
        let third = BigRational::new(1.into(), 3.into());
        let x = SparseVector::from_entries(vec![
            (2, third.clone()),
            (3, third.clone()),
            (4, third.clone()),
        ])
        .unwrap();
        assert_eq!(
            fam("S(1)").max_weight(&x).unwrap(),
            BigRational::new(2.into(), 3.into())
        );
        let fifth = BigRational::new(1.into(), 5.into());
        let y = SparseVector::from_entries((5..10).map(|i| (i, fifth.clone())).collect()).unwrap();
        assert_eq!(fam("S(1)").max_weight(&y).unwrap(), BigRational::new(1.into(), 1.into()));
    }

    #[test]
    fn dedicated_weight_paths_match_generic_dp() {
        let pts = test_points(60, 3);
        let sv =
            SparseVector::from_entries(pts.iter().map(|(i, v)| (*i, v.clone())).collect()).unwrap();
        let s1 = fam("S(1)");
        assert_eq!(s1.max_weight(&sv).unwrap(), weight_dp(&s1, &pts).unwrap());
        let p1 = fam("P(S(1))");
        assert_eq!(p1.max_weight(&sv).unwrap(), weight_dp(&p1, &pts).unwrap());
    }

    #[test]
    fn maximal_member_enumeration() {
        let s1 = fam("S(1)");
        let got = s1.maximal_members(2, 4).unwrap();
        assert_eq!(got, vec![fs(&[2, 3]), fs(&[2, 4]), fs(&[3, 4])]);
        let got = s1.maximal_members(1, 3).unwrap();
        assert_eq!(got, vec![fs(&[1]), fs(&[2, 3])]);
        // Every member of the window extends to some maximal member.
        let s2 = fam("S(2)");
        let maximal = s2.maximal_members(2, 8).unwrap();
        for sub in subsets_of_window(2, 8) {
            if sub.is_empty() || !s2.member(&fs(&sub)) {
                continue;
            }
            assert!(
                maximal
                    .iter()
                    .any(|m| sub.iter().all(|e| m.contains(*e))),
                "{sub:?} missing a maximal extension"
            );
        }
        assert_eq!(
            s2.count_members(2, 8).unwrap(),
            subsets_of_window(2, 8)
                .iter()
                .filter(|s| !s.is_empty() && s2.member(&fs(s)))
                .count() as u64
        );
    }

    #[test]
    fn window_guards() {
        let s1 = fam("S(1)");
        assert!(matches!(s1.maximal_members(5, 4), Err(Error::BadInput(_))));
        assert!(matches!(
            s1.maximal_members(1, 100),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn descriptor_parse_display() {
        for s in ["S(0)", "S(12)", "A(3)", "B(S(1),A(2))", "P(S(2))", "B(B(S(1),S(1)),P(A(1)))"] {
            let f: FamilyDescriptor = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert_eq!(fam(" p( s(2) ) ").to_string(), "P(S(2))");
        assert!("S(1) junk".parse::<FamilyDescriptor>().is_err());
        assert!("Q(1)".parse::<FamilyDescriptor>().is_err());
        assert!("S()".parse::<FamilyDescriptor>().is_err());
    }

    #[test]
    fn finite_set_parse_display() {
        assert_eq!(fs(&[2, 3, 6]).to_string(), "{2,3,6}");
        assert_eq!(FiniteSet::parse("{2,3,6}").unwrap(), fs(&[2, 3, 6]));
        assert_eq!(FiniteSet::parse("6, 2,3").unwrap(), fs(&[2, 3, 6]));
        assert_eq!(FiniteSet::parse("").unwrap(), FiniteSet::empty());
        assert!(FiniteSet::parse("0,1").is_err());
        assert!(FiniteSet::parse("2,2").is_err());
    }

    fn arb_family() -> impl Strategy<Value = FamilyDescriptor> {
        let leaf = prop_oneof![
            (0u32..4).prop_map(FamilyDescriptor::Schreier),
            (1u32..5).prop_map(FamilyDescriptor::Cardinality),
        ];
        leaf.prop_recursive(2, 8, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone())
                    .prop_map(|(m, n)| FamilyDescriptor::bracket(m, n)),
                inner.prop_map(FamilyDescriptor::prime),
            ]
        })
    }

    proptest! {
        #[test]
        fn parse_round_trips(f in arb_family()) {
            let s = f.to_string();
            prop_assert_eq!(s.parse::<FamilyDescriptor>().unwrap(), f);
        }

        #[test]
        fn members_are_hereditary_and_spreading(
            f in arb_family(),
            base in proptest::collection::btree_set(1u32..14, 0..6),
            keep in proptest::collection::vec(any::<bool>(), 6),
            shift in 0u32..5,
        ) {
            let v: Vec<Index> = base.into_iter().collect();
            let set = FiniteSet::new(v.clone()).unwrap();
            prop_assume!(f.member(&set));
            let sub: Vec<Index> = v.iter().enumerate()
                .filter(|(i, _)| keep[*i % keep.len()])
                .map(|(_, &e)| e).collect();
            prop_assert!(f.member(&FiniteSet::new(sub).unwrap()));
            let spread: Vec<Index> = v.iter().map(|&e| e + shift).collect();
            prop_assert!(f.member(&FiniteSet::new(spread).unwrap()));
        }
    }
}
