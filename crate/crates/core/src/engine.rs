//! Exact norm computation by lazy memoized dynamic programming.
//!
//! The norm obeys a recursion: it is the larger of the sup norm and, over
//! every level the space provides, the level weight times the best sum of
//! part norms over splits of the support. Spaces whose levels all use
//! admissible (successive) splits only ever need support intervals as
//! subproblems; once a level allows disjoint parts, subproblems are support
//! subsets and the engine switches to bitmask keys, which caps the tractable
//! support size.
//!
//! Every computed value comes with a functional tree that evaluates exactly
//! to it, so results can be checked without trusting the search.

use std::collections::HashMap;
use std::rc::Rc;

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use crate::error::Error;
use crate::families::{FeedState, FiniteSet, Index, MinAutomaton};
use crate::functional::{FunctionalTree, Sign};
use crate::spec::{Budget, Level, SpaceSpec, SplitMode, Variant};
use crate::vector::SparseVector;

/// Largest support a subset-keyed (allowable split) computation accepts.
const SUBSET_SUPPORT_CAP: usize = 14;
/// Largest support the definitional brute-force oracle accepts.
const BRUTE_SUPPORT_CAP: usize = 8;
/// Worker stack; split chains recurse deeply on wide supports.
const ENGINE_STACK_BYTES: usize = 64 << 20;

#[derive(Clone, Debug, Default)]
pub struct NormOptions {
    pub budget: Budget,
    /// Fail with a resource error instead of falling back to bounds.
    pub require_exact: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NormBounds {
    #[serde(with = "crate::rational::serde_rat")]
    pub lower: BigRational,
    #[serde(with = "crate::rational::serde_rat")]
    pub upper: BigRational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NormOutcome {
    Exact(BigRational),
    /// The certificate still witnesses `lower`.
    Bounds(NormBounds),
}

impl NormOutcome {
    pub fn lower(&self) -> &BigRational {
        match self {
            NormOutcome::Exact(v) => v,
            NormOutcome::Bounds(b) => &b.lower,
        }
    }

    pub fn upper(&self) -> &BigRational {
        match self {
            NormOutcome::Exact(v) => v,
            NormOutcome::Bounds(b) => &b.upper,
        }
    }

    pub fn exact(&self) -> Option<&BigRational> {
        match self {
            NormOutcome::Exact(v) => Some(v),
            NormOutcome::Bounds(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NormResult {
    pub outcome: NormOutcome,
    /// Witnesses the exact value, or the lower bound in the bounds case.
    pub certificate: FunctionalTree,
    /// Deterministic count of evaluated subproblems and split steps.
    pub subproblems: u64,
}

impl NormResult {
    pub fn value(&self) -> &BigRational {
        self.outcome.lower()
    }
}

/// Norm with a distortion summand: `theta_k * norm(x) + level_value(x, k)`.
#[derive(Clone, Debug)]
pub struct DistortedNorm {
    pub value: BigRational,
    pub base: NormResult,
    pub level: NormResult,
}

fn with_stack<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(ENGINE_STACK_BYTES)
            .spawn_scoped(s, f)
            .expect("spawn norm worker")
            .join()
            .expect("norm worker panicked")
    })
}

fn zero_result() -> NormResult {
    NormResult {
        outcome: NormOutcome::Exact(BigRational::zero()),
        certificate: FunctionalTree::leaf(Sign::Plus, 1),
        subproblems: 0,
    }
}

/// Exact norm of `x` in the given space, with certificate.
///
/// Spaces with allowable levels and support beyond the subset cap yield
/// certified bounds instead (or an error under `require_exact`): the lower
/// bound restricts splits to successive parts, the upper bound is
/// `max(sup, max_theta * l1)`.
pub fn norm(x: &SparseVector, spec: &SpaceSpec, opts: &NormOptions) -> Result<NormResult, Error> {
    if x.is_zero() {
        return Ok(zero_result());
    }
    with_stack(|| norm_inner(x, spec, opts))
}

fn wants_subsets(spec: &SpaceSpec) -> bool {
    match spec.variant {
        Variant::Plain => false,
        Variant::Modified => true,
        Variant::BoundedlyModified(s) => s >= spec.min_level(),
    }
}

fn norm_inner(x: &SparseVector, spec: &SpaceSpec, opts: &NormOptions) -> Result<NormResult, Error> {
    if !wants_subsets(spec) {
        let mut eng = PlainEngine::new(x, spec, opts.budget.limit, false);
        let n = eng.idx.len() as u32;
        let top = eng.norm_range(0, n)?;
        return Ok(NormResult {
            outcome: NormOutcome::Exact(top.value.clone()),
            certificate: eng.expand(&top.cert),
            subproblems: eng.used,
        });
    }
    if x.support_len() <= SUBSET_SUPPORT_CAP {
        let mut eng = SubsetEngine::new(x, spec, opts.budget.limit);
        let full = eng.full_mask();
        let top = eng.norm_mask(full)?;
        return Ok(NormResult {
            outcome: NormOutcome::Exact(top.value.clone()),
            certificate: eng.expand(&top.cert),
            subproblems: eng.used,
        });
    }
    if opts.require_exact {
        return Err(Error::resource(
            "disjoint-split support",
            SUBSET_SUPPORT_CAP as u64,
        ));
    }
    // Successive splits are a special case of disjoint ones, so the
    // admissible-only value bounds the norm from below.
    let mut eng = PlainEngine::new(x, spec, opts.budget.limit, true);
    let n = eng.idx.len() as u32;
    let top = eng.norm_range(0, n)?;
    let upper = coarse_upper(x, spec);
    Ok(NormResult {
        outcome: NormOutcome::Bounds(NormBounds { lower: top.value.clone(), upper }),
        certificate: eng.expand(&top.cert),
        subproblems: eng.used,
    })
}

/// Every functional sums at most the whole l1 mass scaled by one weight.
fn coarse_upper(x: &SparseVector, spec: &SpaceSpec) -> BigRational {
    let theta_max = spec
        .levels_for(&x.support())
        .iter()
        .map(|(_, l)| l.theta.clone())
        .max()
        .unwrap_or_else(BigRational::zero);
    let scaled = theta_max * x.l1();
    let sup = x.sup_norm();
    if scaled > sup {
        scaled
    } else {
        sup
    }
}

/// Weighted best split at one fixed level, single parts allowed.
pub fn norm_level(
    x: &SparseVector,
    spec: &SpaceSpec,
    k: u32,
    opts: &NormOptions,
) -> Result<NormResult, Error> {
    let level = spec
        .level(k)
        .ok_or_else(|| Error::bad_input(format!("space has no level {k}")))?;
    if x.is_zero() {
        return Ok(zero_result());
    }
    with_stack(|| {
        // Part norms are true norms of the space, so the engine choice
        // follows the variant, not the mode of the one level at hand.
        if !wants_subsets(spec) {
            let mut eng = PlainEngine::new(x, spec, opts.budget.limit, false);
            let got = eng.level_value(k, &level)?;
            return finish_level(got, &level, k, |c| eng.expand(c), eng.used);
        }
        if x.support_len() > SUBSET_SUPPORT_CAP {
            return Err(Error::resource(
                "disjoint-split support",
                SUBSET_SUPPORT_CAP as u64,
            ));
        }
        let mut eng = SubsetEngine::new(x, spec, opts.budget.limit);
        let full = eng.full_mask();
        let got = match spec.mode(k) {
            SplitMode::Allowable => eng.level_value_allow(full, k, &level)?,
            SplitMode::Admissible => eng.level_value_adm(full, k, &level)?,
        };
        finish_level(got, &level, k, |c| eng.expand(c), eng.used)
    })
}

fn finish_level(
    got: Option<(BigRational, Vec<Rc<Cert>>)>,
    level: &Level,
    k: u32,
    expand: impl Fn(&Cert) -> FunctionalTree,
    used: u64,
) -> Result<NormResult, Error> {
    match got {
        None => Ok(NormResult { subproblems: used, ..zero_result() }),
        Some((sum, parts)) => {
            let node = Cert::Node(k, parts);
            Ok(NormResult {
                outcome: NormOutcome::Exact(&level.theta * sum),
                certificate: expand(&node),
                subproblems: used,
            })
        }
    }
}

/// `theta_k * norm(x) + norm_level(x, k)`. Needs the exact norm.
pub fn distorted_norm(
    x: &SparseVector,
    spec: &SpaceSpec,
    k: u32,
    opts: &NormOptions,
) -> Result<DistortedNorm, Error> {
    let theta = spec
        .theta(k)
        .ok_or_else(|| Error::bad_input(format!("space has no level {k}")))?;
    let exact_opts = NormOptions { budget: opts.budget, require_exact: true };
    let base = norm(x, spec, &exact_opts)?;
    let level = norm_level(x, spec, k, &exact_opts)?;
    let value = theta * base.value() + level.value();
    Ok(DistortedNorm { value, base, level })
}

/// Norm of the coordinate-wise square. The result is the square of the
/// 2-convexified norm of `x`.
pub fn two_convexified_norm(
    x: &SparseVector,
    spec: &SpaceSpec,
    opts: &NormOptions,
) -> Result<NormResult, Error> {
    norm(&x.square(), spec, opts)
}

// ---------------------------------------------------------------------------
// Shared certificate skeletons.

/// Certificate skeleton with shared subtrees; positions index the engine's
/// support array.
#[derive(Debug)]
enum Cert {
    Leaf(u32),
    Node(u32, Vec<Rc<Cert>>),
}

fn expand_cert(
    cert: &Cert,
    idx: &[Index],
    signs: &[Sign],
    spec: &SpaceSpec,
) -> FunctionalTree {
    match cert {
        Cert::Leaf(pos) => FunctionalTree::Leaf {
            sign: signs[*pos as usize],
            index: idx[*pos as usize],
        },
        Cert::Node(k, children) => FunctionalTree::Node {
            level: *k,
            weight: spec.theta(*k).expect("level exists"),
            mode: spec.mode(*k),
            children: children
                .iter()
                .map(|c| expand_cert(c, idx, signs, spec))
                .collect(),
        },
    }
}

#[derive(Default)]
struct Interner {
    ids: HashMap<FeedState, u32>,
    list: Vec<FeedState>,
}

impl Interner {
    fn intern(&mut self, st: FeedState) -> u32 {
        if let Some(&id) = self.ids.get(&st) {
            return id;
        }
        let id = self.list.len() as u32;
        self.list.push(st.clone());
        self.ids.insert(st, id);
        id
    }

    fn get(&self, id: u32) -> &FeedState {
        &self.list[id as usize]
    }
}

struct Entry {
    value: BigRational,
    cert: Rc<Cert>,
}

// ---------------------------------------------------------------------------
// Interval engine: all splits successive, subproblems are support ranges.

struct PlainEngine<'a> {
    spec: &'a SpaceSpec,
    force_admissible: bool,
    idx: Vec<Index>,
    mag: Vec<BigRational>,
    signs: Vec<Sign>,
    /// Prefix sums of `mag`; entry `i` sums positions below `i`.
    pre: Vec<BigRational>,
    memo: HashMap<(u32, u32), Rc<Entry>>,
    /// Best cover of `[pos, end)` by successive parts with minima fed to the
    /// level automaton from the recorded state on; `None` when the state
    /// rejects the next minimum.
    rest: HashMap<(u32, u32, u32, u32), Option<Rc<RestVal>>>,
    states: Interner,
    limit: u64,
    used: u64,
}

struct RestVal {
    value: BigRational,
    q: u32,
}

impl<'a> PlainEngine<'a> {
    fn new(x: &SparseVector, spec: &'a SpaceSpec, limit: u64, force_admissible: bool) -> Self {
        let mut idx = Vec::with_capacity(x.support_len());
        let mut mag = Vec::with_capacity(x.support_len());
        let mut signs = Vec::with_capacity(x.support_len());
        let mut pre = vec![BigRational::zero()];
        for (i, c) in x.iter() {
            use num_traits::Signed;
            idx.push(i);
            mag.push(c.abs());
            signs.push(Sign::of(c));
            pre.push(pre.last().unwrap() + c.abs());
        }
        PlainEngine {
            spec,
            force_admissible,
            idx,
            mag,
            signs,
            pre,
            memo: HashMap::new(),
            rest: HashMap::new(),
            states: Interner::default(),
            limit,
            used: 0,
        }
    }

    fn spend(&mut self, n: u64) -> Result<(), Error> {
        self.used += n;
        if self.used > self.limit {
            Err(Error::resource("norm work budget", self.limit))
        } else {
            Ok(())
        }
    }

    fn l1(&self, lo: u32, hi: u32) -> BigRational {
        &self.pre[hi as usize] - &self.pre[lo as usize]
    }

    fn support_set(&self, lo: u32, hi: u32) -> FiniteSet {
        FiniteSet::new(self.idx[lo as usize..hi as usize].to_vec()).unwrap()
    }

    fn expand(&self, cert: &Cert) -> FunctionalTree {
        expand_cert(cert, &self.idx, &self.signs, self.spec)
    }

    fn leaf_best(&self, lo: u32, hi: u32) -> (BigRational, Rc<Cert>) {
        let mut pos = lo;
        for p in lo + 1..hi {
            if self.mag[p as usize] > self.mag[pos as usize] {
                pos = p;
            }
        }
        (self.mag[pos as usize].clone(), Rc::new(Cert::Leaf(pos)))
    }

    fn norm_range(&mut self, lo: u32, hi: u32) -> Result<Rc<Entry>, Error> {
        debug_assert!(lo < hi);
        if let Some(e) = self.memo.get(&(lo, hi)) {
            return Ok(e.clone());
        }
        self.spend(1)?;
        let (mut best, mut cert) = self.leaf_best(lo, hi);
        let support = self.support_set(lo, hi);
        let nonincreasing = self.spec.levels.thetas_nonincreasing();
        for (k, level) in self.spec.levels_for(&support) {
            debug_assert!(
                self.force_admissible || self.spec.mode(k) == SplitMode::Admissible,
                "interval engine only handles successive splits"
            );
            let ceiling = &level.theta * self.l1(lo, hi);
            if ceiling <= best {
                if nonincreasing {
                    break;
                }
                continue;
            }
            if let Some((sum, s, q1)) = self.level_split(lo, hi, k, &level)? {
                let cand = &level.theta * &sum;
                if cand > best {
                    let parts = self.collect_parts(k, s, q1, hi);
                    best = cand;
                    cert = Rc::new(Cert::Node(k, parts));
                }
            }
        }
        let entry = Rc::new(Entry { value: best, cert });
        self.memo.insert((lo, hi), entry.clone());
        Ok(entry)
    }

    /// Best sum over splits of `[lo, hi)` into at least two successive
    /// parts after an optional skipped prefix. Skips elsewhere lose nothing:
    /// absorbing a gap into the part on its left keeps minima and can only
    /// raise part norms.
    fn level_split(
        &mut self,
        lo: u32,
        hi: u32,
        k: u32,
        level: &Level,
    ) -> Result<Option<(BigRational, u32, u32)>, Error> {
        let cap = self.idx.len() as u32;
        let mut best: Option<(BigRational, u32, u32)> = None;
        for s in lo..hi.saturating_sub(1) {
            if let Some((b, _, _)) = &best {
                // Later starts only shrink the available mass.
                if self.l1(s, hi) <= *b {
                    break;
                }
            }
            let aut = MinAutomaton::new(&level.family, cap);
            let Some(st1) = aut.feed(&FeedState::Fresh, self.idx[s as usize]) else {
                continue;
            };
            let st1 = self.states.intern(st1);
            for q1 in s + 1..hi {
                self.spend(1)?;
                let first = self.norm_range(s, q1)?.value.clone();
                let Some(rest) = self.rest_value(q1, hi, k, st1, level)? else {
                    continue;
                };
                let cand = first + &rest.value;
                if best.as_ref().map_or(true, |(b, _, _)| cand > *b) {
                    best = Some((cand, s, q1));
                }
            }
        }
        Ok(best)
    }

    fn rest_value(
        &mut self,
        pos: u32,
        end: u32,
        k: u32,
        state: u32,
        level: &Level,
    ) -> Result<Option<Rc<RestVal>>, Error> {
        debug_assert!(pos < end);
        let key = (pos, end, k, state);
        if let Some(v) = self.rest.get(&key) {
            return Ok(v.clone());
        }
        self.spend(1)?;
        let cap = self.idx.len() as u32;
        let aut = MinAutomaton::new(&level.family, cap);
        let next = aut.feed(self.states.get(state), self.idx[pos as usize]);
        let out = match next {
            None => None,
            Some(st2) => {
                let st2 = self.states.intern(st2);
                let mut best: Option<(BigRational, u32)> = None;
                for q in pos + 1..=end {
                    self.spend(1)?;
                    let part = self.norm_range(pos, q)?.value.clone();
                    let tail = if q == end {
                        Some(BigRational::zero())
                    } else {
                        self.rest_value(q, end, k, st2, level)?
                            .map(|r| r.value.clone())
                    };
                    let Some(tail) = tail else { continue };
                    let cand = part + tail;
                    if best.as_ref().map_or(true, |(b, _)| cand > *b) {
                        best = Some((cand, q));
                    }
                }
                // The single remaining part `q == end` always completes.
                let (value, q) = best.expect("cover exists");
                Some(Rc::new(RestVal { value, q }))
            }
        };
        self.rest.insert(key, out.clone());
        Ok(out)
    }

    /// Rebuilds the winning part list from recorded choices.
    fn collect_parts(&mut self, k: u32, s: u32, q1: u32, end: u32) -> Vec<Rc<Cert>> {
        let cap = self.idx.len() as u32;
        let mut parts = vec![self.memo[&(s, q1)].cert.clone()];
        let mut state = {
            let level = self.spec.level(k).expect("level exists");
            let aut = MinAutomaton::new(&level.family, cap);
            aut.feed(&FeedState::Fresh, self.idx[s as usize]).expect("winning split feeds")
        };
        let mut pos = q1;
        while pos < end {
            let sid = self.states.intern(state.clone());
            let rv = self.rest[&(pos, end, k, sid)]
                .as_ref()
                .expect("winning split recorded")
                .clone();
            parts.push(self.memo[&(pos, rv.q)].cert.clone());
            let level = self.spec.level(k).expect("level exists");
            let aut = MinAutomaton::new(&level.family, cap);
            state = aut
                .feed(&state, self.idx[pos as usize])
                .expect("winning split feeds");
            pos = rv.q;
        }
        parts
    }

    /// Best cover value at one level with single parts allowed, plus the
    /// reconstructed parts.
    fn level_value(
        &mut self,
        k: u32,
        level: &Level,
    ) -> Result<Option<(BigRational, Vec<Rc<Cert>>)>, Error> {
        let n = self.idx.len() as u32;
        let fresh = self.states.intern(FeedState::Fresh);
        let mut best: Option<(BigRational, u32)> = None;
        for s in 0..n {
            if let Some((b, _)) = &best {
                if self.l1(s, n) <= *b {
                    break;
                }
            }
            if let Some(rv) = self.rest_value(s, n, k, fresh, level)? {
                if best.as_ref().map_or(true, |(b, _)| rv.value > *b) {
                    best = Some((rv.value.clone(), s));
                }
            }
        }
        let Some((value, s)) = best else { return Ok(None) };
        // Walk the recorded chain from the start, fresh state.
        let cap = self.idx.len() as u32;
        let mut parts = Vec::new();
        let mut state = FeedState::Fresh;
        let mut pos = s;
        while pos < n {
            let sid = self.states.intern(state.clone());
            let rv = self.rest[&(pos, n, k, sid)]
                .as_ref()
                .expect("winning cover recorded")
                .clone();
            parts.push(self.memo[&(pos, rv.q)].cert.clone());
            let aut = MinAutomaton::new(&level.family, cap);
            state = aut
                .feed(&state, self.idx[pos as usize])
                .expect("winning cover feeds");
            pos = rv.q;
        }
        Ok(Some((value, parts)))
    }
}

// ---------------------------------------------------------------------------
// Subset engine: disjoint splits allowed, subproblems are support subsets.

struct SubsetEngine<'a> {
    spec: &'a SpaceSpec,
    idx: Vec<Index>,
    mag: Vec<BigRational>,
    signs: Vec<Sign>,
    memo: HashMap<u32, Rc<Entry>>,
    /// Best value of disjoint parts inside a mask (possibly none), minima fed
    /// in increasing order from the recorded automaton state.
    parts: HashMap<(u32, u32, u32), Rc<PartsVal>>,
    /// Best cover of a mask by successive runs, `None` on automaton reject.
    adm: HashMap<(u32, u32, u32), Option<Rc<AdmVal>>>,
    states: Interner,
    limit: u64,
    used: u64,
}

struct PartsVal {
    value: BigRational,
    choice: PChoice,
}

#[derive(Clone, Copy)]
enum PChoice {
    Stop,
    Skip,
    Take(u32),
}

struct AdmVal {
    value: BigRational,
    take: u32,
}

impl<'a> SubsetEngine<'a> {
    fn new(x: &SparseVector, spec: &'a SpaceSpec, limit: u64) -> Self {
        let mut idx = Vec::new();
        let mut mag = Vec::new();
        let mut signs = Vec::new();
        for (i, c) in x.iter() {
            use num_traits::Signed;
            idx.push(i);
            mag.push(c.abs());
            signs.push(Sign::of(c));
        }
        SubsetEngine {
            spec,
            idx,
            mag,
            signs,
            memo: HashMap::new(),
            parts: HashMap::new(),
            adm: HashMap::new(),
            states: Interner::default(),
            limit,
            used: 0,
        }
    }

    fn full_mask(&self) -> u32 {
        (1u32 << self.idx.len()) - 1
    }

    fn spend(&mut self, n: u64) -> Result<(), Error> {
        self.used += n;
        if self.used > self.limit {
            Err(Error::resource("norm work budget", self.limit))
        } else {
            Ok(())
        }
    }

    fn expand(&self, cert: &Cert) -> FunctionalTree {
        expand_cert(cert, &self.idx, &self.signs, self.spec)
    }

    fn l1(&self, mask: u32) -> BigRational {
        let mut sum = BigRational::zero();
        let mut m = mask;
        while m != 0 {
            let p = m.trailing_zeros();
            sum += &self.mag[p as usize];
            m &= m - 1;
        }
        sum
    }

    fn support_set(&self, mask: u32) -> FiniteSet {
        let mut v = Vec::new();
        let mut m = mask;
        while m != 0 {
            let p = m.trailing_zeros();
            v.push(self.idx[p as usize]);
            m &= m - 1;
        }
        FiniteSet::new(v).unwrap()
    }

    fn first_val(&self, mask: u32) -> Index {
        self.idx[mask.trailing_zeros() as usize]
    }

    fn leaf_best(&self, mask: u32) -> (BigRational, Rc<Cert>) {
        let mut best_pos = mask.trailing_zeros();
        let mut m = mask & (mask - 1);
        while m != 0 {
            let p = m.trailing_zeros();
            if self.mag[p as usize] > self.mag[best_pos as usize] {
                best_pos = p;
            }
            m &= m - 1;
        }
        (
            self.mag[best_pos as usize].clone(),
            Rc::new(Cert::Leaf(best_pos)),
        )
    }

    fn norm_mask(&mut self, mask: u32) -> Result<Rc<Entry>, Error> {
        debug_assert!(mask != 0);
        if let Some(e) = self.memo.get(&mask) {
            return Ok(e.clone());
        }
        self.spend(1)?;
        let (mut best, mut cert) = self.leaf_best(mask);
        let support = self.support_set(mask);
        let nonincreasing = self.spec.levels.thetas_nonincreasing();
        for (k, level) in self.spec.levels_for(&support) {
            let ceiling = &level.theta * self.l1(mask);
            if ceiling <= best {
                if nonincreasing {
                    break;
                }
                continue;
            }
            let got = match self.spec.mode(k) {
                SplitMode::Admissible => self.adm_top(mask, k, &level)?,
                SplitMode::Allowable => self.allow_top(mask, k, &level)?,
            };
            if let Some((sum, parts)) = got {
                let cand = &level.theta * sum;
                if cand > best {
                    best = cand;
                    cert = Rc::new(Cert::Node(k, parts));
                }
            }
        }
        let entry = Rc::new(Entry { value: best, cert });
        self.memo.insert(mask, entry.clone());
        Ok(entry)
    }

    /// Lowest `t` set bits of `mask` (requires `t <= popcount`).
    fn prefix_mask(mask: u32, t: u32) -> u32 {
        let mut m = mask;
        for _ in 0..t {
            m &= m - 1;
        }
        mask & !m
    }

    /// Best split into two or more successive runs after skipped leading
    /// elements.
    fn adm_top(
        &mut self,
        mask: u32,
        k: u32,
        level: &Level,
    ) -> Result<Option<(BigRational, Vec<Rc<Cert>>)>, Error> {
        let cap = self.idx.len() as u32;
        let mut best: Option<(BigRational, u32, u32)> = None;
        let mut r = mask;
        while r.count_ones() >= 2 {
            let aut = MinAutomaton::new(&level.family, cap);
            if let Some(st1) = aut.feed(&FeedState::Fresh, self.first_val(r)) {
                let st1 = self.states.intern(st1);
                for t in 1..r.count_ones() {
                    self.spend(1)?;
                    let p = Self::prefix_mask(r, t);
                    let Some(tail) = self.adm_rest(r & !p, k, st1, level)? else {
                        continue;
                    };
                    let cand = self.norm_mask(p)?.value.clone() + &tail.value;
                    if best.as_ref().map_or(true, |(b, _, _)| cand > *b) {
                        best = Some((cand, r, t));
                    }
                }
            }
            r &= r - 1;
        }
        let Some((value, r, t)) = best else { return Ok(None) };
        let p = Self::prefix_mask(r, t);
        let mut parts = vec![self.memo[&p].cert.clone()];
        self.walk_adm(r & !p, k, self.feed_fresh(level, self.first_val(r)), level, &mut parts);
        Ok(Some((value, parts)))
    }

    fn feed_fresh(&self, level: &Level, e: Index) -> FeedState {
        let cap = self.idx.len() as u32;
        MinAutomaton::new(&level.family, cap)
            .feed(&FeedState::Fresh, e)
            .expect("winning split feeds")
    }

    /// Best cover of `mask` by one or more successive runs.
    fn adm_rest(
        &mut self,
        mask: u32,
        k: u32,
        state: u32,
        level: &Level,
    ) -> Result<Option<Rc<AdmVal>>, Error> {
        debug_assert!(mask != 0);
        let key = (mask, k, state);
        if let Some(v) = self.adm.get(&key) {
            return Ok(v.clone());
        }
        self.spend(1)?;
        let cap = self.idx.len() as u32;
        let aut = MinAutomaton::new(&level.family, cap);
        let next = aut.feed(self.states.get(state), self.first_val(mask));
        let out = match next {
            None => None,
            Some(st2) => {
                let st2 = self.states.intern(st2);
                let count = mask.count_ones();
                let mut best: Option<(BigRational, u32)> = None;
                for t in 1..=count {
                    self.spend(1)?;
                    let p = Self::prefix_mask(mask, t);
                    let rest = mask & !p;
                    let tail = if rest == 0 {
                        Some(BigRational::zero())
                    } else {
                        self.adm_rest(rest, k, st2, level)?.map(|r| r.value.clone())
                    };
                    let Some(tail) = tail else { continue };
                    let cand = self.norm_mask(p)?.value.clone() + tail;
                    if best.as_ref().map_or(true, |(b, _)| cand > *b) {
                        best = Some((cand, t));
                    }
                }
                best.map(|(value, take)| Rc::new(AdmVal { value, take }))
            }
        };
        self.adm.insert(key, out.clone());
        Ok(out)
    }

    fn walk_adm(
        &mut self,
        mask: u32,
        k: u32,
        state: FeedState,
        level: &Level,
        parts: &mut Vec<Rc<Cert>>,
    ) {
        let mut mask = mask;
        let mut state = state;
        let cap = self.idx.len() as u32;
        while mask != 0 {
            let sid = self.states.intern(state.clone());
            let av = self.adm[&(mask, k, sid)]
                .as_ref()
                .expect("winning cover recorded")
                .clone();
            let p = Self::prefix_mask(mask, av.take);
            parts.push(self.memo[&p].cert.clone());
            let aut = MinAutomaton::new(&level.family, cap);
            state = aut
                .feed(&state, self.first_val(mask))
                .expect("winning cover feeds");
            mask &= !p;
        }
    }

    /// Best split into two or more disjoint parts; skipped elements are free.
    fn allow_top(
        &mut self,
        mask: u32,
        k: u32,
        level: &Level,
    ) -> Result<Option<(BigRational, Vec<Rc<Cert>>)>, Error> {
        let got = self.allow_search(mask, k, level, true)?;
        let Some((value, r, p)) = got else { return Ok(None) };
        let mut parts = vec![self.memo[&p].cert.clone()];
        let st1 = self.feed_fresh(level, self.first_val(r));
        self.walk_parts(r & !p, k, st1, level, &mut parts);
        Ok(Some((value, parts)))
    }

    /// Best value over single parts and their disjoint continuations; with
    /// `need_two`, only splits whose continuation is nonempty count. Part
    /// norms are strictly positive, so a positive continuation value is the
    /// same as a nonempty one.
    fn allow_search(
        &mut self,
        mask: u32,
        k: u32,
        level: &Level,
        need_two: bool,
    ) -> Result<Option<(BigRational, u32, u32)>, Error> {
        let mut best: Option<(BigRational, u32, u32)> = None;
        let mut r = mask;
        while r != 0 {
            let first_bit = 1u32 << r.trailing_zeros();
            let others = r & !first_bit;
            let cap = self.idx.len() as u32;
            let aut = MinAutomaton::new(&level.family, cap);
            if let Some(st1) = aut.feed(&FeedState::Fresh, self.first_val(r)) {
                let st1 = self.states.intern(st1);
                let mut sub = others;
                loop {
                    self.spend(1)?;
                    let p = sub | first_bit;
                    let rest_mask = r & !p;
                    let tail = if rest_mask == 0 {
                        if need_two {
                            None
                        } else {
                            Some(BigRational::zero())
                        }
                    } else {
                        let pv = self.parts_value(rest_mask, k, st1, level)?;
                        if need_two && pv.value.is_zero() {
                            None
                        } else {
                            Some(pv.value.clone())
                        }
                    };
                    if let Some(tail) = tail {
                        if p != mask || !need_two {
                            let cand = self.norm_mask(p)?.value.clone() + tail;
                            if best.as_ref().map_or(true, |(b, _, _)| cand > *b) {
                                best = Some((cand, r, p));
                            }
                        }
                    }
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & others;
                }
            }
            r &= r - 1;
        }
        Ok(best)
    }

    /// Best disjoint parts inside `mask` (possibly none, value zero), minima
    /// ascending from the given automaton state.
    fn parts_value(
        &mut self,
        mask: u32,
        k: u32,
        state: u32,
        level: &Level,
    ) -> Result<Rc<PartsVal>, Error> {
        if mask == 0 {
            return Ok(Rc::new(PartsVal { value: BigRational::zero(), choice: PChoice::Stop }));
        }
        let key = (mask, k, state);
        if let Some(v) = self.parts.get(&key) {
            return Ok(v.clone());
        }
        self.spend(1)?;
        let first_bit = 1u32 << mask.trailing_zeros();
        let others = mask & !first_bit;
        // Leaving the first element uncovered is always available.
        let skip = self.parts_value(others, k, state, level)?;
        let mut best = skip.value.clone();
        let mut choice = PChoice::Skip;
        let cap = self.idx.len() as u32;
        let aut = MinAutomaton::new(&level.family, cap);
        if let Some(st2) = aut.feed(self.states.get(state), self.first_val(mask)) {
            let st2 = self.states.intern(st2);
            let mut sub = others;
            loop {
                self.spend(1)?;
                let p = sub | first_bit;
                let tail = self.parts_value(mask & !p, k, st2, level)?.value.clone();
                let cand = self.norm_mask(p)?.value.clone() + tail;
                if cand > best {
                    best = cand;
                    choice = PChoice::Take(p);
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & others;
            }
        }
        let out = Rc::new(PartsVal { value: best, choice });
        self.parts.insert(key, out.clone());
        Ok(out)
    }

    fn walk_parts(
        &mut self,
        mask: u32,
        k: u32,
        state: FeedState,
        level: &Level,
        parts: &mut Vec<Rc<Cert>>,
    ) {
        let mut mask = mask;
        let mut state = state;
        let cap = self.idx.len() as u32;
        while mask != 0 {
            let sid = self.states.intern(state.clone());
            let pv = self.parts[&(mask, k, sid)].clone();
            match pv.choice {
                PChoice::Stop => break,
                PChoice::Skip => {
                    mask &= mask - 1;
                }
                PChoice::Take(p) => {
                    parts.push(self.memo[&p].cert.clone());
                    let aut = MinAutomaton::new(&level.family, cap);
                    state = aut
                        .feed(&state, self.first_val(mask))
                        .expect("winning parts feed");
                    mask &= !p;
                }
            }
        }
    }

    /// Level value over successive runs with single parts allowed.
    fn level_value_adm(
        &mut self,
        mask: u32,
        k: u32,
        level: &Level,
    ) -> Result<Option<(BigRational, Vec<Rc<Cert>>)>, Error> {
        let fresh = self.states.intern(FeedState::Fresh);
        let mut best: Option<(BigRational, u32)> = None;
        let mut r = mask;
        while r != 0 {
            if let Some(av) = self.adm_rest(r, k, fresh, level)? {
                if best.as_ref().map_or(true, |(b, _)| av.value > *b) {
                    best = Some((av.value.clone(), r));
                }
            }
            r &= r - 1;
        }
        let Some((value, r)) = best else { return Ok(None) };
        let mut parts = Vec::new();
        self.walk_adm(r, k, FeedState::Fresh, level, &mut parts);
        Ok(Some((value, parts)))
    }

    /// Level value with single parts allowed, for the fixed-level operator.
    fn level_value_allow(
        &mut self,
        mask: u32,
        k: u32,
        level: &Level,
    ) -> Result<Option<(BigRational, Vec<Rc<Cert>>)>, Error> {
        let got = self.allow_search(mask, k, level, false)?;
        let Some((value, r, p)) = got else { return Ok(None) };
        let mut parts = vec![self.memo[&p].cert.clone()];
        let st1 = self.feed_fresh(level, self.first_val(r));
        self.walk_parts(r & !p, k, st1, level, &mut parts);
        Ok(Some((value, parts)))
    }
}

// ---------------------------------------------------------------------------
// Definitional brute force, used as an oracle in tests.

/// Norm by direct enumeration of every split shape up to the given
/// functional height (leaves have height 1). Exponential; the support is
/// capped. Exact once the value stabilizes in the height.
pub fn norm_bruteforce(
    x: &SparseVector,
    spec: &SpaceSpec,
    max_height: u32,
) -> Result<BigRational, Error> {
    if x.is_zero() {
        return Ok(BigRational::zero());
    }
    if x.support_len() > BRUTE_SUPPORT_CAP {
        return Err(Error::resource("brute-force support", BRUTE_SUPPORT_CAP as u64));
    }
    let idx: Vec<Index> = x.support().elements().to_vec();
    let mag: Vec<BigRational> = x.abs_entries().into_iter().map(|(_, v)| v).collect();
    // No saturation shortcuts here: take every level up to a hard bound
    // past which membership of the support minima cannot change.
    let mut levels = Vec::new();
    for k in spec.min_level()..=(idx.len() as u32 + 2) {
        match spec.level(k) {
            Some(l) => levels.push((k, l)),
            None => break,
        }
    }
    let mut memo: HashMap<(u32, u32), BigRational> = HashMap::new();
    let full = (1u32 << idx.len()) - 1;
    Ok(brute(full, max_height, spec, &levels, &idx, &mag, &mut memo))
}

fn brute(
    mask: u32,
    h: u32,
    spec: &SpaceSpec,
    levels: &[(u32, Level)],
    idx: &[Index],
    mag: &[BigRational],
    memo: &mut HashMap<(u32, u32), BigRational>,
) -> BigRational {
    if mask == 0 {
        return BigRational::zero();
    }
    if let Some(v) = memo.get(&(mask, h)) {
        return v.clone();
    }
    let mut best = BigRational::zero();
    let mut m = mask;
    while m != 0 {
        let p = m.trailing_zeros() as usize;
        if mag[p] > best {
            best = mag[p].clone();
        }
        m &= m - 1;
    }
    if h >= 2 {
        for (k, level) in levels {
            let mode = spec.mode(*k);
            // Enumerate covered subsets, then their splits.
            let mut u = mask;
            loop {
                if u != 0 {
                    let positions: Vec<u32> =
                        (0..32).filter(|b| u & (1 << b) != 0).collect();
                    let mut consider = |parts: &[u32]| {
                        let mut mins: Vec<Index> =
                            parts.iter().map(|pm| idx[pm.trailing_zeros() as usize]).collect();
                        mins.sort_unstable();
                        let mins = FiniteSet::new(mins).unwrap();
                        if !level.family.member(&mins) {
                            return;
                        }
                        let total: BigRational = parts
                            .iter()
                            .map(|pm| brute(*pm, h - 1, spec, levels, idx, mag, memo))
                            .sum();
                        let cand = &level.theta * total;
                        if cand > best {
                            best = cand;
                        }
                    };
                    match mode {
                        SplitMode::Admissible => {
                            for_each_composition(&positions, &mut Vec::new(), &mut consider)
                        }
                        SplitMode::Allowable => {
                            for_each_partition(&positions, &mut Vec::new(), &mut consider)
                        }
                    }
                }
                if u == 0 {
                    break;
                }
                u = (u - 1) & mask;
            }
        }
    }
    memo.insert((mask, h), best.clone());
    best
}

/// Splits into successive runs in order.
fn for_each_composition(rest: &[u32], acc: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    if rest.is_empty() {
        if !acc.is_empty() {
            f(acc);
        }
        return;
    }
    for l in 1..=rest.len() {
        let part = rest[..l].iter().fold(0u32, |m, b| m | (1 << b));
        acc.push(part);
        for_each_composition(&rest[l..], acc, f);
        acc.pop();
    }
}

/// All set partitions, by assigning each element to an existing or new part.
fn for_each_partition(rest: &[u32], acc: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    if rest.is_empty() {
        if !acc.is_empty() {
            f(acc);
        }
        return;
    }
    let bit = 1u32 << rest[0];
    for i in 0..acc.len() {
        acc[i] |= bit;
        for_each_partition(&rest[1..], acc, f);
        acc[i] &= !bit;
    }
    acc.push(bit);
    for_each_partition(&rest[1..], acc, f);
    acc.pop();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rational;
    use crate::spec::LevelRule;
    use proptest::prelude::*;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn explicit_space(name: &str, variant: Variant, pairs: &[(&str, &str)]) -> SpaceSpec {
        SpaceSpec::new(
            name,
            variant,
            LevelRule::Explicit(
                pairs
                    .iter()
                    .map(|(f, t)| Level { family: f.parse().unwrap(), theta: rat(t) })
                    .collect(),
            ),
        )
        .unwrap()
    }

    fn tsirelson() -> SpaceSpec {
        explicit_space("halves", Variant::Plain, &[("S(1)", "1/2")])
    }

    fn check(x: &SparseVector, spec: &SpaceSpec) -> NormResult {
        let r = norm(x, spec, &NormOptions::default()).unwrap();
        let v = r.outcome.exact().expect("exact in tests").clone();
        r.certificate.validate(spec).expect("certificate is valid");
        assert_eq!(r.certificate.evaluate(x), v, "certificate matches value");
        r
    }

    #[test]
    fn frozen_values() {
        let t = tsirelson();
        let v: SparseVector = "2:1,3:1".parse().unwrap();
        assert_eq!(check(&v, &t).value(), &rat("1"));
        // Three singleton parts starting at 3 are admissible, so the norm
        // exceeds any split that keeps the leading point.
        let v: SparseVector = "2:1,3:1,4:1,5:1".parse().unwrap();
        assert_eq!(check(&v, &t).value(), &rat("3/2"));
        let v: SparseVector = "7:-3/4".parse().unwrap();
        assert_eq!(check(&v, &t).value(), &rat("3/4"));
        assert_eq!(norm(&SparseVector::zero(), &t, &NormOptions::default()).unwrap().value(), &rat("0"));
    }

    #[test]
    fn fixed_level_and_distortion() {
        let t = tsirelson();
        let v: SparseVector = "2:1,3:1".parse().unwrap();
        let lv = norm_level(&v, &t, 1, &NormOptions::default()).unwrap();
        assert_eq!(lv.value(), &rat("1"));
        lv.certificate.validate(&t).unwrap();
        assert_eq!(lv.certificate.evaluate(&v), rat("1"));
        let d = distorted_norm(&v, &t, 1, &NormOptions::default()).unwrap();
        assert_eq!(d.value, rat("3/2"));
        let w: SparseVector = "2:1/2,3:1/2".parse().unwrap();
        let sq = two_convexified_norm(&w, &t, &NormOptions::default()).unwrap();
        assert_eq!(sq.value(), &rat("1/4"));
    }

    fn matrix_spaces() -> Vec<SpaceSpec> {
        vec![
            tsirelson(),
            explicit_space("two-thirds", Variant::Plain, &[("S(1)", "2/3")]),
            SpaceSpec::new(
                "geo",
                Variant::Plain,
                LevelRule::GeometricSchreier { delta: rat("1/2") },
            )
            .unwrap(),
            SpaceSpec::new("log", Variant::Plain, LevelRule::LogCardinality { bits: 4 }).unwrap(),
            explicit_space("halves-mod", Variant::Modified, &[("S(1)", "1/2")]),
            explicit_space(
                "mixed-bm",
                Variant::BoundedlyModified(1),
                &[("S(1)", "1/2"), ("S(2)", "1/4")],
            ),
            SpaceSpec::new(
                "geo-mod",
                Variant::Modified,
                LevelRule::GeometricSchreier { delta: rat("2/3") },
            )
            .unwrap(),
        ]
    }

    fn matrix_vectors() -> Vec<SparseVector> {
        [
            "2:1,3:1",
            "2:1,3:1,4:1,5:1",
            "1:1,2:1/2,3:1/4",
            "2:1/2,3:-1/3,5:1/4,6:1",
            "3:1,4:1,5:1,6:1,7:1",
            "2:1,4:1/2,5:1/2,9:1/3",
            "4:2/3,5:1/5,6:1,7:1/2,8:1/7",
            "10:1",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
    }

    #[test]
    fn engine_matches_definitional_enumeration() {
        for spec in matrix_spaces() {
            for x in matrix_vectors() {
                let got = check(&x, &spec);
                let b4 = norm_bruteforce(&x, &spec, 4).unwrap();
                let b5 = norm_bruteforce(&x, &spec, 5).unwrap();
                assert_eq!(b4, b5, "height stabilized for {x} in {}", spec.name);
                assert_eq!(got.value(), &b4, "{x} in {}", spec.name);
            }
        }
    }

    #[test]
    fn disjoint_splits_dominate_successive_ones() {
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
        for x in matrix_vectors() {
            let p = check(&x, &plain);
            let m = check(&x, &modified);
            assert!(m.value() >= p.value(), "{x}");
        }
    }

    #[test]
    fn budget_exhaustion_reports_resource_error() {
        let t = tsirelson();
        let x: SparseVector = "2:1,3:1,4:1,5:1,6:1,7:1,8:1".parse().unwrap();
        let opts = NormOptions { budget: Budget::new(3), require_exact: false };
        assert!(matches!(
            norm(&x, &t, &opts),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn wide_modified_support_falls_back_to_bounds() {
        let spec = explicit_space("halves-mod", Variant::Modified, &[("S(1)", "1/2")]);
        let entries: Vec<(Index, BigRational)> =
            (2..18).map(|i| (i, rat("1/2"))).collect();
        let x = SparseVector::from_entries(entries).unwrap();
        let r = norm(&x, &spec, &NormOptions::default()).unwrap();
        match &r.outcome {
            NormOutcome::Bounds(b) => {
                assert!(b.lower <= b.upper);
                assert!(b.lower > rat("0"));
                r.certificate.validate(&spec).unwrap();
                assert_eq!(&r.certificate.evaluate(&x), &b.lower);
            }
            NormOutcome::Exact(_) => panic!("expected bounds beyond the subset cap"),
        }
        let exact = NormOptions { require_exact: true, ..NormOptions::default() };
        assert!(matches!(
            norm(&x, &spec, &exact),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn deterministic_reruns() {
        let spec = matrix_spaces().pop().unwrap();
        let x: SparseVector = "2:1/2,3:-1/3,5:1/4,6:1".parse().unwrap();
        let a = norm(&x, &spec, &NormOptions::default()).unwrap();
        let b = norm(&x, &spec, &NormOptions::default()).unwrap();
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.certificate, b.certificate);
        assert_eq!(a.subproblems, b.subproblems);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// The norm lies between the sup norm and the l1 norm, and never
        /// grows under restriction to a subinterval.
        #[test]
        fn norm_between_sup_and_l1_and_monotone(
            entries in proptest::collection::btree_map(1u32..12, 1i64..8, 1..5),
            lo in 1u32..12,
            hi in 1u32..12,
        ) {
            let t = tsirelson();
            let x = SparseVector::from_entries(
                entries.iter().map(|(i, n)| (*i, BigRational::new((*n).into(), 4.into()))).collect()
            ).unwrap();
            let r = norm(&x, &t, &NormOptions::default()).unwrap();
            let v = r.outcome.exact().unwrap().clone();
            prop_assert!(v >= x.sup_norm());
            prop_assert!(v <= x.l1());
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let y = x.restrict_interval(lo, hi);
            let rv = norm(&y, &t, &NormOptions::default()).unwrap();
            prop_assert!(rv.outcome.exact().unwrap() <= &v);
        }
    }
}
