//! Verification suites and the distortion experiment.
//!
//! Every suite draws its randomness from a seed-and-label scheme, computes in
//! exact arithmetic, and reports claimed-versus-computed for every check.
//! Suites marked toy substitute desk-scale stand-ins where the quantitative
//! statements need supports far beyond exact computation; their reports say
//! exactly which hypothesis is out of reach and never assert those bounds.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tslab_core::{
    check_basic_scc, check_ris, check_scc_witness, distorted_norm, make_basic_scc,
    make_block_scc, make_compact_scc, norm, norm_level, ClauseStatus, Error, FamilyDescriptor,
    FiniteSet, Index, IndexStream, Level, LevelRule, NormOptions, RisContext, RisWitness,
    SpaceSpec, SparseVector, SplitMode, Variant,
};

use crate::report::{CaseReport, CheckReport, ExperimentReport, Outcome};

/// Seed, budget, and norm options shared by a whole run.
pub struct Ctx {
    pub seed: u64,
    pub opts: NormOptions,
}

impl Ctx {
    /// Independent generator per (seed, label, trial); the label keeps
    /// different samplings inside one run out of each other's streams.
    pub fn rng(&self, label: &str, trial: u64) -> ChaCha8Rng {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= trial.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        h ^= self.seed.rotate_left(17);
        ChaCha8Rng::seed_from_u64(h)
    }

    fn budget(&self) -> u64 {
        self.opts.budget.limit
    }
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn exact_norm(
    x: &SparseVector,
    spec: &SpaceSpec,
    ctx: &Ctx,
) -> Result<(BigRational, u64), Error> {
    let opts = NormOptions { budget: ctx.opts.budget, require_exact: true };
    let r = norm(x, spec, &opts)?;
    Ok((r.value().clone(), r.subproblems))
}

fn valid_check(name: &str, ok: bool) -> CheckReport {
    CheckReport::label(
        name,
        if ok { "valid" } else { "invalid" },
        "valid",
        if ok { Outcome::Pass } else { Outcome::Fail },
    )
}

// ---------------------------------------------------------------------------
// Family oracles
// ---------------------------------------------------------------------------

fn set_from_mask(mask: u32) -> FiniteSet {
    let elements: Vec<Index> = (0..32).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect();
    FiniteSet::new(elements).expect("mask sets are strictly increasing")
}

/// Modified-membership identity and bracket composition over full windows.
pub fn schreier(ground: Index, ctx: &Ctx) -> Result<ExperimentReport, Error> {
    if ground == 0 || ground > 14 {
        return Err(Error::bad_input("ground window must be 1..=14"));
    }
    let mut report = ExperimentReport::new("verify/schreier", ctx.seed, ctx.budget());
    report.note(format!(
        "identity cases test plain against modified membership on every nonempty subset of 1..={ground}"
    ));
    report.note("bracket cases test that composing hierarchy families adds their indices");
    for n in 0..=2u32 {
        let family = FamilyDescriptor::schreier(n);
        let mut case = CaseReport::new(format!("modified-equality-n{n}"));
        case.input("family", &family);
        case.input("window", format!("1..={ground}"));
        let mut mismatches = 0u64;
        for mask in 1u32..(1u32 << ground) {
            let set = set_from_mask(mask);
            if family.member(&set) != family.member_modified(&set)? {
                mismatches += 1;
            }
        }
        case.value_count("subsets", (1u64 << ground) - 1);
        case.check(CheckReport::count("membership-mismatches", mismatches, 0));
        report.push(case);
    }
    let bracket_ground = ground.min(12);
    for (n, m) in [(1u32, 1u32), (1, 2), (2, 1)] {
        let bracket = FamilyDescriptor::bracket(
            FamilyDescriptor::schreier(n),
            FamilyDescriptor::schreier(m),
        );
        let direct = FamilyDescriptor::schreier(n + m);
        let mut case = CaseReport::new(format!("bracket-n{n}-m{m}"));
        case.input("composed", &bracket);
        case.input("direct", &direct);
        case.input("window", format!("1..={bracket_ground}"));
        let mut mismatches = 0u64;
        for mask in 1u32..(1u32 << bracket_ground) {
            let set = set_from_mask(mask);
            if bracket.member(&set) != direct.member(&set) {
                mismatches += 1;
            }
        }
        case.value_count("subsets", (1u64 << bracket_ground) - 1);
        case.check(CheckReport::count("membership-mismatches", mismatches, 0));
        report.push(case);
    }
    report.finish();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Norm sandwich for canonical combinations
// ---------------------------------------------------------------------------

/// Weight rule for the sandwich suite: reciprocal by default.
pub fn sandwich_rule(theta: Option<&str>) -> Result<LevelRule, Error> {
    match theta {
        None | Some("1/(n+1)") | Some("reciprocal") => Ok(LevelRule::ReciprocalSchreier),
        Some(arg) => match arg.split_once(':') {
            Some(("geometric", q)) => {
                let delta = tslab_core::rational::parse_rational(q)?;
                Ok(LevelRule::GeometricSchreier { delta })
            }
            _ => Err(Error::bad_input(format!(
                "weight rules are `1/(n+1)` or `geometric:Q`, not {arg:?}"
            ))),
        },
    }
}

/// The two-sided estimate `theta_j <= norm < theta_j + eps` for generated
/// `(eps, j)` combinations.
pub fn lemma112(
    j: Option<u32>,
    eps: Option<BigRational>,
    count: Option<usize>,
    theta: Option<&str>,
    ctx: &Ctx,
) -> Result<ExperimentReport, Error> {
    let spec = SpaceSpec::new("sandwich", Variant::Plain, sandwich_rule(theta)?)?;
    let mut report = ExperimentReport::new("verify/lemma112", ctx.seed, ctx.budget());
    report.space(&spec.to_config());
    report.note("each case audits its combination, then checks the two-sided norm estimate");

    // (level, eps, how many); the default matrix is fifty combinations.
    let matrix: Vec<(u32, BigRational, usize)> = match (j, eps) {
        (Some(j), Some(e)) => vec![(j, e, count.unwrap_or(10))],
        (Some(j), None) => vec![(j, rat(1, 2), count.unwrap_or(10))],
        (None, Some(e)) => vec![(1, e.clone(), count.unwrap_or(10))],
        (None, None) => vec![
            (1, rat(1, 2), 15),
            (1, rat(1, 3), 15),
            (2, rat(1, 2), 17),
            (2, rat(1, 3), 3),
        ],
    };

    for (level, epsilon, n_cases) in matrix {
        let theta_j = spec
            .theta(level)
            .ok_or_else(|| Error::bad_input(format!("space has no level {level}")))?;
        for i in 0..n_cases {
            let mut rng = ctx.rng(&format!("lemma112-j{level}-{epsilon}"), i as u64);
            let witness = match level {
                1 => {
                    let start = rng.gen_range(1..=40);
                    let step = rng.gen_range(1..=6);
                    make_basic_scc(
                        &epsilon,
                        1,
                        &IndexStream::Arithmetic { start, step },
                    )?
                }
                _ => {
                    // Compact layouts keep higher-level supports at desk size.
                    // With d the least integer satisfying d * epsilon > 1, the
                    // support holds (2^d - 1) * start points, so looser
                    // epsilons afford a wider start range before exact norms
                    // outgrow the work budget.
                    let start = if epsilon >= rat(1, 2) {
                        rng.gen_range(3..=6)
                    } else {
                        rng.gen_range(3..=4)
                    };
                    make_compact_scc(&epsilon, level, start)?
                }
            };
            let mut case = CaseReport::new(format!("j{level}-eps{epsilon}-{i:02}"));
            case.input("epsilon", &epsilon);
            case.input("level", level);
            case.input("vector", &witness.vector);
            let audit = check_scc_witness(&witness, None)?;
            case.check(valid_check("combination-audit", audit));
            let (value, subs) = exact_norm(&witness.vector, &spec, ctx)?;
            case.subproblems = subs;
            case.value("norm", &value);
            case.value("theta_j", &theta_j);
            case.check(CheckReport::ge("norm-lower", &value, &theta_j));
            case.check(CheckReport::lt("norm-upper", &value, &(&theta_j + &epsilon)));
            report.push(case);
        }
    }
    report.finish();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Interval-family sums against block combinations
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum PairPattern {
    /// Both runs paired into two-point blocks.
    All,
    /// First run paired, second run left as singletons.
    Run0,
    /// Every block a singleton.
    Singletons,
}

impl PairPattern {
    fn label(self) -> &'static str {
        match self {
            PairPattern::All => "pairs-all",
            PairPattern::Run0 => "pairs-run0",
            PairPattern::Singletons => "singletons",
        }
    }
}

/// A convex combination of successive blocks together with its skeleton.
pub struct BlockInstance {
    pub x: SparseVector,
    pub skeleton: SparseVector,
    pub blocks: Vec<SparseVector>,
    pub coefficients: Vec<BigRational>,
    pub epsilon: BigRational,
}

/// Two doubling runs `[s, 2s)` and `[2s, 4s)` with run masses 1/2 each,
/// grouped into blocks by `pattern`; anchors sit at block ends, so pairing
/// halves the anchor count without moving the mass.
pub fn pair_instance(
    s: Index,
    pattern: PairPattern,
    epsilon: &BigRational,
) -> Result<BlockInstance, Error> {
    if s < 2 || s % 2 != 0 {
        return Err(Error::bad_input("run length must be even and at least 2"));
    }
    let per_point = [rat(1, 2 * i64::from(s)), rat(1, 4 * i64::from(s))];
    let mut blocks = Vec::new();
    let mut coefficients = Vec::new();
    for run in 0..2u32 {
        let run_start = s << run;
        let run_end = s << (run + 1);
        let paired = match pattern {
            PairPattern::All => true,
            PairPattern::Run0 => run == 0,
            PairPattern::Singletons => false,
        };
        if paired {
            for p in (run_start..run_end).step_by(2) {
                blocks.push(SparseVector::from_entries(vec![
                    (p, BigRational::one()),
                    (p + 1, BigRational::one()),
                ])?);
                coefficients.push(&per_point[run as usize] * rat(2, 1));
            }
        } else {
            for p in run_start..run_end {
                blocks.push(SparseVector::from_entries(vec![(p, BigRational::one())])?);
                coefficients.push(per_point[run as usize].clone());
            }
        }
    }
    let mut x_entries = Vec::new();
    let mut skeleton_entries = Vec::new();
    for (block, coeff) in blocks.iter().zip(&coefficients) {
        for (i, v) in block.iter() {
            x_entries.push((i, v * coeff));
        }
        skeleton_entries.push((block.max_support().unwrap(), coeff.clone()));
    }
    Ok(BlockInstance {
        x: SparseVector::from_entries(x_entries)?,
        skeleton: SparseVector::from_entries(skeleton_entries)?,
        blocks,
        coefficients,
        epsilon: epsilon.clone(),
    })
}

/// Largest sum of part norms over interval families whose minima stay in the
/// first-level family. Enlarging an interval rightward keeps the family
/// admissible and never lowers a norm, so the maximum is attained on
/// contiguous tilings that start at a support point; the search runs over
/// those.
fn tiling_sup(
    x: &SparseVector,
    spec: &SpaceSpec,
    ctx: &Ctx,
) -> Result<(BigRational, u64), Error> {
    let pts = x.support().elements().to_vec();
    let n = pts.len();
    let opts = NormOptions { budget: ctx.opts.budget, require_exact: true };
    let mut subs = 0u64;
    let zero = BigRational::zero();
    let mut interval = vec![vec![zero.clone(); n]; n];
    for a in 0..n {
        for b in a..n {
            let r = norm(&x.restrict_interval(pts[a], pts[b]), spec, &opts)?;
            subs += r.subproblems;
            interval[a][b] = r.value().clone();
        }
    }
    // best[p][r]: splitting the suffix from support position p into at most
    // r contiguous intervals, allowing the tail to stay uncovered.
    let mut best = vec![vec![zero.clone(); n + 1]; n + 1];
    for r in 1..=n {
        for p in (0..n).rev() {
            let mut acc = best[p][r - 1].clone();
            for e in p..n {
                let cand = &interval[p][e] + &best[e + 1][r - 1];
                if cand > acc {
                    acc = cand;
                }
            }
            best[p][r] = acc;
        }
    }
    let mut out = zero;
    for q in 0..n {
        let cap = (pts[q] as usize).min(n - q);
        if best[q][cap] > out {
            out = best[q][cap].clone();
        }
    }
    Ok((out, subs))
}

/// Every admissible interval family inside the support hull, by brute force.
/// Families starting below the first support point only shrink their own
/// capacity, so the hull is enough.
fn literal_interval_sup(
    x: &SparseVector,
    spec: &SpaceSpec,
    family: &FamilyDescriptor,
    ctx: &Ctx,
) -> Result<(BigRational, u64), Error> {
    let lo = x.min_support().unwrap();
    let hi = x.max_support().unwrap();
    let opts = NormOptions { budget: ctx.opts.budget, require_exact: true };
    struct Walk<'a> {
        x: &'a SparseVector,
        spec: &'a SpaceSpec,
        family: &'a FamilyDescriptor,
        opts: NormOptions,
        hi: Index,
        best: BigRational,
        subs: u64,
    }
    impl Walk<'_> {
        fn go(
            &mut self,
            next: Index,
            mins: &mut Vec<Index>,
            acc: &BigRational,
        ) -> Result<(), Error> {
            for a in next..=self.hi {
                mins.push(a);
                let member = self.family.member(&FiniteSet::new(mins.clone()).unwrap());
                if member {
                    for b in a..=self.hi {
                        let r = norm(&self.x.restrict_interval(a, b), self.spec, &self.opts)?;
                        self.subs += r.subproblems;
                        let total = acc + r.value();
                        if total > self.best {
                            self.best = total.clone();
                        }
                        self.go(b + 1, mins, &total)?;
                    }
                }
                mins.pop();
            }
            Ok(())
        }
    }
    let mut walk = Walk { x, spec, family, opts, hi, best: BigRational::zero(), subs: 0 };
    walk.go(lo, &mut Vec::new(), &BigRational::zero())?;
    Ok((walk.best, walk.subs))
}

/// Interval families against `(eps, 2)` block combinations: the sum of part
/// norms stays under `(1 + eps/theta_1) * max block norm`.
pub fn lemma113(count: Option<usize>, ctx: &Ctx) -> Result<ExperimentReport, Error> {
    let spec = tslab_core::preset("mixed_fn(geometric:15/16)")?;
    let theta1 = spec.theta(1).unwrap();
    let theta2 = spec.theta(2).unwrap();
    let mut report = ExperimentReport::new("verify/lemma113", ctx.seed, ctx.budget());
    report.space(&spec.to_config());
    report.note(
        "instances are level-2 block combinations whose smallness sits below the level-2 weight",
    );
    report.note(
        "the interval-family maximum is computed over contiguous tilings; one literal-enumeration case cross-checks that reduction",
    );

    // Each (s, pattern, epsilon) triple must keep the skeleton's best
    // level-1 grab strictly under epsilon. For two paired runs that grab is
    // max over j of dropping j leading blocks and taking what the Schreier
    // constraint admits; it dips below 6/7 only at s = 6, 10, 12, 16, ...
    // and never below 4/5. Mixed and singleton skeletons grab at most
    // 5/8 + 1/(4s) and 1/2. Interval maxima cost roughly quadruples per
    // grid step, so the grid stops at s = 10 (30 support points).
    let mut plan: Vec<(Index, PairPattern, BigRational)> = Vec::new();
    for s in [6u32, 10] {
        plan.push((s, PairPattern::All, rat(6, 7)));
    }
    plan.push((6, PairPattern::All, rat(7, 8)));
    for s in [4u32, 6, 8, 10] {
        plan.push((s, PairPattern::Run0, rat(6, 7)));
    }
    for s in [4u32, 6, 8] {
        plan.push((s, PairPattern::Run0, rat(4, 5)));
    }
    for s in [2u32, 4, 6, 8] {
        plan.push((s, PairPattern::Singletons, rat(6, 7)));
    }
    for s in [2u32, 4, 6] {
        plan.push((s, PairPattern::Singletons, rat(4, 5)));
    }
    for s in [4u32, 6, 8] {
        plan.push((s, PairPattern::Singletons, rat(7, 8)));
    }
    if let Some(n) = count {
        plan.truncate(n);
    }

    for (s, pattern, epsilon) in plan {
        let inst = pair_instance(s, pattern, &epsilon)?;
        let mut case = CaseReport::new(format!("{}-eps{}-s{s:02}", pattern.label(), epsilon));
        run_interval_case(&mut case, &inst, &spec, &theta1, &theta2, ctx)?;
        report.push(case);
    }

    // Literal cross-check on the smallest layout the reduction applies to.
    let inst = pair_instance(2, PairPattern::Singletons, &rat(6, 7))?;
    let mut case = CaseReport::new("domination-crosscheck-s02".to_string());
    run_interval_case(&mut case, &inst, &spec, &theta1, &theta2, ctx)?;
    let (dp, s1) = tiling_sup(&inst.x, &spec, ctx)?;
    let (literal, s2) = literal_interval_sup(&inst.x, &spec, &FamilyDescriptor::schreier(1), ctx)?;
    case.subproblems += s1 + s2;
    case.check(CheckReport::eq_rat("tiling-equals-literal", &dp, &literal));
    report.push(case);

    report.finish();
    Ok(report)
}

fn run_interval_case(
    case: &mut CaseReport,
    inst: &BlockInstance,
    spec: &SpaceSpec,
    theta1: &BigRational,
    theta2: &BigRational,
    ctx: &Ctx,
) -> Result<(), Error> {
    case.input("epsilon", &inst.epsilon);
    case.input("blocks", inst.blocks.len());
    case.input("support", inst.x.support_len());
    case.check(CheckReport::lt(
        "smallness-below-level-2-weight",
        &inst.epsilon,
        theta2,
    ));
    let audit = check_basic_scc(&inst.skeleton, &inst.epsilon, 2, None)?;
    case.check(valid_check("skeleton-audit", audit));
    let mut max_block = BigRational::zero();
    let mut subs = 0u64;
    for block in &inst.blocks {
        let (v, s) = exact_norm(block, spec, ctx)?;
        subs += s;
        if v > max_block {
            max_block = v;
        }
    }
    let (sum, s) = tiling_sup(&inst.x, spec, ctx)?;
    subs += s;
    case.subproblems += subs;
    let bound = (BigRational::one() + &inst.epsilon / theta1) * &max_block;
    case.value("interval-family-sum", &sum);
    case.value("max-block-norm", &max_block);
    case.value("bound", &bound);
    case.check(CheckReport::le("interval-family-sum-bound", &sum, &bound));
    Ok(())
}

// ---------------------------------------------------------------------------
// Transplanted combinations at a fixed weight (desk-scale stand-in)
// ---------------------------------------------------------------------------

fn toy_plain_schedule(k2: u32) -> Result<SpaceSpec, Error> {
    SpaceSpec::new(
        format!("toy-plain-m2-5-k1-{k2}"),
        Variant::Plain,
        LevelRule::Explicit(vec![
            Level { family: FamilyDescriptor::schreier(1), theta: rat(1, 2) },
            Level { family: FamilyDescriptor::schreier(k2), theta: rat(1, 5) },
        ]),
    )
}

/// Level values of transplanted combinations against the paper-scale caps.
/// The smallness those caps assume shrinks like the square of the weight
/// reciprocal and forces tower-sized supports, so the one check that needs
/// it reports the computed margin instead of asserting it.
pub fn lemma24(ctx: &Ctx) -> Result<ExperimentReport, Error> {
    let spec = toy_plain_schedule(11)?;
    let m1 = rat(2, 1);
    let m2 = rat(5, 1);
    let mut report = ExperimentReport::new("verify/lemma24", ctx.seed, ctx.budget());
    report.space(&spec.to_config());
    report.toy(
        "paper-scale smallness (one over the squared weight reciprocal) needs supports past \
         any exact computation; instances use the smallest compact layouts and report the gap",
    );

    struct Plan {
        id: &'static str,
        eps: BigRational,
        start: Index,
        paired: bool,
    }
    let plans = [
        Plan { id: "singletons-d3-s3", eps: rat(1, 2), start: 3, paired: false },
        Plan { id: "singletons-d3-s4", eps: rat(1, 2), start: 4, paired: false },
        Plan { id: "pairs-d3-s3", eps: rat(1, 2), start: 3, paired: true },
    ];

    for plan in plans {
        let skeleton = make_compact_scc(&plan.eps, 2, plan.start)?;
        // Transplants of unit l1 mass: either the anchor itself or a split
        // pair at doubled positions.
        let v = if plan.paired {
            let mut entries = Vec::new();
            for (i, c) in skeleton.vector.iter() {
                let half = c / rat(2, 1);
                entries.push((2 * i - 1, half.clone()));
                entries.push((2 * i, half));
            }
            SparseVector::from_entries(entries)?
        } else {
            skeleton.vector.clone()
        };
        let mut case = CaseReport::new(plan.id.to_string());
        case.input("epsilon", &plan.eps);
        case.input("support", v.support_len());
        case.input("transplants", if plan.paired { "split pairs" } else { "anchors" });
        let audit = check_basic_scc(&skeleton.vector, &plan.eps, 2, None)?;
        case.check(valid_check("skeleton-audit", audit));

        let opts = NormOptions { budget: ctx.opts.budget, require_exact: true };
        let lvl2 = norm_level(&v, &spec, 2, &opts)?;
        case.subproblems += lvl2.subproblems;
        case.value("level-2-value", lvl2.value());
        // At or above the combination level the l1 estimate is the claim.
        case.check(CheckReport::le("upper-at-level-2", lvl2.value(), &m2.recip()));

        let lvl1 = norm_level(&v, &spec, 1, &opts)?;
        case.subproblems += lvl1.subproblems;
        case.value("level-1-value", lvl1.value());
        let paper_cap = rat(2, 1) / (&m1 * &m2);
        case.check(
            CheckReport::le("upper-at-level-1-paper", lvl1.value(), &paper_cap).hypothesis_gap(
                format!(
                    "the paper cap assumes smallness at most {}; this layout has {}",
                    m2.recip() * m2.recip(),
                    plan.eps
                ),
            ),
        );

        // Relative smallness against the doubled lower family: the computed
        // grab documents how far desk layouts sit from the paper regime.
        let prime = FamilyDescriptor::prime(FamilyDescriptor::schreier(10));
        let grab = prime.max_weight(&skeleton.vector)?;
        case.value("relative-grab", &grab);
        case.check(
            CheckReport::le("relative-smallness-paper", &grab, &(m2.recip() * m2.recip()))
                .hypothesis_gap(
                    "two disjoint lower-family sets capture nearly all the mass at desk scale",
                ),
        );

        // Norm in the truncated space that keeps only the first level.
        let truncated = SpaceSpec::new(
            "toy-truncated",
            Variant::Plain,
            LevelRule::Explicit(vec![Level {
                family: FamilyDescriptor::schreier(1),
                theta: rat(1, 2),
            }]),
        )?;
        let (tnorm, subs) = exact_norm(&v, &truncated, ctx)?;
        case.subproblems += subs;
        case.value("truncated-norm", &tnorm);
        case.check(
            CheckReport::le(
                "truncated-norm-paper",
                &tnorm,
                &(rat(2, 1) / (&m2 * &m2)),
            )
            .hypothesis_gap("the squared-weight cap likewise assumes paper-scale smallness"),
        );
        report.push(case);
    }
    report.finish();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Straddled blocks under weighted functionals (desk-scale stand-in)
// ---------------------------------------------------------------------------

/// Straddle bookkeeping for weighted interval families against block
/// combinations: anchors of straddled blocks form a member of the weight's
/// family, and their mass stays under the skeleton's best grab.
pub fn lemma27(ctx: &Ctx) -> Result<ExperimentReport, Error> {
    let spec = toy_plain_schedule(2)?;
    let r_family = FamilyDescriptor::schreier(2);
    let m_r = rat(5, 1);
    let mut report = ExperimentReport::new("verify/lemma27", ctx.seed, ctx.budget());
    report.space(&spec.to_config());
    report.toy(
        "the weight hierarchy here is two levels deep, so the strict weight-versus-level \
         hypothesis is out of reach; the straddle bookkeeping itself is scale-free and exact",
    );
    report.note("sampled families have few parts, so the membership clause holds with slack");

    let layouts: [(Index, PairPattern, BigRational); 3] = [
        (4, PairPattern::All, rat(9, 10)),
        (6, PairPattern::All, rat(6, 7)),
        (6, PairPattern::Run0, rat(6, 7)),
    ];
    for (s, pattern, epsilon) in layouts {
        let inst = pair_instance(s, pattern, &epsilon)?;
        let base = format!("{}-s{s:02}", pattern.label());
        let gamma = r_family.max_weight(&inst.skeleton)?;

        let mut case = CaseReport::new(format!("{base}-layout"));
        case.input("epsilon", &epsilon);
        case.input("blocks", inst.blocks.len());
        let audit = check_basic_scc(&inst.skeleton, &epsilon, 2, None)?;
        case.check(valid_check("skeleton-audit", audit));
        case.value("skeleton-grab", &gamma);
        let opts = NormOptions { budget: ctx.opts.budget, require_exact: true };
        let lvl = norm_level(&inst.x, &spec, 2, &opts)?;
        case.subproblems += lvl.subproblems;
        let mut max_block = BigRational::zero();
        for block in &inst.blocks {
            let (v, s) = exact_norm(block, &spec, ctx)?;
            case.subproblems += s;
            if v > max_block {
                max_block = v;
            }
        }
        let cap = &max_block * (m_r.recip() + &gamma);
        case.value("level-2-value", lvl.value());
        case.check(
            CheckReport::le("weighted-value-bound", lvl.value(), &cap)
                .with_note("the grab term dominates this cap at desk scale"),
        );
        report.push(case);

        let hull_lo = inst.x.min_support().unwrap();
        let hull_hi = inst.x.max_support().unwrap();
        for trial in 0..4u64 {
            let mut rng = ctx.rng(&format!("lemma27-{base}"), trial);
            let parts = sample_interval_family(&mut rng, hull_lo, hull_hi, &r_family)?;
            let mut case = CaseReport::new(format!("{base}-family-{trial}"));
            case.input(
                "intervals",
                parts
                    .iter()
                    .map(|p| format!("[{},{}]", p.min().unwrap(), p.max().unwrap()))
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            // A block is straddled when at least two parts meet it.
            let mut straddled_anchors = Vec::new();
            let mut straddled_mass = BigRational::zero();
            for (block, coeff) in inst.blocks.iter().zip(&inst.coefficients) {
                let touched = parts
                    .iter()
                    .filter(|p| block.iter().any(|(i, _)| p.contains(i)))
                    .count();
                if touched >= 2 {
                    straddled_anchors.push(block.max_support().unwrap());
                    straddled_mass += coeff;
                }
            }
            case.value_count("straddled-blocks", straddled_anchors.len() as u64);
            if straddled_anchors.is_empty() {
                case.check(
                    CheckReport::label("straddled-anchors-member", "empty", "member", Outcome::Pass)
                        .with_note("no block straddles this family"),
                );
            } else {
                let anchors = FiniteSet::new(straddled_anchors)?;
                case.check(valid_check(
                    "straddled-anchors-member",
                    r_family.member(&anchors),
                ));
            }
            case.value("straddled-mass", &straddled_mass);
            case.check(CheckReport::le("straddled-mass-bound", &straddled_mass, &gamma));
            report.push(case);
        }
    }
    report.finish();
    Ok(report)
}

fn sample_interval_family(
    rng: &mut ChaCha8Rng,
    lo: Index,
    hi: Index,
    family: &FamilyDescriptor,
) -> Result<Vec<FiniteSet>, Error> {
    for _ in 0..64 {
        let count = rng.gen_range(2..=5usize);
        let mut starts: Vec<Index> = Vec::new();
        while starts.len() < count {
            let c = rng.gen_range(lo..=hi);
            if !starts.contains(&c) {
                starts.push(c);
            }
        }
        starts.sort_unstable();
        let mut parts = Vec::new();
        for (i, &a) in starts.iter().enumerate() {
            let limit = if i + 1 < starts.len() { starts[i + 1] - 1 } else { hi };
            let b = rng.gen_range(a..=limit);
            parts.push(FiniteSet::new((a..=b).collect())?);
        }
        if family.is_admissible(&parts) {
            return Ok(parts);
        }
    }
    Err(Error::Infeasible("no admissible interval family after 64 draws".into()))
}

// ---------------------------------------------------------------------------
// Seminormalized block combinations in the toy schedule space
// ---------------------------------------------------------------------------

/// Norm bounds for combinations of seminormalized blocks in the boundedly
/// modified toy space; the genuine content at desk scale is the lower bound.
pub fn cor217(ctx: &Ctx) -> Result<ExperimentReport, Error> {
    let spec = tslab_core::preset("xm1u_toy(m=2,5;k=1,11)")?;
    let m2 = rat(5, 1);
    let mut report = ExperimentReport::new("verify/cor217", ctx.seed, ctx.budget());
    report.space(&spec.to_config());
    report.toy(
        "paper-scale smallness is out of reach and every upper constant here exceeds the l1 \
         mass outright; the lower bound and the block audits are the live checks",
    );
    report.note(
        "wide supports exceed the disjoint-split cap, so those norms are certified bounds",
    );

    // Paired-run skeletons grab up to 7/8 of the mass at s = 4 and 8, so
    // each epsilon sits just above its layout's best grab.
    let layouts: [(Index, BigRational); 3] =
        [(4, rat(9, 10)), (6, rat(6, 7)), (8, rat(8, 9))];
    for (s, epsilon) in layouts {
        let inst = pair_instance(s, PairPattern::All, &epsilon)?;
        let mut case = CaseReport::new(format!("ris-s{s:02}"));
        case.input("epsilon", &epsilon);
        case.input("support", inst.x.support_len());
        let audit = check_basic_scc(&inst.skeleton, &epsilon, 2, None)?;
        case.check(valid_check("skeleton-audit", audit));
        case.check(
            CheckReport::le("smallness-paper", &epsilon, &(m2.recip() * m2.recip()))
                .hypothesis_gap("paper-scale smallness needs tower-sized supports"),
        );

        let mut min_block: Option<BigRational> = None;
        for block in &inst.blocks {
            let (v, subs) = exact_norm(block, &spec, ctx)?;
            case.subproblems += subs;
            min_block = Some(match min_block {
                None => v,
                Some(m) => m.min(v),
            });
        }
        let min_block = min_block.unwrap();
        case.value("min-block-norm", &min_block);
        case.check(CheckReport::ge("blocks-seminormalized", &min_block, &rat(1, 2)));

        let r = norm(&inst.x, &spec, &ctx.opts)?;
        case.subproblems += r.subproblems;
        let (lower, upper) = (r.outcome.lower().clone(), r.outcome.upper().clone());
        case.value("norm-lower", &lower);
        case.value("norm-upper", &upper);
        if r.outcome.exact().is_none() {
            case.input("norm", "certified bounds");
        }
        case.check(CheckReport::ge(
            "norm-lower-bound",
            &lower,
            &(rat(1, 4) * m2.recip()),
        ));
        case.check(
            CheckReport::le("norm-upper-bound", &upper, &(rat(17, 1) * m2.recip()))
                .with_note("loose at this scale: the l1 mass already sits under the constant"),
        );

        if inst.x.support_len() <= 14 {
            let opts = NormOptions { budget: ctx.opts.budget, require_exact: true };
            let lvl2 = norm_level(&inst.x, &spec, 2, &opts)?;
            case.subproblems += lvl2.subproblems;
            case.value("level-2-value", lvl2.value());
            let b1 = inst.coefficients[0].clone();
            case.check(
                CheckReport::le(
                    "level-2-cap",
                    lvl2.value(),
                    &(rat(2, 1) * &b1 + rat(16, 1) * m2.recip()),
                )
                .with_note("loose at this scale"),
            );
            let lvl1 = norm_level(&inst.x, &spec, 1, &opts)?;
            case.subproblems += lvl1.subproblems;
            case.value("level-1-value", lvl1.value());
            case.check(
                CheckReport::le("level-1-cap", lvl1.value(), &rat(33, 10))
                    .with_note("loose at this scale"),
            );
        }
        report.push(case);
    }

    // Clause-by-clause audit of a two-block rapidly-increasing candidate.
    let pairs = |lo: Index, hi: Index| -> Result<Vec<SparseVector>, Error> {
        (lo..hi)
            .step_by(2)
            .map(|p| {
                SparseVector::from_entries(vec![
                    (p, BigRational::one()),
                    (p + 1, BigRational::one()),
                ])
            })
            .collect()
    };
    // The first block closes a level-1 combination over six pair blocks;
    // the second grows the full level-2 skeleton, whose smallness can never
    // reach the squared level-2 weight at desk scale, so that one clause is
    // reported with its margin instead of asserted.
    let first = make_block_scc(&pairs(4, 20)?, &rat(1, 5), 1)?;
    let second = make_block_scc(&pairs(18, 1200)?, &rat(9, 10), 2)?;
    let ris = RisWitness {
        blocks: vec![first, second],
        indices: vec![1, 2],
        context: RisContext::Plain,
    };
    let mut case = CaseReport::new("ris-clauses".to_string());
    case.input("blocks", ris.blocks.len());
    let checked = check_ris(&ris, &spec, false, &ctx.opts)?;
    for clause in checked.clauses {
        let outcome = match clause.status {
            ClauseStatus::Pass => Outcome::Pass,
            ClauseStatus::Fail => Outcome::Fail,
            ClauseStatus::Indeterminate => Outcome::Indeterminate,
        };
        let label = match clause.status {
            ClauseStatus::Pass => "pass",
            ClauseStatus::Fail => "fail",
            ClauseStatus::Indeterminate => "indeterminate",
        };
        let check = CheckReport::label(&clause.id, label, "pass", outcome);
        let check = if clause.id == "b-combination-2" {
            check.hypothesis_gap(clause.details)
        } else {
            check.with_note(clause.details)
        };
        case.check(check);
    }
    report.push(case);
    report.finish();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Disjoint lower bound in modified spaces
// ---------------------------------------------------------------------------

/// For disjointly supported vectors living on `[n, oo)`, the norm of the sum
/// dominates `theta_1` times the sum of norms when the first level splits
/// disjointly.
pub fn theta1_lower(
    spec: &SpaceSpec,
    pieces: u32,
    count: u32,
    ctx: &Ctx,
) -> Result<ExperimentReport, Error> {
    if !(2..=6).contains(&pieces) {
        return Err(Error::bad_input("piece count must be 2..=6"));
    }
    let k1 = spec.min_level();
    if spec.mode(k1) != SplitMode::Allowable {
        return Err(Error::bad_input(
            "the disjoint lower bound needs allowable splits at the first level",
        ));
    }
    let theta1 = spec.theta(k1).unwrap();
    let mut report = ExperimentReport::new("verify/theta1_lower", ctx.seed, ctx.budget());
    report.space(&spec.to_config());
    report.note(format!(
        "trials sample {pieces} disjoint vectors supported in [{pieces}, {}]",
        pieces + 9
    ));

    let window: Vec<Index> = (pieces..pieces + 10).collect();
    for t in 0..count {
        let mut rng = ctx.rng("theta1-lower", u64::from(t));
        // Split the window into nonempty pieces, leaving some indices unused.
        let assignment: Vec<usize> = loop {
            let cand: Vec<usize> =
                window.iter().map(|_| rng.gen_range(0..=pieces as usize)).collect();
            if (0..pieces as usize).all(|p| cand.contains(&p)) {
                break cand;
            }
        };
        let mut groups: Vec<Vec<(Index, BigRational)>> = vec![Vec::new(); pieces as usize];
        for (&i, &slot) in window.iter().zip(&assignment) {
            if slot == pieces as usize {
                continue;
            }
            let num = rng.gen_range(1..=3i64);
            let den = rng.gen_range(1..=4i64);
            let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
            groups[slot].push((i, rat(sign * num, den)));
        }
        let parts: Vec<SparseVector> = groups
            .into_iter()
            .map(SparseVector::from_entries)
            .collect::<Result<_, _>>()?;
        let total = SparseVector::from_entries(
            parts.iter().flat_map(|p| p.iter().map(|(i, c)| (i, c.clone()))).collect(),
        )?;

        let mut case = CaseReport::new(format!("trial-{t:03}"));
        case.input("sum", &total);
        let mut rhs = BigRational::zero();
        for part in &parts {
            let (v, subs) = exact_norm(part, spec, ctx)?;
            case.subproblems += subs;
            rhs += v;
        }
        rhs *= &theta1;
        let (lhs, subs) = exact_norm(&total, spec, ctx)?;
        case.subproblems += subs;
        case.value("norm-of-sum", &lhs);
        case.value("weighted-sum-of-norms", &rhs);
        case.check(CheckReport::ge("disjoint-lower-bound", &lhs, &rhs));
        report.push(case);
    }
    report.finish();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Distortion experiment
// ---------------------------------------------------------------------------

/// Level-`level` witness for the distortion ratio. First-level witnesses are
/// maximal first-family runs, where every split is a full singleton split and
/// the ratio reaches its ceiling of one plus the first weight. Higher levels
/// get geometrically decaying blocks: their sup-norm carries the whole norm,
/// the one-set split is the best first-level split, and the ratio drops to
/// half of one plus the block's l1 mass, strictly below the ceiling. The
/// decaying block stands in for the concentration that genuine higher-level
/// combinations only reach at sizes far past exact computation.
fn distortion_witness(
    spec: &SpaceSpec,
    level: u32,
    rng: &mut ChaCha8Rng,
) -> Result<SparseVector, Error> {
    let entries: Vec<(Index, BigRational)> = if level == spec.min_level() {
        let s = rng.gen_range(8..=10u32);
        (s..2 * s).map(|i| (i, BigRational::one())).collect()
    } else {
        let d = rng.gen_range(8..=12u32);
        let start = rng.gen_range(d + 1..=d + 4);
        (0..=d)
            .map(|t| {
                (start + t, rat(1, 3).pow(i32::try_from(t).expect("small exponent")))
            })
            .collect()
    };
    SparseVector::from_entries(entries)
}

/// Ratio of the `i0`-distorted norm to the norm, compared between witnesses
/// tuned to level `i0` and witnesses tuned to level `j`. Directional only:
/// the witnesses are sampled, not extremal.
pub fn distort(
    spec: &SpaceSpec,
    i0: u32,
    j: u32,
    trials: u32,
    vec: Option<SparseVector>,
    ctx: &Ctx,
) -> Result<ExperimentReport, Error> {
    for k in [i0, j] {
        if spec.theta(k).is_none() {
            return Err(Error::bad_input(format!("space has no level {k}")));
        }
    }
    let mut report = ExperimentReport::new("distort", ctx.seed, ctx.budget());
    report.space(&spec.to_config());

    let ratio = |v: &SparseVector| -> Result<(BigRational, BigRational, u64), Error> {
        let d = distorted_norm(v, spec, i0, &ctx.opts)?;
        let subs = d.base.subproblems + d.level.subproblems;
        let r = &d.value / d.base.value();
        Ok((r, d.value, subs))
    };

    if let Some(v) = vec {
        if v.is_zero() {
            return Err(Error::bad_input("the distortion ratio of the zero vector is undefined"));
        }
        report.note("single-vector mode: reports the ratio for the given vector only");
        let mut case = CaseReport::new("vector".to_string());
        case.input("vector", &v);
        let (r, d, subs) = ratio(&v)?;
        case.subproblems = subs;
        case.value("distorted-norm", &d);
        case.value("ratio", &r);
        // The one-set split pins the ratio between twice the weight and one
        // plus the weight.
        let theta = spec.theta(i0).expect("level checked above");
        case.check(CheckReport::ge("ratio-lower", &r, &(rat(2, 1) * &theta)));
        case.check(CheckReport::le("ratio-upper", &r, &(BigRational::one() + &theta)));
        report.push(case);
        report.finish();
        return Ok(report);
    }

    report.toy(
        "directional experiment: sampled witnesses separate the levels, they do not certify \
         the full distortion constant",
    );
    let one = BigRational::one();
    let mut gap_min: Option<BigRational> = None;
    for t in 0..trials {
        let mut rng_z = ctx.rng(&format!("distort-level-{i0}"), u64::from(t));
        let mut rng_y = ctx.rng(&format!("distort-level-{j}"), u64::from(t));
        let z = distortion_witness(spec, i0, &mut rng_z)?;
        let y = distortion_witness(spec, j, &mut rng_y)?;
        let mut case = CaseReport::new(format!("trial-{t:02}"));
        case.input("witness-tuned", &z);
        case.input("witness-other", &y);
        let (rz, _, s1) = ratio(&z)?;
        let (ry, _, s2) = ratio(&y)?;
        case.subproblems = s1 + s2;
        let gap = &rz / &ry;
        case.value("ratio-tuned", &rz);
        case.value("ratio-other", &ry);
        case.value("gap", &gap);
        case.check(CheckReport::gt("gap-above-one", &gap, &one));
        gap_min = Some(match gap_min {
            None => gap,
            Some(m) => m.min(gap),
        });
        report.push(case);
    }
    if let Some(m) = gap_min {
        let mut case = CaseReport::new("summary".to_string());
        case.value("gap-min", &m);
        case.check(CheckReport::gt("gap-min-above-one", &m, &one));
        report.push(case);
    }
    report.finish();
    Ok(report)
}
