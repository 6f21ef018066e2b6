//! Command-line interface: exact norms, family enumeration, combination
//! constructions, verification suites, and the distortion experiment.
//!
//! Exit codes: 0 all checks pass, 1 a checked bound failed outside toy mode
//! (or a witness re-check came back invalid), 2 a resource budget ran out,
//! 3 bad input or any other error.

mod report;
mod suites;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde_json::json;

use tslab_core::rational::{decimal_6sig, format_rational, parse_rational};
use tslab_core::{
    check_ris, check_scc_witness, find_seminormalized_scc, make_basic_scc, make_block_scc,
    make_compact_scc, make_nested_trees, norm, norm_level, preset, preset_catalog, Budget,
    ClauseStatus, Error, FamilyDescriptor, IndexStream, LevelRule, NormOptions, RisWitness,
    SccWitness, SpaceSpec, SparseVector, SplitMode,
};

use report::{ExperimentReport, Rendered};
use suites::Ctx;

/// Seed used when none is given; fixed so default runs are reproducible.
const DEFAULT_SEED: u64 = 75148;

#[derive(Parser)]
#[command(
    name = "tslab",
    version,
    about = "Exact norms and verification suites for hierarchy-family sequence spaces"
)]
struct Cli {
    /// Emit machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for sampled instances.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Subproblem budget; overrides the TSLAB_BUDGET environment variable.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Named space preset (see `spaces list`), where the command takes one.
    #[arg(long, global = true)]
    space: Option<String>,
    /// Space config file; mutually exclusive with --space.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the norm of a vector, with optional certificate.
    Norm(NormArgs),
    /// Run a verification suite and report every check.
    Verify {
        #[command(subcommand)]
        suite: SuiteCmd,
    },
    /// Compare distortion ratios between level-tuned witnesses.
    Distort(DistortArgs),
    /// Enumerate or count the members of a family inside a window.
    Families(FamiliesArgs),
    /// Construct or re-check smallness-controlled combinations.
    Scc {
        #[command(subcommand)]
        action: SccCmd,
    },
    /// List named spaces or show one in detail.
    Spaces {
        #[command(subcommand)]
        action: SpacesCmd,
    },
}

#[derive(Args)]
struct NormArgs {
    /// Vector as index:value pairs, e.g. 2:1,3:1/2.
    #[arg(long)]
    vec: String,
    /// Weighted value at one level instead of the full norm.
    #[arg(long)]
    level: Option<u32>,
    /// Print the norming-functional certificate.
    #[arg(long)]
    certificate: bool,
}

#[derive(Args)]
struct DistortArgs {
    /// Level whose distorted norm is compared.
    #[arg(long)]
    i0: u32,
    /// Level the comparison witnesses are tuned to.
    #[arg(long)]
    j: u32,
    #[arg(long, default_value_t = 20)]
    trials: u32,
    /// Report the ratio of this one vector instead of sampling.
    #[arg(long)]
    vec: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum What {
    Members,
    Maximal,
    Count,
}

#[derive(Args)]
struct FamiliesArgs {
    /// Family descriptor, e.g. "S(2)", "A(3)", "S(1)[S(2)]", or "S(1)'".
    descriptor: String,
    /// Window lo..hi, inclusive on both ends.
    #[arg(long)]
    window: String,
    #[arg(long, value_enum, default_value_t = What::Members)]
    what: What,
}

#[derive(Subcommand)]
enum SuiteCmd {
    /// Modified-membership identity and bracket composition oracles.
    Schreier {
        /// Window upper end; all nonempty subsets of 1..=ground are tested.
        #[arg(long, default_value_t = 10)]
        ground: u32,
    },
    /// Two-sided norm estimate for canonical combinations.
    Lemma112 {
        #[arg(long)]
        j: Option<u32>,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        /// Weight rule: "1/(n+1)" (default) or "geometric:Q".
        #[arg(long)]
        theta: Option<String>,
    },
    /// Interval-family sums against block combinations.
    Lemma113 {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Level values of transplanted combinations (desk-scale stand-in).
    Lemma24,
    /// Straddled-block bookkeeping under weighted functionals (desk-scale stand-in).
    Lemma27,
    /// Norm bounds for seminormalized block combinations (desk-scale stand-in).
    Cor217,
    /// Disjoint lower bound in modified spaces.
    #[command(name = "theta1_lower")]
    Theta1Lower {
        #[arg(long, default_value_t = 3)]
        pieces: u32,
        #[arg(long, default_value_t = 200)]
        count: u32,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MakeKind {
    Basic,
    Compact,
    Block,
    Nested,
    Seminormalized,
}

#[derive(Args)]
struct MakeArgs {
    #[arg(long, value_enum)]
    kind: MakeKind,
    /// Smallness threshold, e.g. 1/2.
    #[arg(long)]
    eps: String,
    /// Combination level.
    #[arg(long, default_value_t = 1)]
    level: u32,
    /// Index stream: naturals, evens, odds, start:step, or a comma list.
    #[arg(long, default_value = "naturals")]
    stream: String,
    /// First index for compact layouts.
    #[arg(long, default_value_t = 1)]
    start: u32,
    /// Comma-separated depth levels for nested systems, e.g. 1,2.
    #[arg(long)]
    levels: Option<String>,
    /// Semicolon-separated block vectors, e.g. "4:1;5:1,6:1".
    #[arg(long)]
    blocks: Option<String>,
    /// Generation cap for the seminormalized search.
    #[arg(long, default_value_t = 6)]
    cap: u32,
}

#[derive(Args)]
struct CheckArgs {
    /// Combination witness JSON file.
    #[arg(long)]
    witness: Option<PathBuf>,
    /// Sequence witness JSON file.
    #[arg(long)]
    ris: Option<PathBuf>,
    /// Compare ratio clauses strictly.
    #[arg(long)]
    strict_ratios: bool,
}

#[derive(Subcommand)]
enum SccCmd {
    /// Construct a combination; prints the witness as JSON.
    Make(MakeArgs),
    /// Re-check a witness from scratch.
    Check(CheckArgs),
}

#[derive(Subcommand)]
enum SpacesCmd {
    /// Catalog of named presets.
    List,
    /// Levels, weights, and regularity findings for one space.
    Show {
        /// Preset name; omit when using --config.
        name: Option<String>,
        /// Highest level to print and probe.
        #[arg(long, default_value_t = 6)]
        upto: u32,
    },
}

fn main() {
    let code = match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ResourceLimit { .. } => 2,
                _ => 3,
            }
        }
    };
    std::process::exit(code);
}

fn run() -> Result<i32, Error> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return Ok(code);
        }
    };

    let budget = resolve_budget(cli.budget)?;
    let ctx = Ctx {
        seed: cli.seed,
        opts: NormOptions { budget, require_exact: false },
    };
    let space = resolve_space(&cli.space, &cli.config)?;
    let json = cli.json;

    match cli.command {
        Command::Norm(args) => cmd_norm(args, require_space(space)?, &ctx, json),
        Command::Verify { suite } => {
            let report = match suite {
                SuiteCmd::Schreier { ground } => {
                    forbid_space(&space, "verify schreier")?;
                    suites::schreier(ground, &ctx)?
                }
                SuiteCmd::Lemma112 { j, eps, count, theta } => {
                    forbid_space(&space, "verify lemma112")?;
                    let eps = eps.as_deref().map(parse_rational).transpose()?;
                    suites::lemma112(j, eps, count, theta.as_deref(), &ctx)?
                }
                SuiteCmd::Lemma113 { count } => {
                    forbid_space(&space, "verify lemma113")?;
                    suites::lemma113(count, &ctx)?
                }
                SuiteCmd::Lemma24 => {
                    forbid_space(&space, "verify lemma24")?;
                    suites::lemma24(&ctx)?
                }
                SuiteCmd::Lemma27 => {
                    forbid_space(&space, "verify lemma27")?;
                    suites::lemma27(&ctx)?
                }
                SuiteCmd::Cor217 => {
                    forbid_space(&space, "verify cor217")?;
                    suites::cor217(&ctx)?
                }
                SuiteCmd::Theta1Lower { pieces, count } => {
                    let spec = match space {
                        Some(s) => s,
                        None => preset("tsirelson_modified")?,
                    };
                    suites::theta1_lower(&spec, pieces, count, &ctx)?
                }
            };
            emit_report(&report, json)
        }
        Command::Distort(args) => {
            let spec = match space {
                Some(s) => s,
                None => preset("xm1u_toy(m=2,5;k=1,11)")?,
            };
            let vec = args.vec.as_deref().map(str::parse::<SparseVector>).transpose()?;
            let report = suites::distort(&spec, args.i0, args.j, args.trials, vec, &ctx)?;
            emit_report(&report, json)
        }
        Command::Families(args) => {
            forbid_space(&space, "families")?;
            cmd_families(args, json)
        }
        Command::Scc { action } => match action {
            SccCmd::Make(args) => cmd_scc_make(args, space, &ctx),
            SccCmd::Check(args) => cmd_scc_check(args, space, &ctx, json),
        },
        Command::Spaces { action } => match action {
            SpacesCmd::List => {
                forbid_space(&space, "spaces list")?;
                cmd_spaces_list(json)
            }
            SpacesCmd::Show { name, upto } => cmd_spaces_show(name, space, upto, json),
        },
    }
}

fn resolve_budget(flag: Option<u64>) -> Result<Budget, Error> {
    if let Some(limit) = flag {
        return Ok(Budget::new(limit));
    }
    match std::env::var("TSLAB_BUDGET") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Budget::new)
            .map_err(|_| Error::bad_input(format!("TSLAB_BUDGET must be an integer, got {raw:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(Budget::default()),
        Err(e) => Err(Error::bad_input(format!("TSLAB_BUDGET is unreadable: {e}"))),
    }
}

fn resolve_space(
    space: &Option<String>,
    config: &Option<PathBuf>,
) -> Result<Option<SpaceSpec>, Error> {
    match (space, config) {
        (Some(_), Some(_)) => {
            Err(Error::bad_input("--space and --config are mutually exclusive"))
        }
        (Some(name), None) => preset(name).map(Some),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::bad_input(format!("cannot read {}: {e}", path.display())))?;
            SpaceSpec::parse_config(&text).map(Some)
        }
        (None, None) => Ok(None),
    }
}

fn require_space(space: Option<SpaceSpec>) -> Result<SpaceSpec, Error> {
    space.ok_or_else(|| Error::bad_input("a space is required: pass --space NAME or --config FILE"))
}

fn forbid_space(space: &Option<SpaceSpec>, what: &str) -> Result<(), Error> {
    if space.is_some() {
        return Err(Error::bad_input(format!(
            "{what} fixes its own space; drop --space/--config"
        )));
    }
    Ok(())
}

fn emit_report(report: &ExperimentReport, json: bool) -> Result<i32, Error> {
    if json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.render_table());
    }
    Ok(report.exit_code())
}

fn rendered_json(r: &BigRational) -> serde_json::Value {
    json!({ "exact": format_rational(r), "decimal": decimal_6sig(r) })
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn cmd_norm(args: NormArgs, spec: SpaceSpec, ctx: &Ctx, json: bool) -> Result<i32, Error> {
    let x: SparseVector = args.vec.parse()?;
    let result = match args.level {
        None => norm(&x, &spec, &ctx.opts)?,
        Some(k) => norm_level(&x, &spec, k, &ctx.opts)?,
    };
    let what = match args.level {
        None => "norm".to_string(),
        Some(k) => format!("level-{k} value"),
    };
    if json {
        let mut obj = json!({
            "command": "norm",
            "space": spec.name,
            "vector": x.to_string(),
            "subproblems": result.subproblems,
        });
        if let Some(k) = args.level {
            obj["level"] = json!(k);
        }
        match result.outcome.exact() {
            Some(v) => {
                obj["outcome"] = json!("exact");
                obj["value"] = rendered_json(v);
            }
            None => {
                obj["outcome"] = json!("bounds");
                obj["lower"] = rendered_json(result.outcome.lower());
                obj["upper"] = rendered_json(result.outcome.upper());
            }
        }
        if args.certificate {
            obj["certificate"] = serde_json::to_value(&result.certificate)
                .map_err(|e| Error::bad_input(format!("certificate serialization: {e}")))?;
        }
        print_json(&obj);
    } else {
        println!("space: {}", spec.name);
        println!("vector: {x}");
        match result.outcome.exact() {
            Some(v) => println!("{what} = {}", Rendered::rational(v)),
            None => {
                let (lo, hi) = (result.outcome.lower(), result.outcome.upper());
                println!(
                    "{what} in [{}, {}]  (certified bounds: disjoint splits exceed the subset cap)",
                    Rendered::rational(lo),
                    Rendered::rational(hi)
                );
            }
        }
        println!("subproblems: {}", result.subproblems);
        if args.certificate {
            println!("certificate:");
            print!("{}", result.certificate);
        }
    }
    Ok(0)
}

fn parse_window(s: &str) -> Result<(u32, u32), Error> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| Error::bad_input(format!("window looks like 2..9, got {s:?}")))?;
    let lo = lo.trim().parse().map_err(|_| Error::bad_input(format!("bad window start {lo:?}")))?;
    let hi = hi.trim().parse().map_err(|_| Error::bad_input(format!("bad window end {hi:?}")))?;
    Ok((lo, hi))
}

fn cmd_families(args: FamiliesArgs, json: bool) -> Result<i32, Error> {
    let desc: FamilyDescriptor = args.descriptor.parse()?;
    let (lo, hi) = parse_window(&args.window)?;
    match args.what {
        What::Count => {
            let count = desc.count_members(lo, hi)?;
            if json {
                print_json(&json!({
                    "command": "families",
                    "descriptor": desc.to_string(),
                    "window": format!("{lo}..{hi}"),
                    "nonempty_members": count,
                }));
            } else {
                println!("nonempty members of {desc} in [{lo}, {hi}]: {count}");
            }
        }
        What::Members | What::Maximal => {
            let sets = if args.what == What::Members {
                let mut sets = vec![tslab_core::FiniteSet::empty()];
                sets.extend(desc.members(lo, hi)?);
                sets
            } else {
                desc.maximal_members(lo, hi)?
            };
            let kind = if args.what == What::Members { "members" } else { "maximal" };
            if json {
                let mut obj = json!({
                    "command": "families",
                    "descriptor": desc.to_string(),
                    "window": format!("{lo}..{hi}"),
                });
                obj[kind] = json!(sets.iter().map(ToString::to_string).collect::<Vec<_>>());
                print_json(&obj);
            } else {
                for set in sets {
                    println!("{set}");
                }
            }
        }
    }
    Ok(0)
}

fn parse_blocks(s: &str) -> Result<Vec<SparseVector>, Error> {
    s.split(';').map(|part| part.trim().parse()).collect()
}

fn cmd_scc_make(args: MakeArgs, space: Option<SpaceSpec>, ctx: &Ctx) -> Result<i32, Error> {
    let eps = parse_rational(&args.eps)?;
    if args.kind != MakeKind::Seminormalized {
        forbid_space(&space, "this construction")?;
    }
    let value = match args.kind {
        MakeKind::Basic => {
            let stream = IndexStream::parse(&args.stream)?;
            let w = make_basic_scc(&eps, args.level, &stream)?;
            serde_json::to_value(&w)
        }
        MakeKind::Compact => {
            let w = make_compact_scc(&eps, args.level, args.start)?;
            serde_json::to_value(&w)
        }
        MakeKind::Block => {
            let blocks = parse_blocks(args.blocks.as_deref().ok_or_else(|| {
                Error::bad_input("block combinations need --blocks \"v1;v2;...\"")
            })?)?;
            let w = make_block_scc(&blocks, &eps, args.level)?;
            serde_json::to_value(&w)
        }
        MakeKind::Nested => {
            let levels: Vec<u32> = args
                .levels
                .as_deref()
                .ok_or_else(|| Error::bad_input("nested systems need --levels, e.g. 1,2"))?
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::bad_input(format!("bad level {t:?}")))
                })
                .collect::<Result<_, _>>()?;
            let stream = IndexStream::parse(&args.stream)?;
            let trees = make_nested_trees(&eps, &levels, &stream)?;
            serde_json::to_value(&trees)
        }
        MakeKind::Seminormalized => {
            let spec = require_space(space)?;
            let blocks = parse_blocks(args.blocks.as_deref().ok_or_else(|| {
                Error::bad_input("the seminormalized search needs --blocks \"v1;v2;...\"")
            })?)?;
            let found =
                find_seminormalized_scc(&blocks, &eps, args.level, &spec, args.cap, &ctx.opts)?;
            serde_json::to_value(&found.witness).map(|witness| {
                json!({
                    "witness": witness,
                    "generation": found.generation,
                    "norm": rendered_json(&found.norm),
                })
            })
        }
    }
    .map_err(|e| Error::bad_input(format!("witness serialization: {e}")))?;
    print_json(&value);
    Ok(0)
}

fn cmd_scc_check(
    args: CheckArgs,
    space: Option<SpaceSpec>,
    ctx: &Ctx,
    json: bool,
) -> Result<i32, Error> {
    let read = |path: &PathBuf| -> Result<String, Error> {
        std::fs::read_to_string(path)
            .map_err(|e| Error::bad_input(format!("cannot read {}: {e}", path.display())))
    };
    match (&args.witness, &args.ris) {
        (Some(_), Some(_)) => Err(Error::bad_input("--witness and --ris are mutually exclusive")),
        (None, None) => Err(Error::bad_input("pass --witness FILE or --ris FILE")),
        (Some(path), None) => {
            let w: SccWitness = serde_json::from_str(&read(path)?)
                .map_err(|e| Error::bad_input(format!("bad witness file: {e}")))?;
            let valid = check_scc_witness(&w, space.as_ref())?;
            if json {
                print_json(&json!({
                    "command": "scc check",
                    "kind": serde_json::to_value(w.kind).unwrap(),
                    "level": w.level,
                    "valid": valid,
                }));
            } else {
                println!(
                    "witness (level {}): {}",
                    w.level,
                    if valid { "valid" } else { "INVALID" }
                );
            }
            Ok(if valid { 0 } else { 1 })
        }
        (None, Some(path)) => {
            let spec = require_space(space)?;
            let w: RisWitness = serde_json::from_str(&read(path)?)
                .map_err(|e| Error::bad_input(format!("bad sequence file: {e}")))?;
            let checked = check_ris(&w, &spec, args.strict_ratios, &ctx.opts)?;
            if json {
                let value = serde_json::to_value(&checked)
                    .map_err(|e| Error::bad_input(format!("report serialization: {e}")))?;
                print_json(&value);
            } else {
                for clause in &checked.clauses {
                    println!("{:<24} {:?}: {}", clause.id, clause.status, clause.details);
                }
                println!("overall: {:?}", checked.status);
            }
            Ok(if checked.status == ClauseStatus::Fail { 1 } else { 0 })
        }
    }
}

fn cmd_spaces_list(json: bool) -> Result<i32, Error> {
    let catalog = preset_catalog();
    if json {
        let rows: Vec<_> =
            catalog.iter().map(|(n, s)| json!({ "name": n, "summary": s })).collect();
        print_json(&json!(rows));
    } else {
        for (name, summary) in catalog {
            println!("{name:<28} {summary}");
        }
    }
    Ok(0)
}

fn cmd_spaces_show(
    name: Option<String>,
    space: Option<SpaceSpec>,
    upto: u32,
    json: bool,
) -> Result<i32, Error> {
    let spec = match (name, space) {
        (Some(_), Some(_)) => {
            return Err(Error::bad_input("give a preset name or --space/--config, not both"))
        }
        (Some(n), None) => preset(&n)?,
        (None, Some(s)) => s,
        (None, None) => return Err(Error::bad_input("name a preset or pass --space/--config")),
    };
    let top = match spec.max_level() {
        Some(m) => m.min(upto),
        None => upto,
    };
    let mut levels = Vec::new();
    for k in spec.min_level()..=top {
        if let Some(level) = spec.level(k) {
            levels.push((k, level, spec.mode(k)));
        }
    }
    let mut notes = spec.check_regular(top);
    if let LevelRule::LogCardinality { bits } = &spec.levels {
        notes.push(format!("weights are upward dyadic approximations with {bits} bits"));
    }
    if json {
        let rows: Vec<_> = levels
            .iter()
            .map(|(k, level, mode)| {
                json!({
                    "level": k,
                    "family": level.family.to_string(),
                    "weight": rendered_json(&level.theta),
                    "mode": match mode {
                        SplitMode::Admissible => "admissible",
                        SplitMode::Allowable => "allowable",
                    },
                })
            })
            .collect();
        print_json(&json!({
            "command": "spaces show",
            "name": spec.name,
            "variant": spec.variant.to_string(),
            "levels": rows,
            "notes": notes,
            "config": spec.to_config(),
        }));
    } else {
        println!("name: {}", spec.name);
        println!("variant: {}", spec.variant);
        for (k, level, mode) in &levels {
            println!(
                "level {k}: family {}, weight {}, splits {}",
                level.family,
                Rendered::rational(&level.theta),
                match mode {
                    SplitMode::Admissible => "admissible",
                    SplitMode::Allowable => "allowable",
                }
            );
        }
        for note in &notes {
            println!("note: {note}");
        }
        println!("config:");
        for line in spec.to_config().lines() {
            println!("  {line}");
        }
    }
    Ok(0)
}
