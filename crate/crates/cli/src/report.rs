//! Experiment reports: echoed inputs, exact values with decimal renderings,
//! per-check outcomes, and a byte-stable JSON form.
//!
//! Stability rules: maps are ordered, cases are sorted by id before emission,
//! and the only counters are deterministic subproblem counts, so the same
//! seed always serializes to the same bytes.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use serde::Serialize;
use tslab_core::rational::{decimal_6sig, format_rational};

#[derive(Clone, Debug, Serialize)]
pub struct Rendered {
    pub exact: String,
    pub decimal: String,
}

impl Rendered {
    pub fn rational(r: &BigRational) -> Self {
        Rendered { exact: format_rational(r), decimal: decimal_6sig(r) }
    }

    pub fn integer(n: u64) -> Self {
        Rendered { exact: n.to_string(), decimal: n.to_string() }
    }
}

impl fmt::Display for Rendered {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exact == self.decimal {
            write!(f, "{}", self.exact)
        } else {
            write!(f, "{} (~{})", self.exact, self.decimal)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Indeterminate,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "FAIL",
            Outcome::Indeterminate => "indeterminate",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// How `computed` is compared against `claimed`, e.g. `<=`.
    pub relation: String,
    pub computed: Rendered,
    pub claimed: Rendered,
    pub outcome: Outcome,
    /// Present when the outcome needs context (hypothesis gaps, budgets).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckReport {
    /// `computed <= claimed`, pass/fail.
    pub fn le(name: &str, computed: &BigRational, claimed: &BigRational) -> Self {
        CheckReport {
            name: name.into(),
            relation: "<=".into(),
            computed: Rendered::rational(computed),
            claimed: Rendered::rational(claimed),
            outcome: if computed <= claimed { Outcome::Pass } else { Outcome::Fail },
            note: None,
        }
    }

    /// `computed < claimed`, pass/fail.
    pub fn lt(name: &str, computed: &BigRational, claimed: &BigRational) -> Self {
        CheckReport {
            name: name.into(),
            relation: "<".into(),
            computed: Rendered::rational(computed),
            claimed: Rendered::rational(claimed),
            outcome: if computed < claimed { Outcome::Pass } else { Outcome::Fail },
            note: None,
        }
    }

    /// `computed >= claimed`, pass/fail.
    pub fn ge(name: &str, computed: &BigRational, claimed: &BigRational) -> Self {
        CheckReport {
            name: name.into(),
            relation: ">=".into(),
            computed: Rendered::rational(computed),
            claimed: Rendered::rational(claimed),
            outcome: if computed >= claimed { Outcome::Pass } else { Outcome::Fail },
            note: None,
        }
    }

    /// `computed > claimed`, pass/fail.
    pub fn gt(name: &str, computed: &BigRational, claimed: &BigRational) -> Self {
        CheckReport {
            name: name.into(),
            relation: ">".into(),
            computed: Rendered::rational(computed),
            claimed: Rendered::rational(claimed),
            outcome: if computed > claimed { Outcome::Pass } else { Outcome::Fail },
            note: None,
        }
    }

    /// Exact count comparison, pass/fail.
    pub fn count(name: &str, computed: u64, claimed: u64) -> Self {
        CheckReport {
            name: name.into(),
            relation: "==".into(),
            computed: Rendered::integer(computed),
            claimed: Rendered::integer(claimed),
            outcome: if computed == claimed { Outcome::Pass } else { Outcome::Fail },
            note: None,
        }
    }

    /// Exact value comparison, pass/fail.
    pub fn eq_rat(name: &str, computed: &BigRational, claimed: &BigRational) -> Self {
        CheckReport {
            name: name.into(),
            relation: "==".into(),
            computed: Rendered::rational(computed),
            claimed: Rendered::rational(claimed),
            outcome: if computed == claimed { Outcome::Pass } else { Outcome::Fail },
            note: None,
        }
    }

    /// Non-numeric check; both sides are printed verbatim.
    pub fn label(name: &str, computed: &str, claimed: &str, outcome: Outcome) -> Self {
        let wrap = |s: &str| Rendered { exact: s.to_string(), decimal: s.to_string() };
        CheckReport {
            name: name.into(),
            relation: "==".into(),
            computed: wrap(computed),
            claimed: wrap(claimed),
            outcome,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Downgrades a failure to indeterminate, recording why the claim is not
    /// asserted on this instance.
    pub fn hypothesis_gap(mut self, note: impl Into<String>) -> Self {
        if self.outcome == Outcome::Fail {
            self.outcome = Outcome::Indeterminate;
        }
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    pub id: String,
    /// Echo of everything needed to reproduce the case.
    pub input: BTreeMap<String, String>,
    pub values: BTreeMap<String, Rendered>,
    pub checks: Vec<CheckReport>,
    pub subproblems: u64,
}

impl CaseReport {
    pub fn new(id: impl Into<String>) -> Self {
        CaseReport {
            id: id.into(),
            input: BTreeMap::new(),
            values: BTreeMap::new(),
            checks: Vec::new(),
            subproblems: 0,
        }
    }

    pub fn input(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.input.insert(key.into(), value.to_string());
        self
    }

    pub fn value(&mut self, key: &str, value: &BigRational) -> &mut Self {
        self.values.insert(key.into(), Rendered::rational(value));
        self
    }

    pub fn value_count(&mut self, key: &str, value: u64) -> &mut Self {
        self.values.insert(key.into(), Rendered::integer(value));
        self
    }

    pub fn check(&mut self, check: CheckReport) -> &mut Self {
        self.checks.push(check);
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<String>,
    pub seed: u64,
    pub budget: u64,
    /// Desk-scale stand-in: failed bound checks do not fail the run.
    pub toy: bool,
    pub notes: Vec<String>,
    pub cases: Vec<CaseReport>,
    pub passed: usize,
    pub failed: usize,
    pub indeterminate: usize,
    pub subproblems_total: u64,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64, budget: u64) -> Self {
        ExperimentReport {
            experiment: experiment.into(),
            space: None,
            seed,
            budget,
            toy: false,
            notes: Vec::new(),
            cases: Vec::new(),
            passed: 0,
            failed: 0,
            indeterminate: 0,
            subproblems_total: 0,
        }
    }

    pub fn space(&mut self, config_echo: &str) -> &mut Self {
        self.space = Some(config_echo.trim_end().to_string());
        self
    }

    pub fn toy(&mut self, note: impl Into<String>) -> &mut Self {
        self.toy = true;
        self.notes.push(note.into());
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn push(&mut self, case: CaseReport) {
        self.cases.push(case);
    }

    /// Sorts cases and settles the tallies. Call once, after the last case.
    pub fn finish(&mut self) {
        self.cases.sort_by(|a, b| a.id.cmp(&b.id));
        self.passed = 0;
        self.failed = 0;
        self.indeterminate = 0;
        self.subproblems_total = 0;
        for case in &self.cases {
            self.subproblems_total = self.subproblems_total.saturating_add(case.subproblems);
            for check in &case.checks {
                match check.outcome {
                    Outcome::Pass => self.passed += 1,
                    Outcome::Fail => self.failed += 1,
                    Outcome::Indeterminate => self.indeterminate += 1,
                }
            }
        }
    }

    /// 0 all pass, 1 a bound failed outside toy mode.
    pub fn exit_code(&self) -> i32 {
        if self.failed > 0 && !self.toy {
            1
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("experiment: {}\n", self.experiment));
        if let Some(space) = &self.space {
            for line in space.lines() {
                out.push_str(&format!("  {line}\n"));
            }
        }
        out.push_str(&format!("seed: {}  budget: {}\n", self.seed, self.budget));
        if self.toy {
            out.push_str("TOY MODE: bound failures below are reported, not asserted.\n");
        }
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out.push_str(&format!(
            "{:<28} {:<24} {:>20} {:>4} {:>20}  {}\n",
            "case", "check", "computed", "rel", "claimed", "outcome"
        ));
        for case in &self.cases {
            for check in &case.checks {
                out.push_str(&format!(
                    "{:<28} {:<24} {:>20} {:>4} {:>20}  {}\n",
                    case.id,
                    check.name,
                    check.computed.to_string(),
                    check.relation,
                    check.claimed.to_string(),
                    check.outcome,
                ));
                if let Some(note) = &check.note {
                    out.push_str(&format!("{:<28}   {note}\n", ""));
                }
            }
        }
        out.push_str(&format!(
            "passed {}  failed {}  indeterminate {}  subproblems {}\n",
            self.passed, self.failed, self.indeterminate, self.subproblems_total
        ));
        out
    }
}
