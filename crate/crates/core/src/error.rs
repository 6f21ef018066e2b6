use thiserror::Error;

/// Errors surfaced by the library. CLI exit codes map `ResourceLimit` to 2 and
/// every other variant to 3; bound violations are reported, not errored.
#[derive(Debug, Error)]
pub enum Error {
    /// A configured search or enumeration budget was exhausted before the
    /// computation finished. The result would not be exact, so nothing is
    /// returned.
    #[error("resource limit exceeded: {what} (budget {budget})")]
    ResourceLimit { what: String, budget: u64 },

    /// Input failed validation (parse errors, malformed witnesses, violated
    /// preconditions).
    #[error("bad input: {0}")]
    BadInput(String),

    /// A construction ran out of raw material (finite index stream exhausted,
    /// no admissible anchor available, …).
    #[error("construction infeasible: {0}")]
    Infeasible(String),

    /// An iterative construction hit its generation cap without reaching its
    /// target.
    #[error("generation cap {cap} exceeded: {what}")]
    GenerationCap { what: String, cap: u32 },

    /// A parameter schedule outgrew the big-integer budget.
    #[error("parameter overflow at depth {depth}: {what}")]
    Overflow { what: String, depth: usize },
}

impl Error {
    pub fn bad_input(msg: impl Into<String>) -> Self {
        Error::BadInput(msg.into())
    }

    pub fn resource(what: impl Into<String>, budget: u64) -> Self {
        Error::ResourceLimit { what: what.into(), budget }
    }
}
