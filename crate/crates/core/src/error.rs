use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("unknown bus {0}")]
    UnknownBus(u32),
    #[error("unknown machine '{0}'")]
    UnknownMachine(String),
    #[error("unknown feature '{0}'")]
    UnknownFeature(String),
    #[error("branch {from}-{to} has zero series reactance")]
    DegenerateBranch { from: u32, to: u32 },
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dispatch infeasible: {0}")]
    Infeasible(String),
    #[error("operating point did not converge")]
    NotConverged,
    #[error("machine '{0}' is offline")]
    MachineOffline(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{features} features exceed the exact Shapley limit of {limit}; use kernel SHAP")]
    TooManyFeatures { features: usize, limit: usize },
    #[error("coalition budget {budget} is too small, at least {required} coalitions are required")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}
