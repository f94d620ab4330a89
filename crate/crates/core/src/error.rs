use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("replay: {0}")]
    InvalidReplay(String),

    #[error("sessionizer: replays belong to more than one user ({0} and {1})")]
    MixedUsers(String, String),

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("model has no splits to attribute importance to")]
    Untrained,

    #[error("hierarchy: {groups} groups requested for {users} users")]
    TooManyGroups { groups: usize, users: usize },

    #[error("hierarchy: user {0} already present")]
    DuplicateUser(String),

    #[error("user {0} has no usable samples")]
    NoSamples(String),

    #[error("hierarchy: layer {layer} group {group} failed: {source}")]
    GroupFailed {
        layer: u8,
        group: usize,
        source: Box<Error>,
    },

    #[error("user {0} is unknown to the model")]
    UnknownUser(String),

    #[error("probability maps cover different user sets")]
    KeyMismatch,

    #[error("evaluator: sample from session {session} of user {user} is not in the test split")]
    SessionLeak { user: String, session: u32 },

    #[error("schema has {found} labels, model expects {expected}")]
    SchemaMismatch { expected: usize, found: usize },
}
