//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("trajectory must contain at least one step")]
    EmptyTrajectory,

    #[error("total_return {stored} does not match sum of step rewards {computed}")]
    ReturnMismatch { stored: f64, computed: f64 },

    #[error("action_id {action_id} out of range for {n_actions} admissible actions")]
    InvalidAction { action_id: usize, n_actions: usize },

    #[error("behavior log-probability {0} is positive")]
    PositiveLogProb(f64),

    #[error("trajectories in a group must share one task_id (found {0} and {1})")]
    MixedTaskIds(String, String),

    #[error("group carries a non-binary return {0}; success-rate machinery requires returns in {{0,1}}")]
    NonBinaryReward(f64),

    #[error("group of size {0} is too small; need at least 2 trajectories")]
    GroupTooSmall(usize),

    #[error("success rate {0} is degenerate; closed forms need 0 < p < 1")]
    DegenerateRate(f64),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("softmax over an empty candidate set")]
    EmptyCandidateSet,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("logit lists have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("stale snapshot: {0}")]
    StaleSnapshot(String),

    #[error("no admissible actions at state")]
    NoAdmissibleActions,

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("invalid environment config: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}; training diverged")]
    NumericalDivergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
