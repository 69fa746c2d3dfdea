use thiserror::Error;

pub type Result<T, E = ZhuyiError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ZhuyiError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),

    #[error("t_n = {t_n} precedes reaction time t_r = {t_r}")]
    BeforeReaction { t_n: f64, t_r: f64 },

    #[error("cannot aggregate an empty set of trajectory estimates")]
    EmptyAggregate,

    #[error("trace schema violation at tick {tick}: {reason}")]
    Schema { tick: usize, reason: String },

    #[error("trace header invalid: {0}")]
    Header(String),

    #[error("non-monotone time at tick index {0}")]
    NonMonotoneTime(usize),

    #[error("negative speed at tick {tick} for {who}")]
    NegativeSpeed { tick: usize, who: String },

    #[error("unknown actor `{0}`")]
    UnknownActor(String),

    #[error("camera sets differ between required and operating rates: {0}")]
    KeyMismatch(String),

    #[error("scenario parameter `{name}` out of range: {reason}")]
    ScenarioParam { name: String, reason: String },

    #[error("unknown scenario family `{0}`")]
    UnknownFamily(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
