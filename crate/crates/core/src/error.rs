use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frequency {freq_thz} THz outside band [{min_thz}, {max_thz}] THz")]
    FrequencyOutOfBand { freq_thz: f64, min_thz: f64, max_thz: f64 },

    #[error("invalid link spec: {0}")]
    InvalidLink(String),

    #[error("invalid channel plan: {0}")]
    InvalidPlan(String),

    #[error("invalid amplifier configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid reconfiguration order: {0}")]
    InvalidOrder(String),

    #[error("step index {k} outside 0..={max}")]
    InvalidStepIndex { k: usize, max: usize },

    #[error("invalid crossover cuts {cut1}..{cut2} for length {len}")]
    InvalidCuts { cut1: usize, cut2: usize, len: usize },

    #[error("exhaustive search refused for {n_steps} steps (limit {limit})")]
    SearchTooLarge { n_steps: usize, limit: usize },

    #[error("invalid parameter `{field}`: {msg}")]
    InvalidParam { field: &'static str, msg: String },

    #[error("non-finite training loss at epoch {epoch} (loss = {loss})")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("model checkpoint: {0}")]
    Checkpoint(String),

    #[error("scenario field `{field}`: {msg}")]
    Scenario { field: String, msg: String },

    #[error("fitness evaluation failed: {0}")]
    Fitness(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParam { field, msg: msg.into() }
    }
}

/// Attaches a pipeline stage name to errors.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
