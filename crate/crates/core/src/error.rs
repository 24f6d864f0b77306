use thiserror::Error;

use crate::relation::FrameId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mixture is invalid: {0}")]
    InvalidMixture(String),

    #[error("score grid is invalid: {0}")]
    InvalidGrid(String),

    #[error("quantization produced no mass on the grid")]
    EmptySupport,

    #[error("frame {0} appears more than once")]
    DuplicateFrame(FrameId),

    #[error("distribution for frame {0} was quantized on a different grid")]
    GridMismatch(FrameId),

    #[error("unknown frame {0}")]
    UnknownFrame(FrameId),

    #[error("frame {0} is already certain")]
    AlreadyCertain(FrameId),

    #[error("frame {0} is not uncertain")]
    NotUncertain(FrameId),

    #[error("need {needed} certain tuples, relation has {available}")]
    InsufficientCertain { needed: usize, available: usize },

    #[error("query asks for top {k} but relation only has {available} frames")]
    InsufficientFrames { k: usize, available: usize },

    #[error("possible-world enumeration would visit {0} worlds (limit 1000000)")]
    TooManyWorlds(u128),

    #[error("window {0} has a retained frame without a mixture")]
    MissingRetainedFrame(u64),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the experiment configuration rather than the data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_) | Error::InvalidGrid(_) | Error::InsufficientFrames { .. }
        )
    }
}
