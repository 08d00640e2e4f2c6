use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("vertex {0} is not in the tree")]
    UnknownVertex(usize),

    #[error("edge {0} is not in the tree (edges are named by their deeper endpoint)")]
    UnknownEdge(usize),

    #[error("start point ({vertex}, {time}) lies on a link time")]
    DegenerateStart { vertex: usize, time: f64 },

    #[error("series evaluation at z = {z} has tail bound {bound:e}, above tolerance")]
    Precision { z: f64, bound: f64 },

    #[error("no transition found in beta range ({lo}, {hi})")]
    NoTransition { lo: f64, hi: f64 },

    #[error("survival estimate is not monotone in beta: {0}")]
    NonMonotone(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
