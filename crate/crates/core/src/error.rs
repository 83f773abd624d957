use std::fmt;

use serde::Serialize;

/// Which degeneracy of a frequency triple prevented the frame reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    ZeroXi,
    ZeroDelta,
    ZeroEta,
    /// δ parallel to η, so sinθ(δ,η) = 0.
    Parallel,
    /// ξ lies in span(δ,η), so b₁ = 0.
    XiInPlane,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Degeneracy::ZeroXi => "xi is the zero vector",
            Degeneracy::ZeroDelta => "delta is the zero vector",
            Degeneracy::ZeroEta => "eta is the zero vector",
            Degeneracy::Parallel => "delta is parallel to eta",
            Degeneracy::XiInPlane => "xi lies in span(delta, eta)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("degenerate frame: {0}")]
    DegenerateFrame(Degeneracy),
    #[error("frequency norm {norm} exceeds the quadrature oscillation budget {limit}")]
    BudgetExceeded { norm: f64, limit: f64 },
    #[error("integrand returned a non-finite value at sample {index}")]
    NonFiniteSample { index: usize },
    #[error("estimate underpowered: relative standard error {rel_stderr:.3} exceeds {limit}")]
    Underpowered { rel_stderr: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
