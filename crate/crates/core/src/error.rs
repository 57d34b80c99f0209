use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("corkscrew search failed: {0}")]
    CorkscrewFailure(String),
    #[error("meshing failed: {0}")]
    Meshing(String),
    #[error("ellipticity violated: {0}")]
    Ellipticity(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("iteration did not converge: {0}")]
    Iteration(String),
    #[error("missing capability: {0}")]
    Capability(String),
    #[error("coercivity lost: {0}")]
    Coercivity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(position: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            position,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 1: bad input (parse, configuration, preconditions), 2: invariant
    /// violation, 3: numerical failure (solver, mesher, iteration).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 2,
            Error::Solver(_)
            | Error::Iteration(_)
            | Error::Coercivity(_)
            | Error::Meshing(_)
            | Error::CorkscrewFailure(_) => 3,
            _ => 1,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let position = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            position,
            message: e.to_string(),
        }
    }
}
