use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input; `locus` names the line, record or voxel.
    #[error("parse error at {locus}: {message}")]
    Parse { locus: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("field undefined at ({x:.4}, {y:.4}, {z:.4})")]
    FieldDomain { x: f64, y: f64, z: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{stage} failed{}: {source}", layer.map(|l| format!(" on layer {l}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        layer: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(locus: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            locus: locus.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str, layer: Option<usize>) -> Self {
        Error::Stage {
            stage,
            layer,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
