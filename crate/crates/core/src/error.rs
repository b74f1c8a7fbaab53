use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate projection: gaussian {index} sits {depth:.3e} m from the antenna")]
    DegenerateProjection { index: usize, depth: f64 },

    #[error("poisoned render: gaussian {index} has a non-finite parameter")]
    PoisonedRender { index: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {origin}: {source}")]
    Json {
        origin: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("image encoding failed: {0}")]
    Image(String),
}

impl Error {
    /// Configuration problems map to exit code 2, numeric ones to 3.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::PoisonedRender { .. } | Error::DegenerateProjection { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(origin: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            origin: origin.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
