use std::path::PathBuf;

/// Errors produced anywhere in the planning toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A structured document could not be parsed or failed validation.
    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("unknown finger `{0}`")]
    UnknownFinger(String),

    #[error("joint configuration has {got} entries, model expects {expected}")]
    DofMismatch { expected: usize, got: usize },

    #[error("degenerate direction between `{from}` and `{to}`: fingertips are {separation:e} m apart")]
    DegenerateDirection {
        from: String,
        to: String,
        separation: f64,
    },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("GJK did not terminate after {iterations} iterations for {a} vs {b}")]
    GjkNonTermination {
        a: String,
        b: String,
        iterations: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Parses a JSON document; the message names the offending field.
    pub(crate) fn from_json<T: serde::de::DeserializeOwned>(context: &str, document: &str) -> Result<T> {
        let de = &mut serde_json::Deserializer::from_str(document);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::parse(context, inner.to_string())
            } else {
                Error::parse(context, format!("field `{path}`: {inner}"))
            }
        })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
