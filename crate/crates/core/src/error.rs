use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("sample size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("alpha = {alpha} must lie strictly below the critical exponent {alpha_bar}")]
    AlphaAboveCritical { alpha: f64, alpha_bar: f64 },

    #[error("bound `{kind}` needs the constant `{symbol}`")]
    MissingConstant { kind: &'static str, symbol: &'static str },

    #[error("kernel support spans {cells} grid cells, at least {required} required (spacing <= {max_spacing})")]
    UnderResolved { cells: usize, required: usize, max_spacing: f64 },

    #[error("normal equations are rank deficient ({0}); set ridge > 0")]
    RankDeficient(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown {what} `{name}` (known: {known})")]
    Unknown { what: &'static str, name: String, known: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }
}
