use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular scattering system (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },

    #[error("at wavelength {wavelength_nm} nm: {source}")]
    AtWavelength {
        wavelength_nm: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("peak not found: maximum {peak:.3e} is below 10x background {background:.3e}")]
    PeakNotFound { peak: f64, background: f64 },

    #[error("no significant peak: height {height:.3e} < 3x background deviation {deviation:.3e}")]
    NoSignificantPeak { height: f64, deviation: f64 },

    #[error("insufficient background samples: {available} < {required}")]
    InsufficientBackground { available: usize, required: usize },

    #[error("out of range: {0}")]
    OutOfRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
