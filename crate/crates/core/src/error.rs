use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the effective domain of a mechanism.
    #[error("domain error in {what}: real part {value} outside bound {bound}")]
    Domain { what: &'static str, value: f64, bound: f64 },

    /// Exposure or Esscher parameter not in the interior of the domain.
    #[error("admissibility error: {0}")]
    Admissibility(String),

    /// A principal-branch power or other evaluation left its valid region.
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error("step size underflow at t={t} (h={h})")]
    Stiffness { t: f64, h: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("pricing error: {0}")]
    Pricing(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("factor {factor}: {source}")]
    Factor {
        factor: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("economy {currency}: {source}")]
    Economy {
        currency: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_factor(self, factor: usize) -> Self {
        match self {
            e @ Error::Factor { .. } => e,
            e => Error::Factor {
                factor,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn in_economy(self, currency: &str) -> Self {
        Error::Economy {
            currency: currency.to_string(),
            source: Box::new(self),
        }
    }

    /// True for input and data problems, false for numerical failures.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::InvalidParams(_)
            | Error::Admissibility(_)
            | Error::Data(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => true,
            Error::Factor { source, .. } | Error::Economy { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
