use dealias_core::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_REGIME: i32 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: EXIT_IO, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::Config(_) | Error::NotApplicable(_) => EXIT_CONFIG,
            Error::Io(_) | Error::Format(_) | Error::Json(_) => EXIT_IO,
            Error::Numeric { .. } | Error::Diverged { .. } | Error::UndefinedMetric(_) => EXIT_NUMERIC,
            Error::OutOfRegime(_) => EXIT_REGIME,
        };
        Failure { code, message: e.to_string() }
    }
}
