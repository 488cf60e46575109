use std::fmt;
use std::process::ExitCode;

use concept_parse::Error;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct Fail {
    pub code: u8,
    pub message: String,
}

pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const COMPAT: u8 = 4;

impl Fail {
    pub fn config(message: impl Into<String>) -> Self {
        Fail {
            code: CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Fail {
            code: DATA,
            message: message.into(),
        }
    }

    pub fn compat(message: impl Into<String>) -> Self {
        Fail {
            code: COMPAT,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_)
            | Error::MetricMismatch(_)
            | Error::NeedTwoDomains(_)
            | Error::EmptyUtterance
            | Error::UnknownTagFormat(_)
            | Error::EmptyDescription => CONFIG,
            Error::Incompatible(_) => COMPAT,
            Error::Io { .. }
            | Error::DomainNotFound(_)
            | Error::InvalidData(_)
            | Error::Json(_)
            | Error::Checkpoint(_)
            | Error::MalformedAnnotation(_)
            | Error::MalformedTarget { .. }
            | Error::PointerRange { .. }
            | Error::SpanAlignment { .. }
            | Error::LengthExceeded { .. }
            | Error::EmptyEvalSet
            | Error::EmptyFewShot => DATA,
            // internal invariants; not part of the contract
            Error::Shape { .. }
            | Error::NotScalar(_)
            | Error::NonFinite(_)
            | Error::Support { .. }
            | Error::UnknownConcept(_) => 1,
        };
        Fail {
            code,
            message: e.to_string(),
        }
    }
}
