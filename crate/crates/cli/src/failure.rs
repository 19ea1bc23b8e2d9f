use std::fmt::Display;

use segclf_core::ErrorKind;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const COMPUTE: u8 = 3;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl Display) -> Self {
        Failure { code: USAGE, error: anyhow::anyhow!("{msg}") }
    }

    pub fn data(msg: impl Display) -> Self {
        Failure { code: DATA, error: anyhow::anyhow!("{msg}") }
    }

    pub fn compute(msg: impl Display) -> Self {
        Failure { code: COMPUTE, error: anyhow::anyhow!("{msg}") }
    }
}

impl From<segclf_core::Error> for Failure {
    fn from(e: segclf_core::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Usage => USAGE,
            ErrorKind::Data => DATA,
            ErrorKind::Compute => COMPUTE,
        };
        Failure { code, error: e.into() }
    }
}

/// Attaches context to core errors without changing their exit code.
pub trait Context<T> {
    fn context(self, what: impl Display) -> Result<T, Failure>;
}

impl<T> Context<T> for Result<T, segclf_core::Error> {
    fn context(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| {
            let f = Failure::from(e);
            Failure { code: f.code, error: f.error.context(what.to_string()) }
        })
    }
}
