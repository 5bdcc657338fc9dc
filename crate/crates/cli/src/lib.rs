//! Library surface of the command-line driver: configuration schema,
//! dataset and result-bundle formats, and the error/exit-code mapping.
//! The binary in `main.rs` is a thin dispatcher over these pieces.

pub mod bundle;
pub mod config;

#[derive(Debug)]
pub struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    pub fn config(message: String) -> Self {
        Self { message, code: 2 }
    }

    pub fn numeric(message: String) -> Self {
        Self { message, code: 3 }
    }

    pub fn message(&self) -> &str {
        &self.message
    }

    pub fn code(&self) -> u8 {
        self.code
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}
