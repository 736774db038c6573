use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("contract failure: {0}")]
    Contract(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    kind: &'a str,
    exit_code: i32,
    message: String,
}

impl CliError {
    pub fn validation(e: bondloc_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }

    /// Core errors raised while computing.
    pub fn numerical(e: bondloc_core::Error) -> Self {
        use bondloc_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::Unsupported(_) | E::Domain(_) | E::Parse(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Contract(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) | CliError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Contract(_) => "contract",
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorJson {
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("error JSON serializes")
    }
}
