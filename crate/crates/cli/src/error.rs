use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("cannot write csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot encode json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] waterfall_core::Error),
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "config",
            CliError::Csv(_) | CliError::Json(_) => "output",
            CliError::Usage(_) => "usage",
            CliError::Core(e) if e.is_user_error() => "input",
            CliError::Core(_) => "internal",
        }
    }

    /// 1 for problems with the user's input, 2 for internal faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Csv(_) | CliError::Json(_) => 2,
            CliError::Core(e) if !e.is_user_error() => 2,
            _ => 1,
        }
    }

    /// The error as one line of JSON.
    pub fn to_json_line(&self) -> String {
        let line = ErrorLine {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
                exit_code: self.exit_code(),
            },
        };
        serde_json::to_string(&line).unwrap_or_else(|_| {
            r#"{"error":{"kind":"internal","message":"unencodable error","exit_code":2}}"#
                .to_string()
        })
    }
}
