use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A config value failed validation; `field` is the dotted key.
    #[error("{field}: {message}")]
    Field { field: String, message: String },

    #[error("cannot read {}: {source}", .path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {}: {source}", .path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config does not parse: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("bad input file: {0}")]
    Input(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] nonlocal_ma::Error),
}

impl CliError {
    pub fn field(field: &str, message: impl std::fmt::Display) -> Self {
        Self::Field {
            field: field.into(),
            message: message.to_string(),
        }
    }

    /// 1 for anything the user can fix in the config or inputs, 2 for
    /// failures raised while the experiment itself runs.
    pub fn exit_code(&self) -> i32 {
        use nonlocal_ma::Error as E;
        match self {
            Self::Core(E::Config(_) | E::Spec(_) | E::Data(_) | E::CatalogViolation { .. }) => 1,
            Self::Core(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
