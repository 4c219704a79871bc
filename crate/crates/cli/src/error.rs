use std::fmt;

use serde_json::json;

use crate::config::ConfigError;

/// Everything that ends a run early, with its exit code.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(bvmfg::Error),
    NotConverged {
        stage: String,
        iterations: usize,
        residual: f64,
    },
    Verification(Vec<crate::manifest::Mismatch>),
    Other(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::NotConverged {
                stage,
                iterations,
                residual,
            } => write!(f, "{stage} did not converge: residual {residual:e} after {iterations} iterations"),
            CliError::Verification(m) => write!(f, "{} output file(s) do not match the manifest", m.len()),
            CliError::Other(msg) => f.write_str(msg),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<bvmfg::Error> for CliError {
    fn from(e: bvmfg::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 2 configuration, 3 non-convergence, 4 CFL violation, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NotConverged { .. } => 3,
            CliError::Core(bvmfg::Error::Cfl { .. }) => 4,
            CliError::Core(bvmfg::Error::InvalidModel(_) | bvmfg::Error::UnknownPreset(_)) => 2,
            _ => 1,
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        let kind = match self {
            CliError::Config(e) => {
                v["line"] = json!(e.line);
                v["key"] = json!(e.key);
                "config"
            }
            CliError::NotConverged { stage, iterations, residual } => {
                v["stage"] = json!(stage);
                v["iterations"] = json!(iterations);
                v["residual"] = json!(residual);
                "non_convergence"
            }
            CliError::Core(bvmfg::Error::Cfl { stage, ratio, suggested_nt }) => {
                v["stage"] = json!(stage);
                v["ratio"] = json!(ratio);
                v["suggested_nt"] = json!(suggested_nt);
                "cfl"
            }
            CliError::Core(bvmfg::Error::Io(_)) => "io",
            CliError::Core(_) => "solver",
            CliError::Verification(m) => {
                v["mismatched"] = json!(m);
                "verification"
            }
            CliError::Other(_) => "internal",
        };
        v["error"] = json!(kind);
        v
    }
}
