//! Library side of the `riskgrad` binary: configuration, run artifacts,
//! and the implementation of each subcommand.

pub mod checkpoint;
pub mod config;
pub mod csvlog;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod plot;
pub mod study;
pub mod sweep;
pub mod train;

pub use error::{CliError, Result};

use std::path::{Path, PathBuf};

/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "RISKGRAD_OUT";

/// Output root: an explicit flag wins, then [`OUT_ENV`], then `fallback`.
pub fn output_root(flag: Option<&Path>, env: Option<&str>, fallback: &Path) -> PathBuf {
    match (flag, env) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(e)) if !e.is_empty() => PathBuf::from(e),
        _ => fallback.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_root_precedence() {
        let fb = Path::new("runs");
        assert_eq!(output_root(Some(Path::new("a")), Some("b"), fb), PathBuf::from("a"));
        assert_eq!(output_root(None, Some("b"), fb), PathBuf::from("b"));
        assert_eq!(output_root(None, Some(""), fb), PathBuf::from("runs"));
        assert_eq!(output_root(None, None, fb), PathBuf::from("runs"));
    }
}
