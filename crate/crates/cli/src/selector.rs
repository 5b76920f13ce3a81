use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use fdp_core::herald::heralded_state;
use fdp_core::{fock_state, DensityMatrix};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Which unknown state to acquire.
///
/// * `herald:K` heralded state conditioned on K trigger clicks
/// * `vacuum`
/// * `fock:N` ideal number state
/// * `file:PATH` density matrix in the JSON format written by `fit`
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateSelector {
    Herald(usize),
    Vacuum,
    Fock(usize),
    File(PathBuf),
}

impl FromStr for StateSelector {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let bad = || CliError::Validation(format!("unknown state selector '{s}' (expected herald:K, vacuum, fock:N or file:PATH)"));
        let number = |v: &str| v.parse::<usize>().map_err(|_| bad());
        match s.split_once(':') {
            None if s == "vacuum" => Ok(Self::Vacuum),
            Some(("herald", k)) => Ok(Self::Herald(number(k)?)),
            Some(("fock", n)) => Ok(Self::Fock(number(n)?)),
            Some(("file", p)) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for StateSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Herald(k) => write!(f, "herald:{k}"),
            Self::Vacuum => write!(f, "vacuum"),
            Self::Fock(n) => write!(f, "fock:{n}"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl StateSelector {
    /// File-name-safe tag.
    pub fn tag(&self) -> String {
        match self {
            Self::Herald(k) => format!("herald-{k}"),
            Self::Vacuum => "vacuum".into(),
            Self::Fock(n) => format!("fock-{n}"),
            Self::File(p) => {
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let clean: String = stem.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
                format!("file-{clean}")
            }
        }
    }

    /// State entering the detector, before any detection loss, at the working cutoff.
    pub fn prepared_state(&self, config: &ExperimentConfig) -> CliResult<DensityMatrix> {
        let rho = match self {
            Self::Herald(k) => heralded_state(&config.tmsv, &config.smd, *k)?,
            Self::Vacuum => fock_state(0, config.dim)?,
            Self::Fock(n) => fock_state(*n, config.dim)?,
            Self::File(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                DensityMatrix::from_json(&text)?
            }
        };
        if rho.dim() > config.dim {
            return Err(CliError::Validation(format!(
                "state '{self}' has cutoff {} above the working cutoff {}",
                rho.dim(),
                config.dim
            )));
        }
        Ok(rho.padded(config.dim)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in ["herald:1", "vacuum", "fock:3", "file:some/state.json"] {
            assert_eq!(s.parse::<StateSelector>().unwrap().to_string(), s);
        }
        for s in ["herald", "herald:x", "squeezed", "file:", "fock:-1"] {
            assert!(s.parse::<StateSelector>().is_err(), "{s}");
        }
        assert_eq!("file:a/b c.json".parse::<StateSelector>().unwrap().tag(), "file-b_c");
    }
}
