//! Flat `key = value` run configuration.

use std::path::PathBuf;

use fhd_core::{ElementPair, MaterialParams};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError::Line {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Manufactured case; `None` picks the one matching `pair`.
    pub study: Option<String>,
    pub pair: ElementPair,
    pub levels: Vec<usize>,
    pub params: MaterialParams,
    pub picard_iters: usize,
    pub oseen_iters: usize,
    pub quad_bump: usize,
    pub seed: u64,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            study: None,
            pair: ElementPair::L0,
            levels: vec![4, 8, 16, 32, 64, 128],
            params: MaterialParams::default(),
            picard_iters: 2,
            oseen_iters: 2,
            quad_bump: 2,
            seed: 42,
            out_csv: None,
            out_json: None,
        }
    }
}

pub const STUDIES: [&str; 2] = ["2d-l0", "2d-l1"];

fn number<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::at(line, format!("malformed value for {key}: {value:?}")))
}

fn parse_levels(line: usize, value: &str) -> Result<Vec<usize>, ConfigError> {
    let levels = value
        .split(',')
        .map(|s| number::<usize>(line, "levels", s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if levels.is_empty() || levels.contains(&0) {
        return Err(ConfigError::at(line, "levels must be positive integers"));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConfigError::at(line, "levels must be ascending"));
    }
    Ok(levels)
}

/// Parses the configuration text; missing keys keep their defaults.
///
/// `gamma` and `chi0` are tied by `chi0 = gamma Ms / 3`: give either one, or
/// both if they agree.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let (mut mu0, mut ms, mut rho, mut eta) = (1.0, 1.0, 1.0, 1.0);
    let mut gamma: Option<(usize, f64)> = None;
    let mut chi0: Option<(usize, f64)> = None;
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::at(line, format!("expected `key = value`, got {content:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::at(line, format!("duplicate key {key}")));
        }
        match key {
            "study" => {
                if !STUDIES.contains(&value) {
                    return Err(ConfigError::at(
                        line,
                        format!("unknown study {value:?} (expected one of {})", STUDIES.join(", ")),
                    ));
                }
                cfg.study = Some(value.to_string());
            }
            "pair" => {
                cfg.pair = value.parse().map_err(|_| ConfigError::at(line, format!("malformed value for pair: {value:?}")))?
            }
            "levels" => cfg.levels = parse_levels(line, value)?,
            "mu0" => mu0 = number(line, key, value)?,
            "Ms" => ms = number(line, key, value)?,
            "gamma" => gamma = Some((line, number(line, key, value)?)),
            "chi0" => chi0 = Some((line, number(line, key, value)?)),
            "rho" => rho = number(line, key, value)?,
            "eta" => eta = number(line, key, value)?,
            "picard_iters" => cfg.picard_iters = number(line, key, value)?,
            "oseen_iters" => cfg.oseen_iters = number(line, key, value)?,
            "quad_bump" => cfg.quad_bump = number(line, key, value)?,
            "seed" => cfg.seed = number(line, key, value)?,
            "out_csv" => cfg.out_csv = Some(PathBuf::from(value)),
            "out_json" => cfg.out_json = Some(PathBuf::from(value)),
            _ => return Err(ConfigError::at(line, format!("unknown key {key}"))),
        }
    }
    let params = match (gamma, chi0) {
        (Some((_, g)), None) => MaterialParams::new(mu0, ms, g, rho, eta),
        (None, Some((_, c))) => MaterialParams::from_susceptibility(mu0, ms, c, rho, eta),
        (None, None) => MaterialParams::new(mu0, ms, 1.0, rho, eta),
        (Some((_, g)), Some((line, c))) => {
            let p = MaterialParams {
                mu0,
                ms,
                chi0: c,
                gamma: g,
                rho,
                eta,
            };
            p.validate()
                .map(|_| p)
                .map_err(|e| fhd_core::FhdError::Config(format!("line {line}: {e}")))
        }
    };
    cfg.params = params.map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if cfg.picard_iters == 0 || cfg.oseen_iters == 0 {
        return Err(ConfigError::Invalid("picard_iters and oseen_iters must be at least 1".into()));
    }
    Ok(cfg)
}
