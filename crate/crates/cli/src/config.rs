//! Plain-text key=value run configuration.
//!
//! One `key = value` per line, lists comma-separated, `#` starts a comment.
//! Unset keys keep the default grid values, so an empty file is the full
//! standard sweep.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use metasim::{GridConfig, Mechanism, SizeKind};

#[derive(Debug)]
pub enum ConfigError {
    /// Unreadable file; maps to exit code 2.
    Io { path: String, source: std::io::Error },
    /// Bad content; maps to exit code 1.
    Parse { line: usize, msg: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {path}: {source}"),
            ConfigError::Parse { line, msg } => write!(f, "config line {line}: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(path: &Path) -> Result<GridConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<GridConfig, ConfigError> {
    let mut config = GridConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: line_no,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let canonical = apply(&mut config, key, value, line_no)?;
        if seen.contains(&canonical) {
            return Err(ConfigError::Parse {
                line: line_no,
                msg: format!("duplicate key `{canonical}`"),
            });
        }
        seen.push(canonical);
    }
    Ok(config)
}

/// Applies one assignment; returns the canonical key name.
fn apply(
    config: &mut GridConfig,
    key: &str,
    value: &str,
    line: usize,
) -> Result<&'static str, ConfigError> {
    match key {
        "K" => {
            config.k_values = int_list(key, value, line, 1)?;
            Ok("K")
        }
        "n" => {
            config.n_values = int_list(key, value, line, 10)?;
            Ok("n")
        }
        "theta" => {
            config.theta_values = float_list(key, value, line, |_| None)?;
            Ok("theta")
        }
        "tau2" => {
            config.tau2_values = float_list(key, value, line, |x| {
                (x < 0.0).then(|| "must be non-negative".to_string())
            })?;
            Ok("tau2")
        }
        "pC" | "pc" => {
            config.pc_values = float_list(key, value, line, |x| {
                (x <= 0.0 || x >= 1.0).then(|| "must lie strictly inside (0, 1)".to_string())
            })?;
            Ok("pC")
        }
        "sigma2" => {
            config.sigma2_values = float_list(key, value, line, |x| {
                (x < 0.0).then(|| "must be non-negative".to_string())
            })?;
            Ok("sigma2")
        }
        "mechanisms" => {
            config.mechanisms = word_list::<Mechanism>(key, value, line)?;
            Ok("mechanisms")
        }
        "size_kinds" => {
            config.size_kinds = word_list::<SizeKind>(key, value, line)?;
            Ok("size_kinds")
        }
        "M" => {
            config.reps = scalar(key, value, line)?;
            if config.reps < 1 {
                return Err(err(line, key, value, "must be at least 1"));
            }
            Ok("M")
        }
        "seed" => {
            config.master_seed = scalar(key, value, line)?;
            Ok("seed")
        }
        "tau2_plugin" => {
            config.tau2_plugin = value.parse().map_err(|m: String| err(line, key, value, &m))?;
            Ok("tau2_plugin")
        }
        "correction" => {
            config.correction = value.parse().map_err(|m: String| err(line, key, value, &m))?;
            Ok("correction")
        }
        _ => Err(ConfigError::Parse {
            line,
            msg: format!("unknown key `{key}`"),
        }),
    }
}

fn err(line: usize, key: &str, value: &str, msg: &str) -> ConfigError {
    ConfigError::Parse {
        line,
        msg: format!("{key} = {value}: {msg}"),
    }
}

fn split_list<'a>(key: &str, value: &'a str, line: usize) -> Result<Vec<&'a str>, ConfigError> {
    let items: Vec<&str> = value.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(err(line, key, value, "empty list entry"));
    }
    Ok(items)
}

fn int_list(key: &str, value: &str, line: usize, min: u32) -> Result<Vec<u32>, ConfigError> {
    split_list(key, value, line)?
        .into_iter()
        .map(|item| {
            let v: u32 = item
                .parse()
                .map_err(|_| err(line, key, value, &format!("`{item}` is not an integer")))?;
            if v < min {
                return Err(err(line, key, value, &format!("must be at least {min}")));
            }
            Ok(v)
        })
        .collect()
}

fn float_list(
    key: &str,
    value: &str,
    line: usize,
    check: impl Fn(f64) -> Option<String>,
) -> Result<Vec<f64>, ConfigError> {
    split_list(key, value, line)?
        .into_iter()
        .map(|item| {
            let v: f64 = item
                .parse()
                .map_err(|_| err(line, key, value, &format!("`{item}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(line, key, value, "must be finite"));
            }
            if let Some(msg) = check(v) {
                return Err(err(line, key, value, &msg));
            }
            Ok(v)
        })
        .collect()
}

fn word_list<T: FromStr<Err = String>>(
    key: &str,
    value: &str,
    line: usize,
) -> Result<Vec<T>, ConfigError> {
    split_list(key, value, line)?
        .into_iter()
        .map(|item| item.parse().map_err(|m: String| err(line, key, value, &m)))
        .collect()
}

fn scalar<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| err(line, key, value, "is not a valid value"))
}

/// Renders a config as parseable text; `parse_str(config_echo(c))` rebuilds
/// an equal config.
pub fn config_echo(config: &GridConfig) -> String {
    let floats = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
    let ints = |xs: &[u32]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
    format!(
        "K = {}\nn = {}\ntheta = {}\ntau2 = {}\npC = {}\nsigma2 = {}\n\
         mechanisms = {}\nsize_kinds = {}\nM = {}\nseed = {}\n\
         tau2_plugin = {}\ncorrection = {}\n",
        ints(&config.k_values),
        ints(&config.n_values),
        floats(&config.theta_values),
        floats(&config.tau2_values),
        floats(&config.pc_values),
        floats(&config.sigma2_values),
        config.mechanisms.iter().map(|m| m.label()).collect::<Vec<_>>().join(", "),
        config.size_kinds.iter().map(|k| k.label()).collect::<Vec<_>>().join(", "),
        config.reps,
        config.master_seed,
        config.tau2_plugin.label(),
        config.correction.label(),
    )
}

/// Manifest paired with every results CSV: comment headers plus the config
/// echo, itself a valid config file that reproduces the run.
pub fn manifest_text(config: &GridConfig, version: &str, started: u64, finished: u64) -> String {
    format!(
        "# metasim run manifest\n# version = {version}\n# started_epoch_s = {started}\n\
         # finished_epoch_s = {finished}\n{}",
        config_echo(config)
    )
}
