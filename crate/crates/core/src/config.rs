// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! TOML run configuration.
//!
//! ```toml
//! scenario = "oh_1e"          # oh_1e | oh_2e | phonon_grid | hbond
//!
//! [coupling]                  # omitted keys take the scenario's defaults
//! alpha = 0.8                 # beta defaults to sqrt(1 - alpha^2)
//! g_mol = 0.01
//!
//! [run]
//! horizon = 20000.0
//! samples = 2001
//! solver = "lindblad"
//!
//! [[channels]]
//! kind = "photon-escape"      # gamma defaults to 0.1 * g_mol
//! ```
//!
//! Keys missing from the file fall back to [`ScenarioConfig::new`] for the
//! chosen scenario. Unknown keys are errors.

use std::ops::Range;

use thiserror::Error;
use toml::{Table, Value};

use crate::hilbert::HilbertError;
use crate::models::{ModelError, ScenarioConfig, ScenarioId};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {message}", location(*line, *column))]
    Parse { line: usize, column: usize, message: String },
    #[error("{}invalid `{field}`: {reason}", prefix(*at))]
    Invalid { field: String, reason: String, at: Option<(usize, usize)> },
    #[error("space exceeds the dimension cap of {cap} states")]
    TooLarge { cap: usize },
    #[error(transparent)]
    Model(ModelError),
}

fn location(line: usize, column: usize) -> String {
    format!("line {line}, column {column}")
}

fn prefix(at: Option<(usize, usize)>) -> String {
    at.map(|(l, c)| format!("{}: ", location(l, c))).unwrap_or_default()
}

impl ConfigError {
    /// Schema or syntax problem (as opposed to a space that is too large).
    pub fn is_schema(&self) -> bool {
        matches!(self, Self::Parse { .. } | Self::Invalid { .. })
    }
}

/// 1-based line and column of byte `offset` in `text`.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |nl| before[nl + 1..].chars().count()) + 1;
    (line, col)
}

fn parse_error(text: &str, span: Option<Range<usize>>, message: &str) -> ConfigError {
    let (line, column) = span.map_or((1, 1), |s| line_col(text, s.start));
    ConfigError::Parse { line, column, message: message.trim().to_string() }
}

/// Locate `path` (e.g. `coupling.beta`, `channels[1].gamma`) in the source
/// text, if it is written as a plain `key = value` line.
pub fn locate_key(text: &str, path: &str) -> Option<(usize, usize)> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let key = parts.pop()?;
    let (table, nth) = match parts.as_slice() {
        [] => (None, 0),
        [t] => match t.split_once('[') {
            Some((name, idx)) => (Some(name), idx.trim_end_matches(']').parse().ok()?),
            None => (Some(*t), 0),
        },
        _ => return None,
    };
    let mut current: Option<String> = None;
    let mut seen: std::collections::HashMap<String, usize> = Default::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_start();
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.trim_start_matches('[').split(']').next().unwrap_or("").trim().to_string();
            let count = seen.entry(name.clone()).or_insert(0);
            current = Some(format!("{name}#{count}"));
            *count += 1;
            continue;
        }
        let in_table = match table {
            None => current.is_none(),
            Some(t) => current.as_deref() == Some(&format!("{t}#{nth}")),
        };
        if !in_table {
            continue;
        }
        if let Some(after) = line.strip_prefix(key) {
            if after.trim_start().starts_with('=') {
                return Some((i + 1, raw.len() - line.len() + 1));
            }
        }
    }
    // Top-level key of a table written inline or absent: point at the header.
    let header = table.map(|t| format!("[{t}]"))?;
    text.lines().position(|l| l.trim_start().starts_with(&header)).map(|i| (i + 1, 1))
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn model_error(text: &str, e: ModelError) -> ConfigError {
    match e {
        ModelError::Config { field, reason } => {
            let at = locate_key(text, &field);
            ConfigError::Invalid { field, reason, at }
        }
        ModelError::Hilbert(HilbertError::TooLarge { cap }) => ConfigError::TooLarge { cap },
        other => ConfigError::Model(other),
    }
}

/// Parse `text`, fill defaults of the chosen scenario, and validate fields.
/// `scenario` replaces the file's scenario id when given.
pub fn parse_config(text: &str, scenario: Option<ScenarioId>) -> Result<ScenarioConfig, ConfigError> {
    let mut user: Table = toml::from_str(text).map_err(|e| parse_error(text, e.span(), e.message()))?;
    if let Some(id) = scenario {
        user.insert("scenario".into(), Value::String(id.as_str().into()));
    }
    // Typed pass over the user's own document: reports wrong types and
    // unknown keys against their source positions.
    let typed: ScenarioConfig = {
        let doc = toml::to_string(&user).expect("tables serialize");
        match toml::from_str(&doc) {
            Ok(c) => c,
            Err(e) => {
                // Re-run on the original text to recover positions when possible.
                let err = toml::from_str::<ScenarioConfig>(text).err().unwrap_or(e);
                return Err(parse_error(text, err.span(), err.message()));
            }
        }
    };
    let mut merged = Table::try_from(ScenarioConfig::new(typed.scenario)).expect("defaults serialize");
    if let Some(Value::Table(c)) = user.get_mut("coupling") {
        if c.contains_key("alpha") && !c.contains_key("beta") {
            let alpha = typed.coupling.alpha;
            if !(alpha.abs() <= 1.0) {
                return Err(ConfigError::Invalid {
                    field: "coupling.alpha".into(),
                    reason: format!("|alpha| must not exceed 1 when beta is derived, got {alpha}"),
                    at: locate_key(text, "coupling.alpha"),
                });
            }
            c.insert("beta".into(), Value::Float((1.0 - alpha * alpha).sqrt()));
        }
    }
    merge(&mut merged, user);
    let cfg: ScenarioConfig =
        merged.try_into().map_err(|e: toml::de::Error| parse_error(text, None, e.message()))?;
    cfg.validate().map_err(|e| model_error(text, e))?;
    Ok(cfg)
}

/// Outcome of [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub config: ScenarioConfig,
    pub dim: usize,
    pub warnings: Vec<String>,
}

/// Parse, validate and enumerate the space (no simulation).
pub fn validate_config(text: &str, scenario: Option<ScenarioId>, cap: usize) -> Result<Validation, ConfigError> {
    let config = parse_config(text, scenario)?;
    let bundle = config.build(cap).map_err(|e| model_error(text, e))?;
    let warnings = config.coupling.rwa_warning().into_iter().collect();
    Ok(Validation { dim: bundle.dim(), config, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ChannelKind, SolverKind};

    #[test]
    fn minimal_config_takes_scenario_defaults() {
        let c = parse_config("scenario = \"hbond\"\n", None).unwrap();
        assert_eq!(c, ScenarioConfig::new(ScenarioId::Hbond));
        assert_eq!(c.coupling.g_mol, 0.001);
    }

    #[test]
    fn partial_tables_merge() {
        let text = "scenario = \"phonon_grid\"\n[coupling]\ng_cov = 0.02\n[grid]\nk = 2\natoms = 2\n";
        let c = parse_config(text, None).unwrap();
        assert_eq!(c.coupling.g_cov, 0.02);
        assert_eq!(c.coupling.g_tun, 0.001);
        assert_eq!((c.grid.k, c.grid.atoms, c.grid.phonons), (2, 2, 2));
    }

    #[test]
    fn beta_derived_from_alpha() {
        let c = parse_config("scenario = \"oh_2e\"\n[coupling]\nalpha = 0.6\n", None).unwrap();
        assert!((c.coupling.beta - 0.8).abs() < 1e-15);
        let err = parse_config("scenario = \"oh_2e\"\n[coupling]\nalpha = 1.5\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, at: Some((3, 1)), .. } if field == "coupling.alpha"));
    }

    #[test]
    fn normalization_error_names_beta_with_position() {
        let text = "scenario = \"oh_1e\"\n\n[coupling]\nalpha = 0.8\n  beta = 0.5\n";
        match parse_config(text, None).unwrap_err() {
            ConfigError::Invalid { field, at, .. } => {
                assert_eq!(field, "coupling.beta");
                assert_eq!(at, Some((5, 3)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_and_type_errors_carry_positions() {
        let err = parse_config("scenario = \"oh_1e\"\n[run]\nhorizon = \n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
        let err = parse_config("scenario = \"oh_1e\"\n[run]\nsamples = \"many\"\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
        let err = parse_config("scenario = \"oh_1e\"\n[coupling]\ngamma = 1.0\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().starts_with("line 3, column"));
        let err = parse_config("scenario = \"water\"\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");
        assert!(parse_config("", None).unwrap_err().is_schema());
    }

    #[test]
    fn channels_and_solver() {
        let text = "scenario = \"oh_1e\"\n[[channels]]\nkind = \"photon-escape\"\n[[channels]]\nkind = \"photon-escape\"\ngamma = -1.0\n";
        match parse_config(text, None).unwrap_err() {
            ConfigError::Invalid { field, at, .. } => {
                assert_eq!(field, "channels[1].gamma");
                assert_eq!(at, Some((6, 1)));
            }
            other => panic!("{other:?}"),
        }
        let c = parse_config("scenario = \"oh_1e\"\n[[channels]]\nkind = \"photon-escape\"\n", None).unwrap();
        assert_eq!(c.channels[0].kind, ChannelKind::PhotonEscape);
        assert_eq!(c.solver(), SolverKind::Lindblad);
    }

    #[test]
    fn scenario_override() {
        let c = parse_config("scenario = \"oh_1e\"\n", Some(ScenarioId::Hbond)).unwrap();
        assert_eq!(c.scenario, ScenarioId::Hbond);
        assert_eq!(c.coupling.g_mol, 0.001);
        let c = parse_config("", Some(ScenarioId::Oh2e)).unwrap();
        assert_eq!(c.scenario, ScenarioId::Oh2e);
    }

    #[test]
    fn validate_reports_dim_and_rwa_warning() {
        let v = validate_config("scenario = \"oh_1e\"\n", None, 1 << 20).unwrap();
        assert_eq!(v.dim, 4);
        assert!(v.warnings.is_empty());
        let v = validate_config("scenario = \"oh_1e\"\n[coupling]\ng_mol = 0.5\n", None, 1 << 20).unwrap();
        assert!(v.warnings[0].contains("RWA validity"));
        let err = validate_config("scenario = \"phonon_grid\"\n", None, 10).unwrap_err();
        assert!(matches!(err, ConfigError::TooLarge { cap: 10 }));
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
