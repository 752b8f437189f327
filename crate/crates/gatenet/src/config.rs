//! Flat `key=value` run configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are
//! ignored. Values are taken by the consuming command; any key left over
//! afterwards is an error carrying its line number, so a typo like
//! `lrr=0.05` fails loudly instead of silently training with defaults.
//! Later assignments override earlier ones, which is also how
//! command-line `KEY=VALUE` overrides are layered on top of a file.

use std::fmt::Display;
use std::str::FromStr;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::training::{
    CorruptionKind, CorruptionSpec, CorruptionTarget, LossMode, TrainConfig,
};

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    /// 1-based source line; 0 for values injected from the command line.
    line: usize,
    used: bool,
}

/// Parsed configuration with take-then-reject-leftovers semantics.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: Vec<Entry>,
}

impl ConfigMap {
    /// Parses config text. Duplicate keys are allowed; the last one wins.
    pub fn parse(text: &str) -> Result<ConfigMap> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected key=value, got `{stripped}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Config { line, msg: "empty key".into() });
            }
            if value.is_empty() {
                return Err(Error::Config {
                    line,
                    msg: format!("key `{key}` has an empty value"),
                });
            }
            entries.push(Entry { key: key.into(), value: value.into(), line, used: false });
        }
        Ok(ConfigMap { entries })
    }

    /// Layers an override (e.g. a trailing `KEY=VALUE` command-line
    /// argument) on top of whatever the file said. Overrides report
    /// "command line" instead of a line number in errors.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push(Entry { key: key.into(), value: value.into(), line: 0, used: false });
    }

    /// Removes and returns the raw value of `key` (the last assignment
    /// wins). All matching assignments are marked used.
    pub fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let mut found = None;
        for e in self.entries.iter_mut() {
            if e.key == key {
                e.used = true;
                found = Some((e.value.clone(), e.line));
            }
        }
        found
    }

    /// Takes `key` and parses it with `FromStr`, or returns `default` if
    /// absent. Malformed values report the source line.
    pub fn take_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.take(key) {
            None => Ok(default),
            Some((raw, line)) => raw.parse().map_err(|e| Error::Config {
                line,
                msg: format!("key `{key}`: cannot parse `{raw}`: {e}"),
            }),
        }
    }

    /// Takes a key that must be present.
    pub fn take_required(&mut self, key: &str) -> Result<(String, usize)> {
        self.take(key).ok_or_else(|| Error::MissingKey(key.into()))
    }

    /// Takes `key` and maps it through a named-value parser, reporting
    /// the admissible values on failure.
    pub fn take_named<T>(
        &mut self,
        key: &str,
        default: T,
        options: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some((raw, line)) => parse(&raw).ok_or_else(|| Error::Config {
                line,
                msg: format!("key `{key}`: unknown value `{raw}` (expected one of: {options})"),
            }),
        }
    }

    /// Errors on the first key never taken by the command, with its line.
    pub fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.used) {
            None => Ok(()),
            Some(e) => Err(Error::Config {
                line: e.line,
                msg: format!("unknown key `{}`", e.key),
            }),
        }
    }
}

/// Extracts the shared training hyperparameters (`loss`, `lr`,
/// `momentum`, `epochs`, `batch_size`, `seed`, and the `corruption*`
/// keys), leaving unrelated keys for the caller.
pub fn take_train_config(cfg: &mut ConfigMap) -> Result<TrainConfig> {
    let defaults = TrainConfig::default();
    let loss = match cfg.take("loss") {
        None => defaults.loss,
        Some((raw, line)) => LossMode::parse(&raw).ok_or_else(|| Error::Config {
            line,
            msg: format!(
                "key `loss`: unknown value `{raw}` (expected one of: reconstruct-x, \
                 reconstruct-y, symmetric, cross-entropy-x, hybrid:W)"
            ),
        })?,
    };
    let kind_name = cfg.take_named(
        "corruption",
        "none".to_string(),
        "none, gaussian, masking, salt-pepper",
        |s| match s {
            "none" | "gaussian" | "masking" | "salt-pepper" => Some(s.to_string()),
            _ => None,
        },
    )?;
    let level: f64 = cfg.take_or("corruption_level", 0.2)?;
    let kind = match kind_name.as_str() {
        "none" => CorruptionKind::None,
        "gaussian" => CorruptionKind::Gaussian(level),
        "masking" => CorruptionKind::Masking(level),
        _ => CorruptionKind::SaltPepper(level),
    };
    let target = cfg.take_named(
        "corruption_target",
        CorruptionTarget::BothInputs,
        "input-x, input-y, both, factors",
        |s| match s {
            "input-x" => Some(CorruptionTarget::InputX),
            "input-y" => Some(CorruptionTarget::InputY),
            "both" => Some(CorruptionTarget::BothInputs),
            "factors" => Some(CorruptionTarget::Factors),
            _ => None,
        },
    )?;
    let config = TrainConfig {
        loss,
        corruption: CorruptionSpec { kind, target },
        lr: cfg.take_or("lr", defaults.lr)?,
        momentum: cfg.take_or("momentum", defaults.momentum)?,
        epochs: cfg.take_or("epochs", defaults.epochs)?,
        batch_size: cfg.take_or("batch_size", defaults.batch_size)?,
        seed: cfg.take_or("seed", defaults.seed)?,
    };
    config.validate()?;
    Ok(config)
}

/// Takes an activation-valued key.
pub fn take_activation(cfg: &mut ConfigMap, key: &str, default: Activation) -> Result<Activation> {
    cfg.take_named(
        key,
        default,
        "identity, sigmoid, relu, softplus, softmax",
        Activation::parse,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gated::TyingMode;

    #[test]
    fn parses_simple_assignments() {
        let mut cfg = ConfigMap::parse("lr=0.05\nepochs=10").unwrap();
        let tc = take_train_config(&mut cfg).unwrap();
        cfg.finish().unwrap();
        assert_eq!(tc.lr, 0.05);
        assert_eq!(tc.epochs, 10);
        assert_eq!(tc.momentum, TrainConfig::default().momentum);
    }

    #[test]
    fn unknown_key_is_rejected_with_its_line() {
        let mut cfg = ConfigMap::parse("lrr=0.05").unwrap();
        let _ = take_train_config(&mut cfg).unwrap();
        let err = cfg.finish().unwrap_err().to_string();
        assert!(err.contains("lrr"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let mut cfg = ConfigMap::parse("").unwrap();
        let tc = take_train_config(&mut cfg).unwrap();
        cfg.finish().unwrap();
        assert_eq!(tc, TrainConfig::default());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "\n# a comment\n  lr = 0.2  # trailing comment\n\nepochs=3\n";
        let mut cfg = ConfigMap::parse(text).unwrap();
        let tc = take_train_config(&mut cfg).unwrap();
        cfg.finish().unwrap();
        assert_eq!(tc.lr, 0.2);
        assert_eq!(tc.epochs, 3);
    }

    #[test]
    fn malformed_lines_carry_line_numbers() {
        let err = ConfigMap::parse("lr=0.1\nnot an assignment\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = ConfigMap::parse("lr=").unwrap_err().to_string();
        assert!(err.contains("empty value"), "{err}");
    }

    #[test]
    fn malformed_values_carry_line_numbers() {
        let mut cfg = ConfigMap::parse("# header\nlr=fast").unwrap();
        let err = take_train_config(&mut cfg).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("fast"), "{err}");
    }

    #[test]
    fn later_assignments_and_overrides_win() {
        let mut cfg = ConfigMap::parse("lr=0.1\nlr=0.2").unwrap();
        cfg.set("lr", "0.3");
        let tc = take_train_config(&mut cfg).unwrap();
        cfg.finish().unwrap();
        assert_eq!(tc.lr, 0.3);
    }

    #[test]
    fn loss_and_corruption_grammar() {
        let text = "loss=hybrid:0.25\ncorruption=masking\ncorruption_level=0.4\ncorruption_target=input-x";
        let mut cfg = ConfigMap::parse(text).unwrap();
        let tc = take_train_config(&mut cfg).unwrap();
        cfg.finish().unwrap();
        assert_eq!(tc.loss, LossMode::Hybrid(0.25));
        assert_eq!(tc.corruption.kind, CorruptionKind::Masking(0.4));
        assert_eq!(tc.corruption.target, CorruptionTarget::InputX);

        let mut cfg = ConfigMap::parse("loss=sym").unwrap();
        let err = take_train_config(&mut cfg).unwrap_err().to_string();
        assert!(err.contains("symmetric"), "should list options: {err}");
    }

    #[test]
    fn named_values_reject_unknowns() {
        let mut cfg = ConfigMap::parse("act_x=tanh").unwrap();
        let err = take_activation(&mut cfg, "act_x", Activation::Sigmoid)
            .unwrap_err()
            .to_string();
        assert!(err.contains("tanh") && err.contains("sigmoid"), "{err}");

        let mut cfg = ConfigMap::parse("tying=loose").unwrap();
        let err = cfg
            .take_named("tying", TyingMode::Tied, "tied, untied", |s| match s {
                "tied" => Some(TyingMode::Tied),
                "untied" => Some(TyingMode::Untied),
                _ => None,
            })
            .unwrap_err()
            .to_string();
        assert!(err.contains("untied"), "{err}");
    }

    #[test]
    fn missing_required_key_is_na_by_name() {
        let mut cfg = ConfigMap::parse("").unwrap();
        let err = cfg.take_required("kind").unwrap_err().to_string();
        assert!(err.contains("kind"), "{err}");
    }
}
