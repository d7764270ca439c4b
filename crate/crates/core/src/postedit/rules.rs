//! The configurable part of the pattern set.
//!
//! A rules file is TOML with two optional tables. Omitted keys keep their
//! defaults, unknown keys are rejected:
//!
//! ```toml
//! [zh]
//! # magnitude characters and their powers of ten
//! units = { "万" = 4, "亿" = 8 }
//! # extra characters read as digits inside numbers, e.g. "二" = 2
//! extra_digits = {}
//!
//! [vi]
//! units = { "tỷ" = 9, "triệu" = 6, "nghìn" = 3, "ngàn" = 3, "nghìn tỷ" = 12, "ngàn tỷ" = 12 }
//! # words tried, in order, when rendering a number without a preferred unit
//! render_units = ["tỷ", "triệu", "nghìn"]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RulesError {
    #[error("cannot read rules file: {0}")]
    Io(#[from] std::io::Error),
    #[error("rules file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rules file: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZhRules {
    pub units: BTreeMap<String, u32>,
    pub extra_digits: BTreeMap<String, u8>,
}

impl Default for ZhRules {
    fn default() -> Self {
        Self {
            units: [("万", 4), ("亿", 8)].into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            extra_digits: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViRules {
    pub units: BTreeMap<String, u32>,
    pub render_units: Vec<String>,
}

impl Default for ViRules {
    fn default() -> Self {
        Self {
            units: [("tỷ", 9), ("triệu", 6), ("nghìn", 3), ("ngàn", 3), ("nghìn tỷ", 12), ("ngàn tỷ", 12)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            render_units: ["tỷ", "triệu", "nghìn"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatternSet {
    pub zh: ZhRules,
    pub vi: ViRules,
}

impl PatternSet {
    pub fn from_toml(text: &str) -> Result<Self, RulesError> {
        let rules: PatternSet = toml::from_str(text)?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RulesError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain tables")
    }

    fn validate(&self) -> Result<(), RulesError> {
        for (k, d) in &self.zh.extra_digits {
            if k.chars().count() != 1 || *d > 9 {
                return Err(RulesError::Invalid(format!(
                    "extra digit `{k}` = {d}: need one character and a value 0-9"
                )));
            }
        }
        for (lang, units) in [("zh", &self.zh.units), ("vi", &self.vi.units)] {
            for (k, e) in units {
                if k.is_empty() || *e == 0 || *e > 30 {
                    return Err(RulesError::Invalid(format!(
                        "{lang} unit `{k}` = {e}: need a word and an exponent 1-30"
                    )));
                }
            }
        }
        for u in &self.vi.render_units {
            if !self.vi.units.contains_key(u) {
                return Err(RulesError::Invalid(format!("render unit `{u}` is not a vi unit")));
            }
        }
        Ok(())
    }

    /// Extra zh digit lookup.
    pub(crate) fn zh_extra_digit(&self, c: char) -> Option<u8> {
        if self.zh.extra_digits.is_empty() {
            return None;
        }
        let mut buf = [0u8; 4];
        self.zh.extra_digits.get(&*c.encode_utf8(&mut buf)).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_of_defaults() {
        let p = PatternSet::default();
        assert_eq!(PatternSet::from_toml(&p.to_toml()).unwrap(), p);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let p = PatternSet::from_toml("[zh]\nextra_digits = { \"二\" = 2 }\n").unwrap();
        assert_eq!(p.zh.units, ZhRules::default().units);
        assert_eq!(p.zh_extra_digit('二'), Some(2));
        assert_eq!(p.vi, ViRules::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(PatternSet::from_toml("[zh]\nbogus = 1\n").is_err());
        assert!(PatternSet::from_toml("[zh]\nextra_digits = { \"二二\" = 2 }\n").is_err());
        assert!(PatternSet::from_toml("[vi]\nrender_units = [\"vạn\"]\n").is_err());
    }
}
