//! Machinery for a Chinese–Vietnamese machine translation pipeline.
//!
//! The crate covers everything around model training: corpus statistics and
//! length filtering, a BPE subword model, the MTCK checkpoint format with
//! weight averaging and vocabulary pruning, greedy/beam/top-k decoders over a
//! pluggable step model, a backtranslation driver, rule-based correction of
//! numbers and dates in translations, and corpus BLEU.

pub mod backtranslate;
pub mod bleu;
pub mod corpus;
pub mod decoder;
pub mod modelstore;
pub mod pipeline;
pub mod postedit;
pub mod rng;
pub mod subword;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Zh,
    Vi,
}

impl std::str::FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zh" => Ok(Lang::Zh),
            "vi" => Ok(Lang::Vi),
            other => Err(format!("unknown language `{other}` (expected zh or vi)")),
        }
    }
}

impl std::fmt::Display for Lang {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Lang::Zh => "zh",
            Lang::Vi => "vi",
        })
    }
}
