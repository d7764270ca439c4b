//! Corpus BLEU (single reference, up to 4-grams) with exponential smoothing.
//!
//! The tokenizers are this crate's own, so scores are only comparable with
//! other scores computed here.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::is_cjk;
use crate::Lang;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BleuError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("nothing to score")]
    Empty,
}

/// ASCII punctuation plus the common general, CJK and fullwidth marks.
pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '¡' | '«' | '·' | '»' | '¿'
            | '\u{2010}'..='\u{2027}'
            | '\u{2030}'..='\u{205E}'
            | '\u{3001}'..='\u{3003}'
            | '\u{3008}'..='\u{3011}'
            | '\u{3014}'..='\u{301F}'
            | '\u{FF01}'..='\u{FF0F}'
            | '\u{FF1A}'..='\u{FF20}'
            | '\u{FF3B}'..='\u{FF40}'
            | '\u{FF5B}'..='\u{FF65}')
}

pub fn tokenize_for_bleu(text: &str, lang: Lang) -> Vec<String> {
    match lang {
        Lang::Zh => tokenize_zh(text),
        Lang::Vi => tokenize_vi(text),
    }
}

fn tokenize_zh(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_whitespace() || is_cjk(c) || is_punct(c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn tokenize_vi(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let core_start = word.find(|c: char| !is_punct(c)).unwrap_or(word.len());
        let lead = &word[..core_start];
        let rest = &word[core_start..];
        let core_end =
            rest.rfind(|c: char| !is_punct(c)).map_or(0, |i| i + rest[i..].chars().next().unwrap().len_utf8());
        out.extend(lead.chars().map(String::from));
        if core_end > 0 {
            out.push(rest[..core_end].to_string());
        }
        out.extend(rest[core_end..].chars().map(String::from));
    }
    out
}

/// Sufficient statistics; corpus scores are computed from their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub sys_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

impl BleuStats {
    pub fn from_tokens(hyp: &[String], reference: &[String]) -> Self {
        let mut s = BleuStats { sys_len: hyp.len() as u64, ref_len: reference.len() as u64, ..Default::default() };
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
            s.matches[n - 1] = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    pub fn from_pair(hyp: &str, reference: &str, lang: Lang) -> Self {
        Self::from_tokens(&tokenize_for_bleu(hyp, lang), &tokenize_for_bleu(reference, lang))
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.sys_len += other.sys_len;
        self.ref_len += other.ref_len;
        self
    }

    pub fn score(&self) -> BleuScore {
        let mut precisions = [0.0; MAX_ORDER];
        let mut smooth = 1.0;
        for ((p, &m), &t) in precisions.iter_mut().zip(&self.matches).zip(&self.totals) {
            if t == 0 {
                continue;
            }
            *p = if m == 0 {
                smooth *= 2.0;
                1.0 / (smooth * t as f64)
            } else {
                m as f64 / t as f64
            };
        }
        let bp = if self.sys_len == 0 { 0.0 } else { (1.0 - self.ref_len as f64 / self.sys_len as f64).exp().min(1.0) };
        let bleu = if precisions.contains(&0.0) {
            0.0
        } else {
            100.0 * bp * (precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64).exp()
        };
        BleuScore { bleu, precisions, bp, sys_len: self.sys_len, ref_len: self.ref_len }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// Unrounded, in `[0, 100]`.
    pub bleu: f64,
    /// Modified n-gram precisions as fractions, after smoothing.
    pub precisions: [f64; MAX_ORDER],
    /// In `(0, 1]`, or 0 for an empty system output.
    pub bp: f64,
    pub sys_len: u64,
    pub ref_len: u64,
}

/// Half-up rounding to one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0 + 0.5).floor() / 10.0
}

impl BleuScore {
    pub fn rounded(&self) -> f64 {
        round1(self.bleu)
    }
}

impl fmt::Display for BleuScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p: Vec<String> = self.precisions.iter().map(|p| format!("{:.1}", 100.0 * p)).collect();
        write!(
            f,
            "BLEU = {:.1} {} (BP = {:.3} ratio = {:.3} hyp_len = {} ref_len = {})",
            self.rounded(),
            p.join("/"),
            self.bp,
            if self.ref_len == 0 { 0.0 } else { self.sys_len as f64 / self.ref_len as f64 },
            self.sys_len,
            self.ref_len
        )
    }
}

pub fn corpus_stats<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(
    hyps: &[H],
    refs: &[R],
    lang: Lang,
) -> Result<BleuStats, BleuError> {
    if hyps.len() != refs.len() {
        return Err(BleuError::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(BleuError::Empty);
    }
    Ok(hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| BleuStats::from_pair(h.as_ref(), r.as_ref(), lang))
        .reduce(BleuStats::default, |a, b| a.merge(&b)))
}

pub fn corpus_bleu<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(
    hyps: &[H],
    refs: &[R],
    lang: Lang,
) -> Result<BleuScore, BleuError> {
    Ok(corpus_stats(hyps, refs, lang)?.score())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizers() {
        assert_eq!(tokenize_for_bleu("你好!", Lang::Zh), ["你", "好", "!"]);
        assert_eq!(tokenize_for_bleu("xin chào.", Lang::Vi), ["xin", "chào", "."]);
        assert!(tokenize_for_bleu("", Lang::Zh).is_empty());
        assert!(tokenize_for_bleu("", Lang::Vi).is_empty());
        assert_eq!(tokenize_for_bleu("在2021年, EU说", Lang::Zh), ["在", "2021", "年", ",", "EU", "说"]);
        assert_eq!(
            tokenize_for_bleu("\"Mỹ\", 1.500 USD...", Lang::Vi),
            ["\"", "Mỹ", "\"", ",", "1.500", "USD", ".", ".", "."]
        );
        assert_eq!(tokenize_for_bleu("—", Lang::Vi), ["—"]);
    }

    #[test]
    fn perfect_match() {
        let s = corpus_bleu(&["a b c d e"], &["a b c d e"], Lang::Vi).unwrap();
        assert_eq!(s.rounded(), 100.0);
        assert_eq!(s.bp, 1.0);
    }

    #[test]
    fn short_hypothesis() {
        let s = corpus_bleu(&["a b c d"], &["a b c d e"], Lang::Vi).unwrap();
        assert_eq!(s.precisions, [1.0; 4]);
        assert!((s.bp - (-0.25f64).exp()).abs() < 1e-12);
        assert_eq!(s.rounded(), 77.9);
    }

    #[test]
    fn smoothing_doubles_per_empty_order() {
        // 3 and 4 grams have no matches: p3 = 1/(2*2), p4 = 1/(4*1)
        let s = corpus_bleu(&["a b x d"], &["a b c d"], Lang::Vi).unwrap();
        assert_eq!(s.precisions, [0.75, 1.0 / 3.0, 0.25, 0.25]);
    }

    #[test]
    fn errors_and_empty_output() {
        assert_eq!(corpus_bleu(&["a"], &["a", "b"], Lang::Vi), Err(BleuError::LengthMismatch { hyps: 1, refs: 2 }));
        assert_eq!(corpus_bleu::<&str, &str>(&[], &[], Lang::Vi), Err(BleuError::Empty));
        let s = corpus_bleu(&[""], &["a b"], Lang::Vi).unwrap();
        assert_eq!(s.bleu, 0.0);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round1(38.85), 38.9);
        assert_eq!(round1(38.84), 38.8);
        assert_eq!(round1(0.05), 0.1);
    }
}
