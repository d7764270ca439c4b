use std::collections::HashMap;

use super::{StepModel, NEG_LOGIT};

/// A noisy substitution cipher posing as a translation model.
///
/// Step `i` puts probability `1 - noise` on `cipher(src[i])` (on EOS once
/// `i == src.len()`) and spreads `noise` evenly over every other token.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCipherModel {
    cipher: Vec<u32>,
    eos: u32,
    noise: f64,
}

impl ToyCipherModel {
    /// `cipher[s]` is the target token for source token `s`; it must be a
    /// permutation of `0..cipher.len()` that fixes `eos`.
    pub fn new(cipher: Vec<u32>, eos: u32, noise: f64) -> Result<Self, String> {
        if !(0.0..1.0).contains(&noise) {
            return Err(format!("noise must lie in [0, 1), got {noise}"));
        }
        let mut seen = vec![false; cipher.len()];
        for &t in &cipher {
            match seen.get_mut(t as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err("cipher is not a permutation".into()),
            }
        }
        if cipher.get(eos as usize) != Some(&eos) {
            return Err("cipher must map EOS to itself".into());
        }
        Ok(Self { cipher, eos, noise })
    }

    /// Vocabulary `0..=n` with EOS = 0; token `i ≥ 1` maps to
    /// `((i - 1 + shift) mod n) + 1`.
    pub fn shift(n: usize, shift: usize, noise: f64) -> Result<Self, String> {
        let cipher = std::iter::once(0).chain((0..n).map(|i| ((i + shift) % n) as u32 + 1)).collect();
        Self::new(cipher, 0, noise)
    }

    pub fn encipher(&self, token: u32) -> u32 {
        self.cipher[token as usize]
    }

    pub fn decipher(&self, token: u32) -> u32 {
        self.cipher.iter().position(|&t| t == token).expect("permutation") as u32
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }
}

impl StepModel for ToyCipherModel {
    fn vocab_size(&self) -> usize {
        self.cipher.len()
    }

    fn eos_id(&self) -> u32 {
        self.eos
    }

    fn next_logits(&self, src: &[u32], prefix: &[u32]) -> Vec<f64> {
        let v = self.cipher.len();
        let target = match src.get(prefix.len()) {
            Some(&s) => self.encipher(s),
            None => self.eos,
        };
        let spread = self.noise / (v - 1).max(1) as f64;
        let off = if spread > 0.0 { spread.ln() } else { NEG_LOGIT };
        let mut logits = vec![off; v];
        logits[target as usize] = (1.0 - self.noise).ln();
        logits
    }
}

/// Maps characters to ids `1..=n`; id 0 is EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharCodec {
    chars: Vec<char>,
    ids: HashMap<char, u32>,
}

impl CharCodec {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Self {
        let mut uniq: Vec<char> = Vec::new();
        for c in chars {
            if !uniq.contains(&c) {
                uniq.push(c);
            }
        }
        let ids = uniq.iter().enumerate().map(|(i, &c)| (c, i as u32 + 1)).collect();
        Self { chars: uniq, ids }
    }

    /// Lowercase ASCII letters and the space.
    pub fn ascii_lowercase() -> Self {
        Self::new(('a'..='z').chain(std::iter::once(' ')))
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Fails with the first character outside the alphabet.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>, char> {
        text.chars().map(|c| self.ids.get(&c).copied().ok_or(c)).collect()
    }

    /// Ids outside `1..=n` (EOS included) are skipped.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter().filter_map(|&i| i.checked_sub(1).and_then(|i| self.chars.get(i as usize))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    #[test]
    fn noiseless_greedy_is_exact_cipher() {
        let m = ToyCipherModel::shift(3, 1, 0.0).unwrap();
        let h = decode_greedy(&m, &[1, 2, 3], 10);
        assert_eq!(h.tokens, [2, 3, 1, 0]);
        assert_eq!(h.score, 0.0);
        assert!(!h.truncated);
        assert!(h.ranks.iter().all(|&r| r == 1));
    }

    #[test]
    fn half_noise_over_four_tokens() {
        // p(cipher) = 0.5, each of the other 3 tokens 1/6.
        let m = ToyCipherModel::shift(3, 2, 0.5).unwrap();
        let h = decode_greedy(&m, &[1, 2], 10);
        assert_eq!(h.tokens.len(), 3);
        let expected = h.tokens.len() as f64 * 0.5f64.ln();
        assert!((h.score - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ToyCipherModel::new(vec![0, 1, 1], 0, 0.1).is_err());
        assert!(ToyCipherModel::new(vec![1, 0], 0, 0.1).is_err());
        assert!(ToyCipherModel::shift(3, 0, 1.0).is_err());
    }

    #[test]
    fn decipher_inverts() {
        let m = ToyCipherModel::shift(27, 5, 0.0).unwrap();
        for t in 0..28 {
            assert_eq!(m.decipher(m.encipher(t)), t);
        }
    }

    #[test]
    fn codec_roundtrip_and_unknown() {
        let c = CharCodec::ascii_lowercase();
        let ids = c.encode("hello world").unwrap();
        assert_eq!(c.decode(&ids), "hello world");
        assert_eq!(c.encode("héllo"), Err('é'));
        assert_eq!(c.len(), 27);
    }
}
