//! Deterministic byte-pair-encoding subword model.
//!
//! Words are split on the ASCII space and spelled as characters followed by
//! the end-of-word marker [`END_OF_WORD`]. Training repeatedly merges the most
//! frequent adjacent symbol pair, breaking count ties by the lexicographic
//! order of `(left, right)`, and stops early once no pair occurs twice.
//!
//! # Model file
//!
//! ```text
//! mtpipe-bpe v1
//! specials <n>
//! <special token>        (n lines, in id order)
//! merges <n>
//! <left> <right>         (n lines, in priority order)
//! tokens <n>
//! <token>                (n lines, in id order, specials included)
//! ```
//!
//! Token text is escaped: `\\` backslash, `\s` space, `\t` tab, `\n` line
//! feed, `\r` carriage return. Files are UTF-8 with LF line endings and a
//! trailing LF.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::Corpus;

/// Reserved end-of-word marker (U+2581, LOWER ONE EIGHTH BLOCK).
pub const END_OF_WORD: char = '\u{2581}';
const END_OF_WORD_STR: &str = "\u{2581}";

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const ZH_TAG: &str = "[zh_CN]";
pub const VI_TAG: &str = "[vi_VN]";

/// Special tokens in id order; they always occupy ids `0..6`.
pub const SPECIALS: [&str; 6] = [PAD, UNK, BOS, EOS, ZH_TAG, VI_TAG];
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

const HEADER: &str = "mtpipe-bpe v1";

#[derive(Debug, thiserror::Error)]
pub enum SubwordError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("input contains the reserved end-of-word marker U+2581 at char {0}")]
    ReservedMarker(usize),
    #[error("model file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("duplicate token `{0}` in vocabulary")]
    DuplicateToken(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered merge rules; a lower index means higher priority.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    // left -> right -> rank
    ranks: HashMap<String, HashMap<String, usize>>,
}

impl MergeTable {
    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self, SubwordError> {
        let mut ranks: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (rank, (left, right)) in pairs.iter().enumerate() {
            if ranks.entry(left.clone()).or_default().insert(right.clone(), rank).is_some() {
                return Err(SubwordError::DuplicateToken(format!("{left} {right}")));
            }
        }
        Ok(Self { merges: pairs, ranks })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(left)?.get(right).copied()
    }
}

/// Token strings indexed by id. Specials come first in [`SPECIALS`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordVocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl SubwordVocab {
    /// Builds a vocabulary from non-special tokens; specials are prepended.
    pub fn new<I, S>(tokens: I) -> Result<Self, SubwordError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let all = SPECIALS.iter().map(|s| s.to_string()).chain(tokens.into_iter().map(Into::into)).collect();
        Self::from_full_list(all)
    }

    /// Builds a vocabulary from a complete id-ordered list that must start
    /// with the specials.
    pub fn from_full_list(tokens: Vec<String>) -> Result<Self, SubwordError> {
        if tokens.len() < SPECIALS.len() || tokens.iter().zip(SPECIALS).any(|(t, s)| t != s) {
            return Err(SubwordError::Format { line: 0, msg: "vocabulary must begin with the special tokens".into() });
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(SubwordError::DuplicateToken(t.clone()));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn special_ids() -> impl Iterator<Item = u32> {
        0..SPECIALS.len() as u32
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }
}

/// A trained merge table with its vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordModel {
    pub merges: MergeTable,
    pub vocab: SubwordVocab,
}

fn spell(word: &str) -> Vec<String> {
    word.chars().map(String::from).chain(std::iter::once(END_OF_WORD_STR.to_string())).collect()
}

/// Learns up to `n_merges` merges from `corpus`.
pub fn train_bpe(corpus: &Corpus, n_merges: usize) -> Result<SubwordModel, SubwordError> {
    if corpus.is_empty() {
        return Err(SubwordError::EmptyCorpus);
    }
    let mut word_counts: HashMap<&str, u64> = HashMap::new();
    for text in corpus.texts() {
        for word in text.split(' ').filter(|w| !w.is_empty()) {
            *word_counts.entry(word).or_default() += 1;
        }
    }
    // Sorted so the symbol inventory and iteration order are reproducible.
    let mut words: Vec<(Vec<String>, u64)> = word_counts.into_iter().map(|(w, c)| (spell(w), c)).collect();
    words.sort();

    let chars: BTreeSet<&str> = words
        .iter()
        .flat_map(|(symbols, _)| symbols.iter().map(String::as_str))
        .filter(|s| *s != END_OF_WORD_STR)
        .collect();
    let mut vocab_tokens: Vec<String> =
        std::iter::once(END_OF_WORD_STR.to_string()).chain(chars.into_iter().map(String::from)).collect();

    let mut merges = Vec::with_capacity(n_merges);
    for _ in 0..n_merges {
        let mut counts: HashMap<(&str, &str), u64> = HashMap::new();
        for (symbols, c) in &words {
            for pair in symbols.windows(2) {
                *counts.entry((pair[0].as_str(), pair[1].as_str())).or_default() += c;
            }
        }
        let best = counts
            .into_iter()
            .filter(|&(_, c)| c >= 2)
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((left, right), _)) = best else {
            break;
        };
        let (left, right) = (left.to_string(), right.to_string());
        let merged = format!("{left}{right}");
        for (symbols, _) in &mut words {
            apply_merge(symbols, &left, &right, &merged);
        }
        vocab_tokens.push(merged);
        merges.push((left, right));
    }

    let merges = MergeTable::from_pairs(merges)?;
    // A merge can reproduce a string that is already a token (e.g. a single
    // character also spelled by two others); keep the first id.
    let mut seen = std::collections::HashSet::new();
    vocab_tokens.retain(|t| seen.insert(t.clone()));
    let vocab = SubwordVocab::new(vocab_tokens)?;
    Ok(SubwordModel { merges, vocab })
}

fn apply_merge(symbols: &mut Vec<String>, left: &str, right: &str, merged: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            symbols[i] = merged.to_string();
            symbols.remove(i + 1);
        }
        i += 1;
    }
}

impl SubwordModel {
    /// Splits one word into subword strings by applying merges in priority
    /// order.
    fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols = spell(word);
        loop {
            let best = symbols.windows(2).filter_map(|p| self.merges.rank(&p[0], &p[1])).min();
            let Some(rank) = best else { break };
            let (left, right) = &self.merges.pairs()[rank];
            let merged = format!("{left}{right}");
            apply_merge(&mut symbols, left, right, &merged);
        }
        symbols
    }

    /// Subword strings for `text`; the empty string encodes to nothing.
    pub fn segment(&self, text: &str) -> Result<Vec<String>, SubwordError> {
        if let Some(pos) = text.chars().position(|c| c == END_OF_WORD) {
            return Err(SubwordError::ReservedMarker(pos));
        }
        if text.is_empty() {
            return Ok(Vec::new());
        }
        Ok(text.split(' ').flat_map(|w| self.segment_word(w)).collect())
    }

    /// Token ids for `text`. Symbols missing from the vocabulary (unseen
    /// characters) become [`UNK_ID`].
    pub fn encode(&self, text: &str) -> Result<Vec<u32>, SubwordError> {
        Ok(self.segment(text)?.iter().map(|s| self.vocab.id(s).unwrap_or(UNK_ID)).collect())
    }

    /// Inverse of [`encode`](Self::encode) for text whose characters are all
    /// in the vocabulary. Specials other than UNK render as nothing; UNK
    /// renders as U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            match id {
                UNK_ID => out.push('\u{FFFD}'),
                _ if SubwordVocab::is_special(id) => {}
                _ => {
                    if let Some(tok) = self.vocab.token(id) {
                        out.extend(tok.chars().map(|c| if c == END_OF_WORD { ' ' } else { c }));
                    }
                }
            }
        }
        if out.ends_with(' ') {
            out.pop();
        }
        out
    }

    /// Ids used by the encodings of every sentence in `corpora`, plus all
    /// specials. Sentences containing the reserved marker contribute nothing.
    pub fn corpus_vocab<'a, I>(&self, corpora: I) -> BTreeSet<u32>
    where
        I: IntoIterator<Item = &'a Corpus>,
    {
        let mut ids: BTreeSet<u32> = SubwordVocab::special_ids().collect();
        for corpus in corpora {
            let part: BTreeSet<u32> = corpus
                .sentences
                .par_iter()
                .map(|s| self.encode(&s.text).unwrap_or_default().into_iter().collect::<BTreeSet<u32>>())
                .reduce(BTreeSet::new, |mut a, b| {
                    a.extend(b);
                    a
                });
            ids.extend(part);
        }
        ids
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        writeln!(out, "specials {}", SPECIALS.len()).unwrap();
        for s in SPECIALS {
            writeln!(out, "{}", escape(s)).unwrap();
        }
        writeln!(out, "merges {}", self.merges.len()).unwrap();
        for (l, r) in self.merges.pairs() {
            writeln!(out, "{} {}", escape(l), escape(r)).unwrap();
        }
        writeln!(out, "tokens {}", self.vocab.len()).unwrap();
        for t in self.vocab.tokens() {
            writeln!(out, "{}", escape(t)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SubwordError> {
        let mut lines = text.split_terminator('\n').enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| SubwordError::Format {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            })
        };
        let (n, header) = next("header")?;
        if header != HEADER {
            return Err(SubwordError::Format { line: n, msg: format!("expected `{HEADER}`") });
        }
        let count = |n: usize, line: &str, key: &str| -> Result<usize, SubwordError> {
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| SubwordError::Format { line: n, msg: format!("expected `{key} <count>`") })
        };
        let (n, line) = next("specials")?;
        let n_specials = count(n, line, "specials")?;
        for expected in SPECIALS.iter().take(n_specials) {
            let (n, line) = next("special token")?;
            if unescape(line, n)? != *expected {
                return Err(SubwordError::Format { line: n, msg: format!("expected special `{expected}`") });
            }
        }
        if n_specials != SPECIALS.len() {
            return Err(SubwordError::Format { line: n, msg: format!("expected {} specials", SPECIALS.len()) });
        }
        let (n, line) = next("merges")?;
        let n_merges = count(n, line, "merges")?;
        let mut pairs = Vec::with_capacity(n_merges);
        for _ in 0..n_merges {
            let (n, line) = next("merge")?;
            let (l, r) = line
                .split_once(' ')
                .ok_or_else(|| SubwordError::Format { line: n, msg: "merge line must be `<left> <right>`".into() })?;
            pairs.push((unescape(l, n)?, unescape(r, n)?));
        }
        let (n, line) = next("tokens")?;
        let n_tokens = count(n, line, "tokens")?;
        let mut tokens = Vec::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            let (n, line) = next("token")?;
            tokens.push(unescape(line, n)?);
        }
        if let Some((n, _)) = lines.next() {
            return Err(SubwordError::Format { line: n, msg: "trailing content".into() });
        }
        Ok(Self { merges: MergeTable::from_pairs(pairs)?, vocab: SubwordVocab::from_full_list(tokens)? })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SubwordError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SubwordError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String, SubwordError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next() {
            Some('\\') => '\\',
            Some('s') => ' ',
            Some('t') => '\t',
            Some('n') => '\n',
            Some('r') => '\r',
            other => {
                return Err(SubwordError::Format {
                    line,
                    msg: format!("bad escape `\\{}`", other.map(String::from).unwrap_or_default()),
                })
            }
        });
    }
    Ok(out)
}
