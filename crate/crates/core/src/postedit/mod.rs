//! Rule-based correction of numbers and dates in translations.
//!
//! Entities are pulled from both sides, aligned in order per kind, and any
//! target value that disagrees with its source counterpart is re-rendered
//! from the source value in the target's own surface style.

mod extract;
mod number;
mod rules;

use std::fmt;

use serde::Serialize;

pub use number::Decimal;
pub use rules::{PatternSet, RulesError, ViRules, ZhRules};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PostEditError {
    #[error("invalid date {0}")]
    InvalidDate(DateValue),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Number,
    Date,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Number => "number",
            EntityKind::Date => "date",
        })
    }
}

/// A calendar date; year and day may be absent ("M月D日", "tháng 12 năm 2021").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DateValue {
    pub year: Option<u32>,
    pub month: u8,
    pub day: Option<u8>,
}

impl DateValue {
    pub fn full(year: u32, month: u8, day: u8) -> Self {
        Self { year: Some(year), month, day: Some(day) }
    }

    pub fn month_day(month: u8, day: u8) -> Self {
        Self { year: None, month, day: Some(day) }
    }

    pub fn year_month(year: u32, month: u8) -> Self {
        Self { year: Some(year), month, day: None }
    }

    /// Proleptic Gregorian; a missing year allows 29 February.
    pub fn is_valid(&self) -> bool {
        if self.year == Some(0) || !(1..=12).contains(&self.month) {
            return false;
        }
        match self.day {
            None => true,
            Some(d) => d >= 1 && d <= days_in_month(self.year, self.month),
        }
    }

    /// This date's fields where present, `other`'s values for them.
    fn take_values_from(&self, other: &DateValue) -> DateValue {
        DateValue {
            year: self.year.and(other.year.or(self.year)),
            month: other.month,
            day: self.day.and(other.day.or(self.day)),
        }
    }
}

impl fmt::Display for DateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.year {
            Some(y) => write!(f, "{y:04}-{:02}", self.month)?,
            None => write!(f, "--{:02}", self.month)?,
        }
        match self.day {
            Some(d) => write!(f, "-{d:02}"),
            None => Ok(()),
        }
    }
}

fn days_in_month(year: Option<u32>, month: u8) -> u8 {
    match month {
        2 => match year {
            Some(y) if !(y % 4 == 0 && (y % 100 != 0 || y % 400 == 0)) => 28,
            _ => 29,
        },
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}

/// How a date was written, reused when rendering a corrected one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DateStyle {
    /// `1/12/2021`
    Slash,
    /// `1 tháng 12 năm 2021`
    Words,
    /// `2021年12月1日`
    Cjk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityValue {
    Number(Decimal),
    Date(DateValue),
}

impl Serialize for Decimal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NumericEntity {
    pub value: EntityValue,
    /// `[start, end)` in chars.
    pub span: (usize, usize),
    pub surface: String,
    pub unit_word: Option<String>,
    pub date_style: Option<DateStyle>,
}

impl NumericEntity {
    pub fn kind(&self) -> EntityKind {
        match self.value {
            EntityValue::Number(_) => EntityKind::Number,
            EntityValue::Date(_) => EntityKind::Date,
        }
    }

    pub fn number(&self) -> Option<Decimal> {
        match self.value {
            EntityValue::Number(n) => Some(n),
            EntityValue::Date(_) => None,
        }
    }

    pub fn date(&self) -> Option<DateValue> {
        match self.value {
            EntityValue::Date(d) => Some(d),
            EntityValue::Number(_) => None,
        }
    }
}

pub fn extract_zh_entities(text: &str) -> Vec<NumericEntity> {
    extract::extract_zh_with(text, &PatternSet::default())
}

pub fn extract_zh_entities_with(text: &str, rules: &PatternSet) -> Vec<NumericEntity> {
    extract::extract_zh_with(text, rules)
}

pub fn extract_vi_entities(text: &str) -> Vec<NumericEntity> {
    extract::extract_vi_with(text, &PatternSet::default())
}

pub fn extract_vi_entities_with(text: &str, rules: &PatternSet) -> Vec<NumericEntity> {
    extract::extract_vi_with(text, rules)
}

// ---------------------------------------------------------------- render

fn vi_coefficient(value: Decimal, exp: u32) -> Decimal {
    value.div_pow10(exp)
}

fn vi_plain(value: Decimal) -> String {
    value.format_grouped('.', ',')
}

/// Vietnamese rendering of `value`.
///
/// With `preferred` set (and a known unit) the number is written as a
/// coefficient of that unit if the coefficient is at least 1, has at most
/// four integer digits and at most three decimals. Otherwise the first of
/// the configured render units giving a coefficient ≥ 1 with at most one
/// decimal is used, and failing that plain grouped digits.
pub fn render_vi_number(value: Decimal, preferred: Option<&str>) -> String {
    render_vi_number_with(value, preferred, &PatternSet::default())
}

pub fn render_vi_number_with(value: Decimal, preferred: Option<&str>, rules: &PatternSet) -> String {
    if value.is_zero() {
        return "0".into();
    }
    let units = &rules.vi.units;
    if let Some((word, &exp)) = preferred.and_then(|p| units.get_key_value(p)) {
        let c = vi_coefficient(value, exp);
        if c.at_least_one() && c.int_len() <= 4 && c.frac_len() <= 3 {
            return format!("{} {word}", c.to_string().replace('.', ","));
        }
    }
    for word in &rules.vi.render_units {
        let c = vi_coefficient(value, units[word]);
        if c.at_least_one() && c.frac_len() <= 1 {
            return format!("{} {word}", c.to_string().replace('.', ","));
        }
    }
    vi_plain(value)
}

/// `D/M/Y` without zero padding; partial dates drop the missing field.
pub fn render_vi_date(date: &DateValue) -> Result<String, PostEditError> {
    render_date(date, DateStyle::Slash)
}

pub fn render_date(date: &DateValue, style: DateStyle) -> Result<String, PostEditError> {
    if !date.is_valid() {
        return Err(PostEditError::InvalidDate(*date));
    }
    let m = date.month;
    Ok(match (style, date.year, date.day) {
        (DateStyle::Slash, Some(y), Some(d)) => format!("{d}/{m}/{y}"),
        (DateStyle::Slash, None, Some(d)) => format!("{d}/{m}"),
        (DateStyle::Slash, Some(y), None) => format!("{m}/{y}"),
        (DateStyle::Words, Some(y), Some(d)) => format!("{d} tháng {m} năm {y}"),
        (DateStyle::Words, None, Some(d)) => format!("{d} tháng {m}"),
        (DateStyle::Words, Some(y), None) => format!("{m} năm {y}"),
        (DateStyle::Cjk, Some(y), Some(d)) => format!("{y}年{m}月{d}日"),
        (DateStyle::Cjk, None, Some(d)) => format!("{m}月{d}日"),
        (DateStyle::Cjk, Some(y), None) => format!("{y}年{m}月"),
        (_, None, None) => unreachable!("constructors always set year or day"),
    })
}

/// Chinese rendering (experimental direction). Same policy as the
/// Vietnamese one with 亿/万 and ASCII digits without grouping.
pub fn render_zh_number_with(value: Decimal, preferred: Option<&str>, rules: &PatternSet) -> String {
    if value.is_zero() {
        return "0".into();
    }
    let units = &rules.zh.units;
    if let Some((word, &exp)) = preferred.and_then(|p| units.get_key_value(p)) {
        let c = value.div_pow10(exp);
        if c.at_least_one() && c.int_len() <= 4 && c.frac_len() <= 3 {
            return format!("{c}{word}");
        }
    }
    let mut by_size: Vec<(&String, &u32)> = units.iter().collect();
    by_size.sort_by(|a, b| b.1.cmp(a.1));
    for (word, &exp) in by_size {
        let c = value.div_pow10(exp);
        if c.at_least_one() && c.frac_len() <= 1 {
            return format!("{c}{word}");
        }
    }
    value.to_string()
}

// ------------------------------------------------------------- alignment

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EditReason {
    NumberMismatch,
    DateMismatch,
}

impl fmt::Display for EditReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EditReason::NumberMismatch => "number_mismatch",
            EditReason::DateMismatch => "date_mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edit {
    /// `[start, end)` chars of the text the script was computed on.
    pub span: (usize, usize),
    pub before: String,
    pub after: String,
    pub reason: EditReason,
}

/// Non-overlapping edits in increasing span order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EditScript {
    pub edits: Vec<Edit>,
}

impl EditScript {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn apply(&self, text: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::with_capacity(text.len());
        let mut at = 0;
        for e in &self.edits {
            out.extend(&chars[at..e.span.0]);
            out.push_str(&e.after);
            at = e.span.1;
        }
        out.extend(&chars[at..]);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

/// An entity left alone because no unambiguous partner was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Unaligned {
    pub side: Side,
    pub kind: EntityKind,
    pub span: (usize, usize),
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Correction {
    pub text: String,
    pub edits: EditScript,
    pub unaligned: Vec<Unaligned>,
}

/// Monotone pairing of `s` and `t` (indices). Equal counts pair by position.
/// Otherwise entities with agreeing values act as anchors (longest common
/// subsequence) and only the stretches between anchors that have the same
/// length on both sides are paired; the rest stays unaligned.
fn align<S, T>(s: &[S], t: &[T], agree: impl Fn(&S, &T) -> bool) -> Vec<(usize, usize)> {
    if s.len() == t.len() {
        return (0..s.len()).map(|i| (i, i)).collect();
    }
    let (n, m) = (s.len(), t.len());
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if agree(&s[i], &t[j]) { lcs[i + 1][j + 1] + 1 } else { lcs[i + 1][j].max(lcs[i][j + 1]) };
        }
    }
    let mut anchors = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if agree(&s[i], &t[j]) && lcs[i][j] == lcs[i + 1][j + 1] + 1 {
            anchors.push((i, j));
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    let mut pairs = Vec::new();
    let (mut si, mut tj) = (0, 0);
    for &(ai, aj) in anchors.iter().chain(std::iter::once(&(n, m))) {
        if ai - si == aj - tj {
            pairs.extend((0..ai - si).map(|k| (si + k, tj + k)));
        }
        if ai < n {
            pairs.push((ai, aj));
        }
        si = ai + 1;
        tj = aj + 1;
    }
    pairs
}

struct Renderer<'a> {
    number: &'a dyn Fn(Decimal, Option<&str>) -> String,
}

fn correct_with(src: &[NumericEntity], tgt_text: &str, tgt: &[NumericEntity], render: Renderer<'_>) -> Correction {
    let mut edits = Vec::new();
    let mut unaligned = Vec::new();
    for kind in [EntityKind::Number, EntityKind::Date] {
        let s: Vec<&NumericEntity> = src.iter().filter(|e| e.kind() == kind).collect();
        let t: Vec<&NumericEntity> = tgt.iter().filter(|e| e.kind() == kind).collect();
        let pairs = align(&s, &t, |a, b| corrected(a, b, &render).is_none());
        let mut s_used = vec![false; s.len()];
        let mut t_used = vec![false; t.len()];
        for &(i, j) in &pairs {
            s_used[i] = true;
            t_used[j] = true;
            if let Some(after) = corrected(s[i], t[j], &render) {
                edits.push(Edit {
                    span: t[j].span,
                    before: t[j].surface.clone(),
                    after,
                    reason: match kind {
                        EntityKind::Number => EditReason::NumberMismatch,
                        EntityKind::Date => EditReason::DateMismatch,
                    },
                });
            }
        }
        for (side, ents, used) in [(Side::Source, &s, &s_used), (Side::Target, &t, &t_used)] {
            for (e, _) in ents.iter().zip(used.iter()).filter(|(_, &u)| !u) {
                unaligned.push(Unaligned { side, kind, span: e.span, surface: e.surface.clone() });
            }
        }
    }
    edits.sort_by_key(|e| e.span.0);
    let edits = EditScript { edits };
    Correction { text: edits.apply(tgt_text), edits, unaligned }
}

/// The replacement surface for `t`, or `None` when it already agrees with `s`.
fn corrected(s: &NumericEntity, t: &NumericEntity, render: &Renderer<'_>) -> Option<String> {
    match (s.value, t.value) {
        (EntityValue::Number(sv), EntityValue::Number(tv)) => {
            (sv != tv).then(|| (render.number)(sv, t.unit_word.as_deref()))
        }
        (EntityValue::Date(sd), EntityValue::Date(td)) => {
            let want = td.take_values_from(&sd);
            if want == td || !want.is_valid() {
                return None;
            }
            render_date(&want, t.date_style.unwrap_or(DateStyle::Slash)).ok()
        }
        _ => None,
    }
}

/// Corrects numbers and dates in a Vietnamese translation of `src_zh`.
pub fn correct_translation(src_zh: &str, tgt_vi: &str) -> Correction {
    correct_translation_with(src_zh, tgt_vi, &PatternSet::default())
}

pub fn correct_translation_with(src_zh: &str, tgt_vi: &str, rules: &PatternSet) -> Correction {
    let src = extract::extract_zh_with(src_zh, rules);
    let tgt = extract::extract_vi_with(tgt_vi, rules);
    let number = |v, u: Option<&str>| render_vi_number_with(v, u, rules);
    correct_with(&src, tgt_vi, &tgt, Renderer { number: &number })
}

/// The reverse direction, Vietnamese source and Chinese translation.
/// Experimental: same alignment, untested against real output.
pub fn correct_translation_vi_zh(src_vi: &str, tgt_zh: &str, rules: &PatternSet) -> Correction {
    let src = extract::extract_vi_with(src_vi, rules);
    let tgt = extract::extract_zh_with(tgt_zh, rules);
    let number = |v, u: Option<&str>| render_zh_number_with(v, u, rules);
    correct_with(&src, tgt_zh, &tgt, Renderer { number: &number })
}
