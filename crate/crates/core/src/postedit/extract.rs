//! Scanners for numbers and dates in Chinese and Vietnamese text.
//!
//! Spans are `[start, end)` offsets in Unicode scalar values. Matches never
//! start inside a digit run or right after a Latin letter (so "G20" or
//! "A380" are not numbers); at each start the longest candidate wins.

use super::number::Decimal;
use super::rules::PatternSet;
use super::{DateStyle, DateValue, EntityValue, NumericEntity};
use crate::corpus::is_cjk;

type DigitFn<'a> = &'a dyn Fn(char) -> Option<u8>;

fn ascii_digit(c: char) -> Option<u8> {
    c.to_digit(10).filter(|_| c.is_ascii_digit()).map(|d| d as u8)
}

fn zh_digit(c: char, rules: &PatternSet) -> Option<u8> {
    match c {
        '0'..='9' => Some(c as u8 - b'0'),
        '０'..='９' => Some((c as u32 - '０' as u32) as u8),
        _ => rules.zh_extra_digit(c),
    }
}

fn is_latin_letter(c: char) -> bool {
    c.is_alphabetic() && !is_cjk(c)
}

fn starts_entity(chars: &[char], i: usize, digit: DigitFn) -> bool {
    if digit(chars[i]).is_none() {
        return false;
    }
    let Some(&prev) = i.checked_sub(1).and_then(|p| chars.get(p)) else {
        return true;
    };
    if digit(prev).is_some() || is_latin_letter(prev) || prev == '_' {
        return false;
    }
    if matches!(prev, '.' | ',' | '-' | '/') {
        // "3.5" continues a number; "COVID-19" is a name.
        let before = i.checked_sub(2).and_then(|p| chars.get(p)).copied();
        return !before.is_some_and(|b| digit(b).is_some() || is_latin_letter(b));
    }
    true
}

/// Digit run starting at `i`, as ASCII digits.
fn digit_run(chars: &[char], i: usize, digit: DigitFn) -> (String, usize) {
    let mut s = String::new();
    let mut p = i;
    while let Some(d) = chars.get(p).and_then(|&c| digit(c)) {
        s.push((b'0' + d) as char);
        p += 1;
    }
    (s, p)
}

/// An integer of `min..=max` digits at `i` that is not followed by another
/// digit.
fn int_at(chars: &[char], i: usize, digit: DigitFn, min: usize, max: usize) -> Option<(u32, usize)> {
    let (s, end) = digit_run(chars, i, digit);
    ((min..=max).contains(&s.len())).then(|| (s.parse().ok(), end)).and_then(|(v, e)| v.map(|v| (v, e)))
}

fn literal_at(chars: &[char], i: usize, lit: &str) -> Option<usize> {
    let mut p = i;
    for c in lit.chars() {
        if chars.get(p) != Some(&c) {
            return None;
        }
        p += 1;
    }
    Some(p)
}

/// Longest unit word at `i` whose exponent is below `below`.
fn unit_at<'r>(
    chars: &[char],
    i: usize,
    units: &'r std::collections::BTreeMap<String, u32>,
    below: u32,
    needs_boundary: bool,
) -> Option<(&'r str, u32, usize)> {
    units
        .iter()
        .filter(|(_, &e)| e < below)
        .filter_map(|(w, &e)| literal_at(chars, i, w).map(|end| (w.as_str(), e, end)))
        .filter(|&(_, _, end)| !needs_boundary || !chars.get(end).is_some_and(|&c| is_latin_letter(c)))
        .max_by_key(|&(w, _, _)| w.chars().count())
}

fn entity(chars: &[char], start: usize, end: usize, value: EntityValue) -> NumericEntity {
    NumericEntity {
        value,
        span: (start, end),
        surface: chars[start..end].iter().collect(),
        unit_word: None,
        date_style: None,
    }
}

fn longest(a: Option<NumericEntity>, b: Option<NumericEntity>) -> Option<NumericEntity> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.span.1 > a.span.1 { b } else { a }),
        (a, b) => a.or(b),
    }
}

fn scan(text: &str, digit: DigitFn, find: impl Fn(&[char], usize) -> Option<NumericEntity>) -> Vec<NumericEntity> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !starts_entity(&chars, i, digit) {
            i += 1;
            continue;
        }
        match find(&chars, i) {
            Some(e) => {
                i = e.span.1;
                out.push(e);
            }
            None => i = digit_run(&chars, i, digit).1,
        }
    }
    out
}

// ---------------------------------------------------------------- Chinese

pub fn extract_zh_with(text: &str, rules: &PatternSet) -> Vec<NumericEntity> {
    let digit = |c| zh_digit(c, rules);
    scan(text, &digit, |chars, i| longest(zh_date(chars, i, &digit), zh_number(chars, i, &digit, rules)))
}

fn zh_coef(chars: &[char], i: usize, digit: DigitFn) -> Option<(Decimal, usize)> {
    let (mut int, mut p) = digit_run(chars, i, digit);
    if int.is_empty() {
        return None;
    }
    if int.len() <= 3 {
        // 1,234,567
        while chars.get(p) == Some(&',') {
            let (g, e) = digit_run(chars, p + 1, digit);
            if g.len() != 3 {
                break;
            }
            int.push_str(&g);
            p = e;
        }
    }
    let mut frac = String::new();
    if matches!(chars.get(p), Some('.') | Some('．')) {
        let (f, e) = digit_run(chars, p + 1, digit);
        if !f.is_empty() {
            frac = f;
            p = e;
        }
    }
    Some((Decimal::from_parts(&int, &frac)?, p))
}

fn zh_number(chars: &[char], i: usize, digit: DigitFn, rules: &PatternSet) -> Option<NumericEntity> {
    let units = &rules.zh.units;
    let (coef, mut pos) = zh_coef(chars, i, digit)?;
    let mut value = coef;
    let mut unit_word = None;
    if let Some((word, exp, end)) = unit_at(chars, pos, units, u32::MAX, false) {
        value = coef.mul_pow10(exp)?;
        unit_word = Some(word.to_string());
        pos = end;
        let mut last = exp;
        // 1亿2000万
        while let Some((c2, p2)) = zh_coef(chars, pos, digit) {
            let Some((_, e2, end2)) = unit_at(chars, p2, units, last, false) else {
                break;
            };
            value = value.checked_add(c2.mul_pow10(e2)?)?;
            pos = end2;
            last = e2;
        }
    }
    let mut e = entity(chars, i, pos, EntityValue::Number(value));
    e.unit_word = unit_word;
    Some(e)
}

fn zh_date(chars: &[char], i: usize, digit: DigitFn) -> Option<NumericEntity> {
    let is_day_mark = |p: usize| matches!(chars.get(p), Some('日') | Some('号'));
    let (a, p) = int_at(chars, i, digit, 1, 4)?;
    let (date, end) = match chars.get(p)? {
        '年' => {
            let (m, p2) = int_at(chars, p + 1, digit, 1, 2)?;
            if chars.get(p2) != Some(&'月') {
                return None;
            }
            match int_at(chars, p2 + 1, digit, 1, 2) {
                Some((d, p3)) if is_day_mark(p3) => (DateValue::full(a, m as u8, d as u8), p3 + 1),
                _ => (DateValue::year_month(a, m as u8), p2 + 1),
            }
        }
        '月' if a <= 12 => {
            let (d, p2) = int_at(chars, p + 1, digit, 1, 2)?;
            if !is_day_mark(p2) {
                return None;
            }
            (DateValue::month_day(a as u8, d as u8), p2 + 1)
        }
        _ => return None,
    };
    if !date.is_valid() {
        return None;
    }
    let mut e = entity(chars, i, end, EntityValue::Date(date));
    e.date_style = Some(DateStyle::Cjk);
    Some(e)
}

// ------------------------------------------------------------- Vietnamese

pub fn extract_vi_with(text: &str, rules: &PatternSet) -> Vec<NumericEntity> {
    scan(text, &ascii_digit, |chars, i| longest(vi_date(chars, i), vi_number(chars, i, rules)))
}

/// `1.234.567,5` (dot groups, decimal comma); a dot not followed by exactly
/// three digits is read as a decimal point (`3.14`).
fn vi_coef(chars: &[char], i: usize) -> Option<(Decimal, usize)> {
    let (mut int, mut p) = digit_run(chars, i, &ascii_digit);
    if int.is_empty() {
        return None;
    }
    let mut frac = String::new();
    let mut grouped = false;
    if int.len() <= 3 {
        while chars.get(p) == Some(&'.') {
            let (g, e) = digit_run(chars, p + 1, &ascii_digit);
            if g.len() != 3 {
                break;
            }
            int.push_str(&g);
            p = e;
            grouped = true;
        }
    }
    if !grouped && chars.get(p) == Some(&'.') {
        let (f, e) = digit_run(chars, p + 1, &ascii_digit);
        if !f.is_empty() {
            frac = f;
            p = e;
        }
    }
    if frac.is_empty() && chars.get(p) == Some(&',') {
        let (f, e) = digit_run(chars, p + 1, &ascii_digit);
        if !f.is_empty() {
            frac = f;
            p = e;
        }
    }
    Some((Decimal::from_parts(&int, &frac)?, p))
}

fn skip_space(chars: &[char], p: usize) -> usize {
    if chars.get(p) == Some(&' ') {
        p + 1
    } else {
        p
    }
}

fn vi_number(chars: &[char], i: usize, rules: &PatternSet) -> Option<NumericEntity> {
    let units = &rules.vi.units;
    let (coef, mut pos) = vi_coef(chars, i)?;
    let mut value = coef;
    let mut unit_word = None;
    if let Some((word, exp, end)) = unit_at(chars, skip_space(chars, pos), units, u32::MAX, true) {
        value = coef.mul_pow10(exp)?;
        unit_word = Some(word.to_string());
        pos = end;
        let mut last = exp;
        // 1 tỷ 200 triệu
        loop {
            let p1 = skip_space(chars, pos);
            if !chars.get(p1).is_some_and(|&c| c.is_ascii_digit()) {
                break;
            }
            let Some((c2, p2)) = vi_coef(chars, p1) else { break };
            let Some((_, e2, end2)) = unit_at(chars, skip_space(chars, p2), units, last, true) else {
                break;
            };
            value = value.checked_add(c2.mul_pow10(e2)?)?;
            pos = end2;
            last = e2;
        }
    }
    let mut e = entity(chars, i, pos, EntityValue::Number(value));
    e.unit_word = unit_word;
    Some(e)
}

/// The lowercased word that ends one space before `i`.
fn word_before(chars: &[char], i: usize) -> String {
    if i < 2 || chars[i - 1] != ' ' {
        return String::new();
    }
    let end = i - 1;
    let mut start = end;
    while start > 0 && is_latin_letter(chars[start - 1]) {
        start -= 1;
    }
    chars[start..end].iter().collect::<String>().to_lowercase()
}

fn vi_date(chars: &[char], i: usize) -> Option<NumericEntity> {
    let digit: DigitFn = &ascii_digit;
    let prev = word_before(chars, i);
    let (a, p) = int_at(chars, i, digit, 1, 2)?;
    let mut found: Option<(DateValue, DateStyle, usize)> = None;

    if let Some(&sep) = chars.get(p).filter(|&&c| c == '/' || c == '-') {
        if let Some((b, p2)) = int_at(chars, p + 1, digit, 1, 2) {
            if chars.get(p2) == Some(&sep) {
                if let Some((y, p3)) = int_at(chars, p2 + 1, digit, 4, 4) {
                    found = Some((DateValue::full(y, b as u8, a as u8), DateStyle::Slash, p3));
                }
            } else if prev == "ngày" && sep == '/' {
                found = Some((DateValue::month_day(b as u8, a as u8), DateStyle::Slash, p2));
            }
        }
        if found.is_none() && sep == '/' {
            if let Some((y, p2)) = int_at(chars, p + 1, digit, 4, 4) {
                found = Some((DateValue::year_month(y, a as u8), DateStyle::Slash, p2));
            }
        }
    }
    if found.is_none() && prev == "ngày" {
        if let Some(p1) = literal_at(chars, p, " tháng ") {
            if let Some((m, p2)) = int_at(chars, p1, digit, 1, 2) {
                found = match literal_at(chars, p2, " năm ").and_then(|p3| int_at(chars, p3, digit, 4, 4)) {
                    Some((y, p4)) => Some((DateValue::full(y, m as u8, a as u8), DateStyle::Words, p4)),
                    None => Some((DateValue::month_day(m as u8, a as u8), DateStyle::Words, p2)),
                };
            }
        }
    }
    if found.is_none() && prev == "tháng" {
        if let Some((y, p2)) = literal_at(chars, p, " năm ").and_then(|p1| int_at(chars, p1, digit, 4, 4)) {
            found = Some((DateValue::year_month(y, a as u8), DateStyle::Words, p2));
        }
    }
    let (date, style, end) = found?;
    if !date.is_valid() {
        return None;
    }
    let mut e = entity(chars, i, end, EntityValue::Date(date));
    e.date_style = Some(style);
    Some(e)
}
