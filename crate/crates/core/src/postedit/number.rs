use std::cmp::Ordering;
use std::fmt;

/// A non-negative exact decimal, `mantissa / 10^scale`, kept normalized
/// (no trailing fractional zeros) so that equal values compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decimal {
    mantissa: u128,
    scale: u32,
}

fn pow10(e: u32) -> Option<u128> {
    10u128.checked_pow(e)
}

impl Decimal {
    pub const ZERO: Decimal = Decimal { mantissa: 0, scale: 0 };

    pub fn new(mantissa: u128, scale: u32) -> Self {
        let mut d = Decimal { mantissa, scale };
        while d.scale > 0 && d.mantissa.is_multiple_of(10) {
            d.mantissa /= 10;
            d.scale -= 1;
        }
        if d.mantissa == 0 {
            d.scale = 0;
        }
        d
    }

    pub fn from_int(v: u128) -> Self {
        Decimal { mantissa: v, scale: 0 }
    }

    /// From the digit strings on either side of the decimal separator.
    pub fn from_parts(int_digits: &str, frac_digits: &str) -> Option<Self> {
        let all = format!("{int_digits}{frac_digits}");
        if all.is_empty() || !all.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let mantissa: u128 = all.parse().ok()?;
        Some(Decimal::new(mantissa, frac_digits.len() as u32))
    }

    pub fn mul_pow10(self, e: u32) -> Option<Self> {
        if self.scale >= e {
            Some(Decimal::new(self.mantissa, self.scale - e))
        } else {
            let m = self.mantissa.checked_mul(pow10(e - self.scale)?)?;
            Some(Decimal::new(m, 0))
        }
    }

    pub fn div_pow10(self, e: u32) -> Self {
        Decimal::new(self.mantissa, self.scale + e)
    }

    pub fn checked_add(self, other: Self) -> Option<Self> {
        let scale = self.scale.max(other.scale);
        let a = self.mantissa.checked_mul(pow10(scale - self.scale)?)?;
        let b = other.mantissa.checked_mul(pow10(scale - other.scale)?)?;
        Some(Decimal::new(a.checked_add(b)?, scale))
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0
    }

    pub fn is_integer(&self) -> bool {
        self.scale == 0
    }

    pub fn to_u128(&self) -> Option<u128> {
        self.is_integer().then_some(self.mantissa)
    }

    /// Digits after the decimal point (0 for integers).
    pub fn frac_len(&self) -> u32 {
        self.scale
    }

    fn digits(&self) -> (String, String) {
        let s = self.mantissa.to_string();
        let scale = self.scale as usize;
        if scale == 0 {
            return (s, String::new());
        }
        let padded = format!("{s:0>width$}", width = scale + 1);
        let (i, f) = padded.split_at(padded.len() - scale);
        (i.to_string(), f.to_string())
    }

    pub fn int_digits(&self) -> String {
        self.digits().0
    }

    pub fn frac_digits(&self) -> String {
        self.digits().1
    }

    /// Number of digits in the integer part (`0` has one).
    pub fn int_len(&self) -> usize {
        self.int_digits().len()
    }

    pub fn at_least_one(&self) -> bool {
        self.int_digits() != "0"
    }

    /// Integer part grouped by `group` every three digits, fractional part
    /// after `point`.
    pub fn format_grouped(&self, group: char, point: char) -> String {
        let (int, frac) = self.digits();
        let mut out = String::new();
        for (i, c) in int.chars().enumerate() {
            if i > 0 && (int.len() - i) % 3 == 0 {
                out.push(group);
            }
            out.push(c);
        }
        if !frac.is_empty() {
            out.push(point);
            out.push_str(&frac);
        }
        out
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ai, af) = self.digits();
        let (bi, bf) = other.digits();
        ai.len().cmp(&bi.len()).then_with(|| ai.cmp(&bi)).then_with(|| {
            let w = af.len().max(bf.len());
            format!("{af:0<w$}").cmp(&format!("{bf:0<w$}"))
        })
    }
}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (i, fr) = self.digits();
        if fr.is_empty() {
            f.write_str(&i)
        } else {
            write!(f, "{i}.{fr}")
        }
    }
}

impl From<u64> for Decimal {
    fn from(v: u64) -> Self {
        Decimal::from_int(v as u128)
    }
}
