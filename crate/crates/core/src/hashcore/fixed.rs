use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixedError {
    #[error("value {0} is not finite or out of range")]
    OutOfRange(String),
    #[error("malformed fixed-point string {0:?} (want [-]digits.dddddd)")]
    Malformed(String),
    #[error("zero denominator")]
    ZeroDenominator,
}

/// Signed decimal with exactly six fractional digits, stored as micro-units.
///
/// Every fractional quantity written into a hashed document uses this type and
/// serializes as a string such as `"-0.200000"`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed6(i64);

impl Fixed6 {
    pub const SCALE: i64 = 1_000_000;
    pub const ZERO: Fixed6 = Fixed6(0);

    pub const fn from_micros(micros: i64) -> Self {
        Fixed6(micros)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    /// Rounds half away from zero.
    pub fn from_f64(v: f64) -> Result<Self, FixedError> {
        let scaled = (v * Self::SCALE as f64).round();
        if !scaled.is_finite() || scaled.abs() >= i64::MAX as f64 {
            return Err(FixedError::OutOfRange(v.to_string()));
        }
        Ok(Fixed6(scaled as i64))
    }

    /// Exact `num / den`, rounded half away from zero.
    pub fn from_ratio(num: i64, den: i64) -> Result<Self, FixedError> {
        if den == 0 {
            return Err(FixedError::ZeroDenominator);
        }
        let n = i128::from(num) * i128::from(Self::SCALE);
        let d = i128::from(den);
        let q = n / d;
        let r = n % d;
        let q = if 2 * r.abs() >= d.abs() {
            q + if (n < 0) != (d < 0) { -1 } else { 1 }
        } else {
            q
        };
        i64::try_from(q)
            .map(Fixed6)
            .map_err(|_| FixedError::OutOfRange(format!("{num}/{den}")))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    pub fn checked_sub(self, other: Fixed6) -> Option<Fixed6> {
        self.0.checked_sub(other.0).map(Fixed6)
    }
}

impl fmt::Display for Fixed6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let scale = Self::SCALE as u64;
        write!(f, "{sign}{}.{:06}", abs / scale, abs % scale)
    }
}

impl fmt::Debug for Fixed6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed6({self})")
    }
}

impl FromStr for Fixed6 {
    type Err = FixedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || FixedError::Malformed(s.to_string());
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = body.split_once('.').ok_or_else(malformed)?;
        let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !digits(int_part) || frac_part.len() != 6 || !digits(frac_part) {
            return Err(malformed());
        }
        if int_part.len() > 1 && int_part.starts_with('0') {
            return Err(malformed());
        }
        let int: i64 = int_part.parse().map_err(|_| malformed())?;
        let frac: i64 = frac_part.parse().map_err(|_| malformed())?;
        let magnitude = int
            .checked_mul(Self::SCALE)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(malformed)?;
        if negative && magnitude == 0 {
            // "-0.000000" is never emitted; accepting it would give two spellings
            return Err(malformed());
        }
        Ok(Fixed6(if negative { -magnitude } else { magnitude }))
    }
}

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fixed6 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_six_digits() {
        assert_eq!(Fixed6::ZERO.to_string(), "0.000000");
        assert_eq!(Fixed6::from_micros(500_000).to_string(), "0.500000");
        assert_eq!(Fixed6::from_micros(-200_000).to_string(), "-0.200000");
        assert_eq!(Fixed6::from_micros(-1).to_string(), "-0.000001");
        assert_eq!(Fixed6::from_micros(12_345_678).to_string(), "12.345678");
    }

    #[test]
    fn ratio_rounds_half_away_from_zero() {
        assert_eq!(Fixed6::from_ratio(1, 3).unwrap().to_string(), "0.333333");
        assert_eq!(Fixed6::from_ratio(2, 3).unwrap().to_string(), "0.666667");
        assert_eq!(Fixed6::from_ratio(-2, 3).unwrap().to_string(), "-0.666667");
        assert_eq!(Fixed6::from_ratio(1, 2_000_000).unwrap().micros(), 1);
        assert_eq!(Fixed6::from_ratio(-1, 2_000_000).unwrap().micros(), -1);
        assert!(Fixed6::from_ratio(1, 0).is_err());
    }

    #[test]
    fn f64_conversion() {
        assert_eq!(Fixed6::from_f64(0.1).unwrap().micros(), 100_000);
        assert_eq!(
            Fixed6::from_f64(-0.0000004).unwrap().to_string(),
            "0.000000"
        );
        assert!(Fixed6::from_f64(f64::NAN).is_err());
        assert!(Fixed6::from_f64(1e300).is_err());
    }

    #[test]
    fn parse_is_strict() {
        for bad in [
            "1",
            "1.5",
            ".500000",
            "01.000000",
            "-0.000000",
            "1.0000000",
            "+1.000000",
            "1.00000a",
        ] {
            assert!(bad.parse::<Fixed6>().is_err(), "{bad}");
        }
        assert_eq!("-3.250000".parse::<Fixed6>().unwrap().micros(), -3_250_000);
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(m in any::<i64>().prop_filter("min has no abs", |m| *m != i64::MIN)) {
            let v = Fixed6::from_micros(m);
            prop_assert_eq!(v.to_string().parse::<Fixed6>().unwrap(), v);
        }
    }
}
