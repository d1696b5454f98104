//! Exact rational scalars and their textual form.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::GeometryError;

/// Exact rational number used for every coordinate and coefficient.
pub type Scalar = BigRational;

pub fn int(n: i64) -> Scalar {
    BigRational::from_integer(BigInt::from(n))
}

pub fn frac(num: i64, den: i64) -> Scalar {
    assert!(den != 0, "zero denominator");
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `"p/q"`, `"n"` or a plain decimal such as `"-0.125"`.
pub fn parse_scalar(text: &str) -> Result<Scalar, GeometryError> {
    let s = text.trim();
    let bad = || GeometryError::BadScalar(text.to_string());
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((whole, digits)) = s.split_once('.') {
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = whole.starts_with('-');
        let whole_abs = whole.trim_start_matches(['-', '+']);
        if !whole_abs.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let joined = format!("{whole_abs}{digits}");
        let mut num: BigInt = joined.parse().map_err(|_| bad())?;
        if negative {
            num = -num;
        }
        let den = num_traits::pow(BigInt::from(10), digits.len());
        return Ok(BigRational::new(num, den));
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

/// Canonical text: `"n"` for integers, reduced `"p/q"` otherwise.
pub fn format_scalar(q: &Scalar) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Rounds a float to the nearest multiple of `1/denominator`.
///
/// Used only by benchmark generators that start from transcendental
/// coefficients; geometry itself never sees a float.
pub fn round_to_denominator(x: f64, denominator: u64) -> Scalar {
    let scaled = (x * denominator as f64).round();
    BigRational::new(BigInt::from(scaled as i64), BigInt::from(denominator))
}

/// Lossy conversion for display and plotting only.
pub fn to_f64(q: &Scalar) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

pub fn abs(q: &Scalar) -> Scalar {
    q.abs()
}

pub fn max_of<'a>(a: &'a Scalar, b: &'a Scalar) -> &'a Scalar {
    if a >= b {
        a
    } else {
        b
    }
}

pub fn min_of<'a>(a: &'a Scalar, b: &'a Scalar) -> &'a Scalar {
    if a <= b {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!(parse_scalar("3/4").unwrap(), frac(3, 4));
        assert_eq!(parse_scalar("-6/8").unwrap(), frac(-3, 4));
        assert_eq!(parse_scalar("7").unwrap(), int(7));
        assert_eq!(parse_scalar("0.125").unwrap(), frac(1, 8));
        assert_eq!(parse_scalar("-1.5").unwrap(), frac(-3, 2));
        assert!(parse_scalar("1/0").is_err());
        assert!(parse_scalar("abc").is_err());
        assert!(parse_scalar("1.").is_err());
        assert!(parse_scalar("").is_err());
    }

    #[test]
    fn format_is_canonical() {
        assert_eq!(format_scalar(&frac(2, 4)), "1/2");
        assert_eq!(format_scalar(&int(-3)), "-3");
        assert_eq!(format_scalar(&frac(-1, 3)), "-1/3");
    }

    #[test]
    fn rounding_hits_grid() {
        assert_eq!(round_to_denominator(0.5, 1 << 20), frac(1, 2));
        assert_eq!(round_to_denominator(1.0, 1 << 20), int(1));
    }
}
