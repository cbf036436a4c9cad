//! Exact dyadic rational arithmetic.
//!
//! Support endpoints, speeds and time offsets of the moving jet strips are
//! all of the form `m * 2^e`. Keeping them in that form makes the schedule
//! certificate exact: every comparison reduces to big-integer arithmetic.

use num_bigint::BigInt;
use num_bigint::Sign;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

/// A rational of the form `mantissa * 2^exponent`, kept in canonical form
/// (odd mantissa, or zero with exponent 0).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: BigInt,
    exponent: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Dyadic {
            mantissa: BigInt::from(0),
            exponent: 0,
        }
    }

    pub fn one() -> Self {
        Dyadic::new(BigInt::from(1), 0)
    }

    pub fn new(mantissa: BigInt, exponent: i64) -> Self {
        let mut d = Dyadic { mantissa, exponent };
        d.normalize();
        d
    }

    pub fn from_int(n: i64) -> Self {
        Dyadic::new(BigInt::from(n), 0)
    }

    /// `num / 2^log2_den`
    pub fn ratio(num: i64, log2_den: u32) -> Self {
        Dyadic::new(BigInt::from(num), -(log2_den as i64))
    }

    /// 2^e for any integer e.
    pub fn pow2(e: i64) -> Self {
        Dyadic::new(BigInt::from(1), e)
    }

    fn normalize(&mut self) {
        if self.mantissa.sign() == Sign::NoSign {
            self.exponent = 0;
            return;
        }
        while (&self.mantissa % 2u8) == BigInt::from(0) {
            self.mantissa /= 2;
            self.exponent += 1;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.sign() == Sign::NoSign
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    /// Exact conversion to f64 (may lose precision for large mantissas;
    /// used only for reporting and for seeding floating-point evaluators).
    pub fn to_f64(&self) -> f64 {
        let (sign, digits) = self.mantissa.to_u64_digits();
        let mut m = 0.0f64;
        for d in digits.iter().rev() {
            m = m * 1.8446744073709552e19 + *d as f64;
        }
        if sign == Sign::Minus {
            m = -m;
        }
        m * (self.exponent as f64).exp2()
    }

    pub fn abs(&self) -> Self {
        Dyadic {
            mantissa: self.mantissa.magnitude().clone().into(),
            exponent: self.exponent,
        }
    }

    pub fn min(a: &Dyadic, b: &Dyadic) -> Dyadic {
        if a <= b {
            a.clone()
        } else {
            b.clone()
        }
    }

    pub fn max(a: &Dyadic, b: &Dyadic) -> Dyadic {
        if a >= b {
            a.clone()
        } else {
            b.clone()
        }
    }

    /// Floor of the value as a BigInt.
    pub fn floor_int(&self) -> BigInt {
        if self.exponent >= 0 {
            &self.mantissa << self.exponent as usize
        } else {
            let shift = (-self.exponent) as usize;
            // BigInt >> rounds toward negative infinity, which is floor.
            &self.mantissa >> shift
        }
    }

    /// Fractional part in [0,1).
    pub fn fract(&self) -> Dyadic {
        let fl = Dyadic::new(self.floor_int(), 0);
        self.clone() - fl
    }

    /// Largest multiple of 2^-frac_bits that is <= num/den. den must be
    /// nonzero; the result is an exact certified lower bound on the ratio.
    pub fn div_floor(num: &Dyadic, den: &Dyadic, frac_bits: u32) -> Dyadic {
        assert!(!den.is_zero(), "division by zero");
        let mut n = num.mantissa.clone();
        let mut d = den.mantissa.clone();
        if d.sign() == Sign::Minus {
            n = -n;
            d = -d;
        }
        // (num/den) * 2^bits = n * 2^(e_num - e_den + bits) / d
        let shift = num.exponent - den.exponent + frac_bits as i64;
        if shift >= 0 {
            n <<= shift as usize;
        } else {
            d <<= (-shift) as usize;
        }
        use num_integer::Integer;
        Dyadic::new(n.div_floor(&d), -(frac_bits as i64))
    }

    /// Greatest common divisor: the largest dyadic dividing both with an
    /// integer quotient.
    pub fn gcd(a: &Dyadic, b: &Dyadic) -> Dyadic {
        if a.is_zero() {
            return b.abs();
        }
        if b.is_zero() {
            return a.abs();
        }
        use num_integer::Integer;
        let e = a.exponent.min(b.exponent);
        let ma: BigInt = a.mantissa.magnitude().clone().into();
        let mb: BigInt = b.mantissa.magnitude().clone().into();
        // both mantissas odd, so the shared power of two is 2^e exactly
        Dyadic::new(ma.gcd(&mb), e)
    }

    /// Render as "m/2^q" (or plain integer when the exponent is >= 0).
    pub fn to_ratio_string(&self) -> String {
        if self.exponent >= 0 {
            format!("{}", &self.mantissa << self.exponent as usize)
        } else {
            format!("{}/2^{}", self.mantissa, -self.exponent)
        }
    }
}

/// Parse "m/2^q", "m", or "m/n" with n a power of two.
impl FromStr for Dyadic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let m: BigInt = num
                .trim()
                .parse()
                .map_err(|_| format!("bad dyadic numerator: {num}"))?;
            let den = den.trim();
            if let Some(exp) = den.strip_prefix("2^") {
                let q: i64 = exp
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad dyadic exponent: {exp}"))?;
                Ok(Dyadic::new(m, -q))
            } else {
                let d: BigInt = den
                    .parse()
                    .map_err(|_| format!("bad dyadic denominator: {den}"))?;
                let mut q = 0i64;
                let mut d2 = d.clone();
                let two = BigInt::from(2);
                while (&d2 % &two) == BigInt::from(0) && d2 > BigInt::from(1) {
                    d2 /= 2;
                    q += 1;
                }
                if d2 != BigInt::from(1) {
                    return Err(format!("denominator {d} is not a power of two"));
                }
                Ok(Dyadic::new(m, -q))
            }
        } else {
            let m: BigInt = s.parse().map_err(|_| format!("bad dyadic: {s}"))?;
            Ok(Dyadic::new(m, 0))
        }
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_ratio_string())
    }
}

impl serde::Serialize for Dyadic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_ratio_string())
    }
}

impl<'de> serde::Deserialize<'de> for Dyadic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn aligned(a: &Dyadic, b: &Dyadic) -> (BigInt, BigInt, i64) {
    let e = a.exponent.min(b.exponent);
    let ma = &a.mantissa << (a.exponent - e) as usize;
    let mb = &b.mantissa << (b.exponent - e) as usize;
    (ma, mb, e)
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        &self + &rhs
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let (ma, mb, e) = aligned(self, rhs);
        Dyadic::new(ma + mb, e)
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Dyadic) -> Dyadic {
        &self - &rhs
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &Dyadic) -> Dyadic {
        if rhs.is_zero() {
            return self.clone();
        }
        let (ma, mb, e) = aligned(self, rhs);
        Dyadic::new(ma - mb, e)
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: Dyadic) -> Dyadic {
        &self * &rhs
    }
}

impl Mul for &Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &Dyadic) -> Dyadic {
        Dyadic::new(&self.mantissa * &rhs.mantissa, self.exponent + rhs.exponent)
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic {
            mantissa: -self.mantissa,
            exponent: self.exponent,
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ma, mb, _) = aligned(self, other);
        ma.cmp(&mb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form() {
        let d = Dyadic::new(BigInt::from(12), -4);
        assert_eq!(d.mantissa(), &BigInt::from(3));
        assert_eq!(d.exponent(), -2);
        assert_eq!(d.to_f64(), 0.75);
    }

    #[test]
    fn parse_and_display() {
        let d: Dyadic = "3/2^5".parse().unwrap();
        assert_eq!(d.to_f64(), 3.0 / 32.0);
        assert_eq!(d.to_ratio_string(), "3/2^5");
        let e: Dyadic = "5/8".parse().unwrap();
        assert_eq!(e.to_f64(), 0.625);
        assert!("1/3".parse::<Dyadic>().is_err());
    }

    #[test]
    fn exact_arithmetic() {
        let a = Dyadic::ratio(1, 3); // 1/8
        let b = Dyadic::ratio(3, 2); // 3/4
        assert_eq!((&a + &b).to_f64(), 0.875);
        assert_eq!((&b - &a).to_f64(), 0.625);
        assert_eq!((&a * &b).to_f64(), 3.0 / 32.0);
        assert!(a < b);
    }

    #[test]
    fn fract_negative() {
        let d = Dyadic::ratio(-5, 2); // -5/4
        let f = d.fract();
        assert_eq!(f.to_f64(), 0.75);
        let g = Dyadic::ratio(9, 2).fract(); // 9/4 -> 1/4
        assert_eq!(g.to_f64(), 0.25);
    }
}
