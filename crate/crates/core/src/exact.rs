//! Exact arithmetic helpers: rationals, rational powers of integers, and
//! distances that may carry a root (Euclidean distances are kept squared).
//!
//! Nothing in here rounds unless the function name says so
//! (`upper_rational`, `lower_rational`, `ln`, `to_f64`).

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Bits of precision used when an irrational power has to be enclosed by rationals.
pub const ENCLOSURE_BITS: u64 = 192;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: impl Into<BigInt>) -> Rational {
    Rational::from_integer(n.into())
}

/// Parses `"p/q"`, an integer, or a plain decimal such as `"0.8"` exactly.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::validation(format!("cannot parse rational {text:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::validation(format!("zero denominator in {text:?}")));
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exp10) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    if !all.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let mut num: BigInt = all.parse().map_err(|_| bad())?;
    if neg {
        num = -num;
    }
    let scale = exp10 - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    Ok(if scale >= 0 {
        Rational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(num, num_traits::pow(ten, (-scale) as usize))
    })
}

/// Converts an `f64` through its shortest decimal representation, so `0.8` becomes `4/5`.
pub fn rational_from_f64(x: f64) -> Result<Rational> {
    if !x.is_finite() {
        return Err(Error::validation(format!("non-finite number {x}")));
    }
    parse_rational(&format!("{x}"))
}

pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Natural log of a big unsigned integer without overflowing `f64`.
pub fn ln_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn ln_rational(r: &Rational) -> f64 {
    ln_biguint(r.numer().magnitude()) - ln_biguint(r.denom().magnitude())
}

/// `f64` value of a rational, correct even when numerator and denominator overflow.
pub fn to_f64(r: &Rational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    if let Some(v) = r.to_f64() {
        if v.is_finite() && v != 0.0 {
            return v;
        }
    }
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    sign * ln_rational(&r.abs()).exp()
}

/// `x^k` for a non-negative exponent.
pub fn pow_rational(x: &Rational, k: u64) -> Rational {
    num_traits::pow(x.clone(), k as usize)
}

fn small_exponent(e: &Rational) -> Result<(i64, u64)> {
    let n = e
        .numer()
        .to_i64()
        .ok_or_else(|| Error::domain(format!("exponent {e} too large for exact comparison")))?;
    let d = e
        .denom()
        .to_u64()
        .ok_or_else(|| Error::domain(format!("exponent {e} too large for exact comparison")))?;
    if n.unsigned_abs() > 1 << 24 || d > 1 << 24 {
        return Err(Error::domain(format!("exponent {e} too large for exact comparison")));
    }
    Ok((n, d))
}

/// Smallest multiple of `2^-bits` that is `>= x`.
pub fn ceil_dyadic(x: &Rational, bits: u32) -> Rational {
    let s = Rational::from_integer(BigInt::one() << bits);
    Rational::new((x * &s).ceil().to_integer(), BigInt::one() << bits)
}

/// `base^exp` with an integer base `>= 1` and a rational exponent.
///
/// Level weights are held this way: `q^1`, `p^k`, `b^k`, and the Gaussian
/// modulus `N^(1/2)`. Powers `beta^(-tau)` stay exact for rational `tau`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BetaPower {
    pub base: BigUint,
    pub exp: Rational,
}

impl BetaPower {
    pub fn new(base: impl Into<BigUint>, exp: Rational) -> Self {
        BetaPower { base: base.into(), exp }
    }

    pub fn integer(base: impl Into<BigUint>) -> Self {
        Self::new(base, Rational::one())
    }

    pub fn one() -> Self {
        Self::new(1u32, Rational::zero())
    }

    /// `self^t`.
    pub fn pow(&self, t: &Rational) -> Self {
        BetaPower {
            base: self.base.clone(),
            exp: &self.exp * t,
        }
    }

    pub fn recip(&self) -> Self {
        BetaPower {
            base: self.base.clone(),
            exp: -self.exp.clone(),
        }
    }

    pub fn ln(&self) -> f64 {
        if self.exp.is_zero() || self.base.is_one() {
            return 0.0;
        }
        to_f64(&self.exp) * ln_biguint(&self.base)
    }

    pub fn to_f64(&self) -> f64 {
        self.ln().exp()
    }

    /// Exact value when the power is rational (integer exponent or perfect root).
    pub fn to_rational(&self) -> Option<Rational> {
        let (u, v) = small_exponent(&self.exp).ok()?;
        let root = self.base.nth_root(v as u32);
        if num_traits::pow(root.clone(), v as usize) != self.base {
            return None;
        }
        let p = num_traits::pow(root, u.unsigned_abs() as usize);
        let p = Rational::from_integer(BigInt::from(p));
        Some(if u < 0 { p.recip() } else { p })
    }

    /// Exact comparison `self` vs a non-negative rational `x`.
    pub fn cmp_rational(&self, x: &Rational) -> Result<Ordering> {
        if x.is_negative() {
            return Ok(Ordering::Greater);
        }
        if x.is_zero() {
            return Ok(Ordering::Greater);
        }
        let (u, v) = small_exponent(&self.exp)?;
        // base^(u/v) ? x  <=>  base^u ? x^v
        let xv = pow_rational(x, v);
        let bu = Rational::from_integer(BigInt::from(num_traits::pow(
            self.base.clone(),
            u.unsigned_abs() as usize,
        )));
        let lhs = if u < 0 { bu.recip() } else { bu };
        Ok(lhs.cmp(&xv))
    }

    /// Exact comparison of two powers.
    pub fn cmp_power(&self, other: &BetaPower) -> Result<Ordering> {
        if self.base == other.base && self.base > BigUint::one() {
            return Ok(self.exp.cmp(&other.exp));
        }
        let (lu, lv) = small_exponent(&self.exp)?;
        let (ru, rv) = small_exponent(&other.exp)?;
        let den = lv.lcm(&rv);
        let lu = lu * (den / lv) as i64;
        let ru = ru * (den / rv) as i64;
        // a^lu ? b^ru, moving negative powers across.
        let mut lhs = BigUint::one();
        let mut rhs = BigUint::one();
        let pow = |b: &BigUint, e: i64| num_traits::pow(b.clone(), e.unsigned_abs() as usize);
        if lu >= 0 {
            lhs *= pow(&self.base, lu);
        } else {
            rhs *= pow(&self.base, lu);
        }
        if ru >= 0 {
            rhs *= pow(&other.base, ru);
        } else {
            lhs *= pow(&other.base, ru);
        }
        Ok(lhs.cmp(&rhs))
    }

    /// Rational `r >= self`, within a relative `2^-bits` of it (exact when the power is rational).
    pub fn upper_rational(&self, bits: u64) -> Result<Rational> {
        self.enclose(bits).map(|(_, hi)| hi)
    }

    /// Rational `r <= self`, within a relative `2^-bits` of it.
    pub fn lower_rational(&self, bits: u64) -> Result<Rational> {
        self.enclose(bits).map(|(lo, _)| lo)
    }

    fn enclose(&self, bits: u64) -> Result<(Rational, Rational)> {
        if let Some(r) = self.to_rational() {
            return Ok((r.clone(), r));
        }
        let (u, v) = small_exponent(&self.exp)?;
        let x = num_traits::pow(self.base.clone(), u.unsigned_abs() as usize);
        let scaled = x << (bits * v);
        let floor = scaled.nth_root(v as u32);
        let ceil = &floor + 1u32;
        let denom = BigInt::one() << bits;
        let lo_root = Rational::new(BigInt::from(floor), denom.clone());
        let hi_root = Rational::new(BigInt::from(ceil), denom);
        Ok(if u >= 0 {
            (lo_root, hi_root)
        } else {
            (hi_root.recip(), lo_root.recip())
        })
    }

    /// `ceil(self)` for a power `>= 1`.
    pub fn ceil(&self) -> Result<BigUint> {
        let (u, v) = small_exponent(&self.exp)?;
        if u < 0 {
            return Ok(if self.base.is_zero() { BigUint::zero() } else { BigUint::one() });
        }
        let x = num_traits::pow(self.base.clone(), u as usize);
        let r = x.nth_root(v as u32);
        if num_traits::pow(r.clone(), v as usize) == x {
            Ok(r)
        } else {
            Ok(r + 1u32)
        }
    }
}

impl fmt::Display for BetaPower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp.is_integer() {
            write!(f, "{}^{}", self.base, self.exp.numer())
        } else {
            write!(f, "{}^({})", self.base, self.exp)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BetaPowerRepr {
    base: String,
    exp_num: String,
    exp_den: String,
}

impl Serialize for BetaPower {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BetaPowerRepr {
            base: self.base.to_string(),
            exp_num: self.exp.numer().to_string(),
            exp_den: self.exp.denom().to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BetaPower {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = BetaPowerRepr::deserialize(d)?;
        let base: BigUint = r.base.parse().map_err(D::Error::custom)?;
        let n: BigInt = r.exp_num.parse().map_err(D::Error::custom)?;
        let den: BigInt = r.exp_den.parse().map_err(D::Error::custom)?;
        if den.is_zero() {
            return Err(D::Error::custom("zero exponent denominator"));
        }
        Ok(BetaPower::new(base, Rational::new(n, den)))
    }
}

/// A radius `scale * base^exp`; plain rationals use the unit power.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactRadius {
    pub scale: Rational,
    pub power: BetaPower,
}

impl ExactRadius {
    pub fn power(power: BetaPower) -> Self {
        ExactRadius {
            scale: Rational::one(),
            power,
        }
    }

    pub fn rational(r: Rational) -> Self {
        ExactRadius {
            scale: r,
            power: BetaPower::one(),
        }
    }

    pub fn scaled(&self, k: &Rational) -> Self {
        ExactRadius {
            scale: &self.scale * k,
            power: self.power.clone(),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.scale.is_positive()
    }

    pub fn upper_rational(&self) -> Result<Rational> {
        Ok(&self.scale * self.power.upper_rational(ENCLOSURE_BITS)?)
    }

    pub fn lower_rational(&self) -> Result<Rational> {
        Ok(&self.scale * self.power.lower_rational(ENCLOSURE_BITS)?)
    }

    pub fn ln(&self) -> f64 {
        ln_rational(&self.scale) + self.power.ln()
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.scale) * self.power.to_f64()
    }
}

/// A non-negative distance `value^(1/root)`.
///
/// Ultrametric and real distances use `root = 1`; Euclidean distances are
/// stored squared with `root = 2` so every comparison stays rational.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dist {
    pub value: Rational,
    pub root: u32,
}

impl Dist {
    pub fn linear(value: Rational) -> Self {
        Dist { value, root: 1 }
    }

    pub fn squared(value: Rational) -> Self {
        Dist { value, root: 2 }
    }

    pub fn zero() -> Self {
        Dist::linear(Rational::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    /// `self < radius`, exactly.
    pub fn lt(&self, radius: &ExactRadius) -> Result<bool> {
        if !radius.is_positive() {
            return Ok(false);
        }
        if self.value.is_zero() {
            return Ok(true);
        }
        // value^(1/root) < s * P  <=>  value / s^root < P^root
        let lhs = &self.value / pow_rational(&radius.scale, self.root as u64);
        let p = radius.power.pow(&rat_int(self.root));
        Ok(p.cmp_rational(&lhs)? == Ordering::Greater)
    }

    /// `self < r` for a rational `r`.
    pub fn lt_rational(&self, r: &Rational) -> bool {
        if !r.is_positive() {
            return false;
        }
        self.value < pow_rational(r, self.root as u64)
    }

    /// Compares against `beta^e`: `self.cmp_power(p) == Less` means strictly closer.
    pub fn cmp_power(&self, p: &BetaPower) -> Result<Ordering> {
        let pr = p.pow(&rat_int(self.root));
        Ok(pr.cmp_rational(&self.value)?.reverse())
    }

    pub fn to_f64(&self) -> f64 {
        let v = to_f64(&self.value);
        if self.root == 1 {
            v
        } else {
            v.powf(1.0 / self.root as f64)
        }
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.root == other.root {
            return self.value.cmp(&other.value);
        }
        // a^(1/r) vs b^(1/s)  <=>  a^s vs b^r
        pow_rational(&self.value, other.root as u64)
            .cmp(&pow_rational(&other.value, self.root as u64))
    }
}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.root == 1 {
            write!(f, "{}", format_rational(&self.value))
        } else {
            write!(f, "({})^(1/{})", format_rational(&self.value), self.root)
        }
    }
}

impl Serialize for Dist {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Dist", 3)?;
        st.serialize_field("value", &format_rational(&self.value))?;
        st.serialize_field("root", &self.root)?;
        st.serialize_field("approx", &self.to_f64())?;
        st.end()
    }
}

/// p-adic valuation of a non-zero rational.
pub fn padic_valuation(x: &Rational, p: &BigUint) -> Option<i64> {
    if x.is_zero() {
        return None;
    }
    let count = |n: &BigInt| -> i64 {
        let p = BigInt::from(p.clone());
        let mut n = n.abs();
        let mut v = 0;
        loop {
            let (q, r) = n.div_rem(&p);
            if !r.is_zero() {
                return v;
            }
            n = q;
            v += 1;
        }
    };
    Some(count(x.numer()) - count(x.denom()))
}

/// Rounds to the nearest integer, ties toward +infinity.
pub fn round_half_up(x: &Rational) -> BigInt {
    (x + rat(1, 2)).floor().to_integer()
}

/// Serde adapter writing rationals as `"num/den"` strings.
pub mod rational_str {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        value_to_rational(&v).map_err(D::Error::custom)
    }

    pub(crate) fn value_to_rational(v: &serde_json::Value) -> Result<Rational> {
        match v {
            serde_json::Value::String(s) => parse_rational(s),
            serde_json::Value::Number(n) => parse_rational(&n.to_string()),
            other => Err(Error::validation(format!("expected a rational, got {other}"))),
        }
    }
}

/// Serde adapter for `Vec<Rational>`.
pub mod rational_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(format_rational).collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Rational>, D::Error> {
        use serde::de::Error as _;
        let v = Vec::<serde_json::Value>::deserialize(d)?;
        v.iter()
            .map(rational_str::value_to_rational)
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)
    }
}
