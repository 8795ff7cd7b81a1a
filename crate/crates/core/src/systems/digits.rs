use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AhlforsFactor, Coord, Factor, Level};
use crate::error::{Error, Result};
use crate::exact::{ceil_dyadic, rat, Dist, ExactRadius, Rational};

/// The missing-digit set `C(b, J)` with level-`k` points `f_w(z)`, `w ∈ J^k`.
#[derive(Clone, Debug)]
pub struct DigitFactor {
    base: u32,
    digits: Vec<u32>,
    anchor: Vec<u32>,
    z: Rational,
}

impl DigitFactor {
    pub fn new(base: u32, digits: &[u32], anchor: Option<&[u32]>) -> Result<Self> {
        if base < 3 {
            return Err(Error::validation(format!("missing-digit base must be at least 3, got {base}")));
        }
        let mut j = digits.to_vec();
        j.sort_unstable();
        j.dedup();
        if j.len() < 2 {
            return Err(Error::validation("digit set needs at least two distinct digits"));
        }
        if let Some(d) = j.iter().find(|d| **d >= base) {
            return Err(Error::validation(format!("digit {d} is not below base {base}")));
        }
        if j.len() as u32 == base {
            return Err(Error::validation("digit set must be a proper subset of the base digits"));
        }
        let anchor = anchor.map(|a| a.to_vec()).unwrap_or_else(|| vec![j[0]]);
        if anchor.is_empty() || anchor.iter().any(|d| !j.contains(d)) {
            return Err(Error::validation(format!("anchor word {anchor:?} must be a non-empty word over {j:?}")));
        }
        // z is the fixed point of f_anchor: z = A / (b^L - 1) with A the anchor read in base b.
        let a = anchor
            .iter()
            .fold(BigInt::zero(), |acc, d| acc * base + *d);
        let den = num_traits::pow(BigInt::from(base), anchor.len()) - 1;
        let z = Rational::new(a, den);
        Ok(DigitFactor {
            base,
            digits: j,
            anchor,
            z,
        })
    }

    pub fn anchor_value(&self) -> &Rational {
        &self.z
    }

    pub fn anchor_word(&self) -> &[u32] {
        &self.anchor
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn digit_set(&self) -> &[u32] {
        &self.digits
    }

    /// `dim_H C(b, J) = ln|J| / ln b`.
    pub fn gamma(&self) -> f64 {
        (self.digits.len() as f64).ln() / (self.base as f64).ln()
    }

    fn k(level: &Level) -> Result<u32> {
        let k = level.small_index()?;
        if k == 0 {
            return Err(Error::domain("missing-digit level k must be positive"));
        }
        Ok(k)
    }

    fn scale(&self, k: u32) -> BigInt {
        num_traits::pow(BigInt::from(self.base), k as usize)
    }

    /// `f_w(z) = (W + z) / b^k` with `W` the word read in base `b`.
    pub fn word_value(&self, word: &[u8]) -> Rational {
        let w = word.iter().fold(BigInt::zero(), |acc, d| acc * self.base + *d as u32);
        (Rational::from_integer(w) + &self.z) / Rational::from_integer(self.scale(word.len() as u32))
    }

    pub fn coord(&self, word: Vec<u8>) -> Coord {
        let value = self.word_value(&word);
        Coord::Word { word, value }
    }

    fn value(c: &Coord) -> Result<&Rational> {
        match c {
            Coord::Word { value, .. } => Ok(value),
            other => Err(Error::KindMismatch(format!("expected a digit-word coordinate, got {}", other.kind()))),
        }
    }

    fn hull(&self) -> (Rational, Rational) {
        let b1 = (self.base - 1) as i64;
        (
            rat(self.digits[0] as i64, b1),
            rat(*self.digits.last().unwrap() as i64, b1),
        )
    }

    /// Words of length `k` (in lexicographic order) whose prefix integers stay in the given windows.
    fn walk(&self, k: u32, window: impl Fn(usize, &BigInt) -> bool, cap: u64) -> Result<Vec<Vec<u8>>> {
        let mut out = Vec::new();
        let mut stack: Vec<(Vec<u8>, BigInt)> = vec![(Vec::new(), BigInt::zero())];
        while let Some((word, u)) = stack.pop() {
            if word.len() == k as usize {
                out.push(word);
                if out.len() as u64 > cap {
                    return Err(Error::Resource {
                        count: BigUint::from(out.len()),
                        cap,
                    });
                }
                continue;
            }
            for d in self.digits.iter().rev() {
                let next = &u * self.base + *d;
                if window(word.len() + 1, &next) {
                    let mut w = word.clone();
                    w.push(*d as u8);
                    stack.push((w, next));
                }
            }
        }
        Ok(out)
    }
}

impl Factor for DigitFactor {
    fn level_size(&self, level: &Level) -> Result<BigUint> {
        Ok(num_traits::pow(BigUint::from(self.digits.len()), Self::k(level)? as usize))
    }

    fn level_points(&self, level: &Level, cap: u64) -> Result<Vec<Coord>> {
        let k = Self::k(level)?;
        let size = self.level_size(level)?;
        if size > BigUint::from(cap) {
            return Err(Error::Resource { count: size, cap });
        }
        Ok(self
            .walk(k, |_, _| true, cap)?
            .into_iter()
            .map(|w| self.coord(w))
            .collect())
    }

    fn points_near(&self, level: &Level, center: &Coord, radius: &ExactRadius, cap: u64) -> Result<Vec<Coord>> {
        let k = Self::k(level)?;
        let c = Self::value(center)?;
        let r = ceil_dyadic(&radius.upper_rational()?, 48);
        let (cmin, cmax) = self.hull();
        let lo_edge = c - &r;
        let hi_edge = c + &r;
        // A prefix U of length m keeps [(U + cmin)/b^m, (U + cmax)/b^m], which must meet (c - r, c + r).
        let windows: Vec<(BigInt, BigInt)> = (0..=k)
            .map(|m| {
                let s = Rational::from_integer(self.scale(m));
                let lo = (&lo_edge * &s - &cmax).floor().to_integer() + 1;
                let hi = (&hi_edge * &s - &cmin).ceil().to_integer() - 1;
                (lo, hi)
            })
            .collect();
        let words = self.walk(
            k,
            |m, u| {
                let (lo, hi) = &windows[m];
                u >= lo && u <= hi
            },
            cap,
        )?;
        let mut out = Vec::new();
        for w in words {
            let p = self.coord(w);
            if self.distance(&p, center)?.lt(radius)? {
                out.push(p);
            }
        }
        Ok(out)
    }

    fn distance(&self, a: &Coord, b: &Coord) -> Result<Dist> {
        Ok(Dist::linear((Self::value(a)? - Self::value(b)?).abs()))
    }

    fn check_member(&self, x: &Coord) -> Result<()> {
        let Coord::Word { word, value } = x else {
            return Err(Error::KindMismatch(format!("expected a digit-word coordinate, got {}", x.kind())));
        };
        if let Some(d) = word.iter().find(|d| !self.digits.contains(&(**d as u32))) {
            return Err(Error::domain(format!("digit {d} not in the digit set {:?}", self.digits)));
        }
        if self.word_value(word) != *value {
            return Err(Error::domain(format!("value {value} does not match word {word:?}")));
        }
        Ok(())
    }

    fn sample(&self, level: &Level, rng: &mut ChaCha8Rng) -> Coord {
        let k = Self::k(level).unwrap_or(1) as usize;
        let len = (k + 8).max(12);
        let word = (0..len)
            .map(|_| self.digits[rng.gen_range(0..self.digits.len())] as u8)
            .collect();
        self.coord(word)
    }

    fn closest_pair(&self, level: &Level, cap: u64) -> Result<Option<(Coord, Coord, Dist)>> {
        // Lexicographic word order is value order, so neighbours carry the minimum gap.
        let pts = self.level_points(level, cap)?;
        let mut best: Option<(Coord, Coord, Dist)> = None;
        for w in pts.windows(2) {
            let d = self.distance(&w[0], &w[1])?;
            if best.as_ref().is_none_or(|b| d < b.2) {
                best = Some((w[0].clone(), w[1].clone(), d));
            }
        }
        Ok(best)
    }

    fn ahlfors(&self) -> AhlforsFactor {
        let j = self.digits.len() as i64;
        AhlforsFactor {
            delta: self.gamma(),
            c_lower: rat(1, j * j),
            c_upper: rat(3 * j, 1),
            r_max: Rational::one(),
        }
    }
}
