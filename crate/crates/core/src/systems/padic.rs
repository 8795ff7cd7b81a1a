use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AhlforsFactor, Coord, Factor, Level};
use crate::error::{Error, Result};
use crate::exact::{padic_valuation, rat, BetaPower, Dist, ExactRadius, Rational};

/// `Z_p` with the level-`k` points `a / (p^k - 1)`, `1 <= a <= p^k`.
#[derive(Clone, Debug)]
pub struct PAdicFactor {
    p: u32,
    depth: Option<u32>,
}

/// First `count` digits of `x = sum d_i p^i`; `x` must have denominator prime to `p`.
pub fn padic_digits(x: &Rational, p: u32, count: usize) -> Result<Vec<u8>> {
    let pb = BigInt::from(p);
    let mut x = x.clone();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let den = x.denom().mod_floor(&pb).to_u32().unwrap();
        if den == 0 {
            return Err(Error::domain(format!("{x} is not a {p}-adic integer")));
        }
        let num = x.numer().mod_floor(&pb).to_u32().unwrap();
        let inv = (1..p).find(|i| (den as u64 * *i as u64) % p as u64 == 1).unwrap();
        let d = ((num as u64 * inv as u64) % p as u64) as u32;
        out.push(d as u8);
        x = (x - Rational::from_integer(d.into())) / Rational::from_integer(pb.clone());
    }
    Ok(out)
}

impl PAdicFactor {
    pub fn new(p: u32, depth: Option<u32>) -> Self {
        PAdicFactor { p, depth }
    }

    fn k(level: &Level) -> Result<u32> {
        let k = level.small_index()?;
        if k == 0 {
            return Err(Error::domain("p-adic level exponent k must be positive"));
        }
        Ok(k)
    }

    fn digit_depth(&self, k: u32) -> usize {
        self.depth.unwrap_or(k).max(k) as usize
    }

    fn modulus(&self, k: u32) -> BigUint {
        num_traits::pow(BigUint::from(self.p), k as usize)
    }

    fn point_from_numerator(&self, a: &BigUint, k: u32) -> Result<Coord> {
        let q = self.modulus(k);
        let den = BigInt::from(&q - 1u32);
        let value = if den.is_zero() {
            Rational::from_integer(a.clone().into())
        } else {
            Rational::new(a.clone().into(), den)
        };
        let digits = padic_digits(&value, self.p, self.digit_depth(k))?;
        Ok(Coord::PAdic { value, digits })
    }

    /// The level point congruent to `residue` modulo `p^k`.
    fn point_from_residue(&self, residue: &BigUint, k: u32) -> Result<Coord> {
        let q = self.modulus(k);
        let a = if residue.is_zero() { q.clone() } else { &q - residue };
        self.point_from_numerator(&a, k)
    }

    fn value(c: &Coord) -> Result<&Rational> {
        match c {
            Coord::PAdic { value, .. } => Ok(value),
            other => Err(Error::KindMismatch(format!("expected a p-adic coordinate, got {}", other.kind()))),
        }
    }

    fn residue(&self, x: &Rational, m: u32) -> Result<BigUint> {
        let digits = padic_digits(x, self.p, m as usize)?;
        let mut r = BigUint::zero();
        for d in digits.iter().rev() {
            r = r * self.p + *d as u32;
        }
        Ok(r)
    }
}

impl Factor for PAdicFactor {
    fn level_size(&self, level: &Level) -> Result<BigUint> {
        Ok(self.modulus(Self::k(level)?))
    }

    fn level_points(&self, level: &Level, cap: u64) -> Result<Vec<Coord>> {
        let k = Self::k(level)?;
        let q = self.modulus(k);
        if q > BigUint::from(cap) {
            return Err(Error::Resource { count: q, cap });
        }
        let n = q.to_u64().unwrap();
        (1..=n).map(|a| self.point_from_numerator(&BigUint::from(a), k)).collect()
    }

    fn points_near(&self, level: &Level, center: &Coord, radius: &ExactRadius, cap: u64) -> Result<Vec<Coord>> {
        let k = Self::k(level)?;
        let c = Self::value(center)?;
        // Open ultrametric ball: the smallest m with p^-m < r fixes the first m digits.
        let mut m = None;
        for v in 0..=k {
            let d = Dist::linear(BetaPower::new(self.p, rat(-(v as i64), 1)).to_rational().unwrap());
            if d.lt(radius)? {
                m = Some(v);
                break;
            }
        }
        match m {
            Some(m) => {
                let free = self.modulus(k - m);
                if free > BigUint::from(cap) {
                    return Err(Error::Resource { count: free, cap });
                }
                let base = self.residue(c, m)?;
                let step = self.modulus(m);
                let n = free.to_u64().unwrap();
                (0..n)
                    .map(|t| self.point_from_residue(&(&base + &step * t), k))
                    .collect()
            }
            None => {
                let pt = self.point_from_residue(&self.residue(c, k)?, k)?;
                Ok(if self.distance(&pt, center)?.lt(radius)? {
                    vec![pt]
                } else {
                    Vec::new()
                })
            }
        }
    }

    fn distance(&self, a: &Coord, b: &Coord) -> Result<Dist> {
        let diff = Self::value(a)? - Self::value(b)?;
        Ok(match padic_valuation(&diff, &BigUint::from(self.p)) {
            None => Dist::zero(),
            Some(v) => Dist::linear(BetaPower::new(self.p, rat(-v, 1)).to_rational().unwrap()),
        })
    }

    fn check_member(&self, x: &Coord) -> Result<()> {
        let Coord::PAdic { value, digits } = x else {
            return Err(Error::KindMismatch(format!("expected a p-adic coordinate, got {}", x.kind())));
        };
        let expect = padic_digits(value, self.p, digits.len())?;
        if &expect != digits {
            return Err(Error::domain(format!("digits {digits:?} do not match value {value}")));
        }
        Ok(())
    }

    fn sample(&self, level: &Level, rng: &mut ChaCha8Rng) -> Coord {
        let k = Self::k(level).unwrap_or(1);
        let len = self.digit_depth(k) + 8;
        let mut v = BigUint::zero();
        let mut digits: Vec<u8> = (0..len).map(|_| rng.gen_range(0..self.p) as u8).collect();
        for d in digits.iter().rev() {
            v = v * self.p + *d as u32;
        }
        digits.truncate(self.digit_depth(k));
        Coord::PAdic {
            value: Rational::from_integer(v.into()),
            digits,
        }
    }

    fn closest_pair(&self, level: &Level, cap: u64) -> Result<Option<(Coord, Coord, Dist)>> {
        let k = Self::k(level)? as usize;
        let mut pts = self.level_points(level, cap)?;
        // Ordering by leading digits puts the longest common prefixes next to each other.
        pts.sort_by(|a, b| match (a, b) {
            (Coord::PAdic { digits: x, .. }, Coord::PAdic { digits: y, .. }) => x[..k].cmp(&y[..k]),
            _ => std::cmp::Ordering::Equal,
        });
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
        AhlforsFactor {
            delta: 1.0,
            c_lower: rat(1, self.p as i64),
            c_upper: Rational::one(),
            r_max: Rational::one(),
        }
    }

    fn ultrametric(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{Point, System, SystemConfig};

    fn sys(p: u32) -> System {
        System::new(SystemConfig::padic(p, 1)).unwrap()
    }

    fn pt(v: Rational, p: u32, k: usize) -> Point {
        let digits = padic_digits(&v, p, k).unwrap();
        Point(vec![Coord::PAdic { value: v, digits }])
    }

    #[test]
    fn digits_of_simple_values() {
        // -1 = sum (p-1) p^i.
        assert_eq!(padic_digits(&rat(-1, 1), 3, 4).unwrap(), vec![2, 2, 2, 2]);
        assert_eq!(padic_digits(&rat(7, 1), 2, 4).unwrap(), vec![1, 1, 1, 0]);
        // 1/8 = -1/(1-9) digits repeat (2,0)? 1/8 * (-8) = -1, so check by reconstruction.
        let d = padic_digits(&rat(1, 8), 3, 6).unwrap();
        let v: i64 = d.iter().rev().fold(0, |acc, x| acc * 3 + *x as i64);
        assert_eq!((v * 8).rem_euclid(729), 1);
        assert!(padic_digits(&rat(1, 3), 3, 2).is_err());
    }

    #[test]
    fn level_has_p_to_the_k_points() {
        let s = sys(3);
        let pts = s.generate_level(&Level::int(2)).unwrap();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0].0[0].value().unwrap(), &rat(1, 8));
        assert_eq!(pts[8].0[0].value().unwrap(), &rat(9, 8));
    }

    #[test]
    fn distance_from_first_differing_digit() {
        let s = sys(3);
        let d = s.distance(&pt(rat(1, 8), 3, 2), &pt(rat(2, 8), 3, 2)).unwrap();
        assert_eq!(d, Dist::linear(rat(1, 1)));
        let d = s.distance(&pt(rat(1, 8), 3, 2), &pt(rat(4, 8), 3, 2)).unwrap();
        assert_eq!(d, Dist::linear(rat(1, 3)));
    }

    #[test]
    fn separation_is_p_to_one_minus_k() {
        let s = sys(3);
        let rep = s.verify_separated(&Level::int(2)).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.worst_distance.unwrap(), Dist::linear(rat(1, 3)));
    }

    #[test]
    fn residues_cover_every_prefix_once() {
        let s = sys(2);
        for k in 1..=6u32 {
            let pts = s.generate_level(&Level::int(k as u64)).unwrap();
            let mut prefixes: Vec<Vec<u8>> = pts
                .iter()
                .map(|p| match &p.0[0] {
                    Coord::PAdic { digits, .. } => digits[..k as usize].to_vec(),
                    _ => unreachable!(),
                })
                .collect();
            prefixes.sort();
            prefixes.dedup();
            assert_eq!(prefixes.len(), 1 << k);
        }
    }

    #[test]
    fn nearest_point_is_at_most_p_to_minus_k() {
        let s = sys(2);
        let level = Level::int(3);
        let probes = s.sample_probes(&level, 100, 7);
        let rep = s.verify_maximal(&level, &probes).unwrap();
        assert!(rep.ok_closed);
    }

    #[test]
    fn open_ball_count() {
        let s = sys(2);
        let c = pt(rat(0, 1), 2, 4);
        // d < 1/4 means agreeing in the first three digits.
        let rep = s.count_in_ball(&Level::int(4), &c, &rat(1, 4)).unwrap();
        assert_eq!(rep.count, BigUint::from(2u32));
        let rep = s.count_in_ball(&Level::int(4), &c, &rat(1, 3)).unwrap();
        assert_eq!(rep.count, BigUint::from(4u32));
        assert!(rep.within_bounds);
    }
}
