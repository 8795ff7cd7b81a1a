use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AhlforsFactor, Coord, Factor, Level};
use crate::error::{Error, Result};
use crate::exact::{ceil_dyadic, rat, Dist, ExactRadius, Rational};

/// Shifted lattice `{(p + theta(q)) / q} ∩ [0, 1]` on the unit interval.
#[derive(Clone, Debug)]
pub struct RealFactor {
    default: Rational,
    levels: BTreeMap<BigUint, Rational>,
}

impl RealFactor {
    pub fn new(default: Rational, levels: BTreeMap<BigUint, Rational>) -> Self {
        RealFactor { default, levels }
    }

    /// `theta(q)` reduced to `[0, 1)`; `theta = 1` gives the same lattice as `0`.
    pub fn theta(&self, q: &BigUint) -> Rational {
        let t = self.levels.get(q).unwrap_or(&self.default);
        if t.is_one() {
            Rational::zero()
        } else {
            t.clone()
        }
    }

    fn q(level: &Level) -> Result<BigUint> {
        let q = level.index()?;
        if q.is_zero() {
            return Err(Error::domain("real lattice level must be positive"));
        }
        Ok(q)
    }

    fn p_max(q: &BigUint, theta: &Rational) -> BigInt {
        (Rational::from_integer(BigInt::from(q.clone())) - theta)
            .floor()
            .to_integer()
    }

    fn point(p: &BigInt, theta: &Rational, q: &BigUint) -> Coord {
        let qq = Rational::from_integer(BigInt::from(q.clone()));
        Coord::Real((Rational::from_integer(p.clone()) + theta) / qq)
    }

    fn value(c: &Coord) -> Result<&Rational> {
        match c {
            Coord::Real(v) => Ok(v),
            other => Err(Error::KindMismatch(format!("expected a real coordinate, got {}", other.kind()))),
        }
    }
}

impl Factor for RealFactor {
    fn level_size(&self, level: &Level) -> Result<BigUint> {
        let q = Self::q(level)?;
        let pm = Self::p_max(&q, &self.theta(&q));
        Ok((pm + BigInt::one()).to_biguint().unwrap_or_default())
    }

    fn level_points(&self, level: &Level, cap: u64) -> Result<Vec<Coord>> {
        let q = Self::q(level)?;
        let size = self.level_size(level)?;
        if size > BigUint::from(cap) {
            return Err(Error::Resource { count: size, cap });
        }
        let theta = self.theta(&q);
        let n = size.to_u64().unwrap();
        Ok((0..n).map(|p| Self::point(&BigInt::from(p), &theta, &q)).collect())
    }

    fn points_near(&self, level: &Level, center: &Coord, radius: &ExactRadius, cap: u64) -> Result<Vec<Coord>> {
        let c = Self::value(center)?;
        let q = Self::q(level)?;
        let theta = self.theta(&q);
        let r_hi = ceil_dyadic(&radius.upper_rational()?, 48);
        let qq = Rational::from_integer(BigInt::from(q.clone()));
        let lo = ((c - &r_hi) * &qq - &theta).ceil().to_integer().max(BigInt::zero());
        let hi = ((c + &r_hi) * &qq - &theta).floor().to_integer().min(Self::p_max(&q, &theta));
        if hi < lo {
            return Ok(Vec::new());
        }
        let span = (&hi - &lo + 1u32).to_biguint().unwrap();
        if span > BigUint::from(cap) {
            return Err(Error::Resource { count: span, cap });
        }
        let mut out = Vec::new();
        let mut p = lo;
        while p <= hi {
            let pt = Self::point(&p, &theta, &q);
            if self.distance(&pt, center)?.lt(radius)? {
                out.push(pt);
            }
            p += 1;
        }
        Ok(out)
    }

    fn distance(&self, a: &Coord, b: &Coord) -> Result<Dist> {
        Ok(Dist::linear((Self::value(a)? - Self::value(b)?).abs()))
    }

    fn check_member(&self, x: &Coord) -> Result<()> {
        let v = Self::value(x)?;
        if *v < Rational::zero() || *v > Rational::one() {
            return Err(Error::domain(format!("real coordinate {v} outside [0,1]")));
        }
        Ok(())
    }

    fn sample(&self, _level: &Level, rng: &mut ChaCha8Rng) -> Coord {
        const GRID: i64 = 1 << 40;
        Coord::Real(rat(rng.gen_range(0..=GRID), GRID))
    }

    fn closest_pair(&self, level: &Level, cap: u64) -> Result<Option<(Coord, Coord, Dist)>> {
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
        AhlforsFactor {
            delta: 1.0,
            c_lower: Rational::one(),
            c_upper: rat(2, 1),
            r_max: Rational::one(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{Point, System, SystemConfig, ThetaTable};

    fn sys(theta: ThetaTable) -> System {
        System::new(SystemConfig::real(1, theta)).unwrap()
    }

    #[test]
    fn homogeneous_level_includes_both_ends() {
        let s = sys(ThetaTable::homogeneous());
        let pts = s.generate_level(&Level::int(4)).unwrap();
        let vals: Vec<Rational> = pts.iter().map(|p| p.0[0].value().unwrap().clone()).collect();
        assert_eq!(vals, (0..=4).map(|p| rat(p, 4)).collect::<Vec<_>>());
    }

    #[test]
    fn shifted_level() {
        let s = sys(ThetaTable::homogeneous().with_level(5, vec![rat(2, 5)]));
        let pts = s.generate_level(&Level::int(5)).unwrap();
        assert_eq!(pts.len(), 5);
        assert_eq!(pts[0].0[0], Coord::Real(rat(2, 25)));
        assert_eq!(pts[4].0[0], Coord::Real(rat(22, 25)));
    }

    #[test]
    fn separated_at_ten() {
        let s = sys(ThetaTable::homogeneous());
        let rep = s.verify_separated(&Level::int(10)).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.worst_distance.unwrap(), Dist::linear(rat(1, 10)));
    }

    #[test]
    fn maximal_with_shift() {
        let s = sys(ThetaTable::homogeneous().with_level(5, vec![rat(2, 5)]));
        let probes: Vec<Point> = [rat(0, 1), rat(1, 2), rat(1, 1)]
            .into_iter()
            .map(|v| Point(vec![Coord::Real(v)]))
            .collect();
        assert!(s.verify_maximal(&Level::int(5), &probes).unwrap().ok);
    }

    #[test]
    fn count_at_hundred() {
        let s = sys(ThetaTable::homogeneous());
        let c = Point(vec![Coord::Real(rat(1, 2))]);
        let rep = s.count_in_ball(&Level::int(100), &c, &rat(1, 10)).unwrap();
        // Open ball: 41/100 .. 59/100.
        assert_eq!(rep.count, BigUint::from(19u32));
        assert!((rep.lower_bound - 2.5).abs() < 1e-12);
        assert!((rep.upper_bound - 80.0).abs() < 1e-9);
        assert!(rep.within_bounds);
    }

    #[test]
    fn count_needs_radius_above_spacing() {
        let s = sys(ThetaTable::homogeneous());
        let c = Point(vec![Coord::Real(rat(1, 2))]);
        assert!(matches!(
            s.count_in_ball(&Level::int(10), &c, &rat(1, 10)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rejects_points_outside_interval() {
        let s = sys(ThetaTable::homogeneous());
        let bad = vec![Point(vec![Coord::Real(rat(3, 2))])];
        assert!(s.verify_maximal(&Level::int(3), &bad).is_err());
    }
}
