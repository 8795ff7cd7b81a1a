use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AhlforsFactor, Coord, Factor, Level};
use crate::error::{Error, Result};
use crate::exact::{ceil_dyadic, rat, round_half_up, BetaPower, Dist, ExactRadius, Rational};

/// `(1/q) Z[i]` reduced to the torus `[-1/2, 1/2)^2`, Euclidean distance taken mod 1.
#[derive(Clone, Copy, Debug)]
pub struct GaussianFactor;

struct Modulus {
    a: BigInt,
    b: BigInt,
    norm: BigInt,
}

impl Modulus {
    fn of(level: &Level) -> Result<Self> {
        let (a, b) = level.as_gaussian()?;
        let norm = &a * &a + &b * &b;
        if norm.is_zero() {
            return Err(Error::domain("Gaussian level must be non-zero"));
        }
        Ok(Modulus { a, b, norm })
    }

    /// `w / q` for `w = x + iy`.
    fn divide(&self, x: &BigInt, y: &BigInt) -> (Rational, Rational) {
        let re = x * &self.a + y * &self.b;
        let im = y * &self.a - x * &self.b;
        (
            Rational::new(re, self.norm.clone()),
            Rational::new(im, self.norm.clone()),
        )
    }

    /// Upper bound on `|q|`.
    fn modulus_hi(&self) -> BigInt {
        self.norm.sqrt() + 1
    }
}

fn wrap(v: &Rational) -> Rational {
    v - Rational::from_integer(round_half_up(v))
}

fn parts(c: &Coord) -> Result<(&Rational, &Rational)> {
    match c {
        Coord::Gaussian { re, im } => Ok((re, im)),
        other => Err(Error::KindMismatch(format!("expected a Gaussian coordinate, got {}", other.kind()))),
    }
}

impl GaussianFactor {
    /// Level points `w / q` with `w` in a box of half-width `reach` around `center * q`.
    /// With `within`, keeps only `|w - center * q|^2 < within`.
    fn box_points(
        &self,
        m: &Modulus,
        center: (&Rational, &Rational),
        reach: &Rational,
        within: Option<&Rational>,
        out: &mut BTreeSet<(Rational, Rational)>,
        cap: u64,
    ) -> Result<()> {
        let wre = center.0 * Rational::from_integer(m.a.clone()) - center.1 * Rational::from_integer(m.b.clone());
        let wim = center.0 * Rational::from_integer(m.b.clone()) + center.1 * Rational::from_integer(m.a.clone());
        let x0 = (&wre - reach).floor().to_integer();
        let x1 = (&wre + reach).ceil().to_integer();
        let y0 = (&wim - reach).floor().to_integer();
        let y1 = (&wim + reach).ceil().to_integer();
        let area: BigInt = (&x1 - &x0 + 1) * (&y1 - &y0 + 1);
        if area > BigInt::from(cap) {
            return Err(Error::Resource {
                count: area.to_biguint().unwrap(),
                cap,
            });
        }
        // Integer form: w - center * q = (D w - (A + iB)) / D.
        let d = wre.denom().lcm(wim.denom());
        let ca = wre.numer() * (&d / wre.denom());
        let cb = wim.numer() * (&d / wim.denom());
        let limit = within.map(|w| w * Rational::from_integer(&d * &d));
        let two = BigInt::from(2);
        let mut x = x0;
        while x <= x1 {
            let mut y = y0.clone();
            while y <= y1 {
                let re2 = &two * (&x * &m.a + &y * &m.b);
                let im2 = &two * (&y * &m.a - &x * &m.b);
                let inside = -&m.norm <= re2 && re2 < m.norm && -&m.norm <= im2 && im2 < m.norm;
                let close = match &limit {
                    None => true,
                    Some(l) => {
                        let dx = &d * &x - &ca;
                        let dy = &d * &y - &cb;
                        let s = Rational::from_integer(&dx * &dx + &dy * &dy);
                        s < *l
                    }
                };
                if inside && close {
                    out.insert(m.divide(&x, &y));
                }
                y += 1;
            }
            x += 1;
        }
        Ok(())
    }
}

impl Factor for GaussianFactor {
    fn level_size(&self, level: &Level) -> Result<BigUint> {
        Ok(Modulus::of(level)?.norm.to_biguint().unwrap())
    }

    fn level_points(&self, level: &Level, cap: u64) -> Result<Vec<Coord>> {
        let m = Modulus::of(level)?;
        let size = m.norm.to_biguint().unwrap();
        if size > BigUint::from(cap) {
            return Err(Error::Resource { count: size, cap });
        }
        // Every residue class mod q has a representative with |w| <= |q| / sqrt 2.
        let reach = Rational::from_integer(m.modulus_hi());
        let zero = Rational::zero();
        let mut set = BTreeSet::new();
        self.box_points(&m, (&zero, &zero), &reach, None, &mut set, cap.saturating_mul(8))?;
        debug_assert_eq!(BigUint::from(set.len()), size);
        Ok(set.into_iter().map(|(re, im)| Coord::Gaussian { re, im }).collect())
    }

    fn points_near(&self, level: &Level, center: &Coord, radius: &ExactRadius, cap: u64) -> Result<Vec<Coord>> {
        let (cre, cim) = parts(center)?;
        let m = Modulus::of(level)?;
        let r_hi = ceil_dyadic(&radius.upper_rational()?, 48);
        let candidates: Vec<Coord> = if r_hi > rat(1, 2) {
            self.level_points(level, cap)?
        } else {
            let reach = &r_hi * Rational::from_integer(m.modulus_hi());
            let within = &r_hi * &r_hi * Rational::from_integer(m.norm.clone());
            let mut set = BTreeSet::new();
            // Only translates whose ball can reach the fundamental square.
            let half = rat(1, 2);
            let shifts = |c: &Rational| -> Vec<Rational> {
                (-1..=1)
                    .map(|t| c + rat(t, 1))
                    .filter(|v| v.abs() - &r_hi <= half)
                    .collect()
            };
            for sre in shifts(cre) {
                for sim in shifts(cim) {
                    self.box_points(&m, (&sre, &sim), &reach, Some(&within), &mut set, cap)?;
                }
            }
            set.into_iter().map(|(re, im)| Coord::Gaussian { re, im }).collect()
        };
        let mut out = Vec::new();
        for p in candidates {
            if self.distance(&p, center)?.lt(radius)? {
                out.push(p);
            }
        }
        Ok(out)
    }

    fn distance(&self, a: &Coord, b: &Coord) -> Result<Dist> {
        let (ar, ai) = parts(a)?;
        let (br, bi) = parts(b)?;
        let dx = wrap(&(ar - br));
        let dy = wrap(&(ai - bi));
        Ok(Dist::squared(&dx * &dx + &dy * &dy))
    }

    fn check_member(&self, x: &Coord) -> Result<()> {
        let (re, im) = parts(x)?;
        for v in [re, im] {
            if v.abs() > rat(1, 2) {
                return Err(Error::domain(format!("Gaussian coordinate {v} outside [-1/2, 1/2]")));
            }
        }
        Ok(())
    }

    fn sample(&self, _level: &Level, rng: &mut ChaCha8Rng) -> Coord {
        const GRID: i64 = 1 << 40;
        let mut draw = || rat(rng.gen_range(-GRID..=GRID), 2 * GRID);
        let re = draw();
        let im = draw();
        Coord::Gaussian { re, im }
    }

    fn closest_pair(&self, level: &Level, cap: u64) -> Result<Option<(Coord, Coord, Dist)>> {
        let m = Modulus::of(level)?;
        let pts = self.level_points(level, cap)?;
        let search = ExactRadius::power(BetaPower::new(m.norm.to_biguint().unwrap(), rat(-1, 2))).scaled(&rat(3, 2));
        let mut best: Option<(Coord, Coord, Dist)> = None;
        for p in &pts {
            for q in self.points_near(level, p, &search, cap)? {
                if parts(&q)? <= parts(p)? {
                    continue;
                }
                let d = self.distance(p, &q)?;
                if best.as_ref().is_none_or(|b| d < b.2) {
                    best = Some((p.clone(), q, d));
                }
            }
        }
        if best.is_none() && pts.len() > 1 {
            return Err(Error::Structure(format!(
                "no neighbour within 3/2 |q|^-1 at level {level}: {} points",
                pts.len()
            )));
        }
        Ok(best)
    }

    fn ahlfors(&self) -> AhlforsFactor {
        AhlforsFactor {
            delta: 2.0,
            c_lower: rat(3, 1),
            c_upper: rat(4, 1),
            r_max: rat(1, 2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_domain(v: &Rational) -> bool {
        *v >= rat(-1, 2) && *v < rat(1, 2)
    }
    use crate::systems::{Point, System, SystemConfig};

    fn sys() -> System {
        System::new(SystemConfig::gaussian()).unwrap()
    }

    #[test]
    fn level_has_norm_many_points() {
        let s = sys();
        for (a, b) in [(1, 0), (1, 1), (1, 2), (3, 0), (2, 3), (-4, 7), (10, 10)] {
            let level = Level::gaussian(a, b);
            let pts = s.generate_level(&level).unwrap();
            assert_eq!(pts.len() as i64, a * a + b * b, "level {a}+{b}i");
        }
    }

    #[test]
    fn brute_force_numerators() {
        // Independent count: numerators w with w/q in the half-open square, scanned over a wide box.
        let (a, b) = (1i64, 2i64);
        let n = a * a + b * b;
        let mut count = 0;
        for x in -10i64..=10 {
            for y in -10i64..=10 {
                let re = rat(x * a + y * b, n);
                let im = rat(y * a - x * b, n);
                if in_domain(&re) && in_domain(&im) {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 5);
    }

    #[test]
    fn separation_is_inverse_modulus() {
        let s = sys();
        for (a, b) in [(1, 2), (3, 4), (5, 0), (7, 9)] {
            let rep = s.verify_separated(&Level::gaussian(a, b)).unwrap();
            assert!(rep.ok, "level {a}+{b}i");
            let d = rep.worst_distance.unwrap();
            assert_eq!(d, Dist::squared(rat(1, a * a + b * b)));
        }
    }

    #[test]
    fn torus_distance_wraps() {
        let s = sys();
        let x = Point(vec![Coord::Gaussian { re: rat(-1, 2), im: rat(0, 1) }]);
        let y = Point(vec![Coord::Gaussian { re: rat(2, 5), im: rat(0, 1) }]);
        assert_eq!(s.distance(&x, &y).unwrap(), Dist::squared(rat(1, 100)));
    }

    #[test]
    fn maximal_on_random_probes() {
        let s = sys();
        let level = Level::gaussian(3, 5);
        let probes = s.sample_probes(&level, 300, 11);
        let rep = s.verify_maximal(&level, &probes).unwrap();
        assert!(rep.ok, "{rep:?}");
    }
}
