//! The four concrete abstract-rational systems and their exact verifiers.
//!
//! A system is a product of `n` identical factor spaces. Each factor knows
//! how to enumerate its level sets, find the level points inside a ball,
//! measure distances exactly and draw probe points from the ambient space.
//! The product uses the max metric, so most product questions reduce to
//! per-factor questions.

pub mod digits;
mod gaussian;
mod padic;
mod real;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact::{self, format_rational, rat, BetaPower, Dist, ExactRadius, Rational};

pub use digits::DigitFactor;
pub use gaussian::GaussianFactor;
pub use padic::PAdicFactor;
pub use real::RealFactor;

pub const DEFAULT_CAP: u64 = 10_000_000;

/// Index of a level: a positive integer (possibly given as a power) or a Gaussian integer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    Int(BigUint),
    /// `base^exp`, kept symbolic so doubly exponential sequences stay cheap.
    Pow { base: BigUint, exp: BigUint },
    Gaussian { re: BigInt, im: BigInt },
}

impl Level {
    pub fn int(n: u64) -> Self {
        Level::Int(BigUint::from(n))
    }

    pub fn gaussian(re: i64, im: i64) -> Self {
        Level::Gaussian {
            re: BigInt::from(re),
            im: BigInt::from(im),
        }
    }

    /// The integer value of the level; powers are materialised up to 2^16 bits.
    pub fn index(&self) -> Result<BigUint> {
        match self {
            Level::Int(n) => Ok(n.clone()),
            Level::Pow { base, exp } => {
                let e = exp
                    .to_u64()
                    .filter(|e| (*e as f64) * (base.bits() as f64) <= 65536.0)
                    .ok_or_else(|| Error::domain(format!("level {self} too large to materialise")))?;
                Ok(num_traits::pow(base.clone(), e as usize))
            }
            Level::Gaussian { .. } => Err(Error::domain(format!(
                "level {self} is a Gaussian integer, expected a positive integer"
            ))),
        }
    }

    /// Index as a small integer (digit counts, p-adic exponents).
    pub fn small_index(&self) -> Result<u32> {
        self.index()?
            .to_u32()
            .filter(|k| *k <= 1 << 20)
            .ok_or_else(|| Error::domain(format!("level {self} too large for enumeration")))
    }

    /// The level as a Gaussian integer; plain integers map to the real axis.
    pub fn as_gaussian(&self) -> Result<(BigInt, BigInt)> {
        match self {
            Level::Gaussian { re, im } => Ok((re.clone(), im.clone())),
            other => Ok((BigInt::from(other.index()?), BigInt::zero())),
        }
    }

    /// Exponent form `(base, exp)` with `value = base^exp`.
    pub fn as_power(&self) -> Result<(BigUint, BigUint)> {
        match self {
            Level::Int(n) => Ok((n.clone(), BigUint::one())),
            Level::Pow { base, exp } => Ok((base.clone(), exp.clone())),
            Level::Gaussian { .. } => Err(Error::domain(format!("level {self} is not an integer"))),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Int(n) => write!(f, "{n}"),
            Level::Pow { base, exp } => write!(f, "{base}^{exp}"),
            Level::Gaussian { re, im } => write!(f, "{re}{}{}i", if im.sign() == num_bigint::Sign::Minus { "" } else { "+" }, im),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Level::Int(n) => s.serialize_str(&n.to_string()),
            Level::Pow { base, exp } => {
                let mut m = BTreeMap::new();
                m.insert("base", base.to_string());
                m.insert("exp", exp.to_string());
                m.serialize(s)
            }
            Level::Gaussian { re, im } => {
                let mut m = BTreeMap::new();
                m.insert("re", re.to_string());
                m.insert("im", im.to_string());
                m.serialize(s)
            }
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        level_from_json(&v).map_err(D::Error::custom)
    }
}

fn json_bigint(v: &serde_json::Value) -> Result<BigInt> {
    match v {
        serde_json::Value::Number(n) if n.is_i64() || n.is_u64() => Ok(n.to_string().parse().unwrap()),
        serde_json::Value::String(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("bad integer {s:?}"))),
        other => Err(Error::validation(format!("expected an integer, got {other}"))),
    }
}

fn level_from_json(v: &serde_json::Value) -> Result<Level> {
    let non_neg = |x: BigInt| {
        x.to_biguint()
            .ok_or_else(|| Error::validation(format!("level must be non-negative, got {x}")))
    };
    match v {
        serde_json::Value::Object(m) if m.contains_key("re") || m.contains_key("im") => {
            let get = |k: &str| m.get(k).map(json_bigint).unwrap_or(Ok(BigInt::zero()));
            Ok(Level::Gaussian {
                re: get("re")?,
                im: get("im")?,
            })
        }
        serde_json::Value::Object(m) => {
            let base = m.get("base").ok_or_else(|| Error::validation("power level needs \"base\""))?;
            let exp = m.get("exp").ok_or_else(|| Error::validation("power level needs \"exp\""))?;
            Ok(Level::Pow {
                base: non_neg(json_bigint(base)?)?,
                exp: non_neg(json_bigint(exp)?)?,
            })
        }
        other => Ok(Level::Int(non_neg(json_bigint(other)?)?)),
    }
}

/// One coordinate of a point, in the representation of its factor space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Coord {
    Real(Rational),
    /// A p-adic integer given by a rational with denominator prime to `p`,
    /// plus its leading digits in the expansion `x = sum d_i p^i`.
    PAdic { value: Rational, digits: Vec<u8> },
    /// A point of the unit torus `[-1/2, 1/2)^2`.
    Gaussian { re: Rational, im: Rational },
    /// `f_word(z)` for a finite word over the digit set.
    Word { word: Vec<u8>, value: Rational },
}

impl Coord {
    fn kind(&self) -> &'static str {
        match self {
            Coord::Real(_) => "real",
            Coord::PAdic { .. } => "padic",
            Coord::Gaussian { .. } => "gaussian",
            Coord::Word { .. } => "word",
        }
    }

    /// The exact rational value for one-dimensional coordinates.
    pub fn value(&self) -> Option<&Rational> {
        match self {
            Coord::Real(v) | Coord::PAdic { value: v, .. } | Coord::Word { value: v, .. } => Some(v),
            Coord::Gaussian { .. } => None,
        }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coord::Real(v) | Coord::PAdic { value: v, .. } => write!(f, "{}", format_rational(v)),
            Coord::Gaussian { re, im } => write!(f, "({}, {})", format_rational(re), format_rational(im)),
            Coord::Word { word, .. } => {
                let s: Vec<String> = word.iter().map(|d| d.to_string()).collect();
                write!(f, "[{}]", s.join(","))
            }
        }
    }
}

impl Serialize for Coord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        match self {
            Coord::Real(v) => m.serialize_entry("real", &format_rational(v))?,
            Coord::PAdic { value, digits } => {
                m.serialize_entry("padic", &format_rational(value))?;
                m.serialize_entry("digits", digits)?;
            }
            Coord::Gaussian { re, im } => {
                m.serialize_entry("re", &format_rational(re))?;
                m.serialize_entry("im", &format_rational(im))?;
            }
            Coord::Word { word, value } => {
                m.serialize_entry("word", word)?;
                m.serialize_entry("value", &format_rational(value))?;
            }
        }
        m.end()
    }
}

/// A point of the product space: one coordinate per factor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Point(pub Vec<Coord>);

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join("; "))
    }
}

/// Ahlfors regularity data for one factor: `c_lower r^delta <= mu(B(x,r)) <= c_upper r^delta` for `r < r_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AhlforsFactor {
    pub delta: f64,
    #[serde(with = "exact::rational_str")]
    pub c_lower: Rational,
    #[serde(with = "exact::rational_str")]
    pub c_upper: Rational,
    #[serde(with = "exact::rational_str")]
    pub r_max: Rational,
}

impl AhlforsFactor {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::validation(format!("Ahlfors exponent must be positive, got {}", self.delta)));
        }
        if self.c_lower <= Rational::zero() || self.c_lower > self.c_upper {
            return Err(Error::validation(format!(
                "Ahlfors constants need 0 < c_lower <= c_upper, got {} and {}",
                self.c_lower, self.c_upper
            )));
        }
        if self.r_max <= Rational::zero() {
            return Err(Error::validation("Ahlfors radius bound must be positive"));
        }
        Ok(())
    }

    /// Counting bracket for level points in a ball of radius `r`, given `ln(r * beta)`.
    pub fn count_bracket(&self, ln_r_beta: f64) -> (f64, f64) {
        let ratio = exact::to_f64(&self.c_lower) / exact::to_f64(&self.c_upper);
        let scale = (self.delta * ln_r_beta).exp();
        let lower = ratio * 2f64.powf(-self.delta) * scale;
        let upper = 2f64.powf(self.delta + 1.0) * scale / ratio;
        (lower, upper)
    }
}

/// Per-level inhomogeneity for the real lattice: `theta(q)` with a default for unlisted levels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaTable {
    #[serde(default, with = "exact::rational_vec")]
    pub default: Vec<Rational>,
    #[serde(default)]
    pub levels: BTreeMap<String, ThetaEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaEntry(#[serde(with = "exact::rational_vec")] pub Vec<Rational>);

impl ThetaTable {
    pub fn homogeneous() -> Self {
        ThetaTable::default()
    }

    pub fn constant(theta: Vec<Rational>) -> Self {
        ThetaTable {
            default: theta,
            levels: BTreeMap::new(),
        }
    }

    pub fn with_level(mut self, q: u64, theta: Vec<Rational>) -> Self {
        self.levels.insert(q.to_string(), ThetaEntry(theta));
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        let check = |v: &Vec<Rational>, what: &str| -> Result<()> {
            if v.len() != n {
                return Err(Error::validation(format!("theta {what} has {} entries, expected {n}", v.len())));
            }
            for t in v {
                if *t < Rational::zero() || *t > Rational::one() {
                    return Err(Error::validation(format!("theta {what} value {t} outside [0,1]")));
                }
            }
            Ok(())
        };
        if !self.default.is_empty() {
            check(&self.default, "default")?;
        }
        for (k, v) in &self.levels {
            k.parse::<BigUint>()
                .map_err(|_| Error::validation(format!("theta level key {k:?} is not a positive integer")))?;
            check(&v.0, &format!("at level {k}"))?;
        }
        Ok(())
    }

    fn axis(&self, axis: usize) -> (Rational, BTreeMap<BigUint, Rational>) {
        let default = self.default.get(axis).cloned().unwrap_or_else(Rational::zero);
        let levels = self
            .levels
            .iter()
            .filter_map(|(k, v)| Some((k.parse().ok()?, v.0.get(axis)?.clone())))
            .collect();
        (default, levels)
    }
}

/// Which space, with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    RealLattice {
        #[serde(default)]
        theta: ThetaTable,
    },
    #[serde(rename = "padic")]
    PAdic {
        prime: u32,
        /// Digit truncation depth `K`; defaults to the level exponent.
        #[serde(default)]
        depth: Option<u32>,
    },
    Gaussian,
    MissingDigit {
        base: u32,
        digits: Vec<u32>,
        /// Periodic word whose repetition is the anchor `z`; defaults to `[min J]`.
        #[serde(default)]
        anchor: Option<Vec<u32>>,
    },
}

fn default_n() -> usize {
    1
}

fn default_cap() -> u64 {
    DEFAULT_CAP
}

/// Serializable description of a system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    #[serde(flatten)]
    pub kind: SystemKind,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Overrides the built-in Ahlfors constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<AhlforsFactor>>,
    #[serde(default = "default_cap")]
    pub cap: u64,
}

impl SystemConfig {
    pub fn new(kind: SystemKind, n: usize) -> Self {
        SystemConfig {
            kind,
            n,
            factors: None,
            cap: DEFAULT_CAP,
        }
    }

    pub fn real(n: usize, theta: ThetaTable) -> Self {
        Self::new(SystemKind::RealLattice { theta }, n)
    }

    pub fn padic(prime: u32, n: usize) -> Self {
        Self::new(SystemKind::PAdic { prime, depth: None }, n)
    }

    pub fn gaussian() -> Self {
        Self::new(SystemKind::Gaussian, 1)
    }

    pub fn missing_digit(base: u32, digits: &[u32]) -> Self {
        Self::new(
            SystemKind::MissingDigit {
                base,
                digits: digits.to_vec(),
                anchor: None,
            },
            1,
        )
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SystemKind::RealLattice { .. } => "real_lattice",
            SystemKind::PAdic { .. } => "padic",
            SystemKind::Gaussian => "gaussian",
            SystemKind::MissingDigit { .. } => "missing_digit",
        }
    }
}

/// Exact weight of one level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelWeight {
    pub level: Level,
    pub beta: BetaPower,
    pub log_beta: f64,
}

/// What every factor space provides. Internal extension seam for new spaces.
pub trait Factor: Send + Sync {
    fn level_size(&self, level: &Level) -> Result<BigUint>;
    /// All points of the level, enumerated in a canonical order.
    fn level_points(&self, level: &Level, cap: u64) -> Result<Vec<Coord>>;
    /// Level points `p` with `d(p, center) < radius`.
    fn points_near(&self, level: &Level, center: &Coord, radius: &ExactRadius, cap: u64) -> Result<Vec<Coord>>;
    fn distance(&self, a: &Coord, b: &Coord) -> Result<Dist>;
    /// Rejects coordinates that do not belong to the space.
    fn check_member(&self, x: &Coord) -> Result<()>;
    /// Random point of the space, fine enough to probe the given level.
    fn sample(&self, level: &Level, rng: &mut ChaCha8Rng) -> Coord;
    /// Closest pair of the level, checked exactly.
    fn closest_pair(&self, level: &Level, cap: u64) -> Result<Option<(Coord, Coord, Dist)>>;
    fn ahlfors(&self) -> AhlforsFactor;
    fn ultrametric(&self) -> bool {
        false
    }
}

/// A validated system ready for computation.
pub struct System {
    pub config: SystemConfig,
    factors: Vec<Box<dyn Factor>>,
    ahlfors: Vec<AhlforsFactor>,
}

impl fmt::Debug for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("System").field("config", &self.config).finish()
    }
}

fn is_prime(p: u32) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

impl System {
    pub fn new(config: SystemConfig) -> Result<Self> {
        let n = config.n;
        if n == 0 {
            return Err(Error::validation("system needs at least one factor"));
        }
        let mut factors: Vec<Box<dyn Factor>> = Vec::with_capacity(n);
        match &config.kind {
            SystemKind::RealLattice { theta } => {
                theta.validate(n)?;
                for axis in 0..n {
                    let (default, levels) = theta.axis(axis);
                    factors.push(Box::new(RealFactor::new(default, levels)));
                }
            }
            SystemKind::PAdic { prime, depth } => {
                if !is_prime(*prime) {
                    return Err(Error::validation(format!("p = {prime} is not prime")));
                }
                if *prime > 255 {
                    return Err(Error::validation("primes above 255 are not supported"));
                }
                for _ in 0..n {
                    factors.push(Box::new(PAdicFactor::new(*prime, *depth)));
                }
            }
            SystemKind::Gaussian => {
                for _ in 0..n {
                    factors.push(Box::new(GaussianFactor));
                }
            }
            SystemKind::MissingDigit { base, digits, anchor } => {
                let f = DigitFactor::new(*base, digits, anchor.as_deref())?;
                for _ in 0..n {
                    factors.push(Box::new(f.clone()));
                }
            }
        }
        let ahlfors = match &config.factors {
            Some(fs) => {
                if fs.len() != n {
                    return Err(Error::validation(format!(
                        "{} Ahlfors factors given for n = {n}",
                        fs.len()
                    )));
                }
                fs.clone()
            }
            None => factors.iter().map(|f| f.ahlfors()).collect(),
        };
        for a in &ahlfors {
            a.validate()?;
        }
        Ok(System {
            config,
            factors,
            ahlfors,
        })
    }

    pub fn n(&self) -> usize {
        self.factors.len()
    }

    pub fn cap(&self) -> u64 {
        self.config.cap
    }

    pub fn factor(&self, axis: usize) -> &dyn Factor {
        self.factors[axis].as_ref()
    }

    pub fn ahlfors(&self) -> &[AhlforsFactor] {
        &self.ahlfors
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.ahlfors.iter().map(|a| a.delta).collect()
    }

    pub fn ultrametric(&self) -> bool {
        self.factors.iter().all(|f| f.ultrametric())
    }

    /// The level weight `beta(q)`.
    pub fn beta(&self, level: &Level) -> Result<LevelWeight> {
        let beta = match &self.config.kind {
            SystemKind::RealLattice { .. } => {
                let (base, exp) = level.as_power()?;
                if base.is_zero() {
                    return Err(Error::domain("real lattice level must be positive"));
                }
                BetaPower::new(base, Rational::from_integer(exp.into()))
            }
            SystemKind::PAdic { prime, .. } => {
                let k = level.index()?;
                if k.is_zero() {
                    return Err(Error::domain("p-adic level exponent k must be positive"));
                }
                BetaPower::new(*prime, Rational::from_integer(k.into()))
            }
            SystemKind::Gaussian => {
                let (re, im) = level.as_gaussian()?;
                let norm = &re * &re + &im * &im;
                if norm.is_zero() {
                    return Err(Error::domain("Gaussian level must be non-zero"));
                }
                BetaPower::new(norm.to_biguint().unwrap(), rat(1, 2))
            }
            SystemKind::MissingDigit { base, .. } => {
                let k = level.index()?;
                if k.is_zero() {
                    return Err(Error::domain("missing-digit level k must be positive"));
                }
                BetaPower::new(*base, Rational::from_integer(k.into()))
            }
        };
        let log_beta = beta.ln();
        Ok(LevelWeight {
            level: level.clone(),
            beta,
            log_beta,
        })
    }

    /// Number of points in `P(q)`.
    pub fn level_size(&self, level: &Level) -> Result<BigUint> {
        let mut total = BigUint::one();
        for f in &self.factors {
            total *= f.level_size(level)?;
        }
        Ok(total)
    }

    fn check_cap(&self, count: &BigUint) -> Result<()> {
        if *count > BigUint::from(self.cap()) {
            return Err(Error::Resource {
                count: count.clone(),
                cap: self.cap(),
            });
        }
        Ok(())
    }

    /// All of `P(q)`: the Cartesian product of the per-factor level sets.
    pub fn generate_level(&self, level: &Level) -> Result<Vec<Point>> {
        self.beta(level)?;
        self.check_cap(&self.level_size(level)?)?;
        let per_factor: Vec<Vec<Coord>> = self
            .factors
            .iter()
            .map(|f| f.level_points(level, self.cap()))
            .collect::<Result<_>>()?;
        Ok(cartesian(&per_factor))
    }

    pub fn check_member(&self, x: &Point) -> Result<()> {
        if x.0.len() != self.n() {
            return Err(Error::KindMismatch(format!(
                "point has {} coordinates, system has {} factors",
                x.0.len(),
                self.n()
            )));
        }
        for (f, c) in self.factors.iter().zip(&x.0) {
            f.check_member(c)?;
        }
        Ok(())
    }

    /// Max-metric distance.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<Dist> {
        if x.0.len() != self.n() || y.0.len() != self.n() {
            return Err(Error::KindMismatch("points do not match the number of factors".into()));
        }
        let mut best = Dist::zero();
        for ((f, a), b) in self.factors.iter().zip(&x.0).zip(&y.0) {
            let d = f.distance(a, b)?;
            if d > best {
                best = d;
            }
        }
        Ok(best)
    }

    /// Exact separation check at one level.
    pub fn verify_separated(&self, level: &Level) -> Result<SeparationReport> {
        let weight = self.beta(level)?;
        let size = self.level_size(level)?;
        self.check_cap(&size)?;
        let bound = weight.beta.recip();
        // With the max metric the closest product pair differs in one factor only.
        let mut worst: Option<(usize, Coord, Coord, Dist)> = None;
        for (axis, f) in self.factors.iter().enumerate() {
            if let Some((a, b, d)) = f.closest_pair(level, self.cap())? {
                if worst.as_ref().is_none_or(|w| d < w.3) {
                    worst = Some((axis, a, b, d));
                }
            }
        }
        let (ok, worst_pair, worst_distance) = match worst {
            None => (true, None, None),
            Some((axis, a, b, d)) => {
                let ok = d.cmp_power(&bound)? != Ordering::Less;
                let base: Vec<Coord> = self
                    .factors
                    .iter()
                    .map(|f| f.level_points(level, self.cap()).map(|mut v| v.swap_remove(0)))
                    .collect::<Result<_>>()?;
                let mut x = base.clone();
                let mut y = base;
                x[axis] = a;
                y[axis] = b;
                (ok, Some((Point(x), Point(y))), Some(d))
            }
        };
        Ok(SeparationReport {
            level: level.clone(),
            size,
            bound,
            ok,
            worst_pair,
            worst_distance,
        })
    }

    /// Pairwise separation check over the whole product; quadratic, for small levels.
    pub fn verify_separated_pairwise(&self, level: &Level) -> Result<Option<Dist>> {
        let pts = self.generate_level(level)?;
        let mut best: Option<Dist> = None;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d = self.distance(&pts[i], &pts[j])?;
                if best.as_ref().is_none_or(|b| d < *b) {
                    best = Some(d);
                }
            }
        }
        Ok(best)
    }

    /// Random probes drawn from the ambient space, seeded.
    pub fn sample_probes(&self, level: &Level, count: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| Point(self.factors.iter().map(|f| f.sample(level, &mut rng)).collect()))
            .collect()
    }

    /// Distance from `x` to the nearest level point, if one lies within `4 / beta`.
    pub fn nearest_distance(&self, level: &Level, x: &Point) -> Result<Option<Dist>> {
        let weight = self.beta(level)?;
        let spacing = ExactRadius::power(weight.beta.recip());
        let narrow = spacing.scaled(&rat(3, 2));
        let wide = spacing.scaled(&rat(4, 1));
        let mut worst = Dist::zero();
        for (f, c) in self.factors.iter().zip(&x.0) {
            let mut near = f.points_near(level, c, &narrow, self.cap())?;
            if near.is_empty() {
                near = f.points_near(level, c, &wide, self.cap())?;
            }
            let mut best: Option<Dist> = None;
            for p in &near {
                let d = f.distance(p, c)?;
                if best.as_ref().is_none_or(|b| d < *b) {
                    best = Some(d);
                }
            }
            match best {
                None => return Ok(None),
                Some(d) if d > worst => worst = d,
                Some(_) => {}
            }
        }
        Ok(Some(worst))
    }

    /// Checks that every probe lies strictly within `1/beta` of some level point.
    pub fn verify_maximal(&self, level: &Level, probes: &[Point]) -> Result<MaximalityReport> {
        let weight = self.beta(level)?;
        let bound = weight.beta.recip();
        for p in probes {
            self.check_member(p)?;
        }
        let gaps: Vec<Option<Dist>> = probes
            .par_iter()
            .map(|p| self.nearest_distance(level, p))
            .collect::<Result<_>>()?;
        let mut failures = 0;
        let mut failures_closed = 0;
        let mut worst: Option<(usize, Option<Dist>)> = None;
        for (i, g) in gaps.iter().enumerate() {
            let (strict, closed) = match g {
                None => (false, false),
                Some(d) => {
                    let c = d.cmp_power(&bound)?;
                    (c == Ordering::Less, c != Ordering::Greater)
                }
            };
            if !strict {
                failures += 1;
            }
            if !closed {
                failures_closed += 1;
            }
            let worse = match (&worst, g) {
                (None, _) => true,
                (Some((_, None)), _) => false,
                (Some(_), None) => true,
                (Some((_, Some(w))), Some(d)) => d > w,
            };
            if worse {
                worst = Some((i, g.clone()));
            }
        }
        Ok(MaximalityReport {
            level: level.clone(),
            bound,
            probes: probes.len(),
            ok: failures == 0,
            failures,
            ok_closed: failures_closed == 0,
            worst_probe: worst.as_ref().map(|(i, _)| probes[*i].clone()),
            worst_gap: worst.and_then(|(_, g)| g),
        })
    }

    /// Level points in the ball `B(center, radius)`, with the per-factor counting bracket.
    pub fn count_in_ball(&self, level: &Level, center: &Point, radius: &Rational) -> Result<CountReport> {
        let weight = self.beta(level)?;
        self.check_member(center)?;
        if weight.beta.recip().cmp_rational(radius)? != Ordering::Less {
            return Err(Error::domain(format!(
                "counting bracket needs r > 1/beta = {}, got r = {}",
                weight.beta.recip(),
                format_rational(radius)
            )));
        }
        let ln_r_beta = exact::ln_rational(radius) + weight.log_beta;
        let r = ExactRadius::rational(radius.clone());
        let mut per_factor = Vec::with_capacity(self.n());
        for ((f, c), a) in self.factors.iter().zip(&center.0).zip(&self.ahlfors) {
            let count = f.points_near(level, c, &r, self.cap())?.len() as u64;
            let (lower, upper) = a.count_bracket(ln_r_beta);
            let slack = 1e-9;
            per_factor.push(FactorCount {
                count,
                lower_bound: lower,
                upper_bound: upper,
                within_bounds: count as f64 >= lower * (1.0 - slack) && count as f64 <= upper * (1.0 + slack),
            });
        }
        let count = per_factor.iter().fold(BigUint::one(), |acc, f| acc * f.count);
        let lower_bound = per_factor.iter().map(|f| f.lower_bound).product();
        let upper_bound = per_factor.iter().map(|f| f.upper_bound).product();
        Ok(CountReport {
            within_bounds: per_factor.iter().all(|f| f.within_bounds),
            count,
            lower_bound,
            upper_bound,
            per_factor,
        })
    }
}

/// Cartesian product of coordinate lists, first factor varying slowest.
pub fn cartesian(per_factor: &[Vec<Coord>]) -> Vec<Point> {
    let mut out: Vec<Vec<Coord>> = vec![Vec::new()];
    for coords in per_factor {
        let mut next = Vec::with_capacity(out.len() * coords.len());
        for prefix in &out {
            for c in coords {
                let mut p = prefix.clone();
                p.push(c.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out.into_iter().map(Point).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub level: Level,
    #[serde(serialize_with = "ser_biguint")]
    pub size: BigUint,
    /// `beta(q)^-1`.
    pub bound: BetaPower,
    pub ok: bool,
    pub worst_pair: Option<(Point, Point)>,
    pub worst_distance: Option<Dist>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MaximalityReport {
    pub level: Level,
    pub bound: BetaPower,
    pub probes: usize,
    /// Every probe strictly within `1/beta`.
    pub ok: bool,
    pub failures: usize,
    /// Every probe within `1/beta`, ties allowed.
    pub ok_closed: bool,
    pub worst_probe: Option<Point>,
    /// Nearest-point distance of the worst probe; `None` if nothing lies within `4/beta`.
    pub worst_gap: Option<Dist>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorCount {
    pub count: u64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub within_bounds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountReport {
    #[serde(serialize_with = "ser_biguint")]
    pub count: BigUint,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub within_bounds: bool,
    pub per_factor: Vec<FactorCount>,
}

pub(crate) fn ser_biguint<S: Serializer>(n: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&n.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        rat(n, d)
    }

    #[test]
    fn beta_examples() {
        let real = System::new(SystemConfig::real(1, ThetaTable::homogeneous())).unwrap();
        assert_eq!(real.beta(&Level::int(7)).unwrap().beta.to_rational(), Some(r(7, 1)));
        let cantor = System::new(SystemConfig::missing_digit(3, &[0, 2])).unwrap();
        assert_eq!(cantor.beta(&Level::int(2)).unwrap().beta.to_rational(), Some(r(9, 1)));
        let g = System::new(SystemConfig::gaussian()).unwrap();
        let w = g.beta(&Level::gaussian(1, 2)).unwrap();
        assert_eq!(w.beta, BetaPower::new(5u32, r(1, 2)));
        assert!((w.log_beta - 5f64.sqrt().ln()).abs() < 1e-15);
    }

    #[test]
    fn beta_rejects_invalid_levels() {
        let g = System::new(SystemConfig::gaussian()).unwrap();
        assert!(matches!(g.beta(&Level::gaussian(0, 0)), Err(Error::Domain(_))));
        let p = System::new(SystemConfig::padic(3, 1)).unwrap();
        assert!(matches!(p.beta(&Level::int(0)), Err(Error::Domain(_))));
        let c = System::new(SystemConfig::missing_digit(3, &[0, 2])).unwrap();
        assert!(matches!(c.beta(&Level::int(0)), Err(Error::Domain(_))));
    }

    #[test]
    fn config_validation() {
        assert!(System::new(SystemConfig::padic(4, 1)).is_err());
        assert!(System::new(SystemConfig::missing_digit(3, &[0])).is_err());
        assert!(System::new(SystemConfig::missing_digit(3, &[0, 1, 2])).is_err());
        assert!(System::new(SystemConfig::missing_digit(2, &[0, 1])).is_err());
        let bad_theta = ThetaTable::constant(vec![r(3, 2)]);
        assert!(matches!(
            System::new(SystemConfig::real(1, bad_theta)),
            Err(Error::Validation(_))
        ));
        let wrong_len = ThetaTable::constant(vec![r(1, 2)]);
        assert!(System::new(SystemConfig::real(2, wrong_len)).is_err());
    }

    #[test]
    fn cap_is_an_error_with_exact_count() {
        let s = System::new(SystemConfig::missing_digit(3, &[0, 2]).with_cap(100)).unwrap();
        match s.generate_level(&Level::int(7)) {
            Err(Error::Resource { count, cap }) => {
                assert_eq!(count, BigUint::from(128u32));
                assert_eq!(cap, 100);
            }
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn distance_rejects_mismatched_points() {
        let s = System::new(SystemConfig::real(2, ThetaTable::homogeneous())).unwrap();
        let x = Point(vec![Coord::Real(r(0, 1))]);
        let y = Point(vec![Coord::Real(r(0, 1)), Coord::Real(r(1, 2))]);
        assert!(matches!(s.distance(&x, &y), Err(Error::KindMismatch(_))));
        let z = Point(vec![Coord::Real(r(0, 1)), Coord::Gaussian { re: r(0, 1), im: r(0, 1) }]);
        assert!(matches!(s.distance(&y, &z), Err(Error::KindMismatch(_))));
    }

    #[test]
    fn max_metric_distance() {
        let s = System::new(SystemConfig::real(2, ThetaTable::homogeneous())).unwrap();
        let x = Point(vec![Coord::Real(r(0, 1)), Coord::Real(r(0, 1))]);
        let y = Point(vec![Coord::Real(r(1, 3)), Coord::Real(r(1, 4))]);
        assert_eq!(s.distance(&x, &y).unwrap(), Dist::linear(r(1, 3)));
    }

    #[test]
    fn level_json_forms() {
        let l: Level = serde_json::from_str("7").unwrap();
        assert_eq!(l, Level::int(7));
        let l: Level = serde_json::from_str(r#"{"re": 1, "im": -2}"#).unwrap();
        assert_eq!(l, Level::gaussian(1, -2));
        let l: Level = serde_json::from_str(r#"{"base": 2, "exp": 16}"#).unwrap();
        assert_eq!(l.index().unwrap(), BigUint::from(65536u32));
        assert!(serde_json::from_str::<Level>("-3").is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(32))]

        #[test]
        fn gaussian_levels_are_separated_and_maximal(a in 1i64..=7, b in 0i64..=7, seed in 0u64..1000) {
            let g = System::new(SystemConfig::gaussian()).unwrap();
            let level = Level::gaussian(a, b);
            proptest::prop_assert!(g.verify_separated(&level).unwrap().ok);
            let probes = g.sample_probes(&level, 20, seed);
            proptest::prop_assert!(g.verify_maximal(&level, &probes).unwrap().ok);
        }

        #[test]
        fn real_counts_stay_in_bracket(q in 1u64..=500, num in 1i64..=400, seed in 0u64..1000) {
            let s = System::new(SystemConfig::real(1, ThetaTable::homogeneous())).unwrap();
            let level = Level::int(q);
            let radius = rat(num, 800);
            proptest::prop_assume!(radius > Rational::new(1.into(), q.into()));
            for c in s.sample_probes(&level, 4, seed) {
                let rep = s.count_in_ball(&level, &c, &radius).unwrap();
                proptest::prop_assert!(rep.within_bounds, "{:?}", rep);
            }
        }

        #[test]
        fn padic_distance_is_ultrametric(
            p in proptest::sample::select(vec![2u32, 3, 5]),
            xs in proptest::collection::vec((-200i64..200, 1i64..50), 3),
        ) {
            let s = System::new(SystemConfig::padic(p, 1)).unwrap();
            let pts: Vec<Point> = xs
                .iter()
                .filter(|(_, d)| d % p as i64 != 0)
                .map(|&(n, d)| {
                    let v = rat(n, d);
                    let digits = padic::padic_digits(&v, p, 12).unwrap();
                    Point(vec![Coord::PAdic { value: v, digits }])
                })
                .collect();
            if pts.len() == 3 {
                let xz = s.distance(&pts[0], &pts[2]).unwrap();
                let xy = s.distance(&pts[0], &pts[1]).unwrap();
                let yz = s.distance(&pts[1], &pts[2]).unwrap();
                proptest::prop_assert!(xz <= std::cmp::max(xy, yz));
            }
        }
    }
}
