//! Box-count estimates from finite constructions, and empirical Hölder probes.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::construction::{
    assign_measure, BallIndex, Construction, HolderCase, RefineOptions, RefineRule,
};
use crate::error::{Error, Result};
use crate::exact::{self, format_rational, rat_int, rational_from_f64, BetaPower, ExactRadius, Rational};
use crate::systems::{ser_biguint, Coord, Factor, Level, Point, System, SystemKind};

#[derive(Clone, Debug, Serialize)]
pub struct CoverEntry {
    pub depth: usize,
    pub radius: BetaPower,
    #[serde(serialize_with = "ser_biguint")]
    pub count: BigUint,
    pub log_count: f64,
    pub neg_log_radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverSeries {
    /// 1-based axis whose exponent sets the ball radius.
    pub axis: usize,
    pub entries: Vec<CoverEntry>,
}

impl CoverSeries {
    fn push(&mut self, depth: usize, radius: BetaPower, count: BigUint) {
        let log_count = exact::ln_biguint(&count);
        let neg_log_radius = -radius.ln();
        self.entries.push(CoverEntry {
            depth,
            radius,
            count,
            log_count,
            neg_log_radius,
        });
    }
}

/// Balls of radius `beta^-tau_k` needed to cover one rectangle of the layer.
fn splitting_factor(beta: &BetaPower, taus: &[Rational], deltas: &[f64], axis: usize) -> Result<BigUint> {
    let tk = &taus[axis];
    let mut total = BigUint::one();
    for (t, d) in taus.iter().zip(deltas) {
        if t >= tk {
            continue;
        }
        let side = beta.pow(&(tk - t));
        let balls = if (*d - 1.0).abs() < 1e-15 {
            side.ceil()?
        } else {
            let v = (side.ln() * d).exp().ceil();
            BigUint::from(v.max(1.0) as u64)
        };
        total *= balls.max(BigUint::one());
    }
    Ok(total)
}

fn check_axis(system: &System, axis: usize) -> Result<()> {
    if axis == 0 || axis > system.n() {
        return Err(Error::Range(format!("axis {axis} outside 1..={}", system.n())));
    }
    Ok(())
}

/// Ball counts `N_j` at radius `beta(q_j)^-tau_k` for every layer of a construction.
pub fn covering_counts(system: &System, construction: &Construction, axis: usize) -> Result<CoverSeries> {
    check_axis(system, axis)?;
    let taus = construction.tau_values();
    let deltas = system.deltas();
    let mut series = CoverSeries {
        axis,
        entries: Vec::new(),
    };
    for layer in &construction.layers {
        let split = splitting_factor(&layer.beta, taus, &deltas, axis - 1)?;
        let count = BigUint::from(layer.len()) * split;
        series.push(layer.index, layer.radii[axis - 1].clone(), count);
    }
    Ok(series)
}

/// Per-layer child counts for a one-factor missing-digit system, found from a single parent.
///
/// Every parent `f_w(z)` sees the same children once the containment radius stays inside
/// the gap between neighbouring cylinders, so the count at layer `j` is a product.
pub fn self_similar_fanout(system: &System, levels: &[Level], taus: &[Rational], depth: usize, options: RefineOptions) -> Result<Vec<BigUint>> {
    let SystemKind::MissingDigit { base, digits, anchor } = &system_kind(system) else {
        return Err(Error::domain("self-similar counting needs a missing-digit system"));
    };
    if system.n() != 1 || taus.len() != 1 {
        return Err(Error::domain("self-similar counting needs a single factor"));
    }
    if options.strict_containment {
        return Err(Error::domain("self-similar counting does not support strict containment"));
    }
    if depth == 0 || depth > levels.len() {
        return Err(Error::Range(format!("depth {depth} outside 1..={}", levels.len())));
    }
    let factor = crate::systems::digits::DigitFactor::new(*base, digits, anchor.as_deref())?;
    let mut j_sorted = factor.digit_set().to_vec();
    j_sorted.sort_unstable();
    let min_gap = j_sorted.windows(2).map(|w| w[1] - w[0]).min().unwrap() as i64;
    let hull = Rational::new(
        (j_sorted[j_sorted.len() - 1] - j_sorted[0]).into(),
        (*base as i64 - 1).into(),
    );
    let gap = rat_int(min_gap) - hull;
    let anchor_word: Vec<u8> = factor.anchor_word().iter().map(|d| *d as u8).collect();
    let centre = factor.coord(anchor_word);
    let tau = &taus[0];
    let mut fanout = vec![system.level_size(&levels[0])?];
    for j in 1..depth {
        let k_prev = levels[j - 1].small_index()?;
        let k = levels[j].small_index()?;
        let scale = exact::pow_rational(&rat_int(*base), k_prev as u64);
        let beta_prev = system.beta(&levels[j - 1])?.beta;
        let mut reach = ExactRadius::power(beta_prev.pow(&-tau.clone()));
        if options.rule == RefineRule::Cantor && j == 1 {
            reach = reach.scaled(&Rational::new(1.into(), 2.into()));
        }
        let bound = &gap / &scale;
        if reach.upper_rational()? > bound {
            return Err(Error::domain(format!(
                "containment radius at layer {} reaches neighbouring cylinders",
                j + 1
            )));
        }
        let local = reach.scaled(&scale);
        let near = factor.points_near(&Level::int((k - k_prev) as u64), &centre, &local, system.cap())?;
        if near.is_empty() {
            return Err(Error::EmptyRefinement {
                layer: j + 1,
                parent: 0,
                center: "anchor".into(),
            });
        }
        fanout.push(BigUint::from(near.len()));
    }
    Ok(fanout)
}

fn system_kind(system: &System) -> SystemKind {
    system.config.kind.clone()
}

/// Covering counts without materialising the layers; see [`self_similar_fanout`].
pub fn covering_counts_self_similar(
    system: &System,
    levels: &[Level],
    taus: &[Rational],
    depth: usize,
    options: RefineOptions,
) -> Result<CoverSeries> {
    let fanout = self_similar_fanout(system, levels, taus, depth, options)?;
    let mut series = CoverSeries {
        axis: 1,
        entries: Vec::new(),
    };
    let mut count = BigUint::one();
    for (j, f) in fanout.iter().enumerate() {
        count *= f;
        let beta = system.beta(&levels[j])?.beta;
        series.push(j + 1, beta.pow(&-taus[0].clone()), count.clone());
    }
    Ok(series)
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: usize,
}

/// Least-squares slope of `log N` against `-log r` over the last `window` entries.
pub fn slope_estimate(series: &CoverSeries, window: usize) -> Result<SlopeFit> {
    let m = window.min(series.entries.len());
    if m < 2 {
        return Err(Error::Range(format!(
            "slope needs at least 2 entries, have {}",
            m
        )));
    }
    let tail = &series.entries[series.entries.len() - m..];
    let n = m as f64;
    let mx = tail.iter().map(|e| e.neg_log_radius).sum::<f64>() / n;
    let my = tail.iter().map(|e| e.log_count).sum::<f64>() / n;
    let sxx: f64 = tail.iter().map(|e| (e.neg_log_radius - mx).powi(2)).sum();
    let sxy: f64 = tail
        .iter()
        .map(|e| (e.neg_log_radius - mx) * (e.log_count - my))
        .sum();
    if sxx == 0.0 {
        return Err(Error::Range("radii do not vary over the window".into()));
    }
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        window: m,
    })
}

pub fn local_slopes(series: &CoverSeries) -> Vec<f64> {
    series
        .entries
        .windows(2)
        .map(|w| (w[1].log_count - w[0].log_count) / (w[1].neg_log_radius - w[0].neg_log_radius))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub series: CoverSeries,
    pub slope: Option<f64>,
    pub window: usize,
    pub local_slopes: Vec<f64>,
    /// `log N_J / -log r_J` at the deepest layer.
    pub single_point: f64,
    pub formula_value: Option<f64>,
    pub finite_depth_formula: f64,
    /// `|single_point - finite_depth_formula|`.
    pub abs_error: f64,
    pub slope_error_vs_limit: Option<f64>,
    pub warnings: Vec<String>,
}

impl EstimateReport {
    pub fn new(series: CoverSeries, window: usize, finite_depth_formula: f64, formula_value: Option<f64>) -> Result<Self> {
        let last = series
            .entries
            .last()
            .ok_or_else(|| Error::Range("empty cover series".into()))?;
        let single_point = last.log_count / last.neg_log_radius;
        let mut warnings = Vec::new();
        let slope = match slope_estimate(&series, window) {
            Ok(fit) => Some(fit.slope),
            Err(_) => {
                warnings.push("no slope window".to_string());
                None
            }
        };
        Ok(EstimateReport {
            local_slopes: local_slopes(&series),
            window: window.min(series.entries.len()),
            slope,
            single_point,
            formula_value,
            finite_depth_formula,
            abs_error: (single_point - finite_depth_formula).abs(),
            slope_error_vs_limit: slope.zip(formula_value).map(|(s, f)| (s - f).abs()),
            series,
            warnings,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,radius_base,radius_exponent,count,log_count,neg_log_radius,local_slope\n");
        for (i, e) in self.series.entries.iter().enumerate() {
            let local = if i == 0 {
                String::new()
            } else {
                format!("{}", self.local_slopes[i - 1])
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.depth,
                e.radius.base,
                format_rational(&e.radius.exp),
                e.count,
                e.log_count,
                e.neg_log_radius,
                local
            );
        }
        out
    }

    /// Plot-ready arrays for external figure tooling.
    pub fn plot_data(&self) -> serde_json::Value {
        let xs: Vec<f64> = self.series.entries.iter().map(|e| e.neg_log_radius).collect();
        let ys: Vec<f64> = self.series.entries.iter().map(|e| e.log_count).collect();
        serde_json::json!({
            "x_label": "-log r",
            "y_label": "log N",
            "x": xs,
            "y": ys,
            "slope": self.slope,
            "finite_depth_formula": self.finite_depth_formula,
            "formula_value": self.formula_value,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WorstBall {
    pub center: Point,
    #[serde(with = "exact::rational_str")]
    pub radius: Rational,
    #[serde(with = "exact::rational_str")]
    pub mass: Rational,
    pub case: HolderCase,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderReport {
    pub depth: usize,
    pub s: f64,
    pub samples: usize,
    pub seed: u64,
    /// `max nu(B) / r^s` over the sampled balls.
    pub max_ratio: f64,
    /// `min log nu(B) / log r` over sampled balls no larger than the first-layer radius.
    pub empirical_exponent: Option<f64>,
    pub worst_ball: Option<WorstBall>,
}

/// Samples balls centred at leaves with log-uniform radii between the leaf radius and the
/// diameter, and measures them with the construction's mass distribution.
pub fn holder_probe(system: &System, construction: &Construction, s: f64, samples: usize, seed: u64) -> Result<HolderReport> {
    if s.is_nan() || s < 0.0 {
        return Err(Error::domain(format!("exponent s must be non-negative, got {s}")));
    }
    let tree = assign_measure(&construction.layers)?;
    let index = BallIndex::new(system, construction, &tree)?;
    let leaves = construction.leaves();
    let lo = leaves.radii.iter().map(BetaPower::ln).fold(f64::INFINITY, f64::min);
    let hi = system
        .ahlfors()
        .iter()
        .map(|a| exact::ln_rational(&a.r_max))
        .fold(f64::NEG_INFINITY, f64::max);
    let fine = construction.layers[0]
        .radii
        .iter()
        .map(BetaPower::ln)
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(usize, Rational)> = (0..samples)
        .map(|_| {
            let i = rng.gen_range(0..leaves.len());
            let ln_r = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            (i, ln_r)
        })
        .map(|(i, ln_r)| Ok((i, rational_from_f64(ln_r.exp())?)))
        .collect::<Result<_>>()?;
    let measured: Vec<(f64, f64, WorstBall)> = draws
        .par_iter()
        .map(|(i, r)| {
            let center = &leaves.rectangles[*i].center;
            let b = index.measure(center, r)?;
            let ln_r = exact::ln_rational(r);
            let ln_m = exact::ln_rational(&b.mass);
            let ratio = (ln_m - s * ln_r).exp();
            let exponent = if ln_r <= fine && ln_r < 0.0 { ln_m / ln_r } else { f64::INFINITY };
            Ok((
                ratio,
                exponent,
                WorstBall {
                    center: center.clone(),
                    radius: r.clone(),
                    mass: b.mass,
                    case: b.case,
                    ratio,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut max_ratio = 0.0;
    let mut exponent = f64::INFINITY;
    let mut worst = None;
    for (ratio, e, ball) in measured {
        exponent = exponent.min(e);
        if ratio > max_ratio {
            max_ratio = ratio;
            worst = Some(ball);
        }
    }
    Ok(HolderReport {
        depth: construction.depth(),
        s,
        samples,
        seed,
        max_ratio,
        empirical_exponent: exponent.is_finite().then_some(exponent),
        worst_ball: worst,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderSweep {
    pub reports: Vec<HolderReport>,
    /// Deepest `max_ratio` over the shallowest one.
    pub growth_factor: f64,
    /// Set when the ratio grew by more than half across the sweep.
    pub growing: bool,
}

pub const GROWTH_THRESHOLD: f64 = 1.5;

/// [`holder_probe`] at each depth in `depths`, with a shared exponent and seed.
pub fn holder_sweep(
    system: &System,
    levels: &[Level],
    taus: &[Rational],
    depths: &[usize],
    options: RefineOptions,
    s: f64,
    samples: usize,
    seed: u64,
) -> Result<HolderSweep> {
    let deepest = *depths.iter().max().ok_or_else(|| Error::Range("no depths to sweep".into()))?;
    let full = Construction::build(system, levels, taus, deepest, options)?;
    let reports = depths
        .iter()
        .map(|d| holder_probe(system, &full.truncated(*d)?, s, samples, seed))
        .collect::<Result<Vec<_>>>()?;
    let first = reports.first().unwrap().max_ratio;
    let last = reports.last().unwrap().max_ratio;
    let growth_factor = if first > 0.0 { last / first } else { f64::INFINITY };
    Ok(HolderSweep {
        growing: growth_factor > GROWTH_THRESHOLD,
        growth_factor,
        reports,
    })
}

/// The word of a digit coordinate, if any.
pub fn digit_word(c: &Coord) -> Option<&[u8]> {
    match c {
        Coord::Word { word, .. } => Some(word),
        _ => None,
    }
}

/// Count of length-`k_J` words over `J` allowed by the exponent rule: positions
/// `(ceil(tau k_j), k_{j+1}]` free and the rest forced, plus all of the first `k_1`.
pub fn free_digit_count(exponents: &[u64], tau: &Rational) -> Result<u64> {
    let first = *exponents.first().ok_or_else(|| Error::Range("no exponents".into()))?;
    let mut free = first;
    for w in exponents.windows(2) {
        let forced = (tau * rat_int(w[0])).ceil().to_integer().to_u64().unwrap_or(u64::MAX);
        if forced < w[1] {
            free += w[1] - forced;
        }
    }
    Ok(free)
}

impl Construction {
    /// The first `depth` layers.
    pub fn truncated(&self, depth: usize) -> Result<Construction> {
        if depth == 0 || depth > self.depth() {
            return Err(Error::Range(format!("depth {depth} outside 1..={}", self.depth())));
        }
        let mut c = self.clone();
        c.layers.truncate(depth);
        Ok(c)
    }
}
