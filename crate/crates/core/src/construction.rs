//! Layers of rectangles, the nested Cantor construction and its mass distribution.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, format_rational, rat, BetaPower, Dist, ExactRadius, Rational};
use crate::systems::{cartesian, Coord, Level, Point, System};

/// How children are selected inside a parent rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefineRule {
    /// Half the parent radius at the first step, then any centre inside the parent.
    #[default]
    Cantor,
    /// Any centre inside the parent at every step: the covering layers `E_1 ∩ ... ∩ E_j`.
    Cover,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RefineOptions {
    #[serde(default)]
    pub rule: RefineRule,
    /// Shrink each parent by the child radius so children lie wholly inside it.
    #[serde(default)]
    pub strict_containment: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rectangle {
    pub center: Point,
    pub parent: Option<usize>,
}

/// The rectangles built at one level `q_j`; all share the radii `beta(q_j)^-tau_i`.
#[derive(Clone, Debug, Serialize)]
pub struct Layer {
    /// 1-based position `j` in the sequence.
    pub index: usize,
    pub level: Level,
    pub beta: BetaPower,
    pub radii: Vec<BetaPower>,
    /// Closed ultrametric radius equivalent to each open radius, when the factor is ultrametric.
    pub effective_radii: Option<Vec<BetaPower>>,
    pub rectangles: Vec<Rectangle>,
    /// Per parent of the previous layer, the number of admissible centres on each axis.
    #[serde(skip)]
    pub fanout: Vec<Vec<u64>>,
}

impl Layer {
    pub fn len(&self) -> usize {
        self.rectangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rectangles.is_empty()
    }

    fn radius(&self, axis: usize) -> ExactRadius {
        ExactRadius::power(self.radii[axis].clone())
    }
}

fn radii_for(beta: &BetaPower, taus: &[Rational]) -> Vec<BetaPower> {
    taus.iter().map(|t| beta.pow(&-t.clone())).collect()
}

fn ultrametric_radii(radii: &[BetaPower]) -> Vec<BetaPower> {
    // An open ball of radius p^-e in a p-adic space is the closed ball p^-(floor(e) + 1).
    radii
        .iter()
        .map(|r| {
            let e = -r.exp.clone();
            let m = e.floor() + Rational::one();
            BetaPower::new(r.base.clone(), -m)
        })
        .collect()
}

fn check_taus(system: &System, taus: &[Rational]) -> Result<()> {
    if taus.len() != system.n() {
        return Err(Error::validation(format!(
            "{} exponents given for {} factors",
            taus.len(),
            system.n()
        )));
    }
    if let Some(t) = taus.iter().find(|t| !t.is_positive()) {
        return Err(Error::domain(format!("exponents must be positive, got {t}")));
    }
    Ok(())
}

fn point_string(p: &Point) -> Vec<String> {
    p.0.iter()
        .map(|c| match c {
            Coord::Real(v) | Coord::PAdic { value: v, .. } => format_rational(v),
            Coord::Gaussian { re, im } => format!("{},{}", format_rational(re), format_rational(im)),
            Coord::Word { word, .. } => word.iter().map(|d| char::from_digit(*d as u32, 36).unwrap()).collect(),
        })
        .collect()
}

/// `E_j`: one rectangle around every point of `P(q_j)`.
pub fn build_layer(system: &System, levels: &[Level], taus: &[Rational], j: usize) -> Result<Layer> {
    check_taus(system, taus)?;
    if j == 0 || j > levels.len() {
        return Err(Error::Range(format!("layer {j} outside 1..={}", levels.len())));
    }
    let level = &levels[j - 1];
    let beta = system.beta(level)?.beta;
    let radii = radii_for(&beta, taus);
    let rectangles = system
        .generate_level(level)?
        .into_iter()
        .map(|center| Rectangle { center, parent: None })
        .collect();
    Ok(Layer {
        index: j,
        level: level.clone(),
        effective_radii: system.ultrametric().then(|| ultrametric_radii(&radii)),
        beta,
        radii,
        rectangles,
        fanout: Vec::new(),
    })
}

/// The radius around a parent centre inside which child centres are accepted, per axis.
fn containment_radii(
    system: &System,
    parent: &Layer,
    child_radii: &[BetaPower],
    options: RefineOptions,
) -> Result<Vec<ExactRadius>> {
    let half = options.rule == RefineRule::Cantor && parent.index == 1;
    (0..system.n())
        .map(|i| {
            let mut r = parent.radius(i);
            if half {
                r = r.scaled(&rat(1, 2));
            }
            if options.strict_containment && !system.factor(i).ultrametric() {
                let inner = r.lower_rational()? - ExactRadius::power(child_radii[i].clone()).upper_rational()?;
                r = ExactRadius::rational(if inner.is_positive() { inner } else { Rational::zero() });
            }
            Ok(r)
        })
        .collect()
}

/// `L_j`: children of every parent rectangle at the next level.
pub fn refine(system: &System, parent: &Layer, levels: &[Level], taus: &[Rational], options: RefineOptions) -> Result<Layer> {
    check_taus(system, taus)?;
    if parent.is_empty() {
        return Err(Error::Structure(format!("layer {} is empty", parent.index)));
    }
    let j = parent.index + 1;
    if j > levels.len() {
        return Err(Error::Range(format!("no level q_{j}: sequence has depth {}", levels.len())));
    }
    let level = &levels[j - 1];
    let beta = system.beta(level)?.beta;
    let radii = radii_for(&beta, taus);
    let reach = containment_radii(system, parent, &radii, options)?;
    let cap = system.cap();
    let per_parent: Vec<Vec<Vec<Coord>>> = parent
        .rectangles
        .par_iter()
        .map(|rect| {
            (0..system.n())
                .map(|i| {
                    if !reach[i].is_positive() {
                        return Ok(Vec::new());
                    }
                    system.factor(i).points_near(level, &rect.center.0[i], &reach[i], cap)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = BigUint::zero();
    for (idx, axes) in per_parent.iter().enumerate() {
        if axes.iter().any(|a| a.is_empty()) {
            return Err(Error::EmptyRefinement {
                layer: j,
                parent: idx,
                center: point_string(&parent.rectangles[idx].center).join("; "),
            });
        }
        total += axes.iter().fold(BigUint::one(), |acc, a| acc * a.len());
    }
    if total > BigUint::from(cap) {
        return Err(Error::Resource { count: total, cap });
    }
    let mut rectangles = Vec::with_capacity(total.to_usize().unwrap_or(0));
    let mut fanout = Vec::with_capacity(per_parent.len());
    for (idx, axes) in per_parent.into_iter().enumerate() {
        fanout.push(axes.iter().map(|a| a.len() as u64).collect());
        for center in cartesian(&axes) {
            rectangles.push(Rectangle {
                center,
                parent: Some(idx),
            });
        }
    }
    Ok(Layer {
        index: j,
        level: level.clone(),
        effective_radii: system.ultrametric().then(|| ultrametric_radii(&radii)),
        beta,
        radii,
        rectangles,
        fanout,
    })
}

/// Layers `1..=depth`, each refined from the previous one.
#[derive(Clone, Debug, Serialize)]
pub struct Construction {
    pub taus: Vec<String>,
    pub options: RefineOptions,
    pub layers: Vec<Layer>,
    #[serde(skip)]
    tau_values: Vec<Rational>,
}

impl Construction {
    pub fn build(system: &System, levels: &[Level], taus: &[Rational], depth: usize, options: RefineOptions) -> Result<Self> {
        if depth == 0 || depth > levels.len() {
            return Err(Error::Range(format!("depth {depth} outside 1..={}", levels.len())));
        }
        let mut layers = vec![build_layer(system, levels, taus, 1)?];
        for _ in 1..depth {
            let next = refine(system, layers.last().unwrap(), levels, taus, options)?;
            layers.push(next);
        }
        Ok(Construction {
            taus: taus.iter().map(format_rational).collect(),
            options,
            layers,
            tau_values: taus.to_vec(),
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn tau_values(&self) -> &[Rational] {
        &self.tau_values
    }

    pub fn leaves(&self) -> &Layer {
        self.layers.last().unwrap()
    }

    /// Line-delimited export: one JSON record per rectangle.
    pub fn export_lines(&self) -> Result<String> {
        let mut out = String::new();
        for layer in &self.layers {
            for (id, rect) in layer.rectangles.iter().enumerate() {
                let record = LayerRecord {
                    level_index: layer.index,
                    id,
                    level: &layer.level,
                    center: point_string(&rect.center),
                    radius: &layer.radii,
                    effective_radius: layer.effective_radii.as_ref(),
                    parent: rect.parent,
                };
                out.push_str(&serde_json::to_string(&record)?);
                out.push('\n');
            }
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct LayerRecord<'a> {
    level_index: usize,
    id: usize,
    level: &'a Level,
    center: Vec<String>,
    radius: &'a [BetaPower],
    #[serde(skip_serializing_if = "Option::is_none")]
    effective_radius: Option<&'a Vec<BetaPower>>,
    parent: Option<usize>,
}

/// Exact masses of every rectangle, mirroring the layers.
#[derive(Clone, Debug)]
pub struct MeasureTree {
    pub masses: Vec<Vec<Rational>>,
    pub children: Vec<Vec<Vec<usize>>>,
}

impl MeasureTree {
    pub fn layer_sum(&self, j: usize) -> Rational {
        self.masses[j].iter().sum()
    }
}

/// Splits each parent's mass equally between its children.
pub fn assign_measure(layers: &[Layer]) -> Result<MeasureTree> {
    if layers.is_empty() || layers[0].is_empty() {
        return Err(Error::Structure("no rectangles to carry mass".into()));
    }
    let mut children: Vec<Vec<Vec<usize>>> = Vec::with_capacity(layers.len());
    for (j, layer) in layers.iter().enumerate() {
        let mut kids = vec![Vec::new(); layer.len()];
        if let Some(next) = layers.get(j + 1) {
            for (c, rect) in next.rectangles.iter().enumerate() {
                match rect.parent {
                    Some(p) if p < layer.len() => kids[p].push(c),
                    _ => {
                        return Err(Error::Structure(format!(
                            "rectangle {c} of layer {} has no parent in layer {}",
                            next.index, layer.index
                        )))
                    }
                }
            }
            if let Some(p) = kids.iter().position(|k| k.is_empty()) {
                return Err(Error::Structure(format!(
                    "rectangle {p} of layer {} has no children",
                    layer.index
                )));
            }
        }
        children.push(kids);
    }
    let root = rat(1, layers[0].len() as i64);
    let mut masses = vec![vec![root; layers[0].len()]];
    for j in 1..layers.len() {
        let mut m = vec![Rational::zero(); layers[j].len()];
        for (p, kids) in children[j - 1].iter().enumerate() {
            let share = &masses[j - 1][p] / Rational::from_integer(kids.len().into());
            for c in kids {
                m[*c] = share.clone();
            }
        }
        masses.push(m);
    }
    Ok(MeasureTree { masses, children })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderCase {
    /// The ball meets one rectangle at every layer.
    Single,
    I,
    II,
    III,
}

#[derive(Clone, Debug, Serialize)]
pub struct BallMeasure {
    /// Total mass of deepest-layer rectangles meeting the ball: an upper bound on `nu(B)`.
    #[serde(with = "exact::rational_str")]
    pub mass: Rational,
    pub case: HolderCase,
    /// First layer at which the ball meets two or more rectangles.
    pub split_layer: Option<usize>,
    /// Rectangles meeting the ball per layer, saturated at 2.
    pub intersecting: Vec<usize>,
}

/// Precomputed radius bounds for fast ball queries.
pub struct BallIndex<'a> {
    system: &'a System,
    construction: &'a Construction,
    tree: &'a MeasureTree,
    radius_hi: Vec<Vec<Rational>>,
    reach_hi: Vec<Vec<Rational>>,
}

impl<'a> BallIndex<'a> {
    pub fn new(system: &'a System, construction: &'a Construction, tree: &'a MeasureTree) -> Result<Self> {
        let radius_hi: Vec<Vec<Rational>> = construction
            .layers
            .iter()
            .map(|l| (0..system.n()).map(|i| l.radius(i).upper_rational()).collect())
            .collect::<Result<_>>()?;
        let depth = radius_hi.len();
        let mut reach_hi = radius_hi.clone();
        for j in (0..depth.saturating_sub(1)).rev() {
            for i in 0..system.n() {
                reach_hi[j][i] = &radius_hi[j][i] + &reach_hi[j + 1][i];
            }
        }
        Ok(BallIndex {
            system,
            construction,
            tree,
            radius_hi,
            reach_hi,
        })
    }

    /// Counts a node and its descendants, all inside the ball, saturating at two per layer.
    fn saturate_below(&self, j: usize, idx: usize, intersecting: &mut [usize]) {
        let depth = intersecting.len();
        let mut frontier = vec![idx];
        for (m, slot) in intersecting.iter_mut().enumerate().skip(j) {
            *slot = (*slot + frontier.len()).min(2);
            if m + 1 == depth {
                break;
            }
            frontier = frontier
                .iter()
                .flat_map(|p| self.tree.children[m][*p].iter().copied())
                .take(2)
                .collect();
        }
    }

    /// `nu(B(center, r))`, bounded above by the leaves the ball meets.
    pub fn measure(&self, center: &Point, r: &Rational) -> Result<BallMeasure> {
        self.system.check_member(center)?;
        if !r.is_positive() {
            return Err(Error::domain("ball radius must be positive"));
        }
        let layers = &self.construction.layers;
        let depth = layers.len();
        let n = self.system.n();
        let leaf = &self.radius_hi[depth - 1];
        let meet: Vec<Vec<Rational>> = self.radius_hi.iter().map(|l| l.iter().map(|x| r + x).collect()).collect();
        let prune: Vec<Vec<Rational>> = self.reach_hi.iter().map(|l| l.iter().map(|x| r + x).collect()).collect();
        // Every leaf below a node lies within reach - leaf radius of its centre.
        let inside: Vec<Vec<Rational>> = self
            .reach_hi
            .iter()
            .map(|l| (0..n).map(|i| r - (&l[i] - &leaf[i])).collect())
            .collect();
        let mut intersecting = vec![0usize; depth];
        let mut mass = Rational::zero();
        let mut stack: Vec<(usize, usize)> = (0..layers[0].len()).rev().map(|i| (0, i)).collect();
        while let Some((j, idx)) = stack.pop() {
            let rect = &layers[j].rectangles[idx];
            let mut meets = true;
            let mut whole = true;
            let mut hopeless = false;
            for i in 0..n {
                let d = self.system.factor(i).distance(&rect.center.0[i], &center.0[i])?;
                if whole && !d.lt_rational(&inside[j][i]) {
                    whole = false;
                }
                if !d.lt_rational(&meet[j][i]) {
                    meets = false;
                    if !d.lt_rational(&prune[j][i]) {
                        hopeless = true;
                        break;
                    }
                }
            }
            if hopeless {
                continue;
            }
            if whole {
                mass += &self.tree.masses[j][idx];
                self.saturate_below(j, idx, &mut intersecting);
                continue;
            }
            if meets {
                intersecting[j] = (intersecting[j] + 1).min(2);
                if j + 1 == depth {
                    mass += &self.tree.masses[j][idx];
                }
            }
            if j + 1 < depth {
                for c in self.tree.children[j][idx].iter().rev() {
                    stack.push((j + 1, *c));
                }
            }
        }
        let split = intersecting.iter().position(|c| *c >= 2);
        let case = match split {
            None => HolderCase::Single,
            Some(0) => HolderCase::I,
            Some(k) => {
                let prev = &layers[k - 1].beta;
                let taus = self.construction.tau_values();
                let tmin = taus.iter().min().unwrap();
                let tmax = taus.iter().max().unwrap();
                if prev.pow(&-tmin.clone()).cmp_rational(r)? == Ordering::Less {
                    HolderCase::I
                } else if prev.pow(&-tmax.clone()).cmp_rational(r)? != Ordering::Greater {
                    HolderCase::II
                } else {
                    HolderCase::III
                }
            }
        };
        Ok(BallMeasure {
            mass,
            case,
            split_layer: split.map(|k| k + 1),
            intersecting,
        })
    }
}

pub fn measure_of_ball(
    system: &System,
    construction: &Construction,
    tree: &MeasureTree,
    center: &Point,
    r: &Rational,
) -> Result<BallMeasure> {
    BallIndex::new(system, construction, tree)?.measure(center, r)
}

#[derive(Clone, Debug, Serialize)]
pub struct CountViolation {
    pub layer: usize,
    pub parent: usize,
    pub axis: usize,
    pub count: u64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChildCountReport {
    pub ok: bool,
    pub checked: usize,
    pub violations: Vec<CountViolation>,
}

/// Per-axis child counts against the counting bracket at the containment radius.
pub fn check_child_counts(system: &System, construction: &Construction) -> Result<ChildCountReport> {
    let mut checked = 0;
    let mut violations = Vec::new();
    let options = RefineOptions {
        strict_containment: false,
        ..construction.options
    };
    for w in construction.layers.windows(2) {
        let (parent, child) = (&w[0], &w[1]);
        if construction.options.strict_containment {
            break;
        }
        let reach = containment_radii(system, parent, &child.radii, options)?;
        let spacing = child.beta.recip();
        for (i, a) in system.ahlfors().iter().enumerate() {
            let r = &reach[i];
            // The bracket needs r > beta^-1; compare with an enclosure of r.
            if spacing.cmp_rational(&r.lower_rational()?)? != Ordering::Less {
                continue;
            }
            let (lower, upper) = a.count_bracket(r.ln() + child.beta.ln());
            for (p, counts) in child.fanout.iter().enumerate() {
                checked += 1;
                let c = counts[i] as f64;
                if c < lower * (1.0 - 1e-9) || c > upper * (1.0 + 1e-9) {
                    violations.push(CountViolation {
                        layer: child.index,
                        parent: p,
                        axis: i + 1,
                        count: counts[i],
                        lower,
                        upper,
                    });
                }
            }
        }
    }
    Ok(ChildCountReport {
        ok: violations.is_empty(),
        checked,
        violations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RectangleBoundReport {
    pub ok: bool,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `ln(bound) - ln(mass)` seen.
    pub worst_log_margin: f64,
}

/// `nu(R_k) <= beta(q_k)^-delta * prod_{j<k} (c2/c1) 4^delta beta(q_j)^(-sum (1 - tau_i) delta_i)`.
pub fn check_rectangle_masses(system: &System, construction: &Construction, tree: &MeasureTree) -> RectangleBoundReport {
    let deltas = system.deltas();
    let delta: f64 = deltas.iter().sum();
    let ratio: f64 = system
        .ahlfors()
        .iter()
        .map(|a| exact::to_f64(&a.c_upper) / exact::to_f64(&a.c_lower))
        .product();
    let drift: f64 = construction
        .tau_values()
        .iter()
        .zip(&deltas)
        .map(|(t, d)| (1.0 - exact::to_f64(t)) * d)
        .sum();
    let mut checked = 0;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut prefix = 0.0;
    for (k, layer) in construction.layers.iter().enumerate() {
        let ln_beta = layer.beta.ln();
        if k >= 1 {
            let bound = -delta * ln_beta + prefix;
            for m in &tree.masses[k] {
                checked += 1;
                let margin = bound - exact::ln_rational(m);
                worst = worst.min(margin);
                if margin < -1e-9 {
                    violations += 1;
                }
            }
        }
        prefix += ratio.ln() + 2.0 * delta * 2f64.ln() - drift * ln_beta;
    }
    RectangleBoundReport {
        ok: violations == 0,
        checked,
        violations,
        worst_log_margin: worst,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NestingReport {
    pub ok: bool,
    pub checked: usize,
    pub violations: usize,
    pub worst_point: Option<Point>,
    pub worst_layer: Option<usize>,
}

/// Sampled leaf centres must lie within `beta(q_m)^-tau_i` of `P(q_m)` for every shallower layer `m`.
pub fn check_nesting(system: &System, construction: &Construction, samples: usize, seed: u64) -> Result<NestingReport> {
    let leaves = construction.leaves();
    let mut idx: Vec<usize> = (0..leaves.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(samples);
    idx.sort_unstable();
    let results: Vec<Option<usize>> = idx
        .par_iter()
        .map(|i| {
            let x = &leaves.rectangles[*i].center;
            for layer in &construction.layers[..construction.depth() - 1] {
                for a in 0..system.n() {
                    let f = system.factor(a);
                    let r = layer.radius(a);
                    let near = f.points_near(&layer.level, &x.0[a], &r, system.cap())?;
                    if near.is_empty() {
                        return Ok(Some(layer.index));
                    }
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let bad: Vec<(usize, usize)> = idx
        .iter()
        .zip(&results)
        .filter_map(|(i, r)| r.map(|l| (*i, l)))
        .collect();
    Ok(NestingReport {
        ok: bad.is_empty(),
        checked: idx.len(),
        violations: bad.len(),
        worst_point: bad.first().map(|(i, _)| leaves.rectangles[*i].center.clone()),
        worst_layer: bad.first().map(|(_, l)| *l),
    })
}

/// Exact check that every layer carries total mass one.
pub fn mass_conserved(tree: &MeasureTree) -> bool {
    (0..tree.masses.len()).all(|j| tree.layer_sum(j).is_one())
}

/// Distance helper used by tests and examples: nearest centre of a layer.
pub fn nearest_center(system: &System, layer: &Layer, x: &Point) -> Result<Option<(usize, Dist)>> {
    let mut best: Option<(usize, Dist)> = None;
    for (i, r) in layer.rectangles.iter().enumerate() {
        let d = system.distance(&r.center, x)?;
        if best.as_ref().is_none_or(|b| d < b.1) {
            best = Some((i, d));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::SequenceSpec;
    use crate::systems::{SystemConfig, ThetaTable};

    fn cantor() -> System {
        System::new(SystemConfig::missing_digit(3, &[0, 2])).unwrap()
    }

    fn levels(ks: &[u64]) -> Vec<Level> {
        SequenceSpec::explicit_ints(ks).levels().unwrap()
    }

    fn cover() -> RefineOptions {
        RefineOptions {
            rule: RefineRule::Cover,
            strict_containment: false,
        }
    }

    #[test]
    fn cantor_first_layer() {
        let l = build_layer(&cantor(), &levels(&[2, 4]), &[rat(3, 2)], 1).unwrap();
        assert_eq!(l.len(), 4);
        assert_eq!(l.radii[0].to_rational(), Some(rat(1, 27)));
    }

    #[test]
    fn real_first_layer() {
        let s = System::new(SystemConfig::real(1, ThetaTable::homogeneous())).unwrap();
        let l = build_layer(&s, &levels(&[4, 16]), &[rat(1, 2)], 1).unwrap();
        assert_eq!(l.len(), 5);
        assert_eq!(l.radii[0].to_rational(), Some(rat(1, 2)));
    }

    #[test]
    fn padic_layer_rounds_radius() {
        let s = System::new(SystemConfig::padic(2, 1)).unwrap();
        let l = build_layer(&s, &levels(&[3]), &[rat(3, 2)], 1).unwrap();
        assert_eq!(l.len(), 8);
        assert_eq!(l.radii[0], BetaPower::new(2u32, rat(-9, 2)));
        assert_eq!(l.effective_radii.unwrap()[0], BetaPower::new(2u32, rat(-5, 1)));
    }

    #[test]
    fn cover_rule_two_children_each() {
        let s = cantor();
        let lv = levels(&[2, 4]);
        let c = Construction::build(&s, &lv, &[rat(3, 2)], 2, cover()).unwrap();
        assert_eq!(c.layers[1].len(), 8);
        assert!(c.layers[1].fanout.iter().all(|f| f == &vec![2]));
        // Children extend their parent's word with a zero digit.
        for r in &c.layers[1].rectangles {
            let Coord::Word { word, .. } = &r.center.0[0] else { unreachable!() };
            let Coord::Word { word: pw, .. } = &c.layers[0].rectangles[r.parent.unwrap()].center.0[0] else {
                unreachable!()
            };
            assert_eq!(&word[..2], &pw[..]);
            assert_eq!(word[2], 0);
        }
    }

    #[test]
    fn cantor_rule_halves_first_step() {
        let s = cantor();
        let c = Construction::build(&s, &levels(&[2, 4]), &[rat(3, 2)], 2, RefineOptions::default()).unwrap();
        assert_eq!(c.layers[1].len(), 4);
    }

    #[test]
    fn real_slab() {
        let s = System::new(SystemConfig::real(1, ThetaTable::homogeneous())).unwrap();
        let c = Construction::build(&s, &levels(&[4, 16]), &[rat(1, 2)], 2, cover()).unwrap();
        // Parent 1/4 with radius 1/2 accepts m/16 for m = 0..=11.
        assert_eq!(c.layers[1].fanout[1], vec![12]);
    }

    #[test]
    fn disjoint_layers_are_reported() {
        let theta = ThetaTable::constant(vec![rat(0, 1)]).with_level(3, vec![rat(1, 4)]);
        let s = System::new(SystemConfig::real(1, theta)).unwrap();
        let err = Construction::build(&s, &levels(&[2, 3]), &[rat(4, 1)], 2, RefineOptions::default()).unwrap_err();
        match err {
            Error::EmptyRefinement { layer, parent, ref center } => {
                assert_eq!((layer, parent), (2, 0));
                assert_eq!(center, "0/1");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn masses_split_equally() {
        let s = cantor();
        let c = Construction::build(&s, &levels(&[2, 4]), &[rat(3, 2)], 2, cover()).unwrap();
        let t = assign_measure(&c.layers).unwrap();
        assert!(t.masses[0].iter().all(|m| *m == rat(1, 4)));
        assert!(t.masses[1].iter().all(|m| *m == rat(1, 8)));
        assert!(mass_conserved(&t));
    }

    #[test]
    fn single_chain_keeps_unit_mass() {
        let s = System::new(SystemConfig::real(1, ThetaTable::homogeneous())).unwrap();
        let layer = |j, parent| Layer {
            index: j,
            level: Level::int(2),
            beta: BetaPower::integer(2u32),
            radii: vec![BetaPower::integer(2u32).recip()],
            effective_radii: None,
            rectangles: vec![Rectangle {
                center: Point(vec![Coord::Real(rat(0, 1))]),
                parent,
            }],
            fanout: Vec::new(),
        };
        let t = assign_measure(&[layer(1, None), layer(2, Some(0)), layer(3, Some(0))]).unwrap();
        assert!(t.masses.iter().all(|m| m[0].is_one()));
        let orphan = assign_measure(&[layer(1, None), layer(2, Some(4))]);
        assert!(matches!(orphan, Err(Error::Structure(_))));
        let _ = s;
    }

    #[test]
    fn depth_three_leaves_equal() {
        let s = cantor();
        let c = Construction::build(&s, &levels(&[2, 4, 8]), &[rat(3, 2)], 3, RefineOptions::default()).unwrap();
        let t = assign_measure(&c.layers).unwrap();
        let leaf = &t.masses[2];
        assert!(leaf.iter().all(|m| *m == leaf[0]));
        assert!(t.layer_sum(2).is_one());
    }

    #[test]
    fn ball_measures() {
        let s = cantor();
        let c = Construction::build(&s, &levels(&[2, 4]), &[rat(3, 2)], 2, cover()).unwrap();
        let t = assign_measure(&c.layers).unwrap();
        let idx = BallIndex::new(&s, &c, &t).unwrap();
        let leaf = c.layers[1].rectangles[0].center.clone();
        let whole = idx.measure(&leaf, &rat(2, 1)).unwrap();
        assert!(whole.mass.is_one());
        let tiny = idx.measure(&leaf, &rat(1, 243)).unwrap();
        assert_eq!(tiny.mass, rat(1, 8));
        assert_eq!(tiny.case, HolderCase::Single);
    }

    #[test]
    fn ball_mass_matches_leaf_scan() {
        let s = cantor();
        let c = Construction::build(&s, &levels(&[2, 4, 8]), &[rat(3, 2)], 3, cover()).unwrap();
        let t = assign_measure(&c.layers).unwrap();
        let idx = BallIndex::new(&s, &c, &t).unwrap();
        let leaves = c.leaves();
        let leaf_r = leaves.radius(0).upper_rational().unwrap();
        for (k, rect) in leaves.rectangles.iter().enumerate().step_by(3) {
            for r in [rat(1, 2000), rat(1, 300), rat(1, 40), rat(1, 7), rat(1, 2)] {
                let r = r * rat(1 + k as i64 % 5, 3);
                let scan: Rational = leaves
                    .rectangles
                    .iter()
                    .zip(&t.masses[2])
                    .filter(|(l, _)| s.distance(&l.center, &rect.center).unwrap().lt_rational(&(&r + &leaf_r)))
                    .map(|(_, m)| m.clone())
                    .sum();
                assert_eq!(idx.measure(&rect.center, &r).unwrap().mass, scan);
            }
        }
    }

    #[test]
    fn checks_pass_on_cantor_tree() {
        let s = cantor();
        let lv = levels(&[2, 4, 8]);
        let c = Construction::build(&s, &lv, &[rat(3, 2)], 3, cover()).unwrap();
        let t = assign_measure(&c.layers).unwrap();
        let counts = check_child_counts(&s, &c).unwrap();
        assert!(counts.ok, "{counts:?}");
        assert!(counts.checked > 0);
        assert!(check_rectangle_masses(&s, &c, &t).ok);
        assert!(check_nesting(&s, &c, 50, 1).unwrap().ok);
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]

        #[test]
        fn measure_is_conserved_and_balls_match_scan(
            k1 in 1u64..=3,
            steps in proptest::collection::vec(1u64..=4, 2),
            tau in proptest::sample::select(vec![rat(1, 1), rat(5, 4), rat(3, 2), rat(2, 1)]),
            rule in proptest::sample::select(vec![RefineRule::Cover, RefineRule::Cantor]),
        ) {
            let s = cantor();
            let ks = [k1, k1 + steps[0], k1 + steps[0] + steps[1]];
            let opts = RefineOptions { rule, strict_containment: false };
            let c = match Construction::build(&s, &levels(&ks), &[tau], 3, opts) {
                Ok(c) => c,
                Err(Error::EmptyRefinement { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let t = assign_measure(&c.layers).unwrap();
            proptest::prop_assert!(mass_conserved(&t));
            for j in 0..c.depth() {
                proptest::prop_assert_eq!(t.layer_sum(j), Rational::one());
            }
            let idx = BallIndex::new(&s, &c, &t).unwrap();
            let leaves = c.leaves();
            let leaf_r = leaves.radius(0).upper_rational().unwrap();
            let last = t.masses.len() - 1;
            for rect in leaves.rectangles.iter().step_by(7).take(6) {
                for r in [rat(1, 500), rat(1, 30), rat(1, 4)] {
                    let scan: Rational = leaves
                        .rectangles
                        .iter()
                        .zip(&t.masses[last])
                        .filter(|(l, _)| s.distance(&l.center, &rect.center).unwrap().lt_rational(&(&r + &leaf_r)))
                        .map(|(_, m)| m.clone())
                        .sum();
                    proptest::prop_assert_eq!(idx.measure(&rect.center, &r).unwrap().mass, scan);
                }
            }
        }
    }
}
