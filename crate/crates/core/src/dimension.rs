//! Closed-form Hausdorff dimension formulas for weighted liminf sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TIE: f64 = 1e-12;

/// Exponents `tau_i` with the Ahlfors exponents `delta_i` of the factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub taus: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl WeightVector {
    pub fn new(taus: Vec<f64>, deltas: Vec<f64>) -> Result<Self> {
        let w = WeightVector { taus, deltas };
        w.validate()?;
        Ok(w)
    }

    /// Unit Ahlfors exponents.
    pub fn unit(taus: Vec<f64>) -> Result<Self> {
        let n = taus.len();
        Self::new(taus, vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.taus.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::domain("weight vector is empty"));
        }
        if self.taus.len() != self.deltas.len() {
            return Err(Error::domain(format!(
                "{} exponents but {} Ahlfors exponents",
                self.taus.len(),
                self.deltas.len()
            )));
        }
        positive(&self.taus, "τ")?;
        positive(&self.deltas, "δ")
    }
}

fn positive(xs: &[f64], name: &str) -> Result<()> {
    for (i, x) in xs.iter().enumerate() {
        if !(x.is_finite() && *x > 0.0) {
            return Err(Error::domain(format!("{name}_{} must be positive, got {x}", i + 1)));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionMode {
    General,
    Real,
    DoublyExponential,
    Rynne,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionResult {
    pub value: f64,
    pub candidates: Vec<f64>,
    /// 1-based axes attaining the minimum within `1e-12`.
    pub argmin: Vec<usize>,
    pub admissible: bool,
    pub mode: DimensionMode,
    pub warnings: Vec<String>,
}

impl DimensionResult {
    fn from_candidates(candidates: Vec<f64>, mode: DimensionMode, warnings: Vec<String>) -> Self {
        let value = candidates.iter().cloned().fold(f64::INFINITY, f64::min);
        let argmin = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| (*c - value).abs() <= TIE)
            .map(|(i, _)| i + 1)
            .collect();
        DimensionResult {
            value,
            candidates,
            argmin,
            admissible: warnings.is_empty(),
            mode,
            warnings,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::domain(format!("α must be finite and non-negative, got {alpha}")));
    }
    Ok(())
}

fn general_candidates(taus: &[f64], deltas: &[f64], alpha: f64) -> Vec<f64> {
    let sum_delta: f64 = deltas.iter().sum();
    let drift: f64 = taus.iter().zip(deltas).map(|(t, d)| (t - 1.0) * d).sum();
    taus.iter()
        .map(|tk| {
            let gain: f64 = taus
                .iter()
                .zip(deltas)
                .filter(|(tj, _)| tk >= tj)
                .map(|(tj, d)| (tk - tj) * d)
                .sum();
            (sum_delta - alpha * drift + gain) / tk
        })
        .collect()
}

/// Dimension of the liminf set for general abstract-rational systems.
pub fn dim_general(w: &WeightVector, alpha: f64) -> Result<DimensionResult> {
    w.validate()?;
    check_alpha(alpha)?;
    let mut warnings = Vec::new();
    for (i, t) in w.taus.iter().enumerate() {
        if *t <= 1.0 {
            warnings.push(format!("τ_{} ≤ 1", i + 1));
        }
    }
    let tmin = w.taus.iter().cloned().fold(f64::INFINITY, f64::min);
    if tmin > 1.0 && alpha > 1.0 / (tmin - 1.0) {
        warnings.push(format!("α = {alpha} exceeds 1/(min τ - 1) = {}", 1.0 / (tmin - 1.0)));
    }
    Ok(DimensionResult::from_candidates(
        general_candidates(&w.taus, &w.deltas, alpha),
        DimensionMode::General,
        warnings,
    ))
}

/// Real weighted approximation: `tau_i > 0` measured against `q^-(1 + tau_i)`.
pub fn dim_real(taus: &[f64], alpha: f64) -> Result<DimensionResult> {
    if taus.is_empty() {
        return Err(Error::domain("weight vector is empty"));
    }
    positive(taus, "τ")?;
    check_alpha(alpha)?;
    let n = taus.len() as f64;
    let sum: f64 = taus.iter().sum();
    let candidates: Vec<f64> = taus
        .iter()
        .map(|tk| {
            let gain: f64 = taus.iter().filter(|ti| tk >= ti).map(|ti| tk - ti).sum();
            (n - alpha * sum + gain) / (tk + 1.0)
        })
        .collect();
    let shifted = WeightVector::unit(taus.iter().map(|t| t + 1.0).collect())?;
    let general = general_candidates(&shifted.taus, &shifted.deltas, alpha);
    for (a, b) in candidates.iter().zip(&general) {
        if (a - b).abs() > TIE * (1.0 + a.abs()) {
            return Err(Error::Structure(format!(
                "real and general formulas disagree: {a} vs {b}"
            )));
        }
    }
    let mut warnings = Vec::new();
    let tmin = taus.iter().cloned().fold(f64::INFINITY, f64::min);
    if alpha > 1.0 / tmin {
        warnings.push(format!("α = {alpha} exceeds 1/min τ = {}", 1.0 / tmin));
    }
    Ok(DimensionResult::from_candidates(candidates, DimensionMode::Real, warnings))
}

/// Real approximation along `{a^(k^c)}`, where `alpha = 1/(k - 1)`; `k = inf` gives `alpha = 0`.
pub fn dim_doubly_exponential(taus: &[f64], k: f64) -> Result<DimensionResult> {
    if !(k > 1.0) {
        return Err(Error::domain(format!("k must exceed 1, got {k}")));
    }
    let tmax = taus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(tmax < k - 1.0) {
        return Err(Error::Admissibility(format!(
            "max τ = {tmax} must be below k - 1 = {}",
            k - 1.0
        )));
    }
    let alpha = if k.is_infinite() { 0.0 } else { 1.0 / (k - 1.0) };
    let mut r = dim_real(taus, alpha)?;
    r.mode = DimensionMode::DoublyExponential;
    Ok(r)
}

/// The limsup (Rynne) value, for comparison.
pub fn dim_rynne(taus: &[f64]) -> Result<DimensionResult> {
    if taus.is_empty() {
        return Err(Error::domain("weight vector is empty"));
    }
    positive(taus, "τ")?;
    let sum: f64 = taus.iter().sum();
    if sum <= 1.0 {
        return Err(Error::domain(format!("Στ must exceed 1, got {sum}")));
    }
    let n = taus.len() as f64;
    let candidates = taus
        .iter()
        .map(|tj| {
            let gain: f64 = taus.iter().filter(|ti| tj > ti).map(|ti| tj - ti).sum();
            (n + 1.0 + gain) / (tj + 1.0)
        })
        .collect();
    Ok(DimensionResult::from_candidates(candidates, DimensionMode::Rynne, Vec::new()))
}

/// Eventually-always set: the supremum over shifts of the liminf dimensions.
pub fn dim_eventually(w: &WeightVector, shifted_alphas: &[f64]) -> Result<DimensionResult> {
    let mut best: Option<DimensionResult> = None;
    for a in shifted_alphas {
        let r = dim_general(w, *a)?;
        if best.as_ref().is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::domain("no shifted statistics given"))
}
