//! Level sequences `S = {q_j}`, their growth statistics, shifts and admissibility.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, BetaPower, Rational};
use crate::systems::{Level, System};

/// How the levels are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SequenceForm {
    ExplicitList {
        levels: Vec<Level>,
    },
    /// `q_c = a^(b^(c-1))` for `c = start, start + 1, ...`; `start = 1` gives `a, a^b, a^(b^2), ...`.
    DoublyExponential {
        a: u64,
        b: u64,
        #[serde(default = "one")]
        start: u64,
    },
    /// Exponent-indexed levels `k_j = first * ratio^(j-1)`.
    GeometricExponents {
        #[serde(alias = "base")]
        first: u64,
        ratio: u64,
    },
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    #[serde(flatten)]
    pub form: SequenceForm,
    /// Truncation depth `J`; explicit lists default to their length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
}

impl SequenceSpec {
    pub fn explicit(levels: Vec<Level>) -> Self {
        SequenceSpec {
            form: SequenceForm::ExplicitList { levels },
            depth: None,
        }
    }

    pub fn explicit_ints(levels: &[u64]) -> Self {
        Self::explicit(levels.iter().map(|q| Level::int(*q)).collect())
    }

    pub fn doubly_exponential(a: u64, b: u64, depth: usize) -> Self {
        SequenceSpec {
            form: SequenceForm::DoublyExponential { a, b, start: 1 },
            depth: Some(depth),
        }
    }

    pub fn geometric(first: u64, ratio: u64, depth: usize) -> Self {
        SequenceSpec {
            form: SequenceForm::GeometricExponents { first, ratio },
            depth: Some(depth),
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = Some(depth);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.form {
            SequenceForm::ExplicitList { levels } => {
                if levels.is_empty() {
                    return Err(Error::validation("explicit sequence is empty"));
                }
                if let Some(d) = self.depth {
                    if d > levels.len() {
                        return Err(Error::Range(format!(
                            "depth {d} exceeds the {} listed levels",
                            levels.len()
                        )));
                    }
                }
            }
            SequenceForm::DoublyExponential { a, b, start } => {
                if *a < 2 || *b < 2 {
                    return Err(Error::validation(format!("doubly exponential family needs a, b >= 2, got a = {a}, b = {b}")));
                }
                if *start < 1 {
                    return Err(Error::validation("doubly exponential index starts at 1"));
                }
            }
            SequenceForm::GeometricExponents { first, ratio } => {
                if *first < 1 {
                    return Err(Error::validation("geometric exponents need a positive first term"));
                }
                if *ratio < 2 {
                    return Err(Error::validation(format!("geometric ratio must exceed 1, got {ratio}")));
                }
            }
        }
        if self.depth == Some(0) {
            return Err(Error::validation("depth must be positive"));
        }
        if self.depth.is_none() && !matches!(self.form, SequenceForm::ExplicitList { .. }) {
            return Err(Error::validation("closed-form sequences need a depth"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        match (&self.form, self.depth) {
            (_, Some(d)) => d,
            (SequenceForm::ExplicitList { levels }, None) => levels.len(),
            _ => 0,
        }
    }

    /// The first `depth` levels.
    pub fn levels(&self) -> Result<Vec<Level>> {
        self.validate()?;
        let depth = self.depth();
        Ok(match &self.form {
            SequenceForm::ExplicitList { levels } => levels[..depth].to_vec(),
            SequenceForm::DoublyExponential { a, b, start } => (0..depth as u64)
                .map(|i| Level::Pow {
                    base: BigUint::from(*a),
                    exp: num_traits::pow(BigUint::from(*b), (start - 1 + i) as usize),
                })
                .collect(),
            SequenceForm::GeometricExponents { first, ratio } => (0..depth)
                .map(|i| Level::Int(BigUint::from(*first) * num_traits::pow(BigUint::from(*ratio), i)))
                .collect(),
        })
    }

    /// Closed-form value of `alpha_S`, when the family has one.
    pub fn alpha_limit(&self) -> Option<f64> {
        match &self.form {
            SequenceForm::ExplicitList { .. } => None,
            SequenceForm::DoublyExponential { b, .. } => Some(1.0 / (*b as f64 - 1.0)),
            SequenceForm::GeometricExponents { ratio, .. } => Some(1.0 / (*ratio as f64 - 1.0)),
        }
    }
}

/// Finite-depth growth statistics of a sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceStats {
    pub depth: usize,
    /// Minimum of `log beta(q_j) / log beta(q_{j-1})` over the available terms.
    pub h_inf: f64,
    /// Minimum over the later half of the ratios.
    pub h_liminf: f64,
    /// `sum_{i<J} log beta(q_i) / log beta(q_J)`.
    pub alpha_finite: f64,
    pub alpha_limit: Option<f64>,
    pub vanishing_ok: bool,
    pub log_betas: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `alpha` evaluated at each depth `j = 2..=J`.
    pub alpha_series: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `a / b` for two powers, exactly when they share a base.
fn log_ratio(a: &BetaPower, b: &BetaPower, la: f64, lb: f64) -> f64 {
    if a.base == b.base && a.base > BigUint::one() && !b.exp.is_zero() {
        exact::to_f64(&(&a.exp / &b.exp))
    } else {
        la / lb
    }
}

pub fn stats(seq: &SequenceSpec, system: &System) -> Result<SequenceStats> {
    let levels = seq.levels()?;
    let depth = levels.len();
    if depth < 3 {
        return Err(Error::Range(format!("statistics need depth >= 3, got {depth}")));
    }
    let weights = levels
        .iter()
        .map(|l| system.beta(l))
        .collect::<Result<Vec<_>>>()?;
    for (j, w) in weights.windows(2).enumerate() {
        if w[1].beta.cmp_power(&w[0].beta)? != Ordering::Greater {
            return Err(Error::Admissibility(format!(
                "beta not strictly increasing at index {} ({} then {})",
                j + 2,
                w[0].level,
                w[1].level
            )));
        }
    }
    if weights[0].beta.cmp_rational(&Rational::one())? != Ordering::Greater {
        return Err(Error::Admissibility(format!(
            "beta(q_1) must exceed 1, got level {}",
            weights[0].level
        )));
    }
    let log_betas: Vec<f64> = weights.iter().map(|w| w.log_beta).collect();
    let ratios: Vec<f64> = weights
        .windows(2)
        .map(|w| log_ratio(&w[1].beta, &w[0].beta, w[1].log_beta, w[0].log_beta))
        .collect();
    let h_inf = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let tail = ratios.len() / 2;
    let h_liminf = ratios[tail..].iter().cloned().fold(f64::INFINITY, f64::min);

    let same_base = weights.iter().all(|w| w.beta.base == weights[0].beta.base) && weights[0].beta.base > BigUint::one();
    let alpha_series: Vec<f64> = (1..depth)
        .map(|j| {
            if same_base {
                let num: Rational = weights[..j].iter().map(|w| w.beta.exp.clone()).sum();
                exact::to_f64(&(num / &weights[j].beta.exp))
            } else {
                log_betas[..j].iter().sum::<f64>() / log_betas[j]
            }
        })
        .collect();
    let alpha_finite = *alpha_series.last().unwrap();

    let v: Vec<f64> = log_betas
        .iter()
        .enumerate()
        .map(|(j, l)| (j + 1) as f64 / l)
        .collect();
    let vanishing_ok = v[depth - 1] < v[depth - 2] && v[depth - 1] < v[0];

    let mut warnings = Vec::new();
    if depth == 3 {
        warnings.push("shallow depth: statistics from only two ratios".to_string());
    }
    if !vanishing_ok {
        warnings.push("j / log beta(q_j) is not decreasing at this depth".to_string());
    }
    Ok(SequenceStats {
        depth,
        h_inf,
        h_liminf,
        alpha_finite,
        alpha_limit: seq.alpha_limit(),
        vanishing_ok,
        log_betas,
        ratios,
        alpha_series,
        warnings,
    })
}

/// Drops the first `t` terms.
pub fn shift(seq: &SequenceSpec, t: usize) -> Result<SequenceSpec> {
    seq.validate()?;
    let depth = seq.depth();
    if t >= depth {
        return Err(Error::Range(format!("cannot shift by {t} a sequence of depth {depth}")));
    }
    let form = match &seq.form {
        SequenceForm::ExplicitList { levels } => SequenceForm::ExplicitList {
            levels: levels[t..].to_vec(),
        },
        SequenceForm::DoublyExponential { a, b, start } => SequenceForm::DoublyExponential {
            a: *a,
            b: *b,
            start: start + t as u64,
        },
        SequenceForm::GeometricExponents { first, ratio } => {
            let first = (*ratio as u128)
                .checked_pow(t as u32)
                .and_then(|r| r.checked_mul(*first as u128))
                .and_then(|v| u64::try_from(v).ok())
                .ok_or_else(|| Error::Range(format!("shifted first exponent overflows at t = {t}")))?;
            SequenceForm::GeometricExponents { first, ratio: *ratio }
        }
    };
    Ok(SequenceSpec {
        form,
        depth: Some(depth - t),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibilityMode {
    /// `h_S > tau_i > 1`.
    General,
    /// `h_S - 1 > tau_i > 0`.
    RealCorollary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Admissibility {
    pub ok: bool,
    pub diagnostics: Vec<String>,
}

pub fn admissible(stats: &SequenceStats, taus: &[f64], mode: AdmissibilityMode) -> Admissibility {
    admissible_h(stats.h_inf, taus, mode)
}

/// Admissibility against an explicit `h`.
pub fn admissible_h(h: f64, taus: &[f64], mode: AdmissibilityMode) -> Admissibility {
    let (lo, hi, lo_name, hi_name) = match mode {
        AdmissibilityMode::General => (1.0, h, "1", "h_S"),
        AdmissibilityMode::RealCorollary => (0.0, h - 1.0, "0", "h_S - 1"),
    };
    let mut diagnostics = Vec::new();
    for (i, t) in taus.iter().enumerate() {
        if !(*t > lo) {
            diagnostics.push(format!("τ_{} ≤ {lo_name} (τ_{} = {t})", i + 1, i + 1));
        }
        if !(*t < hi) {
            diagnostics.push(format!("τ_{} ≥ {hi_name} (τ_{} = {t}, {hi_name} = {hi})", i + 1, i + 1));
        }
    }
    Admissibility {
        ok: diagnostics.is_empty(),
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{SystemConfig, ThetaTable};
    use proptest::prelude::*;

    fn real() -> System {
        System::new(SystemConfig::real(1, ThetaTable::homogeneous())).unwrap()
    }

    fn cantor() -> System {
        System::new(SystemConfig::missing_digit(3, &[0, 2])).unwrap()
    }

    #[test]
    fn doubly_exponential_two_two() {
        let seq = SequenceSpec::doubly_exponential(2, 2, 5);
        let levels = seq.levels().unwrap();
        let vals: Vec<BigUint> = levels.iter().map(|l| l.index().unwrap()).collect();
        assert_eq!(vals, [2u32, 4, 16, 256, 65536].map(BigUint::from).to_vec());
        let s = stats(&seq, &real()).unwrap();
        assert_eq!(s.h_inf, 2.0);
        assert_eq!(s.alpha_finite, 0.9375);
        assert_eq!(s.alpha_limit, Some(1.0));
        assert!(s.vanishing_ok);
    }

    #[test]
    fn geometric_over_cantor() {
        let s = stats(&SequenceSpec::geometric(2, 2, 5), &cantor()).unwrap();
        assert_eq!(s.h_inf, 2.0);
        assert_eq!(s.alpha_finite, 0.9375);
    }

    #[test]
    fn powers_of_two_are_too_slow() {
        let s = stats(&SequenceSpec::explicit_ints(&[2, 4, 8, 16]), &real()).unwrap();
        assert!((s.h_inf - 4.0 / 3.0).abs() < 1e-12);
        assert!(!admissible(&s, &[1.5], AdmissibilityMode::General).ok);
    }

    #[test]
    fn non_monotone_rejected() {
        let err = stats(&SequenceSpec::explicit_ints(&[2, 8, 4]), &real()).unwrap_err();
        assert!(matches!(err, Error::Admissibility(ref m) if m.contains("beta not strictly increasing")));
    }

    #[test]
    fn shallow_depth_warns() {
        let s = stats(&SequenceSpec::doubly_exponential(2, 2, 3), &real()).unwrap();
        assert!(s.warnings.iter().any(|w| w.contains("shallow depth")));
        assert!(matches!(
            stats(&SequenceSpec::doubly_exponential(2, 2, 2), &real()),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn shifts() {
        let s = shift(&SequenceSpec::explicit_ints(&[2, 4, 16, 256]), 1).unwrap();
        assert_eq!(s, SequenceSpec::explicit_ints(&[4, 16, 256]).with_depth(3));
        let d = shift(&SequenceSpec::doubly_exponential(2, 3, 6), 2).unwrap();
        assert_eq!(
            d.form,
            SequenceForm::DoublyExponential { a: 2, b: 3, start: 3 }
        );
        assert!(matches!(
            shift(&SequenceSpec::explicit_ints(&[2, 4, 16]), 3),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn shift_is_stable_at_depth_twelve() {
        let seq = SequenceSpec::doubly_exponential(2, 2, 12);
        let a = stats(&seq, &real()).unwrap().alpha_finite;
        let b = stats(&shift(&seq, 1).unwrap(), &real()).unwrap().alpha_finite;
        assert!((a - b).abs() < 1e-3);
    }

    #[test]
    fn admissibility_messages() {
        let ok = admissible_h(2.0, &[1.5], AdmissibilityMode::General);
        assert!(ok.ok);
        assert!(admissible_h(2.0, &[0.5, 0.8], AdmissibilityMode::RealCorollary).ok);
        let bad = admissible_h(2.0, &[2.5], AdmissibilityMode::General);
        assert!(!bad.ok);
        assert!(bad.diagnostics[0].starts_with("τ_1 ≥ h_S"));
        let low = admissible_h(2.0, &[0.9], AdmissibilityMode::General);
        assert!(low.diagnostics[0].starts_with("τ_1 ≤ 1"));
        // Equality is refused.
        assert!(!admissible_h(2.0, &[2.0], AdmissibilityMode::General).ok);
    }

    proptest! {
        #[test]
        fn doubly_exponential_ratio_is_b(a in 2u64..6, b in 2u64..5, depth in 3usize..9) {
            let s = stats(&SequenceSpec::doubly_exponential(a, b, depth), &real()).unwrap();
            for r in &s.ratios {
                prop_assert_eq!(*r, b as f64);
            }
            for w in s.alpha_series.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!(s.alpha_finite <= 1.0 / (b as f64 - 1.0) + 1e-12);
        }

        #[test]
        fn geometric_domination(levels in proptest::collection::vec(2u64..40, 3..8)) {
            // Strictly increasing exponents with ratios above 1.
            let mut ks = Vec::new();
            let mut acc = 1u64;
            for step in levels {
                acc *= step;
                ks.push(acc);
            }
            let s = stats(&SequenceSpec::explicit_ints(&ks), &cantor()).unwrap();
            let bound: f64 = (1..s.depth).map(|i| s.h_inf.powi(-(i as i32))).sum();
            prop_assert!(s.alpha_finite <= bound + 1e-12);
        }
    }
}
