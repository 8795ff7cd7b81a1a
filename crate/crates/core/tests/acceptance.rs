//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use limdim::construction::{assign_measure, mass_conserved, Construction, RefineOptions, RefineRule};
use limdim::dimension::{dim_doubly_exponential, dim_general, dim_real, dim_rynne, WeightVector};
use limdim::estimator::{covering_counts, covering_counts_self_similar, holder_sweep, EstimateReport};
use limdim::exact::rat;
use limdim::sequences::{stats, SequenceSpec};
use limdim::systems::{SystemConfig, ThetaTable};
use limdim::{cli, Error, Level, System};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        ok: true,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        ok: false,
        detail: detail.into(),
    }
}

fn within_budget(o: Outcome, took: Duration, budget: Duration) -> Outcome {
    if o.ok && took > budget {
        return fail(format!("{} (took {:.2?}, budget {:.0?})", o.detail, took, budget));
    }
    o
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=6usize);
        let tau: f64 = rng.gen_range(0.01..0.99);
        let alpha: f64 = rng.gen_range(0.0..=1.0);
        let taus = vec![tau; n];
        let got = dim_real(&taus, alpha).unwrap().value;
        let closed = n as f64 * (1.0 - alpha * tau) / (tau + 1.0);
        worst = worst.max((got - closed).abs());

        let mixed: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
        let real = dim_real(&mixed, alpha).unwrap().value;
        let shifted = WeightVector::unit(mixed.iter().map(|t| t + 1.0).collect()).unwrap();
        let general = dim_general(&shifted, alpha).unwrap().value;
        worst = worst.max((real - general).abs());
    }
    let detail = format!("200 samples, max deviation {worst:.2e}");
    if worst <= 1e-12 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn criterion_2() -> Outcome {
    let system = System::new(SystemConfig::real(1, ThetaTable::homogeneous())).unwrap();
    let st = stats(&SequenceSpec::doubly_exponential(2, 2, 12), &system).unwrap();
    let dim = dim_doubly_exponential(&[0.5], 2.0).unwrap().value;
    let a_err = (st.alpha_finite - 1.0).abs();
    let d_err = (dim - 1.0 / 3.0).abs();
    let detail = format!("alpha_12 = {:.6} (|err| {a_err:.2e}), dim = {dim:.15}", st.alpha_finite);
    if a_err < 1e-3 && d_err < 1e-12 {
        pass(detail)
    } else {
        fail(detail)
    }
}

struct AxiomRun {
    label: String,
    separated: bool,
    maximal: bool,
    maximal_closed: bool,
}

fn check_axioms(system: &System, level: Level, seed: u64) -> AxiomRun {
    let sep = system.verify_separated(&level).unwrap();
    let probes = system.sample_probes(&level, 1000, seed);
    let max = system.verify_maximal(&level, &probes).unwrap();
    AxiomRun {
        label: format!("{} @ {}", system.config.kind_name(), level),
        separated: sep.ok,
        maximal: max.ok,
        maximal_closed: max.ok_closed,
    }
}

fn criterion_3() -> Outcome {
    let mut runs = Vec::new();
    let homogeneous = System::new(SystemConfig::real(1, ThetaTable::homogeneous())).unwrap();
    let shifted = System::new(SystemConfig::real(
        1,
        ThetaTable::constant(vec![rat(1, 3)])
            .with_level(7, vec![rat(5, 7)])
            .with_level(10000, vec![rat(1, 2)]),
    ))
    .unwrap();
    for q in [1u64, 2, 7, 100, 997, 10000] {
        runs.push(check_axioms(&homogeneous, Level::int(q), q));
        runs.push(check_axioms(&shifted, Level::int(q), q + 1));
    }
    for (p, kmax) in [(2u32, 12u64), (3, 8), (5, 5)] {
        let s = System::new(SystemConfig::padic(p, 1)).unwrap();
        for k in 1..=kmax {
            runs.push(check_axioms(&s, Level::int(k), k));
        }
    }
    let g = System::new(SystemConfig::gaussian()).unwrap();
    for a in 1i64..=14 {
        for b in 0..=a {
            if a * a + b * b <= 200 {
                runs.push(check_axioms(&g, Level::gaussian(a, b), (a * 31 + b) as u64));
            }
        }
    }
    let cantor = System::new(SystemConfig::missing_digit(3, &[0, 2])).unwrap();
    let fifths = System::new(SystemConfig::missing_digit(5, &[0, 2, 4])).unwrap();
    for k in 1..=12u64 {
        runs.push(check_axioms(&cantor, Level::int(k), k));
        runs.push(check_axioms(&fifths, Level::int(k), k + 100));
    }
    let bad: Vec<&AxiomRun> = runs.iter().filter(|r| !(r.separated && r.maximal)).collect();
    if bad.is_empty() {
        return pass(format!("{} levels separated and maximal", runs.len()));
    }
    let closed_only = bad.iter().all(|r| r.separated && r.maximal_closed);
    let names: Vec<&str> = bad.iter().take(4).map(|r| r.label.as_str()).collect();
    fail(format!(
        "{}/{} levels fail strict maximality (e.g. {}){}",
        bad.len(),
        runs.len(),
        names.join(", "),
        if closed_only {
            "; all of them are separated and maximal for closed balls: a probe congruent to a level point \
             mod p^k but not equal to it sits at distance exactly p^-k"
        } else {
            ""
        }
    ))
}

fn criterion_4() -> Outcome {
    let cases: Vec<(System, Level)> = vec![
        (System::new(SystemConfig::real(1, ThetaTable::homogeneous())).unwrap(), Level::int(1000)),
        (
            System::new(SystemConfig::real(2, ThetaTable::constant(vec![rat(1, 4), rat(2, 3)]))).unwrap(),
            Level::int(60),
        ),
        (System::new(SystemConfig::padic(3, 1)).unwrap(), Level::int(6)),
        (System::new(SystemConfig::padic(2, 1)).unwrap(), Level::int(9)),
        (System::new(SystemConfig::gaussian()).unwrap(), Level::gaussian(12, 5)),
        (System::new(SystemConfig::missing_digit(3, &[0, 2])).unwrap(), Level::int(9)),
        (System::new(SystemConfig::missing_digit(5, &[0, 2, 4])).unwrap(), Level::int(5)),
    ];
    let mut total = 0;
    let mut violations = Vec::new();
    for (i, (system, level)) in cases.iter().enumerate() {
        for (center, r) in cli::bracket_probes(system, level, 1000, 400 + i as u64).unwrap() {
            let rep = system.count_in_ball(level, &center, &r).unwrap();
            total += 1;
            if rep.per_factor.iter().any(|f| !f.within_bounds) {
                violations.push(format!("{} @ {} r={}", system.config.kind_name(), level, r));
            }
        }
    }
    let detail = format!("{total} balls over {} systems, {} violations", cases.len(), violations.len());
    if violations.is_empty() {
        pass(detail)
    } else {
        fail(format!("{detail}; first: {}", violations[0]))
    }
}

/// Words over {0, 2} of length `k_J` whose prefix values stay within `3^-(tau k_{j-1})` of
/// the previous prefix, counted with plain integer arithmetic.
fn enumerate_cantor_words(ks: &[u32]) -> u64 {
    fn go(ks: &[u32], j: usize, prefix: u128) -> u64 {
        if j == ks.len() {
            return 1;
        }
        let (k0, k1) = (ks[j - 1], ks[j]);
        let step = k1 - k0;
        let base = prefix * 3u128.pow(step);
        // |U - base| < 3^(k1 - 3 k0 / 2), every U = base + sum of digits in the new positions.
        let bound = 3f64.powf(k1 as f64 - 1.5 * k0 as f64);
        let mut total = 0;
        for tail in 0..(1u64 << step) {
            let mut u = 0u128;
            for b in (0..step).rev() {
                u = u * 3 + if tail >> b & 1 == 1 { 2 } else { 0 };
            }
            if (u as f64) < bound {
                total += go(ks, j + 1, base + u);
            }
        }
        total
    }
    let first = ks[0];
    (0..(1u64 << first))
        .map(|w| {
            let mut u = 0u128;
            for b in (0..first).rev() {
                u = u * 3 + if w >> b & 1 == 1 { 2 } else { 0 };
            }
            go(ks, 1, u)
        })
        .sum()
}

fn criterion_5() -> Outcome {
    let system = System::new(SystemConfig::missing_digit(3, &[0, 2])).unwrap();
    let tau = [rat(3, 2)];
    let cover = RefineOptions {
        rule: RefineRule::Cover,
        strict_containment: false,
    };
    let seq5 = SequenceSpec::geometric(2, 2, 5);
    let levels5 = seq5.levels().unwrap();
    let construction = Construction::build(&system, &levels5, &tau, 5, cover).unwrap();
    let series = covering_counts(&system, &construction, 1).unwrap();
    let n5 = series.entries[4].count.clone();
    let oracle = enumerate_cantor_words(&[2, 4, 8, 16, 32]);
    let alpha5 = stats(&seq5, &system).unwrap().alpha_finite;
    let w = WeightVector::new(vec![1.5], system.deltas()).unwrap();
    let finite = dim_general(&w, alpha5).unwrap().value;
    let report = EstimateReport::new(series.clone(), 3, finite, Some(dim_general(&w, 1.0).unwrap().value)).unwrap();

    let levels6 = SequenceSpec::geometric(2, 2, 6).levels().unwrap();
    let deep = covering_counts_self_similar(&system, &levels6, &tau, 6, cover).unwrap();
    let agree = deep.entries[..5]
        .iter()
        .zip(&series.entries)
        .all(|(a, b)| a.count == b.count);
    let singles: Vec<f64> = deep.entries.iter().map(|e| e.log_count / e.neg_log_radius).collect();
    let limit = report.formula_value.unwrap();
    let monotone = singles.windows(2).all(|w| w[1] < w[0]) && singles.iter().all(|s| *s > limit);

    let mut problems = Vec::new();
    if n5 != BigUint::from(131072u32) || n5 != BigUint::from(oracle) {
        problems.push(format!("N5 = {n5}, oracle {oracle}"));
    }
    if (report.single_point - 0.2234).abs() > 1e-4 {
        problems.push(format!("single-point {:.6}", report.single_point));
    }
    if (alpha5 - 0.9375).abs() > 1e-12 || report.abs_error > 0.01 {
        problems.push(format!("finite formula {:.6}, alpha5 {alpha5}", finite));
    }
    if !agree || !monotone {
        problems.push(format!("depth-6 path {singles:?} vs limit {limit:.5}"));
    }
    let detail = format!(
        "N5 = {n5} (oracle {oracle}), single-point {:.5}, finite formula {:.5}, depth 6 {:.5} -> {:.5}",
        report.single_point, finite, singles[5], limit
    );
    if problems.is_empty() {
        pass(detail)
    } else {
        fail(format!("{detail}; {}", problems.join("; ")))
    }
}

fn criterion_6() -> Outcome {
    let system = System::new(SystemConfig::missing_digit(3, &[0, 2])).unwrap();
    let tau = [rat(3, 2)];
    let cover = RefineOptions {
        rule: RefineRule::Cover,
        strict_containment: false,
    };
    let seq = SequenceSpec::geometric(2, 2, 5);
    let levels = seq.levels().unwrap();
    let shallow = Construction::build(&system, &levels, &tau, 3, cover).unwrap();
    let tree = assign_measure(&shallow.layers).unwrap();
    let conserved = mass_conserved(&tree);

    let alpha5 = stats(&seq, &system).unwrap().alpha_finite;
    let w = WeightVector::new(vec![1.5], system.deltas()).unwrap();
    let finite = dim_general(&w, alpha5).unwrap().value;
    let s = finite - 0.05;
    let sweep = holder_sweep(&system, &levels, &tau, &[3, 4, 5], cover, s, 10_000, 2024).unwrap();
    let ratios: Vec<String> = sweep.reports.iter().map(|r| format!("{:.4}", r.max_ratio)).collect();
    let exponent = sweep.reports.last().unwrap().empirical_exponent.unwrap_or(f64::NAN);
    let detail = format!(
        "mass exact at {} layers: {conserved}; s = {s:.5}, max ratio by depth [{}], growth {:.3}, exponent {exponent:.4}",
        tree.masses.len(),
        ratios.join(", "),
        sweep.growth_factor
    );
    if conserved && !sweep.growing && exponent >= s {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn criterion_7() -> Outcome {
    let theta = ThetaTable::constant(vec![rat(0, 1)]).with_level(3, vec![rat(1, 4)]);
    let system = System::new(SystemConfig::real(1, theta)).unwrap();
    let levels = SequenceSpec::explicit_ints(&[2, 3]).levels().unwrap();
    let lib = Construction::build(&system, &levels, &[rat(4, 1)], 2, RefineOptions::default());
    let lib_ok = matches!(lib, Err(Error::EmptyRefinement { layer: 2, parent: 0, .. }));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("disjoint.json");
    std::fs::write(
        &path,
        r#"{"system": {"kind": "real_lattice", "theta": {"default": [0], "levels": {"3": ["1/4"]}}},
            "sequence": {"form": "explicit_list", "levels": [2, 3]},
            "weights": {"taus": [4]}, "estimator": {"rule": "cantor"}}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_limdim"))
        .args(["layers", "-c"])
        .arg(&path)
        .output()
        .unwrap();
    let code = out.status.code();
    let detail = format!(
        "library: {}, CLI exit {:?}: {}",
        if lib_ok { "EmptyRefinement at layer 2, parent #0" } else { "unexpected result" },
        code,
        String::from_utf8_lossy(&out.stderr).trim()
    );
    if lib_ok && code == Some(3) {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut accepted = 0;
    let mut weak = 0;
    let mut strict_checked = 0;
    while accepted < 500 {
        let n = rng.gen_range(1..=6usize);
        let taus: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..2.0)).collect();
        if taus.iter().sum::<f64>() <= 1.0 {
            continue;
        }
        let tmax = taus.iter().cloned().fold(0.0, f64::max);
        let alpha = rng.gen_range(0.0..=1.0f64.min(1.0 / tmax));
        accepted += 1;
        let rynne = dim_rynne(&taus).unwrap().value;
        let real = dim_real(&taus, alpha).unwrap().value;
        if rynne < real || (alpha > 0.01 && rynne <= real) {
            weak += 1;
        }
        if alpha > 0.01 {
            strict_checked += 1;
        }
    }
    let detail = format!("500 samples ({strict_checked} with alpha > 0.01), {weak} violations");
    if weak == 0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 8] = [
        ("formula reductions", criterion_1, 1),
        ("doubly exponential chain", criterion_2, 1),
        ("exact system axioms", criterion_3, 60),
        ("counting bracket", criterion_4, 60),
        ("Cantor box count vs formula", criterion_5, 60),
        ("measure machinery", criterion_6, 30),
        ("emptiness path", criterion_7, 1),
        ("limsup dominance", criterion_8, 1),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = within_budget(run(), start.elapsed(), Duration::from_secs(*budget));
        let took = start.elapsed();
        println!(
            "criterion {}: {} - {name} [{:.2?}] {}",
            i + 1,
            if outcome.ok { "PASS" } else { "FAIL" },
            took,
            outcome.detail
        );
        if !outcome.ok {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
