//! Command-line front end and the pipelines behind each subcommand.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Counting, Mode, RunConfig};
use crate::construction::{
    assign_measure, check_child_counts, check_nesting, check_rectangle_masses, mass_conserved, Construction,
};
use crate::dimension::{self, DimensionResult};
use crate::error::{Error, Result};
use crate::estimator::{self, EstimateReport, HolderSweep};
use crate::exact::{self, rational_from_f64, Rational};
use crate::sequences::{self, SequenceForm, SequenceStats};
use crate::systems::{Level, System, SystemConfig, SystemKind, ThetaTable};

/// Exit code for a failed `verify` run.
pub const EXIT_VERIFY_FAILED: i32 = 1;

#[derive(Parser, Debug)]
#[command(name = "limdim", version, about = "Liminf weighted approximation: dimensions, constructions and estimates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treat admissibility warnings as errors.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Growth statistics of the sequence.
    Stats(Common),
    /// Dimension formula for the configured mode.
    Dim(Common),
    /// Export the construction as JSON lines.
    Layers(Common),
    /// Covering counts and slope estimate.
    Estimate(Common),
    /// Empirical Hölder exponent of the mass distribution.
    Holder(Common),
    /// Exact checks of the system axioms and the construction.
    Verify(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Stats(c)
            | Command::Dim(c)
            | Command::Layers(c)
            | Command::Estimate(c)
            | Command::Holder(c)
            | Command::Verify(c) => c,
        }
    }
}

fn default_system() -> SystemConfig {
    SystemConfig::real(1, ThetaTable::homogeneous())
}

fn system_or_default(cfg: &RunConfig) -> Result<System> {
    System::new(cfg.system.clone().unwrap_or_else(default_system))
}

pub fn run_stats(cfg: &RunConfig) -> Result<SequenceStats> {
    sequences::stats(cfg.sequence()?, &system_or_default(cfg)?)
}

fn strict_check(result: DimensionResult, strict: bool) -> Result<DimensionResult> {
    if strict && !result.admissible {
        return Err(Error::Admissibility(result.warnings.join("; ")));
    }
    Ok(result)
}

fn sequence_alpha(cfg: &RunConfig) -> Result<f64> {
    if let Some(a) = cfg.alpha {
        return Ok(a);
    }
    let seq = cfg.sequence()?;
    match seq.alpha_limit() {
        Some(a) => Ok(a),
        None => Ok(run_stats(cfg)?.alpha_finite),
    }
}

pub fn run_dim(cfg: &RunConfig, strict: bool) -> Result<DimensionResult> {
    let taus = cfg.taus_f64()?;
    let result = match cfg.mode {
        Mode::General => dimension::dim_general(&cfg.weight_vector()?, sequence_alpha(cfg)?)?,
        Mode::Real => dimension::dim_real(&taus, sequence_alpha(cfg)?)?,
        Mode::DoublyExponential => {
            let k = match (cfg.k, cfg.sequence.as_ref().map(|s| &s.form)) {
                (Some(k), _) => k,
                (None, Some(SequenceForm::DoublyExponential { b, .. })) => *b as f64,
                _ => return Err(Error::validation("doubly exponential mode needs k or a doubly exponential sequence")),
            };
            dimension::dim_doubly_exponential(&taus, k)?
        }
        Mode::Rynne => dimension::dim_rynne(&taus)?,
    };
    strict_check(result, strict)
}

/// `sum_{i<J} log beta(q_i) / log beta(q_J)` for the first `depth` levels.
pub fn finite_alpha(system: &System, levels: &[Level], depth: usize) -> Result<f64> {
    if depth == 0 || depth > levels.len() {
        return Err(Error::Range(format!("depth {depth} outside 1..={}", levels.len())));
    }
    let logs = levels[..depth]
        .iter()
        .map(|l| Ok(system.beta(l)?.log_beta))
        .collect::<Result<Vec<f64>>>()?;
    let last = logs[depth - 1];
    Ok(logs[..depth - 1].iter().sum::<f64>() / last)
}

pub struct Prepared {
    pub system: System,
    pub levels: Vec<Level>,
    pub taus: Vec<Rational>,
    pub depth: usize,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let system = cfg.system()?;
    let levels = cfg.sequence()?.levels()?;
    let depth = cfg.depth()?;
    if depth > levels.len() {
        return Err(Error::Range(format!("depth {depth} exceeds the sequence depth {}", levels.len())));
    }
    Ok(Prepared {
        system,
        levels,
        taus: cfg.taus()?.to_vec(),
        depth,
    })
}

pub fn build_construction(cfg: &RunConfig) -> Result<(Prepared, Construction)> {
    let p = prepare(cfg)?;
    let c = Construction::build(&p.system, &p.levels, &p.taus, p.depth, cfg.estimator.refine())?;
    Ok((p, c))
}

pub fn run_layers(cfg: &RunConfig) -> Result<String> {
    build_construction(cfg)?.1.export_lines()
}

pub fn run_estimate(cfg: &RunConfig) -> Result<EstimateReport> {
    let p = prepare(cfg)?;
    let opts = &cfg.estimator;
    let series = match opts.counting {
        Counting::Enumerate => {
            let c = Construction::build(&p.system, &p.levels, &p.taus, p.depth, opts.refine())?;
            estimator::covering_counts(&p.system, &c, opts.axis)?
        }
        Counting::SelfSimilar => {
            if opts.axis != 1 {
                return Err(Error::validation("self-similar counting uses axis 1"));
            }
            estimator::covering_counts_self_similar(&p.system, &p.levels, &p.taus, p.depth, opts.refine())?
        }
    };
    let w = cfg.weight_vector()?;
    let finite = dimension::dim_general(&w, finite_alpha(&p.system, &p.levels, p.depth)?)?.value;
    let limit = cfg
        .sequence()?
        .alpha_limit()
        .map(|a| dimension::dim_general(&w, a).map(|d| d.value))
        .transpose()?;
    EstimateReport::new(series, opts.window, finite, limit)
}

pub fn run_holder(cfg: &RunConfig) -> Result<HolderSweep> {
    let p = prepare(cfg)?;
    let opts = &cfg.estimator;
    let depths = opts
        .holder_depths
        .clone()
        .unwrap_or_else(|| (p.depth.min(3)..=p.depth).collect());
    let deepest = *depths.iter().max().ok_or_else(|| Error::validation("holder_depths is empty"))?;
    let s = match opts.holder_s {
        Some(s) => s,
        None => {
            let finite = dimension::dim_general(&cfg.weight_vector()?, finite_alpha(&p.system, &p.levels, deepest)?)?;
            (finite.value - opts.holder_margin).max(0.0)
        }
    };
    estimator::holder_sweep(&p.system, &p.levels, &p.taus, &depths, opts.refine(), s, opts.samples, opts.seed)
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    pub ok: bool,
    /// Whether a failure fails the run.
    pub required: bool,
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub checks: Vec<Check>,
    pub failures: Vec<String>,
}

fn default_levels(system: &System) -> Vec<Level> {
    match &system.config.kind {
        SystemKind::RealLattice { .. } => vec![Level::int(10), Level::int(37)],
        SystemKind::PAdic { .. } => vec![Level::int(2), Level::int(3)],
        SystemKind::Gaussian => vec![Level::gaussian(3, 2), Level::gaussian(5, 4)],
        SystemKind::MissingDigit { .. } => vec![Level::int(3), Level::int(5)],
    }
}

/// Random `(center, r)` with `beta^-1 < r <= r_max`, log-uniform in `r`.
pub fn bracket_probes(system: &System, level: &Level, count: usize, seed: u64) -> Result<Vec<(crate::Point, Rational)>> {
    let beta = system.beta(level)?;
    let centers = system.sample_probes(level, count, seed);
    let r_max = system
        .ahlfors()
        .iter()
        .map(|a| exact::to_f64(&a.r_max))
        .fold(f64::INFINITY, f64::min);
    let lo = -beta.log_beta;
    let hi = r_max.ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let floor = beta.beta.recip();
    centers
        .into_iter()
        .map(|c| {
            let mut r = rational_from_f64(rng.gen_range(lo..=hi).exp().min(r_max))?;
            if floor.cmp_rational(&r)? != std::cmp::Ordering::Less {
                r = floor.upper_rational(64)? * Rational::new(1025.into(), 1024.into());
            }
            Ok((c, r))
        })
        .collect()
}

pub fn run_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let system = cfg.system()?;
    let levels = match &cfg.sequence {
        Some(s) => {
            let l = s.levels()?;
            l[..l.len().min(3)].to_vec()
        }
        None => default_levels(&system),
    };
    let samples = cfg.estimator.samples;
    let seed = cfg.estimator.seed;
    let mut checks = Vec::new();
    for level in &levels {
        let tag = Some(level.to_string());
        match system.verify_separated(level) {
            Ok(rep) => checks.push(Check {
                name: "separated".into(),
                level: tag.clone(),
                ok: rep.ok,
                required: true,
                detail: serde_json::to_value(&rep)?,
            }),
            Err(Error::Resource { count, cap }) => {
                checks.push(skipped("separated", tag.clone(), &count.to_string(), cap));
                continue;
            }
            Err(e) => return Err(e),
        }
        let probes = system.sample_probes(level, samples, seed);
        let rep = system.verify_maximal(level, &probes)?;
        // Ultrametric levels are maximal for closed balls only.
        let ultra = system.ultrametric();
        checks.push(Check {
            name: if ultra { "maximal_closed" } else { "maximal" }.into(),
            level: tag.clone(),
            ok: if ultra { rep.ok_closed } else { rep.ok },
            required: true,
            detail: serde_json::to_value(&rep)?,
        });
        let mut violations = 0;
        let mut checked = 0;
        let bracket_samples = samples.min(200);
        for (c, r) in bracket_probes(&system, level, bracket_samples, seed)? {
            let rep = system.count_in_ball(level, &c, &r)?;
            checked += 1;
            if !rep.within_bounds {
                violations += 1;
            }
        }
        checks.push(Check {
            name: "count_bracket".into(),
            level: tag,
            ok: violations == 0,
            required: true,
            detail: serde_json::json!({"checked": checked, "violations": violations}),
        });
    }
    if cfg.weights.is_some() && cfg.sequence.is_some() {
        let (_, c) = build_construction(cfg)?;
        let tree = assign_measure(&c.layers)?;
        checks.push(Check {
            name: "mass_conserved".into(),
            level: None,
            ok: mass_conserved(&tree),
            required: true,
            detail: serde_json::json!({"layers": c.depth()}),
        });
        let counts = check_child_counts(&system, &c)?;
        checks.push(Check {
            name: "child_count_bracket".into(),
            level: None,
            ok: counts.ok,
            required: true,
            detail: serde_json::to_value(&counts)?,
        });
        let masses = check_rectangle_masses(&system, &c, &tree);
        checks.push(Check {
            name: "rectangle_mass_bound".into(),
            level: None,
            ok: masses.ok,
            required: true,
            detail: serde_json::to_value(&masses)?,
        });
        let nesting = check_nesting(&system, &c, samples.min(500), seed)?;
        checks.push(Check {
            name: "nesting".into(),
            level: None,
            ok: nesting.ok,
            required: cfg.estimator.strict_containment,
            detail: serde_json::to_value(&nesting)?,
        });
    }
    let failures: Vec<String> = checks
        .iter()
        .filter(|c| c.required && !c.ok)
        .map(|c| match &c.level {
            Some(l) => format!("{} at level {l}", c.name),
            None => c.name.clone(),
        })
        .collect();
    Ok(VerifyReport {
        ok: failures.is_empty(),
        checks,
        failures,
    })
}

fn skipped(name: &str, level: Option<String>, count: &str, cap: u64) -> Check {
    Check {
        name: name.into(),
        level,
        ok: true,
        required: false,
        detail: serde_json::json!({"skipped": format!("{count} points exceed the cap {cap}")}),
    }
}

fn write_file(path: &Option<PathBuf>, text: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text)?;
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn holder_csv(sweep: &HolderSweep) -> String {
    let mut out = String::from("depth,s,samples,max_ratio,empirical_exponent\n");
    for r in &sweep.reports {
        let e = r.empirical_exponent.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.depth, r.s, r.samples, r.max_ratio, e);
    }
    out
}

fn execute(command: &Command, out: &mut dyn Write) -> Result<i32> {
    let common = command.common();
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.apply_env()?;
    if let Some(seed) = common.seed {
        cfg.estimator.seed = seed;
    }
    let csv = common.format == Format::Csv;
    if csv && !matches!(command, Command::Estimate(_) | Command::Holder(_)) {
        return Err(Error::validation("csv output is available for estimate and holder only"));
    }
    let mut code = 0;
    let text = match command {
        Command::Stats(_) => {
            let stats = run_stats(&cfg)?;
            if common.strict {
                if let Some(w) = &cfg.weights {
                    let taus: Vec<f64> = w.taus.iter().map(exact::to_f64).collect();
                    let adm = sequences::admissible(&stats, &taus, sequences::AdmissibilityMode::General);
                    if !adm.ok {
                        return Err(Error::Admissibility(adm.diagnostics.join("; ")));
                    }
                }
            }
            to_json(&stats)?
        }
        Command::Dim(_) => to_json(&run_dim(&cfg, common.strict)?)?,
        Command::Layers(_) => {
            let lines = run_layers(&cfg)?;
            if cfg.output.layers.is_some() {
                write_file(&cfg.output.layers, &lines)?;
                String::new()
            } else {
                lines
            }
        }
        Command::Estimate(_) => {
            let report = run_estimate(&cfg)?;
            let json = to_json(&report)?;
            let table = report.to_csv();
            write_file(&cfg.output.json, &json)?;
            write_file(&cfg.output.csv, &table)?;
            write_file(&cfg.output.plot, &to_json(&report.plot_data())?)?;
            if csv {
                table
            } else {
                json
            }
        }
        Command::Holder(_) => {
            let sweep = run_holder(&cfg)?;
            let json = to_json(&sweep)?;
            write_file(&cfg.output.json, &json)?;
            if csv {
                holder_csv(&sweep)
            } else {
                json
            }
        }
        Command::Verify(_) => {
            let report = run_verify(&cfg)?;
            if !report.ok {
                code = EXIT_VERIFY_FAILED;
            }
            let json = to_json(&report)?;
            write_file(&cfg.output.json, &json)?;
            json
        }
    };
    out.write_all(text.as_bytes())?;
    Ok(code)
}

/// Runs the CLI on `args`, writing results to `out` and errors to stderr; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let started = std::time::Instant::now();
    match execute(&cli.command, out) {
        Ok(code) => {
            if matches!(cli.command, Command::Estimate(_) | Command::Holder(_)) {
                eprintln!("runtime: {:.3}s", started.elapsed().as_secs_f64());
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
