//! Experiment orchestration: the seeded connectivity game, algorithm
//! comparisons and their on-disk bundles.
//!
//! A bundle directory holds `tuning.json`, one `trace_<label>.csv` per
//! algorithm, `summary.json` and `convergence.svg`. If an algorithm fails the
//! traces written so far are kept and `failure.json` names the culprit.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{NepError, Result};
use crate::game::{solve_ne, BoxSet, QuadraticGame};
use crate::io::{load_game, load_graph};
use crate::network::{degree_variant, metropolis_weights, Coupling, CouplingMode, MixingMatrix};
use crate::solvers::{
    augmented_gradient_run, pppa_run, ExtendedState, RunOutcome, RunTrace, SolverConfig,
};
use crate::tuning::TuningReport;

/// Box of the constrained connectivity variant.
pub const CONNECTIVITY_BOX: (f64, f64) = (0.1, 0.5);
/// Tolerance of the reference equilibrium used for distance columns.
pub const REFERENCE_TOL: f64 = 1e-13;
/// Default instance: ten agents, seed 1, Metropolis weights on a seeded
/// Erdős–Rényi graph with edge probability 1/2.
pub const DEFAULT_AGENTS: usize = 10;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_GRAPH: &str = "er:10:0.5:1";

/// The default connectivity game and its coupling.
pub fn default_instance(boxed: bool) -> Result<(QuadraticGame, Coupling)> {
    let game = generate_connectivity_game(DEFAULT_AGENTS, DEFAULT_SEED, boxed)?;
    Ok((game, build_coupling(DEFAULT_GRAPH, None)?))
}

/// Connectivity game with `N` agents on the plane:
/// `J_i = q_i‖x_i‖² + r_iᵀx_i + Σ_j (1/N)‖x_i − x_j‖²`, `q_i ~ U[1, 2]`,
/// `r_i ~ U[−2, 2]²`. `boxed` restricts every coordinate to `[0.1, 0.5]`.
pub fn generate_connectivity_game(n: usize, seed: u64, boxed: bool) -> Result<QuadraticGame> {
    if n < 2 {
        return Err(NepError::Input(format!(
            "connectivity game needs N >= 2, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for _ in 0..n {
        q.push(rng.random_range(1.0..=2.0));
        r.push(DVector::from_fn(2, |_, _| rng.random_range(-2.0..=2.0)));
    }
    let m = DMatrix::from_element(n, n, 1.0 / n as f64);
    let sets = (0..n)
        .map(|_| {
            if boxed {
                BoxSet::uniform(2, CONNECTIVITY_BOX.0, CONNECTIVITY_BOX.1)
            } else {
                Ok(BoxSet::unbounded(2))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    QuadraticGame::connectivity(&q, &r, &m, sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pppa,
    Agp,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Pppa => "pppa",
            Algorithm::Agp => "agp",
        })
    }
}

/// Step setting: the theory value, a multiple of it, or an explicit number.
/// In JSON: `"theory"`, `"theory*100"` or `0.01`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSetting {
    Theory,
    TheoryScaled(f64),
    Explicit(f64),
}

impl StepSetting {
    pub fn resolve(&self, theory: f64) -> f64 {
        match *self {
            StepSetting::Theory => theory,
            StepSetting::TheoryScaled(f) => theory * f,
            StepSetting::Explicit(v) => v,
        }
    }

    fn label(&self) -> String {
        match self {
            StepSetting::Theory => "theory".into(),
            StepSetting::TheoryScaled(f) => format!("theory_x{f}"),
            StepSetting::Explicit(v) => format!("step_{v}"),
        }
    }
}

impl std::str::FromStr for StepSetting {
    type Err = NepError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "theory" {
            return Ok(StepSetting::Theory);
        }
        let bad = || {
            NepError::Config(format!(
                "invalid step `{s}`; expected theory, theory*<factor> or a number"
            ))
        };
        let (value, scaled) = match s.strip_prefix("theory*") {
            Some(f) => (f.trim().parse::<f64>().map_err(|_| bad())?, true),
            None => (s.parse::<f64>().map_err(|_| bad())?, false),
        };
        if !(value > 0.0 && value.is_finite()) {
            return Err(bad());
        }
        Ok(if scaled {
            StepSetting::TheoryScaled(value)
        } else {
            StepSetting::Explicit(value)
        })
    }
}

impl fmt::Display for StepSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSetting::Theory => f.write_str("theory"),
            StepSetting::TheoryScaled(x) => write!(f, "theory*{x}"),
            StepSetting::Explicit(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for StepSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSetting::Explicit(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for StepSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => format!("{v}").parse(),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

fn default_step() -> StepSetting {
    StepSetting::Theory
}

/// One algorithm run. For PPPA `step` is `α`; for AGP it is `γ` and `alpha`
/// (default: the tuned `α`) weights the game term of `F_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub algo: Algorithm,
    #[serde(default = "default_step")]
    pub step: StepSetting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<StepSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl AlgorithmSpec {
    pub fn new(algo: Algorithm, step: StepSetting) -> Self {
        Self {
            algo,
            step,
            alpha: None,
            label: None,
        }
    }

    pub fn resolved_label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}_{}", self.algo, self.step.label()))
    }
}

fn default_iters() -> usize {
    1000
}

fn default_tol() -> f64 {
    0.0
}

/// Experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Game file or generator token `connectivity:<N>:<seed>[:box]`.
    pub game: String,
    /// Graph file or generator token such as `er:<N>:<p>:<seed>`.
    pub graph: String,
    #[serde(default)]
    pub mode: Option<CouplingMode>,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default = "default_iters")]
    pub iters: usize,
    /// Early-stop distance to the equilibrium; 0 runs all iterations.
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub parallel: bool,
    /// Seed for random estimates; zero initialization when absent.
    #[serde(default)]
    pub init_seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| NepError::Config(e.to_string()))?;
        if cfg.out_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.out_dir = parent.join(&cfg.out_dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(NepError::Config("experiment lists no algorithms".into()));
        }
        if self.iters == 0 {
            return Err(NepError::Config("iters must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(NepError::Config("tol must be nonnegative".into()));
        }
        let mut labels: Vec<String> = self
            .algorithms
            .iter()
            .map(AlgorithmSpec::resolved_label)
            .collect();
        for l in &labels {
            if l.is_empty()
                || !l
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
            {
                return Err(NepError::Config(format!(
                    "label `{l}` is not a safe file name"
                )));
            }
        }
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(NepError::Config(format!(
                "duplicate algorithm label `{}`",
                w[0]
            )));
        }
        for (what, source) in [("game", &self.game), ("graph", &self.graph)] {
            if !source.contains(':') && !Path::new(source).exists() {
                return Err(NepError::Config(format!(
                    "{what} file `{source}` does not exist"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the coupling from a graph source. Without explicit weights the
/// coupling uses Metropolis weights.
pub fn build_coupling(source: &str, mode: Option<CouplingMode>) -> Result<Coupling> {
    let (graph, weights) = load_graph(source)?;
    match (mode.unwrap_or(CouplingMode::DoublyStochastic), weights) {
        (CouplingMode::DoublyStochastic, None) => {
            Ok(Coupling::doubly_stochastic(&metropolis_weights(&graph)?))
        }
        (CouplingMode::DoublyStochastic, Some(w)) => Ok(Coupling::doubly_stochastic(
            &MixingMatrix::for_graph(w, &graph)?,
        )),
        (CouplingMode::DegreeVariant, Some(w)) => degree_variant(&graph, w),
        (CouplingMode::DegreeVariant, None) => degree_variant(
            &graph,
            graph.adjacency() + DMatrix::identity(graph.num_nodes(), graph.num_nodes()),
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub algo: Algorithm,
    pub alpha: f64,
    /// AGP step; absent for PPPA.
    pub gamma: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: Option<String>,
    pub final_dist_to_ne: f64,
    pub trace: PathBuf,
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentBundle {
    pub dir: PathBuf,
    pub tuning: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
    pub runs: Vec<RunSummary>,
}

#[derive(Serialize)]
struct FailureManifest<'a> {
    failed: &'a str,
    error: String,
    completed: Vec<&'a str>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn run_one(
    game: &QuadraticGame,
    coupling: &Coupling,
    report: &TuningReport,
    spec: &AlgorithmSpec,
    cfg: &ExperimentConfig,
    x0: &ExtendedState,
    reference: &[f64],
) -> Result<(RunOutcome, f64, Option<f64>)> {
    let (alpha, gamma) = match spec.algo {
        Algorithm::Pppa => (spec.step.resolve(report.alpha), None),
        Algorithm::Agp => {
            let alpha = spec.alpha.map_or(report.alpha, |a| a.resolve(report.alpha));
            (alpha, Some(spec.step.resolve(report.agp_step)))
        }
    };
    let mut config = SolverConfig::new(alpha);
    config.max_iters = cfg.iters;
    config.stop_tol = cfg.tol;
    config.fail_on_divergence = false;
    let outcome = match gamma {
        None => pppa_run(game, coupling, &config, x0, Some(reference))?,
        Some(g) => augmented_gradient_run(game, coupling, g, &config, x0, Some(reference))?,
    };
    Ok((outcome, alpha, gamma))
}

/// Runs every configured algorithm from the same initial state and writes the
/// bundle into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentBundle> {
    cfg.validate()?;
    let game = load_game(&cfg.game)?;
    let coupling = build_coupling(&cfg.graph, cfg.mode)?;
    let report = TuningReport::new(&game, &coupling, None)?;
    let reference = solve_ne(&game, REFERENCE_TOL)?;
    let x0 = match cfg.init_seed {
        Some(seed) => ExtendedState::random(&game, 1.0, seed),
        None => ExtendedState::initial(&game),
    };

    fs::create_dir_all(&cfg.out_dir)?;
    let dir = cfg.out_dir.clone();
    let tuning = dir.join("tuning.json");
    write_json(&tuning, &report)?;

    let job = |spec: &AlgorithmSpec| {
        run_one(
            &game,
            &coupling,
            &report,
            spec,
            cfg,
            &x0,
            reference.as_slice(),
        )
    };
    let results: Vec<Result<(RunOutcome, f64, Option<f64>)>> = if cfg.parallel {
        cfg.algorithms.par_iter().map(job).collect()
    } else {
        // sequential runs stop at the first failure
        let mut out = Vec::new();
        for spec in &cfg.algorithms {
            let r = job(spec);
            let failed = r.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        out
    };

    let mut runs = Vec::new();
    let mut failure = None;
    for (spec, result) in cfg.algorithms.iter().zip(results) {
        let label = spec.resolved_label();
        match result {
            Ok((outcome, alpha, gamma)) => {
                let path = dir.join(format!("trace_{label}.csv"));
                let mut f = BufWriter::new(File::create(&path)?);
                outcome.trace.write_csv(&mut f)?;
                f.flush()?;
                let last = outcome.trace.last().expect("trace has the initial record");
                runs.push(RunSummary {
                    label,
                    algo: spec.algo,
                    alpha,
                    gamma,
                    iterations: last.iter,
                    converged: outcome.converged,
                    diverged: outcome.diverged,
                    final_dist_to_ne: last.dist_to_ne,
                    trace: path,
                });
            }
            Err(e) => {
                if failure.is_none() {
                    failure = Some((label, e));
                }
            }
        }
    }

    let summary = dir.join("summary.json");
    write_json(&summary, &runs)?;
    let plot = dir.join("convergence.svg");
    let series = runs
        .iter()
        .map(|r| {
            let trace = RunTrace::read_csv(BufReader::new(File::open(&r.trace)?))?;
            Ok((r.label.clone(), trace))
        })
        .collect::<Result<Vec<_>>>()?;
    fs::write(&plot, convergence_svg(&series))?;

    if let Some((label, error)) = failure {
        let manifest = FailureManifest {
            failed: &label,
            error: error.to_string(),
            completed: runs.iter().map(|r| r.label.as_str()).collect(),
        };
        write_json(&dir.join("failure.json"), &manifest)?;
        return Err(error);
    }
    Ok(ExperimentBundle {
        dir,
        tuning,
        summary,
        plot,
        runs,
    })
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const DIST_FLOOR: f64 = 1e-16;

/// Semilog-y plot of `dist_to_ne` against the iteration index. Non-finite
/// values break the curve; values below `1e-16` are drawn at the floor.
pub fn convergence_svg(series: &[(String, RunTrace)]) -> String {
    let (w, h) = (720.0, 460.0);
    let (left, right, top, bottom) = (70.0, 180.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let finite = || {
        series
            .iter()
            .flat_map(|(_, t)| t.records.iter())
            .filter(|r| r.dist_to_ne.is_finite())
    };
    let max_iter = series
        .iter()
        .filter_map(|(_, t)| t.last().map(|r| r.iter))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let (mut lo, mut hi) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        let v = r.dist_to_ne.max(DIST_FLOOR).log10();
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let sx = |it: f64| left + pw * it / max_iter;
    let sy = |v: f64| top + ph * (hi - v.max(DIST_FLOOR).log10().min(hi)) / (hi - lo);

    let mut svg = String::new();
    let mut line = |s: String| {
        svg.push_str(&s);
        svg.push('\n');
    };
    line(format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    ));
    line(format!(r#"<rect width="{w}" height="{h}" fill="white"/>"#));
    line(format!(
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    ));
    let decades = (hi - lo) as i64;
    let label_every = (decades / 10 + 1).max(1);
    for k in 0..=decades {
        let e = lo as i64 + k;
        let y = sy(10f64.powi(e as i32));
        line(format!(
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            left + pw
        ));
        if k % label_every == 0 {
            line(format!(
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
                left - 6.0,
                y + 4.0
            ));
        }
    }
    for k in 0..=5 {
        let it = max_iter * k as f64 / 5.0;
        let x = sx(it);
        line(format!(
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + ph + 18.0,
            it.round()
        ));
    }
    line(format!(
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        left + pw / 2.0,
        h - 10.0
    ));
    line(format!(
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">distance to equilibrium</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    ));
    for (idx, (label, trace)) in series.iter().enumerate() {
        let colour = PALETTE[idx % PALETTE.len()];
        let dash = if idx >= PALETTE.len() {
            r#" stroke-dasharray="6 3""#
        } else {
            ""
        };
        let mut segment: Vec<String> = Vec::new();
        let flush = |segment: &mut Vec<String>, out: &mut Vec<String>| {
            if segment.len() > 1 {
                out.push(format!(
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
                    segment.join(" ")
                ));
            }
            segment.clear();
        };
        let mut lines = Vec::new();
        for r in &trace.records {
            if r.dist_to_ne.is_finite() {
                segment.push(format!("{:.2},{:.2}", sx(r.iter as f64), sy(r.dist_to_ne)));
            } else {
                flush(&mut segment, &mut lines);
            }
        }
        flush(&mut segment, &mut lines);
        for l in lines {
            line(l);
        }
        let ly = top + 14.0 + 18.0 * idx as f64;
        let lx = left + pw + 12.0;
        line(format!(
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"{dash}/>"#,
            lx + 20.0
        ));
        line(format!(
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        ));
    }
    line("</svg>".into());
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
