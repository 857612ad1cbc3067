//! Experiment orchestration: generate, sketch, extract, bound, check, emit.
//!
//! A run is a set of independent trials. Trial `t` uses the seed
//! `cfg.seed + t` for both the test matrix and the subspaces, owns its own
//! [`CountingMatrix`], and may run on any thread. Rows are assembled in trial
//! order once every trial has finished, so the CSV does not depend on
//! scheduling.
//!
//! CSV columns are fixed by [`CSV_HEADER`]. Floats are written in the
//! shortest scientific form that parses back to the same `f64`; infinite
//! bounds are `inf`, absent bounds are empty fields. A trial whose
//! extraction failed contributes a single row with method `failed`.
//!
//! The `tau` and `applicable` columns describe the forward bound when it was
//! requested, and otherwise the first requested structured bound.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::blockview::{block_transform, hmt_pair, BlockPartition};
use crate::bounds::{backward_bound, forward_bound, improved_oversampling_bound, BoundReport};
use crate::error::{Error, Result};
use crate::extract::{extract, CountingMatrix, Method};
use crate::kernels::DenseMatrix;
use crate::sketching::{exact_subspaces, random_subspaces, sketch_subspaces, SubspacePair};
use crate::synthgen::{assemble_synthetic, sv_profile, ProfileKind, SyntheticMatrix};

pub const CSV_HEADER: [&str; 13] = [
    "trial",
    "method",
    "i",
    "sigma_exact",
    "sigma_hat",
    "abs_error",
    "weyl",
    "forward",
    "backward",
    "backward_approx",
    "improved",
    "tau",
    "applicable",
];

/// Slack on bound checks, relative to `σ_1`.
pub const SOUNDNESS_TOL: f64 = 1e-10;

/// Errors below `MACHINE_FLOOR · ε · σ_1` are roundoff and never counted
/// against a bound.
pub const MACHINE_FLOOR: f64 = 1e2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundColumn {
    Weyl,
    Forward,
    Backward,
    BackwardApprox,
    Improved,
}

impl BoundColumn {
    pub const ALL: [BoundColumn; 5] = [
        BoundColumn::Weyl,
        BoundColumn::Forward,
        BoundColumn::Backward,
        BoundColumn::BackwardApprox,
        BoundColumn::Improved,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundColumn::Weyl => "weyl",
            BoundColumn::Forward => "forward",
            BoundColumn::Backward => "backward",
            BoundColumn::BackwardApprox => "backward_approx",
            BoundColumn::Improved => "improved",
        }
    }

    /// Heuristic bounds are reported but never count as violations.
    pub fn is_rigorous(self) -> bool {
        self != BoundColumn::Improved
    }
}

impl fmt::Display for BoundColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundColumn::ALL
            .into_iter()
            .find(|b| b.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown bound `{}`", s.trim())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceSource {
    Sketched,
    Exact,
    Random,
}

impl FromStr for SubspaceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sketched" => Ok(SubspaceSource::Sketched),
            "exact" => Ok(SubspaceSource::Exact),
            "random" => Ok(SubspaceSource::Random),
            other => Err(Error::Config(format!("unknown subspace source `{other}`"))),
        }
    }
}

pub fn parse_decay(s: &str) -> Result<ProfileKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "exponential" | "exp" => Ok(ProfileKind::Exponential),
        "algebraic" | "alg" => Ok(ProfileKind::Algebraic),
        other => Err(Error::Config(format!("unknown decay `{other}`"))),
    }
}

fn decay_name(k: ProfileKind) -> &'static str {
    match k {
        ProfileKind::Exponential => "exponential",
        ProfileKind::Algebraic => "algebraic",
        ProfileKind::Custom => "custom",
    }
}

/// Comma-separated list; empty string is the empty set.
pub fn parse_list<T: FromStr<Err = Error> + Ord>(s: &str) -> Result<BTreeSet<T>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub ell: usize,
    pub decay: ProfileKind,
    pub q: usize,
    pub seed: u64,
    pub trials: usize,
    pub methods: BTreeSet<Method>,
    pub bounds: BTreeSet<BoundColumn>,
    pub subspaces: SubspaceSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            m: 400,
            n: 400,
            r: 50,
            ell: 0,
            decay: ProfileKind::Exponential,
            q: 1,
            seed: 0,
            trials: 1,
            methods: Method::ALL.into_iter().collect(),
            bounds: BoundColumn::ALL.into_iter().collect(),
            subspaces: SubspaceSource::Sketched,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.r == 0 || self.n < self.r {
            return fail(format!("need n >= r >= 1, got n={}, r={}", self.n, self.r));
        }
        if self.n < 2 {
            return fail(format!("need n >= 2, got {}", self.n));
        }
        if self.m < self.n {
            return fail(format!("test matrices need m >= n, got m={}, n={}", self.m, self.n));
        }
        if self.m < self.r + self.ell {
            return fail(format!("need m >= r+ell, got m={}, r+ell={}", self.m, self.r + self.ell));
        }
        if self.q == 0 {
            return fail("q must be >= 1".into());
        }
        if self.trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if self.decay == ProfileKind::Custom {
            return fail("decay must be exponential or algebraic".into());
        }
        if self.subspaces == SubspaceSource::Exact && self.r + self.ell > self.n {
            return fail("exact subspaces need r+ell <= n".into());
        }
        Ok(())
    }

    /// Apply one `key=value` setting; keys are the CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| -> Result<usize> {
            v.trim().parse().map_err(|_| Error::Config(format!("`{key}` expects a count, got `{v}`")))
        };
        match key.trim() {
            "m" => self.m = int(value)?,
            "n" => self.n = int(value)?,
            "r" => self.r = int(value)?,
            "ell" => self.ell = int(value)?,
            "q" => self.q = int(value)?,
            "trials" => self.trials = int(value)?,
            "seed" => {
                self.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("`seed` expects an integer, got `{value}`")))?
            }
            "decay" => self.decay = parse_decay(value)?,
            "methods" => self.methods = parse_list(value)?,
            "bounds" => self.bounds = parse_list(value)?,
            "subspaces" => self.subspaces = value.parse()?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Flat `key=value` lines; `#` starts a comment.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_kv_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        self.apply_kv_text(&text)
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundValues {
    pub weyl: Option<f64>,
    pub forward: Option<f64>,
    pub backward: Option<f64>,
    pub backward_approx: Option<f64>,
    pub improved: Option<f64>,
}

impl BoundValues {
    pub fn get(&self, c: BoundColumn) -> Option<f64> {
        match c {
            BoundColumn::Weyl => self.weyl,
            BoundColumn::Forward => self.forward,
            BoundColumn::Backward => self.backward,
            BoundColumn::BackwardApprox => self.backward_approx,
            BoundColumn::Improved => self.improved,
        }
    }

    fn slot(&mut self, c: BoundColumn) -> &mut Option<f64> {
        match c {
            BoundColumn::Weyl => &mut self.weyl,
            BoundColumn::Forward => &mut self.forward,
            BoundColumn::Backward => &mut self.backward,
            BoundColumn::BackwardApprox => &mut self.backward_approx,
            BoundColumn::Improved => &mut self.improved,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataRow {
    pub trial: usize,
    pub method: Method,
    /// 1-based.
    pub i: usize,
    pub sigma_exact: f64,
    pub sigma_hat: f64,
    pub bounds: BoundValues,
    pub tau: Option<f64>,
    pub applicable: Option<bool>,
}

impl DataRow {
    pub fn abs_error(&self) -> f64 {
        (self.sigma_exact - self.sigma_hat).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    Data(DataRow),
    Failed { trial: usize },
}

impl Row {
    pub fn trial(&self) -> usize {
        match self {
            Row::Data(d) => d.trial,
            Row::Failed { trial } => *trial,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessCount {
    pub method: Method,
    pub passes: usize,
    pub matmuls: usize,
}

#[derive(Debug, Clone)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub wall_time: Duration,
    pub access: Vec<AccessCount>,
    /// Error message when the trial failed.
    pub failure: Option<String>,
}

/// A bound exceeded on an applicable index.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub trial: usize,
    pub method: Method,
    pub i: usize,
    pub bound: BoundColumn,
    pub error: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Sorted by `(trial, method, i)`.
    pub rows: Vec<Row>,
    pub trials: Vec<TrialSummary>,
    /// Rigorous bounds exceeded beyond tolerance.
    pub violations: Vec<Violation>,
    /// Heuristic bound exceeded; informational.
    pub heuristic_misses: Vec<Violation>,
}

impl ExperimentReport {
    pub fn data_rows(&self) -> impl Iterator<Item = &DataRow> {
        self.rows.iter().filter_map(|r| match r {
            Row::Data(d) => Some(d),
            Row::Failed { .. } => None,
        })
    }

    pub fn failed_trials(&self) -> usize {
        self.trials.iter().filter(|t| t.failure.is_some()).count()
    }

    pub fn is_sound(&self) -> bool {
        self.violations.is_empty()
    }
}

/// True iff every recorded access matches each method's pass/product count.
pub fn verify_pass_counts(rep: &ExperimentReport) -> bool {
    rep.trials
        .iter()
        .flat_map(|t| &t.access)
        .all(|a| (a.passes, a.matmuls) == a.method.expected_access())
}

struct TrialOutput {
    summary: TrialSummary,
    rows: Vec<Row>,
}

fn subspaces_for(cfg: &ExperimentConfig, truth: &SyntheticMatrix, seed: u64) -> Result<SubspacePair> {
    match cfg.subspaces {
        SubspaceSource::Sketched => sketch_subspaces(&truth.a, cfg.r, cfg.ell, cfg.q, seed),
        SubspaceSource::Exact => exact_subspaces(truth, cfg.r, cfg.ell),
        SubspaceSource::Random => random_subspaces(cfg.m, cfg.n, cfg.r, cfg.ell, seed),
    }
}

/// Forward, backward and improved reports for one method, as requested.
fn method_bounds(
    cfg: &ExperimentConfig,
    method: Method,
    a: &DenseMatrix,
    s: &SubspacePair,
    p: &BlockPartition,
    sigma: &[f64],
    sigma_hat: &[f64],
) -> Result<Vec<(BoundColumn, BoundReport)>> {
    let wants = |c| cfg.bounds.contains(&c);
    let mut out = Vec::new();
    if wants(BoundColumn::Forward) || wants(BoundColumn::Weyl) {
        let rep = if method == Method::Hmt {
            forward_bound(&block_transform(a, &hmt_pair(a, s)?)?, method, sigma)?
        } else {
            forward_bound(p, method, sigma)?
        };
        out.push((BoundColumn::Forward, rep));
    }
    if method == Method::Gn && cfg.ell == 0 {
        for (c, approx) in [(BoundColumn::Backward, false), (BoundColumn::BackwardApprox, true)] {
            if wants(c) {
                out.push((c, backward_bound(p, sigma_hat, approx)?));
            }
        }
    }
    if method == Method::Gn && cfg.ell > 0 && wants(BoundColumn::Improved) {
        out.push((BoundColumn::Improved, improved_oversampling_bound(p, sigma)?));
    }
    Ok(out)
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialOutput> {
    let start = Instant::now();
    let seed = cfg.trial_seed(trial);
    let profile = sv_profile(cfg.decay, cfg.n)?;
    let truth = assemble_synthetic(&profile, cfg.m, seed)?;
    let s = subspaces_for(cfg, &truth, seed)?;
    let sigma = truth.sigma();
    let needs_partition = !cfg.bounds.is_empty();
    let partition = if needs_partition { Some(block_transform(&truth.a, &s)?) } else { None };

    let mut rows = Vec::new();
    let mut access = Vec::new();
    for &method in &cfg.methods {
        let counting = CountingMatrix::new(&truth.a)?;
        let res = extract(&counting, &s, method)?;
        access.push(AccessCount { method, passes: res.pass_count, matmuls: res.matmul_count });

        let reports = match &partition {
            Some(p) => method_bounds(cfg, method, &truth.a, &s, p, sigma, &res.sigma_hat)?,
            None => Vec::new(),
        };
        let primary = reports.iter().find(|(c, _)| cfg.bounds.contains(c)).map(|(_, rep)| rep);
        for (k, &hat) in res.sigma_hat.iter().enumerate() {
            let mut bounds = BoundValues::default();
            for (col, rep) in &reports {
                if *col == BoundColumn::Forward {
                    if cfg.bounds.contains(&BoundColumn::Weyl) {
                        bounds.weyl = Some(rep.weyl);
                    }
                    if !cfg.bounds.contains(&BoundColumn::Forward) {
                        continue;
                    }
                }
                *bounds.slot(*col) = Some(rep.entries[k].bound);
            }
            let (tau, applicable) = match primary {
                Some(rep) => (Some(rep.entries[k].tau), Some(rep.entries[k].applicable)),
                None => (None, None),
            };
            rows.push(Row::Data(DataRow {
                trial,
                method,
                i: k + 1,
                sigma_exact: sigma[k],
                sigma_hat: hat,
                bounds,
                tau,
                applicable,
            }));
        }
    }
    let summary = TrialSummary { trial, seed, wall_time: start.elapsed(), access, failure: None };
    Ok(TrialOutput { summary, rows })
}

/// Flag every bound that an applicable index exceeds beyond tolerance.
fn check_soundness(rows: &[Row], sigma_1: f64) -> (Vec<Violation>, Vec<Violation>) {
    let slack = SOUNDNESS_TOL * sigma_1;
    let floor = MACHINE_FLOOR * f64::EPSILON * sigma_1;
    let mut hard = Vec::new();
    let mut soft = Vec::new();
    for d in rows.iter().filter_map(|r| match r {
        Row::Data(d) => Some(d),
        Row::Failed { .. } => None,
    }) {
        let err = d.abs_error();
        if err < floor {
            continue;
        }
        for col in BoundColumn::ALL {
            let Some(value) = d.bounds.get(col) else { continue };
            // inapplicable bounds are +inf and never exceeded
            if err > value + slack {
                let v = Violation { trial: d.trial, method: d.method, i: d.i, bound: col, error: err, value };
                if col.is_rigorous() {
                    hard.push(v);
                } else {
                    soft.push(v);
                }
            }
        }
    }
    (hard, soft)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let outputs: Vec<(usize, Result<TrialOutput>, Duration)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let start = Instant::now();
            let out = run_trial(cfg, t);
            (t, out, start.elapsed())
        })
        .collect();

    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for (t, out, elapsed) in outputs {
        match out {
            Ok(o) => {
                rows.extend(o.rows);
                trials.push(o.summary);
            }
            Err(e) => {
                rows.push(Row::Failed { trial: t });
                trials.push(TrialSummary {
                    trial: t,
                    seed: cfg.trial_seed(t),
                    wall_time: elapsed,
                    access: Vec::new(),
                    failure: Some(e.to_string()),
                });
            }
        }
    }
    let sigma_1 = sv_profile(cfg.decay, cfg.n)?.values[0];
    let (violations, heuristic_misses) = check_soundness(&rows, sigma_1);
    Ok(ExperimentReport { config: cfg.clone(), rows, trials, violations, heuristic_misses })
}

fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Serialize the report to CSV bytes.
pub fn csv_bytes(rep: &ExperimentReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in &rep.rows {
        let record: Vec<String> = match row {
            Row::Data(d) => vec![
                d.trial.to_string(),
                d.method.to_string(),
                d.i.to_string(),
                fmt_f64(d.sigma_exact),
                fmt_f64(d.sigma_hat),
                fmt_f64(d.abs_error()),
                fmt_opt(d.bounds.weyl),
                fmt_opt(d.bounds.forward),
                fmt_opt(d.bounds.backward),
                fmt_opt(d.bounds.backward_approx),
                fmt_opt(d.bounds.improved),
                fmt_opt(d.tau),
                d.applicable.map(|a| a.to_string()).unwrap_or_default(),
            ],
            Row::Failed { trial } => {
                let mut r = vec![String::new(); CSV_HEADER.len()];
                r[0] = trial.to_string();
                r[1] = "failed".into();
                r
            }
        };
        w.write_record(&record).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn emit_csv(rep: &ExperimentReport, path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&csv_bytes(rep)).map_err(io)
}

/// One parsed CSV line; `abs_error` is kept as written.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub row: Row,
    pub abs_error: Option<f64>,
}

fn parse_field<T: FromStr>(s: &str, name: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Config(format!("bad value `{s}` in column `{name}`")))
}

fn parse_opt(s: &str, name: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(s, name).map(Some)
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| Error::Config(format!("CSV header: {e}")))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config("CSV header does not match the schema".into()));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Config(format!("CSV record: {e}")))?;
        let f = |k: usize| rec.get(k).unwrap_or("");
        let trial = parse_field(f(0), "trial")?;
        if f(1) == "failed" {
            out.push(CsvRow { row: Row::Failed { trial }, abs_error: None });
            continue;
        }
        let d = DataRow {
            trial,
            method: f(1).parse()?,
            i: parse_field(f(2), "i")?,
            sigma_exact: parse_field(f(3), "sigma_exact")?,
            sigma_hat: parse_field(f(4), "sigma_hat")?,
            bounds: BoundValues {
                weyl: parse_opt(f(6), "weyl")?,
                forward: parse_opt(f(7), "forward")?,
                backward: parse_opt(f(8), "backward")?,
                backward_approx: parse_opt(f(9), "backward_approx")?,
                improved: parse_opt(f(10), "improved")?,
            },
            tau: parse_opt(f(11), "tau")?,
            applicable: if f(12).is_empty() { None } else { Some(parse_field(f(12), "applicable")?) },
        };
        out.push(CsvRow { row: Row::Data(d), abs_error: Some(parse_field(f(5), "abs_error")?) });
    }
    Ok(out)
}

/// MatrixMarket array format: banner, `rows cols`, then every entry in
/// column-major order, one per line.
pub fn write_matrix_market(m: &DenseMatrix, path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
    for x in m.iter() {
        out.push_str(&fmt_f64(*x));
        out.push('\n');
    }
    fs::write(path, out).map_err(io)
}

/// A named figure dataset: one configuration per panel.
#[derive(Debug, Clone)]
pub struct FigurePreset {
    pub name: &'static str,
    pub panels: Vec<(&'static str, ExperimentConfig)>,
}

/// Plotting datasets `fig1`..`fig5` (`n = m = 400`, `r = 50`,
/// `q = 1`, oversampled runs use `ℓ = r/2`).
pub fn figure_presets(seed: u64) -> Vec<FigurePreset> {
    let base = ExperimentConfig { seed, ..ExperimentConfig::default() };
    let with = |decay, ell, methods: &[Method], bounds: &[BoundColumn]| ExperimentConfig {
        decay,
        ell,
        methods: methods.iter().copied().collect(),
        bounds: bounds.iter().copied().collect(),
        ..base.clone()
    };
    let over = base.r / 2;
    use BoundColumn::*;
    use Method::*;
    use ProfileKind::*;
    let both = |ell, methods: &[Method], bounds: &[BoundColumn]| {
        vec![("a", with(Exponential, ell, methods, bounds)), ("b", with(Algebraic, ell, methods, bounds))]
    };
    vec![
        FigurePreset { name: "fig1", panels: vec![("", with(Exponential, 0, &[Gn, Rr, Svd], &[]))] },
        FigurePreset { name: "fig2", panels: both(0, &[Gn], &[Weyl, Forward]) },
        FigurePreset { name: "fig3", panels: both(over, &[Gn], &[Weyl, Forward, Improved]) },
        FigurePreset {
            name: "fig4",
            panels: vec![
                ("a", with(Exponential, 0, &Method::ALL, &[Weyl, Forward])),
                ("b", with(Exponential, over, &Method::ALL, &[Weyl, Forward])),
            ],
        },
        FigurePreset { name: "fig5", panels: both(0, &[Gn], &[Weyl, Forward, Backward, BackwardApprox]) },
    ]
}

impl FigurePreset {
    pub fn file_name(&self, panel: &str) -> String {
        format!("{}{}.csv", self.name, panel)
    }
}

/// Run every preset and write one CSV per panel into `dir`.
pub fn write_figure_data(dir: &Path, seed: u64) -> Result<Vec<(PathBuf, ExperimentReport)>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let mut out = Vec::new();
    for preset in figure_presets(seed) {
        for (panel, cfg) in &preset.panels {
            let rep = run_experiment(cfg)?;
            let path = dir.join(preset.file_name(panel));
            emit_csv(&rep, &path)?;
            out.push((path, rep));
        }
    }
    Ok(out)
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |it: Vec<String>| it.join(",");
        write!(
            f,
            "m={} n={} r={} ell={} decay={} q={} seed={} trials={} methods={} bounds={}",
            self.m,
            self.n,
            self.r,
            self.ell,
            decay_name(self.decay),
            self.q,
            self.seed,
            self.trials,
            join(self.methods.iter().map(|m| m.to_string()).collect()),
            join(self.bounds.iter().map(|b| b.to_string()).collect()),
        )
    }
}

/// Outcome of one built-in invariant check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    match f() {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: e.to_string() },
    }
}

/// Quick invariant suite at small scale: exactness with exact subspaces,
/// bound soundness over a sketched sweep, access counts, determinism and
/// the Jordan–Wielandt spectrum identity.
pub fn selftest() -> Vec<CheckOutcome> {
    use crate::kernels::{jordan_wielandt, symmetric_eigenvalues};
    use crate::synthgen::{gaussian_matrix, stream_rng};

    let small = ExperimentConfig { m: 80, n: 80, r: 8, trials: 4, seed: 11, ..ExperimentConfig::default() };
    vec![
        check("exact subspaces reproduce singular values", || {
            let mut worst = 0.0f64;
            for decay in [ProfileKind::Exponential, ProfileKind::Algebraic] {
                let cfg = ExperimentConfig { decay, subspaces: SubspaceSource::Exact, bounds: BTreeSet::new(), ..small.clone() };
                let rep = run_experiment(&cfg)?;
                for d in rep.data_rows() {
                    worst = worst.max(d.abs_error() / d.sigma_exact);
                }
            }
            Ok((worst <= 1e-11, format!("max relative error {worst:e}")))
        }),
        check("bounds dominate errors on sketched subspaces", || {
            let mut total = 0;
            for (ell, q) in [(0, 1), (4, 1), (0, 2)] {
                let rep = run_experiment(&ExperimentConfig { ell, q, ..small.clone() })?;
                total += rep.violations.len();
            }
            Ok((total == 0, format!("{total} violations")))
        }),
        check("pass and product counts", || {
            let rep = run_experiment(&ExperimentConfig { bounds: BTreeSet::new(), ..small.clone() })?;
            Ok((verify_pass_counts(&rep), format!("{} trials", rep.trials.len())))
        }),
        check("identical configs give identical CSV", || {
            let a = csv_bytes(&run_experiment(&small)?);
            let b = csv_bytes(&run_experiment(&small)?);
            Ok((a == b, format!("{} bytes", a.len())))
        }),
        check("Jordan-Wielandt spectrum", || {
            let mut worst = 0.0f64;
            for seed in 0..5 {
                let a = gaussian_matrix(7, 4, &mut stream_rng(seed, 0));
                let eig = symmetric_eigenvalues(&jordan_wielandt(&a))?;
                let s = crate::kernels::singular_values(&a)?;
                let mut want: Vec<f64> = s.iter().copied().chain(s.iter().map(|x| -x)).chain([0.0; 3]).collect();
                want.sort_by(|x, y| y.total_cmp(x));
                for (e, w) in eig.iter().zip(&want) {
                    worst = worst.max((e - w).abs() / s[0]);
                }
            }
            Ok((worst <= 1e-10, format!("max deviation {worst:e}")))
        }),
    ]
}
