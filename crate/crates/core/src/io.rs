//! Scenario files, result bundles and report formatting.
//!
//! Scenarios are TOML documents with `[sim]`, `[cost.q]`, `[cost.r]` and one
//! or more `[[agents]]` tables (each optionally replicated with `count`).
//! Results are comma-separated tables written at 17 significant digits, TOML
//! reports, and a `manifest.toml` naming the seed, crate version and the
//! SHA-256 of the canonical scenario text.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table as TomlTable, Value};

use crate::bounds::{BoundReport, Interval};
use crate::calibrate::{EpsilonRange, RangeStatus, ValidationReport};
use crate::cost::{CostComponents, CostReport, RateBounds};
use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, Matrix};
use crate::mechanism::{AdjacencyParams, PrivacyParams};
use crate::model::AgentModel;
use crate::rng::{substream, StreamRole};
use crate::sim::{ReferenceProfile, Scenario};
use crate::synthesis::SynthesisResult;

/// Crate version written into manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shrink factor and retry count for random off-diagonal cost weights.
const Q_SHRINK: f64 = 0.5;
const Q_RETRIES: usize = 10;

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn constant_profile() -> String {
    "constant".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default = "constant_profile")]
    pub reference_profile: String,
    #[serde(default = "unit")]
    pub initial_spread: f64,
}

/// A weight matrix given either in full or as a constant diagonal with
/// optional random symmetric off-diagonal entries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub off_diagonal_range: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub q: WeightSpec,
    pub r: WeightSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    #[serde(default = "one")]
    pub count: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub delta: f64,
    pub reference_epsilon: f64,
    pub reference_delta: f64,
    #[serde(default = "unit")]
    pub trajectory_radius: f64,
    #[serde(default = "unit")]
    pub static_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_sensitivity: Option<f64>,
    pub reference_limit: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

/// Parsed scenario document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub sim: SimSection,
    pub cost: CostSection,
    pub agents: Vec<AgentSpec>,
}

/// Section and key at a byte offset of a TOML document.
fn locate(text: &str, offset: usize) -> (String, String) {
    let offset = offset.min(text.len());
    let mut section = String::from("root");
    let mut line_start = 0;
    for line in text[..offset].split_inclusive('\n') {
        let t = line.trim();
        if t.starts_with('[') {
            section = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
        line_start += line.len();
        if line_start > offset {
            break;
        }
    }
    let line_begin = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_begin..].lines().next().unwrap_or("");
    let key = line.split_once('=').map_or("", |(k, _)| k).trim().to_string();
    (section, key)
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (section, key) = e
                .span()
                .map_or(("root".into(), String::new()), |s| locate(text, s.start));
            Error::Parse {
                section,
                key,
                reason: e.message().to_string(),
            }
        })
    }

    /// Canonical serialization; comments and layout do not affect it.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            section: "root".into(),
            key: String::new(),
            reason: e.to_string(),
        })
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.canonical()?.as_bytes())))
    }

    pub fn agent_count(&self) -> usize {
        self.agents.iter().map(|a| a.count).sum()
    }

    /// Validated simulation scenario.
    pub fn build(&self) -> Result<Scenario> {
        let s = &self.sim;
        let reference_profile = ReferenceProfile::parse(&s.reference_profile).ok_or_else(|| {
            Error::validation(
                "sim.reference_profile",
                format!("unknown profile '{}'; expected constant or tanh", s.reference_profile),
            )
        })?;
        let mut agents = Vec::new();
        for (i, spec) in self.agents.iter().enumerate() {
            if spec.count == 0 {
                return Err(Error::validation(format!("agents[{i}].count"), "must be at least 1"));
            }
            let ag = spec.build(&format!("agents[{i}]"))?;
            agents.extend(std::iter::repeat(ag).take(spec.count));
        }
        if agents.is_empty() {
            return Err(Error::validation("agents", "at least one agent is required"));
        }
        let n: usize = agents.iter().map(AgentModel::state_dim).sum();
        let m: usize = agents.iter().map(AgentModel::input_dim).sum();
        let q = build_weight(&self.cost.q, n, "cost.q", s.seed)?;
        let r = build_weight(&self.cost.r, m, "cost.r", s.seed)?;
        let sc = Scenario {
            agents,
            q,
            r,
            steps: s.steps,
            seed: s.seed,
            runs: s.runs,
            reference_profile,
            initial_spread: s.initial_spread,
        };
        sc.validate()?;
        Ok(sc)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn to_matrix(rows: &[Vec<f64>], key: &str) -> Result<Matrix> {
    Matrix::from_rows(rows).map_err(|e| Error::validation(key, e.to_string()))
}

impl AgentSpec {
    fn build(&self, label: &str) -> Result<AgentModel> {
        let key = |k: &str| format!("{label}.{k}");
        let n = self.a.len();
        let ag = AgentModel {
            a: to_matrix(&self.a, &key("a"))?,
            b: to_matrix(&self.b, &key("b"))?,
            c: to_matrix(&self.c, &key("c"))?,
            w: to_matrix(&self.w, &key("w"))?,
            output_privacy: PrivacyParams::new(self.epsilon, self.delta)
                .map_err(|e| Error::validation(key("epsilon"), e.to_string()))?,
            reference_privacy: PrivacyParams::new(self.reference_epsilon, self.reference_delta)
                .map_err(|e| Error::validation(key("reference_epsilon"), e.to_string()))?,
            adjacency: AdjacencyParams::new(self.trajectory_radius, self.static_radius)
                .map_err(|e| Error::validation(key("trajectory_radius"), e.to_string()))?,
            static_sensitivity: self.static_sensitivity,
            reference_limit: self.reference_limit.clone(),
            initial_mean: self.initial_mean.clone().unwrap_or_else(|| vec![0.0; n]),
            initial_state: self.initial_state.clone(),
        };
        ag.validate(label)?;
        Ok(ag)
    }
}

/// Builds an n×n weight; random off-diagonals come from the cost-weight
/// substream of `seed` and are halved until the result is positive definite.
pub fn build_weight(spec: &WeightSpec, n: usize, key: &str, seed: u64) -> Result<Matrix> {
    let m = match (&spec.matrix, spec.diagonal) {
        (Some(rows), None) => {
            if spec.off_diagonal_range.is_some() {
                return Err(Error::validation(
                    format!("{key}.off_diagonal_range"),
                    "only valid with a diagonal",
                ));
            }
            let m = to_matrix(rows, &format!("{key}.matrix"))?;
            if m.shape() != (n, n) {
                return Err(Error::validation(
                    format!("{key}.matrix"),
                    format!("shape {:?} does not match network dimension {n}", m.shape()),
                ));
            }
            if !m.is_symmetric(1e-12) {
                return Err(Error::validation(format!("{key}.matrix"), "must be symmetric"));
            }
            m
        }
        (None, Some(d)) => {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::validation(format!("{key}.diagonal"), "must be finite and > 0"));
            }
            let Some([lo, hi]) = spec.off_diagonal_range else {
                return Ok(Matrix::identity(n).scale(d));
            };
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::validation(
                    format!("{key}.off_diagonal_range"),
                    "needs finite lo ≤ hi",
                ));
            }
            let mut rng = substream(seed, 0, StreamRole::CostWeights);
            let mut off = Matrix::zeros(n, n);
            for i in 0..n {
                for j in i + 1..n {
                    let v = if lo == hi { lo } else { rng.gen_range(lo..hi) };
                    off.set(i, j, v);
                    off.set(j, i, v);
                }
            }
            let base = Matrix::identity(n).scale(d);
            let mut shrink = 1.0;
            for _ in 0..=Q_RETRIES {
                let cand = &base + &off.scale(shrink);
                if is_positive_definite(&cand) {
                    return Ok(cand);
                }
                shrink *= Q_SHRINK;
            }
            return Err(Error::validation(
                key,
                format!("not positive definite after {Q_RETRIES} off-diagonal shrinks"),
            ));
        }
        _ => {
            return Err(Error::validation(key, "give exactly one of `diagonal` or `matrix`"));
        }
    };
    if !is_positive_definite(&m) {
        return Err(Error::validation(key, "must be positive definite"));
    }
    Ok(m)
}

/// A scenario as loaded from disk.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub scenario: Scenario,
    pub hash: String,
}

impl LoadedScenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let scenario = file.build()?;
        let hash = file.hash()?;
        Ok(Self { file, scenario, hash })
    }

    pub fn from_text(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut file = ScenarioFile::parse(text)?;
        if let Some(s) = seed {
            file.sim.seed = s;
        }
        Self::from_file(file)
    }
}

/// Reads and validates a scenario; `seed` overrides `sim.seed`.
pub fn load_scenario(path: &Path, seed: Option<u64>) -> Result<LoadedScenario> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    LoadedScenario::from_text(&text, seed)
}

/// A numeric table. When `index` is set the first column is an integer step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub index: bool,
}

impl Table {
    pub fn new(name: &str, header: &[&str], index: bool) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            index,
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Shortest text that round-trips the value: 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A structured text report.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub name: String,
    pub body: TomlTable,
}

/// Seed, version and scenario hash of a bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    pub version: String,
    pub scenario_hash: Option<String>,
    pub files: Vec<String>,
}

/// Everything one command produces.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultBundle {
    pub command: String,
    pub seed: Option<u64>,
    pub scenario_hash: Option<String>,
    pub tables: Vec<Table>,
    pub reports: Vec<Report>,
}

impl ResultBundle {
    pub fn new(command: &str, seed: Option<u64>, scenario_hash: Option<String>) -> Self {
        Self {
            command: command.into(),
            seed,
            scenario_hash,
            tables: Vec::new(),
            reports: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn report(&self, name: &str) -> Option<&Report> {
        self.reports.iter().find(|r| r.name == name)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Writes one table as comma-separated text.
pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(&table.header).map_err(csv_err(path))?;
    for row in &table.rows {
        let rec: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if j == 0 && table.index {
                    format!("{}", *v as u64)
                } else {
                    format_f64(*v)
                }
            })
            .collect();
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    section: path.display().to_string(),
                    key: s.to_string(),
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    let index = header.first().is_some_and(|h| h == "k");
    Ok(Table {
        name,
        header,
        rows,
        index,
    })
}

/// Writes tables, reports and `manifest.toml` into `dir`; returns the paths in write order.
pub fn write_results(bundle: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for t in &bundle.tables {
        let p = dir.join(format!("{}.csv", t.name));
        write_table(t, &p)?;
        written.push(p);
    }
    for rep in &bundle.reports {
        let p = dir.join(format!("{}.toml", rep.name));
        let text = toml::to_string(&rep.body).map_err(|e| Error::Io {
            path: p.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
        fs::write(&p, text).map_err(io_err(&p))?;
        written.push(p);
    }
    let manifest = Manifest {
        command: bundle.command.clone(),
        seed: bundle.seed,
        version: VERSION.into(),
        scenario_hash: bundle.scenario_hash.clone(),
        files: written
            .iter()
            .filter_map(|p| p.file_name().and_then(|s| s.to_str()).map(str::to_string))
            .collect(),
    };
    let p = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| Error::Io {
        path: p.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    fs::write(&p, text).map_err(io_err(&p))?;
    written.push(p);
    Ok(written)
}

/// Reads a manifest written by [`write_results`].
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join("manifest.toml");
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        section: "manifest".into(),
        key: String::new(),
        reason: e.message().to_string(),
    })
}

/// Builder for report tables.
#[derive(Clone, Debug, Default)]
pub struct ReportBuilder(TomlTable);

impl ReportBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(mut self, k: &str, v: f64) -> Self {
        self.0.insert(k.into(), Value::Float(v));
        self
    }

    pub fn int(mut self, k: &str, v: i64) -> Self {
        self.0.insert(k.into(), Value::Integer(v));
        self
    }

    pub fn text(mut self, k: &str, v: &str) -> Self {
        self.0.insert(k.into(), Value::String(v.into()));
        self
    }

    pub fn flag(mut self, k: &str, v: bool) -> Self {
        self.0.insert(k.into(), Value::Boolean(v));
        self
    }

    pub fn list(mut self, k: &str, v: &[f64]) -> Self {
        self.0
            .insert(k.into(), Value::Array(v.iter().map(|x| Value::Float(*x)).collect()));
        self
    }

    pub fn matrix(mut self, k: &str, m: &Matrix) -> Self {
        self.0.insert(k.into(), matrix_value(m));
        self
    }

    pub fn section(mut self, k: &str, t: TomlTable) -> Self {
        self.0.insert(k.into(), Value::Table(t));
        self
    }

    pub fn build(self) -> TomlTable {
        self.0
    }

    pub fn report(self, name: &str) -> Report {
        Report {
            name: name.into(),
            body: self.0,
        }
    }
}

fn matrix_value(m: &Matrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|i| Value::Array(m.row(i).iter().map(|v| Value::Float(*v)).collect()))
            .collect(),
    )
}

fn interval_table(iv: &Interval, exact: Option<f64>) -> TomlTable {
    let mut b = ReportBuilder::new().num("lower", iv.lower).num("upper", iv.upper);
    if let Some(x) = exact {
        b = b.num("exact", x);
    }
    b.build()
}

pub fn bound_report_table(r: &BoundReport) -> TomlTable {
    let mut b = ReportBuilder::new()
        .num("lambda_min_w", r.lambda_min_w)
        .num("trace_ata", r.trace_ata)
        .section(
            "channel",
            ReportBuilder::new()
                .int("l", r.channel.l as i64)
                .int("u", r.channel.u as i64)
                .num("c_l", r.channel.c_l)
                .num("c_u", r.channel.c_u)
                .num("sigma_l", r.channel.sigma_l)
                .num("sigma_u", r.channel.sigma_u)
                .build(),
        );
    for (name, iv, exact) in r.pairs() {
        b = b.section(name, interval_table(&iv, exact));
    }
    b.build()
}

fn components_table(c: &CostComponents) -> TomlTable {
    ReportBuilder::new()
        .num("estimation", c.estimation)
        .num("reference_quadratic", c.reference_quadratic)
        .num("offset", c.offset)
        .num("reference_penalty", c.reference_penalty)
        .num("total", c.total())
        .build()
}

pub fn cost_report_table(r: &CostReport) -> TomlTable {
    ReportBuilder::new()
        .num("j_total", r.j_total)
        .num("j_nonprivate", r.j_nonprivate)
        .num("overhead", r.overhead)
        .num("reference_penalty", r.reference_penalty)
        .section("private", components_table(&r.private))
        .section("nonprivate", components_table(&r.nonprivate))
        .build()
}

pub fn rate_bounds_table(r: &RateBounds) -> TomlTable {
    ReportBuilder::new()
        .num("lower", r.lower)
        .num("upper", r.upper)
        .num("sigma", r.sigma)
        .num("dsigma_depsilon", r.dsigma_depsilon)
        .build()
}

pub fn range_table(r: &EpsilonRange) -> TomlTable {
    let mut b = ReportBuilder::new();
    match &r.status {
        RangeStatus::Feasible => {
            b = b.text("status", "feasible").num("lower", r.lower).num("upper", r.upper);
        }
        RangeStatus::Infeasible(why) => {
            b = b.text("status", "infeasible").text("reason", why);
        }
    }
    let e = &r.etas;
    for (k, v) in [
        ("eta1", e.eta1),
        ("eta2", e.eta2),
        ("eta3", e.eta3),
        ("eta4", e.eta4),
        ("eta5", e.eta5),
    ] {
        if let Some(v) = v {
            b = b.num(k, v);
        }
    }
    b.build()
}

pub fn validation_table(v: &ValidationReport) -> TomlTable {
    ReportBuilder::new()
        .num("epsilon", v.epsilon)
        .num("delta", v.delta)
        .num("sigma", v.sigma)
        .num("trace_sigma", v.trace_sigma)
        .num("trace_sigma_bar", v.trace_sigma_bar)
        .num("j_total", v.j_total)
        .flag("pass", v.pass)
        .build()
}

pub fn synthesis_table(s: &SynthesisResult) -> TomlTable {
    ReportBuilder::new()
        .num("closed_loop_radius", s.closed_loop_radius)
        .num("trace_sigma", s.sigma.trace())
        .num("trace_sigma_bar", s.sigma_bar.trace())
        .list("g", &s.g)
        .matrix("k", &s.k)
        .matrix("l", &s.l)
        .matrix("m", &s.m)
        .matrix("kalman_gain", &s.kalman_gain)
        .build()
}
