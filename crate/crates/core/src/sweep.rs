//! Sweep configuration, index-ordered parallel execution and byte-stable output.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::intermittency::{
    context_for_gamma, fit_scaling, geometric_grid, measure_estimate, rung_windows, scaling_point, seeded_point,
    window_point, MeasureMode,
};
use crate::mather::{mather_point, misiurewicz_sequence, periodic_target, FoldCharts};
use crate::phase::{gamma_ladder, Ladder};
use crate::recurrence::{delta_partition, scan_point, scan_theta};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Bifurcation,
    Chi,
    Gammas,
    Mather,
    Misiurewicz,
    BrScan,
    Measure,
    Windows,
    Scaling,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Bifurcation,
        Kind::Chi,
        Kind::Gammas,
        Kind::Mather,
        Kind::Misiurewicz,
        Kind::BrScan,
        Kind::Measure,
        Kind::Windows,
        Kind::Scaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Bifurcation => "bifurcation",
            Kind::Chi => "chi",
            Kind::Gammas => "gammas",
            Kind::Mather => "mather",
            Kind::Misiurewicz => "misiurewicz",
            Kind::BrScan => "br-scan",
            Kind::Measure => "measure",
            Kind::Windows => "windows",
            Kind::Scaling => "scaling",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Kind::Bifurcation => &["mu", "x"],
            Kind::Chi => &["gamma", "chi", "stderr", "masked"],
            Kind::Gammas => &["l", "gamma_l", "l2gamma_l"],
            Kind::Mather => &["tau", "mbar", "m", "r", "n", "in_v"],
            Kind::Misiurewicz => &["l", "gamma_star", "gamma_star_lo", "theta_star", "residual"],
            Kind::BrScan => &["theta", "gamma", "br_pass", "first_fail", "ce_slope", "returns"],
            Kind::Measure => &["bin_lo", "bin_hi", "mass"],
            Kind::Windows => &["l", "theta", "gamma", "lyapunov", "period", "masked"],
            Kind::Scaling => &["gamma", "chi", "stderr", "mean_laminar", "masked"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

/// Flat `key = value` configuration. Keys irrelevant to `kind` are carried but unused.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub kind: Kind,
    pub family: String,
    /// Native-parameter window and resolution of the bifurcation diagram.
    pub mu_min: f64,
    pub mu_max: f64,
    pub columns: usize,
    pub retained: usize,
    pub transient: usize,
    /// Geometric `gamma` grid for `chi` and `scaling`.
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub points: usize,
    /// Iterates per grid point, split evenly over `seeds`.
    pub n: usize,
    pub seeds: usize,
    /// Iterates for Lyapunov estimates.
    pub lyap_n: usize,
    pub l_min: usize,
    pub l_max: usize,
    pub l_step: usize,
    pub l: usize,
    pub center: f64,
    pub eps: f64,
    pub scan_grid: usize,
    /// Induced steps for bounded recurrence.
    pub horizon: usize,
    pub alpha: f64,
    pub delta: f64,
    pub iota: f64,
    /// Period of the repelling target of `misiurewicz`.
    pub target_period: usize,
    pub mather_grid: usize,
    pub j_max: usize,
    pub gamma: f64,
    pub mode: MeasureMode,
    pub bins: usize,
    pub window_grid: usize,
    pub seed: u64,
    pub workers: usize,
    pub output: String,
    pub format: Format,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kind: Kind::Chi,
            family: "quadratic".into(),
            mu_min: 3.8,
            mu_max: 3.86,
            columns: 2000,
            retained: 400,
            transient: 1000,
            gamma_min: 1e-6,
            gamma_max: 1e-3,
            points: 12,
            n: 10_000_000,
            seeds: 8,
            lyap_n: 1_000_000,
            l_min: 100,
            l_max: 160,
            l_step: 10,
            l: 120,
            center: 0.81,
            eps: 0.05,
            scan_grid: 512,
            horizon: 100_000,
            alpha: 0.05,
            delta: (-10.0f64).exp(),
            iota: 0.3,
            target_period: 1,
            mather_grid: 4096,
            j_max: 2000,
            gamma: 1e-5,
            mode: MeasureMode::Base,
            bins: 4096,
            window_grid: 16384,
            seed: 0,
            workers: 1,
            output: "-".into(),
            format: Format::Csv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigIssue {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

impl SweepConfig {
    /// Sets one key from its textual value. `Ok(false)` for an unknown key.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<bool, String> {
        match key {
            "kind" => self.kind = Kind::parse(v).ok_or_else(|| format!("unknown kind `{v}`"))?,
            "family" => self.family = v.to_string(),
            "mu_min" => self.mu_min = parse_num(v)?,
            "mu_max" => self.mu_max = parse_num(v)?,
            "columns" => self.columns = parse_num(v)?,
            "retained" => self.retained = parse_num(v)?,
            "transient" => self.transient = parse_num(v)?,
            "gamma_min" => self.gamma_min = parse_num(v)?,
            "gamma_max" => self.gamma_max = parse_num(v)?,
            "points" => self.points = parse_num(v)?,
            "n" => self.n = parse_num(v)?,
            "seeds" => self.seeds = parse_num(v)?,
            "lyap_n" => self.lyap_n = parse_num(v)?,
            "l_min" => self.l_min = parse_num(v)?,
            "l_max" => self.l_max = parse_num(v)?,
            "l_step" => self.l_step = parse_num(v)?,
            "l" => self.l = parse_num(v)?,
            "center" => self.center = parse_num(v)?,
            "eps" => self.eps = parse_num(v)?,
            "scan_grid" => self.scan_grid = parse_num(v)?,
            "horizon" => self.horizon = parse_num(v)?,
            "alpha" => self.alpha = parse_num(v)?,
            "delta" => self.delta = parse_num(v)?,
            "iota" => self.iota = parse_num(v)?,
            "target_period" => self.target_period = parse_num(v)?,
            "mather_grid" => self.mather_grid = parse_num(v)?,
            "j_max" => self.j_max = parse_num(v)?,
            "gamma" => self.gamma = parse_num(v)?,
            "mode" => self.mode = MeasureMode::parse(v).ok_or_else(|| format!("unknown mode `{v}`"))?,
            "bins" => self.bins = parse_num(v)?,
            "window_grid" => self.window_grid = parse_num(v)?,
            "seed" => self.seed = parse_num(v)?,
            "workers" => self.workers = parse_num(v)?,
            "output" => self.output = v.to_string(),
            "format" => self.format = Format::parse(v).ok_or_else(|| format!("unknown format `{v}`"))?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let f = render_float;
        vec![
            ("kind", self.kind.name().into()),
            ("family", self.family.clone()),
            ("mu_min", f(self.mu_min)),
            ("mu_max", f(self.mu_max)),
            ("columns", self.columns.to_string()),
            ("retained", self.retained.to_string()),
            ("transient", self.transient.to_string()),
            ("gamma_min", f(self.gamma_min)),
            ("gamma_max", f(self.gamma_max)),
            ("points", self.points.to_string()),
            ("n", self.n.to_string()),
            ("seeds", self.seeds.to_string()),
            ("lyap_n", self.lyap_n.to_string()),
            ("l_min", self.l_min.to_string()),
            ("l_max", self.l_max.to_string()),
            ("l_step", self.l_step.to_string()),
            ("l", self.l.to_string()),
            ("center", f(self.center)),
            ("eps", f(self.eps)),
            ("scan_grid", self.scan_grid.to_string()),
            ("horizon", self.horizon.to_string()),
            ("alpha", f(self.alpha)),
            ("delta", f(self.delta)),
            ("iota", f(self.iota)),
            ("target_period", self.target_period.to_string()),
            ("mather_grid", self.mather_grid.to_string()),
            ("j_max", self.j_max.to_string()),
            ("gamma", f(self.gamma)),
            ("mode", self.mode.name().into()),
            ("bins", self.bins.to_string()),
            ("window_grid", self.window_grid.to_string()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("output", self.output.clone()),
            ("format", self.format.name().into()),
        ]
    }

    /// Every violated constraint, each naming its key.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |key: &str, ok: bool, message: &str| {
            if !ok {
                out.push(ConfigIssue::Invalid {
                    key: key.into(),
                    message: message.into(),
                });
            }
        };
        bad("family", self.family == "quadratic", "only `quadratic` is available");
        bad("mu_max", self.mu_min < self.mu_max, "must exceed mu_min");
        bad("mu_min", self.mu_min > 0.0 && self.mu_max <= 4.0, "window must lie in (0, 4]");
        for (k, v) in [
            ("columns", self.columns),
            ("retained", self.retained),
            ("points", self.points),
            ("n", self.n),
            ("seeds", self.seeds),
            ("lyap_n", self.lyap_n),
            ("l_step", self.l_step),
            ("scan_grid", self.scan_grid),
            ("horizon", self.horizon),
            ("mather_grid", self.mather_grid),
            ("j_max", self.j_max),
            ("bins", self.bins),
            ("window_grid", self.window_grid),
            ("workers", self.workers),
        ] {
            bad(k, v > 0, "must be positive");
        }
        bad("gamma_min", self.gamma_min > 0.0, "must be positive");
        bad("gamma_max", self.gamma_min < self.gamma_max, "must exceed gamma_min");
        bad("l_max", self.l_min <= self.l_max, "must be at least l_min");
        bad("l_min", self.l_min >= 1, "must be positive");
        bad("l", self.l >= 1, "must be positive");
        bad("eps", self.eps > 0.0 && self.center - self.eps >= 0.0 && self.center + self.eps <= 1.0, "window must lie in [0, 1]");
        bad("gamma", self.gamma > 0.0, "must be positive");
        bad("alpha", self.alpha > 0.0, "must be positive");
        bad("delta", self.delta > 0.0 && self.delta < 1.0, "must lie in (0, 1)");
        bad("iota", self.iota > 0.0 && self.iota < 1.0, "must lie in (0, 1)");
        bad("target_period", (1..=12).contains(&self.target_period), "must lie in 1..=12");
        bad("output", !self.output.is_empty(), "must not be empty");
        out
    }
}

/// Parses `key = value` lines; `#` starts a comment. Collects every problem before failing.
pub fn parse_config(text: &str) -> std::result::Result<SweepConfig, ConfigError> {
    let mut cfg = SweepConfig::default();
    let mut issues = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let indent = body.len() - body.trim_start().len();
        let Some(eq) = body.find('=') else {
            issues.push(ConfigIssue::Parse {
                line,
                column: indent + 1,
                message: "expected `key = value`".into(),
            });
            continue;
        };
        let key = body[..eq].trim();
        if key.is_empty() {
            issues.push(ConfigIssue::Parse {
                line,
                column: eq + 1,
                message: "missing key".into(),
            });
            continue;
        }
        if let Some(off) = key.find(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')) {
            issues.push(ConfigIssue::Parse {
                line,
                column: indent + off + 1,
                message: format!("invalid character in key `{key}`"),
            });
            continue;
        }
        let value = body[eq + 1..].trim();
        if value.is_empty() {
            issues.push(ConfigIssue::Parse {
                line,
                column: eq + 2,
                message: "missing value".into(),
            });
            continue;
        }
        if seen.iter().any(|k| k == key) {
            issues.push(ConfigIssue::Invalid {
                key: key.into(),
                message: format!("duplicate on line {line}"),
            });
            continue;
        }
        seen.push(key.into());
        match cfg.set(key, value) {
            Ok(true) => {}
            Ok(false) => issues.push(ConfigIssue::UnknownKey { line, key: key.into() }),
            Err(message) => issues.push(ConfigIssue::Invalid { key: key.into(), message }),
        }
    }
    if issues.is_empty() {
        issues = cfg.validate();
    }
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { issues })
    }
}

/// Applies `key=value` overrides on top of a parsed config and revalidates.
pub fn apply_overrides(mut cfg: SweepConfig, overrides: &[(String, String)]) -> std::result::Result<SweepConfig, ConfigError> {
    let mut issues = Vec::new();
    for (k, v) in overrides {
        match cfg.set(k, v) {
            Ok(true) => {}
            Ok(false) => issues.push(ConfigIssue::Invalid {
                key: k.clone(),
                message: "unknown key".into(),
            }),
            Err(message) => issues.push(ConfigIssue::Invalid { key: k.clone(), message }),
        }
    }
    if issues.is_empty() {
        issues = cfg.validate();
    }
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { issues })
    }
}

pub fn emit_config(cfg: &SweepConfig) -> String {
    cfg.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// SHA-256 of the emitted config without the execution keys (`workers`, `output`, `format`).
pub fn config_hash(cfg: &SweepConfig) -> String {
    let mut h = Sha256::new();
    for (k, v) in cfg.entries() {
        if !matches!(k, "workers" | "output" | "format") {
            h.update(format!("{k} = {v}\n").as_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Decimal with 17 significant digits; scientific outside `[1e-5, 1e16)`.
pub fn render_float(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:.16e}", x.abs());
    let (mant, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if x < 0.0 { "-" } else { "" };
    let body = if (0..16).contains(&exp) {
        let k = exp as usize + 1;
        format!("{}.{}", &digits[..k], &digits[k..])
    } else if (-5..0).contains(&exp) {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        format!("{mant}e{exp}")
    };
    format!("{sign}{body}")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Missing,
}

impl Cell {
    /// CSV rendering; missing values are empty.
    pub fn text(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => render_float(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Float(x) if !x.is_finite() => "null".into(),
            Cell::Missing => "null".into(),
            c => c.text(),
        }
    }
}

fn opt_float(x: Option<f64>) -> Cell {
    x.map_or(Cell::Missing, Cell::Float)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    /// Position of the grid point; tasks that cover several points (a rung, a histogram)
    /// number their rows consecutively.
    pub index: usize,
    /// `ok` or a failure code.
    pub status: String,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub version: &'static str,
    /// Not emitted, so that output bytes depend only on the config.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub kind: Kind,
    pub records: Vec<Record>,
    pub summary: Vec<(String, Cell)>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.status != "ok").count()
    }
}

type Rows = Vec<(String, Vec<Cell>)>;

fn ok_rows(rows: Vec<Vec<Cell>>) -> Rows {
    rows.into_iter().map(|r| ("ok".to_string(), r)).collect()
}

/// State shared by all tasks of a sweep, built once up front.
struct Shared {
    geo: Geometry,
    ladder: Option<Ladder>,
    charts: Option<FoldCharts>,
}

fn task_count(cfg: &SweepConfig) -> usize {
    match cfg.kind {
        Kind::Bifurcation => cfg.columns,
        Kind::Chi | Kind::Scaling => cfg.points,
        Kind::Gammas => cfg.l_max - cfg.l_min + 1,
        Kind::Mather => cfg.mather_grid,
        Kind::Misiurewicz | Kind::Measure => 1,
        Kind::BrScan => cfg.scan_grid,
        Kind::Windows => (cfg.l_max - cfg.l_min) / cfg.l_step + 1,
    }
}

fn gamma_grid(cfg: &SweepConfig) -> Vec<f64> {
    geometric_grid(cfg.gamma_min, cfg.gamma_max, cfg.points)
}

fn run_task(cfg: &SweepConfig, shared: &Shared, k: usize) -> Result<Rows> {
    let geo = &shared.geo;
    let need_ladder = || shared.ladder.as_ref().ok_or(Error::Geometry("ladder unavailable".into()));
    match cfg.kind {
        Kind::Bifurcation => {
            let mu = if cfg.columns == 1 {
                cfg.mu_min
            } else {
                cfg.mu_min + (cfg.mu_max - cfg.mu_min) * k as f64 / (cfg.columns - 1) as f64
            };
            let mut x = geo.fam.iterate_n(seeded_point(cfg.seed, 0), mu, cfg.transient);
            let mut rows = Vec::with_capacity(cfg.retained);
            for _ in 0..cfg.retained {
                rows.push(vec![Cell::Float(mu), Cell::Float(x)]);
                x = geo.fam.map(x, mu);
            }
            Ok(ok_rows(rows))
        }
        Kind::Chi => {
            let g = gamma_grid(cfg)[k];
            let masked = window_point(geo, g, cfg.lyap_n).masked();
            let p = scaling_point(geo, g, false, cfg.seed, cfg.seeds, cfg.n / cfg.seeds);
            Ok(ok_rows(vec![vec![
                Cell::Float(g),
                Cell::Float(p.chi),
                Cell::Float(p.stderr),
                Cell::Bool(masked),
            ]]))
        }
        Kind::Scaling => {
            let p = scaling_row(cfg, geo, k);
            Ok(ok_rows(vec![vec![
                Cell::Float(p.gamma),
                Cell::Float(p.chi),
                Cell::Float(p.stderr),
                opt_float(p.mean_laminar),
                Cell::Bool(p.masked),
            ]]))
        }
        Kind::Gammas => {
            let l = cfg.l_min + k;
            let g = need_ladder()?.gamma(l);
            Ok(ok_rows(vec![vec![
                Cell::Int(l as i64),
                Cell::Float(g),
                Cell::Float((l * l) as f64 * g),
            ]]))
        }
        Kind::Mather => {
            let charts = shared.charts.as_ref().ok_or(Error::Geometry("fold charts unavailable".into()))?;
            let tau = k as f64 / cfg.mather_grid as f64;
            let s = mather_point(geo, charts, tau, cfg.j_max)?;
            Ok(ok_rows(vec![vec![
                Cell::Float(tau),
                opt_float(s.mbar),
                opt_float(s.m()),
                Cell::Int(s.r),
                Cell::Int(s.n as i64),
                Cell::Bool(s.in_v(cfg.j_max)),
            ]]))
        }
        Kind::Misiurewicz => {
            let ladder = need_ladder()?;
            let target = periodic_target(geo, cfg.target_period)?;
            let seq = misiurewicz_sequence(geo, ladder, &target, cfg.l_min, cfg.l_max)?;
            Ok(seq
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| match e {
                    Ok(e) => (
                        "ok".to_string(),
                        vec![
                            Cell::Int(e.l as i64),
                            Cell::Float(e.gamma),
                            Cell::Float(e.gamma_lo),
                            Cell::Float(e.theta),
                            Cell::Float(e.residual),
                        ],
                    ),
                    Err(err) => (
                        err.code().to_string(),
                        vec![
                            Cell::Int((cfg.l_min + i) as i64),
                            Cell::Missing,
                            Cell::Missing,
                            Cell::Missing,
                            Cell::Missing,
                        ],
                    ),
                })
                .collect())
        }
        Kind::BrScan => {
            let theta = scan_theta(cfg.center, cfg.eps, cfg.scan_grid, k);
            let params = delta_partition(geo.c(), cfg.alpha, cfg.delta, cfg.iota);
            let p = scan_point(geo, need_ladder()?, cfg.l, theta, &params, cfg.horizon);
            let r = p.report?;
            Ok(ok_rows(vec![vec![
                Cell::Float(theta),
                Cell::Float(p.gamma),
                Cell::Bool(r.br_pass),
                r.first_fail.map_or(Cell::Missing, |f| Cell::Int(f as i64)),
                Cell::Float(r.ce_slope),
                Cell::Int(r.returns.len() as i64),
            ]]))
        }
        Kind::Measure => {
            let ctx = context_for_gamma(geo, cfg.gamma)?;
            let m = measure_estimate(&ctx, cfg.mode, seeded_point(cfg.seed, 0), cfg.n, cfg.bins);
            let w = m.width();
            Ok(ok_rows(
                m.masses
                    .iter()
                    .enumerate()
                    .map(|(i, &mass)| {
                        vec![Cell::Float(i as f64 * w), Cell::Float((i + 1) as f64 * w), Cell::Float(mass)]
                    })
                    .collect(),
            ))
        }
        Kind::Windows => {
            let l = cfg.l_min + k * cfg.l_step;
            let rw = rung_windows(need_ladder()?, l, cfg.window_grid, cfg.lyap_n)?;
            Ok(ok_rows(
                rw.points
                    .iter()
                    .zip(&rw.thetas)
                    .map(|(p, &t)| {
                        vec![
                            Cell::Int(l as i64),
                            Cell::Float(t),
                            Cell::Float(p.gamma),
                            Cell::Float(p.lyapunov),
                            p.period.map_or(Cell::Missing, |q| Cell::Int(q as i64)),
                            Cell::Bool(p.masked()),
                        ]
                    })
                    .collect(),
            ))
        }
    }
}

fn scaling_row(cfg: &SweepConfig, geo: &Geometry, k: usize) -> crate::intermittency::ScalingPoint {
    let g = gamma_grid(cfg)[k];
    let masked = window_point(geo, g, cfg.lyap_n).masked();
    scaling_point(geo, g, masked, cfg.seed, cfg.seeds, cfg.n / cfg.seeds)
}

fn summarize(cfg: &SweepConfig, records: &[Record]) -> Vec<(String, Cell)> {
    let ok = |r: &&Record| r.status == "ok";
    match cfg.kind {
        Kind::Scaling => {
            let points = records
                .iter()
                .filter(ok)
                .map(|r| {
                    let f = |i: usize| match r.cells[i] {
                        Cell::Float(x) => x,
                        _ => f64::NAN,
                    };
                    crate::intermittency::ScalingPoint {
                        gamma: f(0),
                        chi: f(1),
                        stderr: f(2),
                        mean_laminar: match r.cells[3] {
                            Cell::Float(x) => Some(x),
                            _ => None,
                        },
                        masked: r.cells[4] == Cell::Bool(true),
                    }
                })
                .collect();
            match fit_scaling(points) {
                Ok(fit) => vec![
                    ("slope".into(), Cell::Float(fit.slope)),
                    ("laminar_slope".into(), Cell::Float(fit.laminar_slope)),
                    ("k_min".into(), Cell::Float(fit.k_band.0)),
                    ("k_max".into(), Cell::Float(fit.k_band.1)),
                ],
                Err(e) => vec![(e.code().into(), Cell::Missing)],
            }
        }
        Kind::BrScan => {
            let done: Vec<&Record> = records.iter().filter(ok).collect();
            let pass = done.iter().filter(|r| r.cells[2] == Cell::Bool(true)).count();
            vec![(
                "surviving_fraction".into(),
                Cell::Float(pass as f64 / records.len().max(1) as f64),
            )]
        }
        Kind::Windows => {
            let mut out = Vec::new();
            let mut l = cfg.l_min;
            while l <= cfg.l_max {
                let rung: Vec<&Record> = records.iter().filter(|r| r.cells[0] == Cell::Int(l as i64)).collect();
                let masked = rung.iter().filter(|r| r.cells[5] == Cell::Bool(true)).count();
                out.push((
                    format!("masked_fraction_{l}"),
                    Cell::Float(masked as f64 / rung.len().max(1) as f64),
                ));
                l += cfg.l_step;
            }
            out
        }
        _ => Vec::new(),
    }
}

/// Runs every grid task on a pool of `cfg.workers` threads. Rows are merged in grid-index
/// order, so the result does not depend on scheduling; a failed task leaves one record
/// carrying its failure code.
pub fn run_sweep(cfg: &SweepConfig) -> SweepResult {
    let start = Instant::now();
    let columns = cfg.kind.columns().len();
    let tasks = task_count(cfg);
    let shared = Geometry::quadratic().map(|geo| {
        let ladder = match cfg.kind {
            Kind::Gammas | Kind::Misiurewicz | Kind::Windows => gamma_ladder(&geo, cfg.l_min, cfg.l_max + 1).ok(),
            Kind::BrScan => gamma_ladder(&geo, cfg.l, cfg.l + 1).ok(),
            _ => None,
        };
        let charts = match cfg.kind {
            Kind::Mather => FoldCharts::build(&geo).ok(),
            _ => None,
        };
        Shared { geo, ladder, charts }
    });
    let work = |k: usize| -> Rows {
        let out = match &shared {
            Ok(s) => run_task(cfg, s, k),
            Err(e) => Err(e.clone()),
        };
        out.unwrap_or_else(|e| vec![(e.code().to_string(), vec![Cell::Missing; columns])])
    };
    let run = || (0..tasks).into_par_iter().map(work).collect::<Vec<Rows>>();
    let per_task = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    let records: Vec<Record> = per_task
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(index, (status, cells))| Record { index, status, cells })
        .collect();
    let summary = summarize(cfg, &records);
    SweepResult {
        kind: cfg.kind,
        records,
        summary,
        provenance: Provenance {
            config_hash: config_hash(cfg),
            version: env!("CARGO_PKG_VERSION"),
            wall_time: start.elapsed().as_secs_f64(),
        },
    }
}

pub fn emit(result: &SweepResult, format: Format) -> Vec<u8> {
    match format {
        Format::Csv => emit_csv(result),
        Format::Json => emit_json(result),
    }
    .into_bytes()
}

fn emit_csv(result: &SweepResult) -> String {
    let mut out = String::from("index,status");
    for c in result.kind.columns() {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in &result.records {
        let _ = write!(out, "{},{}", r.index, r.status);
        for c in &r.cells {
            out.push(',');
            out.push_str(&c.text());
        }
        out.push('\n');
    }
    out
}

fn json_str(s: &str) -> String {
    let mut out = String::from("\"");
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn emit_json(result: &SweepResult) -> String {
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"kind\": {},", json_str(result.kind.name()));
    let _ = writeln!(
        out,
        "  \"provenance\": {{\"config_hash\": {}, \"version\": {}}},",
        json_str(&result.provenance.config_hash),
        json_str(result.provenance.version)
    );
    let summary: Vec<String> = result
        .summary
        .iter()
        .map(|(k, v)| format!("{}: {}", json_str(k), v.json()))
        .collect();
    let _ = writeln!(out, "  \"summary\": {{{}}},", summary.join(", "));
    let mut cols = vec![json_str("index"), json_str("status")];
    cols.extend(result.kind.columns().iter().map(|c| json_str(c)));
    let _ = writeln!(out, "  \"columns\": [{}],", cols.join(", "));
    out.push_str("  \"records\": [");
    for (i, r) in result.records.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let mut cells = vec![r.index.to_string(), json_str(&r.status)];
        cells.extend(r.cells.iter().map(Cell::json));
        let _ = write!(out, "    [{}]", cells.join(", "));
    }
    out.push_str(if result.records.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
    out
}
