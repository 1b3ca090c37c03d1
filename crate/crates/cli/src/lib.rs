//! Library side of the `hgm` command: table sweeps over the test families,
//! the verification suites behind `hgm check`, and input loading.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hgm_core::checks::{self, IdentityReport};
use hgm_core::families::Family;
use hgm_core::geometry::{self, DEFAULT_FEAS_TOL};
use hgm_core::oracles::{mc_probability, quadrature_probability};
use hgm_core::{probability, HalfspaceSystem, HgmError, Method, PathKind, SolverConfig};

/// Exit status for unreadable or invalid input.
pub const EXIT_PARSE: u8 = 2;
/// Exit status when neither the bounded nor the cone method applies.
pub const EXIT_NO_METHOD: u8 = 3;
/// Exit status for failures inside the numerics.
pub const EXIT_NUMERICAL: u8 = 4;

/// Largest dimension accepted by a table sweep; `|F|` grows like `2^d`.
pub const MAX_TABLE_DIM: usize = 12;

pub fn exit_code(err: &HgmError) -> u8 {
    match err {
        HgmError::Parse(_)
        | HgmError::DimensionMismatch(_)
        | HgmError::ZeroNormal(_)
        | HgmError::NonFiniteEntry
        | HgmError::TooManyHalfspaces(_) => EXIT_PARSE,
        HgmError::NoApplicableMethod(_)
        | HgmError::UnboundedPolyhedron
        | HgmError::GeneralPositionFailure(_)
        | HgmError::NotSquare { .. }
        | HgmError::SingularNormals
        | HgmError::ZeroDiagonal(_) => EXIT_NO_METHOD,
        _ => EXIT_NUMERICAL,
    }
}

/// Read a system from JSON or CSV, chosen by extension (JSON is tried first
/// when the extension says neither).
pub fn load_system(path: &Path) -> hgm_core::Result<HalfspaceSystem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HgmError::Parse(format!("{}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => HalfspaceSystem::from_json(&text),
        Some("csv") => HalfspaceSystem::from_csv(&text),
        _ => HalfspaceSystem::from_json(&text).or_else(|_| HalfspaceSystem::from_csv(&text)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Hgm,
    Mc,
    Quad,
}

impl std::str::FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hgm" => Ok(Estimator::Hgm),
            "mc" => Ok(Estimator::Mc),
            "quad" => Ok(Estimator::Quad),
            _ => Err(format!(
                "unknown estimator {s:?} (expected hgm, mc or quad)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Md,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" => Ok(Format::Md),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format {s:?} (expected md, csv or json)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TableSpec {
    pub family: Family,
    pub d_min: usize,
    pub d_max: usize,
    pub estimators: Vec<Estimator>,
    pub mc_samples: u64,
    pub seed: u64,
    pub method: Method,
    pub solver: SolverConfig,
    /// Absolute tolerance of the quadrature column.
    pub quad_tol: f64,
}

impl TableSpec {
    pub fn new(family: Family, d_min: usize, d_max: usize) -> Self {
        Self {
            family,
            d_min,
            d_max,
            estimators: vec![Estimator::Hgm, Estimator::Mc],
            mc_samples: 1_000_000,
            seed: 0,
            method: Method::Auto,
            solver: SolverConfig::default(),
            quad_tol: 1e-8,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.d_min < 2 || self.d_min > self.d_max {
            bail!(
                "need 2 <= d_min <= d_max, got {}..{}",
                self.d_min,
                self.d_max
            );
        }
        if self.d_max > MAX_TABLE_DIM {
            bail!("d_max {} exceeds {MAX_TABLE_DIM}", self.d_max);
        }
        if self.estimators.contains(&Estimator::Mc) && self.mc_samples == 0 {
            bail!("--samples must be positive");
        }
        self.solver.validate()?;
        Ok(())
    }

    fn uses(&self, e: Estimator) -> bool {
        self.estimators.contains(&e)
    }
}

/// One row of a sweep.  Missing columns are estimators that were not
/// requested or that failed (see `flags`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub family: String,
    pub d: usize,
    pub hgm: Option<f64>,
    pub hgm_time_s: Option<f64>,
    pub mc: Option<f64>,
    pub mc_std_error: Option<f64>,
    pub quad: Option<f64>,
    pub flags: String,
}

impl TableRow {
    /// Everything but the timing column, which varies run to run.
    pub fn same_values(&self, other: &TableRow) -> bool {
        let bits = |v: Option<f64>| v.map(f64::to_bits);
        self.family == other.family
            && self.d == other.d
            && bits(self.hgm) == bits(other.hgm)
            && bits(self.mc) == bits(other.mc)
            && bits(self.mc_std_error) == bits(other.mc_std_error)
            && bits(self.quad) == bits(other.quad)
            && self.flags == other.flags
    }
}

pub fn table_row(spec: &TableSpec, d: usize) -> TableRow {
    let sys = spec.family.build(d);
    let mut flags = Vec::new();
    let mut row = TableRow {
        family: spec.family.name().to_string(),
        d,
        hgm: None,
        hgm_time_s: None,
        mc: None,
        mc_std_error: None,
        quad: None,
        flags: String::new(),
    };
    if spec.uses(Estimator::Hgm) {
        match probability(&sys, spec.method, &spec.solver) {
            Ok(r) => {
                row.hgm = Some(r.probability);
                row.hgm_time_s = Some(r.wall_time);
                flags.extend(r.flags);
            }
            Err(e) => flags.push(format!("hgm: {e}")),
        }
    }
    if spec.uses(Estimator::Mc) {
        match mc_probability(&sys, spec.mc_samples, spec.seed) {
            Ok(m) => {
                row.mc = Some(m.mean);
                row.mc_std_error = Some(m.std_error);
            }
            Err(e) => flags.push(format!("mc: {e}")),
        }
    }
    if spec.uses(Estimator::Quad) {
        match quadrature_probability(&sys, spec.quad_tol) {
            Ok(q) => row.quad = Some(q),
            Err(e) => flags.push(format!("quad: {e}")),
        }
    }
    row.flags = flags.join("; ");
    row
}

/// Rows run in parallel and come back in order of `d`.
pub fn generate_table(spec: &TableSpec) -> anyhow::Result<Vec<TableRow>> {
    spec.validate()?;
    Ok((spec.d_min..=spec.d_max)
        .into_par_iter()
        .map(|d| table_row(spec, d))
        .collect())
}

/// `5.1758e-02`: four decimals and a signed two-digit exponent.
fn fmt_sci(x: f64) -> String {
    let text = format!("{x:.4e}");
    let (mantissa, exp) = text.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!(
        "{mantissa}e{}{:02}",
        if exp < 0 { '-' } else { '+' },
        exp.abs()
    )
}

/// Fixed decimals, or scientific for the whole column when it holds
/// values below `1e-2` (the small-content family).
fn column_formatter(
    values: impl Iterator<Item = Option<f64>>,
    digits: usize,
) -> impl Fn(Option<f64>) -> String {
    let scientific = values.flatten().any(|x| x != 0.0 && x.abs() < 1e-2);
    move |v| match v {
        None => "-".into(),
        Some(x) if scientific => fmt_sci(x),
        Some(x) => format!("{x:.digits$}"),
    }
}

pub fn render_table(rows: &[TableRow], format: Format) -> anyhow::Result<String> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            Ok(String::from_utf8(w.into_inner()?)?)
        }
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        Format::Md => {
            let mut out = String::new();
            writeln!(
                out,
                "| d | HGM | time of HGM (s) | MC | MC std. error | quadrature | flags |"
            )?;
            writeln!(out, "|---|---|---|---|---|---|---|")?;
            let hgm = column_formatter(rows.iter().map(|r| r.hgm), 6);
            let mc = column_formatter(rows.iter().map(|r| r.mc), 4);
            let quad = column_formatter(rows.iter().map(|r| r.quad), 6);
            for r in rows {
                writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    r.d,
                    hgm(r.hgm),
                    r.hgm_time_s.map_or("-".into(), |t| format!("{t:.2}")),
                    mc(r.mc),
                    r.mc_std_error.map_or("-".into(), |s| format!("{s:.1e}")),
                    quad(r.quad),
                    r.flags,
                )?;
            }
            Ok(out)
        }
    }
}

pub fn parse_csv_table(text: &str) -> anyhow::Result<Vec<TableRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize()
        .map(|r| r.context("malformed table row"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub d_max: usize,
    /// Scale of the random perturbation applied to every system (0 = none).
    pub perturb: f64,
    pub seed: u64,
    pub mc_samples: u64,
    pub identity_points: usize,
    pub face_points: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            d_max: 5,
            perturb: 0.0,
            seed: 0,
            mc_samples: 200_000,
            identity_points: 10_000,
            face_points: 1_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckCell {
    pub pass: bool,
    pub detail: String,
}

pub const SUITES: [&str; 6] = [
    "identity",
    "face-identity",
    "finite-difference",
    "commutation",
    "monte-carlo",
    "quadrature",
];

/// Pass/fail per (suite, system); systems are named like `P3`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CheckReport {
    pub systems: Vec<String>,
    pub cells: BTreeMap<String, BTreeMap<String, CheckCell>>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.cells.values().flat_map(|m| m.values()).all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<(String, String, String)> {
        let mut out = Vec::new();
        for (suite, m) in &self.cells {
            for (sys, c) in m {
                if !c.pass {
                    out.push((suite.clone(), sys.clone(), c.detail.clone()));
                }
            }
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| suite | {} |", self.systems.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(self.systems.len()));
        for suite in SUITES {
            let Some(m) = self.cells.get(suite) else {
                continue;
            };
            let cells: Vec<&str> = self
                .systems
                .iter()
                .map(|s| match m.get(s) {
                    Some(c) if c.pass => "pass",
                    Some(_) => "FAIL",
                    None => "-",
                })
                .collect();
            let _ = writeln!(out, "| {suite} | {} |", cells.join(" | "));
        }
        for (suite, sys, detail) in self.failures() {
            let _ = writeln!(out, "FAIL {suite} {sys}: {detail}");
        }
        let _ = writeln!(
            out,
            "{}",
            if self.passed() {
                "all checks passed"
            } else {
                "some checks failed"
            }
        );
        out
    }
}

fn identity_cell(r: IdentityReport) -> CheckCell {
    CheckCell {
        pass: r.passed(),
        detail: format!(
            "{} checked, {} skipped, {} failures",
            r.checked, r.skipped, r.failures
        ),
    }
}

fn error_cell(e: impl std::fmt::Display) -> CheckCell {
    CheckCell {
        pass: false,
        detail: e.to_string(),
    }
}

fn check_system(family: Family, d: usize, opts: &CheckOptions) -> Vec<(&'static str, CheckCell)> {
    let original = family.build(d);
    let mut cells = Vec::new();
    let sys = if opts.perturb > 0.0 {
        match checks::perturbed(&original, opts.perturb, opts.seed ^ (d as u64) << 8) {
            Ok(s) => s,
            Err(e) => return vec![("identity", error_cell(e))],
        }
    } else {
        original.clone()
    };
    // The complex of the unperturbed system: the identities must keep holding
    // for the same complex in a neighbourhood of the parameters.
    let fc = match geometry::face_complex_lp(&original, DEFAULT_FEAS_TOL) {
        Ok(fc) => fc,
        Err(e) => return vec![("identity", error_cell(e))],
    };
    if d <= 5 {
        cells.push((
            "identity",
            identity_cell(checks::ie_identity(
                &sys,
                &fc,
                opts.identity_points,
                opts.seed,
            )),
        ));
        cells.push((
            "face-identity",
            checks::face_identity(&sys, &fc, opts.face_points, opts.seed)
                .map_or_else(error_cell, identity_cell),
        ));
    }
    let kind = if family == Family::C {
        PathKind::Cone
    } else {
        PathKind::Bounded
    };
    if d <= 4 {
        let cell = match checks::fd_pfaffian(&sys, 1e-4) {
            Ok(errs) => {
                let worst = errs.iter().copied().fold(0.0, f64::max);
                CheckCell {
                    pass: worst <= 5e-4,
                    detail: format!("max relative error {worst:.2e}"),
                }
            }
            Err(e) => error_cell(e),
        };
        cells.push(("finite-difference", cell));
        let cell = match checks::commutation_residual(&sys, kind, 10) {
            Ok(r) => CheckCell {
                pass: r <= 1e-6,
                detail: format!("max residual {r:.2e}"),
            },
            Err(e) => error_cell(e),
        };
        cells.push(("commutation", cell));
    }
    let hgm = probability(&sys, Method::Auto, &SolverConfig::default());
    let cell = match (&hgm, mc_probability(&sys, opts.mc_samples, opts.seed)) {
        (Ok(h), Ok(m)) => {
            let p = h.probability;
            let se = if m.std_error > 0.0 {
                m.std_error
            } else {
                (p * (1.0 - p) / opts.mc_samples as f64).sqrt()
            };
            let z = (p - m.mean).abs() / se;
            CheckCell {
                pass: z <= 4.0,
                detail: format!("hgm {p:.6e}, mc {:.6e}, z {z:.2}", m.mean),
            }
        }
        (Err(e), _) => error_cell(e),
        (_, Err(e)) => error_cell(e),
    };
    cells.push(("monte-carlo", cell));
    if d <= 3 {
        let cell = match (&hgm, quadrature_probability(&sys, 1e-8)) {
            (Ok(h), Ok(q)) => {
                let diff = (h.probability - q).abs();
                CheckCell {
                    pass: diff <= 1e-4,
                    detail: format!("|hgm - quad| {diff:.2e}"),
                }
            }
            (Err(e), _) => error_cell(e),
            (_, Err(e)) => error_cell(e),
        };
        cells.push(("quadrature", cell));
    }
    cells
}

pub fn run_checks(opts: &CheckOptions) -> anyhow::Result<CheckReport> {
    if opts.d_max < 2 || opts.d_max > 6 {
        bail!("--d-max must be between 2 and 6, got {}", opts.d_max);
    }
    let systems: Vec<(Family, usize)> = [Family::P, Family::Q, Family::C]
        .into_iter()
        .flat_map(|f| (2..=opts.d_max).map(move |d| (f, d)))
        .collect();
    let results: Vec<_> = systems
        .par_iter()
        .map(|&(f, d)| check_system(f, d, opts))
        .collect();
    let mut report = CheckReport::default();
    for (&(f, d), cells) in systems.iter().zip(results) {
        let name = format!("{}{d}", f.name());
        for (suite, cell) in cells {
            report
                .cells
                .entry(suite.to_string())
                .or_default()
                .insert(name.clone(), cell);
        }
        report.systems.push(name);
    }
    Ok(report)
}

/// Cap rayon's pool from `HGM_THREADS` (unset or 0 = rayon's default).
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("HGM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("HGM_THREADS={value:?} is not a number"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(TableSpec::new(Family::P, 2, 10).validate().is_ok());
        assert!(TableSpec::new(Family::P, 1, 3).validate().is_err());
        assert!(TableSpec::new(Family::P, 4, 3).validate().is_err());
        assert!(TableSpec::new(Family::P, 2, 13).validate().is_err());
    }

    #[test]
    fn csv_round_trip_reproduces_rows() {
        let mut spec = TableSpec::new(Family::Q, 2, 4);
        spec.mc_samples = 20_000;
        spec.seed = 5;
        let rows = generate_table(&spec).unwrap();
        let parsed = parse_csv_table(&render_table(&rows, Format::Csv).unwrap()).unwrap();
        assert_eq!(parsed.len(), rows.len());
        for (p, r) in parsed.iter().zip(&rows) {
            assert!(p.same_values(r), "{p:?} vs {r:?}");
            assert!(p.same_values(&table_row(&spec, p.d)));
        }
    }

    #[test]
    fn markdown_layout() {
        let mut spec = TableSpec::new(Family::P, 2, 3);
        spec.estimators = vec![Estimator::Hgm];
        let md = render_table(&generate_table(&spec).unwrap(), Format::Md).unwrap();
        assert!(md.starts_with("| d | HGM | time of HGM (s) | MC |"));
        assert!(md.contains("| 2 | 0.285205 |"), "{md}");
    }

    #[test]
    fn scientific_format_matches_paper_style() {
        assert_eq!(fmt_sci(5.1758e-2), "5.1758e-02");
        assert_eq!(fmt_sci(1.2861e-11), "1.2861e-11");
        assert_eq!(fmt_sci(0.0), "0.0000e+00");
    }

    #[test]
    fn failed_rows_are_flagged() {
        let mut spec = TableSpec::new(Family::C, 2, 4);
        spec.estimators = vec![Estimator::Quad];
        let rows = generate_table(&spec).unwrap();
        assert!(rows[0].quad.is_some() && rows[1].quad.is_some());
        assert!(rows[2].quad.is_none());
        assert!(rows[2].flags.contains("quad"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&HgmError::Parse("x".into())), EXIT_PARSE);
        assert_eq!(
            exit_code(&HgmError::NoApplicableMethod("x".into())),
            EXIT_NO_METHOD
        );
        assert_eq!(
            exit_code(&HgmError::StepUnderflow { t: 0.5 }),
            EXIT_NUMERICAL
        );
    }
}
