//! Command-line front end: `verify`, `geodesic` and `maxwell`.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or an
//! evaluation breaks, 2 for usage and configuration errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::checks::{Check, Tally};
use crate::electrodynamics::{
    correspondence_report, field_strength_finsler, field_strength_riemann, first_equation_residual_finsler,
    first_equation_residual_riemann, source_current_finsler, source_current_riemann, Convention, FieldSample,
    PotentialField,
};
use crate::error::GeometryError;
use crate::geodesics::{arc_length, integrate, GeodesicPath, IntegratorConfig, PathStatus};
use crate::sampling::{SamplingPlan, GENERATOR};
use crate::structure::{FinslerStructure, Kind};
use crate::suite::{identity_suite, Tolerances};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] GeometryError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Eval(_) => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MaxwellMode {
    Riemann,
    Finsler,
    Correspondence,
}

/// A vector entry given either as a number or as an expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Component {
    Number(f64),
    Text(String),
}

impl Component {
    fn text(&self) -> String {
        match self {
            Component::Number(v) => format!("{v:?}"),
            Component::Text(t) => t.clone(),
        }
    }
}

/// Either a named family with parameters or an expression.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    #[serde(default, alias = "dim", skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    /// Symmetric a-field for riemannian and randers families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<String>>>,
    /// b-field for randers families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Component>>,
    /// Constant matrix for the quadratic family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// x-only expression required to be positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

pub const FAMILIES: &[&str] = &[
    "euclidean",
    "minkowski",
    "poincare",
    "randers",
    "randers-constant",
    "perturbed-minkowski",
    "riemannian",
    "quadratic",
];

impl StructureSpec {
    fn unused(&self, family: &str, allowed: &[&str]) -> Result<(), CliError> {
        let present = [
            ("dimension", self.dimension.is_some()),
            ("kind", self.kind.is_some()),
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
            ("matrix", self.matrix.is_some()),
            ("epsilon", self.epsilon.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                return Err(config_err(format!(
                    "parameter '{name}' does not apply to family '{family}'"
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<FinslerStructure, CliError> {
        let geo = |e: GeometryError| config_err(e.to_string());
        let s = match (&self.family, &self.expression) {
            (Some(_), Some(_)) => return Err(config_err("give either 'family' or 'expression', not both")),
            (None, None) => return Err(config_err("structure needs a 'family' or an 'expression'")),
            (None, Some(text)) => {
                let dim = self
                    .dimension
                    .ok_or_else(|| config_err("expression structures need 'dimension'"))?;
                FinslerStructure::from_expression(text, dim, self.kind.unwrap_or(Kind::Positive)).map_err(geo)?
            }
            (Some(f), None) => {
                let f = f.as_str();
                match f {
                    "euclidean" => {
                        self.unused(f, &["dimension"])?;
                        FinslerStructure::euclidean(self.dimension.unwrap_or(3)).map_err(geo)?
                    }
                    "minkowski" => {
                        self.unused(f, &[])?;
                        FinslerStructure::minkowski()
                    }
                    "poincare" => {
                        self.unused(f, &[])?;
                        FinslerStructure::poincare_half_plane()
                    }
                    "randers" => {
                        self.unused(f, &["a", "b"])?;
                        match (&self.a, &self.b) {
                            (None, None) => FinslerStructure::randers_example(),
                            (Some(a), Some(b)) => {
                                let b: Vec<String> = b.iter().map(Component::text).collect();
                                let b: Vec<&str> = b.iter().map(String::as_str).collect();
                                FinslerStructure::randers("randers", a, &b).map_err(geo)?
                            }
                            _ => return Err(config_err("randers needs both 'a' and 'b', or neither")),
                        }
                    }
                    "randers-constant" => {
                        self.unused(f, &["b"])?;
                        let b = self
                            .b
                            .as_ref()
                            .ok_or_else(|| config_err("randers-constant needs 'b'"))?;
                        let b: Vec<f64> = b
                            .iter()
                            .map(|c| match c {
                                Component::Number(v) => Ok(*v),
                                Component::Text(_) => Err(config_err("randers-constant takes numeric 'b'")),
                            })
                            .collect::<Result<_, _>>()?;
                        FinslerStructure::randers_constant(&b).map_err(geo)?
                    }
                    "perturbed-minkowski" => {
                        self.unused(f, &["epsilon"])?;
                        FinslerStructure::perturbed_minkowski(self.epsilon.unwrap_or(0.01))
                    }
                    "riemannian" => {
                        self.unused(f, &["a", "kind"])?;
                        let a = self.a.as_ref().ok_or_else(|| config_err("riemannian needs 'a'"))?;
                        FinslerStructure::riemannian("riemannian", a, self.kind.unwrap_or(Kind::Positive))
                            .map_err(geo)?
                    }
                    "quadratic" => {
                        self.unused(f, &["matrix", "kind"])?;
                        let m = self
                            .matrix
                            .clone()
                            .ok_or_else(|| config_err("quadratic needs 'matrix'"))?;
                        FinslerStructure::quadratic("quadratic", m, self.kind.unwrap_or(Kind::Positive)).map_err(geo)?
                    }
                    other => {
                        return Err(config_err(format!(
                            "unknown family '{other}' (known: {})",
                            FAMILIES.join(", ")
                        )))
                    }
                }
            }
        };
        match &self.domain {
            Some(d) => s.with_domain(d).map_err(geo),
            None => Ok(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub count: usize,
    pub seed: u64,
    /// Per-coordinate bounds; defaults to the structure's own box.
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub x_box: Option<Vec<(f64, f64)>>,
    pub y_radius: f64,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec {
            count: 100,
            seed: 0,
            x_box: None,
            y_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "thousand")]
    pub steps: usize,
    #[serde(default = "drift_default")]
    pub drift_tolerance: f64,
}

fn one() -> f64 {
    1.0
}

fn thousand() -> usize {
    1000
}

fn drift_default() -> f64 {
    1e-8
}

impl Default for GeodesicSpec {
    fn default() -> Self {
        GeodesicSpec {
            x0: None,
            y0: None,
            t_end: one(),
            steps: thousand(),
            drift_tolerance: drift_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub components: Vec<String>,
    #[serde(default = "one")]
    pub c: f64,
    /// Sign convention of the Finsler source equation.
    #[serde(default = "finsler_convention")]
    pub convention: Convention,
}

fn finsler_convention() -> Convention {
    Convention::PaperFinsler
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxwellSpec {
    pub mode: MaxwellMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
}

/// Everything a run needs; also echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geodesic: Option<GeodesicSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maxwell: Option<MaxwellSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: SCHEMA_VERSION,
            structure: None,
            potential: None,
            sampler: SamplerSpec::default(),
            tolerances: Tolerances::default(),
            output: OutputSpec::default(),
            geodesic: None,
            maxwell: None,
        }
    }
}

fn finite_all(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl RunConfig {
    /// Parse and validate a JSON configuration.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported config version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        if self.sampler.count == 0 {
            return Err(config_err("sampler count must be at least 1"));
        }
        if !(self.sampler.y_radius > 0.0 && self.sampler.y_radius.is_finite()) {
            return Err(config_err("sampler y_radius must be positive"));
        }
        if let Some(b) = &self.sampler.x_box {
            if b.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi) {
                return Err(config_err("sampler box bounds must be finite with low <= high"));
            }
        }
        if !self.tolerances.all_positive() {
            return Err(config_err("tolerances must be positive and finite"));
        }
        if let Some(g) = &self.geodesic {
            if g.steps == 0 {
                return Err(config_err("geodesic steps must be at least 1"));
            }
            if !(g.t_end > 0.0 && g.t_end.is_finite()) {
                return Err(config_err("geodesic t_end must be positive"));
            }
            if !(g.drift_tolerance > 0.0) {
                return Err(config_err("geodesic drift_tolerance must be positive"));
            }
            for v in [&g.x0, &g.y0].into_iter().flatten() {
                if !finite_all(v) {
                    return Err(config_err("geodesic initial data must be finite"));
                }
            }
        }
        if let Some(p) = &self.potential {
            if p.components.len() != 4 {
                return Err(config_err("potential needs exactly 4 components"));
            }
            if !(p.c > 0.0 && p.c.is_finite()) {
                return Err(config_err("potential c must be positive"));
            }
        }
        if let Some(m) = &self.maxwell {
            for v in [&m.x, &m.y].into_iter().flatten() {
                if v.len() != 4 || !finite_all(v) {
                    return Err(config_err("maxwell points need 4 finite coordinates"));
                }
            }
        }
        Ok(())
    }

    fn structure(&self) -> Result<FinslerStructure, CliError> {
        self.structure
            .as_ref()
            .ok_or_else(|| config_err("no structure given (use --family, --expr or a config file)"))?
            .build()
    }

    fn plan(&self, s: &FinslerStructure) -> Result<SamplingPlan, CliError> {
        let x_box = self.sampler.x_box.clone().unwrap_or_else(|| s.sample_box().to_vec());
        if x_box.len() != s.dim() {
            return Err(config_err(format!(
                "sampler box has {} entries for a {}-dimensional structure",
                x_box.len(),
                s.dim()
            )));
        }
        let mut plan = SamplingPlan::new(self.sampler.count, self.sampler.seed, x_box);
        plan.y_radius = self.sampler.y_radius;
        Ok(plan)
    }
}

fn parse_kind(s: &str) -> Result<Kind, String> {
    match s {
        "positive" => Ok(Kind::Positive),
        "alternating" => Ok(Kind::Alternating),
        other => Err(format!("unknown kind '{other}' (positive | alternating)")),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "finsler",
    version,
    about = "Finsler geometry checks, geodesics and Maxwell fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sampled identity suite for a structure.
    Verify(VerifyArgs),
    /// Integrate a geodesic and export the trajectory.
    Geodesic(GeodesicArgs),
    /// Evaluate field strengths, residuals and currents for a potential.
    Maxwell(MaxwellArgs),
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Main tolerance of the command (identity, drift or correspondence).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Named structure family.
    #[arg(long, conflicts_with = "expr")]
    pub family: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Fundamental function F(x, y) as an expression in x0.. and y0..
    #[arg(long)]
    pub expr: Option<String>,
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<Kind>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct GeodesicArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Initial point, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Initial velocity, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub y0: Option<Vec<f64>>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MaxwellArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub mode: Option<MaxwellMode>,
    /// Base point x, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub at: Option<Vec<f64>>,
    /// Direction y, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub y: Option<Vec<f64>>,
    /// Four potential components separated by ';'.
    #[arg(long, value_delimiter = ';')]
    pub potential: Option<Vec<String>>,
    #[arg(long)]
    pub c: Option<f64>,
}

fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    RunConfig::from_json(&text)
}

fn merge_common(c: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.sampler.seed = s;
    }
    if let Some(n) = c.samples {
        cfg.sampler.count = n;
    }
    if c.output.is_some() {
        cfg.output.path = c.output.clone();
    }
    if c.format.is_some() {
        cfg.output.format = c.format;
    }
    if c.family.is_some() || c.expr.is_some() {
        cfg.structure = Some(StructureSpec {
            family: c.family.clone(),
            expression: c.expr.clone(),
            dimension: c.dim,
            kind: c.kind,
            ..StructureSpec::default()
        });
    } else if c.dim.is_some() || c.kind.is_some() {
        let spec = cfg
            .structure
            .as_mut()
            .ok_or_else(|| config_err("--dim and --kind need --family, --expr or a configured structure"))?;
        if c.dim.is_some() {
            spec.dimension = c.dim;
        }
        if c.kind.is_some() {
            spec.kind = c.kind;
        }
    }
    Ok(cfg)
}

/// JSON formatter that prints every float with 17 significant digits.
struct Fixed17(PrettyFormatter<'static>);

impl Formatter for Fixed17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{}", fmt17(value))
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report values serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Serialize)]
struct Report<'a, D: Serialize> {
    schema_version: u32,
    tool: &'static str,
    tool_version: &'static str,
    command: &'static str,
    generator: &'static str,
    config: &'a RunConfig,
    status: Status,
    checks: Vec<Check>,
    details: D,
    /// Last so that everything above it is reproducible byte for byte.
    wall_time_s: f64,
}

fn status_of(checks: &[Check]) -> Status {
    if checks.iter().all(|c| c.passed) {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        }),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Io {
            path: "<stdout>".into(),
            message: e.to_string(),
        }),
    }
}

fn checks_csv(checks: &[Check]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "residual", "tolerance", "samples", "errors", "status"])
        .expect("in-memory csv");
    for c in checks {
        w.write_record([
            c.name.clone(),
            fmt17(c.residual),
            fmt17(c.tolerance),
            c.samples.to_string(),
            c.errors.to_string(),
            if c.passed { "pass" } else { "fail" }.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

/// `t,x0..,y0..,F` rows.
pub fn trajectory_csv(path: &GeodesicPath) -> String {
    let n = path.samples.first().map_or(0, |s| s.x.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("y{i}")));
    header.push("F".into());
    w.write_record(&header).expect("in-memory csv");
    for s in &path.samples {
        let mut row = vec![fmt17(s.t)];
        row.extend(s.x.iter().map(|v| fmt17(*v)));
        row.extend(s.y.iter().map(|v| fmt17(*v)));
        row.push(fmt17(s.f));
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

#[derive(Debug, Serialize)]
struct VerifyDetails {
    structure: String,
    provenance: &'static str,
    kind: Kind,
    dimension: usize,
    signature: Option<(usize, usize)>,
    samples_used: usize,
    samples_skipped: usize,
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let started = Instant::now();
    let mut cfg = merge_common(&args.common)?;
    if let Some(t) = args.common.tol {
        cfg.tolerances.identity = t;
    }
    cfg.validate()?;
    let s = cfg.structure()?;
    let plan = cfg.plan(&s)?;
    let suite = identity_suite(&s, &plan, &cfg.tolerances);
    let status = status_of(&suite.checks);
    let text = match cfg.output.format.unwrap_or(Format::Json) {
        Format::Csv => checks_csv(&suite.checks),
        Format::Json => to_json(&Report {
            schema_version: SCHEMA_VERSION,
            tool: "finsler",
            tool_version: TOOL_VERSION,
            command: "verify",
            generator: GENERATOR,
            config: &cfg,
            status,
            details: VerifyDetails {
                structure: s.name().to_string(),
                provenance: s.provenance().label(),
                kind: s.kind(),
                dimension: s.dim(),
                signature: s.signature(),
                samples_used: suite.used,
                samples_skipped: suite.skipped,
            },
            checks: suite.checks,
            wall_time_s: started.elapsed().as_secs_f64(),
        }),
    };
    emit(&text, cfg.output.path.as_deref(), out)?;
    Ok(if status == Status::Pass { 0 } else { 1 })
}

#[derive(Debug, Serialize)]
struct GeodesicDetails {
    structure: String,
    steps: usize,
    t_end: f64,
    path_status: PathStatus,
    /// Set when the trajectory was cut short at the domain boundary.
    warning: Option<&'static str>,
    samples: usize,
    endpoint_t: f64,
    endpoint_x: Vec<f64>,
    endpoint_y: Vec<f64>,
    endpoint_f: f64,
    drift: f64,
    arc_length: Option<f64>,
    trajectory: Option<String>,
}

fn cmd_geodesic(args: &GeodesicArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let started = Instant::now();
    let mut cfg = merge_common(&args.common)?;
    let mut g = cfg.geodesic.clone().unwrap_or_default();
    if args.x0.is_some() {
        g.x0 = args.x0.clone();
    }
    if args.y0.is_some() {
        g.y0 = args.y0.clone();
    }
    if let Some(t) = args.t_end {
        g.t_end = t;
    }
    if let Some(n) = args.steps {
        g.steps = n;
    }
    if let Some(t) = args.common.tol {
        g.drift_tolerance = t;
    }
    cfg.geodesic = Some(g.clone());
    cfg.validate()?;
    let s = cfg.structure()?;
    let x0 =
        g.x0.clone()
            .ok_or_else(|| config_err("geodesic needs an initial point (--x0)"))?;
    let y0 =
        g.y0.clone()
            .ok_or_else(|| config_err("geodesic needs an initial velocity (--y0)"))?;
    if x0.len() != s.dim() || y0.len() != s.dim() {
        return Err(config_err(format!("initial data must have {} components", s.dim())));
    }
    let icfg = IntegratorConfig {
        steps: g.steps,
        drift_tolerance: g.drift_tolerance,
        ..IntegratorConfig::rk4(g.steps)
    };
    let path = integrate(&s, &x0, &y0, g.t_end, &icfg)?;
    let mut drift = Tally::new("drift", g.drift_tolerance);
    drift.record(path.drift);
    let checks = vec![drift.finish()];
    let status = status_of(&checks);
    let end = path.endpoint().clone();
    let warning = (path.status == PathStatus::DomainExit).then_some("trajectory left the domain and was truncated");
    if let Some(w) = warning {
        let _ = writeln!(err, "warning: {w} at t = {}", fmt17(end.t));
    }
    let format = cfg.output.format.unwrap_or(Format::Csv);
    let csv_path = match format {
        Format::Csv => cfg.output.path.clone(),
        Format::Json => None,
    };
    let details = GeodesicDetails {
        structure: s.name().to_string(),
        steps: g.steps,
        t_end: g.t_end,
        path_status: path.status,
        warning,
        samples: path.samples.len(),
        endpoint_t: end.t,
        endpoint_x: end.x.clone(),
        endpoint_y: end.y.clone(),
        endpoint_f: end.f,
        drift: path.drift,
        arc_length: arc_length(&path).ok(),
        trajectory: csv_path.as_ref().map(|p| p.display().to_string()),
    };
    #[derive(Serialize)]
    struct WithSamples<'a> {
        #[serde(flatten)]
        summary: GeodesicDetails,
        path: &'a [crate::geodesics::PathSample],
    }
    fn report<'a, D: Serialize>(
        cfg: &'a RunConfig,
        status: Status,
        checks: &[Check],
        details: D,
        started: Instant,
    ) -> Report<'a, D> {
        Report {
            schema_version: SCHEMA_VERSION,
            tool: "finsler",
            tool_version: TOOL_VERSION,
            command: "geodesic",
            generator: GENERATOR,
            config: cfg,
            status,
            checks: checks.to_vec(),
            details,
            wall_time_s: started.elapsed().as_secs_f64(),
        }
    }
    match format {
        Format::Csv => {
            let table = trajectory_csv(&path);
            match &csv_path {
                Some(p) => {
                    emit(&table, Some(p), out)?;
                    emit(&to_json(&report(&cfg, status, &checks, details, started)), None, out)?;
                }
                None => {
                    emit(&table, None, out)?;
                    let _ = err.write_all(to_json(&report(&cfg, status, &checks, details, started)).as_bytes());
                }
            }
        }
        Format::Json => {
            let body = WithSamples {
                summary: details,
                path: &path.samples,
            };
            let text = to_json(&report(&cfg, status, &checks, body, started));
            emit(&text, cfg.output.path.as_deref(), out)?;
        }
    }
    Ok(if status == Status::Pass { 0 } else { 1 })
}

#[derive(Debug, Serialize)]
struct FieldOutput {
    f_hh: Vec<Vec<f64>>,
    f_hv: Vec<Vec<f64>>,
    f_hh_up: Vec<Vec<f64>>,
    f_hv_up: Vec<Vec<f64>>,
    volume_factor: f64,
}

impl From<FieldSample> for FieldOutput {
    fn from(f: FieldSample) -> Self {
        FieldOutput {
            f_hh: f.f_hh,
            f_hv: f.f_hv,
            f_hh_up: f.f_hh_up,
            f_hv_up: f.f_hv_up,
            volume_factor: f.metric.volume_factor,
        }
    }
}

#[derive(Debug, Serialize)]
struct MaxwellDetails {
    mode: MaxwellMode,
    structure: String,
    y_dependent_potential: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<FieldOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    first_equation_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    current: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convention: Option<Convention>,
    c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    correspondence: Option<crate::electrodynamics::CorrespondenceReport>,
}

fn field_checks(f: &FieldSample, tol: &Tolerances) -> Vec<Check> {
    let mut anti = Tally::new("antisymmetry", tol.symmetry);
    anti.record(f.antisymmetry_residual());
    let mut low = Tally::new("raise_lower_roundtrip", tol.exact);
    low.record(f.lowering_residual());
    vec![anti.finish(), low.finish()]
}

fn cmd_maxwell(args: &MaxwellArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let started = Instant::now();
    let mut cfg = merge_common(&args.common)?;
    if let Some(comps) = &args.potential {
        let (c, convention) = cfg
            .potential
            .as_ref()
            .map_or((1.0, Convention::PaperFinsler), |p| (p.c, p.convention));
        cfg.potential = Some(PotentialSpec {
            components: comps.clone(),
            c,
            convention,
        });
    }
    if let (Some(c), Some(p)) = (args.c, cfg.potential.as_mut()) {
        p.c = c;
    }
    let mut m = cfg.maxwell.clone().unwrap_or(MaxwellSpec {
        mode: MaxwellMode::Riemann,
        x: None,
        y: None,
    });
    if let Some(mode) = args.mode {
        m.mode = mode;
    }
    if args.at.is_some() {
        m.x = args.at.clone();
    }
    if args.y.is_some() {
        m.y = args.y.clone();
    }
    cfg.maxwell = Some(m.clone());
    if cfg.structure.is_none() {
        cfg.structure = Some(StructureSpec {
            family: Some("minkowski".into()),
            ..StructureSpec::default()
        });
    }
    if let Some(t) = args.common.tol {
        match m.mode {
            MaxwellMode::Correspondence => cfg.tolerances.correspondence = t,
            _ => cfg.tolerances.exact = t,
        }
    }
    cfg.validate()?;
    let pspec = cfg
        .potential
        .clone()
        .ok_or_else(|| config_err("maxwell needs a potential (--potential or config)"))?;
    let a = PotentialField::parse(&pspec.components).map_err(|e| config_err(e.to_string()))?;
    let s = cfg.structure()?;
    if s.dim() != 4 {
        return Err(config_err("maxwell needs a 4-dimensional structure"));
    }
    let tol = cfg.tolerances;
    let mut details = MaxwellDetails {
        mode: m.mode,
        structure: s.name().to_string(),
        y_dependent_potential: a.is_y_dependent(),
        x: m.x.clone(),
        y: m.y.clone(),
        field: None,
        first_equation_residual: None,
        current: None,
        convention: None,
        c: pspec.c,
        correspondence: None,
    };
    let mut checks = Vec::new();
    match m.mode {
        MaxwellMode::Riemann => {
            let x =
                m.x.clone()
                    .ok_or_else(|| config_err("riemann mode needs a point (--at)"))?;
            let y = m.y.clone().unwrap_or_else(|| vec![1.0, 0.0, 0.0, 0.0]);
            if a.is_y_dependent() || !s.is_riemannian() {
                return Err(config_err(
                    "riemann mode needs a y-free potential and a y-independent metric",
                ));
            }
            let f = field_strength_riemann(&a, &s, &x, &y)?;
            checks.extend(field_checks(&f, &tol));
            let r = first_equation_residual_riemann(&a, &x)?.max_abs();
            let mut t = Tally::new("first_equation", tol.exact);
            t.record(r);
            checks.push(t.finish());
            let j = source_current_riemann(&a, &s, &x, &y, pspec.c)?;
            details.first_equation_residual = Some(r);
            details.current = Some(j.j);
            details.convention = Some(j.convention);
            details.field = Some(f.into());
        }
        MaxwellMode::Finsler => {
            let x =
                m.x.clone()
                    .ok_or_else(|| config_err("finsler mode needs a point (--at)"))?;
            let y =
                m.y.clone()
                    .ok_or_else(|| config_err("finsler mode needs a direction (--y)"))?;
            let f = field_strength_finsler(&a, &s, &x, &y)?;
            checks.extend(field_checks(&f, &tol));
            let r = first_equation_residual_finsler(&a, &s, &x, &y)?.max_abs();
            // Vanishing is only established when nothing depends on y.
            if !a.is_y_dependent() && s.is_riemannian() {
                let mut t = Tally::new("first_equation", tol.exact);
                t.record(r);
                checks.push(t.finish());
            }
            let j = source_current_finsler(&a, &s, &x, &y, pspec.convention, pspec.c)?;
            details.first_equation_residual = Some(r);
            details.current = Some(j.j);
            details.convention = Some(j.convention);
            details.field = Some(f.into());
        }
        MaxwellMode::Correspondence => {
            if a.is_y_dependent() || !s.is_riemannian() {
                return Err(config_err(
                    "correspondence needs a y-free potential and a y-independent metric",
                ));
            }
            let plan = cfg.plan(&s)?;
            let samples: Vec<(Vec<f64>, Vec<f64>)> = plan
                .draw(|smp| s.eval_f(&smp.x, &smp.y).is_ok() && a.eval::<f64>(&smp.x, &smp.y).is_ok())
                .0
                .into_iter()
                .map(|smp| (smp.x, smp.y))
                .collect();
            let r = correspondence_report(&a, &s, &samples, pspec.c)?;
            let mut t = Tally::new("correspondence", tol.correspondence);
            if samples.is_empty() {
                t.error();
            } else {
                t.record(r.max_discrepancy());
            }
            checks.push(t.finish());
            details.convention = Some(Convention::PaperFinsler);
            details.correspondence = Some(r);
        }
    }
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    let status = status_of(&checks);
    let text = match cfg.output.format.unwrap_or(Format::Json) {
        Format::Csv => checks_csv(&checks),
        Format::Json => to_json(&Report {
            schema_version: SCHEMA_VERSION,
            tool: "finsler",
            tool_version: TOOL_VERSION,
            command: "maxwell",
            generator: GENERATOR,
            config: &cfg,
            status,
            checks,
            details,
            wall_time_s: started.elapsed().as_secs_f64(),
        }),
    };
    emit(&text, cfg.output.path.as_deref(), out)?;
    Ok(if status == Status::Pass { 0 } else { 1 })
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Verify(a) => cmd_verify(a, out),
        Command::Geodesic(a) => cmd_geodesic(a, out, err),
        Command::Maxwell(a) => cmd_maxwell(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("finsler").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn floats_have_17_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        let j = to_json(&serde_json::json!({"a": 1.0, "b": [0.5]}));
        assert!(j.contains("\"a\": 1.0000000000000000e0"), "{j}");
        let back: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(back["b"][0].as_f64(), Some(0.5));
    }

    #[test]
    fn config_round_trip_and_errors() {
        let text = r#"{"version": 1, "structure": {"family": "randers"}, "sampler": {"count": 5, "seed": 3}}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.sampler.count, 5);
        let again = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        for bad in [
            r#"{"version": 2}"#,
            r#"{"version": 1, "sampler": {"count": 0}}"#,
            r#"{"version": 1, "tolerances": {"identity": -1}}"#,
            r#"{"version": 1, "bogus": 1}"#,
            r#"{"version": 1, "geodesic": {"steps": 0}}"#,
            "not json",
        ] {
            assert!(matches!(RunConfig::from_json(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn structure_specs() {
        let spec = |j: &str| serde_json::from_str::<StructureSpec>(j).unwrap().build();
        assert_eq!(spec(r#"{"family": "euclidean", "dim": 2}"#).unwrap().dim(), 2);
        assert_eq!(
            spec(r#"{"family": "randers-constant", "b": [0.3, 0, 0]}"#)
                .unwrap()
                .dim(),
            3
        );
        let r = spec(r#"{"family": "randers", "a": [["1","0"],["0","1"]], "b": ["0.1*sin(x0)", 0.2]}"#).unwrap();
        assert!(r.eval_f(&[0.0, 0.0], &[1.0, 0.0]).is_ok());
        assert_eq!(
            spec(r#"{"expression": "y0^2 + y1^2", "dimension": 2}"#).unwrap().kind(),
            Kind::Positive
        );
        assert!(spec(r#"{"family": "minkowski", "epsilon": 0.1}"#).is_err());
        assert!(spec(r#"{"family": "nope"}"#).is_err());
        assert!(spec(r#"{"expression": "y0^2"}"#).is_err());
        assert!(spec(r#"{"expression": "y0^2 + y1^2", "dimension": 294}"#).is_err());
    }

    #[test]
    fn verify_exit_codes() {
        let (code, out, _) = run_args(&[
            "verify",
            "--family",
            "euclidean",
            "--dim",
            "3",
            "--samples",
            "10",
            "--seed",
            "7",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("\"status\": \"pass\""));
        let (code, out, _) = run_args(&["verify", "--expr", "y0^2 + y1", "--dim", "2", "--samples", "10"]);
        assert_eq!(code, 1);
        assert!(out.contains("\"status\": \"fail\""));
        assert_eq!(run_args(&["verify"]).0, 2);
        assert_eq!(run_args(&["verify", "--family", "euclidean", "--samples", "0"]).0, 2);
        assert_eq!(run_args(&["frobnicate"]).0, 2);
        assert_eq!(run_args(&["--help"]).0, 0);
    }

    #[test]
    fn maxwell_modes() {
        let (code, out, _) = run_args(&[
            "maxwell",
            "--mode",
            "finsler",
            "--potential",
            "0;0;0;0",
            "--at",
            "0,0,0,0",
            "--y",
            "1,0,0,0",
        ]);
        assert_eq!(code, 0, "{out}");
        let (code, _, err) = run_args(&[
            "maxwell",
            "--mode",
            "finsler",
            "--potential",
            "0;0;0;0",
            "--at",
            "0,0,0,0",
        ]);
        assert_eq!(code, 2, "{err}");
    }
}
