//! Command-line front end. Output depends only on the config, never on
//! thread count or timing (unless `record_time` asks for it).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audit::{self, Verdict};
use crate::disorder::{write_dump, SamplingMethod, Sampler, SeedPolicy};
use crate::error::{Error, Result};
use crate::grem::{GremTree, TreeLift};
use crate::interp::{self, Monotonicity};
use crate::linalg::validate_psd;
use crate::models::{CovarianceModel, CustomCovariance, MixedCoefficients, ModelKind};
use crate::spin::{CoordinatePartition, PartitionMode};
use crate::thermo::{self, Comparison};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SAMPLES: usize = 1000;

/// Parses a model rule: `sk`, `sk-standard`, `pspin:P`, `mixed:P=W,...`,
/// `rem`, `grem:<treefile>`, `custom:<matrixfile>[,<matrixfile>...]`.
pub fn parse_model_kind(spec: &str) -> Result<ModelKind> {
    let spec = spec.trim();
    let (head, arg) = match spec.find(':') {
        Some(i) => (&spec[..i], Some((&spec[i + 1..], i + 1))),
        None => (spec, None),
    };
    let need_arg = |what: &str| {
        arg.ok_or_else(|| Error::Parse {
            position: spec.len(),
            message: format!("`{head}` needs `:{what}`"),
        })
    };
    let no_arg = |kind: ModelKind| match arg {
        Some((_, pos)) => Err(Error::Parse {
            position: pos,
            message: format!("`{head}` takes no argument"),
        }),
        None => Ok(kind),
    };
    match head {
        "sk" => no_arg(ModelKind::SkFull),
        "sk-standard" => no_arg(ModelKind::SkStandard),
        "rem" => no_arg(ModelKind::Rem),
        "pspin" => {
            let (a, pos) = need_arg("P")?;
            let p = a.parse::<u32>().map_err(|e| Error::Parse {
                position: pos,
                message: format!("interaction order {a:?}: {e}"),
            })?;
            if p == 0 {
                return Err(Error::Parse {
                    position: pos,
                    message: "interaction order must be at least 1".into(),
                });
            }
            Ok(ModelKind::PSpin(p))
        }
        "mixed" => {
            let (a, pos) = need_arg("P=W,...")?;
            let mut weights = Vec::new();
            let mut offset = pos;
            for term in a.split(',') {
                let (p, w) = term.split_once('=').ok_or_else(|| Error::Parse {
                    position: offset,
                    message: format!("term {term:?} is not P=W"),
                })?;
                let p = p.trim().parse::<u32>().map_err(|e| Error::Parse {
                    position: offset,
                    message: format!("order {p:?}: {e}"),
                })?;
                let w = w.trim().parse::<f64>().map_err(|e| Error::Parse {
                    position: offset + term.find('=').unwrap() + 1,
                    message: format!("weight {w:?}: {e}"),
                })?;
                weights.push((p, w));
                offset += term.len() + 1;
            }
            Ok(ModelKind::Mixed(MixedCoefficients::new(weights)?))
        }
        "grem" => {
            let (path, _) = need_arg("treefile")?;
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
            Ok(ModelKind::Grem(text.parse::<GremTree>()?))
        }
        "custom" => {
            let (paths, _) = need_arg("matrixfile")?;
            let files: Vec<&str> = paths.split(',').collect();
            Ok(ModelKind::Custom(CustomCovariance::from_files(&files)?))
        }
        other => Err(Error::Parse {
            position: 0,
            message: format!("unknown model {other:?}"),
        }),
    }
}

/// Parses a model rule and instantiates it at size `n`; GREM and custom rules
/// default to their own size when `n` is omitted.
pub fn parse_model(spec: &str, n: Option<usize>) -> Result<CovarianceModel> {
    let kind = parse_model_kind(spec)?;
    let n = match (&kind, n) {
        (_, Some(n)) => n,
        (ModelKind::Grem(t), None) => t.n_spins(),
        (ModelKind::Custom(c), None) => c.sizes().max().unwrap_or(0),
        (_, None) => return Err(Error::validation(format!("model `{spec}` needs a size (--n)"))),
    };
    CovarianceModel::new(kind, n)
}

/// `start:end:count` (inclusive, evenly spaced) or a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| {
        t.trim().parse::<f64>().map_err(|e| Error::Parse {
            position: 0,
            message: format!("grid value {t:?}: {e}"),
        })
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s.split(',').map(num).collect(),
        3 => {
            let (a, b) = (num(parts[0])?, num(parts[1])?);
            let k = parts[2].trim().parse::<usize>().map_err(|e| Error::Parse {
                position: 0,
                message: format!("grid count {:?}: {e}", parts[2]),
            })?;
            match k {
                0 => Err(Error::validation("grid count must be positive")),
                1 => Ok(vec![a]),
                _ => Ok((0..k)
                    .map(|i| {
                        if i + 1 == k {
                            b
                        } else {
                            a + (b - a) * i as f64 / (k - 1) as f64
                        }
                    })
                    .collect()),
            }
        }
        _ => Err(Error::validation(format!(
            "grid {s:?} must be start:end:count or a comma list"
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Check,
    Psd,
    Alpha,
    Superadd,
    Interp,
    GremVerify,
    SampleDump,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::validation(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpCheck {
    /// Derivative estimates over the t grid.
    #[default]
    Scan,
    /// Central finite difference against the derivative estimator.
    Fd,
    /// Trapezoid integral of the derivative against the free-energy margin.
    Integral,
}

impl FromStr for InterpCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scan" => Ok(InterpCheck::Scan),
            "fd" => Ok(InterpCheck::Fd),
            "integral" => Ok(InterpCheck::Integral),
            _ => Err(Error::validation(format!("unknown interp check {s:?}"))),
        }
    }
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_h() -> f64 {
    0.05
}
fn default_nodes() -> usize {
    17
}
fn default_draws() -> usize {
    10
}

/// Every parameter of one experiment. Readable from TOML; the resolved form
/// is echoed into each output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub n: Option<usize>,
    /// Upper end of a size range for `check` and `psd`.
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default)]
    pub mask: Option<u64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub mode: PartitionMode,
    #[serde(default)]
    pub method: SamplingMethod,
    #[serde(default)]
    pub check: InterpCheck,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub tree: Option<String>,
    #[serde(default)]
    pub n1_exponents: Option<Vec<usize>>,
    #[serde(default)]
    pub all_partitions: bool,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub format: Format,
    // neither affects the results, so neither is echoed into the header
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    /// Adds a wall-clock line to the header; off by default so reruns are
    /// byte-identical.
    #[serde(default)]
    pub record_time: bool,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        ExperimentConfig {
            command,
            model: None,
            n: None,
            n_max: None,
            n1: None,
            mask: None,
            beta: Vec::new(),
            t_grid: Vec::new(),
            samples: DEFAULT_SAMPLES,
            seed: 0,
            tolerance: None,
            mode: PartitionMode::Canonical,
            method: SamplingMethod::Auto,
            check: InterpCheck::Scan,
            h: default_h(),
            nodes: default_nodes(),
            tree: None,
            n1_exponents: None,
            all_partitions: false,
            draws: default_draws(),
            format: Format::Csv,
            output: None,
            threads: None,
            record_time: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            position: e.span().map(|s| s.start).unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn model(&self) -> Result<CovarianceModel> {
        let spec = self
            .model
            .as_deref()
            .ok_or_else(|| Error::validation("--model is required"))?;
        parse_model(spec, self.n)
    }

    fn partition(&self, n: usize) -> Result<CoordinatePartition> {
        match (self.mask, self.n1) {
            (Some(mask), None) => CoordinatePartition::new(n, mask),
            (None, Some(n1)) => CoordinatePartition::prefix(n, n1),
            (Some(_), Some(_)) => Err(Error::validation("give either --mask or --n1, not both")),
            (None, None) => Err(Error::validation("a partition is required (--n1 or --mask)")),
        }
    }

    fn betas(&self) -> Result<Vec<f64>> {
        if self.beta.is_empty() {
            return Err(Error::validation("--beta is required"));
        }
        for &b in &self.beta {
            thermo::check_beta(b)?;
        }
        Ok(self.beta.clone())
    }

    fn validate(&self) -> Result<()> {
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(Error::validation("--threads must be positive"));
            }
        }
        if let Some(tol) = self.tolerance {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::validation("tolerance must be a nonnegative number"));
            }
        }
        Ok(())
    }
}

/// Whether the run confirmed the expected property or found a violation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    ViolationFound,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::ViolationFound => 1,
        }
    }
}

/// Column-ordered records rendered as CSV or JSON.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(cols: &[&str]) -> Self {
        Table {
            columns: cols.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn csv_cell(v: &Value) -> String {
        match v {
            Value::Null => String::new(),
            Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Self::csv_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json_records(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    Value::Object(
                        self.columns
                            .iter()
                            .cloned()
                            .zip(r.iter().cloned())
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

/// Rendered output of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub outcome: Outcome,
    pub text: String,
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Executes one experiment and renders its output. The caller writes the
/// text and maps the outcome to an exit status.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = std::time::Instant::now();
    let exec = || execute(config);
    let (outcome, body) = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?
            .install(exec)?,
        None => exec()?,
    };
    let elapsed = started.elapsed().as_secs_f64();
    let config_json = serde_json::to_value(config).expect("config serializes");
    let text = match body {
        Body::Table(table) => match config.format {
            Format::Csv => {
                let mut s = String::new();
                let _ = writeln!(s, "# cgrem {VERSION}");
                let _ = writeln!(s, "# config: {config_json}");
                if config.record_time {
                    let _ = writeln!(s, "# wall_clock_seconds: {elapsed}");
                }
                s.push_str(&table.to_csv());
                s
            }
            Format::Json => {
                let mut v = json!({
                    "tool": "cgrem",
                    "version": VERSION,
                    "config": config_json,
                    "records": table.to_json_records(),
                });
                if config.record_time {
                    v["wall_clock_seconds"] = num(elapsed);
                }
                let mut s = serde_json::to_string_pretty(&v).expect("json");
                s.push('\n');
                s
            }
        },
        Body::Dump(lines) => {
            let mut s = String::new();
            let _ = writeln!(s, "# cgrem {VERSION}");
            let _ = writeln!(s, "# config: {config_json}");
            if config.record_time {
                let _ = writeln!(s, "# wall_clock_seconds: {elapsed}");
            }
            s.push_str(&lines);
            s
        }
    };
    Ok(RunOutput { outcome, text })
}

enum Body {
    Table(Table),
    Dump(String),
}

fn execute(c: &ExperimentConfig) -> Result<(Outcome, Body)> {
    match c.command {
        Command::Check => cmd_check(c),
        Command::Psd => cmd_psd(c),
        Command::Alpha => cmd_alpha(c),
        Command::Superadd => cmd_superadd(c),
        Command::Interp => cmd_interp(c),
        Command::GremVerify => cmd_grem_verify(c),
        Command::SampleDump => cmd_sample_dump(c),
    }
}

fn outcome(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::ViolationFound
    }
}

fn sizes(c: &ExperimentConfig, base: &CovarianceModel) -> Result<Vec<usize>> {
    match c.n_max {
        None => Ok(vec![base.n()]),
        Some(max) if max < base.n() => Err(Error::validation("--n-max is below --n")),
        Some(max) => {
            if matches!(base.kind(), ModelKind::Grem(_)) && max != base.n() {
                return Err(Error::validation("a GREM tree has a single size; omit --n-max"));
            }
            Ok((base.n()..=max).collect())
        }
    }
}

const CHECK_COLUMNS: &[&str] = &[
    "n",
    "partition_mask",
    "n1",
    "max_gap",
    "witness_sigma",
    "witness_tau",
    "verdict",
];

fn audit_rows(table: &mut Table, report: &audit::AuditReport) {
    for r in &report.partitions {
        table.push(vec![
            json!(r.n),
            json!(r.partition.mask()),
            json!(r.partition.n1()),
            num(r.max_gap),
            json!(r.witness.0.to_string()),
            json!(r.witness.1.to_string()),
            json!(r.verdict.as_str()),
        ]);
    }
}

fn cmd_check(c: &ExperimentConfig) -> Result<(Outcome, Body)> {
    let base = c.model()?;
    let mut table = Table::new(CHECK_COLUMNS);
    let mut ok = true;
    for n in sizes(c, &base)? {
        // a range may start below the first size that can be split
        if n < 2 && c.n_max.is_some_and(|max| max >= 2) {
            continue;
        }
        let m = base.resized(n)?;
        let tol = c.tolerance.unwrap_or_else(|| audit::default_tolerance(&m));
        let report = if c.mask.is_some() || c.n1.is_some() {
            audit::check_partitions(&m, &[c.partition(n)?], tol)?
        } else {
            audit::check_condition(&m, c.mode, tol)?
        };
        ok &= report.verdict.holds();
        audit_rows(&mut table, &report);
    }
    Ok((outcome(ok), Body::Table(table)))
}

fn cmd_psd(c: &ExperimentConfig) -> Result<(Outcome, Body)> {
    let base = c.model()?;
    let mut table = Table::new(&["model", "n", "dim", "rank", "min_eigenvalue_estimate", "psd"]);
    let mut ok = true;
    for n in sizes(c, &base)? {
        let m = base.resized(n)?;
        let r = validate_psd(&m.build_covariance_matrix()?)?;
        ok &= r.psd;
        table.push(vec![
            json!(m.id()),
            json!(n),
            json!(1usize << n),
            json!(r.rank),
            num(r.min_eigenvalue_estimate),
            json!(r.psd),
        ]);
    }
    Ok((outcome(ok), Body::Table(table)))
}

const THERMO_COLUMNS: &[&str] = &[
    "model", "n", "beta", "samples", "value", "std_error", "bound", "margin", "verdict",
];

fn jensen_verdict(e: &thermo::QuenchedEstimate) -> Comparison {
    if e.value <= thermo::jensen_bound(e.beta) + 3.0 * e.std_error {
        Comparison::Satisfied
    } else {
        Comparison::Violated
    }
}

fn cmd_alpha(c: &ExperimentConfig) -> Result<(Outcome, Body)> {
    let m = c.model()?;
    let seeds = SeedPolicy::new(c.seed).fork("alpha");
    let mut table = Table::new(THERMO_COLUMNS);
    let mut ok = true;
    for beta in c.betas()? {
        let e = thermo::quenched_alpha_with(&m, beta, c.samples, &seeds, c.method)?;
        let v = jensen_verdict(&e);
        ok &= v == Comparison::Satisfied;
        table.push(vec![
            json!(m.id()),
            json!(m.n()),
            num(beta),
            json!(e.samples),
            num(e.value),
            num(e.std_error),
            num(thermo::jensen_bound(beta)),
            Value::Null,
            json!(v.as_str()),
        ]);
    }
    Ok((outcome(ok), Body::Table(table)))
}

fn cmd_superadd(c: &ExperimentConfig) -> Result<(Outcome, Body)> {
    let m = c.model()?;
    let p = c.partition(m.n())?;
    let seeds = SeedPolicy::new(c.seed).fork("superadd");
    let mut cols = THERMO_COLUMNS.to_vec();
    cols.extend(["margin_std_error", "n1", "alpha_n1", "std_error_n1", "n2", "alpha_n2", "std_error_n2"]);
    let mut table = Table::new(&cols);
    let mut ok = true;
    for beta in c.betas()? {
        let r = thermo::superadditivity_report(&m, &p, beta, c.samples, &seeds)?;
        ok &= r.verdict == Comparison::Satisfied;
        table.push(vec![
            json!(m.id()),
            json!(m.n()),
            num(beta),
            json!(r.full.samples),
            num(r.full.value),
            num(r.full.std_error),
            num(thermo::jensen_bound(beta)),
            num(r.margin),
            json!(r.verdict.as_str()),
            num(r.margin_std_error),
            json!(p.n1()),
            num(r.first.value),
            num(r.first.std_error),
            json!(p.n2()),
            num(r.second.value),
            num(r.second.std_error),
        ]);
    }
    Ok((outcome(ok), Body::Table(table)))
}

fn cmd_interp(c: &ExperimentConfig) -> Result<(Outcome, Body)> {
    let m = c.model()?;
    let p = c.partition(m.n())?;
    let seeds = SeedPolicy::new(c.seed).fork("interp");
    let betas = c.betas()?;
    let mut ok = true;
    let table = match c.check {
        InterpCheck::Scan => {
            if c.t_grid.is_empty() {
                return Err(Error::validation("--tgrid is required"));
            }
            let mut table = Table::new(&[
                "model", "n", "n1", "beta", "t", "samples", "value", "std_error", "verdict",
            ]);
            for beta in betas {
                let scan = interp::monotonicity_scan(&m, &p, beta, &c.t_grid, c.samples, &seeds)?;
                ok &= scan.verdict == Monotonicity::Nonnegative;
                for pt in scan.points {
                    table.push(vec![
                        json!(m.id()),
                        json!(m.n()),
                        json!(p.n1()),
                        num(beta),
                        num(pt.t),
                        json!(pt.estimate.samples),
                        num(pt.estimate.value),
                        num(pt.estimate.std_error),
                        json!(pt.verdict.as_str()),
                    ]);
                }
            }
            table
        }
        InterpCheck::Fd => {
            let grid = if c.t_grid.is_empty() { vec![0.5] } else { c.t_grid.clone() };
            let mut table = Table::new(&[
                "model", "n", "n1", "beta", "t", "h", "samples", "derivative", "derivative_std_error",
                "finite_difference", "finite_difference_std_error", "difference", "combined_std_error",
                "step_warning", "verdict",
            ]);
            for beta in betas {
                for &t in &grid {
                    let r = interp::finite_difference_check(&m, &p, beta, t, c.h, c.samples, &seeds)?;
                    ok &= r.agree;
                    table.push(vec![
                        json!(m.id()),
                        json!(m.n()),
                        json!(p.n1()),
                        num(beta),
                        num(t),
                        num(c.h),
                        json!(c.samples),
                        num(r.derivative.value),
                        num(r.derivative.std_error),
                        num(r.finite_difference.value),
                        num(r.finite_difference.std_error),
                        num(r.difference),
                        num(r.combined_std_error),
                        json!(r.step_warning),
                        json!(if r.agree { "AGREE" } else { "DISAGREE" }),
                    ]);
                }
            }
            table
        }
        InterpCheck::Integral => {
            let mut table = Table::new(&[
                "model", "n", "n1", "beta", "nodes", "samples", "integral", "margin", "difference",
                "combined_std_error", "verdict",
            ]);
            for beta in betas {
                let r = interp::integrated_derivative_check(&m, &p, beta, c.nodes, c.samples, &seeds)?;
                let agree = r.difference.abs() <= 3.0 * r.combined_std_error + 1e-2;
                ok &= agree;
                table.push(vec![
                    json!(m.id()),
                    json!(m.n()),
                    json!(p.n1()),
                    num(beta),
                    json!(c.nodes),
                    json!(c.samples),
                    num(r.integral),
                    num(r.margin),
                    num(r.difference),
                    num(r.combined_std_error),
                    json!(if agree { "AGREE" } else { "DISAGREE" }),
                ]);
            }
            table
        }
    };
    Ok((outcome(ok), Body::Table(table)))
}

/// Layer-respecting first-block exponent vectors: 0 ≤ k1_i ≤ k_i, neither
/// empty nor everything.
pub fn layer_splits(tree: &GremTree) -> Vec<Vec<usize>> {
    let ks = tree.exponents();
    let mut out = Vec::new();
    let mut cur = vec![0usize; ks.len()];
    loop {
        let s: usize = cur.iter().sum();
        if s > 0 && s < tree.n_spins() {
            out.push(cur.clone());
        }
        let mut i = 0;
        loop {
            if i == ks.len() {
                return out;
            }
            cur[i] += 1;
            if cur[i] <= ks[i] {
                break;
            }
            cur[i] = 0;
            i += 1;
        }
    }
}

fn cmd_grem_verify(c: &ExperimentConfig) -> Result<(Outcome, Body)> {
    let tree: GremTree = match (&c.tree, &c.model) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{path}: {e}")))?
            .parse()?,
        (None, Some(spec)) => match parse_model_kind(spec)? {
            ModelKind::Grem(t) => t,
            _ => return Err(Error::validation("grem-verify needs a GREM model")),
        },
        (None, None) => return Err(Error::validation("--tree is required")),
    };
    let model = CovarianceModel::grem(tree.clone())?;
    let mut table = Table::new(&["check", "detail", "value", "verdict"]);
    let mut ok = true;
    let exps = |k: &[usize]| k.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    table.push(vec![
        json!("validate_tree"),
        json!(format!("k=({}) N={}", exps(tree.exponents()), tree.n_spins())),
        Value::Null,
        json!("VALID"),
    ]);
    let psd = validate_psd(&model.build_covariance_matrix()?)?;
    ok &= psd.psd;
    table.push(vec![
        json!("psd"),
        json!(format!("rank={}", psd.rank)),
        num(psd.min_eigenvalue_estimate),
        json!(if psd.psd { "PSD" } else { "NOT_PSD" }),
    ]);
    let splits = match &c.n1_exponents {
        Some(k1) => vec![k1.clone()],
        None => layer_splits(&tree),
    };
    let tol = c.tolerance.unwrap_or(audit::EXACT_TOL);
    for k1 in splits {
        let source = GremTree::new(&k1, tree.variances())?;
        let lift1 = TreeLift::truncating(&source, tree.exponents())?;
        let lift2 = lift1.complement()?;
        for (name, lift) in [("lift_block1", &lift1), ("lift_block2", &lift2)] {
            let (margin, s, t) = lift.inequality_margin();
            let holds = margin >= -tol;
            ok &= holds;
            table.push(vec![
                json!(name),
                json!(format!(
                    "k_source=({}) witness={s},{t}",
                    exps(lift.source().exponents())
                )),
                num(margin),
                json!(if holds { "HOLDS" } else { "VIOLATED" }),
            ]);
        }
        let p = lift1.partition()?;
        let r = audit::check_partition(&model, &p, tol)?;
        ok &= r.verdict.holds();
        table.push(vec![
            json!("condition_audit"),
            json!(format!("mask={} n1={}", p.mask(), p.n1())),
            num(r.max_gap),
            json!(r.verdict.as_str()),
        ]);
    }
    if c.all_partitions {
        // reported for information; no guarantee is claimed for these
        let r = audit::check_condition(&model, PartitionMode::All, tol)?;
        let w = r.worst();
        table.push(vec![
            json!("condition_audit_all_partitions"),
            json!(format!("worst mask={} (informational)", w.partition.mask())),
            num(w.max_gap),
            json!(r.verdict.as_str()),
        ]);
    }
    Ok((outcome(ok), Body::Table(table)))
}

fn cmd_sample_dump(c: &ExperimentConfig) -> Result<(Outcome, Body)> {
    let m = c.model()?;
    let sampler = Sampler::new(&m, c.method)?;
    let seeds = SeedPolicy::new(c.seed).fork("sample-dump");
    let draws: Vec<_> = (0..c.draws as u64).map(|i| sampler.draw(&mut seeds.rng(i))).collect();
    let mut buf = Vec::new();
    write_dump(&draws, &mut buf)?;
    Ok((Outcome::Pass, Body::Dump(String::from_utf8(buf).expect("ascii"))))
}

/// Pass/violation summary used by callers that only need the verdict.
pub fn verdict_outcome(v: Verdict) -> Outcome {
    outcome(v.holds())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_grammar() {
        assert!(matches!(parse_model_kind("sk").unwrap(), ModelKind::SkFull));
        assert!(matches!(parse_model_kind("pspin:3").unwrap(), ModelKind::PSpin(3)));
        assert!(matches!(parse_model_kind("rem").unwrap(), ModelKind::Rem));
        match parse_model_kind("mixed:2=0.5,4=0.5").unwrap() {
            ModelKind::Mixed(w) => assert_eq!(w.weights().values().sum::<f64>(), 1.0),
            _ => unreachable!(),
        }
        assert!(matches!(parse_model_kind("mixed:2=0.5"), Err(Error::Validation(_))));
        assert!(matches!(parse_model_kind("pspin:x"), Err(Error::Parse { position: 6, .. })));
        assert!(matches!(parse_model_kind("mixed:2=0.5,4=z"), Err(Error::Parse { position: 14, .. })));
        assert!(parse_model_kind("pspin").is_err());
        assert!(parse_model_kind("rem:3").is_err());
        assert!(parse_model_kind("spherical").is_err());
        assert!(matches!(parse_model_kind("grem:/nonexistent/tree.txt"), Err(Error::Io(_))));
        assert!(parse_model("sk", None).is_err());
    }

    #[test]
    fn grids() {
        let g = parse_grid("0.1:0.9:9").unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[8], 0.9);
        assert!((g[4] - 0.5).abs() < 1e-15);
        assert_eq!(parse_grid("0.2,0.4").unwrap(), vec![0.2, 0.4]);
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn splits_of_two_layer_tree() {
        let t = GremTree::new(&[1, 1], &[0.5, 0.5]).unwrap();
        assert_eq!(layer_splits(&t), vec![vec![1, 0], vec![0, 1]]);
        let t = GremTree::new(&[2, 2], &[0.5, 0.5]).unwrap();
        assert_eq!(layer_splits(&t).len(), 9 - 2);
    }

    #[test]
    fn toml_config() {
        let c = ExperimentConfig::from_toml(
            "command = \"interp\"\nmodel = \"sk\"\nn = 4\nn1 = 2\nbeta = [1.0]\nt_grid = [0.5]\nsamples = 20\n",
        )
        .unwrap();
        assert_eq!(c.command, Command::Interp);
        assert_eq!(c.h, 0.05);
        assert!(ExperimentConfig::from_toml("command = \"interp\"\nbogus = 1\n").is_err());
    }
}
