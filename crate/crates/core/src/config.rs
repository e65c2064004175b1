//! Declarative experiment configuration.
//!
//! A configuration is a TOML document whose keys are dotted paths
//! (`model.eps = 0.1`, or equivalently a `[model]` table with `eps = 0.1`).
//! Every key is listed in [`SCHEMA`] with its type and default; unknown keys,
//! type mismatches and out-of-range values are all collected before any work
//! starts. `schema_version` and `experiment` are required.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::lattice::{Boundary, Domain, Profile};
use crate::model::{Generalized, ModelParams, RateFunction, Shape};

pub const SCHEMA_VERSION: i64 = 1;

/// Environment variable overriding the master seed; recorded in the manifest when set.
pub const SEED_ENV: &str = "DASEP_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Stationary,
    VerifyGenerator,
    VerifyMartingale,
    VerifyKernels,
    #[serde(rename = "spde")]
    SolveSpde,
    Converge,
    PeriodicConverge,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Simulate,
        ExperimentKind::Stationary,
        ExperimentKind::VerifyGenerator,
        ExperimentKind::VerifyMartingale,
        ExperimentKind::VerifyKernels,
        ExperimentKind::SolveSpde,
        ExperimentKind::Converge,
        ExperimentKind::PeriodicConverge,
    ];

    /// Name used in config files and as the CLI subcommand.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::VerifyGenerator => "verify-generator",
            ExperimentKind::VerifyMartingale => "verify-martingale",
            ExperimentKind::VerifyKernels => "verify-kernels",
            ExperimentKind::SolveSpde => "spde",
            ExperimentKind::Converge => "converge",
            ExperimentKind::PeriodicConverge => "periodic-converge",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Int,
    Float,
    Str,
    Bool,
    FloatArray,
    IntArray,
}

impl Ty {
    fn describe(self) -> &'static str {
        match self {
            Ty::Int => "an integer",
            Ty::Float => "a number",
            Ty::Str => "a string",
            Ty::Bool => "a boolean",
            Ty::FloatArray => "an array of numbers",
            Ty::IntArray => "an array of integers",
        }
    }
}

/// `(key, type, default, description)`. An empty default marks a required key.
type Entry = (&'static str, Ty, &'static str, &'static str);

#[rustfmt::skip]
const SCHEMA: &[Entry] = &[
    ("schema_version", Ty::Int, "", "must be 1"),
    ("experiment", Ty::Str, "", "simulate | stationary | verify-generator | verify-martingale | verify-kernels | spde | converge | periodic-converge"),
    ("seed", Ty::Int, "0", "master seed (nonnegative)"),
    ("threads", Ty::Int, "0", "worker threads, 0 = available parallelism"),
    ("output.dir", Ty::Str, "\"out\"", "output directory"),

    ("model.eps", Ty::Float, "0.1", "asymmetry, q = exp(-eps)"),
    ("model.alpha", Ty::Float, "1.0", "dynamic parameter"),
    ("model.rate", Ty::Str, "\"classic\"", "classic | generalized"),
    ("model.shape", Ty::Str, "\"linear-cos\"", "affine: f(z) = slope z + param; linear-cos: f(z) = slope z + param cos z"),
    ("model.shape_slope", Ty::Float, "1.0", "slope of f"),
    ("model.shape_param", Ty::Float, "0.5", "offset or cosine amplitude of f"),
    ("model.a", Ty::Float, "1.0", "growth constant a >= 0"),
    ("model.gamma", Ty::Float, "0.0", "growth exponent in [0, 1/2)"),
    ("model.c", Ty::Float, "1.0", "growth constant c >= 0"),

    ("domain.kind", Ty::Str, "\"line\"", "line | ring"),
    ("domain.x_min", Ty::Int, "-128", "first site of a line window"),
    ("domain.x_max", Ty::Int, "127", "last site of a line window"),
    ("domain.boundary", Ty::Str, "\"frozen\"", "frozen | reflecting"),
    ("domain.period", Ty::Int, "64", "ring period N"),
    ("domain.winding", Ty::Int, "0", "ring winding, congruent to N mod 2"),

    ("initial.profile", Ty::Str, "\"stationary\"", "stationary | wedge | flat | max-slope"),
    ("time.t_end", Ty::Float, "50.0", "microscopic horizon"),
    ("time.samples", Ty::Int, "10", "equally spaced checkpoints in (0, t_end]"),
    ("ensemble.size", Ty::Int, "100", "trajectories per ensemble"),
    ("ensemble.events", Ty::Bool, "false", "write the event log of every trajectory"),

    ("tolerance.generator", Ty::Float, "1e-10", "max generator residual relative to max |Z|"),
    ("tolerance.se_factor", Ty::Float, "3.0", "standard errors allowed for mean tests"),
    ("tolerance.duhamel", Ty::Float, "1e-6", "max Duhamel reconstruction error relative to sup |Z|"),
    ("tolerance.p_value", Ty::Float, "0.01", "reject below this (Bonferroni-adjusted) p-value"),
    ("tolerance.variance", Ty::Float, "0.01", "relative tolerance on Var(sqrt(eps) s)"),
    ("tolerance.bessel", Ty::Float, "1e-8", "Bessel kernel against the ODE reference"),
    ("tolerance.mass", Ty::Float, "1e-10", "kernel mass conservation"),
    ("tolerance.slope", Ty::Float, "0.1", "allowed deviation of the gradient-kernel decay slope from -1/2"),
    ("tolerance.c1", Ty::Float, "1.0", "upper bound for the fitted gradient-kernel constant"),
    ("tolerance.ks_distance", Ty::Float, "0.05", "KS distance allowed at the finest eps of the line study"),
    ("tolerance.ks_periodic", Ty::Float, "0.07", "KS distance allowed at the largest period of the ring study"),
    ("tolerance.stability", Ty::Float, "2.0", "max/min ratio for constants fitted across eps"),

    ("generator.eps", Ty::FloatArray, "[1.0, 0.1, 0.01]", "eps values of the exhaustive sweep"),
    ("generator.s_min", Ty::Int, "-20", "lowest height of the sweep"),
    ("generator.s_max", Ty::Int, "20", "highest height of the sweep"),

    ("martingale.sites", Ty::IntArray, "[-20, -10, 0, 10, 20]", "observation sites"),
    ("martingale.duhamel_runs", Ty::Int, "20", "trajectories for the Duhamel reconstruction"),
    ("martingale.duhamel_half_width", Ty::Int, "256", "window half-width for the Duhamel reconstruction"),
    ("martingale.duhamel_t", Ty::Float, "20.0", "microscopic time of the Duhamel reconstruction"),

    ("stationary.draws", Ty::Int, "100000", "sampler draws for the chi-square test"),
    ("stationary.ks_size", Ty::Int, "10000", "trajectories per side of the invariance test"),
    ("stationary.macro_t", Ty::Float, "0.01", "invariance horizon in macroscopic units, t = 10 macro_t / eps^2"),
    ("stationary.variance_eps", Ty::Float, "0.001", "eps for the variance check"),
    ("stationary.half_width", Ty::Int, "64", "window half-width of the invariance test"),

    ("kernel.eps", Ty::FloatArray, "[0.1]", "eps values for the kernel checks"),
    ("kernel.t_min", Ty::Float, "1.0", "first gradient-kernel horizon"),
    ("kernel.t_max", Ty::Float, "1000.0", "last gradient-kernel horizon"),
    ("kernel.points", Ty::Int, "13", "log-spaced horizons"),
    ("kernel.a", Ty::Float, "0.0", "exponential weight in the c1 sum"),
    ("kernel.u", Ty::Float, "1.0", "exponential weight in the moment bound"),
    ("kernel.v", Ty::Float, "0.25", "Holder exponent, in [0, 1/2)"),
    ("kernel.moment", Ty::Float, "0.5", "polynomial weight in the moment bound"),
    ("kernel.ode_t", Ty::Float, "5.0", "horizon of the ODE comparison"),

    ("spde.a", Ty::Float, "-0.25", "linear coefficient A <= 0"),
    ("spde.b", Ty::Float, "1.0", "constant noise coefficient"),
    ("spde.modes", Ty::Int, "16", "Fourier modes |k| <= modes"),
    ("spde.dt", Ty::Float, "0.01", "time step"),
    ("spde.t_end", Ty::Float, "1.0", "horizon"),
    ("spde.ensemble", Ty::Int, "10000", "solver runs"),
    ("spde.bump_radius", Ty::Float, "0.25", "support radius of the test function"),
    ("spde.c", Ty::Float, "0.25", "growth rate c of the bracket e^{2ct}"),

    ("converge.eps", Ty::FloatArray, "[0.2, 0.1, 0.05]", "eps values of the line study"),
    ("converge.periods", Ty::IntArray, "[64, 128]", "ring periods of the periodic study, eps = 1/N"),
    ("converge.t", Ty::Float, "0.5", "macroscopic time T"),
    ("converge.x", Ty::FloatArray, "[-1.0, 0.0, 1.0]", "macroscopic observation points"),
    ("converge.ring_x", Ty::FloatArray, "[0.0, 0.25, 0.5]", "observation points on the unit circle"),
    ("converge.spde_half_width", Ty::Float, "8.0", "half-width of the line solver window"),
    ("converge.spde_dx", Ty::Float, "0.05", "line solver spacing"),
    ("converge.spde_dt", Ty::Float, "0.01", "line solver step"),
    ("converge.spde_modes", Ty::Int, "256", "periodic solver modes"),

    ("drift.eps", Ty::FloatArray, "[0.1, 0.05, 0.01]", "eps values of the rate decomposition sweep"),
    ("drift.shat_max", Ty::Float, "5.0", "sweep rescaled heights over [-shat_max, shat_max]"),
    ("drift.points", Ty::Int, "1001", "points of the sweep"),
];

/// Documented keys as `(key, type, default, description)`; empty default means required.
pub fn schema() -> impl Iterator<Item = (&'static str, &'static str, &'static str, &'static str)> {
    SCHEMA.iter().map(|&(k, t, d, doc)| (k, t.describe(), d, doc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub eps: f64,
    pub alpha: f64,
    pub rate_function: RateFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub generator: f64,
    pub se_factor: f64,
    pub duhamel: f64,
    pub p_value: f64,
    pub variance: f64,
    pub bessel: f64,
    pub mass: f64,
    pub slope: f64,
    pub c1: f64,
    pub ks_distance: f64,
    pub ks_periodic: f64,
    pub stability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub eps: Vec<f64>,
    pub s_min: i64,
    pub s_max: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSpec {
    pub sites: Vec<i64>,
    pub duhamel_runs: usize,
    pub duhamel_half_width: i64,
    pub duhamel_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySpec {
    pub draws: usize,
    pub ks_size: usize,
    pub macro_t: f64,
    pub variance_eps: f64,
    pub half_width: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub eps: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub a: f64,
    pub u: f64,
    pub v: f64,
    pub moment: f64,
    pub ode_t: f64,
}

impl KernelSpec {
    /// Log-spaced horizons from `t_min` to `t_max`.
    pub fn t_grid(&self) -> Vec<f64> {
        log_grid(self.t_min, self.t_max, self.points)
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeSpec {
    pub a: f64,
    pub b: f64,
    pub modes: usize,
    pub dt: f64,
    pub t_end: f64,
    pub ensemble: usize,
    pub bump_radius: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeSpec {
    pub eps: Vec<f64>,
    pub periods: Vec<usize>,
    pub t: f64,
    pub x: Vec<f64>,
    pub ring_x: Vec<f64>,
    pub spde_half_width: f64,
    pub spde_dx: f64,
    pub spde_dt: f64,
    pub spde_modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub eps: Vec<f64>,
    pub shat_max: f64,
    pub points: usize,
}

impl DriftSpec {
    pub fn shat_grid(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n)
            .map(|i| -self.shat_max + 2.0 * self.shat_max * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: i64,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub model: ModelSpec,
    pub domain: Domain,
    pub initial: InitialSpec,
    pub t_end: f64,
    pub samples: usize,
    pub ensemble: usize,
    pub record_events: bool,
    pub tolerances: Tolerances,
    pub generator: GeneratorSpec,
    pub martingale: MartingaleSpec,
    pub stationary: StationarySpec,
    pub kernel: KernelSpec,
    pub spde: SpdeSpec,
    pub converge: ConvergeSpec,
    pub drift: DriftSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSpec {
    Stationary,
    Wedge,
    Flat,
    MaxSlope,
}

impl InitialSpec {
    /// Deterministic profile, or `None` for stationary draws.
    pub fn profile(self) -> Option<Profile> {
        match self {
            InitialSpec::Stationary => None,
            InitialSpec::Wedge => Some(Profile::Wedge),
            InitialSpec::Flat => Some(Profile::FlatAlternating),
            InitialSpec::MaxSlope => Some(Profile::MaxSlope),
        }
    }
}

impl ExperimentConfig {
    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.eps, self.model.alpha, self.model.rate_function, self.domain)
    }

    /// Checkpoints `t_end k / samples`, `k = 1..=samples`.
    pub fn sample_times(&self) -> Vec<f64> {
        (1..=self.samples)
            .map(|k| self.t_end * k as f64 / self.samples as f64)
            .collect()
    }
}

/// Flatten nested tables into dotted keys.
fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

fn default_value(key: &str, text: &str) -> toml::Value {
    let doc: toml::Table = toml::from_str(&format!("v = {text}"))
        .unwrap_or_else(|e| panic!("bad schema default for {key}: {e}"));
    doc["v"].clone()
}

fn type_ok(ty: Ty, v: &toml::Value) -> bool {
    use toml::Value as V;
    match (ty, v) {
        (Ty::Int, V::Integer(_)) | (Ty::Str, V::String(_)) | (Ty::Bool, V::Boolean(_)) => true,
        (Ty::Float, V::Float(_) | V::Integer(_)) => true,
        (Ty::FloatArray, V::Array(a)) => a.iter().all(|x| matches!(x, V::Float(_) | V::Integer(_))),
        (Ty::IntArray, V::Array(a)) => a.iter().all(|x| matches!(x, V::Integer(_))),
        _ => false,
    }
}

/// Typed view of the merged key-value map with error collection.
struct Fields {
    values: BTreeMap<String, toml::Value>,
    errors: Vec<ConfigError>,
}

impl Fields {
    fn get(&self, key: &str) -> &toml::Value {
        &self.values[key]
    }

    fn int(&self, key: &str) -> i64 {
        self.get(key).as_integer().unwrap_or(0)
    }

    fn float(&self, key: &str) -> f64 {
        match self.get(key) {
            toml::Value::Integer(i) => *i as f64,
            v => v.as_float().unwrap_or(f64::NAN),
        }
    }

    fn string(&self, key: &str) -> String {
        self.get(key).as_str().unwrap_or_default().to_string()
    }

    fn floats(&self, key: &str) -> Vec<f64> {
        self.get(key)
            .as_array()
            .map(|a| {
                a.iter()
                    .map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)).unwrap_or(f64::NAN))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn ints(&self, key: &str) -> Vec<i64> {
        self.get(key)
            .as_array()
            .map(|a| a.iter().filter_map(|x| x.as_integer()).collect())
            .unwrap_or_default()
    }

    fn range(&mut self, key: &str, value: impl fmt::Display, message: &str) {
        self.errors.push(ConfigError::Range {
            key: key.into(),
            value: value.to_string(),
            message: message.into(),
        });
    }

    fn schema(&mut self, key: &str, message: impl Into<String>) {
        self.errors.push(ConfigError::Schema {
            key: key.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, key: &str) -> f64 {
        let v = self.float(key);
        if !(v > 0.0 && v.is_finite()) {
            self.range(key, v, "must be positive");
        }
        v
    }

    fn nonnegative(&mut self, key: &str) -> f64 {
        let v = self.float(key);
        if !(v >= 0.0 && v.is_finite()) {
            self.range(key, v, "must be nonnegative");
        }
        v
    }

    fn count(&mut self, key: &str, min: i64) -> usize {
        let v = self.int(key);
        if v < min {
            self.range(key, v, &format!("must be at least {min}"));
            return min.max(0) as usize;
        }
        v as usize
    }

    fn choice(&mut self, key: &str, options: &[&str]) -> String {
        let v = self.string(key);
        if !options.contains(&v.as_str()) {
            self.schema(key, format!("`{v}` is not one of {}", options.join(", ")));
        }
        v
    }

    fn positive_list(&mut self, key: &str) -> Vec<f64> {
        let v = self.floats(key);
        if v.is_empty() {
            self.range(key, "[]", "must not be empty");
        }
        for &x in &v {
            if !(x > 0.0 && x.is_finite()) {
                self.range(key, x, "entries must be positive");
            }
        }
        v
    }
}

/// Parse and validate a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| {
        Error::Config(vec![ConfigError::Schema {
            key: "<document>".into(),
            message: e.message().to_string(),
        }])
    })?;
    let mut given = BTreeMap::new();
    flatten("", &table, &mut given);

    let mut f = Fields {
        values: BTreeMap::new(),
        errors: Vec::new(),
    };
    for key in given.keys() {
        if !SCHEMA.iter().any(|e| e.0 == key) {
            f.schema(key, "unknown key");
        }
    }
    let mut missing = false;
    for &(key, ty, default, _) in SCHEMA {
        match given.get(key) {
            Some(v) if type_ok(ty, v) => {
                f.values.insert(key.into(), v.clone());
            }
            Some(v) => {
                f.schema(key, format!("expected {}, found {}", ty.describe(), v.type_str()));
                if default.is_empty() {
                    missing = true;
                } else {
                    f.values.insert(key.into(), default_value(key, default));
                }
            }
            None if default.is_empty() => {
                f.schema(key, "required key is missing");
                missing = true;
            }
            None => {
                f.values.insert(key.into(), default_value(key, default));
            }
        }
    }
    if missing {
        return Err(Error::Config(f.errors));
    }
    build(f)
}

fn build(mut f: Fields) -> Result<ExperimentConfig> {
    let schema_version = f.int("schema_version");
    if schema_version != SCHEMA_VERSION {
        f.range("schema_version", schema_version, &format!("is not supported (expected {SCHEMA_VERSION})"));
    }
    let kind_name = f.string("experiment");
    let kind = ExperimentKind::from_name(&kind_name).unwrap_or_else(|| {
        f.schema("experiment", format!("unknown experiment `{kind_name}`"));
        ExperimentKind::Simulate
    });
    let seed = f.int("seed");
    if seed < 0 {
        f.range("seed", seed, "must be nonnegative");
    }
    let threads = f.count("threads", 0);
    let out_dir = PathBuf::from(f.string("output.dir"));

    let eps = f.positive("model.eps");
    let alpha = f.positive("model.alpha");
    let rate = f.choice("model.rate", &["classic", "generalized"]);
    let shape_name = f.choice("model.shape", &["affine", "linear-cos"]);
    let slope = f.float("model.shape_slope");
    let param = f.float("model.shape_param");
    let shape = if shape_name == "affine" {
        Shape::Affine { slope, offset: param }
    } else {
        Shape::LinearCos { slope, amplitude: param }
    };
    let a = f.nonnegative("model.a");
    let gamma = f.float("model.gamma");
    if !(0.0..0.5).contains(&gamma) {
        f.range("model.gamma", gamma, "must lie in [0, 1/2)");
    }
    let c = f.nonnegative("model.c");
    let rate_function = if rate == "generalized" {
        let g = Generalized { shape, a, gamma, c };
        if f.errors.iter().all(|e| !e.key().starts_with("model.")) {
            let v = g.assumption_violation();
            if v > 0.0 {
                f.range("model.shape", format!("{v:e}"), "exceeds the growth bound |f(z) - f(0) - a z| <= c |z|^gamma");
            }
        }
        RateFunction::Generalized(g)
    } else {
        RateFunction::Classic
    };

    let domain_kind = f.choice("domain.kind", &["line", "ring"]);
    let domain = if domain_kind == "ring" {
        let period = f.int("domain.period");
        let winding = f.int("domain.winding");
        if period < 1 {
            f.range("domain.period", period, "must be positive");
        } else if (winding - period).rem_euclid(2) != 0 {
            f.schema(
                "domain.winding",
                format!("winding {winding} must satisfy winding = period mod 2 (period {period})"),
            );
        } else if winding.abs() > period {
            f.range("domain.winding", winding, "must not exceed the period in absolute value");
        }
        Domain::Ring {
            period: period.max(1) as usize,
            winding,
        }
    } else {
        let (x_min, x_max) = (f.int("domain.x_min"), f.int("domain.x_max"));
        if x_min >= x_max {
            f.range("domain.x_max", x_max, &format!("must exceed domain.x_min = {x_min}"));
        }
        let boundary = match f.choice("domain.boundary", &["frozen", "reflecting"]).as_str() {
            "reflecting" => Boundary::ReflectingBuffer,
            _ => Boundary::Frozen,
        };
        Domain::LineWindow { x_min, x_max, boundary }
    };

    let initial = match f
        .choice("initial.profile", &["stationary", "wedge", "flat", "max-slope"])
        .as_str()
    {
        "wedge" => InitialSpec::Wedge,
        "flat" => InitialSpec::Flat,
        "max-slope" => InitialSpec::MaxSlope,
        _ => InitialSpec::Stationary,
    };
    if initial == InitialSpec::Stationary && domain_kind == "ring" {
        f.schema("initial.profile", "stationary draws are only available on line windows");
    }

    let t_end = f.nonnegative("time.t_end");
    let samples = f.count("time.samples", 1);
    let ensemble = f.count("ensemble.size", 1);
    let record_events = f.get("ensemble.events").as_bool().unwrap_or(false);

    let tolerances = Tolerances {
        generator: f.positive("tolerance.generator"),
        se_factor: f.positive("tolerance.se_factor"),
        duhamel: f.positive("tolerance.duhamel"),
        p_value: f.positive("tolerance.p_value"),
        variance: f.positive("tolerance.variance"),
        bessel: f.positive("tolerance.bessel"),
        mass: f.positive("tolerance.mass"),
        slope: f.positive("tolerance.slope"),
        c1: f.positive("tolerance.c1"),
        ks_distance: f.positive("tolerance.ks_distance"),
        ks_periodic: f.positive("tolerance.ks_periodic"),
        stability: f.positive("tolerance.stability"),
    };
    if tolerances.p_value >= 1.0 {
        f.range("tolerance.p_value", tolerances.p_value, "must be below 1");
    }

    let generator = GeneratorSpec {
        eps: f.positive_list("generator.eps"),
        s_min: f.int("generator.s_min"),
        s_max: f.int("generator.s_max"),
    };
    if generator.s_min > generator.s_max {
        f.range("generator.s_max", generator.s_max, "must not be below generator.s_min");
    }

    let martingale = MartingaleSpec {
        sites: f.ints("martingale.sites"),
        duhamel_runs: f.count("martingale.duhamel_runs", 0),
        duhamel_half_width: f.count("martingale.duhamel_half_width", 2) as i64,
        duhamel_t: f.nonnegative("martingale.duhamel_t"),
    };
    if kind == ExperimentKind::VerifyMartingale {
        if let Domain::LineWindow { x_min, x_max, .. } = domain {
            for &x in &martingale.sites {
                if x <= x_min || x >= x_max {
                    f.range("martingale.sites", x, "must be interior sites of the window");
                }
            }
        } else {
            f.schema("domain.kind", "the martingale suite runs on a line window");
        }
    }

    let stationary = StationarySpec {
        draws: f.count("stationary.draws", 1),
        ks_size: f.count("stationary.ks_size", 1),
        macro_t: f.nonnegative("stationary.macro_t"),
        variance_eps: f.positive("stationary.variance_eps"),
        half_width: f.count("stationary.half_width", 1) as i64,
    };

    let kernel = KernelSpec {
        eps: f.positive_list("kernel.eps"),
        t_min: f.positive("kernel.t_min"),
        t_max: f.positive("kernel.t_max"),
        points: f.count("kernel.points", 2),
        a: f.nonnegative("kernel.a"),
        u: f.nonnegative("kernel.u"),
        v: f.nonnegative("kernel.v"),
        moment: f.nonnegative("kernel.moment"),
        ode_t: f.positive("kernel.ode_t"),
    };
    if kernel.t_min >= kernel.t_max {
        f.range("kernel.t_max", kernel.t_max, "must exceed kernel.t_min");
    }
    if kernel.v >= 0.5 {
        f.range("kernel.v", kernel.v, "must lie in [0, 1/2)");
    }

    let spde_a = f.float("spde.a");
    if !(spde_a <= 0.0) {
        f.range("spde.a", spde_a, "must be <= 0");
    }
    let spde = SpdeSpec {
        a: spde_a,
        b: f.nonnegative("spde.b"),
        modes: f.count("spde.modes", 1),
        dt: f.positive("spde.dt"),
        t_end: f.positive("spde.t_end"),
        ensemble: f.count("spde.ensemble", 1),
        bump_radius: f.positive("spde.bump_radius"),
        c: f.float("spde.c"),
    };
    if spde.bump_radius > 0.5 {
        f.range("spde.bump_radius", spde.bump_radius, "must not exceed 1/2 on the unit circle");
    }

    let periods: Vec<usize> = f
        .ints("converge.periods")
        .into_iter()
        .map(|p| {
            if p < 2 || p % 2 != 0 {
                f.range("converge.periods", p, "entries must be even and at least 2");
            }
            p.max(2) as usize
        })
        .collect();
    let converge = ConvergeSpec {
        eps: f.positive_list("converge.eps"),
        periods,
        t: f.positive("converge.t"),
        x: f.floats("converge.x"),
        ring_x: f.floats("converge.ring_x"),
        spde_half_width: f.positive("converge.spde_half_width"),
        spde_dx: f.positive("converge.spde_dx"),
        spde_dt: f.positive("converge.spde_dt"),
        spde_modes: f.count("converge.spde_modes", 1),
    };
    if converge.spde_dt > converge.spde_dx {
        f.range("converge.spde_dt", converge.spde_dt, "must not exceed converge.spde_dx");
    }
    if converge.ring_x.is_empty() {
        f.range("converge.ring_x", "[]", "must not be empty");
    }
    for &x in &converge.ring_x {
        if !(0.0..1.0).contains(&x) {
            f.range("converge.ring_x", x, "must lie in [0, 1)");
        }
    }
    let drift = DriftSpec {
        eps: f.positive_list("drift.eps"),
        shat_max: f.positive("drift.shat_max"),
        points: f.count("drift.points", 2),
    };
    if converge.x.is_empty() {
        f.range("converge.x", "[]", "must not be empty");
    }
    for &x in &converge.x {
        if x.abs() >= converge.spde_half_width {
            f.range("converge.x", x, "must lie inside the solver window");
        }
    }

    if !f.errors.is_empty() {
        return Err(Error::Config(f.errors));
    }
    Ok(ExperimentConfig {
        schema_version,
        kind,
        seed: seed as u64,
        threads,
        out_dir,
        model: ModelSpec {
            eps,
            alpha,
            rate_function,
        },
        domain,
        initial,
        t_end,
        samples,
        ensemble,
        record_events,
        tolerances,
        generator,
        martingale,
        stationary,
        kernel,
        spde,
        converge,
        drift,
    })
}
