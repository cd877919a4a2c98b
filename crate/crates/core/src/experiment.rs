//! Experiment specifications, named presets, and the end-to-end runner used by
//! the command line front end.
//!
//! Config files are flat `key = value` lines; `#` starts a comment and blank
//! lines are ignored. Every key is optional and falls back to
//! [`ExperimentSpec::default`]. Known keys:
//!
//! ```text
//! name, study (coefficients | eps-sweep | unity-check | decomposition),
//! regime (sparse | small-features), d, eps,
//! activation ((1+x)^k | relu | shifted-relu | sigmoid | softplus | poly[b0,b1,...]),
//! target (polynomial such as x2^2 + x2 + 1), constraint (x1=1 | (x1-1)(x2-1)=0),
//! alphabet (comma list), input_law (gaussian | grid | unity:<n>),
//! width, samples, repetitions, seed,
//! readout_basis (hermite | grid), readout (comma list of monomials), readout_budget,
//! method (limit-predictor | train-gd | both), degree_cap,
//! kernel (auto | symbolic | monte-carlo | prop1), kernel_samples,
//! max_iters, grad_tol, record_every,
//! eps_list, d_list, unity_order, unity_degree, unity_budget,
//! reduced_dim, decomposition_budget, decomposition_trials
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{grid_coeffs, CoeffVector, MultiIndex, Polynomial};
use crate::error::{Error, Result};
use crate::features::{sample_complex_features, sample_features, unity_feature_coeff, Activation, ComplexActivation, RFModel, Regime};
use crate::gotu::{decomposition_check, dist_above, energy_profile, interpolator_space, min_degree, ConstraintKind, DecompositionRow, GotuConstraint, InputLaw, MultiIndexModel, ProductLaw};
use crate::kernel::{phi_monte_carlo, phi_prop1, phi_symbolic, predict_limit_model, KernelMatrix, MAX_SYMBOLIC_DEGREE, MAX_SYMBOLIC_DIM, MIN_KERNEL_SAMPLES};
use crate::linalg;
use crate::rng;
use crate::train::{make_gotu_dataset, train_rf, write_trace_csv, GdOptions, TraceRow, TrainMethod, TrainOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Coefficients of the trained model or of the limit predictor.
    Coefficients,
    /// Limit-predictor energies as the small-features variance shrinks.
    EpsSweep,
    /// Fourier-coefficient covariance scaling on roots of unity.
    UnityCheck,
    /// Reduction identity for multi-index targets.
    Decomposition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    Sparse,
    SmallFeatures,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LimitPredictor,
    TrainGd,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutBasis {
    Hermite,
    /// Monomials of the grid basis, for inputs on a finite alphabet.
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// Symbolic for small polynomial problems, Monte Carlo otherwise.
    Auto,
    Symbolic,
    MonteCarlo,
    Prop1,
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub study: Study,
    pub regime: RegimeKind,
    pub d: usize,
    pub eps: Option<f64>,
    pub activation: Activation,
    pub target: String,
    pub constraint: GotuConstraint,
    pub input_law: InputLaw,
    pub width: usize,
    pub samples: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub readout_basis: ReadoutBasis,
    pub readout: Vec<String>,
    pub readout_budget: usize,
    pub method: Method,
    pub degree_cap: Option<u32>,
    pub kernel: KernelKind,
    pub kernel_samples: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub record_every: usize,
    pub eps_list: Vec<f64>,
    pub d_list: Vec<usize>,
    pub unity_order: u32,
    pub unity_degree: u32,
    pub unity_budget: usize,
    pub reduced_dim: usize,
    pub decomposition_budget: usize,
    pub decomposition_trials: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let gd = GdOptions::default();
        ExperimentSpec {
            name: "custom".into(),
            study: Study::Coefficients,
            regime: RegimeKind::Sparse,
            d: 15,
            eps: None,
            activation: Activation::one_plus_pow(2),
            target: "1".into(),
            constraint: GotuConstraint::fix(0, 1.0),
            input_law: InputLaw::Gaussian,
            width: 1024,
            samples: 65536,
            repetitions: 5,
            seed: 0,
            readout_basis: ReadoutBasis::Hermite,
            readout: vec!["1".into(), "x1".into()],
            readout_budget: 1 << 16,
            method: Method::TrainGd,
            degree_cap: None,
            kernel: KernelKind::Auto,
            kernel_samples: 100_000,
            max_iters: gd.max_iters,
            grad_tol: gd.grad_tol,
            record_every: 100,
            eps_list: vec![1e-1, 1e-2, 1e-3],
            d_list: vec![8, 16, 32, 64],
            unity_order: 4,
            unity_degree: 3,
            unity_budget: 100_000,
            reduced_dim: 2,
            decomposition_budget: 1 << 16,
            decomposition_trials: 10,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        e => Error::Stage { stage, source: Box::new(e) },
    })
}

/// Inverse of [`Activation::name`].
pub fn parse_activation(s: &str) -> Result<Activation> {
    let s = s.trim();
    match s {
        "relu" => return Ok(Activation::Relu),
        "shifted-relu" => return Ok(Activation::ShiftedRelu),
        "sigmoid" => return Ok(Activation::Sigmoid),
        "softplus" => return Ok(Activation::Softplus),
        _ => {}
    }
    if let Some(k) = s.strip_prefix("(1+x)^") {
        let k: u32 = k.parse().map_err(|_| config_err(format!("bad power in activation `{s}`")))?;
        return Ok(Activation::one_plus_pow(k));
    }
    if let Some(body) = s.strip_prefix("poly[").and_then(|r| r.strip_suffix(']')) {
        return Ok(Activation::Polynomial(parse_list(body)?));
    }
    Err(config_err(format!("unknown activation `{s}`")))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| config_err(format!("bad list entry `{v}`"))))
        .collect()
}

/// Parses `x1=1` or `(x1-1)(x2-1)=0`; coordinates are one-based.
pub fn parse_constraint(s: &str) -> Result<GotuConstraint> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || config_err(format!("unrecognized constraint `{s}`"));
    let coord = |v: &str| -> Result<usize> {
        let i: usize = v.strip_prefix('x').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if i == 0 {
            return Err(bad());
        }
        Ok(i - 1)
    };
    if let Some(lhs) = s.strip_suffix("=0").filter(|l| l.starts_with('(')) {
        let factors: Vec<&str> = lhs.trim_start_matches('(').trim_end_matches(')').split(")(").collect();
        if factors.len() != 2 {
            return Err(bad());
        }
        let mut parts = Vec::new();
        for f in factors {
            let split = f[1..].find(['-', '+']).map(|k| k + 1).ok_or_else(bad)?;
            let (var, off) = f.split_at(split);
            let u: f64 = match off.strip_prefix('-') {
                Some(r) => r.parse().map_err(|_| bad())?,
                None => -off[1..].parse::<f64>().map_err(|_| bad())?,
            };
            parts.push((coord(var)?, u));
        }
        return Ok(GotuConstraint::product_vanish(parts[0].0, parts[1].0, parts[0].1, parts[1].1));
    }
    let (var, value) = s.split_once('=').ok_or_else(bad)?;
    Ok(GotuConstraint::fix(coord(var)?, value.parse().map_err(|_| bad())?))
}

fn parse_enum<T: for<'de> Deserialize<'de>>(key: &str, v: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(v.trim().to_string())).map_err(|_| config_err(format!("bad value `{v}` for `{key}`")))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| config_err(format!("bad value `{v}` for `{key}`")))
}

impl ExperimentSpec {
    /// Parses the flat key-value format described in the module docs.
    pub fn parse_config(src: &str) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        let mut alphabet: Option<Vec<f64>> = None;
        let mut law: Option<String> = None;
        for (lineno, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| config_err(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "name" => spec.name = value.to_string(),
                "study" => spec.study = parse_enum(key, value)?,
                "regime" => spec.regime = parse_enum(key, value)?,
                "d" => spec.d = parse_num(key, value)?,
                "eps" => spec.eps = Some(parse_num(key, value)?),
                "activation" => spec.activation = parse_activation(value)?,
                "target" => spec.target = value.to_string(),
                "constraint" => spec.constraint = parse_constraint(value)?,
                "alphabet" => alphabet = Some(parse_list(value)?),
                "input_law" => law = Some(value.to_string()),
                "width" => spec.width = parse_num(key, value)?,
                "samples" => spec.samples = parse_num(key, value)?,
                "repetitions" => spec.repetitions = parse_num(key, value)?,
                "seed" => spec.seed = parse_num(key, value)?,
                "readout_basis" => spec.readout_basis = parse_enum(key, value)?,
                "readout" => spec.readout = value.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect(),
                "readout_budget" => spec.readout_budget = parse_num(key, value)?,
                "method" => spec.method = parse_enum(key, value)?,
                "degree_cap" => spec.degree_cap = Some(parse_num(key, value)?),
                "kernel" => spec.kernel = parse_enum(key, value)?,
                "kernel_samples" => spec.kernel_samples = parse_num(key, value)?,
                "max_iters" => spec.max_iters = parse_num(key, value)?,
                "grad_tol" => spec.grad_tol = parse_num(key, value)?,
                "record_every" => spec.record_every = parse_num(key, value)?,
                "eps_list" => spec.eps_list = parse_list(value)?,
                "d_list" => spec.d_list = parse_list(value)?,
                "unity_order" => spec.unity_order = parse_num(key, value)?,
                "unity_degree" => spec.unity_degree = parse_num(key, value)?,
                "unity_budget" => spec.unity_budget = parse_num(key, value)?,
                "reduced_dim" => spec.reduced_dim = parse_num(key, value)?,
                "decomposition_budget" => spec.decomposition_budget = parse_num(key, value)?,
                "decomposition_trials" => spec.decomposition_trials = parse_num(key, value)?,
                _ => return Err(config_err(format!("line {}: unknown key `{key}`", lineno + 1))),
            }
        }
        if let Some(a) = &alphabet {
            spec.constraint.alphabet = Some(a.clone());
        }
        spec.input_law = match law.as_deref() {
            None | Some("gaussian") if alphabet.is_none() => InputLaw::Gaussian,
            Some("gaussian") => InputLaw::Gaussian,
            None | Some("grid") => InputLaw::UniformGrid(alphabet.clone().ok_or_else(|| config_err("input_law = grid needs an alphabet"))?),
            Some(other) => match other.strip_prefix("unity:") {
                Some(n) => InputLaw::UniformUnity(parse_num("input_law", n)?),
                None => return Err(config_err(format!("unknown input law `{other}`"))),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a key-value config, or a JSON export when the file starts with `{`.
    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path)?;
        if src.trim_start().starts_with('{') {
            let spec: ExperimentSpec = serde_json::from_str(&src).map_err(|e| config_err(e.to_string()))?;
            spec.validate()?;
            Ok(spec)
        } else {
            Self::parse_config(&src)
        }
    }

    pub fn resolved_regime(&self) -> Regime {
        match self.regime {
            RegimeKind::Sparse => Regime::Sparse { d: self.d },
            RegimeKind::SmallFeatures => Regime::SmallFeatures { d: self.d, eps: self.eps.unwrap_or(f64::NAN) },
        }
    }

    pub fn target_polynomial(&self) -> Result<Polynomial> {
        let dim = if self.study == Study::Decomposition { self.reduced_dim } else { self.d };
        Polynomial::parse(&self.target, dim).map_err(|e| config_err(format!("target: {e}")))
    }

    pub fn readout_indices(&self) -> Result<Vec<MultiIndex>> {
        self.readout.iter().map(|l| MultiIndex::parse_label(l, self.d).map_err(|e| config_err(format!("readout: {e}")))).collect()
    }

    /// Degree of the interpolator space for the limit predictor.
    pub fn resolved_degree_cap(&self) -> u32 {
        self.degree_cap.or_else(|| self.activation.degree()).unwrap_or(2)
    }

    pub fn gd_options(&self) -> GdOptions {
        GdOptions { max_iters: self.max_iters, grad_tol: self.grad_tol, ..GdOptions::default() }
    }

    /// Checks the preconditions of every stage the spec will run.
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(config_err("repetitions must be at least 1"));
        }
        if self.d == 0 {
            return Err(config_err("d must be positive"));
        }
        match (self.regime, self.eps) {
            (RegimeKind::SmallFeatures, None) if self.study != Study::EpsSweep => return Err(config_err("small-features regime needs eps")),
            (RegimeKind::Sparse, Some(_)) => return Err(config_err("eps is only meaningful in the small-features regime")),
            _ => {}
        }
        self.resolved_regime().validate().or_else(|e| if self.study == Study::EpsSweep { Ok(()) } else { Err(e) })?;
        self.target_polynomial()?;
        match self.study {
            Study::Coefficients => {
                self.constraint.validate(self.d)?;
                if self.width == 0 || self.samples == 0 {
                    return Err(config_err("width and samples must be positive"));
                }
                let idx = self.readout_indices()?;
                if idx.is_empty() {
                    return Err(config_err("readout needs at least one monomial"));
                }
                let grid = matches!(self.input_law, InputLaw::UniformGrid(_));
                if grid && self.method != Method::TrainGd {
                    return Err(config_err("grid inputs support method = train-gd only"));
                }
                if self.readout_basis == ReadoutBasis::Grid {
                    let InputLaw::UniformGrid(alphabet) = &self.input_law else {
                        return Err(config_err("readout_basis = grid needs input_law = grid"));
                    };
                    if idx.iter().any(|t| t.exponents().iter().any(|&e| e as usize >= alphabet.len())) {
                        return Err(config_err("grid readout exponents must be below the alphabet size"));
                    }
                }
                if matches!(self.input_law, InputLaw::UniformUnity(_)) {
                    return Err(config_err("roots-of-unity inputs are handled by study = unity-check"));
                }
                if self.kernel == KernelKind::Prop1 && (self.activation != Activation::one_plus_pow(2) || self.regime != RegimeKind::Sparse) {
                    return Err(config_err("kernel = prop1 needs the sparse regime with (1+x)^2"));
                }
            }
            Study::EpsSweep => {
                if self.regime != RegimeKind::SmallFeatures || self.activation.degree().is_none() {
                    return Err(config_err("eps-sweep needs the small-features regime and a polynomial activation"));
                }
                if self.eps_list.len() < 2 || self.eps_list.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                    return Err(config_err("eps_list needs at least two positive values"));
                }
                self.constraint.validate(self.d)?;
            }
            Study::UnityCheck => {
                if self.unity_order < 2 {
                    return Err(config_err("unity_order must be at least 2"));
                }
                if self.d_list.len() < 2 || self.d_list.windows(2).any(|w| w[0] >= w[1]) || self.d_list[0] < 2 {
                    return Err(config_err("d_list must be strictly ascending with entries at least 2"));
                }
            }
            Study::Decomposition => {
                if self.reduced_dim == 0 || self.reduced_dim > self.d {
                    return Err(config_err("reduced_dim must lie in 1..=d"));
                }
                if self.decomposition_trials == 0 {
                    return Err(config_err("decomposition_trials must be positive"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the JSON form of the spec.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&json).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "fig1",
    "fig2",
    "fig5",
    "fig6",
    "table1-square",
    "table1-relu",
    "table1-shifted-relu",
    "table1-sigmoid",
    "table1-softplus",
    "table2-square",
    "table2-relu",
    "table2-shifted-relu",
    "table2-sigmoid",
    "table2-softplus",
    "table10-relu",
    "table10-shifted-relu",
    "table10-sigmoid",
    "table10-softplus",
    "eps-sweep",
    "unity-check",
    "decomposition",
];

fn table_activation(tag: &str) -> Option<Activation> {
    Some(match tag {
        "square" => Activation::one_plus_pow(2),
        "relu" => Activation::Relu,
        "shifted-relu" => Activation::ShiftedRelu,
        "sigmoid" => Activation::Sigmoid,
        "softplus" => Activation::Softplus,
        _ => return None,
    })
}

/// Explicit-feature sample count used when `N ≥ n` forces the dual solve;
/// the kernel of `n` points must fit in memory.
pub const TABLE10_SAMPLES: usize = 8192;

/// Iteration budget for the `d = 2` small-features figures: curvature along
/// degree-k directions scales like `εᵏ`, and these runs live in a basis of at
/// most six modes, so long runs are cheap.
pub const SMALL_FEATURE_ITERS: usize = 2_000_000;

/// The published parameters of a named experiment.
pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let base = ExperimentSpec { name: name.to_string(), ..ExperimentSpec::default() };
    let unknown = || Error::UnknownPreset(name.to_string());
    let spec = match name {
        "fig1" => ExperimentSpec {
            regime: RegimeKind::SmallFeatures,
            d: 2,
            eps: Some(0.05f64.powi(2)),
            width: 256,
            max_iters: SMALL_FEATURE_ITERS,
            record_every: 10_000,
            readout: ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"].map(String::from).to_vec(),
            ..base
        },
        "fig2" => ExperimentSpec {
            regime: RegimeKind::SmallFeatures,
            d: 2,
            eps: Some(0.05f64.powi(2)),
            width: 16384,
            max_iters: SMALL_FEATURE_ITERS,
            record_every: 10_000,
            target: "x2^2 + x2 + 1".into(),
            readout: ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"].map(String::from).to_vec(),
            ..base
        },
        "fig5" => ExperimentSpec {
            activation: Activation::one_plus_pow(4),
            method: Method::LimitPredictor,
            width: 300_000,
            repetitions: 1,
            readout: ["1", "x1", "x1^2", "x1^3", "x1^4"].map(String::from).to_vec(),
            ..base
        },
        "fig6" => {
            let alphabet = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
            ExperimentSpec {
                constraint: GotuConstraint::fix(0, 1.0).with_alphabet(alphabet.clone()),
                input_law: InputLaw::UniformGrid(alphabet),
                readout_basis: ReadoutBasis::Grid,
                readout: ["1", "x1", "x2", "x1^2"].map(String::from).to_vec(),
                ..base
            }
        }
        "eps-sweep" => ExperimentSpec { study: Study::EpsSweep, regime: RegimeKind::SmallFeatures, d: 2, method: Method::LimitPredictor, repetitions: 1, ..base },
        "unity-check" => ExperimentSpec { study: Study::UnityCheck, repetitions: 1, ..base },
        "decomposition" => ExperimentSpec { study: Study::Decomposition, d: 6, width: 8, target: "x1*x2 + 1".into(), repetitions: 1, ..base },
        _ => {
            let (table, tag) = name.split_once('-').ok_or_else(unknown)?;
            let activation = table_activation(tag).ok_or_else(unknown)?;
            match table {
                "table1" => ExperimentSpec { regime: RegimeKind::SmallFeatures, eps: Some(0.03f64.powi(2)), activation, ..base },
                "table2" => ExperimentSpec { activation, ..base },
                "table10" if tag != "square" => ExperimentSpec {
                    activation,
                    target: "x1*x2".into(),
                    constraint: GotuConstraint::product_vanish(0, 1, 1.0, 1.0),
                    width: 40_000,
                    samples: TABLE10_SAMPLES,
                    readout: ["1", "x1", "x2", "x1*x2"].map(String::from).to_vec(),
                    ..base
                },
                _ => return Err(unknown()),
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub label: String,
    pub mean: f64,
    /// Spread over repetitions; absent for a single repetition.
    pub std: Option<f64>,
    /// Readout noise of the mean.
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub spec_hash: String,
    pub wall_seconds: f64,
    pub seeds: Vec<u64>,
}

impl ResultTable {
    pub fn row(&self, label: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "monomial,mean,std,stderr")?;
        for r in &self.rows {
            let std = r.std.map(|s| s.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", r.label, r.mean, std, r.stderr)?;
        }
        Ok(())
    }

    /// `label  mean ± std` lines for the terminal.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
        let mut s = String::new();
        for r in &self.rows {
            let _ = match r.std {
                Some(std) => writeln!(s, "{:width$}  {:>9.4} ± {:.4}", r.label, r.mean, std),
                None => writeln!(s, "{:width$}  {:>9.4}", r.label, r.mean),
            };
        }
        s
    }
}

/// Per-label samples over repetitions, with readout standard errors.
fn summarize(labels: &[String], per_rep: &[Vec<(f64, f64)>]) -> Vec<ResultRow> {
    let r = per_rep.len() as f64;
    labels
        .iter()
        .enumerate()
        .map(|(k, label)| {
            let vals: Vec<f64> = per_rep.iter().map(|rep| rep[k].0).collect();
            let mean = vals.iter().sum::<f64>() / r;
            let std = (per_rep.len() >= 2).then(|| (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt());
            let stderr = per_rep.iter().map(|rep| rep[k].1.powi(2)).sum::<f64>().sqrt() / r;
            ResultRow { label: label.clone(), mean, std, stderr }
        })
        .collect()
}

/// The symbolic, Monte-Carlo or closed-form kernel the spec asks for.
pub fn build_kernel(spec: &ExperimentSpec, p: u32, seed: u64) -> Result<KernelMatrix> {
    let regime = spec.resolved_regime();
    let symbolic_ok = spec.activation.degree().is_some() && p <= MAX_SYMBOLIC_DEGREE && spec.d <= MAX_SYMBOLIC_DIM;
    match spec.kernel {
        KernelKind::Prop1 => phi_prop1(spec.d),
        KernelKind::Symbolic => phi_symbolic(&regime, &spec.activation, p),
        KernelKind::Auto if symbolic_ok => phi_symbolic(&regime, &spec.activation, p),
        KernelKind::Auto | KernelKind::MonteCarlo => phi_monte_carlo(&regime, &spec.activation, p, spec.kernel_samples, seed),
    }
}

/// Hermite coefficients of the limit predictor for the spec's problem.
pub fn limit_prediction(spec: &ExperimentSpec, seed: u64) -> Result<CoeffVector<f64>> {
    let p = spec.resolved_degree_cap();
    let phi = staged("kernel", build_kernel(spec, p, seed))?;
    let target = spec.target_polynomial()?.to_hermite();
    let space = staged("interpolator space", interpolator_space(&spec.constraint, &target, p))?;
    staged("limit predictor", predict_limit_model(&phi, &space))
}

struct TrainedRep {
    values: Vec<(f64, f64)>,
    trace: Vec<TraceRow>,
    coef_trace: Vec<(usize, Vec<f64>)>,
}

fn train_repetition(spec: &ExperimentSpec, readout: &[MultiIndex], seed: u64) -> Result<TrainedRep> {
    let features = staged("features", sample_features(&spec.resolved_regime(), spec.width, rng::derive(seed, 0)))?;
    let model = RFModel::new(features, spec.activation.clone());
    let target = spec.target_polynomial()?;
    let data = staged("dataset", make_gotu_dataset(&spec.constraint, &target, spec.samples, &spec.input_law, rng::derive(seed, 1)))?;
    let hermite = spec.readout_basis == ReadoutBasis::Hermite;
    let opts = TrainOptions { gd: spec.gd_options(), readout: if hermite { readout.to_vec() } else { Vec::new() }, record_every: spec.record_every };
    let mut out = staged("training", train_rf(&model, &data, TrainMethod::GdMse, &opts))?;
    let values = if hermite {
        out.coef_trace.last().map(|(_, c)| c.iter().map(|&v| (v, 0.0)).collect()).unwrap_or_default()
    } else {
        let InputLaw::UniformGrid(alphabet) = &spec.input_law else { unreachable!("validated") };
        let mut active: Vec<usize> = readout.iter().flat_map(MultiIndex::support).collect();
        active.sort_unstable();
        active.dedup();
        let mut trained = model;
        trained.amplitudes = std::mem::take(&mut out.amplitudes);
        let eval = |x: &[f64]| trained.eval(x).expect("dimension checked");
        let est = staged("readout", grid_coeffs(eval, spec.d, &active, alphabet, spec.readout_budget, rng::derive(seed, 2)))?;
        readout.iter().map(|t| (est.coeffs.get(t), est.stderr_of(t))).collect()
    };
    Ok(TrainedRep { values, trace: out.trace, coef_trace: out.coef_trace })
}

/// Full output of one run, before it is written to disk.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub spec: ExperimentSpec,
    pub table: ResultTable,
    /// Loss trace of the first repetition.
    pub trace: Vec<TraceRow>,
    /// Readout labels and their coefficient trace for the first repetition.
    pub coef_trace: Option<(Vec<String>, Vec<(usize, Vec<f64>)>)>,
    /// Study-specific detail as `(file name, CSV text)`.
    pub extra: Vec<(String, String)>,
}

impl RunOutput {
    /// Writes `results.csv`, `spec.json`, `run.json` and whichever traces,
    /// detail files and plots the study produced.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut results = Vec::new();
        self.table.write_csv(&mut results)?;
        fs::write(dir.join("results.csv"), results)?;
        let spec_json = serde_json::to_string_pretty(&self.spec).expect("spec serializes");
        fs::write(dir.join("spec.json"), spec_json + "\n")?;
        let meta = serde_json::json!({
            "spec": &self.spec,
            "spec_hash": &self.table.spec_hash,
            "seeds": &self.table.seeds,
            "wall_seconds": self.table.wall_seconds,
            "repetitions": self.spec.repetitions,
        });
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n")?;
        if !self.trace.is_empty() {
            let mut buf = Vec::new();
            write_trace_csv(&self.trace, &mut buf)?;
            fs::write(dir.join("trace.csv"), buf)?;
        }
        if let Some((labels, rows)) = &self.coef_trace {
            let mut s = format!("iteration,{}\n", labels.join(","));
            for (it, c) in rows {
                let vals: Vec<String> = c.iter().map(f64::to_string).collect();
                let _ = writeln!(s, "{it},{}", vals.join(","));
            }
            fs::write(dir.join("coef_trace.csv"), s)?;
            let series: Vec<(String, Vec<(f64, f64)>)> = labels
                .iter()
                .enumerate()
                .map(|(k, l)| (l.clone(), rows.iter().map(|(it, c)| (*it as f64, c[k])).collect()))
                .collect();
            fs::write(dir.join("coefficients.svg"), svg_line_chart(&self.spec.name, "iteration", "coefficient", &series))?;
        }
        for (name, text) in &self.extra {
            fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

/// Runs the spec end to end, repetitions in parallel with derived seeds.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutput> {
    spec.validate()?;
    let start = Instant::now();
    let seeds: Vec<u64> = (0..spec.repetitions as u64).map(|r| rng::derive(spec.seed, r)).collect();
    let mut trace = Vec::new();
    let mut coef_trace = None;
    let mut extra = Vec::new();
    let rows = match spec.study {
        Study::Coefficients => {
            let readout = spec.readout_indices()?;
            let labels: Vec<String> = readout.iter().map(MultiIndex::label).collect();
            let mut rows = Vec::new();
            if matches!(spec.method, Method::TrainGd | Method::Both) {
                let reps: Vec<TrainedRep> = seeds.par_iter().map(|&s| train_repetition(spec, &readout, s)).collect::<Result<_>>()?;
                let per_rep: Vec<Vec<(f64, f64)>> = reps.iter().map(|r| r.values.clone()).collect();
                let mut first = reps.into_iter().next().expect("at least one repetition");
                let every = spec.record_every.max(1);
                let last = first.trace.last().map(|r| r.iteration);
                trace = std::mem::take(&mut first.trace).into_iter().filter(|r| r.iteration % every == 0 || Some(r.iteration) == last).collect();
                if !first.coef_trace.is_empty() {
                    coef_trace = Some((labels.clone(), first.coef_trace));
                }
                let prefixed: Vec<String> = labels.iter().map(|l| if spec.method == Method::Both { format!("gd:{l}") } else { l.clone() }).collect();
                rows.extend(summarize(&prefixed, &per_rep));
            }
            if matches!(spec.method, Method::LimitPredictor | Method::Both) {
                let per_rep: Vec<Vec<(f64, f64)>> = seeds
                    .par_iter()
                    .map(|&s| limit_prediction(spec, rng::derive(s, 3)).map(|g| readout.iter().map(|t| (g.get(t), 0.0)).collect()))
                    .collect::<Result<_>>()?;
                let prefixed: Vec<String> = labels.iter().map(|l| if spec.method == Method::Both { format!("limit:{l}") } else { l.clone() }).collect();
                rows.extend(summarize(&prefixed, &per_rep));
            }
            rows
        }
        Study::EpsSweep => {
            let report = eps_sweep(spec)?;
            extra.push(("eps_sweep.csv".into(), report.to_csv()));
            report.rows()
        }
        Study::UnityCheck => {
            let degree = spec.unity_degree;
            let report = unity_check(spec.unity_order, &spec.d_list, degree, spec.unity_budget, spec.seed)?;
            extra.push(("unity_check.csv".into(), report.to_csv()));
            report.rows()
        }
        Study::Decomposition => {
            let rows = decomposition_study(spec)?;
            let mut s = String::from("trial,full,full_se,reduced,reduced_se,penalty,penalty_se,gap,combined_stderr\n");
            for (k, r) in rows.iter().enumerate() {
                let _ = writeln!(s, "{k},{},{},{},{},{},{},{},{}", r.full, r.full_se, r.reduced, r.reduced_se, r.penalty, r.penalty_se, r.gap(), r.combined_stderr());
            }
            extra.push(("decomposition.csv".into(), s));
            rows.iter()
                .enumerate()
                .map(|(k, r)| ResultRow { label: format!("trial{k}:gap"), mean: r.gap(), std: None, stderr: r.combined_stderr() })
                .collect()
        }
    };
    let table = ResultTable { rows, spec_hash: spec.hash(), wall_seconds: start.elapsed().as_secs_f64(), seeds };
    Ok(RunOutput { spec: spec.clone(), table, trace, coef_trace, extra })
}

/// Limit-predictor energy profiles over a range of small-feature variances.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsSweepReport {
    pub min_degree: u32,
    pub eps: Vec<f64>,
    pub dist_above: Vec<f64>,
    pub energies: Vec<BTreeMap<u32, f64>>,
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

impl EpsSweepReport {
    /// Least-squares slope of `ln e(k)` against `ln ε`; `None` when some
    /// energy vanishes.
    pub fn energy_slope(&self, k: u32) -> Option<f64> {
        let ys: Vec<f64> = self.energies.iter().map(|e| e.get(&k).copied().unwrap_or(0.0)).collect();
        ys.iter().all(|&y| y > 0.0).then(|| loglog_slope(&self.eps, &ys))
    }

    pub fn max_degree(&self) -> u32 {
        self.energies.iter().flat_map(|e| e.keys().copied()).max().unwrap_or(0)
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let row = |label: String, mean: f64| ResultRow { label, mean, std: None, stderr: 0.0 };
        let mut rows = Vec::new();
        for (k, &eps) in self.eps.iter().enumerate() {
            rows.push(row(format!("eps={eps}:dist_above"), self.dist_above[k]));
            for (deg, e) in &self.energies[k] {
                rows.push(row(format!("eps={eps}:e({deg})"), *e));
            }
        }
        for k in self.min_degree + 1..=self.max_degree() {
            if let Some(s) = self.energy_slope(k) {
                rows.push(row(format!("slope:e({k})"), s));
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,degree,energy,dist_above\n");
        for (k, &eps) in self.eps.iter().enumerate() {
            for (deg, e) in &self.energies[k] {
                let _ = writeln!(s, "{eps},{deg},{e},{}", self.dist_above[k]);
            }
        }
        s
    }
}

/// Runs the limit predictor at every `ε` of `spec.eps_list`.
pub fn eps_sweep(spec: &ExperimentSpec) -> Result<EpsSweepReport> {
    let target = spec.target_polynomial()?.to_hermite();
    let pstar = staged("min degree", min_degree(&spec.constraint, &target))?;
    let mut eps_sorted = spec.eps_list.clone();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut report = EpsSweepReport { min_degree: pstar, eps: Vec::new(), dist_above: Vec::new(), energies: Vec::new() };
    for eps in eps_sorted {
        let run = ExperimentSpec { regime: RegimeKind::SmallFeatures, eps: Some(eps), kernel: KernelKind::Symbolic, ..spec.clone() };
        let g = limit_prediction(&run, spec.seed)?;
        report.eps.push(eps);
        report.dist_above.push(dist_above(&g, pstar));
        report.energies.push(energy_profile(&g));
    }
    Ok(report)
}

/// Covariance scaling of Fourier coefficients of random complex features.
#[derive(Clone, Debug, PartialEq)]
pub struct UnityReport {
    pub n: u32,
    pub d_list: Vec<usize>,
    /// Representative indices as `(label, |j|)`.
    pub diagonal_labels: Vec<(String, u32)>,
    /// `[d][j]` mean of `|φ̂(j)|²` and its standard error.
    pub diagonal: Vec<Vec<(f64, f64)>>,
    /// `(d, j, j', |mean|/stderr)` for distinct index pairs.
    pub off_diagonal: Vec<(usize, String, String, f64)>,
}

impl UnityReport {
    /// Log-log slope of the diagonal against `d` per representative index.
    pub fn slopes(&self) -> Vec<(String, u32, f64)> {
        let ds: Vec<f64> = self.d_list.iter().map(|&d| d as f64).collect();
        self.diagonal_labels
            .iter()
            .enumerate()
            .map(|(k, (l, deg))| {
                let ys: Vec<f64> = self.diagonal.iter().map(|row| row[k].0).collect();
                (l.clone(), *deg, loglog_slope(&ds, &ys))
            })
            .collect()
    }

    pub fn max_off_diagonal_z(&self) -> f64 {
        self.off_diagonal.iter().map(|o| o.3).fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows: Vec<ResultRow> = self
            .slopes()
            .into_iter()
            .map(|(l, deg, s)| ResultRow { label: format!("slope:{l}(|j|={deg})"), mean: s, std: None, stderr: 0.0 })
            .collect();
        rows.push(ResultRow { label: "max-offdiag-z".into(), mean: self.max_off_diagonal_z(), std: None, stderr: 0.0 });
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,d,j,j2,value,stderr\n");
        for (a, &d) in self.d_list.iter().enumerate() {
            for (k, (l, _)) in self.diagonal_labels.iter().enumerate() {
                let _ = writeln!(s, "diagonal,{d},{l},,{},{}", self.diagonal[a][k].0, self.diagonal[a][k].1);
            }
        }
        for (d, j, j2, z) in &self.off_diagonal {
            let _ = writeln!(s, "offdiag-z,{d},{j},{j2},{z},");
        }
        for (l, _, slope) in self.slopes() {
            let _ = writeln!(s, "slope,,{l},,{slope},");
        }
        s
    }
}

/// Monte-Carlo check of the roots-of-unity feature covariance: diagonal
/// entries `E|φ̂(j)|²` for `j ∈ {0, e₁, e₁+e₂}` against `d`, and z-scores of
/// `E[φ̂(j) conj φ̂(j′)]` for distinct `j, j′` among low-degree indices.
///
/// The activation is the truncated exponential of the given degree; features
/// have i.i.d. complex Gaussian weights and bias of variance `2/d`.
pub fn unity_check(n: u32, d_list: &[usize], activation_degree: u32, budget: usize, seed: u64) -> Result<UnityReport> {
    if budget < MIN_KERNEL_SAMPLES {
        return Err(Error::BudgetTooSmall { budget, minimum: MIN_KERNEL_SAMPLES });
    }
    if n < 2 {
        return Err(config_err("unity_check needs n ≥ 2"));
    }
    if d_list.len() < 2 || d_list.windows(2).any(|w| w[0] >= w[1]) || d_list[0] < 2 {
        return Err(config_err("d_list must be strictly ascending with entries at least 2"));
    }
    let act = ComplexActivation::truncated_exp(activation_degree);
    let mut report = UnityReport { n, d_list: d_list.to_vec(), diagonal_labels: Vec::new(), diagonal: Vec::new(), off_diagonal: Vec::new() };
    for (a, &d) in d_list.iter().enumerate() {
        let mut probe: Vec<MultiIndex> = vec![MultiIndex::zeros(d), MultiIndex::unit(d, 0), MultiIndex::from_pairs(d, &[(0, 1), (1, 1)]), MultiIndex::unit(d, 1), MultiIndex::from_pairs(d, &[(0, 2)])];
        probe.retain(|t| t.exponents().iter().all(|&e| e < n));
        if a == 0 {
            report.diagonal_labels = probe.iter().take(3).map(|t| (t.label(), t.total_degree())).collect();
        }
        let k = probe.len();
        let feats = sample_complex_features(d, budget, rng::derive(seed, a as u64))?;
        let coeffs: Vec<Vec<Complex64>> = (0..budget)
            .into_par_iter()
            .map(|i| probe.iter().map(|t| unity_feature_coeff(feats.weight(i), feats.b[i], &act, n, t)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let m = budget as f64;
        let mut diag = Vec::new();
        for (q, _) in report.diagonal_labels.iter().enumerate() {
            let vals: Vec<f64> = coeffs.iter().map(|c| c[q].norm_sqr()).collect();
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            diag.push((mean, (var / m).sqrt()));
        }
        report.diagonal.push(diag);
        for p in 0..k {
            for q in p + 1..k {
                let vals: Vec<Complex64> = coeffs.iter().map(|c| c[p] * c[q].conj()).collect();
                let mean = vals.iter().sum::<Complex64>() / m;
                let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (m - 1.0);
                let se = (var / m).sqrt();
                let z = if se > 0.0 { mean.norm() / se } else { 0.0 };
                report.off_diagonal.push((d, probe[p].label(), probe[q].label(), z));
            }
        }
    }
    Ok(report)
}

/// Checks `loss = reduced loss + aᵀΛa/N` on random amplitude vectors for the
/// multi-index target `spec.target` in `spec.reduced_dim` latent coordinates.
pub fn decomposition_study(spec: &ExperimentSpec) -> Result<Vec<DecompositionRow>> {
    let d = spec.d;
    let k = spec.reduced_dim;
    let inner = spec.target_polynomial()?;
    let features = staged("features", sample_features(&Regime::Sparse { d }, spec.width, rng::derive(spec.seed, 0)))?;
    let mut r = rng::stream(spec.seed, 1);
    let amps: Vec<Vec<f64>> = (0..spec.decomposition_trials).map(|_| (0..spec.width).map(|_| rng::normal(&mut r)).collect()).collect();
    let (u, law) = match &spec.input_law {
        InputLaw::Gaussian => {
            let raw = Mat::from_fn(d, k, |_, _| rng::normal(&mut r));
            let (q, _, _) = staged("projection", linalg::svd(raw.as_ref()))?;
            (Mat::from_fn(d, k, |i, j| q[(i, j)]), ProductLaw::Gaussian)
        }
        InputLaw::UniformGrid(a) if a.len() == 2 && a.contains(&1.0) && a.contains(&-1.0) => (Mat::from_fn(d, k, |i, j| if i == j { 1.0 } else { 0.0 }), ProductLaw::Hypercube),
        _ => return Err(config_err("decomposition needs gaussian or ±1 grid inputs")),
    };
    let model = MultiIndexModel::new(u, move |z| inner.eval(z))?;
    staged("decomposition", decomposition_check(&model, &features, &spec.activation, law, &amps, spec.decomposition_budget, rng::derive(spec.seed, 2)))
}

/// A minimal SVG line chart with one polyline per series.
pub fn svg_line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let pts = series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n");
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>", W / 2.0, xml_escape(title));
    let _ = writeln!(s, "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>", H - M, W - M, H - M);
    let _ = writeln!(s, "<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>", H - M);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 10.0, xml_escape(xlabel));
    let _ = writeln!(s, "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{}</text>", H / 2.0, H / 2.0, xml_escape(ylabel));
    for (v, anchor_y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.3}</text>", M - 4.0, anchor_y + 4.0);
    }
    for (v, anchor_x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(s, "<text x=\"{anchor_x}\" y=\"{}\" text-anchor=\"middle\">{v}</text>", H - M + 16.0);
    }
    for (k, (label, points)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", path.join(" "));
        let ly = M + 16.0 * k as f64;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\">{}</text>", W - M - 80.0, xml_escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Short description of the seen set for listings.
pub fn describe(spec: &ExperimentSpec) -> String {
    let regime = match spec.regime {
        RegimeKind::Sparse => "sparse".to_string(),
        RegimeKind::SmallFeatures => format!("small-features eps={}", spec.eps.map_or("sweep".into(), |e| e.to_string())),
    };
    let domain = match &spec.constraint.kind {
        ConstraintKind::ExplicitSeenGrid { points } => format!("{} seen points", points.len()),
        _ => spec.constraint.to_string(),
    };
    format!("{:?} {regime} d={} N={} sigma={} f={} seen: {domain}", spec.study, spec.d, spec.width, spec.activation.name(), spec.target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_names_round_trip() {
        for act in [Activation::one_plus_pow(2), Activation::one_plus_pow(4), Activation::Relu, Activation::ShiftedRelu, Activation::Sigmoid, Activation::Softplus, Activation::Polynomial(vec![0.5, 1.0, 0.25])] {
            assert_eq!(parse_activation(&act.name()).unwrap(), act);
        }
        assert!(parse_activation("tanh").is_err());
    }

    #[test]
    fn constraints_round_trip_through_display() {
        for c in [GotuConstraint::fix(0, 1.0), GotuConstraint::fix(4, -2.0), GotuConstraint::product_vanish(0, 1, 1.0, 1.0), GotuConstraint::product_vanish(2, 5, -1.0, 0.5)] {
            assert_eq!(parse_constraint(&c.to_string()).unwrap(), c);
        }
        assert!(parse_constraint("x0=1").is_err());
        assert!(parse_constraint("(x1-1)=0").is_err());
    }

    #[test]
    fn preset_examples() {
        let s = preset("fig1").unwrap();
        assert_eq!((s.d, s.width, s.regime), (2, 256, RegimeKind::SmallFeatures));
        assert!((s.eps.unwrap() - 0.0025).abs() < 1e-15);
        assert_eq!(s.activation, Activation::one_plus_pow(2));
        let s = preset("fig5").unwrap();
        assert_eq!((s.d, s.method), (15, Method::LimitPredictor));
        assert_eq!(s.activation, Activation::one_plus_pow(4));
        let s = preset("table10-relu").unwrap();
        assert_eq!((s.d, s.width, s.target.as_str()), (15, 40_000, "x1*x2"));
        assert_eq!(s.constraint, GotuConstraint::product_vanish(0, 1, 1.0, 1.0));
        assert!(matches!(preset("table3"), Err(Error::UnknownPreset(_))));
        for name in PRESETS {
            preset(name).unwrap();
        }
    }

    #[test]
    fn config_parsing_and_validation() {
        let src = "# table 2 row\nname = t2\nregime = sparse\nactivation = sigmoid\nreadout = 1, x1\nrepetitions = 2\nseed = 7\n";
        let s = ExperimentSpec::parse_config(src).unwrap();
        assert_eq!((s.name.as_str(), s.activation.clone(), s.repetitions, s.seed), ("t2", Activation::Sigmoid, 2, 7));
        let s = ExperimentSpec::parse_config("alphabet = -2,-1,0,1,2\nconstraint = (x1-1)(x2-1)=0\nreadout_basis = grid\n").unwrap();
        assert_eq!(s.input_law, InputLaw::UniformGrid(vec![-2.0, -1.0, 0.0, 1.0, 2.0]));
        assert_eq!(s.constraint.alphabet.as_deref(), Some(&[-2.0, -1.0, 0.0, 1.0, 2.0][..]));
        for bad in ["bogus = 1", "regime = small-features", "repetitions = 0", "readout_basis = grid", "d = x", "constraint = x20=1", "alphabet = 0,1\nconstraint = x1=2"] {
            assert!(ExperimentSpec::parse_config(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn json_export_round_trips() {
        let s = preset("fig6").unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
        assert_ne!(preset("fig1").unwrap().hash(), s.hash());
    }

    #[test]
    fn std_only_with_two_repetitions() {
        let labels = vec!["1".to_string()];
        let one = summarize(&labels, &[vec![(0.5, 0.1)]]);
        assert_eq!(one[0].std, None);
        assert!((one[0].stderr - 0.1).abs() < 1e-15);
        let two = summarize(&labels, &[vec![(0.5, 0.0)], vec![(0.7, 0.0)]]);
        assert!((two[0].mean - 0.6).abs() < 1e-15);
        assert!((two[0].std.unwrap() - 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((loglog_slope(&xs, &ys) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn small_run_is_reproducible_and_writes_outputs() {
        let spec = ExperimentSpec { width: 64, samples: 512, repetitions: 2, max_iters: 300, d: 4, ..ExperimentSpec::default() };
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.table.write_csv(&mut ca).unwrap();
        b.table.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.table.seeds.len(), 2);
        let dir = tempfile::tempdir().unwrap();
        a.write_to(dir.path()).unwrap();
        for f in ["results.csv", "spec.json", "run.json", "trace.csv", "coef_trace.csv", "coefficients.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(text.starts_with("monomial,mean,std,stderr\n1,"));
        let reloaded = ExperimentSpec::load(&dir.path().join("spec.json")).unwrap();
        assert_eq!(reloaded, spec);
    }

    #[test]
    fn failing_stage_is_named() {
        let spec = ExperimentSpec { method: Method::LimitPredictor, kernel: KernelKind::MonteCarlo, kernel_samples: 10, d: 3, ..ExperimentSpec::default() };
        let err = run_experiment(&spec).unwrap_err();
        assert!(matches!(&err, Error::Stage { stage: "kernel", source } if matches!(**source, Error::BudgetTooSmall { .. })), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unity_check_rejects_small_budgets_and_bad_lists() {
        assert!(matches!(unity_check(4, &[8, 16], 3, 10, 0), Err(Error::BudgetTooSmall { .. })));
        assert!(unity_check(4, &[16, 8], 3, 2000, 0).is_err());
        assert!(unity_check(1, &[8, 16], 3, 2000, 0).is_err());
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let s = svg_line_chart("t<1>", "x", "y", &[("a".into(), vec![(0.0, 1.0), (1.0, 2.0)]), ("b".into(), vec![(0.0, 0.0)])]);
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("t&lt;1&gt;"));
    }
}
