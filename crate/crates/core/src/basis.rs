//! Multi-indices, orthonormal Hermite polynomials, grid monomials and
//! roots-of-unity characters, with coefficient extraction in each basis.
//!
//! `Hₜ` is the orthonormal probabilist Hermite polynomial, so `H₂(x) = (x²−1)/√2`
//! and `χ_T(x) = ∏ H_{tᵢ}(xᵢ)`. Index sets are listed in graded order: by total
//! degree, then lexicographically with larger leading exponents first.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Matrix};
use crate::quadrature::{binomial, factorial, GaussHermite};
use crate::rng;

#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zeros(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    /// `e_i` (zero-based `i`).
    pub fn unit(d: usize, i: usize) -> Self {
        let mut e = vec![0; d];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn from_pairs(d: usize, pairs: &[(usize, u32)]) -> Self {
        let mut e = vec![0; d];
        for &(i, k) in pairs {
            e[i] += k;
        }
        MultiIndex(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0).collect()
    }

    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&t| factorial(t)).product()
    }

    pub fn with(&self, i: usize, value: u32) -> Self {
        let mut e = self.0.clone();
        e[i] = value;
        MultiIndex(e)
    }

    pub fn add(&self, other: &MultiIndex) -> Self {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `"1"`, `"x1"`, `"x1^2*x3"`; coordinates are one-based.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0)
            .map(|(i, &t)| if t == 1 { format!("x{}", i + 1) } else { format!("x{}^{}", i + 1, t) })
            .collect();
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }

    /// Inverse of [`MultiIndex::label`].
    pub fn parse_label(label: &str, d: usize) -> Result<Self> {
        let poly = Polynomial::parse(label, d)?;
        match poly.terms.iter().next() {
            Some((t, &c)) if poly.terms.len() == 1 && c == 1.0 => Ok(t.clone()),
            _ => Err(invalid(format!("`{label}` is not a single monomial"))),
        }
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// All `T ∈ ℕ^d` with `|T| ≤ p`, in graded order.
pub fn enumerate_indices(d: usize, p: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    for k in 0..=p {
        compositions(&mut cur, 0, k, &mut out);
    }
    out
}

fn compositions(cur: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.clone()));
        cur[pos] = 0;
        return;
    }
    if cur.is_empty() {
        if remaining == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    for t in (0..=remaining).rev() {
        cur[pos] = t;
        compositions(cur, pos + 1, remaining - t, out);
    }
    cur[pos] = 0;
}

/// Number of multi-indices in `ℕ^d_{≤p}`.
pub fn index_count(d: usize, p: u32) -> usize {
    binomial(d as u32 + p, p).round() as usize
}

/// An ordered index set with position lookup and sparse supports.
#[derive(Clone, Debug)]
pub struct IndexSet {
    indices: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
    supports: Vec<Vec<(usize, u32)>>,
    d: usize,
    max_degree: u32,
}

impl IndexSet {
    pub fn from_indices(d: usize, indices: Vec<MultiIndex>) -> Result<Self> {
        let mut position = HashMap::with_capacity(indices.len());
        for (k, t) in indices.iter().enumerate() {
            if t.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: t.dim() });
            }
            if position.insert(t.clone(), k).is_some() {
                return Err(invalid(format!("duplicate index {t}")));
            }
        }
        let supports = indices
            .iter()
            .map(|t| t.exponents().iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, e)).collect())
            .collect();
        let max_degree = indices.iter().map(|t| t.total_degree()).max().unwrap_or(0);
        Ok(IndexSet { indices, position, supports, d, max_degree })
    }

    /// `ℕ^d_{≤p}` in graded order.
    pub fn graded(d: usize, p: u32) -> Self {
        Self::from_indices(d, enumerate_indices(d, p)).expect("graded enumeration is duplicate free")
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, k: usize) -> &MultiIndex {
        &self.indices[k]
    }

    pub fn position(&self, t: &MultiIndex) -> Option<usize> {
        self.position.get(t).copied()
    }

    pub fn support(&self, k: usize) -> &[(usize, u32)] {
        &self.supports[k]
    }

    /// Writes `χ_T(x)` for every `T` into `out`.
    pub fn eval_chi(&self, x: &[f64], table: &mut Vec<f64>, out: &mut [f64]) {
        let stride = self.max_degree as usize + 1;
        table.resize(self.d * stride, 0.0);
        for (i, &xi) in x.iter().enumerate() {
            hermite_fill(xi, &mut table[i * stride..(i + 1) * stride]);
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.supports[k]
                .iter()
                .map(|&(i, e)| table[i * stride + e as usize])
                .product();
        }
    }
}

/// Orthonormal probabilist Hermite polynomial `Hₜ(x)`.
pub fn hermite_eval(t: u32, x: f64) -> f64 {
    let mut buf = vec![0.0; t as usize + 1];
    hermite_fill(x, &mut buf);
    buf[t as usize]
}

/// Fills `out[k] = H_k(x)` for `k < out.len()`.
pub fn hermite_fill(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for t in 1..out.len().saturating_sub(1) {
        let tf = t as f64;
        out[t + 1] = (x * out[t] - tf.sqrt() * out[t - 1]) / (tf + 1.0).sqrt();
    }
}

/// Unnormalized probabilist Hermite polynomial `Heₜ(x)`.
pub fn hermite_he(t: u32, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if t == 0 {
        return a;
    }
    for k in 1..t {
        let c = x * b - k as f64 * a;
        a = b;
        b = c;
    }
    b
}

pub fn chi_eval(t: &MultiIndex, x: &[f64]) -> Result<f64> {
    if t.dim() != x.len() {
        return Err(Error::DimensionMismatch { expected: t.dim(), got: x.len() });
    }
    Ok(t.exponents().iter().zip(x).map(|(&e, &xi)| hermite_eval(e, xi)).product())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BasisTag {
    Hermite { d: usize, p: u32 },
    GridMonomial { alphabet: Vec<f64>, d: usize },
    UnityFourier { n: u32, d: usize },
}

impl BasisTag {
    pub fn dim(&self) -> usize {
        match self {
            BasisTag::Hermite { d, .. } | BasisTag::GridMonomial { d, .. } | BasisTag::UnityFourier { d, .. } => *d,
        }
    }

    fn admits(&self, t: &MultiIndex) -> bool {
        if t.dim() != self.dim() {
            return false;
        }
        match self {
            BasisTag::Hermite { p, .. } => t.total_degree() <= *p,
            BasisTag::GridMonomial { alphabet, .. } => t.exponents().iter().all(|&e| (e as usize) < alphabet.len()),
            BasisTag::UnityFourier { n, .. } => t.exponents().iter().all(|&e| e < *n),
        }
    }
}

/// Coefficients of a function in a declared basis; absent keys are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffVector<S = f64> {
    basis: BasisTag,
    entries: BTreeMap<MultiIndex, S>,
}

impl<S: Copy + Default + PartialEq> CoeffVector<S> {
    pub fn new(basis: BasisTag) -> Self {
        CoeffVector { basis, entries: BTreeMap::new() }
    }

    pub fn basis(&self) -> &BasisTag {
        &self.basis
    }

    pub fn insert(&mut self, t: MultiIndex, value: S) -> Result<()> {
        if !self.basis.admits(&t) {
            return Err(invalid(format!("index {t} violates the caps of {:?}", self.basis)));
        }
        self.entries.insert(t, value);
        Ok(())
    }

    pub fn get(&self, t: &MultiIndex) -> S {
        self.entries.get(t).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &S)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<S: Copy + Default + PartialEq + std::ops::AddAssign> CoeffVector<S> {
    pub fn add_to(&mut self, t: MultiIndex, value: S) -> Result<()> {
        let cur = self.get(&t);
        let mut v = cur;
        v += value;
        self.insert(t, v)
    }
}

impl CoeffVector<f64> {
    /// Hermite coefficients given as a dense vector over an index set.
    pub fn from_dense(index: &IndexSet, values: &[f64]) -> Self {
        Self::from_dense_tagged(BasisTag::Hermite { d: index.dim(), p: index.max_degree() }, index, values)
    }

    /// Like [`CoeffVector::from_dense`] under an explicit basis; `index` must fit its caps.
    pub fn from_dense_tagged(basis: BasisTag, index: &IndexSet, values: &[f64]) -> Self {
        let mut cv = CoeffVector::new(basis);
        for (t, &v) in index.indices().iter().zip(values) {
            if v != 0.0 {
                cv.entries.insert(t.clone(), v);
            }
        }
        cv
    }

    /// Dense vector over `index`; entries outside the set are dropped.
    pub fn to_dense(&self, index: &IndexSet) -> Vec<f64> {
        let mut out = vec![0.0; index.len()];
        for (t, &v) in &self.entries {
            if let Some(k) = index.position(t) {
                out[k] = v;
            }
        }
        out
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.iter().filter(|(_, &v)| v != 0.0).map(|(t, _)| t.total_degree()).max().unwrap_or(0)
    }

    /// Evaluates a Hermite series at `x`.
    pub fn eval_hermite(&self, x: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|(t, &c)| c * t.exponents().iter().zip(x).map(|(&e, &xi)| hermite_eval(e, xi)).product::<f64>())
            .sum()
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.entries.values_mut() {
            *v *= s;
        }
    }

    /// Re-tags a Hermite vector with a larger degree cap.
    pub fn with_degree_cap(mut self, p: u32) -> Result<Self> {
        if let BasisTag::Hermite { d, .. } = self.basis {
            if self.max_degree() > p {
                return Err(invalid("coefficients exceed the requested degree cap"));
            }
            self.entries.retain(|t, _| t.total_degree() <= p);
            self.basis = BasisTag::Hermite { d, p };
            Ok(self)
        } else {
            Err(invalid("degree caps apply to Hermite vectors only"))
        }
    }
}

/// A coefficient vector with per-entry standard errors.
#[derive(Clone, Debug)]
pub struct Estimate<S = f64> {
    pub coeffs: CoeffVector<S>,
    pub stderr: BTreeMap<MultiIndex, f64>,
}

impl<S: Copy + Default + PartialEq> Estimate<S> {
    pub fn stderr_of(&self, t: &MultiIndex) -> f64 {
        self.stderr.get(t).copied().unwrap_or(0.0)
    }
}

/// `x^n = Σₖ n!/(k! 2ᵏ (n−2k)!) He_{n−2k}(x)` with `He_m = √m! H_m`.
fn univariate_monomial_to_hermite(n: u32) -> Vec<(u32, f64)> {
    (0..=n / 2)
        .map(|k| {
            let m = n - 2 * k;
            let c = factorial(n) / (factorial(k) * 2f64.powi(k as i32) * factorial(m)) * factorial(m).sqrt();
            (m, c)
        })
        .collect()
}

/// Exact Hermite expansion of the monomial `x^T`.
pub fn monomial_to_hermite(t: &MultiIndex) -> CoeffVector<f64> {
    let d = t.dim();
    let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![0; d], 1.0)];
    for (i, &e) in t.exponents().iter().enumerate() {
        if e == 0 {
            continue;
        }
        let uni = univariate_monomial_to_hermite(e);
        terms = terms
            .into_iter()
            .flat_map(|(ex, c)| {
                uni.iter().map(move |&(m, cu)| {
                    let mut ex = ex.clone();
                    ex[i] = m;
                    (ex, c * cu)
                })
            })
            .collect();
    }
    let mut cv = CoeffVector::new(BasisTag::Hermite { d, p: t.total_degree() });
    for (ex, c) in terms {
        cv.entries.insert(MultiIndex(ex), c);
    }
    cv
}

/// A real polynomial in the monomial basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub d: usize,
    pub terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn constant(d: usize, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(MultiIndex::zeros(d), c);
        Polynomial { d, terms }
    }

    /// Parses sums of terms such as `x2^2 + x2 + 1`, `x1*x2`, `-0.5*x1^3`.
    pub fn parse(src: &str, d: usize) -> Result<Self> {
        let cleaned: String = src.chars().filter(|c| !c.is_whitespace()).collect();
        if cleaned.is_empty() {
            return Err(invalid("empty polynomial"));
        }
        let mut terms: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        let mut chunks = Vec::new();
        let mut cur = String::new();
        let bytes: Vec<char> = cleaned.chars().collect();
        for (k, &c) in bytes.iter().enumerate() {
            let after_exp = k > 0 && (bytes[k - 1] == 'e' || bytes[k - 1] == 'E' || bytes[k - 1] == '^');
            if (c == '+' || c == '-') && k > 0 && !after_exp {
                chunks.push(std::mem::take(&mut cur));
            }
            cur.push(c);
        }
        chunks.push(cur);
        for chunk in chunks {
            let (sign, body) = match chunk.strip_prefix('-') {
                Some(rest) => (-1.0, rest),
                None => (1.0, chunk.strip_prefix('+').unwrap_or(&chunk)),
            };
            if body.is_empty() {
                return Err(invalid(format!("malformed polynomial `{src}`")));
            }
            let mut coef = sign;
            let mut exps = vec![0u32; d];
            for factor in body.split('*') {
                if let Some(var) = factor.strip_prefix('x') {
                    let (i, e) = match var.split_once('^') {
                        Some((i, e)) => (i, e.parse::<u32>().map_err(|_| invalid(format!("bad exponent in `{factor}`")))?),
                        None => (var, 1),
                    };
                    let i: usize = i.parse().map_err(|_| invalid(format!("bad variable `{factor}`")))?;
                    if i == 0 || i > d {
                        return Err(invalid(format!("variable x{i} outside 1..={d}")));
                    }
                    exps[i - 1] += e;
                } else {
                    coef *= factor.parse::<f64>().map_err(|_| invalid(format!("bad factor `{factor}`")))?;
                }
            }
            *terms.entry(MultiIndex(exps)).or_insert(0.0) += coef;
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial { d, terms })
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|t| t.total_degree()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(t, c)| c * t.exponents().iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product::<f64>())
            .sum()
    }

    /// Variables with a nonzero exponent in some term.
    pub fn active_vars(&self) -> Vec<usize> {
        (0..self.d).filter(|&i| self.terms.keys().any(|t| t.exponents()[i] > 0)).collect()
    }

    pub fn to_hermite(&self) -> CoeffVector<f64> {
        let mut cv = CoeffVector::new(BasisTag::Hermite { d: self.d, p: self.degree() });
        for (t, &c) in &self.terms {
            for (s, &h) in monomial_to_hermite(t).iter() {
                cv.add_to(s.clone(), c * h).expect("monomial expansion respects the cap");
            }
        }
        cv.entries.retain(|_, v| v.abs() > 1e-15);
        cv
    }

    pub fn label(&self) -> String {
        let mut s = String::new();
        for (k, (t, &c)) in self.terms.iter().rev().enumerate() {
            let mono = t.label();
            let body = if mono == "1" {
                format!("{}", c.abs())
            } else if c.abs() == 1.0 {
                mono
            } else {
                format!("{}*{}", c.abs(), mono)
            };
            if k == 0 {
                if c < 0.0 {
                    s.push('-');
                }
            } else {
                s.push_str(if c < 0.0 { " - " } else { " + " });
            }
            s.push_str(&body);
        }
        if s.is_empty() {
            "0".into()
        } else {
            s
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HermiteMethod {
    /// Tensor Gauss–Hermite over `active_vars` (union of target supports when
    /// `None`); `f` is taken to depend on those variables only.
    TensorQuadrature { nodes: usize, active_vars: Option<Vec<usize>> },
    MonteCarlo { budget: usize },
}

pub const MIN_BUDGET: usize = 100;
pub const MAX_QUADRATURE_VARS: usize = 4;
pub(crate) const CHUNK: usize = 4096;

/// Hermite coefficients `E[f(Z) χ_T(Z)]` of a black-box function.
pub fn estimate_hermite_coeffs<F>(f: F, d: usize, targets: &[MultiIndex], method: &HermiteMethod, seed: u64) -> Result<Estimate<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    for t in targets {
        if t.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: t.dim() });
        }
    }
    let p = targets.iter().map(|t| t.total_degree()).max().unwrap_or(0);
    let index = IndexSet::from_indices(d, targets.to_vec())?;
    let mut coeffs = CoeffVector::new(BasisTag::Hermite { d, p });
    let mut stderr = BTreeMap::new();
    match method {
        HermiteMethod::TensorQuadrature { nodes, active_vars } => {
            let vars = match active_vars {
                Some(v) => v.clone(),
                None => {
                    let mut v: Vec<usize> = targets.iter().flat_map(|t| t.support()).collect();
                    v.sort_unstable();
                    v.dedup();
                    v
                }
            };
            if vars.len() > MAX_QUADRATURE_VARS {
                return Err(Error::TooManyActiveVariables { got: vars.len(), max: MAX_QUADRATURE_VARS });
            }
            if let Some(&bad) = vars.iter().find(|&&i| i >= d) {
                return Err(invalid(format!("active variable {bad} outside dimension {d}")));
            }
            for t in targets {
                if t.support().iter().any(|i| !vars.contains(i)) {
                    return Err(invalid(format!("target {t} involves a variable outside the quadrature set")));
                }
            }
            let q = GaussHermite::new((*nodes).max(1));
            let m = q.nodes.len();
            let total = m.pow(vars.len() as u32);
            let mut sums = vec![0.0; index.len()];
            let mut x = vec![0.0; d];
            let mut chi = vec![0.0; index.len()];
            let mut table = Vec::new();
            for flat in 0..total {
                let mut rem = flat;
                let mut w = 1.0;
                for &v in &vars {
                    let k = rem % m;
                    rem /= m;
                    x[v] = q.nodes[k];
                    w *= q.weights[k];
                }
                let fx = f(&x);
                index.eval_chi(&x, &mut table, &mut chi);
                for (s, c) in sums.iter_mut().zip(&chi) {
                    *s += w * fx * c;
                }
            }
            for (k, t) in index.indices().iter().enumerate() {
                coeffs.insert(t.clone(), sums[k])?;
                stderr.insert(t.clone(), 0.0);
            }
        }
        HermiteMethod::MonteCarlo { budget } => {
            if *budget < MIN_BUDGET {
                return Err(Error::BudgetTooSmall { budget: *budget, minimum: MIN_BUDGET });
            }
            let (mean, se) = monte_carlo_moments(*budget, seed, index.len(), |rng, out| {
                let mut x = vec![0.0; d];
                rng::fill_normal(rng, &mut x, 1.0);
                let fx = f(&x);
                let mut table = Vec::new();
                index.eval_chi(&x, &mut table, out);
                for o in out.iter_mut() {
                    *o *= fx;
                }
            });
            for (k, t) in index.indices().iter().enumerate() {
                coeffs.insert(t.clone(), mean[k])?;
                stderr.insert(t.clone(), se[k]);
            }
        }
    }
    Ok(Estimate { coeffs, stderr })
}

/// Sample means and standard errors of a vector statistic drawn `budget` times
/// from seed-derived chunk streams; the result does not depend on threading.
pub(crate) fn monte_carlo_moments<G>(budget: usize, seed: u64, width: usize, sample: G) -> (Vec<f64>, Vec<f64>)
where
    G: Fn(&mut rng::Rng, &mut [f64]) + Sync,
{
    let chunks = budget.div_ceil(CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, c as u64);
            let count = CHUNK.min(budget - c * CHUNK);
            let mut s1 = vec![0.0; width];
            let mut s2 = vec![0.0; width];
            let mut buf = vec![0.0; width];
            for _ in 0..count {
                sample(&mut r, &mut buf);
                for k in 0..width {
                    s1[k] += buf[k];
                    s2[k] += buf[k] * buf[k];
                }
            }
            (s1, s2)
        })
        .collect();
    let mut s1 = vec![0.0; width];
    let mut s2 = vec![0.0; width];
    for (a, b) in &partials {
        for k in 0..width {
            s1[k] += a[k];
            s2[k] += b[k];
        }
    }
    let n = budget as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let se = s2
        .iter()
        .zip(&mean)
        .map(|(s, m)| {
            let var = ((s / n - m * m) * n / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    (mean, se)
}

/// Monomials `∏ x_i^{t_i}` in the active variables with per-variable degree
/// `≤ |𝒳|−1`, with their exact Gram matrix under `Unif(𝒳^d)`.
#[derive(Clone, Debug)]
pub struct GridBasis {
    pub alphabet: Vec<f64>,
    pub d: usize,
    pub active_vars: Vec<usize>,
    pub monomials: Vec<MultiIndex>,
    pub gram: Matrix,
}

pub const MAX_GRID_ACTIVE: usize = 3;

impl GridBasis {
    pub fn new(alphabet: &[f64], d: usize, active_vars: &[usize]) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(invalid("empty alphabet"));
        }
        let mut sorted = alphabet.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite alphabet"));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("alphabet has repeated symbols"));
        }
        if active_vars.len() > MAX_GRID_ACTIVE {
            return Err(Error::TooManyActiveVariables { got: active_vars.len(), max: MAX_GRID_ACTIVE });
        }
        if let Some(&v) = active_vars.iter().find(|&&v| v >= d) {
            return Err(invalid(format!("active variable {v} outside dimension {d}")));
        }
        let m = alphabet.len() as u32;
        let mut monomials = Vec::new();
        let count = (m as usize).pow(active_vars.len() as u32);
        for flat in 0..count {
            let mut rem = flat;
            let mut e = vec![0u32; d];
            for &v in active_vars {
                e[v] = (rem % m as usize) as u32;
                rem /= m as usize;
            }
            monomials.push(MultiIndex(e));
        }
        monomials.sort();
        let power_sum = |k: u32| alphabet.iter().map(|a| a.powi(k as i32)).sum::<f64>() / alphabet.len() as f64;
        let gram = Matrix::from_fn(monomials.len(), monomials.len(), |i, j| {
            active_vars
                .iter()
                .map(|&v| power_sum(monomials[i].exponents()[v] + monomials[j].exponents()[v]))
                .product()
        });
        Ok(GridBasis { alphabet: alphabet.to_vec(), d, active_vars: active_vars.to_vec(), monomials, gram })
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.monomials) {
            *o = self.active_vars.iter().map(|&v| x[v].powi(t.exponents()[v] as i32)).product();
        }
    }
}

/// Coefficients of the marginal of `f` in the active variables over `Unif(𝒳^d)`.
///
/// When the whole grid has at most `budget` points it is summed exactly.
pub fn grid_coeffs<F>(f: F, d: usize, active_vars: &[usize], alphabet: &[f64], budget: usize, seed: u64) -> Result<Estimate<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if budget < MIN_BUDGET {
        return Err(Error::BudgetTooSmall { budget, minimum: MIN_BUDGET });
    }
    let basis = GridBasis::new(alphabet, d, active_vars)?;
    let k = basis.monomials.len();
    let ginv = linalg::spd_inverse(basis.gram.as_ref())?;
    let m = alphabet.len();
    let grid_size = (m as f64).powi(d as i32);
    let transform = |x: &[f64], out: &mut [f64]| {
        let mut v = vec![0.0; k];
        basis.eval(x, &mut v);
        let fx = f(x);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..k).map(|j| ginv[(i, j)] * v[j]).sum::<f64>() * fx;
        }
    };
    let (mean, se) = if grid_size <= budget as f64 {
        let total = m.pow(d as u32);
        let mut sums = vec![0.0; k];
        let mut x = vec![0.0; d];
        let mut buf = vec![0.0; k];
        for flat in 0..total {
            let mut rem = flat;
            for xi in x.iter_mut() {
                *xi = alphabet[rem % m];
                rem /= m;
            }
            transform(&x, &mut buf);
            for (s, b) in sums.iter_mut().zip(&buf) {
                *s += b;
            }
        }
        (sums.iter().map(|s| s / total as f64).collect(), vec![0.0; k])
    } else {
        monte_carlo_moments(budget, seed, k, |r, out| {
            use rand::Rng;
            let x: Vec<f64> = (0..d).map(|_| alphabet[r.random_range(0..m)]).collect();
            transform(&x, out);
        })
    };
    let mut coeffs = CoeffVector::new(BasisTag::GridMonomial { alphabet: alphabet.to_vec(), d });
    let mut stderr = BTreeMap::new();
    for (i, t) in basis.monomials.iter().enumerate() {
        coeffs.insert(t.clone(), mean[i])?;
        stderr.insert(t.clone(), se[i]);
    }
    Ok(Estimate { coeffs, stderr })
}

/// `ω^k` with `ω = e^{2πi/n}`.
pub fn root_of_unity(n: u32, k: i64) -> Complex64 {
    let k = k.rem_euclid(n as i64);
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)
}

pub const UNITY_EXACT_MAX_POINTS: usize = 4096;

/// Discrete Fourier coefficients `E[h(x) x̄^j]` over `Unif(𝕌ₙ^d)`.
pub fn unity_dft<F>(h: F, n: u32, d: usize, targets: &[MultiIndex], budget: usize, seed: u64) -> Result<Estimate<Complex64>>
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    if n < 2 {
        return Err(invalid("roots of unity need order at least 2"));
    }
    for t in targets {
        if t.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: t.dim() });
        }
        if let Some(&e) = t.exponents().iter().find(|&&e| e >= n) {
            return Err(Error::ExponentOutOfRange { exponent: e, order: n });
        }
    }
    let roots: Vec<Complex64> = (0..n).map(|k| root_of_unity(n, k as i64)).collect();
    let character = |ks: &[usize], t: &MultiIndex| -> Complex64 {
        let phase: i64 = ks.iter().zip(t.exponents()).map(|(&k, &e)| k as i64 * e as i64).sum();
        roots[(-phase).rem_euclid(n as i64) as usize]
    };
    let nt = targets.len();
    let grid = (n as usize).checked_pow(d as u32);
    let exact = d <= 2 && grid.is_some_and(|g| g <= UNITY_EXACT_MAX_POINTS);
    let (mean, se): (Vec<Complex64>, Vec<f64>) = if exact {
        let total = grid.unwrap_or(1);
        let mut sums = vec![Complex64::new(0.0, 0.0); nt];
        let mut ks = vec![0usize; d];
        let mut x = vec![Complex64::new(0.0, 0.0); d];
        for flat in 0..total {
            let mut rem = flat;
            for i in 0..d {
                ks[i] = rem % n as usize;
                rem /= n as usize;
                x[i] = roots[ks[i]];
            }
            let hx = h(&x);
            for (s, t) in sums.iter_mut().zip(targets) {
                *s += hx * character(&ks, t);
            }
        }
        (sums.iter().map(|s| s / total as f64).collect(), vec![0.0; nt])
    } else {
        if budget < MIN_BUDGET {
            return Err(Error::BudgetTooSmall { budget, minimum: MIN_BUDGET });
        }
        let (m, s) = monte_carlo_moments(budget, seed, 2 * nt, |r, out| {
            use rand::Rng;
            let ks: Vec<usize> = (0..d).map(|_| r.random_range(0..n as usize)).collect();
            let x: Vec<Complex64> = ks.iter().map(|&k| roots[k]).collect();
            let hx = h(&x);
            for (j, t) in targets.iter().enumerate() {
                let v = hx * character(&ks, t);
                out[2 * j] = v.re;
                out[2 * j + 1] = v.im;
            }
        });
        (
            (0..nt).map(|j| Complex64::new(m[2 * j], m[2 * j + 1])).collect(),
            (0..nt).map(|j| (s[2 * j].powi(2) + s[2 * j + 1].powi(2)).sqrt()).collect(),
        )
    };
    let mut coeffs = CoeffVector::new(BasisTag::UnityFourier { n, d });
    let mut stderr = BTreeMap::new();
    for (j, t) in targets.iter().enumerate() {
        coeffs.insert(t.clone(), mean[j])?;
        stderr.insert(t.clone(), se[j]);
    }
    Ok(Estimate { coeffs, stderr })
}
