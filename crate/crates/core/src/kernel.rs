//! The feature second-moment matrix `Φ_{ij} = E[φ̂(T_i) φ̂(T_j)]`, constrained
//! quadratic minimization, limit predictions and min-norm amplitudes.
//!
//! `Φ` is stored block-diagonally: entries outside the blocks are exactly zero.
//! Symbolic kernels use one block per parity class, since entries whose
//! indices differ in parity in some coordinate vanish.

use std::collections::BTreeMap;
use std::io::Write;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{CoeffVector, IndexSet, MultiIndex};
use crate::error::{invalid, Error, Result};
use crate::features::{coefficient_matrix, feature_hermite_coeffs, sample_features, Activation, ComplexActivation, Features, Regime};
use crate::gotu::InterpolatorSpace;
use crate::linalg::{self, Matrix};
use crate::quadrature::{binomial, double_factorial, factorial};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    MonteCarlo { samples: usize, seed: u64 },
    SymbolicExact,
    Prop1ClosedForm,
}

#[derive(Clone, Debug)]
pub struct KernelMatrix {
    index: IndexSet,
    blocks: Vec<Vec<usize>>,
    slot: Vec<(usize, usize)>,
    values: Vec<Matrix>,
    stderr: Option<Vec<Matrix>>,
    provenance: Provenance,
}

impl KernelMatrix {
    /// `blocks` must partition `0..index.len()`; `values[b]` is indexed by block members.
    pub fn from_blocks(index: IndexSet, blocks: Vec<Vec<usize>>, values: Vec<Matrix>, stderr: Option<Vec<Matrix>>, provenance: Provenance) -> Result<Self> {
        let n = index.len();
        let mut slot = vec![(usize::MAX, 0); n];
        for (b, members) in blocks.iter().enumerate() {
            if values[b].nrows() != members.len() || values[b].ncols() != members.len() {
                return Err(Error::DimensionMismatch { expected: members.len(), got: values[b].nrows() });
            }
            for (k, &m) in members.iter().enumerate() {
                if m >= n || slot[m].0 != usize::MAX {
                    return Err(invalid("kernel blocks do not partition the index set"));
                }
                slot[m] = (b, k);
            }
        }
        if slot.iter().any(|s| s.0 == usize::MAX) {
            return Err(invalid("kernel blocks do not cover the index set"));
        }
        Ok(KernelMatrix { index, blocks, slot, values, stderr, provenance })
    }

    pub fn from_dense(index: IndexSet, values: Matrix, stderr: Option<Matrix>, provenance: Provenance) -> Result<Self> {
        let members = (0..index.len()).collect();
        Self::from_blocks(index, vec![members], vec![values], stderr.map(|s| vec![s]), provenance)
    }

    pub fn index(&self) -> &IndexSet {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_values(&self, b: usize) -> &Matrix {
        &self.values[b]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (bi, ki) = self.slot[i];
        let (bj, kj) = self.slot[j];
        if bi == bj {
            self.values[bi][(ki, kj)]
        } else {
            0.0
        }
    }

    pub fn stderr_entry(&self, i: usize, j: usize) -> f64 {
        let (bi, ki) = self.slot[i];
        let (bj, kj) = self.slot[j];
        match &self.stderr {
            Some(s) if bi == bj => s[bi][(ki, kj)],
            _ => 0.0,
        }
    }

    pub fn entry_by_index(&self, a: &MultiIndex, b: &MultiIndex) -> Option<f64> {
        Some(self.entry(self.index.position(a)?, self.index.position(b)?))
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        for (b, members) in self.blocks.iter().enumerate() {
            for (ki, &i) in members.iter().enumerate() {
                for (kj, &j) in members.iter().enumerate() {
                    m[(i, j)] = self.values[b][(ki, kj)];
                }
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        self.values.iter().map(|v| (0..v.nrows()).map(|k| v[(k, k)]).sum::<f64>()).sum()
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for v in &self.values {
            if v.nrows() > 0 {
                lo = lo.min(linalg::sym_eigenvalues(v.as_ref())?[0]);
            }
        }
        Ok(lo)
    }

    /// Rows `(T_i, T_j, value, stderr)` for every stored entry.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row,col,value,stderr")?;
        for (b, members) in self.blocks.iter().enumerate() {
            for (ki, &i) in members.iter().enumerate() {
                for (kj, &j) in members.iter().enumerate() {
                    let se = self.stderr.as_ref().map_or(0.0, |s| s[b][(ki, kj)]);
                    writeln!(out, "{},{},{},{}", self.index.get(i).label(), self.index.get(j).label(), self.values[b][(ki, kj)], se)?;
                }
            }
        }
        Ok(())
    }
}

pub const MIN_KERNEL_SAMPLES: usize = 1000;

/// Entrywise mean of `φ̂ φ̂ᵀ` over `samples` feature draws, with stderr.
pub fn phi_monte_carlo(regime: &Regime, activation: &Activation, p: u32, samples: usize, seed: u64) -> Result<KernelMatrix> {
    regime.validate()?;
    if samples < MIN_KERNEL_SAMPLES {
        return Err(Error::BudgetTooSmall { budget: samples, minimum: MIN_KERNEL_SAMPLES });
    }
    let d = regime.dim();
    let index = IndexSet::graded(d, p);
    let k = index.len();
    let sd = regime.variance().sqrt();
    let chunk = crate::basis::CHUNK;
    let mut s1 = Mat::zeros(k, k);
    let mut s2 = Mat::zeros(k, k);
    for c in 0..samples.div_ceil(chunk) {
        let count = chunk.min(samples - c * chunk);
        let mut r = rng::stream(seed, c as u64);
        let mut draws = vec![0.0; count * (d + 1)];
        rng::fill_normal(&mut r, &mut draws, sd);
        let rows: Vec<Vec<f64>> = draws
            .par_chunks(d + 1)
            .map(|wb| {
                let mut out = vec![0.0; k];
                feature_hermite_coeffs(&wb[..d], wb[d], activation, &index, &mut out);
                out
            })
            .collect();
        let x = Mat::from_fn(count, k, |s, j| rows[s][j]);
        let xsq = Mat::from_fn(count, k, |s, j| rows[s][j] * rows[s][j]);
        linalg::gemm_add(&mut s1, x.transpose(), x.as_ref(), 1.0);
        linalg::gemm_add(&mut s2, xsq.transpose(), xsq.as_ref(), 1.0);
    }
    let m = samples as f64;
    let mean = Mat::from_fn(k, k, |i, j| s1[(i, j)] / m);
    let se = Mat::from_fn(k, k, |i, j| {
        let mu = mean[(i, j)];
        let var = ((s2[(i, j)] / m - mu * mu) * m / (m - 1.0)).max(0.0);
        (var / m).sqrt()
    });
    KernelMatrix::from_dense(index, mean, Some(se), Provenance::MonteCarlo { samples, seed })
}

/// Polynomial in `(b, r)` stored as `(b power, r power) → coefficient`.
type BiPoly = BTreeMap<(u32, u32), f64>;

/// `E[σ^{(t)}(b + ‖w‖Z) | w, b]` as a polynomial in `b` and `r = ‖w‖²`.
fn derivative_mean_poly(coeffs: &[f64], t: u32) -> BiPoly {
    let mut out = BiPoly::new();
    for (k, &ck) in coeffs.iter().enumerate() {
        let k = k as u32;
        if k < t || ck == 0.0 {
            continue;
        }
        let m = k - t;
        let lead = ck * factorial(k) / factorial(m);
        for i in (0..=m).step_by(2) {
            *out.entry((m - i, i / 2)).or_insert(0.0) += lead * binomial(m, i) * double_factorial(i as i64 - 1);
        }
    }
    out
}

fn bipoly_mul(a: &BiPoly, b: &BiPoly) -> BiPoly {
    let mut out = BiPoly::new();
    for (&(p1, q1), &c1) in a {
        for (&(p2, q2), &c2) in b {
            *out.entry((p1 + p2, q1 + q2)).or_insert(0.0) += c1 * c2;
        }
    }
    out
}

/// `E[Xᵏ]` for `X ~ N(0, v)`.
fn normal_moment(k: u32, v: f64) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        v.powi(k as i32 / 2) * double_factorial(k as i64 - 1)
    }
}

/// `E[w^γ ‖w‖^{2m}]` for `w ~ N(0, v I_d)` and even `γ`.
fn weight_moment(gamma: &[u32], d: usize, m: u32, v: f64) -> f64 {
    let rest = (d - gamma.len()) as f64;
    let mut total = 0.0;
    let mut alpha = vec![0u32; gamma.len()];
    fn rec(pos: usize, left: u32, alpha: &mut Vec<u32>, gamma: &[u32], rest: f64, m: u32, v: f64, total: &mut f64) {
        if pos == gamma.len() {
            let beta = left;
            let mut term = factorial(m) / factorial(beta);
            for (a, g) in alpha.iter().zip(gamma) {
                term *= normal_moment(g + 2 * a, v) / factorial(*a);
            }
            let chi: f64 = (0..beta).map(|l| rest + 2.0 * l as f64).product();
            *total += term * v.powi(beta as i32) * chi;
            return;
        }
        for a in 0..=left {
            alpha[pos] = a;
            rec(pos + 1, left - a, alpha, gamma, rest, m, v, total);
        }
        alpha[pos] = 0;
    }
    rec(0, m, &mut alpha, gamma, rest, m, v, &mut total);
    total
}

pub const MAX_SYMBOLIC_DEGREE: u32 = 4;
pub const MAX_SYMBOLIC_DIM: usize = 32;

/// Exact `Φ` for polynomial activations from closed-form Gaussian moments.
pub fn phi_symbolic(regime: &Regime, activation: &Activation, p: u32) -> Result<KernelMatrix> {
    regime.validate()?;
    let coeffs = activation.polynomial_coeffs().ok_or(Error::NonPolynomialActivation)?;
    let d = regime.dim();
    if p > MAX_SYMBOLIC_DEGREE || d > MAX_SYMBOLIC_DIM {
        return Err(Error::UnsupportedDimensions(format!("symbolic kernels need p ≤ {MAX_SYMBOLIC_DEGREE} and d ≤ {MAX_SYMBOLIC_DIM}, got p={p}, d={d}")));
    }
    let v = regime.variance();
    let index = IndexSet::graded(d, p);
    let polys: Vec<BiPoly> = (0..=p).map(|t| derivative_mean_poly(coeffs, t)).collect();
    let mut products = BTreeMap::new();
    for t in 0..=p {
        for u in t..=p {
            products.insert((t, u), bipoly_mul(&polys[t as usize], &polys[u as usize]));
        }
    }
    let mut classes: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
    for (k, t) in index.indices().iter().enumerate() {
        classes.entry(t.exponents().iter().map(|e| e % 2).collect()).or_default().push(k);
    }
    let mut blocks: Vec<Vec<usize>> = classes.into_values().collect();
    blocks.sort_by_key(|b| b[0]);
    let values: Vec<Matrix> = blocks
        .par_iter()
        .map(|members| {
            let n = members.len();
            let mut m = Mat::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let (ta, tb) = (index.get(members[a]), index.get(members[b]));
                    let gamma: Vec<u32> = ta.add(tb).exponents().iter().copied().filter(|&e| e > 0).collect();
                    let (da, db) = (ta.total_degree(), tb.total_degree());
                    let prod = &products[&(da.min(db), da.max(db))];
                    let mut val = 0.0;
                    for (&(bp, rp), &c) in prod {
                        let eb = normal_moment(bp, v);
                        if eb != 0.0 {
                            val += c * eb * weight_moment(&gamma, d, rp, v);
                        }
                    }
                    val /= (ta.factorial() * tb.factorial()).sqrt();
                    m[(a, b)] = val;
                    m[(b, a)] = val;
                }
            }
            m
        })
        .collect();
    KernelMatrix::from_blocks(index, blocks, values, None, Provenance::SymbolicExact)
}

/// Closed-form `Φ` for `σ = (1+x)²` in the sparse regime over `ℕ^d_{≤2}`.
pub fn phi_prop1(d: usize) -> Result<KernelMatrix> {
    if d < 2 {
        return Err(invalid("closed form needs d ≥ 2"));
    }
    let df = d as f64;
    let index = IndexSet::graded(d, 2);
    let n = index.len();
    let mut dense = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (index.get(i), index.get(j));
            dense[(i, j)] = prop1_entry(a, b, df);
        }
    }
    let mut k = KernelMatrix::from_dense(index, dense, None, Provenance::Prop1ClosedForm)?;
    k.provenance = Provenance::Prop1ClosedForm;
    Ok(k)
}

fn prop1_entry(a: &MultiIndex, b: &MultiIndex, d: f64) -> f64 {
    let kind = |t: &MultiIndex| -> (u32, Vec<(usize, u32)>) {
        (t.total_degree(), t.exponents().iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, e)).collect())
    };
    let (da, sa) = kind(a);
    let (db, sb) = kind(b);
    let s2 = 2f64.sqrt();
    let is_square = |s: &[(usize, u32)]| s.len() == 1 && s[0].1 == 2;
    match (da, db) {
        (0, 0) => 4.0 + 10.0 / d + 3.0 / (d * d),
        (1, 1) if sa == sb => 4.0 * (1.0 / d + 1.0 / (d * d)),
        (2, 2) if sa == sb && is_square(&sa) => 6.0 / (d * d),
        (2, 2) if sa == sb => 4.0 / (d * d),
        (2, 2) if is_square(&sa) && is_square(&sb) => 2.0 / (d * d),
        (2, 0) if is_square(&sa) => s2 * (2.0 / d + 3.0 / (d * d)),
        (0, 2) if is_square(&sb) => s2 * (2.0 / d + 3.0 / (d * d)),
        _ => 0.0,
    }
}

/// Entries of `Φ⁻¹` on the block spanned by `{2eᵢ} ∪ {0}`:
/// `x` on the `2eᵢ` diagonal, `y` between `2eᵢ` and `2eⱼ`, `z` between `2eᵢ`
/// and `0`, `t` at `0`. Determinants are expanded so no cancellation occurs.
pub fn prop1_inverse_block(d: usize) -> (f64, f64, f64, f64) {
    let d = d as f64;
    let d2 = d * d;
    let a = 2.0 * (d + 2.0) / d2;
    let bcoef = 2f64.sqrt() * (2.0 * d + 3.0) / d2;
    let det = (12.0 * d2 + 28.0 * d + 12.0) / (d2 * d2);
    let z = -bcoef / det;
    let t = a / det;
    let gamma = bcoef;
    let alpha = 6.0 / d2;
    let beta = 2.0 / d2;
    let diag2 = (2.0 * d + 2.0) / d2;
    let det2 = (8.0 * d + 16.0) / (d2 * d2);
    let r1 = 1.0 - gamma * z;
    let r2 = -gamma * z;
    let x = (r1 * diag2 - (d - 1.0) * beta * r2) / det2;
    let y = (alpha * r2 - beta * r1) / det2;
    (x, y, z, t)
}

/// The limiting quadratic form `ĝᵀΦ⁻¹ĝ` for `σ = (1+x)²`, sparse regime, over degree ≤ 2.
#[derive(Clone, Copy, Debug)]
pub struct Prop1Form {
    pub d: usize,
}

pub fn prop1_quadratic_form(d: usize) -> Result<Prop1Form> {
    if d < 2 {
        return Err(invalid("the quadratic form needs d ≥ 2"));
    }
    Ok(Prop1Form { d })
}

impl Prop1Form {
    fn parts(&self, g: &CoeffVector<f64>) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let d = self.d;
        let sq: Vec<f64> = (0..d).map(|i| g.get(&MultiIndex::from_pairs(d, &[(i, 2)]))).collect();
        let lin: Vec<f64> = (0..d).map(|i| g.get(&MultiIndex::unit(d, i))).collect();
        let mut mixed = 0.0;
        for (t, &v) in g.iter() {
            if t.total_degree() == 2 && t.support().len() == 2 {
                mixed += v * v;
            }
        }
        (sq, lin, mixed, g.get(&MultiIndex::zeros(d)))
    }

    /// The leading-order display: `d²/4`, `d/4`, `d/6`, `d/6` and `−(√2/3)d` weights.
    pub fn value(&self, g: &CoeffVector<f64>) -> f64 {
        let df = self.d as f64;
        let (sq, lin, mixed, c) = self.parts(g);
        let s: f64 = sq.iter().sum();
        let s_sq: f64 = sq.iter().map(|v| v * v).sum();
        let pairs = 0.5 * (s * s - s_sq);
        s_sq * df * df / 4.0 + mixed * df * df / 4.0 + lin.iter().map(|v| v * v).sum::<f64>() * df / 4.0 + c * c * df / 6.0 + pairs * df / 6.0
            - s * c * 2f64.sqrt() / 3.0 * df
    }

    /// `ĝᵀΦ⁻¹ĝ` with the exact inverse entries at finite `d`.
    pub fn exact_value(&self, g: &CoeffVector<f64>) -> f64 {
        let df = self.d as f64;
        let (x, y, z, t) = prop1_inverse_block(self.d);
        let (sq, lin, mixed, c) = self.parts(g);
        let s: f64 = sq.iter().sum();
        let s_sq: f64 = sq.iter().map(|v| v * v).sum();
        let inv_lin = 1.0 / (4.0 * (1.0 / df + 1.0 / (df * df)));
        let inv_mixed = df * df / 4.0;
        x * s_sq + y * (s * s - s_sq) + 2.0 * z * s * c + t * c * c + inv_lin * lin.iter().map(|v| v * v).sum::<f64>() + inv_mixed * mixed
    }
}

/// Diagonal `E|φ̂(j)|²` for complex features on `𝕌ₙ^d` with `w, b` circular
/// Gaussian of variance `2/d`, over characters of degree `≤ deg σ < n`.
///
/// Without wrap-around `φ̂(j) = w̄ʲ σ^{(|j|)}(b) / j!`, so off-diagonal
/// entries vanish and `E|φ̂(j)|² = (2/d)^{|j|} E|σ^{(|j|)}(b)|² / j!`.
pub fn phi_unity(n: u32, d: usize, activation: &ComplexActivation) -> Result<KernelMatrix> {
    let p = activation.degree();
    if p >= n {
        return Err(Error::UnsupportedDimensions(format!("activation degree {p} wraps around on the {n}-th roots of unity")));
    }
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let v = 2.0 / d as f64;
    let index = IndexSet::graded(d, p);
    let derivative_energy: Vec<f64> = (0..=p)
        .map(|m| {
            (m..=p)
                .map(|k| {
                    let l = k - m;
                    let a = activation.coeffs[k as usize].norm() * factorial(k) / factorial(l);
                    a * a * factorial(l) * v.powi(l as i32)
                })
                .sum()
        })
        .collect();
    let blocks: Vec<Vec<usize>> = (0..index.len()).map(|i| vec![i]).collect();
    let values = index
        .indices()
        .iter()
        .map(|t| {
            let m = t.total_degree();
            Mat::from_fn(1, 1, |_, _| v.powi(m as i32) * derivative_energy[m as usize] / t.factorial())
        })
        .collect();
    KernelMatrix::from_blocks(index, blocks, values, None, Provenance::SymbolicExact)
}

/// Minimize `xᵀAx` over `x₀ + span(B)`.
#[derive(Clone, Debug)]
pub struct QuadFormProblem {
    pub a: Matrix,
    pub x0: Vec<f64>,
    /// Orthonormal columns spanning the directions of the affine subspace.
    pub directions: Matrix,
}

pub const MAX_REDUCED_CONDITION: f64 = 1e12;

pub fn constrained_quad_min(problem: &QuadFormProblem) -> Result<Vec<f64>> {
    let n = problem.x0.len();
    let a = problem.a.as_ref();
    let b = problem.directions.as_ref();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
    }
    if a.llt(faer::Side::Lower).is_err() {
        return Err(invalid("quadratic form is not positive definite"));
    }
    let m = b.ncols();
    if m == 0 {
        return Ok(problem.x0.clone());
    }
    let btb = linalg::matmul(b.transpose(), b);
    for i in 0..m {
        for j in 0..m {
            let want = if i == j { 1.0 } else { 0.0 };
            if (btb[(i, j)] - want).abs() > 1e-8 {
                return Err(invalid("direction basis is not orthonormal"));
            }
        }
    }
    let ab = linalg::matmul(a, b);
    let mut reduced = linalg::matmul(b.transpose(), ab.as_ref());
    linalg::symmetrize(&mut reduced);
    let condition = linalg::spd_condition(reduced.as_ref())?;
    if !(condition <= MAX_REDUCED_CONDITION) {
        return Err(Error::SingularReducedSystem { condition });
    }
    let ax0 = linalg::mat_vec(a, &problem.x0);
    let mut x = problem.x0.clone();
    let mut rhs = linalg::mat_t_vec(b, &ax0);
    for _ in 0..2 {
        let rhs_m = Mat::from_fn(m, 1, |i, _| rhs[i]);
        let y = linalg::spd_solve(reduced.as_ref(), rhs_m.as_ref())?;
        let step = linalg::mat_vec(b, &(0..m).map(|i| y[(i, 0)]).collect::<Vec<_>>());
        for (xi, s) in x.iter_mut().zip(&step) {
            *xi -= s;
        }
        rhs = linalg::mat_t_vec(b, &linalg::mat_vec(a, &x));
    }
    let scale = linalg::norm(&ax0).max(f64::MIN_POSITIVE);
    if linalg::norm(&rhs) > 1e-9 * scale {
        return Err(Error::SingularReducedSystem { condition });
    }
    Ok(x)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

/// Minimizer of `ĝᵀΦ⁻¹ĝ` over the interpolator space.
///
/// The problem separates over connected components of the graph joining
/// indices that share a kernel block or a direction vector.
pub fn predict_limit_model(phi: &KernelMatrix, space: &InterpolatorSpace) -> Result<CoeffVector<f64>> {
    if space.index.indices() != phi.index.indices() {
        return Err(invalid("kernel and interpolator space use different index sets"));
    }
    let n = phi.dim();
    let trace = phi.trace();
    let min_eig = phi.min_eigenvalue()?;
    if !(min_eig > 1e-12 * trace) {
        return Err(Error::SingularKernel { min_eigenvalue: min_eig, trace });
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for members in &phi.blocks {
        for w in members.windows(2) {
            union(&mut parent, w[0], w[1]);
        }
    }
    for dir in &space.directions {
        for w in dir.idx.windows(2) {
            union(&mut parent, w[0], w[1]);
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(i);
    }
    let mut dirs_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, dir) in space.directions.iter().enumerate() {
        if let Some(&first) = dir.idx.first() {
            let r = find(&mut parent, first);
            dirs_of.entry(r).or_default().push(k);
        }
    }
    let solved: Vec<(Vec<usize>, Vec<f64>)> = comps
        .into_iter()
        .map(|(root, members)| {
            let x0: Vec<f64> = members.iter().map(|&i| space.particular[i]).collect();
            let dirs = dirs_of.get(&root).cloned().unwrap_or_default();
            if dirs.is_empty() {
                return Ok((members, x0));
            }
            let local: BTreeMap<usize, usize> = members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
            let sub = Mat::from_fn(members.len(), members.len(), |a, b| phi.entry(members[a], members[b]));
            let a = linalg::spd_inverse(sub.as_ref())?;
            let mut bm = Mat::zeros(members.len(), dirs.len());
            for (c, &k) in dirs.iter().enumerate() {
                for (&i, &v) in space.directions[k].idx.iter().zip(&space.directions[k].val) {
                    bm[(local[&i], c)] = v;
                }
            }
            let x = constrained_quad_min(&QuadFormProblem { a, x0, directions: bm })?;
            Ok((members, x))
        })
        .collect::<Result<_>>()?;
    let mut g = vec![0.0; n];
    for (members, x) in solved {
        for (i, v) in members.into_iter().zip(x) {
            g[i] = v;
        }
    }
    Ok(CoeffVector::from_dense_tagged(space.basis_tag.clone(), &phi.index, &g))
}

/// `a = Fᵀ(FFᵀ)⁻¹ĝ`, the minimum-norm amplitudes reproducing `ĝ`.
pub fn min_norm_amplitudes(f: &Matrix, g: &[f64]) -> Result<Vec<f64>> {
    let k = f.nrows();
    if g.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: g.len() });
    }
    let norms: Vec<f64> = (0..k).map(|i| (0..f.ncols()).map(|j| f[(i, j)] * f[(i, j)]).sum::<f64>().sqrt()).collect();
    let zero_rows = norms.iter().filter(|&&r| r == 0.0).count();
    if zero_rows > 0 {
        return Err(Error::RankDeficient { rank: k - zero_rows, required: k });
    }
    let ft = Mat::from_fn(k, f.ncols(), |i, j| f[(i, j)] / norms[i]);
    let gt: Vec<f64> = g.iter().zip(&norms).map(|(v, r)| v / r).collect();
    let mut gram = linalg::matmul(ft.as_ref(), ft.transpose());
    linalg::symmetrize(&mut gram);
    let ev = linalg::sym_eigenvalues(gram.as_ref())?;
    let top = ev.last().copied().unwrap_or(0.0);
    let rank = ev.iter().filter(|&&l| l > 1e-12 * top).count();
    if rank < k {
        return Err(Error::RankDeficient { rank, required: k });
    }
    let rhs = Mat::from_fn(k, 1, |i, _| gt[i]);
    let y = linalg::spd_solve(gram.as_ref(), rhs.as_ref())?;
    let yv: Vec<f64> = (0..k).map(|i| y[(i, 0)]).collect();
    let a = linalg::mat_t_vec(ft.as_ref(), &yv);
    let fa = linalg::mat_vec(f.as_ref(), &a);
    let resid: f64 = fa.iter().zip(g).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    if resid > 1e-9 * linalg::norm(g).max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient { rank, required: k });
    }
    Ok(a)
}

/// True iff the coefficient design over `ℕ^d_{≤p}` has full row rank.
pub fn image_rank_check(features: &Features, activation: &Activation, p: u32) -> Result<bool> {
    let index = IndexSet::graded(features.d, p);
    if features.len() < index.len() {
        return Ok(false);
    }
    let f = coefficient_matrix(features, activation, &index);
    Ok(design_rank(&f)? == index.len())
}

/// Numerical rank after row equilibration, cutoff `1e−10·σ_max`.
pub fn design_rank(f: &Matrix) -> Result<usize> {
    let k = f.nrows();
    let norms: Vec<f64> = (0..k).map(|i| (0..f.ncols()).map(|j| f[(i, j)] * f[(i, j)]).sum::<f64>().sqrt()).collect();
    let scaled = Mat::from_fn(k, f.ncols(), |i, j| if norms[i] > 0.0 { f[(i, j)] / norms[i] } else { 0.0 });
    let sv = linalg::singular_values(scaled.as_ref())?;
    let top = sv.first().copied().unwrap_or(0.0);
    Ok(sv.iter().filter(|&&s| s > 1e-10 * top && s > 0.0).count())
}

pub const RANK_RETRIES: u64 = 5;

/// Samples features until the coefficient design has full row rank.
pub fn sample_full_rank_features(regime: &Regime, n: usize, activation: &Activation, p: u32, seed: u64) -> Result<Features> {
    let mut last_rank = 0;
    for attempt in 0..RANK_RETRIES {
        let s = if attempt == 0 { seed } else { rng::derive(seed, 0xFEA7 + attempt) };
        let f = sample_features(regime, n, s)?;
        let index = IndexSet::graded(regime.dim(), p);
        if n >= index.len() {
            let rank = design_rank(&coefficient_matrix(&f, activation, &index))?;
            if rank == index.len() {
                return Ok(f);
            }
            last_rank = rank;
        }
    }
    Err(Error::RankDeficient { rank: last_rank, required: crate::basis::index_count(regime.dim(), p) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gotu::{interpolator_space, GotuConstraint};
    use crate::basis::Polynomial;

    fn mi(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    fn sq_index(d: usize, i: usize) -> MultiIndex {
        MultiIndex::from_pairs(d, &[(i, 2)])
    }

    #[test]
    fn symbolic_matches_closed_forms() {
        for d in [2usize, 5, 15, 32] {
            let df = d as f64;
            let k = phi_symbolic(&Regime::Sparse { d }, &Activation::one_plus_pow(2), 2).unwrap();
            let z = MultiIndex::zeros(d);
            let e1 = MultiIndex::unit(d, 0);
            let e2 = MultiIndex::unit(d, 1);
            let checks = [
                (sq_index(d, 0), sq_index(d, 0), 6.0 / (df * df)),
                (e1.add(&e2), e1.add(&e2), 4.0 / (df * df)),
                (e1.clone(), e1.clone(), 4.0 * (1.0 / df + 1.0 / (df * df))),
                (z.clone(), z.clone(), 4.0 + 10.0 / df + 3.0 / (df * df)),
                (sq_index(d, 0), sq_index(d, 1), 2.0 / (df * df)),
                (sq_index(d, 0), z.clone(), 2f64.sqrt() * (2.0 / df + 3.0 / (df * df))),
                (e1.clone(), sq_index(d, 0), 0.0),
                (e1.clone(), z.clone(), 0.0),
            ];
            for (a, b, want) in checks {
                let got = k.entry_by_index(&a, &b).unwrap();
                assert!((got - want).abs() < 1e-12, "d={d} ({a},{b}) {got} vs {want}");
            }
            let closed = phi_prop1(d).unwrap().to_dense();
            let dense = k.to_dense();
            for i in 0..k.dim() {
                for j in 0..k.dim() {
                    assert!((closed[(i, j)] - dense[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn weight_moments_match_direct_expansion() {
        // E[w₁² ‖w‖²] in d=3 with v=1: E[w₁⁴] + 2 E[w₁²] = 3 + 2 = 5
        assert!((weight_moment(&[2], 3, 1, 1.0) - 5.0).abs() < 1e-12);
        // E[‖w‖⁴] = d(d+2) v²
        assert!((weight_moment(&[], 4, 2, 0.5) - 4.0 * 6.0 * 0.25).abs() < 1e-12);
        // E[w₁² w₂² ‖w‖²] in d=2: E[w₁⁴w₂²]+E[w₁²w₂⁴] = 6
        assert!((weight_moment(&[2, 2], 2, 1, 1.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_symbolic() {
        for d in [5usize, 15] {
            let regime = Regime::Sparse { d };
            let act = Activation::one_plus_pow(2);
            let exact = phi_symbolic(&regime, &act, 2).unwrap();
            let mc = phi_monte_carlo(&regime, &act, 2, 1_000_000, 11).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..exact.dim() {
                for j in 0..exact.dim() {
                    let se = mc.stderr_entry(i, j);
                    let z = (mc.entry(i, j) - exact.entry(i, j)).abs() / se.max(1e-300);
                    worst = worst.max(z);
                }
            }
            assert!(worst <= 4.0, "d={d}: worst z {worst}");
        }
    }

    #[test]
    fn monte_carlo_examples() {
        let k = phi_monte_carlo(&Regime::Sparse { d: 3 }, &Activation::Polynomial(vec![1.7]), 2, 2000, 1).unwrap();
        for i in 0..k.dim() {
            for j in 0..k.dim() {
                let want = if i == 0 && j == 0 { 1.7 * 1.7 } else { 0.0 };
                assert!((k.entry(i, j) - want).abs() < 1e-12);
            }
        }
        assert!(matches!(phi_monte_carlo(&Regime::Sparse { d: 3 }, &Activation::Relu, 2, 999, 1), Err(Error::BudgetTooSmall { .. })));
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("row,col,value,stderr\n1,1,"));
    }

    #[test]
    fn symbolic_kernel_is_psd_and_symmetric() {
        for (regime, act, p) in [
            (Regime::Sparse { d: 6 }, Activation::one_plus_pow(3), 3),
            (Regime::SmallFeatures { d: 3, eps: 0.1 }, Activation::one_plus_pow(4), 4),
            (Regime::Sparse { d: 15 }, Activation::one_plus_pow(4), 4),
        ] {
            let k = phi_symbolic(&regime, &act, p).unwrap();
            assert!(k.min_eigenvalue().unwrap() >= -1e-10 * k.trace());
            for b in 0..k.blocks().len() {
                let v = k.block_values(b);
                for i in 0..v.nrows() {
                    for j in 0..v.nrows() {
                        assert!((v[(i, j)] - v[(j, i)]).abs() <= 1e-12 * v[(i, i)].abs().max(1.0));
                    }
                }
            }
        }
        assert!(matches!(phi_symbolic(&Regime::Sparse { d: 3 }, &Activation::Sigmoid, 2), Err(Error::NonPolynomialActivation)));
    }

    #[test]
    fn inverse_block_solves_the_linear_system() {
        for d in [3usize, 7, 20] {
            let k = phi_prop1(d).unwrap();
            let inv = linalg::spd_inverse(k.to_dense().as_ref()).unwrap();
            let idx = k.index();
            let (x, y, z, t) = prop1_inverse_block(d);
            let p = |m: &MultiIndex| idx.position(m).unwrap();
            let zero = MultiIndex::zeros(d);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            assert!(rel(x, inv[(p(&sq_index(d, 0)), p(&sq_index(d, 0)))]) < 1e-9);
            assert!(rel(y, inv[(p(&sq_index(d, 0)), p(&sq_index(d, 1)))]) < 1e-9);
            assert!(rel(z, inv[(p(&sq_index(d, 0)), p(&zero))]) < 1e-9);
            assert!(rel(t, inv[(p(&zero), p(&zero))]) < 1e-9);
            // the exact form agrees with the dense inverse on a random vector
            let mut r = rng::stream(d as u64, 0);
            let gv: Vec<f64> = (0..idx.len()).map(|_| rng::normal(&mut r)).collect();
            let g = CoeffVector::from_dense(idx, &gv);
            let dense: f64 = linalg::dot(&gv, &linalg::mat_vec(inv.as_ref(), &gv));
            let form = prop1_quadratic_form(d).unwrap();
            assert!(rel(form.exact_value(&g), dense) < 1e-9);
        }
    }

    #[test]
    fn inverse_block_asymptotics() {
        let d = 1_000_000usize;
        let df = d as f64;
        let (x, y, z, t) = prop1_inverse_block(d);
        assert!((x / (df * df / 4.0) - 1.0).abs() < 1e-4);
        assert!((y - df / 12.0).abs() < 10.0);
        assert!((z + 2f64.sqrt() * df / 6.0).abs() < 10.0);
        assert!((t - df / 6.0).abs() < 10.0);
        let form = prop1_quadratic_form(50).unwrap();
        assert_eq!(form.value(&CoeffVector::from_dense(&IndexSet::graded(50, 2), &vec![0.0; 1326])), 0.0);
    }

    #[test]
    fn displayed_form_is_the_leading_order() {
        let mut ratios = Vec::new();
        for d in [100usize, 1000, 10000] {
            let idx = IndexSet::graded(3, 2);
            let mut r = rng::stream(3, 0);
            let small: Vec<f64> = (0..idx.len()).map(|_| rng::normal(&mut r)).collect();
            let mut g = CoeffVector::new(crate::basis::BasisTag::Hermite { d, p: 2 });
            for (t, v) in idx.indices().iter().zip(&small) {
                let mut e = t.exponents().to_vec();
                e.resize(d, 0);
                g.insert(MultiIndex::new(e), *v).unwrap();
            }
            let form = prop1_quadratic_form(d).unwrap();
            ratios.push((form.value(&g) / form.exact_value(&g) - 1.0).abs());
        }
        assert!(ratios[2] < ratios[0] && ratios[2] < 1e-2, "{ratios:?}");
    }

    #[test]
    fn constrained_examples() {
        let s = 1.0 / 2f64.sqrt();
        let b = Mat::from_fn(2, 1, |i, _| if i == 0 { s } else { -s });
        let p = QuadFormProblem { a: Mat::identity(2, 2), x0: vec![1.0, 0.0], directions: b.clone() };
        let x = constrained_quad_min(&p).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && (x[1] - 0.5).abs() < 1e-14);
        let a = Mat::from_fn(2, 2, |i, j| if i == j { [1.0, 4.0][i] } else { 0.0 });
        let x = constrained_quad_min(&QuadFormProblem { a: a.clone(), x0: vec![1.0, 0.0], directions: b }).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 0.2).abs() < 1e-14);
        // brute force along the line
        let best = (0..=10000)
            .map(|k| k as f64 / 10000.0)
            .min_by(|u, v| {
                let f = |t: f64| t * t + 4.0 * (1.0 - t) * (1.0 - t);
                f(*u).partial_cmp(&f(*v)).unwrap()
            })
            .unwrap();
        assert!((best - 0.8).abs() < 1e-4);
        let bad = QuadFormProblem { a: Mat::from_fn(2, 2, |i, j| if i == j { [1.0, 1e14][i] } else { 0.0 }), x0: vec![0.0, 1.0], directions: Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.0 }) };
        assert!(matches!(constrained_quad_min(&bad), Err(Error::SingularReducedSystem { .. })));
    }

    #[test]
    fn lemma8_minimizers_converge() {
        let n = 6;
        let mut r = rng::stream(21, 0);
        let q = Mat::from_fn(n, n, |_, _| rng::normal(&mut r));
        let mut a = linalg::matmul(q.as_ref(), q.transpose());
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        let raw = Mat::from_fn(n, 3, |_, _| rng::normal(&mut r));
        let (u, _, _) = linalg::svd(raw.as_ref()).unwrap();
        let dirs = Mat::from_fn(n, 3, |i, j| u[(i, j)]);
        let x0: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
        let pert = Mat::from_fn(n, n, |_, _| rng::normal(&mut r));
        let sym = Mat::from_fn(n, n, |i, j| 0.5 * (pert[(i, j)] + pert[(j, i)]));
        let star = constrained_quad_min(&QuadFormProblem { a: a.clone(), x0: x0.clone(), directions: dirs.clone() }).unwrap();
        let mut errs = Vec::new();
        for k in [10.0, 100.0, 1000.0, 10000.0] {
            let an = Mat::from_fn(n, n, |i, j| a[(i, j)] + sym[(i, j)] / k);
            let xn = constrained_quad_min(&QuadFormProblem { a: an, x0: x0.clone(), directions: dirs.clone() }).unwrap();
            let e: f64 = xn.iter().zip(&star).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            errs.push(e * k);
        }
        let c = errs[0];
        assert!(errs.iter().all(|&e| e <= 2.0 * c + 1e-12), "{errs:?}");
    }

    #[test]
    fn min_norm_examples() {
        let f = Mat::from_fn(1, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let a = min_norm_amplitudes(&f, &[1.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-15 && a[1].abs() < 1e-15);
        let f = Mat::from_fn(1, 2, |_, _| 1.0);
        let a = min_norm_amplitudes(&f, &[2.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-15 && (a[1] - 1.0).abs() < 1e-15);
        let mut r = rng::stream(4, 0);
        let f = Mat::from_fn(6, 20, |_, _| rng::normal(&mut r));
        let g: Vec<f64> = (0..6).map(|_| rng::normal(&mut r)).collect();
        let a = min_norm_amplitudes(&f, &g).unwrap();
        let fa = linalg::mat_vec(f.as_ref(), &a);
        assert!(fa.iter().zip(&g).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max) <= 1e-10);
        let (_, _, v) = linalg::svd(f.as_ref()).unwrap();
        for _ in 0..100 {
            let c: Vec<f64> = (0..14).map(|_| rng::normal(&mut r)).collect();
            let mut other = a.clone();
            for (k, ck) in c.iter().enumerate() {
                for i in 0..20 {
                    other[i] += ck * v[(i, 6 + k)];
                }
            }
            assert!(linalg::norm(&a) <= linalg::norm(&other) + 1e-12);
        }
        let dup = Mat::from_fn(2, 3, |_, j| j as f64 + 1.0);
        assert!(matches!(min_norm_amplitudes(&dup, &[1.0, 1.0]), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn rank_check_examples() {
        let act = Activation::one_plus_pow(2);
        let few = sample_features(&Regime::Sparse { d: 2 }, 5, 1).unwrap();
        assert!(!image_rank_check(&few, &act, 2).unwrap());
        let many = sample_features(&Regime::SmallFeatures { d: 2, eps: 0.05f64.powi(2) }, 256, 1).unwrap();
        assert!(image_rank_check(&many, &act, 2).unwrap());
        let zero = Features::new(2, vec![0.0; 2], vec![0.0]).unwrap();
        let no_const = Activation::Polynomial(vec![0.0, 2.0, 1.0]);
        let f = coefficient_matrix(&zero, &no_const, &IndexSet::graded(2, 2));
        assert!((0..f.nrows()).all(|i| f[(i, 0)] == 0.0));
        assert!(sample_full_rank_features(&Regime::Sparse { d: 3 }, 40, &act, 2, 3).is_ok());
        assert!(matches!(sample_full_rank_features(&Regime::Sparse { d: 3 }, 4, &act, 2, 3), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn inverse_diagonal_scales_with_degree() {
        let act = Activation::one_plus_pow(2);
        let idx = IndexSet::graded(2, 2);
        let mut pts: Vec<Vec<(f64, f64)>> = vec![Vec::new(); idx.len()];
        for eps in [1e-2, 1e-3, 1e-4] {
            let k = phi_symbolic(&Regime::SmallFeatures { d: 2, eps }, &act, 2).unwrap();
            let inv = linalg::spd_inverse(k.to_dense().as_ref()).unwrap();
            for (i, p) in pts.iter_mut().enumerate() {
                p.push((f64::ln(eps), inv[(i, i)].ln()));
            }
        }
        for (i, p) in pts.iter().enumerate() {
            let slope = (p[2].1 - p[0].1) / (p[2].0 - p[0].0);
            let want = -(idx.get(i).total_degree() as f64);
            assert!((slope - want).abs() <= 0.15, "{}: {slope}", idx.get(i));
        }
    }

    #[test]
    fn quadratic_form_scales_with_interpolator_degree() {
        let act = Activation::one_plus_pow(2);
        let idx = IndexSet::graded(2, 2);
        for (poly, s) in [("1 + x1", 1.0), ("x1*x2 + 3", 2.0), ("x2^2", 2.0), ("2", 0.0)] {
            let g = Polynomial::parse(poly, 2).unwrap().to_hermite().to_dense(&idx);
            let mut pts = Vec::new();
            for eps in [1e-2, 1e-3, 1e-4] {
                let k = phi_symbolic(&Regime::SmallFeatures { d: 2, eps }, &act, 2).unwrap();
                let inv = linalg::spd_inverse(k.to_dense().as_ref()).unwrap();
                pts.push((f64::ln(eps), linalg::dot(&g, &linalg::mat_vec(inv.as_ref(), &g)).ln()));
            }
            let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
            assert!((slope + s).abs() <= 0.15, "{poly}: {slope}");
        }
    }

    #[test]
    fn empirical_kernel_converges_to_phi() {
        let act = Activation::one_plus_pow(2);
        let regime = Regime::Sparse { d: 3 };
        let idx = IndexSet::graded(3, 2);
        let inv_phi = linalg::spd_inverse(phi_symbolic(&regime, &act, 2).unwrap().to_dense().as_ref()).unwrap();
        let mut errs = Vec::new();
        for n in [256usize, 1024, 4096] {
            let mut total = 0.0;
            for rep in 0..4 {
                let f = sample_features(&regime, n, 100 + rep).unwrap();
                let fm = coefficient_matrix(&f, &act, &idx);
                let mut g = linalg::matmul(fm.as_ref(), fm.transpose());
                for v in g.as_mut().col_iter_mut().flat_map(|c| c.iter_mut()) {
                    *v /= n as f64;
                }
                let inv = linalg::spd_inverse(g.as_ref()).unwrap();
                total += (&inv - &inv_phi).norm_l2();
            }
            errs.push(total);
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn limit_prediction_examples() {
        // a single-point interpolator space returns the target
        let act = Activation::one_plus_pow(2);
        let k = phi_symbolic(&Regime::Sparse { d: 1 }, &act, 2).unwrap();
        let target = Polynomial::parse("x1^2 + 1", 1).unwrap().to_hermite();
        let grid = GotuConstraint::explicit(vec![vec![-1.0], vec![0.0], vec![2.0]]);
        let space = interpolator_space(&grid, &target, 2).unwrap();
        assert!(space.directions.is_empty());
        let g = predict_limit_model(&k, &space).unwrap();
        for t in IndexSet::graded(1, 2).indices() {
            assert!((g.get(t) - target.get(t)).abs() < 1e-10);
        }
        // small features keep the constant
        let d = 2;
        let k = phi_symbolic(&Regime::SmallFeatures { d, eps: 0.05f64.powi(2) }, &act, 2).unwrap();
        let one = Polynomial::constant(d, 1.0).to_hermite();
        let space = interpolator_space(&GotuConstraint::fix(0, 1.0), &one, 2).unwrap();
        let g = predict_limit_model(&k, &space).unwrap();
        assert!(g.get(&MultiIndex::zeros(d)) >= 0.98, "{g:?}");
        assert!(g.get(&MultiIndex::unit(d, 0)).abs() < 0.02);
        // sparse regime approaches 3/5 + 2/5 x₁
        let d = 32;
        let k = phi_symbolic(&Regime::Sparse { d }, &act, 2).unwrap();
        let one = Polynomial::constant(d, 1.0).to_hermite();
        let space = interpolator_space(&GotuConstraint::fix(0, 1.0), &one, 2).unwrap();
        let g = predict_limit_model(&k, &space).unwrap();
        assert!((g.get(&MultiIndex::zeros(d)) - 0.6).abs() < 0.05);
        assert!((g.get(&MultiIndex::unit(d, 0)) - 0.4).abs() < 0.05);
        assert_eq!(g.get(&mi(&[vec![0; d - 1], vec![1]].concat())), 0.0);
    }
}
