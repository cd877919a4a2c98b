//! Training of random-feature amplitudes: datasets on the seen domain, gradient
//! descent with line search, and exact minimum-norm solves.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::basis::{root_of_unity, IndexSet, MultiIndex, Polynomial};
use crate::error::{invalid, Error, Result};
use crate::features::{coefficient_matrix, Activation, Features, RFModel};
use crate::gotu::{sample_seen, ConstraintKind, GotuConstraint, InputLaw};
use crate::kernel::min_norm_amplitudes;
use crate::linalg::{self, Matrix};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub constraint: GotuConstraint,
    pub target: String,
    pub seed: u64,
    pub law: InputLaw,
}

/// Real inputs, row-major `n × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub d: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
    pub provenance: DatasetProvenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, s: usize) -> &[f64] {
        &self.inputs[s * self.d..(s + 1) * self.d]
    }
}

/// I.i.d. points of the seen set labelled by the exact target.
pub fn make_gotu_dataset(constraint: &GotuConstraint, target: &Polynomial, n: usize, law: &InputLaw, seed: u64) -> Result<Dataset> {
    let d = target.d;
    constraint.validate(d)?;
    if n == 0 {
        return Err(invalid("a dataset needs at least one point"));
    }
    if let InputLaw::UniformGrid(alphabet) = law {
        let admissible = GotuConstraint { kind: constraint.kind.clone(), alphabet: Some(alphabet.clone()) };
        admissible.validate(d)?;
    }
    let mut r = rng::stream(seed, 0);
    let mut inputs = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    for x in inputs.chunks_mut(d) {
        sample_seen(constraint, law, &mut r, x)?;
        labels.push(target.eval(x));
    }
    let provenance = DatasetProvenance { constraint: constraint.clone(), target: target.label(), seed, law: law.clone() };
    Ok(Dataset { d, inputs, labels, provenance })
}

/// Inputs on the `order`-th roots of unity, row-major `n × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnityDataset {
    pub d: usize,
    pub order: u32,
    pub inputs: Vec<Complex64>,
    pub labels: Vec<Complex64>,
    pub provenance: DatasetProvenance,
}

/// Uniform roots of unity with constrained coordinates hard-coded; the constraint
/// values must themselves be real roots of unity.
pub fn make_unity_dataset<F>(constraint: &GotuConstraint, target: F, target_label: &str, order: u32, d: usize, n: usize, seed: u64) -> Result<UnityDataset>
where
    F: Fn(&[Complex64]) -> Complex64,
{
    constraint.validate(d)?;
    if order < 2 || n == 0 {
        return Err(invalid("need order ≥ 2 and at least one point"));
    }
    let root = |v: f64| -> Result<Complex64> {
        if v == 1.0 || (v == -1.0 && order % 2 == 0) {
            Ok(Complex64::new(v, 0.0))
        } else {
            Err(Error::UnsupportedConstraint(format!("{v} is not a real {order}-th root of unity")))
        }
    };
    let mut r = rng::stream(seed, 0);
    let mut inputs = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x: Vec<Complex64> = (0..d).map(|_| root_of_unity(order, r.random_range(0..order) as i64)).collect();
        match &constraint.kind {
            ConstraintKind::FixCoordinate { i, value } => x[*i] = root(*value)?,
            ConstraintKind::ProductVanish { i, j, u, v } => {
                if r.random::<bool>() {
                    x[*i] = root(*u)?;
                } else {
                    x[*j] = root(*v)?;
                }
            }
            ConstraintKind::ExplicitSeenGrid { .. } => return Err(Error::UnsupportedConstraint("explicit grids are real-valued".into())),
        }
        labels.push(target(&x));
        inputs.extend(x);
    }
    let provenance = DatasetProvenance { constraint: constraint.clone(), target: target_label.to_string(), seed, law: InputLaw::UniformUnity(order) };
    Ok(UnityDataset { d, order, inputs, labels, provenance })
}

/// A deterministic value-and-gradient oracle.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇f(x)` and returns `f(x)`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// `f(next) − f(x)`; quadratics override this to avoid cancellation.
    fn decrease(&self, x: &[f64], next: &[f64]) -> f64 {
        self.value(next) - self.value(x)
    }
}

/// Wraps a closure `(x, grad) ↦ f(x)` that fills the gradient.
pub struct FnObjective<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim];
        (self.f)(x, &mut g)
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}

/// `(1/n)‖Xa − y‖²`.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, a: &[f64]) -> f64 {
        let r = linalg::mat_vec(self.x.as_ref(), a);
        r.iter().zip(&self.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / self.y.len() as f64
    }

    fn value_grad(&self, a: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.y.len() as f64;
        let r: Vec<f64> = linalg::mat_vec(self.x.as_ref(), a).iter().zip(&self.y).map(|(p, y)| p - y).collect();
        let g = linalg::mat_t_vec(self.x.as_ref(), &r);
        for (o, v) in grad.iter_mut().zip(g) {
            *o = 2.0 * v / n;
        }
        r.iter().map(|v| v * v).sum::<f64>() / n
    }

    fn decrease(&self, a: &[f64], next: &[f64]) -> f64 {
        let step: Vec<f64> = next.iter().zip(a).map(|(p, q)| p - q).collect();
        let dr = linalg::mat_vec(self.x.as_ref(), &step);
        let r = linalg::mat_vec(self.x.as_ref(), a);
        let sum: f64 = dr.iter().zip(&r).zip(&self.y).map(|((dr, r), y)| dr * (dr + 2.0 * (r - y))).sum();
        sum / self.y.len() as f64
    }
}

/// `Σₖ λₖuₖ² − 2cₖuₖ + constant`, a quadratic in its eigenbasis.
#[derive(Clone, Debug)]
pub struct DiagonalQuadratic {
    pub lambda: Vec<f64>,
    pub c: Vec<f64>,
    pub constant: f64,
}

impl Objective for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.lambda.len()
    }

    fn value(&self, u: &[f64]) -> f64 {
        self.lambda.iter().zip(&self.c).zip(u).map(|((l, c), u)| l * u * u - 2.0 * c * u).sum::<f64>() + self.constant
    }

    fn value_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        for (k, g) in grad.iter_mut().enumerate() {
            *g = 2.0 * (self.lambda[k] * u[k] - self.c[k]);
        }
        self.value(u)
    }

    fn decrease(&self, u: &[f64], next: &[f64]) -> f64 {
        (0..u.len()).map(|k| (next[k] - u[k]) * (self.lambda[k] * (next[k] + u[k]) - 2.0 * self.c[k])).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub l0: f64,
    pub l_cap: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        GdOptions { max_iters: 20_000, grad_tol: 1e-9, l0: 1.0, l_cap: 2f64.powi(60) }
    }
}

/// The Lipschitz estimate `L > 0` and the accepted-step counter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchState {
    pub l: f64,
    pub iteration: usize,
}

/// One accepted step: the loss after it and the `L` that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub lipschitz: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct GdResult {
    pub x: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

pub fn gd_line_search(objective: &dyn Objective, x0: &[f64], opts: &GdOptions) -> Result<GdResult> {
    gd_line_search_observed(objective, x0, opts, |_, _| {})
}

/// Gradient descent with line search; `observe(iteration, x)` sees every iterate.
///
/// Step `x − ∇f/L`; while `f(x₊) > f(x) − ‖∇f‖²/(2L)` double `L`; after
/// acceptance halve `L`. Row 0 of the trace is the starting point.
pub fn gd_line_search_observed(objective: &dyn Objective, x0: &[f64], opts: &GdOptions, mut observe: impl FnMut(usize, &[f64])) -> Result<GdResult> {
    let n = objective.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    if !(opts.l0 > 0.0) {
        return Err(invalid("the initial Lipschitz estimate must be positive"));
    }
    let mut state = LineSearchState { l: opts.l0, iteration: 0 };
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut f = objective.value_grad(&x, &mut grad);
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut gnorm = linalg::norm(&grad);
    let mut trace = vec![TraceRow { iteration: 0, loss: f, lipschitz: state.l, grad_norm: gnorm }];
    observe(0, &x);
    while state.iteration < opts.max_iters && gnorm > opts.grad_tol {
        let g2 = gnorm * gnorm;
        loop {
            for k in 0..n {
                next[k] = x[k] - grad[k] / state.l;
            }
            let change = objective.decrease(&x, &next);
            if change.is_finite() && change <= -g2 / (2.0 * state.l) {
                break;
            }
            state.l *= 2.0;
            if state.l > opts.l_cap {
                return Err(Error::NonFiniteObjective { iteration: state.iteration });
            }
        }
        let change = objective.decrease(&x, &next);
        std::mem::swap(&mut x, &mut next);
        // accumulating exact decreases keeps the recorded losses monotone under rounding
        f = (f + change).min(f);
        objective.value_grad(&x, &mut grad);
        if !f.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: state.iteration + 1 });
        }
        gnorm = linalg::norm(&grad);
        state.iteration += 1;
        trace.push(TraceRow { iteration: state.iteration, loss: f, lipschitz: state.l, grad_norm: gnorm });
        observe(state.iteration, &x);
        state.l /= 2.0;
    }
    Ok(GdResult { x, converged: gnorm <= opts.grad_tol, trace })
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> Result<()> {
    writeln!(out, "iteration,loss,L_n,grad_norm")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.iteration, r.loss, r.lipschitz, r.grad_norm)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMethod {
    MinNormExact,
    GdMse,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub gd: GdOptions,
    /// Hermite indices whose model coefficients are recorded along the run.
    pub readout: Vec<MultiIndex>,
    /// Record coefficients every this many iterations (and at the end).
    pub record_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { gd: GdOptions::default(), readout: Vec::new(), record_every: 100 }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub amplitudes: Vec<f64>,
    pub trace: Vec<TraceRow>,
    /// `(iteration, coefficient per readout index)`.
    pub coef_trace: Vec<(usize, Vec<f64>)>,
    pub converged: bool,
}

/// Budget of doubles per materialized design block.
const BLOCK_ELEMS: usize = 1 << 22;

/// Columns `cols` of the design `Xₛᵢ = σ(⟨wᵢ,xₛ⟩+bᵢ)/√N` for rows `rows`.
fn design_block(features: &Features, activation: &Activation, data: &Dataset, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Matrix {
    let d = features.d;
    let scale = 1.0 / (features.len() as f64).sqrt();
    let inputs = Mat::from_fn(rows.len(), d, |s, j| data.inputs[(rows.start + s) * d + j]);
    let weights = Mat::from_fn(d, cols.len(), |j, i| features.w[(cols.start + i) * d + j]);
    let mut pre = linalg::matmul(inputs.as_ref(), weights.as_ref());
    for (i, col) in pre.as_mut().col_iter_mut().enumerate() {
        let b = features.b[cols.start + i];
        for v in col.iter_mut() {
            *v = activation.eval(*v + b) * scale;
        }
    }
    pre
}

/// The mean-squared error in the eigenbasis of the empirical kernel, with the
/// maps back to amplitudes.
enum Spectral {
    /// `a = Q u`, orthonormal eigenvectors of `XᵀX/n` (all of them, or those
    /// with nonzero eigenvalue on the low-rank path).
    Primal { q: Matrix },
    /// `a = Xᵀ U diag(1/sₖ) u`, from eigenvectors of `XXᵀ/n`.
    Dual { u: Matrix, s: Vec<f64> },
}

struct SpectralProblem {
    objective: DiagonalQuadratic,
    basis: Spectral,
}

/// Relative eigenvalue floor below which dual modes are dropped; GD from zero
/// never moves along them.
const DUAL_FLOOR: f64 = 1e-13;

fn spectral_problem(model: &RFModel, data: &Dataset) -> Result<SpectralProblem> {
    let features = &model.features;
    let act = &model.activation;
    let n = data.len();
    let width = features.len();
    let nf = n as f64;
    let constant = data.labels.iter().map(|y| y * y).sum::<f64>() / nf;
    if let Some((f, m, hy)) = hermite_moments(model, data) {
        return low_rank_problem(&f, &m, &hy, constant);
    }
    if width <= n {
        let (kmat, c) = primal_moments(model, data);
        let (lambda, q) = linalg::sym_eigen(kmat.as_ref())?;
        let c_rot = linalg::mat_t_vec(q.as_ref(), &c);
        let lambda = lambda.into_iter().map(|l| l.max(0.0)).collect();
        Ok(SpectralProblem { objective: DiagonalQuadratic { lambda, c: c_rot, constant }, basis: Spectral::Primal { q } })
    } else {
        let mut g = Mat::zeros(n, n);
        let chunk = (BLOCK_ELEMS / n).max(16);
        let mut start = 0;
        while start < width {
            let end = (start + chunk).min(width);
            let x = design_block(features, act, data, 0..n, start..end);
            linalg::gemm_add(&mut g, x.as_ref(), x.transpose(), 1.0 / nf);
            start = end;
        }
        linalg::symmetrize(&mut g);
        let (ev, u) = linalg::sym_eigen(g.as_ref())?;
        let top = ev.last().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..n).filter(|&k| ev[k] > DUAL_FLOOR * top).collect();
        let u = Mat::from_fn(n, keep.len(), |i, j| u[(i, keep[j])]);
        let lambda: Vec<f64> = keep.iter().map(|&k| ev[k]).collect();
        let s: Vec<f64> = lambda.iter().map(|l| (nf * l).sqrt()).collect();
        let uy = linalg::mat_t_vec(u.as_ref(), &data.labels);
        let c = uy.iter().zip(&s).map(|(v, s)| s * v / nf).collect();
        Ok(SpectralProblem { objective: DiagonalQuadratic { lambda, c, constant }, basis: Spectral::Dual { u, s } })
    }
}

/// For a polynomial activation whose graded Hermite index set is small next
/// to `N`: the coefficient matrix `F`, the empirical moment matrix
/// `M = E_n[χχᵀ]` and `E_n[χy]`, so that `XᵀX/n = FᵀMF/N`.
fn hermite_moments(model: &RFModel, data: &Dataset) -> Option<(Matrix, Matrix, Vec<f64>)> {
    let features = &model.features;
    let p = model.activation.polynomial_coeffs()?.len().saturating_sub(1) as u32;
    let count = crate::basis::index_count(features.d, p);
    if 2 * count > features.len() {
        return None;
    }
    let n = data.len();
    let nf = n as f64;
    let index = IndexSet::graded(features.d, p);
    let f = coefficient_matrix(features, &model.activation, &index);
    let mut m = Mat::zeros(count, count);
    let mut hy = vec![0.0; count];
    let chunk = (BLOCK_ELEMS / count).max(16);
    let mut table = Vec::new();
    let mut chi = vec![0.0; count];
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let mut h = Mat::zeros(end - start, count);
        for s in start..end {
            index.eval_chi(data.input(s), &mut table, &mut chi);
            for (k, &v) in chi.iter().enumerate() {
                h[(s - start, k)] = v;
                hy[k] += v * data.labels[s];
            }
        }
        linalg::gemm_add(&mut m, h.transpose(), h.as_ref(), 1.0 / nf);
        start = end;
    }
    linalg::symmetrize(&mut m);
    Some((f, m, hy.iter().map(|v| v / nf).collect()))
}

/// The spectral problem when `XᵀX/n = BᵀB` with `B = LᵀF/√N` and `M = LLᵀ`.
///
/// Eigenvectors of `BᵀB` with nonzero eigenvalue are `Bᵀv/√λ` for the
/// eigenpairs of the small matrix `BBᵀ`. The linear term `Fᵀ E_n[χy]/√N` lies
/// in their span, so GD from zero never leaves it and the dropped modes carry
/// neither curvature nor gradient.
fn low_rank_problem(f: &Matrix, m: &Matrix, hy: &[f64], constant: f64) -> Result<SpectralProblem> {
    let width = f.ncols();
    let root_n = (width as f64).sqrt();
    let (mu, w) = linalg::sym_eigen(m.as_ref())?;
    let mu_top = mu.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..mu.len()).filter(|&k| mu[k] > DUAL_FLOOR * mu_top).collect();
    let l = Mat::from_fn(m.nrows(), keep.len(), |i, j| w[(i, keep[j])] * mu[keep[j]].sqrt());
    let mut b = linalg::matmul(l.transpose(), f.as_ref());
    b.as_mut().col_iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v /= root_n));
    let small = linalg::matmul(b.as_ref(), b.transpose());
    let (ev, v) = linalg::sym_eigen(small.as_ref())?;
    let top = ev.last().copied().unwrap_or(0.0);
    let modes: Vec<usize> = (0..ev.len()).filter(|&k| ev[k] > DUAL_FLOOR * top).collect();
    let vk = Mat::from_fn(v.nrows(), modes.len(), |i, j| v[(i, modes[j])] / ev[modes[j]].sqrt());
    let q = linalg::matmul(b.transpose(), vk.as_ref());
    let c: Vec<f64> = linalg::mat_t_vec(f.as_ref(), hy).iter().map(|v| v / root_n).collect();
    let c_rot = linalg::mat_t_vec(q.as_ref(), &c);
    let lambda = modes.iter().map(|&k| ev[k]).collect();
    Ok(SpectralProblem { objective: DiagonalQuadratic { lambda, c: c_rot, constant }, basis: Spectral::Primal { q } })
}

/// `K = XᵀX/n` and `Xᵀy/n` from materialized design blocks.
fn primal_moments(model: &RFModel, data: &Dataset) -> (Matrix, Vec<f64>) {
    let features = &model.features;
    let act = &model.activation;
    let n = data.len();
    let width = features.len();
    let nf = n as f64;
    let mut k = Mat::zeros(width, width);
    let mut c = vec![0.0; width];
    let chunk = (BLOCK_ELEMS / width).max(16);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let x = design_block(features, act, data, start..end, 0..width);
        linalg::gemm_add(&mut k, x.transpose(), x.as_ref(), 1.0 / nf);
        let xy = linalg::mat_t_vec(x.as_ref(), &data.labels[start..end]);
        for (o, v) in c.iter_mut().zip(xy) {
            *o += v / nf;
        }
        start = end;
    }
    linalg::symmetrize(&mut k);
    (k, c)
}

/// `Xᵀ v` by feature blocks.
fn design_t_vec(model: &RFModel, data: &Dataset, v: &[f64]) -> Vec<f64> {
    let width = model.features.len();
    let n = data.len();
    let chunk = (BLOCK_ELEMS / n).max(16);
    let mut out = Vec::with_capacity(width);
    let mut start = 0;
    while start < width {
        let end = (start + chunk).min(width);
        let x = design_block(&model.features, &model.activation, data, 0..n, start..end);
        out.extend(linalg::mat_t_vec(x.as_ref(), v));
        start = end;
    }
    out
}

/// `R·M` where `R` maps amplitudes to readout coefficients and `M` maps
/// eigen-coordinates to amplitudes.
fn readout_map(model: &RFModel, data: &Dataset, basis: &Spectral, readout: &[MultiIndex]) -> Result<Matrix> {
    if readout.is_empty() {
        return Ok(Mat::zeros(0, 0));
    }
    let index = IndexSet::from_indices(model.dim(), readout.to_vec())?;
    let width = model.width();
    let r = coefficient_matrix(&model.features, &model.activation, &index);
    let scale = 1.0 / (width as f64).sqrt();
    match basis {
        Spectral::Primal { q } => {
            let mut out = linalg::matmul(r.as_ref(), q.as_ref());
            out.as_mut().col_iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v *= scale));
            Ok(out)
        }
        Spectral::Dual { u, s } => {
            let n = data.len();
            let mut xr = Mat::zeros(n, readout.len());
            let chunk = (BLOCK_ELEMS / n).max(16);
            let mut start = 0;
            while start < width {
                let end = (start + chunk).min(width);
                let x = design_block(&model.features, &model.activation, data, 0..n, start..end);
                let rc = Mat::from_fn(end - start, readout.len(), |i, k| r[(k, start + i)]);
                linalg::gemm_add(&mut xr, x.as_ref(), rc.as_ref(), 1.0);
                start = end;
            }
            let mut out = linalg::matmul(xr.transpose(), u.as_ref());
            for (j, col) in out.as_mut().col_iter_mut().enumerate() {
                col.iter_mut().for_each(|v| *v *= scale / s[j]);
            }
            Ok(out)
        }
    }
}

/// Trains the amplitudes of `model` on `data` from `a = 0`.
///
/// `GdMse` runs line-search GD on `(1/n)Σ(f_RF(a; xₛ) − yₛ)²` in the eigenbasis
/// of the empirical kernel (primal `XᵀX` or dual `XXᵀ`, whichever is smaller).
/// The rotation is orthogonal, so iterates, losses and step sizes equal those
/// of GD on the amplitudes themselves.
pub fn train_rf(model: &RFModel, data: &Dataset, method: TrainMethod, opts: &TrainOptions) -> Result<TrainOutcome> {
    if data.d != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: data.d });
    }
    if data.is_empty() {
        return Err(invalid("empty dataset"));
    }
    match method {
        TrainMethod::MinNormExact => {
            let x = design_block(&model.features, &model.activation, data, 0..data.len(), 0..model.width());
            let amplitudes = min_norm_amplitudes(&x, &data.labels)?;
            let objective = LeastSquares { x, y: data.labels.clone() };
            let mut g = vec![0.0; amplitudes.len()];
            let loss = objective.value_grad(&amplitudes, &mut g);
            let mut probe = model.clone();
            probe.amplitudes = amplitudes.clone();
            let coefs = readout_values(&probe, &opts.readout)?;
            Ok(TrainOutcome {
                amplitudes,
                trace: vec![TraceRow { iteration: 0, loss, lipschitz: 0.0, grad_norm: linalg::norm(&g) }],
                coef_trace: vec![(0, coefs)],
                converged: true,
            })
        }
        TrainMethod::GdMse => {
            let problem = spectral_problem(model, data)?;
            let map = readout_map(model, data, &problem.basis, &opts.readout)?;
            let every = opts.record_every.max(1);
            let mut coef_trace = Vec::new();
            let dim = problem.objective.dim();
            let result = gd_line_search_observed(&problem.objective, &vec![0.0; dim], &opts.gd, |it, u| {
                if !opts.readout.is_empty() && it % every == 0 {
                    coef_trace.push((it, linalg::mat_vec(map.as_ref(), u)));
                }
            })?;
            let final_it = result.trace.last().map_or(0, |r| r.iteration);
            if !opts.readout.is_empty() && coef_trace.last().map(|c| c.0) != Some(final_it) {
                coef_trace.push((final_it, linalg::mat_vec(map.as_ref(), &result.x)));
            }
            let amplitudes = match &problem.basis {
                Spectral::Primal { q } => linalg::mat_vec(q.as_ref(), &result.x),
                Spectral::Dual { u, s } => {
                    let scaled: Vec<f64> = result.x.iter().zip(s).map(|(v, s)| v / s).collect();
                    design_t_vec(model, data, &linalg::mat_vec(u.as_ref(), &scaled))
                }
            };
            Ok(TrainOutcome { amplitudes, trace: result.trace, coef_trace, converged: result.converged })
        }
    }
}

/// Model Hermite coefficients at `readout`.
pub fn readout_values(model: &RFModel, readout: &[MultiIndex]) -> Result<Vec<f64>> {
    if readout.is_empty() {
        return Ok(Vec::new());
    }
    let index = IndexSet::from_indices(model.dim(), readout.to_vec())?;
    let c = model.hermite_coeffs(&index);
    Ok(readout.iter().map(|t| c.get(t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{sample_features, Regime};

    fn quad(scale: f64) -> FnObjective<impl Fn(&[f64], &mut [f64]) -> f64> {
        FnObjective {
            dim: 1,
            f: move |x: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * scale * x[0];
                scale * x[0] * x[0]
            },
        }
    }

    #[test]
    fn one_dimensional_quadratics() {
        let r = gd_line_search(&quad(1.0), &[1.0], &GdOptions { max_iters: 200, ..GdOptions::default() }).unwrap();
        assert!(r.x[0].abs() <= 1e-8);
        let r = gd_line_search(&quad(10.0), &[1.0], &GdOptions { max_iters: 1, ..GdOptions::default() }).unwrap();
        // L = 1 proposes −19; the test fails until L = 32 since f(1 − 20/L) ≤ 10 − 200/L needs L ≥ 20
        assert_eq!(r.trace[1].lipschitz, 32.0);
        assert!((r.x[0] - (1.0 - 20.0 / 32.0)).abs() < 1e-15);
        assert!(10.0 * 19.0f64.powi(2) > 10.0 - 200.0);
    }

    #[test]
    fn accepted_losses_never_increase() {
        let mut r = rng::stream(3, 0);
        let x = Mat::from_fn(60, 20, |_, _| rng::normal(&mut r));
        let y: Vec<f64> = (0..60).map(|_| rng::normal(&mut r)).collect();
        let res = gd_line_search(&LeastSquares { x, y }, &[0.0; 20], &GdOptions::default()).unwrap();
        assert!(res.trace.windows(2).all(|w| w[1].loss <= w[0].loss));
        assert!(res.converged);
    }

    #[test]
    fn matches_normal_equations() {
        for seed in 0..5 {
            let mut r = rng::stream(seed, 0);
            let x = Mat::from_fn(500, 50, |_, _| rng::normal(&mut r));
            let y: Vec<f64> = (0..500).map(|_| rng::normal(&mut r)).collect();
            let xtx = linalg::matmul(x.transpose(), x.as_ref());
            let xty = linalg::mat_t_vec(x.as_ref(), &y);
            let exact = linalg::spd_solve(xtx.as_ref(), Mat::from_fn(50, 1, |i, _| xty[i]).as_ref()).unwrap();
            let exact: Vec<f64> = (0..50).map(|i| exact[(i, 0)]).collect();
            let res = gd_line_search(&LeastSquares { x, y }, &[0.0; 50], &GdOptions::default()).unwrap();
            let err: f64 = res.x.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= 1e-6 * linalg::norm(&exact), "seed {seed}: {err}");
        }
    }

    #[test]
    fn iterates_stay_in_the_row_space() {
        let mut r = rng::stream(8, 0);
        let x = Mat::from_fn(10, 40, |_, _| rng::normal(&mut r));
        let y: Vec<f64> = (0..10).map(|_| rng::normal(&mut r)).collect();
        let res = gd_line_search(&LeastSquares { x: x.clone(), y: y.clone() }, &[0.0; 40], &GdOptions::default()).unwrap();
        let (_, _, v) = linalg::svd(x.as_ref()).unwrap();
        let mut resid = res.x.clone();
        for k in 0..10 {
            let c: f64 = (0..40).map(|i| v[(i, k)] * res.x[i]).sum();
            for i in 0..40 {
                resid[i] -= c * v[(i, k)];
            }
        }
        assert!(linalg::norm(&resid) <= 1e-8);
        let mn = min_norm_amplitudes(&x, &y).unwrap();
        let err: f64 = res.x.iter().zip(&mn).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-4 * linalg::norm(&mn), "{err}");
    }

    #[test]
    fn non_finite_objectives_are_reported() {
        let bad = FnObjective { dim: 1, f: |_: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            f64::NAN
        } };
        assert!(matches!(gd_line_search(&bad, &[0.0], &GdOptions::default()), Err(Error::NonFiniteObjective { iteration: 0 })));
        let cliff = FnObjective { dim: 1, f: |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            if x[0] == 0.0 { 0.0 } else { f64::INFINITY }
        } };
        assert!(matches!(gd_line_search(&cliff, &[0.0], &GdOptions::default()), Err(Error::NonFiniteObjective { .. })));
    }

    #[test]
    fn dataset_examples() {
        let one = Polynomial::constant(3, 1.0);
        let data = make_gotu_dataset(&GotuConstraint::fix(0, 1.0), &one, 65536, &InputLaw::Gaussian, 1).unwrap();
        assert!((0..data.len()).all(|s| data.input(s)[0] == 1.0));
        let xy = Polynomial::parse("x1*x2", 3).unwrap();
        let data = make_gotu_dataset(&GotuConstraint::product_vanish(0, 1, 1.0, 1.0), &xy, 2000, &InputLaw::Gaussian, 2).unwrap();
        for s in 0..data.len() {
            let x = data.input(s);
            assert_eq!((x[0] - 1.0) * (x[1] - 1.0), 0.0);
            assert_eq!(data.labels[s], x[0] * x[1]);
        }
        let again = make_gotu_dataset(&GotuConstraint::product_vanish(0, 1, 1.0, 1.0), &xy, 2000, &InputLaw::Gaussian, 2).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn grid_marginals_are_uniform() {
        let alphabet = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
        let one = Polynomial::constant(4, 1.0);
        let data = make_gotu_dataset(&GotuConstraint::fix(0, 1.0), &one, 20000, &InputLaw::UniformGrid(alphabet.clone()), 3).unwrap();
        // χ² with 4 degrees of freedom, 1% critical value 13.28
        for j in 1..4 {
            let mut counts = [0usize; 5];
            for s in 0..data.len() {
                counts[alphabet.iter().position(|&a| a == data.input(s)[j]).unwrap()] += 1;
            }
            let e = data.len() as f64 / 5.0;
            let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
            assert!(chi2 < 13.28, "coordinate {j}: {chi2}");
        }
        assert!(make_gotu_dataset(&GotuConstraint::fix(0, 0.5), &one, 10, &InputLaw::UniformGrid(alphabet), 3).is_err());
    }

    #[test]
    fn unity_dataset_respects_constraint() {
        let data = make_unity_dataset(&GotuConstraint::product_vanish(0, 1, 1.0, 1.0), |x| x[0] * x[1], "x1*x2", 4, 5, 300, 1).unwrap();
        for s in 0..300 {
            let x = &data.inputs[s * 5..(s + 1) * 5];
            assert!(x[0] == Complex64::new(1.0, 0.0) || x[1] == Complex64::new(1.0, 0.0));
            assert!(x.iter().all(|z| (z.powu(4) - 1.0).norm() < 1e-12));
        }
    }

    #[test]
    fn zero_labels_keep_zero_amplitudes() {
        let f = sample_features(&Regime::Sparse { d: 3 }, 32, 1).unwrap();
        let model = RFModel::new(f, Activation::Relu);
        let zero = Polynomial::constant(3, 0.0);
        let data = make_gotu_dataset(&GotuConstraint::fix(0, 1.0), &zero, 200, &InputLaw::Gaussian, 1).unwrap();
        let out = train_rf(&model, &data, TrainMethod::GdMse, &TrainOptions::default()).unwrap();
        assert!(out.amplitudes.iter().all(|&a| a == 0.0));
        assert_eq!(out.trace.last().unwrap().loss, 0.0);
    }

    #[test]
    fn spectral_gd_matches_direct_gd() {
        // primal (N < n) and dual (N > n) rotations reproduce plain GD on the amplitudes
        for (width, n) in [(20usize, 80usize), (60, 25)] {
            let f = sample_features(&Regime::Sparse { d: 3 }, width, 4).unwrap();
            let model = RFModel::new(f, Activation::Sigmoid);
            let t = Polynomial::parse("x2 + x3^2", 3).unwrap();
            let data = make_gotu_dataset(&GotuConstraint::fix(0, 1.0), &t, n, &InputLaw::Gaussian, 5).unwrap();
            let opts = TrainOptions { gd: GdOptions { max_iters: 300, ..GdOptions::default() }, ..TrainOptions::default() };
            let spectral = train_rf(&model, &data, TrainMethod::GdMse, &opts).unwrap();
            let x = design_block(&model.features, &model.activation, &data, 0..n, 0..width);
            let direct = gd_line_search(&LeastSquares { x, y: data.labels.clone() }, &vec![0.0; width], &opts.gd).unwrap();
            let err: f64 = spectral.amplitudes.iter().zip(&direct.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= 1e-6 * linalg::norm(&direct.x).max(1.0), "N={width} n={n}: {err}");
            let last = (spectral.trace.last().unwrap().loss - direct.trace.last().unwrap().loss).abs();
            assert!(last <= 1e-9, "{last}");
        }
    }

    #[test]
    fn polynomial_fast_path_matches_direct_kernel() {
        let f = sample_features(&Regime::Sparse { d: 3 }, 64, 6).unwrap();
        let model = RFModel::new(f, Activation::one_plus_pow(2));
        let t = Polynomial::constant(3, 1.0);
        let data = make_gotu_dataset(&GotuConstraint::fix(0, 1.0), &t, 300, &InputLaw::Gaussian, 7).unwrap();
        let (fm, m, hy) = hermite_moments(&model, &data).unwrap();
        let mf = linalg::matmul(m.as_ref(), fm.as_ref());
        let k = linalg::matmul(fm.transpose(), mf.as_ref());
        let c = linalg::mat_t_vec(fm.as_ref(), &hy);
        let x = design_block(&model.features, &model.activation, &data, 0..300, 0..64);
        let direct = linalg::matmul(x.transpose(), x.as_ref());
        let xy = linalg::mat_t_vec(x.as_ref(), &data.labels);
        for i in 0..64 {
            assert!((c[i] / 8.0 - xy[i] / 300.0).abs() < 1e-12);
            for j in 0..64 {
                assert!((k[(i, j)] / 64.0 - direct[(i, j)] / 300.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn low_rank_path_matches_direct_gd() {
        // both sides of N = n, on a seen set where the Hermite moments are singular
        for (width, n) in [(64usize, 300usize), (64, 40)] {
            let f = sample_features(&Regime::Sparse { d: 3 }, width, 14).unwrap();
            let model = RFModel::new(f, Activation::one_plus_pow(2));
            let t = Polynomial::parse("x2^2 + x3 + 1", 3).unwrap();
            let data = make_gotu_dataset(&GotuConstraint::fix(0, 1.0), &t, n, &InputLaw::Gaussian, 15).unwrap();
            assert!(hermite_moments(&model, &data).is_some());
            let opts = TrainOptions { gd: GdOptions { max_iters: 300, ..GdOptions::default() }, ..TrainOptions::default() };
            let spectral = train_rf(&model, &data, TrainMethod::GdMse, &opts).unwrap();
            let x = design_block(&model.features, &model.activation, &data, 0..n, 0..width);
            let direct = gd_line_search(&LeastSquares { x, y: data.labels.clone() }, &vec![0.0; width], &opts.gd).unwrap();
            let err: f64 = spectral.amplitudes.iter().zip(&direct.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= 1e-6 * linalg::norm(&direct.x).max(1.0), "N={width} n={n}: {err}");
            let last = (spectral.trace.last().unwrap().loss - direct.trace.last().unwrap().loss).abs();
            assert!(last <= 1e-9, "{last}");
        }
    }

    #[test]
    fn gd_from_zero_reaches_min_norm_interpolant() {
        let f = sample_features(&Regime::Sparse { d: 2 }, 200, 9).unwrap();
        let model = RFModel::new(f, Activation::Relu);
        let t = Polynomial::parse("x2", 2).unwrap();
        let data = make_gotu_dataset(&GotuConstraint::fix(0, 1.0), &t, 3, &InputLaw::Gaussian, 10).unwrap();
        let exact = train_rf(&model, &data, TrainMethod::MinNormExact, &TrainOptions::default()).unwrap();
        let opts = TrainOptions { gd: GdOptions { max_iters: 200_000, grad_tol: 1e-13, ..GdOptions::default() }, ..TrainOptions::default() };
        let gd = train_rf(&model, &data, TrainMethod::GdMse, &opts).unwrap();
        let err: f64 = gd.amplitudes.iter().zip(&exact.amplitudes).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-4 * linalg::norm(&exact.amplitudes), "{err} {} {:?}", gd.converged, gd.trace.last());
    }

    #[test]
    fn small_features_learn_the_constant() {
        let d = 2;
        let f = sample_features(&Regime::SmallFeatures { d, eps: 0.05f64.powi(2) }, 256, 11).unwrap();
        let model = RFModel::new(f, Activation::one_plus_pow(2));
        let one = Polynomial::constant(d, 1.0);
        let data = make_gotu_dataset(&GotuConstraint::fix(0, 1.0), &one, 4096, &InputLaw::Gaussian, 12).unwrap();
        let readout = vec![MultiIndex::zeros(d), MultiIndex::unit(d, 0)];
        let out = train_rf(&model, &data, TrainMethod::GdMse, &TrainOptions { readout: readout.clone(), ..TrainOptions::default() }).unwrap();
        let c = out.coef_trace.last().unwrap().1.clone();
        assert!((c[0] - 1.0).abs() <= 0.02, "{c:?}");
        let mut trained = model.clone();
        trained.amplitudes = out.amplitudes;
        let direct = readout_values(&trained, &readout).unwrap();
        assert!((direct[0] - c[0]).abs() < 1e-8 && (direct[1] - c[1]).abs() < 1e-8);
    }

    #[test]
    fn trace_csv_has_header() {
        let mut buf = Vec::new();
        write_trace_csv(&[TraceRow { iteration: 0, loss: 1.0, lipschitz: 1.0, grad_norm: 2.0 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,loss,L_n,grad_norm\n0,1,1,2\n");
    }
}
