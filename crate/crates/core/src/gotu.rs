//! Seen/unseen domain splits, interpolator spaces, minimum interpolator degree,
//! degree-energy profiles, target projection and the multi-index reduction.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use faer::Mat;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::basis::{hermite_eval, BasisTag, CoeffVector, Estimate, IndexSet, MultiIndex, MIN_BUDGET};
use crate::error::{invalid, Error, Result};
use crate::features::{smoothed_activation, Activation, Features, SmoothedActivation};
use crate::kernel::{constrained_quad_min, phi_unity, predict_limit_model, QuadFormProblem};
use crate::features::ComplexActivation;
use crate::linalg::{self, Matrix};
use crate::rng::{self, Rng};

/// Which part of the domain is seen in training. Coordinates are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstraintKind {
    FixCoordinate { i: usize, value: f64 },
    /// `(x_i − u)(x_j − v) = 0`.
    ProductVanish { i: usize, j: usize, u: f64, v: f64 },
    ExplicitSeenGrid { points: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GotuConstraint {
    pub kind: ConstraintKind,
    /// The finite per-coordinate alphabet when the domain is a grid.
    pub alphabet: Option<Vec<f64>>,
}

impl GotuConstraint {
    pub fn fix(i: usize, value: f64) -> Self {
        GotuConstraint { kind: ConstraintKind::FixCoordinate { i, value }, alphabet: None }
    }

    pub fn product_vanish(i: usize, j: usize, u: f64, v: f64) -> Self {
        GotuConstraint { kind: ConstraintKind::ProductVanish { i, j, u, v }, alphabet: None }
    }

    pub fn explicit(points: Vec<Vec<f64>>) -> Self {
        GotuConstraint { kind: ConstraintKind::ExplicitSeenGrid { points }, alphabet: None }
    }

    pub fn with_alphabet(mut self, alphabet: Vec<f64>) -> Self {
        self.alphabet = Some(alphabet);
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let in_alphabet = |v: f64| self.alphabet.as_ref().is_none_or(|a| a.contains(&v));
        match &self.kind {
            ConstraintKind::FixCoordinate { i, value } => {
                if *i >= d {
                    return Err(Error::UnsupportedConstraint(format!("coordinate {} outside dimension {d}", i + 1)));
                }
                if !in_alphabet(*value) {
                    return Err(Error::UnsupportedConstraint(format!("value {value} is not in the alphabet")));
                }
            }
            ConstraintKind::ProductVanish { i, j, u, v } => {
                if *i >= d || *j >= d || i == j {
                    return Err(Error::UnsupportedConstraint("product constraint needs two distinct coordinates".into()));
                }
                if !in_alphabet(*u) || !in_alphabet(*v) {
                    return Err(Error::UnsupportedConstraint("product constraint values are not in the alphabet".into()));
                }
            }
            ConstraintKind::ExplicitSeenGrid { points } => {
                if points.is_empty() {
                    return Err(Error::UnsupportedConstraint("the seen set is empty".into()));
                }
                if points.iter().any(|p| p.len() != d) {
                    return Err(Error::DimensionMismatch { expected: d, got: points.iter().map(Vec::len).find(|&l| l != d).unwrap_or(0) });
                }
            }
        }
        Ok(())
    }

    /// True iff `x` lies in the seen set.
    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            ConstraintKind::FixCoordinate { i, value } => x[*i] == *value,
            ConstraintKind::ProductVanish { i, j, u, v } => (x[*i] - u) * (x[*j] - v) == 0.0,
            ConstraintKind::ExplicitSeenGrid { points } => points.iter().any(|p| p.as_slice() == x),
        }
    }

    /// Coordinates touched by the constraint.
    pub fn coordinates(&self) -> Vec<usize> {
        match &self.kind {
            ConstraintKind::FixCoordinate { i, .. } => vec![*i],
            ConstraintKind::ProductVanish { i, j, .. } => vec![*i, *j],
            ConstraintKind::ExplicitSeenGrid { points } => (0..points.first().map_or(0, Vec::len)).collect(),
        }
    }

    /// Hyperplane slices `x_i = v` whose union is the seen set.
    fn slices(&self) -> Option<Vec<(usize, f64)>> {
        match &self.kind {
            ConstraintKind::FixCoordinate { i, value } => Some(vec![(*i, *value)]),
            ConstraintKind::ProductVanish { i, j, u, v } => Some(vec![(*i, *u), (*j, *v)]),
            ConstraintKind::ExplicitSeenGrid { .. } => None,
        }
    }
}

impl fmt::Display for GotuConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ConstraintKind::FixCoordinate { i, value } => write!(f, "x{}={value}", i + 1),
            ConstraintKind::ProductVanish { i, j, u, v } => write!(f, "(x{}-{u})(x{}-{v})=0", i + 1, j + 1),
            ConstraintKind::ExplicitSeenGrid { points } => write!(f, "explicit({} points)", points.len()),
        }
    }
}

/// Ambient input distribution before conditioning on the seen set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InputLaw {
    Gaussian,
    UniformGrid(Vec<f64>),
    UniformUnity(u32),
}

/// Draws one point of the seen set: ambient law, then hard-coded constrained
/// coordinates. Product constraints pick each branch with probability 1/2.
pub fn sample_seen(constraint: &GotuConstraint, law: &InputLaw, r: &mut Rng, out: &mut [f64]) -> Result<()> {
    match law {
        InputLaw::Gaussian => rng::fill_normal(r, out, 1.0),
        InputLaw::UniformGrid(alphabet) => {
            if alphabet.is_empty() {
                return Err(invalid("empty alphabet"));
            }
            for v in out.iter_mut() {
                *v = alphabet[r.random_range(0..alphabet.len())];
            }
        }
        InputLaw::UniformUnity(_) => return Err(Error::UnsupportedConstraint("roots-of-unity inputs are complex; use the unity dataset".into())),
    }
    match &constraint.kind {
        ConstraintKind::FixCoordinate { i, value } => out[*i] = *value,
        ConstraintKind::ProductVanish { i, j, u, v } => {
            if r.random::<bool>() {
                out[*i] = *u;
            } else {
                out[*j] = *v;
            }
        }
        ConstraintKind::ExplicitSeenGrid { points } => out.copy_from_slice(&points[r.random_range(0..points.len())]),
    }
    Ok(())
}

/// One sparse direction of the homogeneous solution space.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDirection {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

/// The affine space of degree-`≤p` interpolators of a target on the seen set.
#[derive(Clone, Debug)]
pub struct InterpolatorSpace {
    pub basis_tag: BasisTag,
    pub index: IndexSet,
    /// Dense over `index`.
    pub particular: Vec<f64>,
    /// Orthonormal; supports of distinct directions may overlap only within a component.
    pub directions: Vec<SparseDirection>,
    pub constraint_rank: usize,
}

impl InterpolatorSpace {
    pub fn particular_coeffs(&self) -> CoeffVector<f64> {
        CoeffVector::from_dense_tagged(self.basis_tag.clone(), &self.index, &self.particular)
    }

    /// `particular + Σ tₖ directionₖ`.
    pub fn point(&self, t: &[f64]) -> CoeffVector<f64> {
        let mut g = self.particular.clone();
        for (dir, &tk) in self.directions.iter().zip(t) {
            for (&i, &v) in dir.idx.iter().zip(&dir.val) {
                g[i] += tk * v;
            }
        }
        CoeffVector::from_dense_tagged(self.basis_tag.clone(), &self.index, &g)
    }
}

/// Evaluates the basis element of order `t` in one coordinate at `v`.
fn restriction_value(basis: &BasisTag, t: u32, v: f64) -> Result<f64> {
    match basis {
        BasisTag::Hermite { .. } => Ok(hermite_eval(t, v)),
        BasisTag::UnityFourier { n, .. } => {
            let on_circle = v == 1.0 || (v == -1.0 && n % 2 == 0);
            if !on_circle {
                return Err(Error::UnsupportedConstraint(format!("{v} is not a real {n}-th root of unity")));
            }
            Ok(v.powi(t as i32))
        }
        BasisTag::GridMonomial { .. } => Err(Error::UnsupportedConstraint("interpolator spaces use Hermite or Fourier coefficients".into())),
    }
}

struct Row {
    cols: Vec<(usize, f64)>,
    rhs: f64,
}

const RANK_TOL: f64 = 1e-9;

/// Interpolators of degree `≤ p` agreeing with `target` on the seen set.
///
/// Slice constraints `x_i = v` are imposed exactly through the restriction map
/// `c ↦ (Σ_t c_{T'+t eᵢ} B_t(v))_{T'}`, which is equivalent to agreement on the
/// whole slice. Explicit grids impose pointwise evaluations. The system splits
/// into independent components, each reduced by SVD.
pub fn interpolator_space(constraint: &GotuConstraint, target: &CoeffVector<f64>, p: u32) -> Result<InterpolatorSpace> {
    let d = target.basis().dim();
    constraint.validate(d)?;
    let basis_tag = match target.basis() {
        BasisTag::Hermite { .. } => BasisTag::Hermite { d, p },
        BasisTag::UnityFourier { n, .. } => {
            if p >= *n {
                return Err(Error::UnsupportedConstraint(format!("degree cap {p} aliases on the {n}-th roots of unity")));
            }
            BasisTag::UnityFourier { n: *n, d }
        }
        BasisTag::GridMonomial { .. } => return Err(Error::UnsupportedConstraint("grid-monomial targets are not supported".into())),
    };
    if let Some(a) = &constraint.alphabet {
        if p as usize >= a.len() {
            return Err(Error::UnsupportedConstraint(format!("degree cap {p} exceeds |alphabet|−1 = {}", a.len().saturating_sub(1))));
        }
    }
    let index = IndexSet::graded(d, p);
    let k = index.len();
    let mut rows: Vec<Row> = Vec::new();
    if let Some(slices) = constraint.slices() {
        let mut keyed: BTreeMap<(usize, Vec<u32>), Row> = BTreeMap::new();
        for (s, &(i, v)) in slices.iter().enumerate() {
            for (q, t) in index.indices().iter().enumerate() {
                let rest = t.with(i, 0).exponents().to_vec();
                let val = restriction_value(&basis_tag, t.exponents()[i], v)?;
                keyed.entry((s, rest)).or_insert_with(|| Row { cols: Vec::new(), rhs: 0.0 }).cols.push((q, val));
            }
            for (t, &c) in target.iter() {
                let rest = t.with(i, 0).exponents().to_vec();
                let val = restriction_value(&basis_tag, t.exponents()[i], v)?;
                keyed.entry((s, rest)).or_insert_with(|| Row { cols: Vec::new(), rhs: 0.0 }).rhs += c * val;
            }
        }
        rows.extend(keyed.into_values());
    } else if let ConstraintKind::ExplicitSeenGrid { points } = &constraint.kind {
        if !matches!(basis_tag, BasisTag::Hermite { .. }) {
            return Err(Error::UnsupportedConstraint("explicit seen grids are real-valued".into()));
        }
        let mut table = Vec::new();
        let mut chi = vec![0.0; k];
        for x in points {
            index.eval_chi(x, &mut table, &mut chi);
            let cols = chi.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(q, &v)| (q, v)).collect();
            rows.push(Row { cols, rhs: target.eval_hermite(x) });
        }
    }
    let scale = target.iter().map(|(_, v)| v.abs()).fold(1.0, f64::max);
    let mut parent: Vec<usize> = (0..k).collect();
    for row in &rows {
        if row.rhs.abs() > 1e-9 * scale && row.cols.is_empty() {
            return Err(Error::EmptySpace { degree: p });
        }
        for w in row.cols.windows(2) {
            union(&mut parent, w[0].0, w[1].0);
        }
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for q in 0..k {
        let r = find(&mut parent, q);
        members.entry(r).or_default().push(q);
    }
    let mut comp_rows: BTreeMap<usize, Vec<&Row>> = BTreeMap::new();
    for row in rows.iter().filter(|r| !r.cols.is_empty()) {
        let r = find(&mut parent, row.cols[0].0);
        comp_rows.entry(r).or_default().push(row);
    }
    let mut particular = vec![0.0; k];
    let mut directions = Vec::new();
    let mut constraint_rank = 0;
    for (root, cols) in members {
        let local: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(a, &q)| (q, a)).collect();
        let rs = comp_rows.remove(&root).unwrap_or_default();
        let m = cols.len();
        if rs.is_empty() {
            for &q in &cols {
                directions.push(SparseDirection { idx: vec![q], val: vec![1.0] });
            }
            continue;
        }
        let a = Mat::from_fn(rs.len(), m, |r, c| rs[r].cols.iter().filter(|(q, _)| local[q] == c).map(|(_, v)| v).sum());
        let b: Vec<f64> = rs.iter().map(|r| r.rhs).collect();
        let (u, s, v) = linalg::svd(a.as_ref())?;
        let top = s.first().copied().unwrap_or(0.0);
        let rank = s.iter().filter(|&&x| x > RANK_TOL * top).count();
        constraint_rank += rank;
        let mut x = vec![0.0; m];
        for l in 0..rank {
            let coef: f64 = (0..rs.len()).map(|r| u[(r, l)] * b[r]).sum::<f64>() / s[l];
            for c in 0..m {
                x[c] += coef * v[(c, l)];
            }
        }
        let ax = linalg::mat_vec(a.as_ref(), &x);
        let resid = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        if resid > 1e-8 * scale {
            return Err(Error::EmptySpace { degree: p });
        }
        for (c, &q) in cols.iter().enumerate() {
            particular[q] = x[c];
        }
        for l in rank..m {
            directions.push(SparseDirection { idx: cols.clone(), val: (0..m).map(|c| v[(c, l)]).collect() });
        }
    }
    Ok(InterpolatorSpace { basis_tag, index, particular, directions, constraint_rank })
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

/// Smallest `p` admitting a degree-`≤p` interpolator on the seen set.
pub fn min_degree(constraint: &GotuConstraint, target: &CoeffVector<f64>) -> Result<u32> {
    let top = target.max_degree();
    for p in 0..top {
        match interpolator_space(constraint, target, p) {
            Ok(_) => return Ok(p),
            Err(Error::EmptySpace { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(top)
}

/// `k ↦ Σ_{|T|=k} ĝ(T)²`.
pub fn energy_profile(coeffs: &CoeffVector<f64>) -> BTreeMap<u32, f64> {
    let mut e = BTreeMap::new();
    for (t, &v) in coeffs.iter() {
        *e.entry(t.total_degree()).or_insert(0.0) += v * v;
    }
    e
}

/// `√(Σ_{k>p} e(k))`.
pub fn dist_above(coeffs: &CoeffVector<f64>, p: u32) -> f64 {
    energy_profile(coeffs).range(p + 1..).map(|(_, e)| e).sum::<f64>().sqrt()
}

/// Least-squares projection of `f` onto degree-`≤p` Hermite polynomials under
/// the empirical law of `budget` seen points.
///
/// On slices the Hermite design is rank deficient; the minimum-norm solution
/// is returned. Standard errors use the sandwich estimator.
pub fn project_target<F>(f: F, d: usize, p: u32, constraint: &GotuConstraint, law: &InputLaw, budget: usize, seed: u64) -> Result<Estimate<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    constraint.validate(d)?;
    if budget < MIN_BUDGET {
        return Err(Error::BudgetTooSmall { budget, minimum: MIN_BUDGET });
    }
    let index = IndexSet::graded(d, p);
    let k = index.len();
    let mut r = rng::stream(seed, 0);
    let mut x = vec![0.0; d];
    let mut table = Vec::new();
    let mut design = Mat::zeros(budget, k);
    let mut y = vec![0.0; budget];
    let mut chi = vec![0.0; k];
    for s in 0..budget {
        sample_seen(constraint, law, &mut r, &mut x)?;
        index.eval_chi(&x, &mut table, &mut chi);
        for q in 0..k {
            design[(s, q)] = chi[q];
        }
        y[s] = f(&x);
    }
    let n = budget as f64;
    let mut gram = linalg::matmul(design.transpose(), design.as_ref());
    for v in gram.as_mut().col_iter_mut().flat_map(|c| c.iter_mut()) {
        *v /= n;
    }
    linalg::symmetrize(&mut gram);
    let (ev, vecs) = linalg::sym_eigen(gram.as_ref())?;
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditionedGram("non-finite Gram matrix".into()));
    }
    let top = ev.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..k).filter(|&l| ev[l] > 1e-9 * top).collect();
    let zero = CoeffVector::new(BasisTag::Hermite { d, p });
    let identifiable = interpolator_space(constraint, &zero, p).map(|s| s.constraint_rank).unwrap_or(k);
    if keep.len() < identifiable {
        return Err(Error::IllConditionedGram(format!("rank {} below the {identifiable} identifiable combinations", keep.len())));
    }
    let pinv = Mat::from_fn(k, k, |i, j| keep.iter().map(|&l| vecs[(i, l)] * vecs[(j, l)] / ev[l]).sum());
    let xty: Vec<f64> = linalg::mat_t_vec(design.as_ref(), &y).iter().map(|v| v / n).collect();
    let coef = linalg::mat_vec(pinv.as_ref(), &xty);
    let fitted = linalg::mat_vec(design.as_ref(), &coef);
    let weighted = Mat::from_fn(budget, k, |s, q| design[(s, q)] * (y[s] - fitted[s]));
    let meat = linalg::matmul(weighted.transpose(), weighted.as_ref());
    let cov = linalg::matmul(linalg::matmul(pinv.as_ref(), meat.as_ref()).as_ref(), pinv.as_ref());
    let mut coeffs = CoeffVector::new(BasisTag::Hermite { d, p });
    let mut stderr = BTreeMap::new();
    for (q, t) in index.indices().iter().enumerate() {
        coeffs.insert(t.clone(), coef[q])?;
        stderr.insert(t.clone(), (cov[(q, q)].max(0.0)).sqrt() / n);
    }
    Ok(Estimate { coeffs, stderr })
}

/// `f(x) = φ(Uᵀx)` with orthonormal columns `U ∈ ℝ^{d×k}`.
#[derive(Clone)]
pub struct MultiIndexModel {
    pub projection_u: Matrix,
    inner: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for MultiIndexModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiIndexModel").field("d", &self.projection_u.nrows()).field("k", &self.projection_u.ncols()).finish()
    }
}

impl MultiIndexModel {
    pub fn new(projection_u: Matrix, inner: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let k = projection_u.ncols();
        let utu = linalg::matmul(projection_u.transpose(), projection_u.as_ref());
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                if (utu[(i, j)] - want).abs() > 1e-12 {
                    return Err(invalid("projection columns are not orthonormal"));
                }
            }
        }
        Ok(MultiIndexModel { projection_u, inner: Arc::new(inner) })
    }

    pub fn dim(&self) -> usize {
        self.projection_u.nrows()
    }

    pub fn k(&self) -> usize {
        self.projection_u.ncols()
    }

    pub fn inner(&self, z: &[f64]) -> f64 {
        (self.inner)(z)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.inner(&linalg::mat_t_vec(self.projection_u.as_ref(), x))
    }

    /// Coordinates selected by `U` when its columns are canonical vectors.
    fn canonical_coordinates(&self) -> Option<Vec<usize>> {
        let u = &self.projection_u;
        (0..u.ncols())
            .map(|c| {
                let nz: Vec<usize> = (0..u.nrows()).filter(|&r| u[(r, c)] != 0.0).collect();
                (nz.len() == 1 && u[(nz[0], c)] == 1.0).then(|| nz[0])
            })
            .collect()
    }
}

/// Input laws with independent parallel and orthogonal parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProductLaw {
    Gaussian,
    /// Uniform signs; requires canonical-basis projections.
    Hypercube,
}

/// Reduced features `σ̄ᵢ(⟨Uᵀwᵢ, z⟩ + cᵢ)` and the penalty matrix `Λ`.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub projected: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub smoothed: Vec<SmoothedActivation>,
    pub lambda: Matrix,
    pub lambda_stderr: Matrix,
}

pub const LAMBDA_BUDGET: usize = 1 << 18;
pub const MAX_REDUCTION_FEATURES: usize = 256;
const MAX_DISCRETE_OFFSET_VARS: usize = 20;

struct ReductionSetup {
    perp: Vec<Vec<f64>>,
    projected: Vec<Vec<f64>>,
}

fn reduction_setup(model: &MultiIndexModel, features: &Features, law: ProductLaw) -> Result<ReductionSetup> {
    let d = model.dim();
    if features.d != d {
        return Err(Error::DimensionMismatch { expected: d, got: features.d });
    }
    if features.len() > MAX_REDUCTION_FEATURES {
        return Err(Error::UnsupportedDimensions(format!("at most {MAX_REDUCTION_FEATURES} features")));
    }
    if law == ProductLaw::Hypercube && model.canonical_coordinates().is_none() {
        return Err(Error::AssumptionViolated("hypercube inputs need a canonical-basis projection for independent parts".into()));
    }
    let u = model.projection_u.as_ref();
    let mut perp = Vec::new();
    let mut projected = Vec::new();
    for i in 0..features.len() {
        let w = features.weight(i);
        let z = linalg::mat_t_vec(u, w);
        let back = linalg::mat_vec(u, &z);
        perp.push(w.iter().zip(&back).map(|(a, b)| a - b).collect());
        projected.push(z);
    }
    Ok(ReductionSetup { perp, projected })
}

/// Draws `z = Uᵀx` and two independent orthogonal parts, returned as `⟨wᵢ⊥, x⊥⟩` rows.
fn draw_parts(model: &MultiIndexModel, setup: &ReductionSetup, law: ProductLaw, r: &mut Rng, z: &mut [f64], o1: &mut [f64], o2: &mut [f64]) {
    let d = model.dim();
    let mut g = vec![0.0; d];
    match law {
        ProductLaw::Gaussian => rng::fill_normal(r, z, 1.0),
        ProductLaw::Hypercube => {
            for v in z.iter_mut() {
                *v = if r.random::<bool>() { 1.0 } else { -1.0 };
            }
        }
    }
    for o in [o1, o2] {
        match law {
            ProductLaw::Gaussian => rng::fill_normal(r, &mut g, 1.0),
            ProductLaw::Hypercube => {
                for v in g.iter_mut() {
                    *v = if r.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
        }
        for (i, wp) in setup.perp.iter().enumerate() {
            o[i] = linalg::dot(wp, &g);
        }
    }
}

fn smoothed_for(setup: &ReductionSetup, activation: &Activation, law: ProductLaw) -> Result<Vec<SmoothedActivation>> {
    setup
        .perp
        .iter()
        .map(|wp| match law {
            ProductLaw::Gaussian => smoothed_activation(activation, linalg::dot(wp, wp)),
            ProductLaw::Hypercube => {
                let coords: Vec<usize> = (0..wp.len()).filter(|&c| wp[c] != 0.0).collect();
                if coords.len() > MAX_DISCRETE_OFFSET_VARS {
                    return Err(Error::UnsupportedDimensions(format!("at most {MAX_DISCRETE_OFFSET_VARS} orthogonal coordinates")));
                }
                let offsets = (0..1u64 << coords.len())
                    .map(|mask| coords.iter().enumerate().map(|(b, &c)| if mask >> b & 1 == 1 { wp[c] } else { -wp[c] }).sum())
                    .collect();
                Ok(SmoothedActivation::Discrete { activation: activation.clone(), offsets })
            }
        })
        .collect()
}

/// Splits each feature into its projection on `U` and smoothing noise from the
/// orthogonal part, and estimates
/// `Λᵢⱼ = E_z[cov_{x⊥}(σ(⟨wᵢ,x⟩+cᵢ), σ(⟨wⱼ,x⟩+cⱼ))]`
/// from paired draws `½(sᵢ − s'ᵢ)(sⱼ − s'ⱼ)` sharing `z`.
pub fn reduce_multi_index(model: &MultiIndexModel, features: &Features, activation: &Activation, law: ProductLaw, budget: usize, seed: u64) -> Result<Reduction> {
    if budget < MIN_BUDGET {
        return Err(Error::BudgetTooSmall { budget, minimum: MIN_BUDGET });
    }
    let setup = reduction_setup(model, features, law)?;
    let smoothed = smoothed_for(&setup, activation, law)?;
    let n = features.len();
    let k = model.k();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let (mean, se) = crate::basis::monte_carlo_moments(budget, seed, pairs.len(), |r, out| {
        let mut z = vec![0.0; k];
        let mut o1 = vec![0.0; n];
        let mut o2 = vec![0.0; n];
        draw_parts(model, &setup, law, r, &mut z, &mut o1, &mut o2);
        let delta: Vec<f64> = (0..n)
            .map(|i| {
                let base = linalg::dot(&setup.projected[i], &z) + features.b[i];
                activation.eval(base + o1[i]) - activation.eval(base + o2[i])
            })
            .collect();
        for (slot, &(i, j)) in out.iter_mut().zip(&pairs) {
            *slot = 0.5 * delta[i] * delta[j];
        }
    });
    let mut lambda = Mat::zeros(n, n);
    let mut lambda_stderr = Mat::zeros(n, n);
    for (q, &(i, j)) in pairs.iter().enumerate() {
        lambda[(i, j)] = mean[q];
        lambda[(j, i)] = mean[q];
        lambda_stderr[(i, j)] = se[q];
        lambda_stderr[(j, i)] = se[q];
    }
    Ok(Reduction { projected: setup.projected, biases: features.b.clone(), smoothed, lambda, lambda_stderr })
}

/// Independent Monte-Carlo estimates of the three sides of
/// `E(f − f_RF)² = E_z(φ − f̄_RF)² + aᵀΛa/N` for one amplitude vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecompositionRow {
    pub full: f64,
    pub full_se: f64,
    pub reduced: f64,
    pub reduced_se: f64,
    pub penalty: f64,
    pub penalty_se: f64,
}

impl DecompositionRow {
    pub fn gap(&self) -> f64 {
        self.full - self.reduced - self.penalty
    }

    pub fn combined_stderr(&self) -> f64 {
        (self.full_se.powi(2) + self.reduced_se.powi(2) + self.penalty_se.powi(2)).sqrt()
    }
}

/// Checks the reduction identity for each amplitude vector, with the model
/// normalized as `N^{-1/2} Σ aᵢ σ(⟨wᵢ,x⟩+cᵢ)`.
pub fn decomposition_check(model: &MultiIndexModel, features: &Features, activation: &Activation, law: ProductLaw, amplitudes: &[Vec<f64>], budget: usize, seed: u64) -> Result<Vec<DecompositionRow>> {
    if budget < MIN_BUDGET {
        return Err(Error::BudgetTooSmall { budget, minimum: MIN_BUDGET });
    }
    let setup = reduction_setup(model, features, law)?;
    let smoothed = smoothed_for(&setup, activation, law)?;
    let n = features.len();
    let k = model.k();
    let d = model.dim();
    let norm = (n as f64).sqrt();
    if amplitudes.iter().any(|a| a.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: amplitudes.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0) });
    }
    let m = amplitudes.len();
    let (full, full_se) = crate::basis::monte_carlo_moments(budget, rng::derive(seed, 1), m, |r, out| {
        let mut x = vec![0.0; d];
        match law {
            ProductLaw::Gaussian => rng::fill_normal(r, &mut x, 1.0),
            ProductLaw::Hypercube => {
                for v in x.iter_mut() {
                    *v = if r.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
        }
        let y = model.eval(&x);
        let s: Vec<f64> = (0..n).map(|i| activation.eval(linalg::dot(features.weight(i), &x) + features.b[i])).collect();
        for (o, a) in out.iter_mut().zip(amplitudes) {
            *o = (y - linalg::dot(a, &s) / norm).powi(2);
        }
    });
    let (reduced, reduced_se) = crate::basis::monte_carlo_moments(budget, rng::derive(seed, 2), m, |r, out| {
        let mut z = vec![0.0; k];
        match law {
            ProductLaw::Gaussian => rng::fill_normal(r, &mut z, 1.0),
            ProductLaw::Hypercube => {
                for v in z.iter_mut() {
                    *v = if r.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
        }
        let y = model.inner(&z);
        let s: Vec<f64> = (0..n).map(|i| smoothed[i].eval(linalg::dot(&setup.projected[i], &z) + features.b[i])).collect();
        for (o, a) in out.iter_mut().zip(amplitudes) {
            *o = (y - linalg::dot(a, &s) / norm).powi(2);
        }
    });
    let (penalty, penalty_se) = crate::basis::monte_carlo_moments(budget, rng::derive(seed, 3), m, |r, out| {
        let mut z = vec![0.0; k];
        let mut o1 = vec![0.0; n];
        let mut o2 = vec![0.0; n];
        draw_parts(model, &setup, law, r, &mut z, &mut o1, &mut o2);
        let delta: Vec<f64> = (0..n)
            .map(|i| {
                let base = linalg::dot(&setup.projected[i], &z) + features.b[i];
                activation.eval(base + o1[i]) - activation.eval(base + o2[i])
            })
            .collect();
        for (o, a) in out.iter_mut().zip(amplitudes) {
            *o = 0.5 * linalg::dot(a, &delta).powi(2) / n as f64;
        }
    });
    Ok((0..m)
        .map(|q| DecompositionRow { full: full[q], full_se: full_se[q], reduced: reduced[q], reduced_se: reduced_se[q], penalty: penalty[q], penalty_se: penalty_se[q] })
        .collect())
}

/// Minimizes the leading-order quadratic form for `σ = (1+x)²` under
/// `ĝ(0) + ĝ(e₁) = 1` at finite `d`, returning `(ĝ(0), ĝ(e₁), ĝ(2e₁))`.
///
/// Only these three coefficients couple to the constraint; all others vanish at the optimum.
pub fn example1_asymptotic(d: usize) -> Result<(f64, f64, f64)> {
    if d < 2 {
        return Err(invalid("the example needs d ≥ 2"));
    }
    let df = d as f64;
    let cross = -(2f64.sqrt()) * df / 6.0;
    let a = Mat::from_fn(3, 3, |i, j| match (i, j) {
        (0, 0) => df / 6.0,
        (1, 1) => df / 4.0,
        (2, 2) => df * df / 4.0,
        (0, 2) | (2, 0) => cross,
        _ => 0.0,
    });
    let s = 1.0 / 2f64.sqrt();
    let directions = Mat::from_fn(3, 2, |i, j| match (i, j) {
        (0, 0) => s,
        (1, 0) => -s,
        (2, 1) => 1.0,
        _ => 0.0,
    });
    let x = constrained_quad_min(&QuadFormProblem { a, x0: vec![1.0, 0.0, 0.0], directions })?;
    Ok((x[0], x[1], x[2]))
}

/// Limit-predictor energy above degree 1 for `f = x₁x₂` on `𝕌ₙ^d` seen on
/// `{x₁ = 1} ∪ {x₂ = 1}`, for each `d`.
pub fn unity_energy_sweep(n: u32, d_list: &[usize], activation: &ComplexActivation) -> Result<Vec<(usize, f64)>> {
    d_list
        .iter()
        .map(|&d| {
            if d < 2 {
                return Err(invalid("the sweep needs d ≥ 2"));
            }
            let phi = phi_unity(n, d, activation)?;
            let mut target = CoeffVector::new(BasisTag::UnityFourier { n, d });
            target.insert(MultiIndex::from_pairs(d, &[(0, 1), (1, 1)]), 1.0)?;
            let space = interpolator_space(&GotuConstraint::product_vanish(0, 1, 1.0, 1.0), &target, activation.degree())?;
            let g = predict_limit_model(&phi, &space)?;
            Ok((d, dist_above(&g, 1).powi(2)))
        })
        .collect()
}
