//! Random features `φ_{w,b}(x) = σ(⟨w,x⟩ + b)` and their Hermite coefficients.
//!
//! The coefficient of `χ_T` in `φ_{w,b}` is `w^T/√T! · E[σ^{(|T|)}(b + ‖w‖Z)]`,
//! computed in closed form for polynomial and ReLU activations and by
//! Gauss–Hermite quadrature for sigmoid and softplus.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisTag, CoeffVector, IndexSet, MultiIndex};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::quadrature::{binomial, factorial, gaussian_moment, normal_cdf, normal_pdf, GaussHermite};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    /// `σ(y) = Σ bₖ yᵏ` with coefficients `b₀…b_p`.
    Polynomial(Vec<f64>),
    Relu,
    /// `ReLU(y) − 1`.
    ShiftedRelu,
    Sigmoid,
    Softplus,
}

const SMOOTH_NODES: usize = 64;

impl Activation {
    /// `(1+y)^k`.
    pub fn one_plus_pow(k: u32) -> Self {
        Activation::Polynomial((0..=k).map(|j| binomial(k, j)).collect())
    }

    pub fn name(&self) -> String {
        match self {
            Activation::Polynomial(c) => {
                let k = c.len().saturating_sub(1) as u32;
                if *self == Activation::one_plus_pow(k) {
                    format!("(1+x)^{k}")
                } else {
                    format!("poly[{}]", c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
                }
            }
            Activation::Relu => "relu".into(),
            Activation::ShiftedRelu => "shifted-relu".into(),
            Activation::Sigmoid => "sigmoid".into(),
            Activation::Softplus => "softplus".into(),
        }
    }

    pub fn polynomial_coeffs(&self) -> Option<&[f64]> {
        match self {
            Activation::Polynomial(c) => Some(c),
            _ => None,
        }
    }

    pub fn degree(&self) -> Option<u32> {
        self.polynomial_coeffs().map(|c| {
            c.iter().rposition(|&v| v != 0.0).unwrap_or(0) as u32
        })
    }

    /// True iff every Taylor coefficient up to the degree is nonzero.
    pub fn all_nonzero(&self) -> bool {
        match self {
            Activation::Polynomial(c) => !c.is_empty() && c.iter().all(|&v| v != 0.0),
            _ => false,
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Activation::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &b| acc * y + b),
            Activation::Relu => y.max(0.0),
            Activation::ShiftedRelu => y.max(0.0) - 1.0,
            Activation::Sigmoid => sigmoid(y),
            Activation::Softplus => y.max(0.0) + (-y.abs()).exp().ln_1p(),
        }
    }

    /// `σ^{(m)}(y)` where a closed form is implemented.
    pub fn derivative(&self, m: u32, y: f64) -> Option<f64> {
        match self {
            Activation::Polynomial(c) => Some(poly_derivative_eval(c, m, y)),
            Activation::Relu | Activation::ShiftedRelu => match m {
                0 => Some(self.eval(y)),
                1 => Some(if y > 0.0 { 1.0 } else { 0.0 }),
                _ => Some(0.0),
            },
            Activation::Sigmoid => sigmoid_derivative(m, y),
            Activation::Softplus => {
                if m == 0 {
                    Some(self.eval(y))
                } else {
                    sigmoid_derivative(m - 1, y)
                }
            }
        }
    }

    /// `E[σ^{(m)}(b + sZ)]` for `Z ~ N(0,1)` and `s ≥ 0`.
    pub fn gaussian_derivative_mean(&self, m: u32, b: f64, s: f64) -> f64 {
        if s == 0.0 {
            return self.derivative(m, b).unwrap_or(0.0);
        }
        match self {
            Activation::Polynomial(c) => {
                let dc = poly_derivative_coeffs(c, m);
                dc.iter().enumerate().map(|(k, &ck)| ck * gaussian_power_mean(k as u32, b, s)).sum()
            }
            Activation::Relu | Activation::ShiftedRelu => {
                let u = b / s;
                match m {
                    0 => b * normal_cdf(u) + s * normal_pdf(u) - if *self == Activation::ShiftedRelu { 1.0 } else { 0.0 },
                    1 => normal_cdf(u),
                    _ => {
                        let j = m - 2;
                        crate::basis::hermite_he(j, -u) * normal_pdf(u) / s.powi(j as i32 + 1)
                    }
                }
            }
            Activation::Sigmoid | Activation::Softplus => {
                let q = GaussHermite::new(SMOOTH_NODES);
                if self.derivative(m, 0.0).is_some() {
                    q.expect(b, s, |y| self.derivative(m, y).expect("closed form exists"))
                } else {
                    q.nodes
                        .iter()
                        .zip(&q.weights)
                        .map(|(z, w)| w * self.eval(b + s * z) * crate::basis::hermite_he(m, *z))
                        .sum::<f64>()
                        / s.powi(m as i32)
                }
            }
        }
    }
}

fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

fn sigmoid_derivative(m: u32, y: f64) -> Option<f64> {
    let g = sigmoid(y);
    let g1 = g * (1.0 - g);
    match m {
        0 => Some(g),
        1 => Some(g1),
        2 => Some(g1 * (1.0 - 2.0 * g)),
        3 => Some(g1 * (1.0 - 6.0 * g + 6.0 * g * g)),
        4 => Some(g1 * (1.0 - 2.0 * g) * (1.0 - 12.0 * g + 12.0 * g * g)),
        _ => None,
    }
}

fn poly_derivative_coeffs(c: &[f64], m: u32) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(m as usize)
        .map(|(k, &ck)| ck * factorial(k as u32) / factorial(k as u32 - m))
        .collect()
}

fn poly_derivative_eval(c: &[f64], m: u32, y: f64) -> f64 {
    poly_derivative_coeffs(c, m).iter().rev().fold(0.0, |acc, &v| acc * y + v)
}

/// `E[(b + sZ)^k]`.
pub fn gaussian_power_mean(k: u32, b: f64, s: f64) -> f64 {
    (0..=k)
        .step_by(2)
        .map(|i| binomial(k, i) * b.powi((k - i) as i32) * s.powi(i as i32) * gaussian_moment(i))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    /// `w ~ N(0, I/d)`, `b ~ N(0, 1/d)`.
    Sparse { d: usize },
    /// `w ~ N(0, εI)`, `b ~ N(0, ε)`.
    SmallFeatures { d: usize, eps: f64 },
}

impl Regime {
    pub fn dim(&self) -> usize {
        match *self {
            Regime::Sparse { d } | Regime::SmallFeatures { d, .. } => d,
        }
    }

    /// Shared variance of each weight coordinate and of the bias.
    pub fn variance(&self) -> f64 {
        match *self {
            Regime::Sparse { d } => 1.0 / d as f64,
            Regime::SmallFeatures { eps, .. } => eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if let Regime::SmallFeatures { eps, .. } = *self {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::NegativeVariance(eps));
            }
        }
        Ok(())
    }
}

/// `N` frozen feature pairs; weights are stored row-major `N × d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub d: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Features {
    pub fn new(d: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if w.len() != d * b.len() {
            return Err(Error::DimensionMismatch { expected: d * b.len(), got: w.len() });
        }
        Ok(Features { d, w, b })
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn weight(&self, i: usize) -> &[f64] {
        &self.w[i * self.d..(i + 1) * self.d]
    }
}

pub fn sample_features(regime: &Regime, n: usize, seed: u64) -> Result<Features> {
    regime.validate()?;
    if n == 0 {
        return Err(invalid("need at least one feature"));
    }
    let d = regime.dim();
    let sd = regime.variance().sqrt();
    let mut r = rng::stream(seed, 0);
    let mut w = vec![0.0; n * d];
    let mut b = vec![0.0; n];
    for i in 0..n {
        rng::fill_normal(&mut r, &mut w[i * d..(i + 1) * d], sd);
        b[i] = sd * rng::normal(&mut r);
    }
    Ok(Features { d, w, b })
}

/// Dense Hermite coefficients of one feature over `index`.
pub fn feature_hermite_coeffs(w: &[f64], b: f64, activation: &Activation, index: &IndexSet, out: &mut [f64]) {
    let s = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let means: Vec<f64> = (0..=index.max_degree()).map(|m| activation.gaussian_derivative_mean(m, b, s)).collect();
    for (k, o) in out.iter_mut().enumerate() {
        let t = index.get(k);
        let mut mono = 1.0;
        let mut fact = 1.0;
        for &(i, e) in index.support(k) {
            mono *= w[i].powi(e as i32);
            fact *= factorial(e);
        }
        *o = mono / fact.sqrt() * means[t.total_degree() as usize];
    }
}

/// Exact Hermite coefficients of a polynomial-activation feature over `ℕ^d_{≤p}`.
pub fn feature_hermite_coeffs_poly(w: &[f64], b: f64, activation: &Activation, p: u32) -> Result<CoeffVector<f64>> {
    if activation.polynomial_coeffs().is_none() {
        return Err(Error::NonPolynomialActivation);
    }
    let index = IndexSet::graded(w.len(), p);
    let mut out = vec![0.0; index.len()];
    feature_hermite_coeffs(w, b, activation, &index, &mut out);
    let mut cv = CoeffVector::new(BasisTag::Hermite { d: w.len(), p });
    for (t, v) in index.indices().iter().zip(out) {
        if v != 0.0 {
            cv.insert(t.clone(), v)?;
        }
    }
    Ok(cv)
}

/// Coefficient design `F` with `F[k, i] = φ̂_{wᵢ,bᵢ}(T_k)`.
pub fn coefficient_matrix(features: &Features, activation: &Activation, index: &IndexSet) -> Matrix {
    let mut f = Matrix::zeros(index.len(), features.len());
    let mut col = vec![0.0; index.len()];
    for i in 0..features.len() {
        feature_hermite_coeffs(features.weight(i), features.b[i], activation, index, &mut col);
        for (k, &v) in col.iter().enumerate() {
            f[(k, i)] = v;
        }
    }
    f
}

/// `f_RF(a;x) = (1/√N) Σ aᵢ σ(⟨wᵢ,x⟩ + bᵢ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RFModel {
    pub features: Features,
    pub activation: Activation,
    pub amplitudes: Vec<f64>,
}

impl RFModel {
    pub fn new(features: Features, activation: Activation) -> Self {
        let n = features.len();
        RFModel { features, activation, amplitudes: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.features.d
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    /// Writes `σ(⟨wᵢ,x⟩ + bᵢ)` for every feature.
    pub fn feature_values(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let pre: f64 = self.features.weight(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.features.b[i];
            *o = self.activation.eval(pre);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        rf_eval(self, x)
    }

    /// Hermite coefficients of the model over `index`.
    pub fn hermite_coeffs(&self, index: &IndexSet) -> CoeffVector<f64> {
        let mut acc = vec![0.0; index.len()];
        let mut col = vec![0.0; index.len()];
        let scale = 1.0 / (self.width() as f64).sqrt();
        for i in 0..self.width() {
            if self.amplitudes[i] == 0.0 {
                continue;
            }
            feature_hermite_coeffs(self.features.weight(i), self.features.b[i], &self.activation, index, &mut col);
            for (a, c) in acc.iter_mut().zip(&col) {
                *a += scale * self.amplitudes[i] * c;
            }
        }
        let mut cv = CoeffVector::new(BasisTag::Hermite { d: index.dim(), p: index.max_degree() });
        for (t, v) in index.indices().iter().zip(acc) {
            cv.insert(t.clone(), v).expect("index set respects its own cap");
        }
        cv
    }
}

pub fn rf_eval(model: &RFModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.len() });
    }
    let mut v = vec![0.0; model.width()];
    model.feature_values(x, &mut v);
    let s: f64 = v.iter().zip(&model.amplitudes).map(|(a, b)| a * b).sum();
    Ok(s / (model.width() as f64).sqrt())
}

/// `λ ↦ E[σ(λ + ξ)]` for Gaussian or equally weighted discrete noise `ξ`.
#[derive(Clone, Debug)]
pub enum SmoothedActivation {
    Gaussian { activation: Activation, variance: f64 },
    Discrete { activation: Activation, offsets: Vec<f64> },
}

impl SmoothedActivation {
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            SmoothedActivation::Gaussian { activation, variance } => activation.gaussian_derivative_mean(0, lambda, variance.sqrt()),
            SmoothedActivation::Discrete { activation, offsets } => {
                offsets.iter().map(|o| activation.eval(lambda + o)).sum::<f64>() / offsets.len() as f64
            }
        }
    }
}

/// Closed form for polynomials and ReLUs, Gauss–Hermite for sigmoid and softplus.
pub fn smoothed_activation(activation: &Activation, variance: f64) -> Result<SmoothedActivation> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::NegativeVariance(variance));
    }
    Ok(SmoothedActivation::Gaussian { activation: activation.clone(), variance })
}

/// Complex polynomial activation `σ(z) = Σ cₖ zᵏ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexActivation {
    pub coeffs: Vec<Complex64>,
}

impl ComplexActivation {
    /// `Σ_{k≤p} zᵏ/k!`.
    pub fn truncated_exp(p: u32) -> Self {
        ComplexActivation { coeffs: (0..=p).map(|k| Complex64::new(1.0 / factorial(k), 0.0)).collect() }
    }

    pub fn degree(&self) -> u32 {
        self.coeffs.len().saturating_sub(1) as u32
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }
}

/// Complex features with `ℜ` and `ℑ` of every coordinate `N(0, 1/d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexFeatures {
    pub d: usize,
    pub w: Vec<Complex64>,
    pub b: Vec<Complex64>,
}

impl ComplexFeatures {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn weight(&self, i: usize) -> &[Complex64] {
        &self.w[i * self.d..(i + 1) * self.d]
    }
}

pub fn sample_complex_features(d: usize, n: usize, seed: u64) -> Result<ComplexFeatures> {
    if d == 0 || n == 0 {
        return Err(invalid("dimension and width must be positive"));
    }
    let sd = (1.0 / d as f64).sqrt();
    let mut r = rng::stream(seed, 0);
    let mut draw = || Complex64::new(sd * rng::normal(&mut r), sd * rng::normal(&mut r));
    let mut w = Vec::with_capacity(n * d);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..d {
            w.push(draw());
        }
        b.push(draw());
    }
    Ok(ComplexFeatures { d, w, b })
}

/// `⟨w,x⟩ = Σ w̄ᵢ xᵢ`.
pub fn conj_inner(w: &[Complex64], x: &[Complex64]) -> Complex64 {
    w.iter().zip(x).map(|(a, b)| a.conj() * b).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexRFModel {
    pub features: ComplexFeatures,
    pub activation: ComplexActivation,
    pub amplitudes: Vec<Complex64>,
}

impl ComplexRFModel {
    pub fn eval(&self, x: &[Complex64]) -> Result<Complex64> {
        if x.len() != self.features.d {
            return Err(Error::DimensionMismatch { expected: self.features.d, got: x.len() });
        }
        let n = self.features.len();
        let s: Complex64 = (0..n)
            .map(|i| self.amplitudes[i] * self.activation.eval(conj_inner(self.features.weight(i), x) + self.features.b[i]))
            .sum();
        Ok(s / (n as f64).sqrt())
    }
}

/// Exact Fourier coefficient `E[σ(⟨w,x⟩+b) x̄^j]` over `Unif(𝕌ₙ^d)`.
///
/// Expanding `(Σ w̄ᵢxᵢ + b)ᵏ` multinomially, only exponents `l ≡ j (mod n)`
/// survive; these are `l = j + n·m` for `m ∈ ℕ^d`.
pub fn unity_feature_coeff(w: &[Complex64], b: Complex64, activation: &ComplexActivation, n: u32, j: &MultiIndex) -> Result<Complex64> {
    if j.dim() != w.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), got: j.dim() });
    }
    if let Some(&e) = j.exponents().iter().find(|&&e| e >= n) {
        return Err(Error::ExponentOutOfRange { exponent: e, order: n });
    }
    let jd = j.total_degree();
    let p = activation.degree();
    if jd > p {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let wbar: Vec<Complex64> = w.iter().map(|v| v.conj()).collect();
    let wraps = (p - jd) / n;
    let mut total = Complex64::new(0.0, 0.0);
    let mut l = j.exponents().to_vec();
    let mut visit = |l: &[u32]| {
        let ld: u32 = l.iter().sum();
        let mut mono = Complex64::new(1.0, 0.0);
        let mut lfact = 1.0;
        for (i, &e) in l.iter().enumerate() {
            if e > 0 {
                mono *= wbar[i].powu(e);
                lfact *= factorial(e);
            }
        }
        for k in ld..=p {
            let c = activation.coeffs[k as usize];
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mult = factorial(k) / (lfact * factorial(k - ld));
            total += c * mult * mono * b.powu(k - ld);
        }
    };
    distribute_wraps(&mut l, 0, wraps, n, &mut visit);
    Ok(total)
}

fn distribute_wraps(l: &mut Vec<u32>, pos: usize, remaining: u32, n: u32, visit: &mut impl FnMut(&[u32])) {
    visit(l);
    if remaining == 0 {
        return;
    }
    for i in pos..l.len() {
        l[i] += n;
        distribute_wraps(l, i, remaining - 1, n, visit);
        l[i] -= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{estimate_hermite_coeffs, unity_dft, HermiteMethod};
    use proptest::prelude::*;

    fn mi(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    #[test]
    fn sampling_examples() {
        let f = sample_features(&Regime::SmallFeatures { d: 2, eps: 0.0 }, 16, 1).unwrap();
        assert!(f.w.iter().chain(&f.b).all(|&v| v == 0.0));
        let f = sample_features(&Regime::Sparse { d: 15 }, 1024, 2).unwrap();
        let mean_sq: f64 = (0..1024).map(|i| f.weight(i).iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / 1024.0;
        assert!((mean_sq - 1.0).abs() < 0.1);
        let f = sample_features(&Regime::SmallFeatures { d: 2, eps: 0.05f64.powi(2) }, 4000, 3).unwrap();
        let w1: Vec<f64> = (0..4000).map(|i| f.weight(i)[0]).collect();
        let sd = (w1.iter().map(|v| v * v).sum::<f64>() / 4000.0).sqrt();
        assert!((sd - 0.05).abs() < 0.005);
        assert_eq!(sample_features(&Regime::Sparse { d: 3 }, 5, 9).unwrap(), sample_features(&Regime::Sparse { d: 3 }, 5, 9).unwrap());
        assert!(matches!(sample_features(&Regime::SmallFeatures { d: 2, eps: -1.0 }, 1, 0), Err(Error::NegativeVariance(_))));
    }

    #[test]
    fn closed_form_coefficients_for_square() {
        let act = Activation::one_plus_pow(2);
        let w = [0.3, -0.7, 0.2];
        let b = 0.4;
        let c = feature_hermite_coeffs_poly(&w, b, &act, 3).unwrap();
        assert!((c.get(&mi(&[2, 0, 0])) - 2f64.sqrt() * w[0] * w[0]).abs() < 1e-14);
        assert!((c.get(&mi(&[1, 1, 0])) - 2.0 * w[0] * w[1]).abs() < 1e-14);
        assert!((c.get(&mi(&[1, 0, 0])) - 2.0 * w[0] * (b + 1.0)).abs() < 1e-14);
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        assert!((c.get(&mi(&[0, 0, 0])) - ((b + 1.0).powi(2) + norm2)).abs() < 1e-14);
        assert_eq!(c.get(&mi(&[1, 1, 1])), 0.0);
        assert_eq!(c.get(&mi(&[3, 0, 0])), 0.0);
        assert!(matches!(feature_hermite_coeffs_poly(&w, b, &Activation::Relu, 2), Err(Error::NonPolynomialActivation)));
    }

    #[test]
    fn exact_matches_quadrature_for_polynomials() {
        let mut r = rng::stream(5, 0);
        for trial in 0..20 {
            let d = 1 + trial % 3;
            let deg = 1 + (trial % 4) as u32;
            let coeffs: Vec<f64> = (0..=deg).map(|_| rng::normal(&mut r)).collect();
            let act = Activation::Polynomial(coeffs);
            let w: Vec<f64> = (0..d).map(|_| rng::normal(&mut r)).collect();
            let b = rng::normal(&mut r);
            let exact = feature_hermite_coeffs_poly(&w, b, &act, 4).unwrap();
            let targets = crate::basis::enumerate_indices(d, 4);
            let a2 = act.clone();
            let w2 = w.clone();
            let f = move |x: &[f64]| a2.eval(w2.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b);
            let q = estimate_hermite_coeffs(f, d, &targets, &HermiteMethod::TensorQuadrature { nodes: 8, active_vars: Some((0..d).collect()) }, 0).unwrap();
            for t in &targets {
                assert!((exact.get(t) - q.coeffs.get(t)).abs() < 1e-8, "{t}");
            }
        }
    }

    #[test]
    fn non_polynomial_coefficients_match_quadrature() {
        let w = [0.8, -0.5];
        let b = 0.3;
        let targets = crate::basis::enumerate_indices(2, 3);
        let index = IndexSet::from_indices(2, targets.clone()).unwrap();
        for act in [Activation::Relu, Activation::ShiftedRelu, Activation::Sigmoid, Activation::Softplus] {
            let mut exact = vec![0.0; targets.len()];
            feature_hermite_coeffs(&w, b, &act, &index, &mut exact);
            let a2 = act.clone();
            let f = move |x: &[f64]| a2.eval(w[0] * x[0] + w[1] * x[1] + b);
            // kinks need many nodes; smooth activations converge fast
            let nodes = if matches!(act, Activation::Relu | Activation::ShiftedRelu) { 400 } else { 60 };
            let q = estimate_hermite_coeffs(f, 2, &targets, &HermiteMethod::TensorQuadrature { nodes, active_vars: Some(vec![0, 1]) }, 0).unwrap();
            for (k, t) in targets.iter().enumerate() {
                assert!((exact[k] - q.coeffs.get(t)).abs() < 2e-4, "{act:?} {t}: {} vs {}", exact[k], q.coeffs.get(t));
            }
        }
    }

    #[test]
    fn truncated_polynomials_vanish_above_their_degree() {
        let full = Activation::Polynomial(vec![1.0, -2.0, 0.5, 0.25, 1.5]);
        let w = [0.4, 0.9];
        for k in 0..4usize {
            let c = full.polynomial_coeffs().unwrap()[..=k].to_vec();
            let act = Activation::Polynomial(c);
            let cv = feature_hermite_coeffs_poly(&w, 0.1, &act, 4).unwrap();
            for t in crate::basis::enumerate_indices(2, 4) {
                if t.total_degree() as usize > k {
                    assert_eq!(cv.get(&t), 0.0);
                }
            }
        }
    }

    #[test]
    fn small_feature_coefficients_scale_with_degree() {
        // leading Hermite term of χ_T is ε^{|T|/2} σ^{(|T|)}(0) w̄^T / √T!
        let act = Activation::one_plus_pow(3);
        let d = 2;
        let base = sample_features(&Regime::SmallFeatures { d, eps: 1.0 }, 1, 17).unwrap();
        let (wb, bb) = (base.weight(0).to_vec(), base.b[0]);
        for t in [mi(&[1, 0]), mi(&[1, 1]), mi(&[2, 0]), mi(&[0, 0])] {
            let m = t.total_degree();
            let lead = act.derivative(m, 0.0).unwrap();
            let mut pts = Vec::new();
            for eps in [1e-4f64, 1e-5, 1e-6] {
                let w: Vec<f64> = wb.iter().map(|v| v * eps.sqrt()).collect();
                let c = feature_hermite_coeffs_poly(&w, bb * eps.sqrt(), &act, 3).unwrap();
                let wt: f64 = wb.iter().zip(t.exponents()).map(|(v, &e)| v.powi(e as i32)).product();
                let approx = eps.powf(m as f64 / 2.0) * lead * wt / t.factorial().sqrt();
                pts.push((eps.ln(), (c.get(&t) - approx).abs().ln()));
            }
            let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
            assert!(slope >= (m as f64 + 1.0) / 2.0 - 0.1, "{t}: slope {slope}");
        }
    }

    #[test]
    fn smoothing_examples() {
        let sq = Activation::Polynomial(vec![0.0, 0.0, 1.0]);
        let s = smoothed_activation(&sq, 1.0).unwrap();
        for l in [-1.0, 0.3, 2.0] {
            assert!((s.eval(l) - (l * l + 1.0)).abs() < 1e-12);
        }
        let s = smoothed_activation(&Activation::one_plus_pow(2), 0.25).unwrap();
        assert!((s.eval(0.5) - (2.25 + 0.25)).abs() < 1e-12);
        for act in [Activation::Relu, Activation::Sigmoid, Activation::one_plus_pow(2)] {
            let s = smoothed_activation(&act, 0.0).unwrap();
            assert_eq!(s.eval(0.7), act.eval(0.7));
        }
        let s = smoothed_activation(&Activation::Relu, 1.0).unwrap();
        let want = normal_pdf(0.0);
        assert!((s.eval(0.0) - want).abs() < 1e-3);
        assert!(matches!(smoothed_activation(&sq, -0.1), Err(Error::NegativeVariance(_))));
    }

    #[test]
    fn model_evaluation() {
        let f = sample_features(&Regime::Sparse { d: 3 }, 4, 1).unwrap();
        let mut m = RFModel::new(f.clone(), Activation::Sigmoid);
        assert_eq!(m.eval(&[0.1, 0.2, 0.3]).unwrap(), 0.0);
        assert!(matches!(m.eval(&[0.1]), Err(Error::DimensionMismatch { .. })));
        let single = Features::new(3, f.weight(0).to_vec(), vec![f.b[0]]).unwrap();
        let mut one = RFModel::new(single, Activation::Softplus);
        one.amplitudes[0] = 1.0;
        let x = [0.5, -1.0, 2.0];
        let pre: f64 = f.weight(0).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + f.b[0];
        assert!((one.eval(&x).unwrap() - Activation::Softplus.eval(pre)).abs() < 1e-15);
        m.amplitudes = vec![1.0, -2.0, 0.5, 3.0];
        let mut m2 = m.clone();
        m2.amplitudes = vec![0.3, 0.1, -1.0, 2.0];
        let mut sum = m.clone();
        sum.amplitudes = m.amplitudes.iter().zip(&m2.amplitudes).map(|(a, b)| a + b).collect();
        assert!((sum.eval(&x).unwrap() - m.eval(&x).unwrap() - m2.eval(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn complex_features_have_isotropic_covariance() {
        let d = 4;
        let n = 40_000;
        let f = sample_complex_features(d, n, 8).unwrap();
        for a in 0..d {
            for c in 0..d {
                let m: Complex64 = (0..n).map(|i| f.weight(i)[a] * f.weight(i)[c].conj()).sum::<Complex64>() / n as f64;
                let want = if a == c { 2.0 / d as f64 } else { 0.0 };
                assert!((m - want).norm() < 5.0 * (2.0 / d as f64) / (n as f64).sqrt() * 1.5, "{a},{c}: {m}");
            }
        }
    }

    #[test]
    fn unity_coefficients_match_full_grid_sums() {
        let f = sample_complex_features(2, 3, 4).unwrap();
        for p in [3u32, 6] {
            let act = ComplexActivation::truncated_exp(p);
            for i in 0..3 {
                let (w, b) = (f.weight(i).to_vec(), f.b[i]);
                let a2 = act.clone();
                let w2 = w.clone();
                let h = move |x: &[Complex64]| a2.eval(conj_inner(&w2, x) + b);
                let targets: Vec<MultiIndex> = crate::basis::enumerate_indices(2, 6).into_iter().filter(|t| t.exponents().iter().all(|&e| e < 4)).collect();
                let grid = unity_dft(h, 4, 2, &targets, 0, 0).unwrap();
                for t in &targets {
                    let exact = unity_feature_coeff(&w, b, &act, 4, t).unwrap();
                    assert!((exact - grid.coeffs.get(t)).norm() < 1e-12, "p={p} {t}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn model_is_linear_in_amplitudes(a in proptest::collection::vec(-2.0f64..2.0, 5), c in proptest::collection::vec(-2.0f64..2.0, 5), x in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let f = sample_features(&Regime::Sparse { d: 3 }, 5, 3).unwrap();
            let mut ma = RFModel::new(f.clone(), Activation::Relu);
            ma.amplitudes = a.clone();
            let mut mc = RFModel::new(f.clone(), Activation::Relu);
            mc.amplitudes = c.clone();
            let mut ms = RFModel::new(f, Activation::Relu);
            ms.amplitudes = a.iter().zip(&c).map(|(u, v)| u + v).collect();
            prop_assert!((ms.eval(&x).unwrap() - ma.eval(&x).unwrap() - mc.eval(&x).unwrap()).abs() < 1e-12);
        }
    }
}
