//! Gauss–Hermite rules for the standard normal law and normal-distribution helpers.

use std::f64::consts::PI;

use faer::Mat;

use crate::linalg::sym_eigen;

/// `n`-point rule with `Σ wᵢ f(xᵢ) ≈ E f(Z)`, `Z ~ N(0,1)`; exact for degree `≤ 2n-1`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch: nodes are eigenvalues of the Jacobi matrix of the
    /// probabilists' Hermite recurrence, weights the squared first components.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let jacobi = Mat::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64).sqrt() } else { 0.0 });
        let (nodes, vectors) = sym_eigen(jacobi.as_ref()).expect("Jacobi matrix eigendecomposition");
        let raw: Vec<f64> = (0..n).map(|k| vectors[(0, k)] * vectors[(0, k)]).collect();
        // the rule is symmetric; averaging mirrored pairs removes rounding asymmetry
        let nodes = (0..n).map(|k| 0.5 * (nodes[k] - nodes[n - 1 - k])).collect();
        let total: f64 = raw.iter().sum();
        let weights = (0..n).map(|k| 0.5 * (raw[k] + raw[n - 1 - k]) / total).collect();
        GaussHermite { nodes, weights }
    }

    /// `E f(mean + sd Z)`.
    pub fn expect(&self, mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(mean + sd * z))
            .sum()
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / 2f64.sqrt())
}

/// `E Zᵏ` for `Z ~ N(0,1)`.
pub fn gaussian_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        double_factorial(k as i64 - 1)
    }
}

/// `n!!` with `(-1)!! = 0!! = 1`.
pub fn double_factorial(n: i64) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_moments_match() {
        for n in [1usize, 2, 5, 20, 40, 80, 150, 400] {
            let q = GaussHermite::new(n);
            let s: f64 = q.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n} sum={s}");
            for k in 0..(2 * n as u32).min(30) {
                let m = q.expect(0.0, 1.0, |z| z.powi(k as i32));
                let exact = gaussian_moment(k);
                assert!((m - exact).abs() < 1e-8 * double_factorial(k as i64).max(1.0), "n={n} k={k} {m} vs {exact}");
            }
        }
    }

    #[test]
    fn cdf_matches_known_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert_eq!(double_factorial(5), 15.0);
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(factorial(4), 24.0);
    }
}
