//! Uniform cell-centred meshes and discrete-ordinate quadratures.
//!
//! Ordinates are stored in ascending order of `μ`: indices `0..N` hold the
//! negative directions and `N..2N` the positive ones, so the mirror of index
//! `j` is `2N - 1 - j`. Every matrix built on top of a [`Quadrature`] uses
//! this ordering.

use crate::error::{Error, Result};

/// Uniform mesh of `n_cells` cells on `[x_min, x_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub dx: f64,
}

impl Mesh1D {
    /// Centre of cell `i`.
    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    /// Position of edge `j`; edge `j` separates cells `j - 1` and `j`.
    pub fn edge(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|j| self.edge(j)).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.n_cells + 1
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }
}

/// Builds the uniform mesh `(x_min, x_max, n_cells)`.
pub fn uniform_mesh(x_min: f64, x_max: f64, n_cells: usize) -> Result<Mesh1D> {
    if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
        return Err(Error::InvalidArgument(format!(
            "degenerate interval [{x_min}, {x_max}]"
        )));
    }
    if n_cells < 2 {
        return Err(Error::InvalidArgument(format!(
            "a mesh needs at least 2 cells, got {n_cells}"
        )));
    }
    Ok(Mesh1D {
        x_min,
        x_max,
        n_cells,
        dx: (x_max - x_min) / n_cells as f64,
    })
}

/// Family of the angular rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    /// `2N`-point Gauss–Legendre rule on `[-1, 1]`.
    GaussLegendre,
    /// `N`-point Gauss–Legendre rule on each half range `[-1, 0]` and `[0, 1]`.
    ///
    /// Integrates every function that is polynomial on each half range of
    /// degree `< 2N`, `|μ|` in particular.
    DoubleGauss,
}

/// Symmetric discrete-ordinate set `{μ_m, ω_m}` with `2N` directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub kind: QuadratureKind,
    pub n_half: usize,
    pub mu: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(kind: QuadratureKind, n_half: usize) -> Result<Self> {
        match kind {
            QuadratureKind::GaussLegendre => gauss_legendre_quadrature(n_half),
            QuadratureKind::DoubleGauss => double_gauss_quadrature(n_half),
        }
    }

    /// Number of ordinates, `2N`.
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Index of the ordinate with direction `-μ_j`.
    #[inline]
    pub fn mirror(&self, j: usize) -> usize {
        self.mu.len() - 1 - j
    }

    #[inline]
    pub fn is_positive(&self, j: usize) -> bool {
        j >= self.n_half
    }

    /// Indices of the directions with `μ > 0`.
    pub fn positive(&self) -> std::ops::Range<usize> {
        self.n_half..2 * self.n_half
    }

    /// Indices of the directions with `μ < 0`.
    pub fn negative(&self) -> std::ops::Range<usize> {
        0..self.n_half
    }

    /// `Σ_m ω_m g(μ_m)`.
    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.mu
            .iter()
            .zip(&self.weights)
            .map(|(&m, &w)| w * g(m))
            .sum()
    }

    /// Weights `W_j`, one per ordinate with `μ_j > 0`, giving the interior
    /// value `Σ_j W_j g_j` behind a left wall with incoming data `g` once the
    /// boundary layer of conservative isotropic scattering has relaxed. They
    /// are `(√3/2) ω_j μ_j H(μ_j)` with the discrete-ordinate H function of
    /// this rule, normalized to sum to one so isotropic data passes through.
    /// A right wall uses the mirrored ordinates.
    pub fn milne_weights(&self) -> Vec<f64> {
        let pos = self.positive();
        let mu: Vec<f64> = pos.clone().map(|j| self.mu[j]).collect();
        let total: f64 = pos.clone().map(|j| self.weights[j]).sum();
        let w: Vec<f64> = pos.map(|j| self.weights[j] / total).collect();
        // 1/H(μ) = ½ Σ w' μ' H(μ') / (μ + μ'); the plain map flips an overall
        // scale factor, so successive iterates are averaged.
        let mut h = vec![1.0; mu.len()];
        for _ in 0..10_000 {
            let next: Vec<f64> = mu
                .iter()
                .zip(&h)
                .map(|(&m, &hm)| {
                    let s: f64 = mu
                        .iter()
                        .zip(&w)
                        .zip(&h)
                        .map(|((&m2, &w2), &h2)| w2 * m2 * h2 / (m + m2))
                        .sum();
                    0.5 * (hm + 2.0 / s)
                })
                .collect();
            let change = next
                .iter()
                .zip(&h)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            h = next;
            if change < 1e-15 {
                break;
            }
        }
        let raw: Vec<f64> = (0..mu.len()).map(|k| w[k] * mu[k] * h[k]).collect();
        let norm: f64 = raw.iter().sum();
        raw.iter().map(|r| r / norm).collect()
    }

    /// `Σ_m ω_m v_m` for per-ordinate values.
    pub fn sum(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// `Σ_m ω_m μ_m v_m`, summed over mirrored pairs so that isotropic data
    /// gives exactly zero.
    pub fn first_moment(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.positive()
            .map(|j| {
                let k = self.mirror(j);
                self.weights[j] * self.mu[j] * (values[j] - values[k])
            })
            .sum()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Full `n`-point Gauss–Legendre rule on `[-1, 1]`, ascending, symmetrized
/// so that mirrored nodes and weights agree bit for bit.
fn gauss_legendre_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots of P_n come in ± pairs; compute the non-negative ones only.
    for k in 1..=n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (nf + 0.5)).cos();
        let mut converged = false;
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let step = p / dp;
            x -= step;
            last = step.abs();
            if last <= 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::QuadratureNotConverged {
                index: k,
                last_step: last,
            });
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // k-th largest root
        let hi = n - k;
        let lo = k - 1;
        if hi == lo {
            nodes[hi] = 0.0;
        } else {
            nodes[hi] = x;
            nodes[lo] = -x;
        }
        weights[hi] = w;
        weights[lo] = w;
    }
    Ok((nodes, weights))
}

fn from_positive_half(
    kind: QuadratureKind,
    n_half: usize,
    pos_mu: Vec<f64>,
    pos_w: Vec<f64>,
) -> Quadrature {
    let mut mu: Vec<f64> = pos_mu.iter().rev().map(|m| -m).collect();
    let mut weights: Vec<f64> = pos_w.iter().rev().copied().collect();
    mu.extend_from_slice(&pos_mu);
    weights.extend_from_slice(&pos_w);
    Quadrature {
        kind,
        n_half,
        mu,
        weights,
    }
}

/// `2N`-point Gauss–Legendre rule on `[-1, 1]`, built by Newton iteration on
/// `P_{2N}` from Chebyshev initial guesses, weights `2 / ((1 - x²) P'(x)²)`.
pub fn gauss_legendre_quadrature(n_half: usize) -> Result<Quadrature> {
    if n_half == 0 {
        return Err(Error::InvalidArgument("quadrature needs N >= 1".into()));
    }
    let (mu, w) = gauss_legendre_rule(2 * n_half)?;
    Ok(from_positive_half(
        QuadratureKind::GaussLegendre,
        n_half,
        mu[n_half..].to_vec(),
        w[n_half..].to_vec(),
    ))
}

/// Half-range rule: the `N`-point Gauss–Legendre rule mapped to `[0, 1]` and mirrored.
///
/// Needs `N >= 2`: the one-point half rule misses `Σ ω μ² = 2/3`.
pub fn double_gauss_quadrature(n_half: usize) -> Result<Quadrature> {
    if n_half < 2 {
        return Err(Error::InvalidArgument(
            "half-range quadrature needs N >= 2".into(),
        ));
    }
    let (x, w) = gauss_legendre_rule(n_half)?;
    Ok(from_positive_half(
        QuadratureKind::DoubleGauss,
        n_half,
        x.iter().map(|&x| 0.5 * (1.0 + x)).collect(),
        w.iter().map(|&w| 0.5 * w).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(q: &Quadrature) -> (f64, f64, f64) {
        (
            q.integrate(|_| 1.0),
            q.integrate(|m| m),
            q.integrate(|m| m * m),
        )
    }

    #[test]
    fn two_point_rule_closed_form() {
        let q = gauss_legendre_quadrature(1).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((q.mu[0] + s).abs() < 1e-15);
        assert!((q.mu[1] - s).abs() < 1e-15);
        assert!((q.weights[0] - 1.0).abs() < 1e-14);
        assert!((q.weights[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn moment_constraints_hold() {
        for kind in [QuadratureKind::GaussLegendre, QuadratureKind::DoubleGauss] {
            for n in [1, 2, 3, 4, 5, 8, 16, 32] {
                if kind == QuadratureKind::DoubleGauss && n == 1 {
                    assert!(Quadrature::new(kind, n).is_err());
                    continue;
                }
                let q = Quadrature::new(kind, n).unwrap();
                let (m0, m1, m2) = moments(&q);
                assert!((m0 - 2.0).abs() < 1e-12, "{kind:?} N={n}: {m0}");
                assert!(m1.abs() < 1e-13);
                assert!((m2 - 2.0 / 3.0).abs() < 1e-12, "{kind:?} N={n}: {m2}");
                for j in 0..q.len() {
                    let k = q.mirror(j);
                    assert_eq!(q.mu[j], -q.mu[k]);
                    assert_eq!(q.weights[j], q.weights[k]);
                    assert!(q.mu[j].abs() < 1.0 && q.mu[j] != 0.0);
                    if j > 0 {
                        assert!(q.mu[j] > q.mu[j - 1]);
                    }
                }
            }
        }
    }

    #[test]
    fn n16_integrates_high_monomials() {
        let q = gauss_legendre_quadrature(16).unwrap();
        assert!((q.integrate(|m| m.powi(4)) - 0.4).abs() < 1e-12);
        for k in (0..=62).step_by(2) {
            let exact = 2.0 / (k as f64 + 1.0);
            let got = q.integrate(|m| m.powi(k));
            assert!((got - exact).abs() < 1e-13, "k={k}: {got} vs {exact}");
        }
        for k in (1..=63).step_by(2) {
            assert!(q.integrate(|m| m.powi(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn double_gauss_integrates_abs_mu() {
        for n in [2, 3, 8, 16] {
            let q = double_gauss_quadrature(n).unwrap();
            assert!((q.integrate(f64::abs) - 1.0).abs() < 1e-14);
            assert!((q.integrate(|m| m * m.abs()) - 0.0).abs() < 1e-15);
        }
        // The full-range rule does not, which matters for sources built from |μ|.
        let g = gauss_legendre_quadrature(16).unwrap();
        assert!((g.integrate(f64::abs) - 1.0).abs() > 1e-4);
    }

    #[test]
    fn doubling_keeps_even_moments() {
        for n in [2, 4, 8, 16] {
            let a = gauss_legendre_quadrature(n).unwrap();
            let b = gauss_legendre_quadrature(2 * n).unwrap();
            let (a0, _, a2) = moments(&a);
            let (b0, _, b2) = moments(&b);
            assert!((a0 - b0).abs() < 1e-12);
            assert!((a2 - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_zero_order() {
        assert!(gauss_legendre_quadrature(0).is_err());
        assert!(double_gauss_quadrature(0).is_err());
    }

    #[test]
    fn mesh_layout() {
        let m = uniform_mesh(-1.0, 1.0, 4).unwrap();
        assert_eq!(m.dx, 0.5);
        assert_eq!(m.centers(), vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(m.edges().len(), 5);
        let m = uniform_mesh(0.0, 1.0, 400).unwrap();
        assert!((m.dx - 0.0025).abs() < 1e-18);
        assert!(uniform_mesh(0.0, 1.0, 1).is_err());
        assert!(uniform_mesh(1.0, 1.0, 4).is_err());
        assert!(uniform_mesh(2.0, 1.0, 4).is_err());
    }
}
