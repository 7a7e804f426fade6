//! Exact steady solutions of the discrete-ordinate equation on one cell.
//!
//! On a cell the steady problem reads
//!
//! ```text
//! μ_m f_m' = (1/ε) [ ½ Σ_n ω_n d_n f_n − d_m f_m ] + ε g_m(x)
//! ```
//!
//! with positive relaxation rates `d_m`. Its homogeneous solutions are the
//! elementary modes `l_m e^{−ζ x/ε}`, `l_m = 1/(d_m − μ_m ζ)`, where `ζ` runs over
//! the eigenvalues of `E = U⁻¹(I − W/2)D`. A polynomial particular solution
//! covers the source, and the mode coefficients come from the inflow data.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Quadrature;
use crate::kernels::phi1;
use crate::linalg::DenseLu;

/// Largest accepted condition estimate for the cell boundary system.
pub const MAX_CONDITION: f64 = 1e12;
/// Dispersion residual accepted for a root.
pub const ROOT_TOLERANCE: f64 = 1e-9;

/// `E = U⁻¹(I − W/2)D`, `W = 1 ωᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseMatrix {
    pub e: DMatrix<f64>,
    pub mu: Vec<f64>,
    pub rates: Vec<f64>,
}

pub fn build_case_matrix(quad: &Quadrature, rates: &[f64]) -> Result<CaseMatrix> {
    check_rates(quad, rates)?;
    let n = quad.len();
    let e = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        (delta - 0.5 * quad.weights[j]) * rates[j] / quad.mu[i]
    });
    Ok(CaseMatrix {
        e,
        mu: quad.mu.clone(),
        rates: rates.to_vec(),
    })
}

fn check_rates(quad: &Quadrature, rates: &[f64]) -> Result<()> {
    if rates.len() != quad.len() {
        return Err(Error::InvalidArgument(format!(
            "{} relaxation rates for {} ordinates",
            rates.len(),
            quad.len()
        )));
    }
    for (m, &d) in rates.iter().enumerate() {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidRelaxationRate {
                rate: d,
                mu: quad.mu[m],
                sigma: f64::NAN,
            });
        }
    }
    Ok(())
}

/// Eigenvalues of `E` from a dense nonsymmetric eigensolver, sorted.
///
/// They are real in exact arithmetic. The zero eigenvalue is defective for
/// symmetric rates, so the eigensolver only resolves it to about `√ulp`;
/// imaginary parts above `1e-6` of the spectral radius are reported.
pub fn case_eigenvalues(case: &CaseMatrix) -> Result<Vec<f64>> {
    let ev = case.e.complex_eigenvalues();
    let radius = ev.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut out = Vec::with_capacity(ev.len());
    for z in ev.iter() {
        if !z.re.is_finite() || z.im.abs() > 1e-6 * radius {
            return Err(Error::Eigensolver(format!("non-real eigenvalue {z}")));
        }
        out.push(z.re);
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// `½ Σ ω d/(d − μζ) − 1`.
pub fn dispersion_residual(zeta: f64, quad: &Quadrature, rates: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for m in 0..quad.len() {
        let den = rates[m] - quad.mu[m] * zeta;
        if den.abs() < 1e-13 {
            return Err(Error::DispersionRoot(format!(
                "zeta = {zeta} sits on the pole of ordinate {m}"
            )));
        }
        sum += quad.weights[m] * rates[m] / den;
    }
    Ok(0.5 * sum - 1.0)
}

/// `h(ζ) = ½ Σ ω/(ν − ζ)` and its derivative, `ν = d/μ`.
fn secular(zeta: f64, poles: &[f64], weights: &[f64]) -> (f64, f64) {
    let mut h = 0.0;
    let mut dh = 0.0;
    for (p, w) in poles.iter().zip(weights) {
        let r = 1.0 / (p - zeta);
        h += w * r;
        dh += w * r * r;
    }
    (0.5 * h, 0.5 * dh)
}

/// The unique root of the increasing function `h` in `(lo, hi)`.
fn bracketed_root(mut lo: f64, mut hi: f64, poles: &[f64], weights: &[f64], floor: f64) -> f64 {
    let mut z = 0.5 * (lo + hi);
    for _ in 0..400 {
        let (h, dh) = secular(z, poles, weights);
        if h == 0.0 {
            return z;
        }
        if h < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let mut next = z - h / dh;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let tol = 4.0 * f64::EPSILON * (z.abs() + floor);
        if (next - z).abs() <= tol || hi - lo <= tol {
            return next;
        }
        z = next;
    }
    z
}

/// How a basis function depends on position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    /// `l e^{−ζ s/ε}`.
    Exponential,
    /// `1/d`, the `ζ = 0` mode.
    Constant,
    /// Divided difference of the near-zero pair, linear in `s` when `ζ_s = 0`.
    Linear,
}

/// Edge relative to which `s = x − x_anchor` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub kind: ModeKind,
    pub zeta: f64,
    pub anchor: Anchor,
    /// Eigenvector; for the linear mode the raw `1/(d − μζ_s)`.
    pub l: Vec<f64>,
    /// Constant part of the linear mode, `−εμ/(d(d − μζ_s))`; empty otherwise.
    pub shift: Vec<f64>,
}

impl Mode {
    /// Value for ordinate `m` at distance `s_left = x − x_L` from the left
    /// edge of a cell of the given width.
    pub fn value(&self, m: usize, s_left: f64, width: f64, eps: f64) -> f64 {
        let s = match self.anchor {
            Anchor::Left => s_left,
            Anchor::Right => s_left - width,
        };
        match self.kind {
            ModeKind::Constant => self.l[m],
            ModeKind::Exponential => self.l[m] * (-self.zeta * s / eps).exp(),
            ModeKind::Linear => self.l[m] * s * phi1(-self.zeta * s / eps) + self.shift[m],
        }
    }
}

/// Complete set of homogeneous solutions for one set of rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    pub eps: f64,
    pub mu: Vec<f64>,
    pub rates: Vec<f64>,
    /// All `2N` eigenvalues of `E`, sorted, including `0`.
    pub roots: Vec<f64>,
    /// Root of `h` in the bracket around zero.
    pub zeta_small: f64,
    /// Whether the pair `{0, ζ_s}` is represented by constant and linear modes.
    pub degenerate: bool,
    pub modes: Vec<Mode>,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Builds the elementary solutions for rates `d_m`.
///
/// `ζ = 0` is always an eigenvalue since `(I − W/2)D (1/d) = 0`. The other
/// `2N − 1` are the roots of `h`, one in each gap between consecutive poles
/// `ν_m = d_m/μ_m`, found by safeguarded Newton iteration and then checked
/// against the dispersion relation.
pub fn spectral_basis(quad: &Quadrature, eps: f64, rates: &[f64]) -> Result<SpectralBasis> {
    check_rates(quad, rates)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let n = quad.len();
    let mut poles: Vec<(f64, f64)> = (0..n)
        .map(|m| (rates[m] / quad.mu[m], quad.weights[m]))
        .collect();
    poles.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pv: Vec<f64> = poles.iter().map(|p| p.0).collect();
    let pw: Vec<f64> = poles.iter().map(|p| p.1).collect();
    let floor = pv.iter().map(|p| p.abs()).fold(f64::INFINITY, f64::min) * 1e-3;

    let mut h_roots = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let (lo, hi) = (pv[k], pv[k + 1]);
        if hi - lo <= 1e-14 * hi.abs().max(lo.abs()) {
            return Err(Error::DispersionRoot(format!("coincident poles at {lo}")));
        }
        h_roots.push(bracketed_root(lo, hi, &pv, &pw, floor));
    }
    for &z in &h_roots {
        let r = dispersion_residual(z, quad, rates)?;
        if !(r.abs() < ROOT_TOLERANCE) {
            return Err(Error::DispersionRoot(format!(
                "residual {r:e} at zeta = {z}"
            )));
        }
    }
    // The central gap (negative to positive poles) holds the small root.
    let central = pv.iter().position(|&p| p > 0.0).unwrap_or(n) - 1;
    let zeta_small = h_roots[central];
    // For N ≥ 2 the largest root exceeds the smallest pole, so the pole
    // term only matters for two ordinates, where ζ_s is the only root.
    let max_abs = h_roots.iter().map(|z| z.abs()).fold(floor * 1e3, f64::max);
    let threshold = (1e-8f64).max(1e-2 * eps) * max_abs;
    let degenerate = zeta_small.abs() < threshold;

    let raw = |zeta: f64| -> Vec<f64> {
        (0..n)
            .map(|m| 1.0 / (rates[m] - quad.mu[m] * zeta))
            .collect()
    };
    let normalized = |zeta: f64| -> Vec<f64> {
        let l = raw(zeta);
        let s = l.iter().map(|v| v.abs()).fold(0.0, f64::max);
        l.into_iter().map(|v| v / s).collect()
    };
    let anchor = |zeta: f64| {
        if zeta >= 0.0 {
            Anchor::Left
        } else {
            Anchor::Right
        }
    };

    let mut modes = Vec::with_capacity(n);
    modes.push(Mode {
        kind: ModeKind::Constant,
        zeta: 0.0,
        anchor: Anchor::Left,
        l: rates.iter().map(|d| 1.0 / d).collect(),
        shift: Vec::new(),
    });
    for (k, &z) in h_roots.iter().enumerate() {
        if k == central && degenerate {
            let l = raw(z);
            let shift = (0..n)
                .map(|m| -eps * quad.mu[m] / rates[m] * l[m])
                .collect();
            modes.push(Mode {
                kind: ModeKind::Linear,
                zeta: z,
                anchor: anchor(z),
                l,
                shift,
            });
        } else {
            modes.push(Mode {
                kind: ModeKind::Exponential,
                zeta: z,
                anchor: anchor(z),
                l: normalized(z),
                shift: Vec::new(),
            });
        }
    }
    let mut roots = h_roots.clone();
    roots.push(0.0);
    roots.sort_by(f64::total_cmp);
    Ok(SpectralBasis {
        eps,
        mu: quad.mu.clone(),
        rates: rates.to_vec(),
        roots,
        zeta_small,
        degenerate,
        modes,
    })
}

/// Polynomial in `t = x − x_c` with one coefficient vector per degree.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPolynomial {
    pub coeffs: Vec<Vec<f64>>,
}

impl CellPolynomial {
    pub fn value(&self, m: usize, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c[m])
    }

    pub fn derivative(&self, m: usize, t: f64) -> f64 {
        let mut acc = 0.0;
        for k in (1..self.coeffs.len()).rev() {
            acc = acc * t + k as f64 * self.coeffs[k][m];
        }
        acc
    }
}

/// Highest source degree accepted by the particular solver.
pub const SOURCE_DEGREE: usize = 1;
const ANSATZ_DEGREE: usize = 3;

/// Polynomial particular solutions for a fixed set of rates.
///
/// The ansatz `f^p = Σ_{k≤3} a_k t^k` turns the equation (scaled by `ε`) into
/// the block system `P a_k + ε(k+1)U a_{k+1} = ε² g_k`, `(P a)_m = d_m a_m −
/// ½Σ ω d a`. With `b_k = ε^k a_k` the matrix no longer depends on `ε`:
/// `P b_k + (k+1)U b_{k+1} = ε^{k+2} g_k`. `P` is singular, so the system is
/// solved in the least-squares sense with a pseudo-inverse built once.
#[derive(Debug, Clone)]
pub struct ParticularSolver {
    n_ord: usize,
    eps: f64,
    matrix: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl ParticularSolver {
    pub fn new(quad: &Quadrature, eps: f64, rates: &[f64]) -> Result<Self> {
        check_rates(quad, rates)?;
        let n = quad.len();
        let blocks = ANSATZ_DEGREE + 1;
        let mut a = DMatrix::zeros(blocks * n, blocks * n);
        for k in 0..blocks {
            for m in 0..n {
                let row = k * n + m;
                a[(row, k * n + m)] += rates[m];
                for j in 0..n {
                    a[(row, k * n + j)] -= 0.5 * quad.weights[j] * rates[j];
                }
                if k + 1 < blocks {
                    a[(row, (k + 1) * n + m)] = (k + 1) as f64 * quad.mu[m];
                }
            }
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let pinv = svd
            .pseudo_inverse(1e-12 * smax)
            .map_err(|e| Error::Eigensolver(format!("pseudo-inverse: {e}")))?;
        Ok(Self {
            n_ord: n,
            eps,
            matrix: a,
            pinv,
        })
    }

    /// Particular solution for `g = Σ_k source[k] t^k`, `deg g ≤ 1`.
    pub fn solve(&self, source: &[Vec<f64>]) -> Result<CellPolynomial> {
        let n = self.n_ord;
        if source.len() > SOURCE_DEGREE + 1 || source.iter().any(|g| g.len() != n) {
            return Err(Error::InvalidArgument(
                "source must be affine with one value per ordinate".into(),
            ));
        }
        let blocks = ANSATZ_DEGREE + 1;
        let mut rhs = nalgebra::DVector::zeros(blocks * n);
        for (k, g) in source.iter().enumerate() {
            for m in 0..n {
                rhs[k * n + m] = self.eps.powi(k as i32 + 2) * g[m];
            }
        }
        let sol = &self.pinv * &rhs;
        let resid = (&self.matrix * &sol - &rhs).amax();
        let scale = rhs.amax().max(f64::MIN_POSITIVE);
        if !(resid <= 1e-10 * scale) {
            return Err(Error::IllConditioned {
                condition: resid / scale,
                context: "particular solution does not satisfy the matching system".into(),
            });
        }
        Ok(CellPolynomial {
            coeffs: (0..blocks)
                .map(|k| {
                    let scale = self.eps.powi(-(k as i32));
                    sol.rows(k * n, n).iter().map(|b| b * scale).collect()
                })
                .collect(),
        })
    }
}

/// Condition imposed on the incoming ordinates at one cell edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Prescribed incoming values.
    Inflow,
    /// `f_m = f_{mirror(m)}` at the edge.
    Reflect,
}

/// Factorized boundary system of one cell width and pair of edge kinds.
#[derive(Debug, Clone)]
pub struct CellOperator {
    pub basis: SpectralBasis,
    pub width: f64,
    pub left: EdgeKind,
    pub right: EdgeKind,
    lu: DenseLu,
    /// Mode values at the two edges, row `m`, column `k`.
    left_values: DMatrix<f64>,
    right_values: DMatrix<f64>,
}

/// Solved cell: mode coefficients, particular part and both edge traces.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub coeffs: Vec<f64>,
    pub particular: Option<CellPolynomial>,
    /// `f` at the left edge, all ordinates.
    pub left_trace: Vec<f64>,
    /// `f` at the right edge, all ordinates.
    pub right_trace: Vec<f64>,
}

fn mirror(m: usize, n: usize) -> usize {
    n - 1 - m
}

impl CellOperator {
    pub fn new(basis: &SpectralBasis, width: f64, left: EdgeKind, right: EdgeKind) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cell width must be positive, got {width}"
            )));
        }
        let n = basis.mu.len();
        let eps = basis.eps;
        let mut a = DMatrix::zeros(n, n);
        for m in 0..n {
            let incoming_left = basis.mu[m] > 0.0;
            let (s, kind) = if incoming_left {
                (0.0, left)
            } else {
                (width, right)
            };
            for (k, mode) in basis.modes.iter().enumerate() {
                let v = mode.value(m, s, width, eps);
                a[(m, k)] = match kind {
                    EdgeKind::Inflow => v,
                    EdgeKind::Reflect => v - mode.value(mirror(m, n), s, width, eps),
                };
            }
        }
        let lu = DenseLu::new(a, MAX_CONDITION, "cell boundary system")?;
        let edge_values = |s: f64| {
            DMatrix::from_fn(n, basis.modes.len(), |m, k| {
                basis.modes[k].value(m, s, width, eps)
            })
        };
        Ok(Self {
            basis: basis.clone(),
            width,
            left,
            right,
            lu,
            left_values: edge_values(0.0),
            right_values: edge_values(width),
        })
    }

    pub fn condition(&self) -> f64 {
        self.lu.condition
    }

    /// `f` at `s_left` from the left edge.
    pub fn evaluate(&self, sol: &CellSolution, s_left: f64) -> Vec<f64> {
        let n = self.basis.mu.len();
        let eps = self.basis.eps;
        (0..n)
            .map(|m| {
                let hom: f64 = self
                    .basis
                    .modes
                    .iter()
                    .zip(&sol.coeffs)
                    .map(|(mode, c)| c * mode.value(m, s_left, self.width, eps))
                    .sum();
                let part = sol
                    .particular
                    .as_ref()
                    .map_or(0.0, |p| p.value(m, s_left - 0.5 * self.width));
                hom + part
            })
            .collect()
    }

    /// Solves with incoming data `left[m]` (`μ_m > 0`) and `right[m]`
    /// (`μ_m < 0`); entries for other ordinates and for reflecting edges
    /// are ignored.
    pub fn solve(
        &self,
        left: &[f64],
        right: &[f64],
        particular: Option<&CellPolynomial>,
    ) -> Result<CellSolution> {
        let n = self.basis.mu.len();
        if left.len() != n || right.len() != n {
            return Err(Error::InvalidArgument(
                "edge data must have one value per ordinate".into(),
            ));
        }
        let half = 0.5 * self.width;
        let p = |m: usize, t: f64| particular.map_or(0.0, |q| q.value(m, t));
        let mut rhs = vec![0.0; n];
        for m in 0..n {
            let incoming_left = self.basis.mu[m] > 0.0;
            let (t, kind, data) = if incoming_left {
                (-half, self.left, left[m])
            } else {
                (half, self.right, right[m])
            };
            rhs[m] = match kind {
                EdgeKind::Inflow => data - p(m, t),
                EdgeKind::Reflect => p(mirror(m, n), t) - p(m, t),
            };
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite inflow data".into()));
        }
        let coeffs = self.lu.solve(&rhs);
        let c = nalgebra::DVector::from_column_slice(&coeffs);
        let trace = |values: &DMatrix<f64>, t: f64| -> Vec<f64> {
            let hom = values * &c;
            (0..n).map(|m| hom[m] + p(m, t)).collect()
        };
        Ok(CellSolution {
            left_trace: trace(&self.left_values, -half),
            right_trace: trace(&self.right_values, half),
            coeffs,
            particular: particular.cloned(),
        })
    }
}

/// One-shot solve with inflow data on both edges.
pub fn solve_cell_bvp(
    basis: &SpectralBasis,
    particular: Option<&CellPolynomial>,
    inflow_left: &[f64],
    inflow_right: &[f64],
    width: f64,
) -> Result<CellSolution> {
    CellOperator::new(basis, width, EdgeKind::Inflow, EdgeKind::Inflow)?.solve(
        inflow_left,
        inflow_right,
        particular,
    )
}

/// Outgoing values: left edge for `μ < 0`, right edge for `μ > 0`, each
/// vector indexed by ordinate with zeros elsewhere.
pub fn cell_outflow(sol: &CellSolution, quad: &Quadrature) -> (Vec<f64>, Vec<f64>) {
    let n = quad.len();
    let left = (0..n)
        .map(|m| {
            if quad.is_positive(m) {
                0.0
            } else {
                sol.left_trace[m]
            }
        })
        .collect();
    let right = (0..n)
        .map(|m| {
            if quad.is_positive(m) {
                sol.right_trace[m]
            } else {
                0.0
            }
        })
        .collect();
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::gauss_legendre_quadrature;
    use crate::models::{radiative_source, ChemotaxisParams};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chemo_rates(q: &Quadrature, eps: f64, sigma: f64) -> Vec<f64> {
        ChemotaxisParams::standard(eps).rates(q, sigma).unwrap()
    }

    /// In an optically thick cell the interior density is linear; its
    /// extrapolation to the inflow wall is the Milne-weighted inflow.
    #[test]
    fn thick_cell_matches_milne_weights() {
        for quad in [
            gauss_legendre_quadrature(8).unwrap(),
            crate::grid::double_gauss_quadrature(8).unwrap(),
        ] {
            let basis = spectral_basis(&quad, 1e-8, &vec![1.0; quad.len()]).unwrap();
            let op = CellOperator::new(&basis, 1.0, EdgeKind::Inflow, EdgeKind::Inflow).unwrap();
            let g = |mu: f64| 1.0 + 3.0 * mu * mu;
            let left: Vec<f64> = quad
                .mu
                .iter()
                .map(|&m| if m > 0.0 { g(m) } else { 0.0 })
                .collect();
            let sol = op.solve(&left, &vec![0.0; quad.len()], None).unwrap();
            let rho = |s: f64| 0.5 * quad.sum(&op.evaluate(&sol, s));
            let extrapolated = 2.0 * rho(0.25) - rho(0.5);
            let expected: f64 = quad
                .positive()
                .zip(quad.milne_weights())
                .map(|(j, w)| w * g(quad.mu[j]))
                .sum();
            // The remaining gap is the O(ε) extrapolation length.
            assert!(
                (extrapolated - expected).abs() < 1e-7,
                "{extrapolated} vs {expected}"
            );
        }
    }

    #[test]
    fn two_ordinate_case_matrix() {
        let q = gauss_legendre_quadrature(1).unwrap();
        let case = build_case_matrix(&q, &[1.0, 1.0]).unwrap();
        let mu1 = q.mu[1];
        // ω = 1: E = U⁻¹ [[1/2, −1/2], [−1/2, 1/2]].
        assert!((case.e[(0, 0)] + 0.5 / mu1).abs() < 1e-15);
        assert!((case.e[(0, 1)] - 0.5 / mu1).abs() < 1e-15);
        assert!((case.e[(1, 0)] + 0.5 / mu1).abs() < 1e-15);
        assert!((case.e[(1, 1)] - 0.5 / mu1).abs() < 1e-15);
        for z in case_eigenvalues(&case).unwrap() {
            assert!(z.abs() < 1e-12);
        }
        let basis = spectral_basis(&q, 0.5, &[1.0, 1.0]).unwrap();
        assert!(basis.degenerate);
        let kinds: Vec<_> = basis.modes.iter().map(|m| m.kind).collect();
        assert_eq!(kinds, vec![ModeKind::Constant, ModeKind::Linear]);
    }

    #[test]
    fn isotropic_rates_reduce_the_case_matrix() {
        let q = gauss_legendre_quadrature(3).unwrap();
        // ε φ → 0 leaves E = U⁻¹(I − W/2).
        let tiny = chemo_rates(&q, 1e-300, 1.0);
        let e = build_case_matrix(&q, &tiny).unwrap().e;
        let plain = build_case_matrix(&q, &[1.0; 6]).unwrap().e;
        assert_eq!(e, plain);
        for i in 0..6 {
            for j in 0..6 {
                let want = ((i == j) as u8 as f64 - 0.5 * q.weights[j]) / q.mu[i];
                assert!((plain[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn isotropic_roots_come_in_pairs_with_a_double_zero() {
        for n_half in [2, 4, 8, 16] {
            let q = gauss_legendre_quadrature(n_half).unwrap();
            let rates = vec![1.0; 2 * n_half];
            let basis = spectral_basis(&q, 0.3, &rates).unwrap();
            assert!(basis.degenerate, "N = {n_half}");
            let nonzero: Vec<f64> = basis
                .roots
                .iter()
                .copied()
                .filter(|z| z.abs() > 1e-8)
                .collect();
            assert_eq!(nonzero.len(), 2 * (n_half - 1));
            for &z in &nonzero {
                assert!(
                    nonzero.iter().any(|&w| ((w + z) / z).abs() < 1e-12),
                    "{z} unpaired"
                );
                assert!(dispersion_residual(z, &q, &rates).unwrap().abs() < ROOT_TOLERANCE);
            }
            let kinds = basis
                .modes
                .iter()
                .filter(|m| m.kind == ModeKind::Exponential)
                .count();
            assert_eq!(kinds, 2 * (n_half - 1));
        }
    }

    #[test]
    fn tumbling_roots_match_the_dense_eigensolver() {
        let q = gauss_legendre_quadrature(8).unwrap();
        let rates = chemo_rates(&q, 0.1, 1.0);
        let basis = spectral_basis(&q, 0.1, &rates).unwrap();
        assert_eq!(basis.roots.len(), 16);
        assert!(basis.roots.iter().any(|&z| z == 0.0));
        assert!(dispersion_residual(0.0, &q, &rates).unwrap().abs() < 1e-15);
        let dense = case_eigenvalues(&build_case_matrix(&q, &rates).unwrap()).unwrap();
        for (a, b) in basis.roots.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
        // ζ = 0 is simple: the small root stays away from it.
        assert!(basis.zeta_small.abs() > 1e-6);
    }

    #[test]
    fn modes_solve_the_homogeneous_equation() {
        let q = gauss_legendre_quadrature(4).unwrap();
        for (eps, sigma) in [(0.1, 1.0), (0.5, -3.0), (0.5, 0.0)] {
            let rates = chemo_rates(&q, eps, sigma);
            let basis = spectral_basis(&q, eps, &rates).unwrap();
            let width = 0.3;
            for mode in &basis.modes {
                for s in [0.05, 0.15, 0.25] {
                    let h = 1e-5;
                    let mean: f64 = (0..8)
                        .map(|n| 0.5 * q.weights[n] * rates[n] * mode.value(n, s, width, eps))
                        .sum();
                    for m in 0..8 {
                        let d = (mode.value(m, s + h, width, eps)
                            - mode.value(m, s - h, width, eps))
                            / (2.0 * h);
                        let rhs = (mean - rates[m] * mode.value(m, s, width, eps)) / eps;
                        let lhs = q.mu[m] * d;
                        assert!(
                            (lhs - rhs).abs() < 1e-5 * (1.0 + rhs.abs()),
                            "{:?} {lhs} {rhs}",
                            mode.kind
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn anchored_modes_stay_bounded() {
        let q = gauss_legendre_quadrature(8).unwrap();
        for eps in [1.0f64, 1e-2, 1e-5] {
            let rates = chemo_rates(&q, eps.min(0.5), 2.0);
            let basis = spectral_basis(&q, eps, &rates).unwrap();
            for mode in basis
                .modes
                .iter()
                .filter(|m| m.kind == ModeKind::Exponential)
            {
                for k in 0..=100 {
                    let s = 0.5 * k as f64 / 100.0;
                    for m in 0..16 {
                        assert!(mode.value(m, s, 0.5, eps).abs() <= 1.0 + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn inflow_data_is_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = gauss_legendre_quadrature(4).unwrap();
        for _ in 0..20 {
            let eps: f64 = rng.random_range(1e-4..1.0);
            let sigma = rng.random_range(-3.0..3.0);
            let rates = chemo_rates(&q, eps.min(0.6), sigma);
            let basis = spectral_basis(&q, eps, &rates).unwrap();
            let left: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..2.0)).collect();
            let right: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..2.0)).collect();
            let sol = solve_cell_bvp(&basis, None, &left, &right, 0.1).unwrap();
            for m in 0..8 {
                if q.is_positive(m) {
                    assert!((sol.left_trace[m] - left[m]).abs() < 1e-9);
                } else {
                    assert!((sol.right_trace[m] - right[m]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn constant_inflow_gives_a_constant_cell() {
        let q = gauss_legendre_quadrature(4).unwrap();
        let basis = spectral_basis(&q, 0.2, &[1.0; 8]).unwrap();
        let sol = solve_cell_bvp(&basis, None, &[0.7; 8], &[0.7; 8], 0.4).unwrap();
        let op = CellOperator::new(&basis, 0.4, EdgeKind::Inflow, EdgeKind::Inflow).unwrap();
        for s in [0.0, 0.13, 0.4] {
            for v in op.evaluate(&sol, s) {
                assert!((v - 0.7).abs() < 1e-12);
            }
        }
        let (l, r) = cell_outflow(&sol, &q);
        for m in 0..8 {
            let v = if q.is_positive(m) { r[m] } else { l[m] };
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn single_decaying_mode_is_damped_across_the_cell() {
        let q = gauss_legendre_quadrature(4).unwrap();
        let eps = 0.5;
        let width = 0.2;
        let basis = spectral_basis(&q, eps, &[1.0; 8]).unwrap();
        let k = basis
            .modes
            .iter()
            .position(|m| m.kind == ModeKind::Exponential && m.zeta > 0.0)
            .unwrap();
        let mode = &basis.modes[k];
        let left: Vec<f64> = (0..8).map(|m| mode.value(m, 0.0, width, eps)).collect();
        let right: Vec<f64> = (0..8).map(|m| mode.value(m, width, width, eps)).collect();
        let sol = solve_cell_bvp(&basis, None, &left, &right, width).unwrap();
        let damp = (-mode.zeta * width / eps).exp();
        for m in q.positive() {
            assert!((sol.right_trace[m] - damp * mode.l[m]).abs() < 1e-12);
        }
    }

    /// Upwind source iteration on a fine grid of the steady equation with
    /// inflow data and source `g(x) = g0 + g1 (x − x_c)`.
    fn upwind_oracle(
        q: &Quadrature,
        eps: f64,
        rates: &[f64],
        width: f64,
        left: &[f64],
        right: &[f64],
        g: &[Vec<f64>],
        cells: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = q.len();
        let h = width / cells as f64;
        let src = |m: usize, x: f64| -> f64 {
            g.iter()
                .enumerate()
                .map(|(k, c)| c[m] * (x - 0.5 * width).powi(k as i32))
                .sum()
        };
        let mut f = vec![vec![0.0; cells + 1]; n];
        let mut scatter = vec![0.0; cells + 1];
        for _ in 0..20000 {
            for m in 0..n {
                let mu = q.mu[m];
                let a = mu.abs() / h;
                let den = a + rates[m] / eps;
                if mu > 0.0 {
                    f[m][0] = left[m];
                    for j in 1..=cells {
                        let x = j as f64 * h;
                        f[m][j] = (a * f[m][j - 1] + scatter[j] / eps + eps * src(m, x)) / den;
                    }
                } else {
                    f[m][cells] = right[m];
                    for j in (0..cells).rev() {
                        let x = j as f64 * h;
                        f[m][j] = (a * f[m][j + 1] + scatter[j] / eps + eps * src(m, x)) / den;
                    }
                }
            }
            let mut change: f64 = 0.0;
            for j in 0..=cells {
                let s: f64 = (0..n)
                    .map(|m| 0.5 * q.weights[m] * rates[m] * f[m][j])
                    .sum();
                change = change.max((s - scatter[j]).abs());
                scatter[j] = s;
            }
            if change < 1e-14 {
                break;
            }
        }
        let l = (0..n).map(|m| f[m][0]).collect();
        let r = (0..n).map(|m| f[m][cells]).collect();
        (l, r)
    }

    #[test]
    fn outflow_matches_fine_upwind_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let q = gauss_legendre_quadrature(4).unwrap();
        for case in 0..20 {
            let eps: f64 = rng.random_range(0.3..1.0);
            let width = rng.random_range(0.05..0.3);
            let with_source = case % 2 == 1;
            let rates: Vec<f64> = if with_source {
                vec![rng.random_range(0.5..2.0); 8]
            } else {
                chemo_rates(&q, eps.min(0.8), rng.random_range(-2.0..2.0))
            };
            let g: Vec<Vec<f64>> = if with_source {
                let s0 = rng.random_range(-1.0..1.0);
                let s1 = rng.random_range(-1.0..1.0);
                vec![
                    (0..8).map(|m| s0 + 0.3 * q.mu[m]).collect(),
                    (0..8).map(|m| s1 * q.mu[m].abs()).collect(),
                ]
            } else {
                Vec::new()
            };
            let left: Vec<f64> = (0..8).map(|_| rng.random_range(0.5..1.5)).collect();
            let right: Vec<f64> = (0..8).map(|_| rng.random_range(0.5..1.5)).collect();
            let basis = spectral_basis(&q, eps, &rates).unwrap();
            let part = if with_source {
                Some(
                    ParticularSolver::new(&q, eps, &rates)
                        .unwrap()
                        .solve(&g)
                        .unwrap(),
                )
            } else {
                None
            };
            let sol = solve_cell_bvp(&basis, part.as_ref(), &left, &right, width).unwrap();
            let (ol, or) = upwind_oracle(&q, eps, &rates, width, &left, &right, &g, 10_000);
            for m in 0..8 {
                let (got, want) = if q.is_positive(m) {
                    (sol.right_trace[m], or[m])
                } else {
                    (sol.left_trace[m], ol[m])
                };
                assert!(
                    ((got - want) / want).abs() < 1e-3,
                    "case {case} m {m}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn thin_cells_isotropize() {
        let q = gauss_legendre_quadrature(4).unwrap();
        let width = 0.05;
        for ratio in [1e-3, 1e-6] {
            let eps = ratio * width;
            let rates = chemo_rates(&q, eps, 1.5);
            let basis = spectral_basis(&q, eps, &rates).unwrap();
            let left: Vec<f64> = (0..8).map(|m| 1.0 + 0.5 * q.mu[m]).collect();
            let right: Vec<f64> = (0..8).map(|m| 2.0 - 0.3 * q.mu[m] * q.mu[m]).collect();
            let sol = solve_cell_bvp(&basis, None, &left, &right, width).unwrap();
            let op = CellOperator::new(&basis, width, EdgeKind::Inflow, EdgeKind::Inflow).unwrap();
            let mid = op.evaluate(&sol, 0.5 * width);
            let mean = 0.5 * q.sum(&mid);
            let spread = mid.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            assert!(spread <= 10.0 * eps, "eps {eps}: {spread}");
            let (ol, or) = cell_outflow(&sol, &q);
            let out: Vec<f64> = (0..8)
                .map(|m| if q.is_positive(m) { or[m] } else { ol[m] })
                .collect();
            let o_mean = out.iter().sum::<f64>() / 8.0;
            let o_spread = out.iter().map(|v| (v - o_mean).abs()).fold(0.0, f64::max);
            // Outflows are the interior density plus an O(ε) boundary layer
            // term that differs between the two edges.
            assert!(o_spread < 1.1, "{o_spread}");
        }
    }

    #[test]
    fn radiative_steady_profile_is_exact() {
        // ε = σ = 1, q = μ|μ| + σx(|μ| − 1/2): I = |μ|x solves the continuous
        // problem exactly; on the double Gauss rule it is also the discrete one.
        let q = crate::grid::double_gauss_quadrature(4).unwrap();
        let rates = vec![1.0; 8];
        let (x_l, width) = (0.3, 0.2);
        let xc = x_l + 0.5 * width;
        let g = vec![
            (0..8).map(|m| radiative_source(xc, q.mu[m], 1.0)).collect(),
            (0..8).map(|m| q.mu[m].abs() - 0.5).collect(),
        ];
        let part = ParticularSolver::new(&q, 1.0, &rates)
            .unwrap()
            .solve(&g)
            .unwrap();
        let basis = spectral_basis(&q, 1.0, &rates).unwrap();
        let left: Vec<f64> = q.mu.iter().map(|m| m.abs() * x_l).collect();
        let right: Vec<f64> = q.mu.iter().map(|m| m.abs() * (x_l + width)).collect();
        let sol = solve_cell_bvp(&basis, Some(&part), &left, &right, width).unwrap();
        let op = CellOperator::new(&basis, width, EdgeKind::Inflow, EdgeKind::Inflow).unwrap();
        for s in [0.0, 0.05, 0.1, 0.2] {
            let v = op.evaluate(&sol, s);
            for m in 0..8 {
                assert!((v[m] - q.mu[m].abs() * (x_l + s)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn particular_solution_substitutes_exactly() {
        let q = gauss_legendre_quadrature(4).unwrap();
        for (eps, rates) in [
            (1.0, vec![2.0; 8]),
            (1e-3, vec![0.7; 8]),
            (0.4, chemo_rates(&q, 0.4, 1.0)),
        ] {
            let solver = ParticularSolver::new(&q, eps, &rates).unwrap();
            // Constant isotropic source: balance needs a quadratic profile.
            let g = vec![vec![1.5; 8], (0..8).map(|m| q.mu[m]).collect()];
            let p = solver.solve(&g).unwrap();
            for t in [-0.2, 0.0, 0.3] {
                let mean: f64 = (0..8)
                    .map(|n| 0.5 * q.weights[n] * rates[n] * p.value(n, t))
                    .sum();
                for m in 0..8 {
                    let lhs = q.mu[m] * p.derivative(m, t);
                    let rhs =
                        (mean - rates[m] * p.value(m, t)) / eps + eps * (g[0][m] + g[1][m] * t);
                    assert!(
                        (lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs() / eps),
                        "{lhs} vs {rhs}"
                    );
                }
            }
        }
        let zero = ParticularSolver::new(&q, 0.5, &[1.0; 8])
            .unwrap()
            .solve(&[vec![0.0; 8]])
            .unwrap();
        assert!(zero.coeffs.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn reflecting_edge_rows_are_honoured() {
        let q = gauss_legendre_quadrature(4).unwrap();
        let basis = spectral_basis(&q, 0.4, &chemo_rates(&q, 0.4, 0.0)).unwrap();
        let op = CellOperator::new(&basis, 0.3, EdgeKind::Reflect, EdgeKind::Inflow).unwrap();
        let right: Vec<f64> = (0..8).map(|m| 1.0 + q.mu[m]).collect();
        let sol = op.solve(&[0.0; 8], &right, None).unwrap();
        for m in 0..8 {
            assert!((sol.left_trace[m] - sol.left_trace[7 - m]).abs() < 1e-12);
        }
        assert!(matches!(
            CellOperator::new(&basis, 0.3, EdgeKind::Reflect, EdgeKind::Reflect),
            Err(Error::IllConditioned { .. })
        ));
    }
}
