//! Unified gas kinetic prediction step for grey radiative transfer.
//!
//! The macroscopic pair `(ρ, ψ)` with `ρ = Σ ω I` and `ψ = a c T⁴` is advanced
//! first, implicitly in the relaxation and in the diffusive part of the flux;
//! the intensities follow with the new `ψ`.

use crate::error::{Error, Result};
use crate::grid::{Mesh1D, Quadrature};
use crate::kernels::{c3, e3, g1, h2, one_minus_g1};
use crate::linalg::solve_tridiagonal;
use crate::models::{ghost_layers, BoundaryCondition, KineticBoundary, RadiativeParams, Source};
use crate::state::{KineticState, VELOCITY_MEASURE};

/// Flux coefficients, functions of `x = ν Δt` with `ν = c σ / ε²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadFluxCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

/// `A = (c/ε) g1`, `B = -(c/σ)(g1 - e^{-x})`, `C = c(1 - g1)/(|V|ε)`,
/// `D = c c3/(|V|σ)`, `E = c Δt e3/(|V|ε)`.
pub fn ugks_coeffs_rad(eps: f64, dt: f64, sigma: f64, c: f64) -> RadFluxCoeffs {
    let x = c * sigma / (eps * eps) * dt;
    RadFluxCoeffs {
        a: c / eps * g1(x),
        b: -c / sigma * h2(x),
        c: c / (VELOCITY_MEASURE * eps) * one_minus_g1(x),
        d: c / (VELOCITY_MEASURE * sigma) * c3(x),
        e: c * dt / (VELOCITY_MEASURE * eps) * e3(x),
    }
}

/// `β(ψ) = (4ac/C_v)(ψ/(ac))^{3/4}`.
pub fn beta_of_psi(psi: f64, p: &RadiativeParams) -> Result<f64> {
    if !(psi >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "psi must be non-negative, got {psi}"
        )));
    }
    let ac = p.a * p.c;
    Ok(4.0 * ac / p.c_v * (psi / ac).powf(0.75))
}

/// `minmod((w_mid - w_prev)/dx, (w_next - w_mid)/dx)`.
pub fn minmod_slope(w_prev: f64, w_mid: f64, w_next: f64, dx: f64) -> f64 {
    let l = (w_mid - w_prev) / dx;
    let r = (w_next - w_mid) / dx;
    if l * r <= 0.0 {
        0.0
    } else if l > 0.0 {
        l.min(r)
    } else {
        l.max(r)
    }
}

/// Macroscopic radiative fields.
#[derive(Debug, Clone, PartialEq)]
pub struct RadMacroState {
    /// Total intensity `Σ ω I`.
    pub rho: Vec<f64>,
    /// `a c T⁴`.
    pub psi: Vec<f64>,
}

impl RadMacroState {
    pub fn temperature(&self, p: &RadiativeParams) -> Vec<f64> {
        self.psi.iter().map(|&v| p.temperature(v)).collect()
    }
}

/// Everything the radiative step needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct RadiativeProblem<'a> {
    pub quad: &'a Quadrature,
    pub mesh: &'a Mesh1D,
    pub params: &'a RadiativeParams,
    pub bc: &'a BoundaryCondition,
    pub source: Source,
}

/// Wall value of `ψ` on an inflow side: `|V|` times the boundary-layer
/// weighted mean of the incoming `I_b`, so that isotropic data
/// `I_b = ψ_b/|V|` gives `ψ_b` and anisotropic data gives the value the
/// diffusion limit sees. The half-range mean would be wrong for the latter.
fn wall_psi(quad: &Quadrature, data: &[f64], left: bool) -> f64 {
    let w = quad.milne_weights();
    quad.positive()
        .zip(&w)
        .map(|(j, w)| 2.0 * w * data[if left { j } else { quad.mirror(j) }])
        .sum()
}

impl RadiativeProblem<'_> {
    /// `ψ` extended by one ghost value on each side: a copy at a specular
    /// wall, `2ψ_b - ψ_edge` at an inflow wall.
    pub fn psi_with_ghosts(&self, psi: &[f64]) -> Vec<f64> {
        let n = psi.len();
        let mut ext = Vec::with_capacity(n + 2);
        ext.push(match &self.bc.left {
            KineticBoundary::Specular => psi[0],
            KineticBoundary::Inflow(d) => 2.0 * wall_psi(self.quad, d, true) - psi[0],
        });
        ext.extend_from_slice(psi);
        ext.push(match &self.bc.right {
            KineticBoundary::Specular => psi[n - 1],
            KineticBoundary::Inflow(d) => 2.0 * wall_psi(self.quad, d, false) - psi[n - 1],
        });
        ext
    }

    /// Source values of the ghost cells: mirrored at a specular wall, the
    /// affine source evaluated at the ghost centre otherwise.
    fn source_row(&self, cell: isize, m: usize) -> f64 {
        let n = self.mesh.n_cells as isize;
        let x = |i: isize| self.mesh.x_min + (i as f64 + 0.5) * self.mesh.dx;
        let mu = self.quad.mu[m];
        if cell < 0 {
            if let KineticBoundary::Specular = self.bc.left {
                return self.source.value(x(-1 - cell), -mu);
            }
        } else if cell >= n {
            if let KineticBoundary::Specular = self.bc.right {
                return self.source.value(x(2 * n - 1 - cell), -mu);
            }
        }
        self.source.value(x(cell), mu)
    }
}

/// Explicit (time `t^n`) parts of every edge flux.
#[derive(Debug, Clone)]
pub struct RadEdgeTerms {
    n_ord: usize,
    /// Upwind reconstructed intensity per edge and ordinate.
    pub upwind: Vec<f64>,
    /// Upwind minmod slope per edge and ordinate.
    pub slope: Vec<f64>,
    /// Source at the edge (mean of the two neighbours) per edge and ordinate.
    pub q_edge: Vec<f64>,
    /// `Σ ω (A μ I_up + B μ² δI_up) + |V| ε² (C/σ) Σ ω μ q_edge` per edge.
    pub explicit_flux: Vec<f64>,
}

impl RadEdgeTerms {
    pub fn new(prob: &RadiativeProblem, i: &KineticState, k: &RadFluxCoeffs) -> Self {
        let quad = prob.quad;
        let n = i.n_cells();
        let n_ord = quad.len();
        let dx = prob.mesh.dx;
        let eps = prob.params.eps;
        let sigma = prob.params.sigma;
        let ghosts = ghost_layers(i, quad, prob.bc, 2);
        // Extended cells -2..n+1 stored at offset 2.
        let cell = |c: isize, m: usize| -> f64 {
            if c < 0 {
                ghosts.left[(-1 - c) as usize][m]
            } else if c >= n as isize {
                ghosts.right[(c - n as isize) as usize][m]
            } else {
                i.get(c as usize, m)
            }
        };
        let slope_at =
            |c: isize, m: usize| minmod_slope(cell(c - 1, m), cell(c, m), cell(c + 1, m), dx);

        let mut upwind = vec![0.0; (n + 1) * n_ord];
        let mut slope = vec![0.0; (n + 1) * n_ord];
        let mut q_edge = vec![0.0; (n + 1) * n_ord];
        let mut explicit_flux = vec![0.0; n + 1];
        let q_scale = VELOCITY_MEASURE * eps * eps * k.c / sigma;
        for j in 0..=n {
            let (l, r) = (j as isize - 1, j as isize);
            let mut acc = 0.0;
            for m in 0..n_ord {
                let mu = quad.mu[m];
                let (up, s) = if mu > 0.0 {
                    let s = slope_at(l, m);
                    (cell(l, m) + 0.5 * dx * s, s)
                } else {
                    let s = slope_at(r, m);
                    (cell(r, m) - 0.5 * dx * s, s)
                };
                let q = 0.5 * (prob.source_row(l, m) + prob.source_row(r, m));
                upwind[j * n_ord + m] = up;
                slope[j * n_ord + m] = s;
                q_edge[j * n_ord + m] = q;
                acc += quad.weights[m] * (k.a * mu * up + k.b * mu * mu * s + q_scale * mu * q);
            }
            explicit_flux[j] = acc;
        }
        Self {
            n_ord,
            upwind,
            slope,
            q_edge,
            explicit_flux,
        }
    }
}

/// Converged macroscopic prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct RadMacroSolve {
    pub state: RadMacroState,
    /// `β` frozen in the last pass.
    pub beta: Vec<f64>,
    pub iterations: usize,
}

const PICARD_TOL: f64 = 1e-10;
const PICARD_MAX: usize = 50;

/// Solves the coupled `(ρ, ψ)` prediction by Picard iteration on `β`, each
/// pass eliminating `ψ` cell-wise and solving a tridiagonal system for `ρ`.
pub fn predict_rad_macro(
    prob: &RadiativeProblem,
    i: &KineticState,
    old: &RadMacroState,
    dt: f64,
) -> Result<RadMacroSolve> {
    let p = prob.params;
    let k = ugks_coeffs_rad(p.eps, dt, p.sigma, p.c);
    let edges = RadEdgeTerms::new(prob, i, &k);
    solve_macro(prob, old, dt, &k, &edges)
}

fn solve_macro(
    prob: &RadiativeProblem,
    old: &RadMacroState,
    dt: f64,
    k: &RadFluxCoeffs,
    edges: &RadEdgeTerms,
) -> Result<RadMacroSolve> {
    let p = prob.params;
    let quad = prob.quad;
    let n = old.rho.len();
    let dx = prob.mesh.dx;
    let eps2 = p.eps * p.eps;
    let s = p.sigma * p.c * dt / eps2;
    let gamma = -2.0 * k.d * dt / (3.0 * dx * dx);
    let lam = dt / dx;

    let left_wall = match &prob.bc.left {
        KineticBoundary::Specular => None,
        KineticBoundary::Inflow(d) => Some(wall_psi(quad, d, true)),
    };
    let right_wall = match &prob.bc.right {
        KineticBoundary::Specular => None,
        KineticBoundary::Inflow(d) => Some(wall_psi(quad, d, false)),
    };

    let rhs_base: Vec<f64> = (0..n)
        .map(|c| {
            let q_total: f64 = (0..quad.len())
                .map(|m| quad.weights[m] * prob.source.value(prob.mesh.center(c), quad.mu[m]))
                .sum();
            old.rho[c]
                + lam * (edges.explicit_flux[c] - edges.explicit_flux[c + 1])
                + p.c * dt * q_total
        })
        .collect();

    let mut psi_iter = old.psi.clone();
    let mut last_change = f64::INFINITY;
    for pass in 1..=PICARD_MAX {
        let beta = psi_iter
            .iter()
            .map(|&v| beta_of_psi(v.max(0.0), p))
            .collect::<Result<Vec<_>>>()?;
        // ψ' = a + b ρ'.
        let kk: Vec<f64> = beta.iter().map(|b| p.sigma * b * dt / eps2).collect();
        let a: Vec<f64> = (0..n).map(|c| old.psi[c] / (1.0 + kk[c])).collect();
        let b: Vec<f64> = (0..n).map(|c| kk[c] / (1.0 + kk[c])).collect();

        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for c in 0..n {
            // 1 + s(1 - b), kept free of cancellation when s and k are large.
            diag[c] = 1.0 + s / (1.0 + kk[c]);
            rhs[c] = rhs_base[c] + s * a[c];
            // γ (ψ'_c - ψ'_nb) for each neighbour edge.
            let mut couple =
                |nb: Option<usize>, wall: Option<f64>, is_wall: bool| match (nb, is_wall) {
                    (Some(j), _) => {
                        diag[c] += gamma * b[c];
                        rhs[c] -= gamma * (a[c] - a[j]);
                        if j < c {
                            sub[c] = -gamma * b[j];
                        } else {
                            sup[c] = -gamma * b[j];
                        }
                    }
                    (None, true) => {
                        if let Some(psi_b) = wall {
                            diag[c] += 2.0 * gamma * b[c];
                            rhs[c] -= 2.0 * gamma * (a[c] - psi_b);
                        }
                    }
                    (None, false) => {}
                };
            couple(if c > 0 { Some(c - 1) } else { None }, left_wall, c == 0);
            couple(
                if c + 1 < n { Some(c + 1) } else { None },
                right_wall,
                c + 1 == n,
            );
        }
        let rho = solve_tridiagonal(&sub, &diag, &sup, &rhs)?;
        let psi: Vec<f64> = (0..n).map(|c| a[c] + b[c] * rho[c]).collect();

        let scale = psi
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let change = psi
            .iter()
            .zip(&psi_iter)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
            / scale;
        psi_iter = psi.clone();
        last_change = change;
        if change < PICARD_TOL {
            return Ok(RadMacroSolve {
                state: RadMacroState { rho, psi },
                beta,
                iterations: pass,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: PICARD_MAX,
        residual: last_change,
        context: "radiative macroscopic prediction".into(),
    })
}

/// Intensity update with the new macroscopic fields.
pub fn predict_rad_micro(
    prob: &RadiativeProblem,
    i: &KineticState,
    old: &RadMacroState,
    new: &RadMacroState,
    dt: f64,
) -> KineticState {
    let p = prob.params;
    let k = ugks_coeffs_rad(p.eps, dt, p.sigma, p.c);
    let edges = RadEdgeTerms::new(prob, i, &k);
    micro_update(prob, i, old, new, dt, &k, &edges)
}

/// Per-ordinate edge flux `Φ` for every edge, row-major by edge.
pub fn micro_fluxes(
    prob: &RadiativeProblem,
    old: &RadMacroState,
    new: &RadMacroState,
    dt: f64,
    k: &RadFluxCoeffs,
    edges: &RadEdgeTerms,
) -> Vec<f64> {
    let quad = prob.quad;
    let n = old.psi.len();
    let n_ord = edges.n_ord;
    let dx = prob.mesh.dx;
    let eps = prob.params.eps;
    let sigma = prob.params.sigma;
    let psi_new = prob.psi_with_ghosts(&new.psi);
    let psi_old = prob.psi_with_ghosts(&old.psi);
    let q_scale = VELOCITY_MEASURE * eps * eps * k.c / sigma;
    let mut phi = vec![0.0; (n + 1) * n_ord];
    for j in 0..=n {
        // Edge j sits between extended cells j and j + 1.
        let half_new = 0.5 * (psi_new[j] + psi_new[j + 1]);
        let half_old = 0.5 * (psi_old[j] + psi_old[j + 1]);
        let dpsi_l = (half_new - psi_new[j]) / (0.5 * dx);
        let dpsi_r = (psi_new[j + 1] - half_new) / (0.5 * dx);
        let dt_psi = (half_new - half_old) / dt;
        for m in 0..n_ord {
            let mu = quad.mu[m];
            let idx = j * n_ord + m;
            let dpsi = if mu > 0.0 { dpsi_l } else { dpsi_r };
            phi[idx] = k.a * mu * edges.upwind[idx]
                + k.c * mu * half_new
                + k.d * mu * mu * dpsi
                + k.b * mu * mu * edges.slope[idx]
                + k.e * mu * dt_psi
                + q_scale * mu * edges.q_edge[idx];
        }
    }
    phi
}

fn micro_update(
    prob: &RadiativeProblem,
    i: &KineticState,
    old: &RadMacroState,
    new: &RadMacroState,
    dt: f64,
    k: &RadFluxCoeffs,
    edges: &RadEdgeTerms,
) -> KineticState {
    let p = prob.params;
    let quad = prob.quad;
    let n = i.n_cells();
    let n_ord = quad.len();
    let phi = micro_fluxes(prob, old, new, dt, k, edges);
    let lam = dt / prob.mesh.dx;
    let s = p.sigma * p.c * dt / (p.eps * p.eps);
    let mut out = KineticState::zeros(n, n_ord);
    for c in 0..n {
        let x = prob.mesh.center(c);
        for m in 0..n_ord {
            let div = phi[c * n_ord + m] - phi[(c + 1) * n_ord + m];
            let v = (i.get(c, m)
                + lam * div
                + s * new.psi[c] / VELOCITY_MEASURE
                + p.c * dt * prob.source.value(x, quad.mu[m]))
                / (1.0 + s);
            out.set(c, m, v);
        }
    }
    out
}

/// Full prediction: macroscopic solve followed by the intensity update.
#[derive(Debug, Clone, PartialEq)]
pub struct RadPrediction {
    pub macro_state: RadMacroState,
    pub beta: Vec<f64>,
    pub intensity: KineticState,
}

pub fn predict_rad(
    prob: &RadiativeProblem,
    i: &KineticState,
    psi: &[f64],
    dt: f64,
) -> Result<RadPrediction> {
    let p = prob.params;
    let k = ugks_coeffs_rad(p.eps, dt, p.sigma, p.c);
    let edges = RadEdgeTerms::new(prob, i, &k);
    let old = RadMacroState {
        rho: i.total_density(prob.quad),
        psi: psi.to_vec(),
    };
    let solve = solve_macro(prob, &old, dt, &k, &edges)?;
    let intensity = micro_update(prob, i, &old, &solve.state, dt, &k, &edges);
    Ok(RadPrediction {
        macro_state: solve.state,
        beta: solve.beta,
        intensity,
    })
}
