//! Unified gas kinetic prediction step for chemotaxis and neutron transport.
//!
//! Both models are relaxations `ε² ∂_t f + ε μ ∂_x f = T¹f - d_m f` with
//! `T¹f = (1/|V|) Σ ω_n d_n f_n`; chemotaxis has `d_m = 1 + ε φ(μ_m σ)`,
//! neutron transport `d_m = σ_T` plus absorption and a source.

use crate::error::{Error, Result};
use crate::grid::{Mesh1D, Quadrature};
use crate::kernels::{c3, g1, one_minus_g1};
use crate::models::{
    apply_boundary, interface_grad_s, BoundaryCondition, ChemotaxisParams, Ghosts, KineticBoundary,
    NeutronParams, Source,
};
use crate::state::{KineticState, VELOCITY_MEASURE};

/// Relaxation model shared by chemotaxis (`scattering = 1`, with a tumbling
/// kernel) and neutron transport (`scattering = σ_T`, no kernel).
#[derive(Debug, Clone, Copy)]
pub struct LinearKinetic<'a> {
    pub quad: &'a Quadrature,
    pub eps: f64,
    pub scattering: f64,
    pub tumble: Option<&'a ChemotaxisParams>,
    pub absorption: f64,
    pub source: Source,
}

impl<'a> LinearKinetic<'a> {
    pub fn chemotaxis(quad: &'a Quadrature, p: &'a ChemotaxisParams) -> Self {
        Self {
            quad,
            eps: p.eps,
            scattering: 1.0,
            tumble: Some(p),
            absorption: 0.0,
            source: Source::Zero,
        }
    }

    pub fn neutron(quad: &'a Quadrature, p: &'a NeutronParams) -> Self {
        Self {
            quad,
            eps: p.eps,
            scattering: p.sigma_t,
            tumble: None,
            absorption: p.sigma_a,
            source: p.source,
        }
    }

    pub fn phi(&self, u: f64) -> f64 {
        self.tumble.map_or(0.0, |p| p.phi(u))
    }

    /// `d_m = s + ε φ(μ_m σ)`.
    pub fn rates(&self, sigma: f64) -> Result<Vec<f64>> {
        self.quad
            .mu
            .iter()
            .map(|&mu| {
                let rate = self.scattering + self.eps * self.phi(mu * sigma);
                if rate > 0.0 {
                    Ok(rate)
                } else {
                    Err(Error::InvalidRelaxationRate { rate, mu, sigma })
                }
            })
            .collect()
    }
}

/// Flux coefficients of one ordinate at one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemoFluxCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Coefficients for relaxation rate `d`, with `z = d Δt / ε²`:
/// `A = ε(1 - e^{-z})/(Δt d) = g1(z)/ε`, `B = (1 - g1(z))/(ε d)`, `C = c3(z)/d²`.
pub fn flux_coefficients(rate: f64, eps: f64, dt: f64) -> ChemoFluxCoeffs {
    let z = rate * dt / (eps * eps);
    ChemoFluxCoeffs {
        a: g1(z) / eps,
        b: one_minus_g1(z) / (eps * rate),
        c: c3(z) / (rate * rate),
    }
}

/// Coefficients of the chemotaxis flux for ordinate `mu` at an edge with gradient `sigma_half`.
pub fn ugks_coeffs_chemo(
    mu: f64,
    eps: f64,
    dt: f64,
    sigma_half: f64,
    p: &ChemotaxisParams,
) -> Result<ChemoFluxCoeffs> {
    if !(eps > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument("eps and dt must be positive".into()));
    }
    let rate = 1.0 + eps * p.phi(mu * sigma_half);
    if rate <= 0.0 {
        return Err(Error::InvalidRelaxationRate {
            rate,
            mu,
            sigma: sigma_half,
        });
    }
    Ok(flux_coefficients(rate, eps, dt))
}

/// Per-edge coefficient set and the velocity sums entering the macro flux.
#[derive(Debug, Clone)]
pub struct EdgeCoefficients {
    pub sigma: f64,
    pub rates: Vec<f64>,
    pub coeffs: Vec<ChemoFluxCoeffs>,
    /// `Σ ω μ B`, paired over `±μ` so the `1/ε` parts cancel exactly.
    pub sum_mu_b: f64,
    /// `Σ_{μ<0} ω C μ²`.
    pub sum_c_mu2_neg: f64,
    /// `Σ_{μ>0} ω C μ²`.
    pub sum_c_mu2_pos: f64,
}

impl EdgeCoefficients {
    pub fn new(model: &LinearKinetic, sigma: f64, dt: f64) -> Result<Self> {
        let q = model.quad;
        let eps = model.eps;
        let rates = model.rates(sigma)?;
        let coeffs: Vec<_> = rates
            .iter()
            .map(|&d| flux_coefficients(d, eps, dt))
            .collect();
        let mut sum_mu_b = 0.0;
        for m in q.positive() {
            let k = q.mirror(m);
            let mu = q.mu[m];
            let (d, dk) = (rates[m], rates[k]);
            // μ/(εd) - μ/(εd') = μ (φ(-μσ) - φ(μσ)) / (d d')
            let singular = mu * (model.phi(-mu * sigma) - model.phi(mu * sigma)) / (d * dk);
            let regular = -mu
                * (g1(d * dt / (eps * eps)) / (eps * d) - g1(dk * dt / (eps * eps)) / (eps * dk));
            sum_mu_b += q.weights[m] * (singular + regular);
        }
        let mut sum_c_mu2_neg = 0.0;
        let mut sum_c_mu2_pos = 0.0;
        for m in 0..q.len() {
            let v = q.weights[m] * coeffs[m].c * q.mu[m] * q.mu[m];
            if q.is_positive(m) {
                sum_c_mu2_pos += v;
            } else {
                sum_c_mu2_neg += v;
            }
        }
        Ok(Self {
            sigma,
            rates,
            coeffs,
            sum_mu_b,
            sum_c_mu2_neg,
            sum_c_mu2_pos,
        })
    }
}

/// `T¹f` at one edge and its one-sided slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMoments {
    pub t1_half: f64,
    /// `T¹f` of the left neighbour, evaluated with the edge gradient.
    pub t1_left: f64,
    pub t1_right: f64,
    pub d_left: f64,
    pub d_right: f64,
}

/// Edge moments for all `n + 1` edges.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceMoments {
    pub edges: Vec<EdgeMoments>,
}

impl InterfaceMoments {
    pub fn t1_half(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.t1_half).collect()
    }
    pub fn d_left(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.d_left).collect()
    }
    pub fn d_right(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.d_right).collect()
    }
}

/// Moments of one edge from the neighbouring cell values and the edge rates.
pub fn edge_moments(
    quad: &Quadrature,
    rates: &[f64],
    f_left: &[f64],
    f_right: &[f64],
    dx: f64,
) -> EdgeMoments {
    let mut t1_half = 0.0;
    let mut t1_left = 0.0;
    let mut t1_right = 0.0;
    for m in 0..quad.len() {
        let w = quad.weights[m] * rates[m];
        t1_left += w * f_left[m];
        t1_right += w * f_right[m];
        t1_half += w * if quad.is_positive(m) {
            f_left[m]
        } else {
            f_right[m]
        };
    }
    let t1_half = t1_half / VELOCITY_MEASURE;
    let t1_left = t1_left / VELOCITY_MEASURE;
    let t1_right = t1_right / VELOCITY_MEASURE;
    EdgeMoments {
        t1_half,
        t1_left,
        t1_right,
        d_left: (t1_half - t1_left) / (0.5 * dx),
        d_right: (t1_right - t1_half) / (0.5 * dx),
    }
}

fn neighbours<'s>(f: &'s KineticState, ghosts: &'s Ghosts, edge: usize) -> (&'s [f64], &'s [f64]) {
    let n = f.n_cells();
    let left = if edge == 0 {
        &ghosts.left[0][..]
    } else {
        f.cell(edge - 1)
    };
    let right = if edge == n {
        &ghosts.right[0][..]
    } else {
        f.cell(edge)
    };
    (left, right)
}

/// Moments at every edge for the edge gradients `sigma` (length `n + 1`).
pub fn interface_moments(
    model: &LinearKinetic,
    f: &KineticState,
    ghosts: &Ghosts,
    sigma: &[f64],
    dx: f64,
) -> Result<InterfaceMoments> {
    let edges = (0..=f.n_cells())
        .map(|j| {
            let rates = model.rates(sigma[j])?;
            let (fl, fr) = neighbours(f, ghosts, j);
            Ok(edge_moments(model.quad, &rates, fl, fr, dx))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InterfaceMoments { edges })
}

/// `Φ_m = A μ f_up + B μ T¹f_half + C μ² (δ^L if μ > 0 else δ^R)`.
pub fn micro_flux_chemo(
    quad: &Quadrature,
    f_left: &[f64],
    f_right: &[f64],
    moments: &EdgeMoments,
    coeffs: &EdgeCoefficients,
) -> Vec<f64> {
    (0..quad.len())
        .map(|m| {
            let mu = quad.mu[m];
            let k = coeffs.coeffs[m];
            let (up, slope) = if mu > 0.0 {
                (f_left[m], moments.d_left)
            } else {
                (f_right[m], moments.d_right)
            };
            k.a * mu * up + k.b * mu * moments.t1_half + k.c * mu * mu * slope
        })
        .collect()
}

/// `F = (1/|V|)[Σ ω A μ f_up + T¹f_half Σ ω μ B + δ^R Σ_{μ<0} ω C μ² + δ^L Σ_{μ>0} ω C μ²]`.
pub fn macro_flux_chemo(
    quad: &Quadrature,
    f_left: &[f64],
    f_right: &[f64],
    moments: &EdgeMoments,
    coeffs: &EdgeCoefficients,
) -> f64 {
    let mut upwind = 0.0;
    for m in 0..quad.len() {
        let up = if quad.is_positive(m) {
            f_left[m]
        } else {
            f_right[m]
        };
        upwind += quad.weights[m] * coeffs.coeffs[m].a * quad.mu[m] * up;
    }
    (upwind
        + moments.t1_half * coeffs.sum_mu_b
        + moments.d_right * coeffs.sum_c_mu2_neg
        + moments.d_left * coeffs.sum_c_mu2_pos)
        / VELOCITY_MEASURE
}

/// Result of one prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPrediction {
    pub rho: Vec<f64>,
    pub f: KineticState,
}

/// One UGKS step of the relaxation model.
///
/// `flux_sigma` holds the gradient used by each edge flux (length `n + 1`),
/// `tumble_sigma` the gradient used by each cell's tumbling term (length `n`).
#[allow(clippy::too_many_arguments)]
pub fn predict_linear(
    model: &LinearKinetic,
    mesh: &Mesh1D,
    f: &KineticState,
    bc: &BoundaryCondition,
    flux_sigma: &[f64],
    tumble_sigma: &[f64],
    dt: f64,
) -> Result<LinearPrediction> {
    let quad = model.quad;
    let n = mesh.n_cells;
    let n_ord = quad.len();
    if f.n_cells() != n || f.n_ord() != n_ord {
        return Err(Error::InvalidArgument(
            "state does not match mesh and quadrature".into(),
        ));
    }
    if flux_sigma.len() != n + 1 || tumble_sigma.len() != n {
        return Err(Error::InvalidArgument(
            "gradient arrays have the wrong length".into(),
        ));
    }
    let eps = model.eps;
    let dx = mesh.dx;
    let ghosts = apply_boundary(f, quad, bc);

    let mut micro = vec![0.0; (n + 1) * n_ord];
    let mut macro_flux = vec![0.0; n + 1];
    for j in 0..=n {
        let coeffs = EdgeCoefficients::new(model, flux_sigma[j], dt)?;
        let (fl, fr) = neighbours(f, &ghosts, j);
        let mom = edge_moments(quad, &coeffs.rates, fl, fr, dx);
        micro[j * n_ord..(j + 1) * n_ord]
            .copy_from_slice(&micro_flux_chemo(quad, fl, fr, &mom, &coeffs));
        macro_flux[j] = macro_flux_chemo(quad, fl, fr, &mom, &coeffs);
    }

    let rho_old = f.mean_density(quad);
    let lam = dt / dx;
    let relax = model.scattering * dt / (eps * eps);
    let mut rho = vec![0.0; n];
    let mut f_new = KineticState::zeros(n, n_ord);
    for i in 0..n {
        let x = mesh.center(i);
        let q_mean = quad.integrate(|mu| model.source.value(x, mu)) / VELOCITY_MEASURE;
        let absorbed = -model.absorption * rho_old[i];
        rho[i] = rho_old[i] - lam * (macro_flux[i + 1] - macro_flux[i]) + dt * (absorbed + q_mean);

        let fi = f.cell(i);
        let sig = tumble_sigma[i];
        let phis: Vec<f64> = quad.mu.iter().map(|&mu| model.phi(mu * sig)).collect();
        let phi_mean: f64 = (0..n_ord)
            .map(|m| quad.weights[m] * phis[m] * fi[m])
            .sum::<f64>()
            / VELOCITY_MEASURE;
        let out = f_new.cell_mut(i);
        for m in 0..n_ord {
            let div = micro[(i + 1) * n_ord + m] - micro[i * n_ord + m];
            let tumble = (dt / eps) * (phi_mean - phis[m] * fi[m]);
            let src = dt * (absorbed + model.source.value(x, quad.mu[m]));
            out[m] = (fi[m] - lam * div + relax * rho[i] + tumble + src) / (1.0 + relax);
        }
    }
    Ok(LinearPrediction { rho, f: f_new })
}

/// Edge gradients for the chemotaxis flux: interior differences of `S`, and
/// zero at specular walls so that the wall flux vanishes identically.
pub fn chemo_flux_sigma(s: &[f64], mesh: &Mesh1D, bc: &BoundaryCondition) -> Vec<f64> {
    let mut g = interface_grad_s(s, mesh);
    let n = g.len() - 1;
    if matches!(bc.left, KineticBoundary::Specular) {
        g[0] = 0.0;
    }
    if matches!(bc.right, KineticBoundary::Specular) {
        g[n] = 0.0;
    }
    g
}

/// Prediction step of the chemotaxis model for the chemical field `s`.
pub fn predict_chemo(
    f: &KineticState,
    s: &[f64],
    dt: f64,
    p: &ChemotaxisParams,
    quad: &Quadrature,
    mesh: &Mesh1D,
    bc: &BoundaryCondition,
) -> Result<LinearPrediction> {
    let model = LinearKinetic::chemotaxis(quad, p);
    let grad = interface_grad_s(s, mesh);
    // The tumbling term of cell i uses the gradient at its right edge.
    let tumble: Vec<f64> = grad[1..].to_vec();
    let flux = chemo_flux_sigma(s, mesh, bc);
    predict_linear(&model, mesh, f, bc, &flux, &tumble, dt)
}

/// Prediction step of the neutron transport model.
pub fn predict_neutron(
    f: &KineticState,
    dt: f64,
    p: &NeutronParams,
    quad: &Quadrature,
    mesh: &Mesh1D,
    bc: &BoundaryCondition,
) -> Result<LinearPrediction> {
    let model = LinearKinetic::neutron(quad, p);
    let n = mesh.n_cells;
    predict_linear(&model, mesh, f, bc, &vec![0.0; n + 1], &vec![0.0; n], dt)
}
