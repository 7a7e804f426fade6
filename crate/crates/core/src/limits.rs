//! Reference solvers for the small-ε limits: Keller–Segel, linear diffusion
//! for neutron transport and nonlinear diffusion for radiative transfer.

use crate::error::{Error, Result};
use crate::grid::{Mesh1D, Quadrature};
use crate::linalg::solve_tridiagonal;
use crate::models::{
    interface_grad_s, update_chemical_field, ChemicalBoundary, ChemotaxisParams, NeutronParams,
    RadiativeParams,
};
use crate::state::VELOCITY_MEASURE;

/// Boundary condition of a macroscopic field at one wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MacroBoundary {
    NoFlux,
    /// Wall value of the diffused quantity.
    Dirichlet(f64),
}

/// Drift velocity `u = (1/|V|) Σ ω μ φ(μ σ)`, summed over `±μ` pairs.
pub fn drift_velocity(sigma: f64, p: &ChemotaxisParams, quad: &Quadrature) -> f64 {
    quad.positive()
        .map(|m| {
            let mu = quad.mu[m];
            quad.weights[m] * mu * (p.phi(mu * sigma) - p.phi(-mu * sigma))
        })
        .sum::<f64>()
        / VELOCITY_MEASURE
}

/// Keller–Segel edge flux `-(ρ_r - ρ_l)/(3Δx) - u (ρ_l + ρ_r)/2`.
pub fn keller_segel_flux(
    rho_l: f64,
    rho_r: f64,
    sigma: f64,
    p: &ChemotaxisParams,
    quad: &Quadrature,
    dx: f64,
) -> f64 {
    -(rho_r - rho_l) / (3.0 * dx) - drift_velocity(sigma, p, quad) * 0.5 * (rho_l + rho_r)
}

/// Explicit density update of the Keller–Segel model with no-flux walls.
pub fn keller_segel_rho_step(
    rho: &[f64],
    s: &[f64],
    dt: f64,
    p: &ChemotaxisParams,
    quad: &Quadrature,
    mesh: &Mesh1D,
) -> Result<Vec<f64>> {
    let limit = 1.5 * mesh.dx * mesh.dx;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            dt,
            limit,
            solver: "keller_segel_step",
        });
    }
    let n = rho.len();
    let grad = interface_grad_s(s, mesh);
    let mut flux = vec![0.0; n + 1];
    for j in 1..n {
        flux[j] = keller_segel_flux(rho[j - 1], rho[j], grad[j], p, quad, mesh.dx);
    }
    Ok((0..n)
        .map(|i| rho[i] - dt / mesh.dx * (flux[i + 1] - flux[i]))
        .collect())
}

/// One Keller–Segel step: explicit density update, then the implicit chemical update.
#[allow(clippy::too_many_arguments)]
pub fn keller_segel_step(
    rho: &[f64],
    s: &[f64],
    dt: f64,
    p: &ChemotaxisParams,
    quad: &Quadrature,
    mesh: &Mesh1D,
    bc: &ChemicalBoundary,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let rho_new = keller_segel_rho_step(rho, s, dt, p, quad, mesh)?;
    let s_new = update_chemical_field(s, &rho_new, dt, p, mesh, bc)?;
    Ok((rho_new, s_new))
}

/// Explicit step of `∂_t ρ = ∂_x(∂_x ρ / (3σ_T)) - σ_a ρ + q̄`.
pub fn neutron_diffusion_step(
    rho: &[f64],
    dt: f64,
    p: &NeutronParams,
    mesh: &Mesh1D,
    bc: (MacroBoundary, MacroBoundary),
) -> Result<Vec<f64>> {
    let limit = 1.5 * p.sigma_t * mesh.dx * mesh.dx;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            dt,
            limit,
            solver: "neutron_diffusion_step",
        });
    }
    let n = rho.len();
    let k = 1.0 / (3.0 * p.sigma_t * mesh.dx);
    let ghost = |side: MacroBoundary, inner: f64| match side {
        MacroBoundary::NoFlux => inner,
        MacroBoundary::Dirichlet(v) => 2.0 * v - inner,
    };
    let mut flux = vec![0.0; n + 1];
    flux[0] = -k * (rho[0] - ghost(bc.0, rho[0]));
    flux[n] = -k * (ghost(bc.1, rho[n - 1]) - rho[n - 1]);
    for j in 1..n {
        flux[j] = -k * (rho[j] - rho[j - 1]);
    }
    Ok((0..n)
        .map(|i| {
            let x = mesh.center(i);
            rho[i] - dt / mesh.dx * (flux[i + 1] - flux[i])
                + dt * (p.source.angular_mean(x) - p.sigma_a * rho[i])
        })
        .collect())
}

/// Semi-implicit step of `a ∂_t T⁴ + C_v ∂_t T = ∂_x((ac/3σ) ∂_x T⁴) + Q`.
///
/// `T⁴` is linearized about the latest iterate and the tridiagonal system in
/// `T` is re-solved until the nonlinear residual is below `1e-10` relative.
pub fn nonlinear_diffusion_step(
    t: &[f64],
    dt: f64,
    p: &RadiativeParams,
    q_moment: &[f64],
    mesh: &Mesh1D,
    bc: (MacroBoundary, MacroBoundary),
) -> Result<Vec<f64>> {
    let n = t.len();
    if q_moment.len() != n || n != mesh.n_cells {
        return Err(Error::InvalidArgument(
            "field sizes do not match the mesh".into(),
        ));
    }
    if let Some(i) = t.iter().position(|&v| v.is_nan() || v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "negative temperature in cell {i}"
        )));
    }
    let kappa = p.a * p.c / (3.0 * p.sigma) / (mesh.dx * mesh.dx);
    let wall = |side: MacroBoundary| match side {
        MacroBoundary::NoFlux => None,
        MacroBoundary::Dirichlet(tb) => Some(tb.powi(4)),
    };
    let (wl, wr) = (wall(bc.0), wall(bc.1));

    // Residual of the nonlinear update for the candidate `tn`.
    let residual = |tn: &[f64]| -> Vec<f64> {
        let u: Vec<f64> = tn.iter().map(|v| v.powi(4)).collect();
        (0..n)
            .map(|i| {
                let left = if i > 0 {
                    u[i - 1]
                } else {
                    wl.map_or(u[0], |w| 2.0 * w - u[0])
                };
                let right = if i + 1 < n {
                    u[i + 1]
                } else {
                    wr.map_or(u[n - 1], |w| 2.0 * w - u[n - 1])
                };
                p.a * (u[i] - t[i].powi(4)) / dt + p.c_v * (tn[i] - t[i]) / dt
                    - kappa * (left - 2.0 * u[i] + right)
                    - q_moment[i]
            })
            .collect()
    };
    let scale = t
        .iter()
        .map(|v| p.a * v.powi(4) / dt + p.c_v * v / dt)
        .fold(0.0, f64::max)
        .max(q_moment.iter().map(|v| v.abs()).fold(0.0, f64::max))
        .max(f64::MIN_POSITIVE);

    let mut tk = t.to_vec();
    for _ in 0..50 {
        let r = residual(&tk);
        let norm = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if norm <= 1e-10 * scale {
            return Ok(tk);
        }
        // Newton correction: J δ = -r, with J tridiagonal.
        let du: Vec<f64> = tk.iter().map(|v| 4.0 * v.powi(3)).collect();
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let mut self_weight = 2.0;
            if i == 0 {
                self_weight += if wl.is_some() { 1.0 } else { -1.0 };
            }
            if i + 1 == n {
                self_weight += if wr.is_some() { 1.0 } else { -1.0 };
            }
            diag[i] = p.a * du[i] / dt + p.c_v / dt + kappa * self_weight * du[i];
            if i > 0 {
                sub[i] = -kappa * du[i - 1];
            }
            if i + 1 < n {
                sup[i] = -kappa * du[i + 1];
            }
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = solve_tridiagonal(&sub, &diag, &sup, &rhs)?;
        for i in 0..n {
            tk[i] += delta[i];
        }
        if let Some(i) = tk.iter().position(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "nonlinear diffusion produced a negative temperature {} in cell {i}",
                tk[i]
            )));
        }
    }
    let r = residual(&tk);
    Err(Error::NotConverged {
        iterations: 50,
        residual: r.iter().map(|v| v.abs()).fold(0.0, f64::max) / scale,
        context: "nonlinear diffusion step".into(),
    })
}
