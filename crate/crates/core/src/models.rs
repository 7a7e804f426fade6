//! Model parameters, tumbling kernel, sources, boundary data, time-step rules
//! and the chemical field update.

use crate::error::{Error, Result};
use crate::grid::{Mesh1D, Quadrature};
use crate::linalg::solve_tridiagonal;
use crate::state::KineticState;

/// Which kinetic model a state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Neutron,
    Chemotaxis,
    Radiative,
}

/// Bacterial chemotaxis with tumbling kernel `φ(u) = -χ_S tanh(u/δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemotaxisParams {
    pub chi_s: f64,
    pub delta: f64,
    /// Diffusivity `D` of the chemical.
    pub diffusion: f64,
    /// Decay rate `α` of the chemical.
    pub alpha: f64,
    /// Production rate `β` of the chemical.
    pub beta: f64,
    pub eps: f64,
}

impl ChemotaxisParams {
    /// `χ_S = 1`, `δ = 1`, `D = 15`, `β = 60`, `α = 3`.
    pub fn standard(eps: f64) -> Self {
        Self {
            chi_s: 1.0,
            delta: 1.0,
            diffusion: 15.0,
            alpha: 3.0,
            beta: 60.0,
            eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("chi_s", self.chi_s),
            ("delta", self.delta),
            ("diffusion", self.diffusion),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        validate_eps(self.eps)?;
        if self.eps > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "eps must lie in (0, 1] for chemotaxis, got {}",
                self.eps
            )));
        }
        Ok(())
    }

    pub fn phi(&self, u: f64) -> f64 {
        tumble_phi(u, self)
    }

    /// Relaxation rates `d_m = 1 + ε φ(μ_m σ)`; each must be positive.
    pub fn rates(&self, quad: &Quadrature, sigma: f64) -> Result<Vec<f64>> {
        quad.mu
            .iter()
            .map(|&mu| {
                let rate = 1.0 + self.eps * self.phi(mu * sigma);
                if rate > 0.0 {
                    Ok(rate)
                } else {
                    Err(Error::InvalidRelaxationRate { rate, mu, sigma })
                }
            })
            .collect()
    }
}

/// Grey radiative transfer coupled to the material temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiativeParams {
    /// Opacity.
    pub sigma: f64,
    /// Radiation constant.
    pub a: f64,
    /// Speed of light.
    pub c: f64,
    /// Heat capacity.
    pub c_v: f64,
    pub eps: f64,
}

impl RadiativeParams {
    /// `σ = 1`, `a = 0.01372`, `c = 29.98`, `C_v = 0.01`.
    pub fn standard(eps: f64) -> Self {
        Self {
            sigma: 1.0,
            a: 0.01372,
            c: 29.98,
            c_v: 0.01,
            eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma", self.sigma),
            ("a", self.a),
            ("c", self.c),
            ("c_v", self.c_v),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        validate_eps(self.eps)
    }

    /// Temperature `T = (ψ / (a c))^{1/4}`.
    pub fn temperature(&self, psi: f64) -> f64 {
        (psi.max(0.0) / (self.a * self.c)).powf(0.25)
    }
}

/// Linear neutron transport with scattering `σ_T`, absorption `σ_a` and source `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutronParams {
    pub sigma_t: f64,
    pub sigma_a: f64,
    pub source: Source,
    pub eps: f64,
}

impl NeutronParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t > 0.0 && self.sigma_t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_t must be positive, got {}",
                self.sigma_t
            )));
        }
        if !(self.sigma_a >= 0.0 && self.sigma_a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_a must be non-negative, got {}",
                self.sigma_a
            )));
        }
        validate_eps(self.eps)
    }
}

fn validate_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )))
    }
}

/// Source terms `q(x, μ)`, all affine in `x` so that the value at a cell
/// centre is the cell average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Zero,
    /// Isotropic constant.
    Constant(f64),
    /// `q = μ|μ| + σ x (|μ| - 1/2)`, whose steady state is `I = |μ| x`.
    AbsLinear {
        sigma: f64,
    },
}

impl Source {
    pub fn value(&self, x: f64, mu: f64) -> f64 {
        match *self {
            Source::Zero => 0.0,
            Source::Constant(q) => q,
            Source::AbsLinear { sigma } => radiative_source(x, mu, sigma),
        }
    }

    /// `∂q/∂x`.
    pub fn slope(&self, _x: f64, mu: f64) -> f64 {
        match *self {
            Source::Zero | Source::Constant(_) => 0.0,
            Source::AbsLinear { sigma } => sigma * (mu.abs() - 0.5),
        }
    }

    /// Exact `(1/|V|) ∫ q dμ`.
    pub fn angular_mean(&self, _x: f64) -> f64 {
        match *self {
            Source::Zero => 0.0,
            Source::Constant(q) => q,
            // (1/2)∫ μ|μ| dμ = 0 and (1/2)∫ (|μ| - 1/2) dμ = 0.
            Source::AbsLinear { .. } => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Source::Zero) || matches!(self, Source::Constant(q) if *q == 0.0)
    }
}

/// `φ(u) = -χ_S tanh(u / δ)`.
pub fn tumble_phi(u: f64, p: &ChemotaxisParams) -> f64 {
    -p.chi_s * (u / p.delta).tanh()
}

/// `q(x, μ) = μ|μ| + σ x (|μ| - 1/2)`.
pub fn radiative_source(x: f64, mu: f64, sigma: f64) -> f64 {
    mu * mu.abs() + sigma * x * (mu.abs() - 0.5)
}

/// Initial bacteria distribution
/// `5 exp(-10(x-0.65)² - 10(x+0.65)²) exp(-20(v-0.5)² - 20(v+0.5)²)`.
pub fn chemo_initial_f(x: f64, v: f64) -> f64 {
    let ex = -10.0 * (x - 0.65).powi(2) - 10.0 * (x + 0.65).powi(2);
    let ev = -20.0 * (v - 0.5).powi(2) - 20.0 * (v + 0.5).powi(2);
    5.0 * ex.exp() * ev.exp()
}

/// Boundary condition of the kinetic unknown on one side of the domain.
#[derive(Debug, Clone, PartialEq)]
pub enum KineticBoundary {
    /// `f(x_b, μ) = f(x_b, -μ)`.
    Specular,
    /// Prescribed incoming data, indexed like the quadrature (length `2N`);
    /// only the entries of incoming ordinates are read.
    Inflow(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    pub left: KineticBoundary,
    pub right: KineticBoundary,
}

impl BoundaryCondition {
    pub fn specular() -> Self {
        Self {
            left: KineticBoundary::Specular,
            right: KineticBoundary::Specular,
        }
    }

    pub fn validate(&self, quad: &Quadrature) -> Result<()> {
        for side in [&self.left, &self.right] {
            if let KineticBoundary::Inflow(data) = side {
                if data.len() != quad.len() {
                    return Err(Error::InvalidArgument(format!(
                        "inflow data has {} entries, expected {}",
                        data.len(),
                        quad.len()
                    )));
                }
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("inflow data must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// Dirichlet values of the chemical concentration at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemicalBoundary {
    pub left: f64,
    pub right: f64,
}

/// Ghost-cell values of `f` outside each end of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Ghosts {
    /// `left[k]` is the `k`-th layer left of cell 0 (`k = 0` adjacent).
    pub left: Vec<Vec<f64>>,
    /// `right[k]` is the `k`-th layer right of the last cell.
    pub right: Vec<Vec<f64>>,
}

/// Ghost layers: specular layer `k` mirrors cell `k` in `μ`; an inflow side
/// uses the data for incoming ordinates and copies the edge cell otherwise.
pub fn ghost_layers(
    f: &KineticState,
    quad: &Quadrature,
    bc: &BoundaryCondition,
    layers: usize,
) -> Ghosts {
    let n = f.n_cells();
    let build = |side: &KineticBoundary, left: bool| -> Vec<Vec<f64>> {
        (0..layers)
            .map(|k| {
                let inner = if left {
                    k.min(n - 1)
                } else {
                    n - 1 - k.min(n - 1)
                };
                let edge = if left { 0 } else { n - 1 };
                (0..quad.len())
                    .map(|m| match side {
                        KineticBoundary::Specular => f.get(inner, quad.mirror(m)),
                        KineticBoundary::Inflow(data) => {
                            let incoming = quad.is_positive(m) == left;
                            if incoming {
                                data[m]
                            } else {
                                f.get(edge, m)
                            }
                        }
                    })
                    .collect()
            })
            .collect()
    };
    Ghosts {
        left: build(&bc.left, true),
        right: build(&bc.right, false),
    }
}

/// Single ghost layer on each side.
pub fn apply_boundary(f: &KineticState, quad: &Quadrature, bc: &BoundaryCondition) -> Ghosts {
    ghost_layers(f, quad, bc, 1)
}

/// One backward-Euler step of `∂_t S - D ∂_xx S + α S = β ρ` with a central
/// Laplacian and Dirichlet values imposed at the walls.
pub fn update_chemical_field(
    s: &[f64],
    rho: &[f64],
    dt: f64,
    p: &ChemotaxisParams,
    mesh: &Mesh1D,
    bc: &ChemicalBoundary,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    chemical_system(Some((s, dt)), rho, p, mesh, bc)
}

/// Steady chemical field `-D ∂_xx S + α S = β ρ`.
pub fn steady_chemical_field(
    rho: &[f64],
    p: &ChemotaxisParams,
    mesh: &Mesh1D,
    bc: &ChemicalBoundary,
) -> Result<Vec<f64>> {
    chemical_system(None, rho, p, mesh, bc)
}

fn chemical_system(
    previous: Option<(&[f64], f64)>,
    rho: &[f64],
    p: &ChemotaxisParams,
    mesh: &Mesh1D,
    bc: &ChemicalBoundary,
) -> Result<Vec<f64>> {
    let n = rho.len();
    if n != mesh.n_cells || previous.is_some_and(|(s, _)| s.len() != n) {
        return Err(Error::InvalidArgument(
            "chemical field size does not match the mesh".into(),
        ));
    }
    if !(p.diffusion > 0.0 && p.alpha > 0.0) {
        return Err(Error::InvalidArgument(
            "D and alpha must be positive".into(),
        ));
    }
    // Rows scaled by dt (transient) or left unscaled (steady).
    let (scale, mass) = match previous {
        Some((_, dt)) => (dt, 1.0),
        None => (1.0, 0.0),
    };
    let k = scale * p.diffusion / (mesh.dx * mesh.dx);
    let mut sub = vec![-k; n];
    let mut sup = vec![-k; n];
    let mut diag = vec![mass + scale * p.alpha + 2.0 * k; n];
    let mut rhs: Vec<f64> = (0..n)
        .map(|i| previous.map_or(0.0, |(s, _)| s[i]) + scale * p.beta * rho[i])
        .collect();
    // Ghost S_{-1} = 2 S_b - S_0 puts the Dirichlet value on the wall.
    diag[0] += k;
    rhs[0] += 2.0 * k * bc.left;
    diag[n - 1] += k;
    rhs[n - 1] += 2.0 * k * bc.right;
    sub[0] = 0.0;
    sup[n - 1] = 0.0;
    solve_tridiagonal(&sub, &diag, &sup, &rhs)
}

/// `σ_{i+1/2} = (S_{i+1} - S_i) / Δx` on the `n + 1` edges; the two domain
/// edges copy their neighbouring interior value.
pub fn interface_grad_s(s: &[f64], mesh: &Mesh1D) -> Vec<f64> {
    let n = s.len();
    let mut g = vec![0.0; n + 1];
    for j in 1..n {
        g[j] = (s[j] - s[j - 1]) / mesh.dx;
    }
    if n >= 2 {
        g[0] = g[1];
        g[n] = g[n - 1];
    }
    g
}

/// Time-step rule of each model family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStepRule {
    /// Chemotaxis and neutron transport.
    Diffusive,
    /// Radiative transfer with speed of light `c`.
    Radiative { c: f64 },
}

/// Diffusive: `Δx²` if `ε < Δx²`, else `ε Δx`.
/// Radiative: `0.95 Δx²/c` if `ε < 0.95 Δx/c`, else `0.95 ε Δx/c`.
pub fn time_step_size(eps: f64, dx: f64, rule: TimeStepRule) -> f64 {
    match rule {
        TimeStepRule::Diffusive => {
            if eps < dx * dx {
                dx * dx
            } else {
                eps * dx
            }
        }
        TimeStepRule::Radiative { c } => {
            if eps < 0.95 * dx / c {
                0.95 * dx * dx / c
            } else {
                0.95 * eps * dx / c
            }
        }
    }
}
