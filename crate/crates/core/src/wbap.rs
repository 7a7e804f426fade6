//! The well-balanced asymptotic-preserving time step.
//!
//! A step predicts `f̃^{n+1}` with the UGKS, solves the steady equation exactly
//! on every dual cell `[x_{i-1}, x_i]` with inflow data blended from `f^n` and
//! `f̃^{n+1}`, and uses the outflows of those cells as upwind values in an
//! implicit-explicit update of `f`.

use crate::error::{Error, Result};
use crate::grid::{Mesh1D, Quadrature};
use crate::models::{
    interface_grad_s, update_chemical_field, BoundaryCondition, ChemicalBoundary, ChemotaxisParams,
    KineticBoundary, NeutronParams, RadiativeParams, Source,
};
use crate::state::KineticState;
use crate::steady_cell::{
    spectral_basis, CellOperator, CellPolynomial, EdgeKind, ParticularSolver, SpectralBasis,
};
use crate::ugks_chemo::{predict_chemo, predict_neutron};
use crate::ugks_rad::{predict_rad, RadiativeProblem};

pub use crate::models::apply_boundary;

/// `α̃ = min(1, Δt/ε)`.
pub fn alpha_blend(eps: f64, dt: f64) -> f64 {
    (dt / eps).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WBAPParams {
    pub eps: f64,
    pub dt: f64,
    pub alpha_tilde: f64,
    /// Solve the steady problems a second time with `f^{n+1}` as prediction.
    pub repeat_steady_step: bool,
}

impl WBAPParams {
    pub fn new(eps: f64, dt: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite() && dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eps and dt must be positive, got eps = {eps}, dt = {dt}"
            )));
        }
        Ok(Self {
            eps,
            dt,
            alpha_tilde: alpha_blend(eps, dt),
            repeat_steady_step: false,
        })
    }

    pub fn with_repeat(mut self, repeat: bool) -> Self {
        self.repeat_steady_step = repeat;
        self
    }
}

/// Physical model advanced by the step.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    Neutron(&'a NeutronParams),
    Chemotaxis {
        params: &'a ChemotaxisParams,
        chemical_bc: ChemicalBoundary,
    },
    Radiative {
        params: &'a RadiativeParams,
        source: Source,
    },
}

impl Model<'_> {
    pub fn eps(&self) -> f64 {
        match self {
            Model::Neutron(p) => p.eps,
            Model::Chemotaxis { params, .. } => params.eps,
            Model::Radiative { params, .. } => params.eps,
        }
    }

    /// Transport speed in front of `μ/ε`.
    fn speed(&self) -> f64 {
        match self {
            Model::Radiative { params, .. } => params.c,
            _ => 1.0,
        }
    }
}

/// Quadrature, mesh and kinetic boundary condition.
#[derive(Debug, Clone, Copy)]
pub struct Domain<'a> {
    pub quad: &'a Quadrature,
    pub mesh: &'a Mesh1D,
    pub bc: &'a BoundaryCondition,
}

/// Kinetic unknown plus the model's macroscopic field: `S` for chemotaxis,
/// `ψ = acT⁴` for radiative transfer, empty for neutrons.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub f: KineticState,
    pub field: Vec<f64>,
}

struct Prediction {
    f: KineticState,
    /// Mean density `½Σωf̃` per cell.
    mean_density: Vec<f64>,
    /// Radiative only: `ψ̃` and the `β` frozen in its solve.
    psi: Vec<f64>,
    beta: Vec<f64>,
}

fn predict(state: &SolverState, dom: &Domain, model: &Model, dt: f64) -> Result<Prediction> {
    match *model {
        Model::Neutron(p) => {
            let pr = predict_neutron(&state.f, dt, p, dom.quad, dom.mesh, dom.bc)?;
            Ok(Prediction {
                mean_density: pr.rho,
                f: pr.f,
                psi: Vec::new(),
                beta: Vec::new(),
            })
        }
        Model::Chemotaxis { params, .. } => {
            let pr = predict_chemo(
                &state.f,
                &state.field,
                dt,
                params,
                dom.quad,
                dom.mesh,
                dom.bc,
            )?;
            Ok(Prediction {
                mean_density: pr.rho,
                f: pr.f,
                psi: Vec::new(),
                beta: Vec::new(),
            })
        }
        Model::Radiative { params, source } => {
            let prob = RadiativeProblem {
                quad: dom.quad,
                mesh: dom.mesh,
                params,
                bc: dom.bc,
                source,
            };
            let pr = predict_rad(&prob, &state.f, &state.field, dt)?;
            Ok(Prediction {
                mean_density: pr.intensity.mean_density(dom.quad),
                f: pr.intensity,
                psi: pr.macro_state.psi,
                beta: pr.beta,
            })
        }
    }
}

/// Advances the macroscopic field once `f^{n+1}` is known.
fn advance_field(
    state: &SolverState,
    f_new: &KineticState,
    pred: &Prediction,
    dom: &Domain,
    model: &Model,
    dt: f64,
) -> Result<Vec<f64>> {
    match *model {
        Model::Neutron(_) => Ok(Vec::new()),
        Model::Chemotaxis {
            params,
            chemical_bc,
        } => {
            let rho = f_new.mean_density(dom.quad);
            update_chemical_field(&state.field, &rho, dt, params, dom.mesh, &chemical_bc)
        }
        Model::Radiative { params, .. } => {
            // Implicit relaxation ψ' = ψ + σβΔt/ε² (ρ' − ψ') with β frozen.
            let rho = f_new.total_density(dom.quad);
            let eps2 = params.eps * params.eps;
            Ok((0..rho.len())
                .map(|i| {
                    let k = params.sigma * pred.beta[i] * dt / eps2;
                    (state.field[i] + k * rho[i]) / (1.0 + k)
                })
                .collect())
        }
    }
}

/// One step of the prediction alone.
pub fn predict_only_step(
    state: &SolverState,
    dom: &Domain,
    model: &Model,
    dt: f64,
) -> Result<SolverState> {
    let pred = predict(state, dom, model, dt)?;
    let field = match model {
        Model::Radiative { .. } => pred.psi.clone(),
        _ => advance_field(state, &pred.f, &pred, dom, model, dt)?,
    };
    Ok(SolverState { f: pred.f, field })
}

/// Steady problem on the dual cell behind edge `j`.
struct DualCell {
    x_lo: f64,
    x_hi: f64,
    left: EdgeKind,
    right: EdgeKind,
}

fn dual_cell(dom: &Domain, j: usize) -> DualCell {
    let mesh = dom.mesh;
    let n = mesh.n_cells;
    let kind = |b: &KineticBoundary| match b {
        KineticBoundary::Specular => EdgeKind::Reflect,
        KineticBoundary::Inflow(_) => EdgeKind::Inflow,
    };
    DualCell {
        x_lo: if j == 0 {
            mesh.x_min
        } else {
            mesh.center(j - 1)
        },
        x_hi: if j == n { mesh.x_max } else { mesh.center(j) },
        left: if j == 0 {
            kind(&dom.bc.left)
        } else {
            EdgeKind::Inflow
        },
        right: if j == n {
            kind(&dom.bc.right)
        } else {
            EdgeKind::Inflow
        },
    }
}

/// Incoming data of dual cell `j` on both sides.
fn dual_inflow(dom: &Domain, blend: &KineticState, j: usize) -> (Vec<f64>, Vec<f64>) {
    let n = dom.mesh.n_cells;
    let n_ord = dom.quad.len();
    let side = |b: &KineticBoundary| match b {
        KineticBoundary::Inflow(d) => d.clone(),
        KineticBoundary::Specular => vec![0.0; n_ord],
    };
    let left = if j == 0 {
        side(&dom.bc.left)
    } else {
        blend.cell(j - 1).to_vec()
    };
    let right = if j == n {
        side(&dom.bc.right)
    } else {
        blend.cell(j).to_vec()
    };
    (left, right)
}

/// Source of the steady problems.
enum SteadySource {
    None,
    /// Affine kinetic source `q(x, μ)`.
    Fixed(Source),
    /// `q − σ_a ρ̂` with `ρ̂` interpolated from endpoint densities.
    Absorbing {
        q: Source,
        sigma_a: f64,
    },
}

fn source_coefficients(
    src: &SteadySource,
    quad: &Quadrature,
    cell: &DualCell,
    rho_ends: (f64, f64),
) -> Option<Vec<Vec<f64>>> {
    let xc = 0.5 * (cell.x_lo + cell.x_hi);
    let width = cell.x_hi - cell.x_lo;
    match src {
        SteadySource::None => None,
        SteadySource::Fixed(q) => {
            if q.is_zero() {
                return None;
            }
            Some(vec![
                quad.mu.iter().map(|&mu| q.value(xc, mu)).collect(),
                quad.mu.iter().map(|&mu| q.slope(xc, mu)).collect(),
            ])
        }
        SteadySource::Absorbing { q, sigma_a } => {
            let (r0, r1) = rho_ends;
            let mean = 0.5 * (r0 + r1);
            let slope = (r1 - r0) / width;
            Some(vec![
                quad.mu
                    .iter()
                    .map(|&mu| q.value(xc, mu) - sigma_a * mean)
                    .collect(),
                quad.mu
                    .iter()
                    .map(|&mu| q.slope(xc, mu) - sigma_a * slope)
                    .collect(),
            ])
        }
    }
}

/// Rates of every dual cell: one shared vector or one per edge.
enum DualRates {
    Shared(Vec<f64>),
    PerEdge(Vec<Vec<f64>>),
}

/// Bases, particular solver and (for shared rates) factorized operators of
/// the dual cells.
struct SteadySolver {
    bases: Vec<SpectralBasis>,
    particular: Option<ParticularSolver>,
    source: SteadySource,
    /// Shared rates only: operators of the first, interior and last dual cells.
    ops: Option<[CellOperator; 3]>,
}

impl SteadySolver {
    fn new(dom: &Domain, eps: f64, rates: DualRates, source: SteadySource) -> Result<Self> {
        let bases = match &rates {
            DualRates::Shared(r) => vec![spectral_basis(dom.quad, eps, r)?],
            DualRates::PerEdge(rs) => rs
                .iter()
                .enumerate()
                .map(|(j, r)| {
                    spectral_basis(dom.quad, eps, r).map_err(|e| e.in_cell(j as isize - 1))
                })
                .collect::<Result<_>>()?,
        };
        let particular = match (&source, &rates) {
            (SteadySource::None, _) => None,
            (SteadySource::Fixed(q), _) if q.is_zero() => None,
            (_, DualRates::Shared(r)) => Some(ParticularSolver::new(dom.quad, eps, r)?),
            (_, DualRates::PerEdge(_)) => {
                return Err(Error::InvalidArgument(
                    "steady sources need rates shared by all cells".into(),
                ))
            }
        };
        let ops = match rates {
            DualRates::Shared(_) => {
                let n = dom.mesh.n_cells;
                let op = |j: usize| {
                    let cell = dual_cell(dom, j);
                    CellOperator::new(&bases[0], cell.x_hi - cell.x_lo, cell.left, cell.right)
                        .map_err(|e| e.in_cell(j as isize))
                };
                Some([op(0)?, op(1)?, op(n)?])
            }
            DualRates::PerEdge(_) => None,
        };
        Ok(Self {
            bases,
            particular,
            source,
            ops,
        })
    }

    /// Interface values `f̂_j`: right-edge outflow for `μ > 0`, left-edge
    /// outflow for `μ < 0`, for every edge `j = 0..=n`.
    fn interface_values(
        &self,
        dom: &Domain,
        blend: &KineticState,
        rho_guess: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let quad = dom.quad;
        let n = dom.mesh.n_cells;
        let mut out = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let cell = dual_cell(dom, j);
            let op_owned;
            let op: &CellOperator = match &self.ops {
                Some(ops) => {
                    &ops[if j == 0 {
                        0
                    } else if j == n {
                        2
                    } else {
                        1
                    }]
                }
                None => {
                    op_owned = CellOperator::new(
                        &self.bases[j],
                        cell.x_hi - cell.x_lo,
                        cell.left,
                        cell.right,
                    )
                    .map_err(|e| e.in_cell(j as isize))?;
                    &op_owned
                }
            };
            let (left, right) = dual_inflow(dom, blend, j);
            let ends = (
                rho_guess[j.saturating_sub(1).min(n - 1)],
                rho_guess[j.min(n - 1)],
            );
            let sol = self
                .solve_one(quad, op, &cell, &left, &right, ends)
                .map_err(|e| e.in_cell(j as isize))?;
            out.push(
                (0..quad.len())
                    .map(|m| {
                        if quad.is_positive(m) {
                            sol.right_trace[m]
                        } else {
                            sol.left_trace[m]
                        }
                    })
                    .collect(),
            );
        }
        Ok(out)
    }

    fn solve_one(
        &self,
        quad: &Quadrature,
        op: &CellOperator,
        cell: &DualCell,
        left: &[f64],
        right: &[f64],
        ends: (f64, f64),
    ) -> Result<crate::steady_cell::CellSolution> {
        let poly = |ends: (f64, f64)| -> Result<Option<CellPolynomial>> {
            match (
                &self.particular,
                source_coefficients(&self.source, quad, cell, ends),
            ) {
                (Some(ps), Some(g)) => Ok(Some(ps.solve(&g)?)),
                _ => Ok(None),
            }
        };
        let p = poly(ends)?;
        let sol = op.solve(left, right, p.as_ref())?;
        if let SteadySource::Absorbing { sigma_a, .. } = self.source {
            if sigma_a > 0.0 {
                // One Picard pass with the densities of the first solve.
                let ends = (
                    0.5 * quad.sum(&sol.left_trace),
                    0.5 * quad.sum(&sol.right_trace),
                );
                let p = poly(ends)?;
                return op.solve(left, right, p.as_ref());
            }
        }
        Ok(sol)
    }
}

/// Whether the steady problems change from step to step.
fn rates_vary(model: &Model) -> bool {
    matches!(model, Model::Chemotaxis { .. })
}

fn steady_solver(dom: &Domain, model: &Model, state: &SolverState) -> Result<SteadySolver> {
    let n_ord = dom.quad.len();
    let eps = model.eps();
    match *model {
        Model::Neutron(p) => {
            let source = if p.sigma_a > 0.0 {
                SteadySource::Absorbing {
                    q: p.source,
                    sigma_a: p.sigma_a,
                }
            } else {
                SteadySource::Fixed(p.source)
            };
            SteadySolver::new(dom, eps, DualRates::Shared(vec![p.sigma_t; n_ord]), source)
        }
        Model::Radiative { params, source } => SteadySolver::new(
            dom,
            eps,
            DualRates::Shared(vec![params.sigma; n_ord]),
            SteadySource::Fixed(source),
        ),
        Model::Chemotaxis { params, .. } => {
            let grad = interface_grad_s(&state.field, dom.mesh);
            let rates = grad
                .iter()
                .map(|&g| params.rates(dom.quad, g))
                .collect::<Result<Vec<_>>>()?;
            SteadySolver::new(dom, eps, DualRates::PerEdge(rates), SteadySource::None)
        }
    }
}

/// Blend weight actually used. For radiative transfer it is floored so that
/// the explicit part `1 − (1 − α̃)λ` of the update stays non-negative.
fn effective_alpha(dom: &Domain, model: &Model, params: &WBAPParams) -> f64 {
    let alpha = params.alpha_tilde;
    match model {
        Model::Radiative { .. } => {
            let mu_max = dom.quad.mu.iter().fold(0.0f64, |a, m| a.max(m.abs()));
            let lam_max = model.speed() * mu_max * params.dt / (params.eps * dom.mesh.dx);
            alpha.max(1.0 - 1.0 / lam_max).min(1.0)
        }
        _ => alpha,
    }
}

fn kinetic_update(
    dom: &Domain,
    f: &KineticState,
    fhat: &[Vec<f64>],
    speed: f64,
    alpha: f64,
    params: &WBAPParams,
) -> KineticState {
    let quad = dom.quad;
    let n = f.n_cells();
    let mut out = KineticState::zeros(n, quad.len());
    for i in 0..n {
        for m in 0..quad.len() {
            let mu = quad.mu[m];
            let lam = speed * mu.abs() * params.dt / (params.eps * dom.mesh.dx);
            let up = if mu > 0.0 { fhat[i][m] } else { fhat[i + 1][m] };
            let v = (f.get(i, m) * (1.0 - (1.0 - alpha) * lam) + lam * up) / (1.0 + alpha * lam);
            out.set(i, m, v);
        }
    }
    out
}

fn blend(a: &KineticState, b: &KineticState, alpha: f64) -> KineticState {
    let mut out = a.clone();
    for i in 0..a.n_cells() {
        for m in 0..a.n_ord() {
            out.set(i, m, (1.0 - alpha) * a.get(i, m) + alpha * b.get(i, m));
        }
    }
    out
}

/// WBAP time stepper for a fixed domain, model and time step. Steady-problem
/// factorizations are kept across steps when the relaxation rates do not
/// depend on the state.
pub struct WbapStepper<'a> {
    dom: Domain<'a>,
    model: Model<'a>,
    params: WBAPParams,
    cached: Option<SteadySolver>,
}

impl<'a> WbapStepper<'a> {
    pub fn new(dom: Domain<'a>, model: Model<'a>, params: WBAPParams) -> Result<Self> {
        dom.bc.validate(dom.quad)?;
        if (params.eps - model.eps()).abs() > 1e-15 * model.eps() {
            return Err(Error::InvalidArgument(format!(
                "step eps {} differs from the model's {}",
                params.eps,
                model.eps()
            )));
        }
        Ok(Self {
            dom,
            model,
            params,
            cached: None,
        })
    }

    pub fn step(&mut self, state: &SolverState) -> Result<SolverState> {
        let (dom, model, params) = (&self.dom, &self.model, &self.params);
        let pred = predict(state, dom, model, params.dt)?;
        let alpha = effective_alpha(dom, model, params);
        let fresh;
        let solver = if rates_vary(model) {
            fresh = steady_solver(dom, model, state)?;
            &fresh
        } else {
            if self.cached.is_none() {
                self.cached = Some(steady_solver(dom, model, state)?);
            }
            self.cached.as_ref().unwrap()
        };

        let mut target = pred.f.clone();
        let mut rho_guess = pred.mean_density.clone();
        let passes = if params.repeat_steady_step { 2 } else { 1 };
        let mut f_new = state.f.clone();
        for _ in 0..passes {
            let b = blend(&state.f, &target, alpha);
            let fhat = solver.interface_values(dom, &b, &rho_guess)?;
            f_new = kinetic_update(dom, &state.f, &fhat, model.speed(), alpha, params);
            target = f_new.clone();
            rho_guess = f_new.mean_density(dom.quad);
        }
        if !f_new.is_finite() {
            return Err(Error::NotConverged {
                iterations: passes,
                residual: f64::NAN,
                context: "non-finite kinetic update".into(),
            });
        }
        let field = advance_field(state, &f_new, &pred, dom, model, params.dt)?;
        Ok(SolverState { f: f_new, field })
    }
}

/// One WBAP step.
pub fn wbap_step(
    state: &SolverState,
    dom: &Domain,
    model: &Model,
    params: &WBAPParams,
) -> Result<SolverState> {
    WbapStepper::new(*dom, *model, *params)?.step(state)
}

/// `r = (Σ_i Δx (Σ_m ω_m |f_new − f_old|)²)^{1/2}`.
pub fn residue_norm(
    f_new: &KineticState,
    f_old: &KineticState,
    quad: &Quadrature,
    mesh: &Mesh1D,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..f_new.n_cells() {
        let s: f64 = (0..quad.len())
            .map(|m| quad.weights[m] * (f_new.get(i, m) - f_old.get(i, m)).abs())
            .sum();
        acc += mesh.dx * s * s;
    }
    acc.sqrt()
}

/// `J_i = (1/|V|) Σ_m ω_m μ_m f_{i,m}` per cell.
pub fn macro_flux_j(f: &KineticState, quad: &Quadrature) -> Vec<f64> {
    (0..f.n_cells())
        .map(|i| 0.5 * quad.first_moment(f.cell(i)))
        .collect()
}
