//! Run configuration, the simulation driver, the convergence and steady-state
//! studies, and CSV output.
//!
//! A configuration is a flat list of `key = value` lines; `#` starts a
//! comment. Unknown and repeated keys are errors, as are keys that do not
//! apply to the selected model.
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `model` | `neutron`, `chemotaxis`, `radiative`, `keller_segel`, `nonlinear_diffusion` | required |
//! | `scheme` | `wbap`, `predict_only`, `limit` | `wbap` (`limit` for the two limit models) |
//! | `eps` | positive real | required unless `scheme = limit` |
//! | `n_cells` | positive integer | required |
//! | `n_ordinates` | even integer `2N` | 16 (32 for radiative) |
//! | `quadrature` | `gauss_legendre`, `double_gauss` | `gauss_legendre` |
//! | `final_time` | positive real | required |
//! | `dt` | positive real, overrides the time-step rule | rule of the model |
//! | `x_min`, `x_max` | reals | `-1, 1` (`0, 1` for radiative) |
//! | `left_bc`, `right_bc` | `specular`, `inflow`, `inflow_abs_mu` (radiative) | specular (radiative: inflow on the left) |
//! | `left_inflow`, `right_inflow` | incoming value `v`: `I_b = v`, or `2\|μ\| v` for `inflow_abs_mu` | 0 |
//! | `chi_s`, `delta`, `diffusion`, `alpha`, `beta` | chemotaxis parameters | 1, 1, 15, 3, 60 |
//! | `s_left`, `s_right` | Dirichlet values of `S` | 0 |
//! | `sigma`, `a`, `c`, `c_v` | radiative parameters | 1, 0.01372, 29.98, 0.01 |
//! | `sigma_t`, `sigma_a` | neutron cross sections | 1, 0 |
//! | `source` | `zero`, `constant`, `abs_linear` | `abs_linear` for radiative, else `zero` |
//! | `source_value` | value of the constant source | 0 |
//! | `initial` | `bumps`, `cosine`, `uniform`, `steady`, `gaussian` | `bumps`, `cosine`, `steady` by model (`uniform` for `nonlinear_diffusion`) |
//! | `initial_value` | level of `uniform`, background of `gaussian` | 1 |
//! | `output` | output directory | `out` |
//! | `write_f` | `true`, `false` | `false` |
//! | `repeat_steady_step` | `true`, `false` | `false` |
//! | `study_n_cells` | comma separated halving sequence | empty |
//! | `study_eps` | comma separated decreasing list | empty |
//! | `seed` | unsigned integer | 0 |
//! | `drift_constant`, `max_flux`, `max_steady_error` | steady-check tolerances | unchecked |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{uniform_mesh, Mesh1D, Quadrature, QuadratureKind};
use crate::limits::{
    keller_segel_flux, keller_segel_step, neutron_diffusion_step, nonlinear_diffusion_step,
    MacroBoundary,
};
use crate::models::{
    chemo_initial_f, interface_grad_s, steady_chemical_field, time_step_size, BoundaryCondition,
    ChemicalBoundary, ChemotaxisParams, KineticBoundary, NeutronParams, RadiativeParams, Source,
    TimeStepRule,
};
use crate::state::{KineticState, VELOCITY_MEASURE};
use crate::wbap::{
    macro_flux_j, predict_only_step, residue_norm, Domain, Model, SolverState, WBAPParams,
    WbapStepper,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Neutron,
    Chemotaxis,
    Radiative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Wbap,
    PredictOnly,
    /// The macroscopic limit solver of the model.
    Limit,
}

/// Kinetic condition on one wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallSpec {
    Specular,
    /// Isotropic incoming value.
    Inflow(f64),
    /// Incoming `2|μ| v`, whose half-range mean is `v`.
    InflowAbsMu(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialData {
    /// Two bumps in `x` at `±0.65`, two in `μ` at `±0.5`.
    Bumps,
    /// Isotropic `1 + cos(π x)/2`.
    Cosine,
    /// Isotropic constant `initial_value`.
    Uniform,
    /// `f = |μ| x`, the steady state of the radiative source.
    Steady,
    /// Isotropic `initial_value + exp(-100 (x - x_mid)²)`.
    Gaussian,
}

/// Tolerances of `steady-check`; `None` is not checked.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tolerances {
    /// `K` in `max|f^{n+1} - f^n| ≤ K Δx Δt`.
    pub drift_constant: Option<f64>,
    pub max_flux: Option<f64>,
    /// Bound on `max|ρ - x|` for the radiative steady state.
    pub max_steady_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub scheme: Scheme,
    /// Zero for a limit run without `eps`.
    pub eps: f64,
    pub n_cells: usize,
    pub n_ordinates: usize,
    pub quadrature: QuadratureKind,
    pub final_time: f64,
    pub dt: Option<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub left: WallSpec,
    pub right: WallSpec,
    /// Chemotaxis parameters; `eps` is taken from the config.
    pub chemotaxis: ChemotaxisParams,
    pub chemical_bc: ChemicalBoundary,
    pub radiative: RadiativeParams,
    pub neutron: NeutronParams,
    pub source: Source,
    pub initial: InitialData,
    pub initial_value: f64,
    pub output: PathBuf,
    pub write_f: bool,
    pub repeat_steady_step: bool,
    pub study_n_cells: Vec<usize>,
    pub study_eps: Vec<f64>,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn with_eps(&self, eps: f64) -> Self {
        Self {
            eps,
            ..self.clone()
        }
    }

    pub fn with_n_cells(&self, n_cells: usize) -> Self {
        Self {
            n_cells,
            ..self.clone()
        }
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        Self {
            scheme,
            ..self.clone()
        }
    }

    pub fn with_output(&self, output: impl Into<PathBuf>) -> Self {
        Self {
            output: output.into(),
            ..self.clone()
        }
    }

    pub fn chemotaxis_params(&self) -> ChemotaxisParams {
        ChemotaxisParams {
            eps: self.eps,
            ..self.chemotaxis.clone()
        }
    }

    pub fn radiative_params(&self) -> RadiativeParams {
        RadiativeParams {
            eps: self.eps,
            ..self.radiative.clone()
        }
    }

    pub fn neutron_params(&self) -> NeutronParams {
        NeutronParams {
            eps: self.eps,
            source: self.source,
            ..self.neutron.clone()
        }
    }

    pub fn mesh(&self) -> Result<Mesh1D> {
        uniform_mesh(self.x_min, self.x_max, self.n_cells)
    }

    pub fn quadrature(&self) -> Result<Quadrature> {
        Quadrature::new(self.quadrature, self.n_ordinates / 2)
    }

    pub fn boundary(&self, quad: &Quadrature) -> BoundaryCondition {
        let side = |w: WallSpec| match w {
            WallSpec::Specular => KineticBoundary::Specular,
            WallSpec::Inflow(v) => KineticBoundary::Inflow(vec![v; quad.len()]),
            WallSpec::InflowAbsMu(v) => {
                KineticBoundary::Inflow(quad.mu.iter().map(|m| 2.0 * m.abs() * v).collect())
            }
        };
        BoundaryCondition {
            left: side(self.left),
            right: side(self.right),
        }
    }

    /// Time step of the kinetic schemes, or of the limit solvers.
    pub fn time_step(&self) -> f64 {
        if let Some(dt) = self.dt {
            return dt;
        }
        let dx = (self.x_max - self.x_min) / self.n_cells as f64;
        let rule = match self.model {
            ModelChoice::Radiative => TimeStepRule::Radiative {
                c: self.radiative.c,
            },
            _ => TimeStepRule::Diffusive,
        };
        match self.scheme {
            Scheme::Limit => {
                let dt = time_step_size(0.0, dx, rule);
                match self.model {
                    ModelChoice::Neutron => dt.min(self.neutron.sigma_t * dx * dx),
                    _ => dt,
                }
            }
            _ => time_step_size(self.eps, dx, rule),
        }
    }
}

/// Every accepted key, with the models it applies to (`None`: all).
const KEYS: &[(&str, Option<&[ModelChoice]>)] = &[
    ("model", None),
    ("scheme", None),
    ("eps", None),
    ("n_cells", None),
    ("n_ordinates", None),
    ("quadrature", None),
    ("final_time", None),
    ("dt", None),
    ("x_min", None),
    ("x_max", None),
    ("left_bc", None),
    ("right_bc", None),
    ("left_inflow", None),
    ("right_inflow", None),
    ("chi_s", Some(&[ModelChoice::Chemotaxis])),
    ("delta", Some(&[ModelChoice::Chemotaxis])),
    ("diffusion", Some(&[ModelChoice::Chemotaxis])),
    ("alpha", Some(&[ModelChoice::Chemotaxis])),
    ("beta", Some(&[ModelChoice::Chemotaxis])),
    ("s_left", Some(&[ModelChoice::Chemotaxis])),
    ("s_right", Some(&[ModelChoice::Chemotaxis])),
    ("sigma", Some(&[ModelChoice::Radiative])),
    ("a", Some(&[ModelChoice::Radiative])),
    ("c", Some(&[ModelChoice::Radiative])),
    ("c_v", Some(&[ModelChoice::Radiative])),
    ("sigma_t", Some(&[ModelChoice::Neutron])),
    ("sigma_a", Some(&[ModelChoice::Neutron])),
    (
        "source",
        Some(&[ModelChoice::Neutron, ModelChoice::Radiative]),
    ),
    (
        "source_value",
        Some(&[ModelChoice::Neutron, ModelChoice::Radiative]),
    ),
    ("initial", None),
    ("initial_value", None),
    ("output", None),
    ("write_f", None),
    ("repeat_steady_step", None),
    ("study_n_cells", None),
    ("study_eps", None),
    ("seed", None),
    ("drift_constant", None),
    ("max_flux", None),
    ("max_steady_error", None),
];

struct Entry {
    line: usize,
    value: String,
}

struct Table(BTreeMap<String, Entry>);

fn config_error(line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, Entry> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                config_error(
                    Some(line),
                    format!("expected `key = value`, got `{content}`"),
                )
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(config_error(Some(line), format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(config_error(
                    Some(line),
                    format!("key `{key}` has no value"),
                ));
            }
            if let Some(prev) = map.get(key) {
                return Err(config_error(
                    Some(line),
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            map.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.to_string(),
                },
            );
        }
        Ok(Table(map))
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|e| e.line)
    }

    fn get<T>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .map_err(|m| config_error(Some(e.line), format!("`{key}`: {m}"))),
        }
    }

    fn required<T>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<T> {
        self.get(key, parse)?
            .ok_or_else(|| config_error(None, format!("missing required key `{key}`")))
    }
}

fn real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s
        .parse()
        .map_err(|_| format!("expected a real number, got `{s}`"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, got `{s}`"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v = real(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn count(s: &str) -> std::result::Result<usize, String> {
    let v: i64 = s
        .parse()
        .map_err(|_| format!("expected an integer, got `{s}`"))?;
    if v > 0 {
        Ok(v as usize)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn boolean(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, got `{s}`")),
    }
}

fn list<T>(
    s: &str,
    item: impl Fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|v| item(v.trim())).collect()
}

fn choice<T: Copy>(s: &str, options: &[(&str, T)]) -> std::result::Result<T, String> {
    options
        .iter()
        .find(|(name, _)| *name == s)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            format!("expected one of {}, got `{s}`", names.join(", "))
        })
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let t = Table::parse(text)?;
    let (model, forced_limit) = t.required("model", |s| {
        choice(
            s,
            &[
                ("neutron", (ModelChoice::Neutron, false)),
                ("chemotaxis", (ModelChoice::Chemotaxis, false)),
                ("radiative", (ModelChoice::Radiative, false)),
                ("keller_segel", (ModelChoice::Chemotaxis, true)),
                ("nonlinear_diffusion", (ModelChoice::Radiative, true)),
            ],
        )
    })?;
    for (key, entry) in &t.0 {
        let applies = KEYS.iter().find(|(k, _)| k == key).and_then(|(_, m)| *m);
        if let Some(models) = applies {
            if !models.contains(&model) {
                return Err(config_error(
                    Some(entry.line),
                    format!("key `{key}` does not apply to model {model:?}"),
                ));
            }
        }
    }

    let scheme = t
        .get("scheme", |s| {
            choice(
                s,
                &[
                    ("wbap", Scheme::Wbap),
                    ("predict_only", Scheme::PredictOnly),
                    ("limit", Scheme::Limit),
                ],
            )
        })?
        .unwrap_or(if forced_limit {
            Scheme::Limit
        } else {
            Scheme::Wbap
        });
    if forced_limit && scheme != Scheme::Limit {
        return Err(config_error(
            t.line("scheme"),
            "limit models only run with `scheme = limit`",
        ));
    }

    let eps = match scheme {
        Scheme::Limit => t.get("eps", positive)?.unwrap_or(0.0),
        _ => t.required("eps", positive)?,
    };
    if model == ModelChoice::Chemotaxis && eps > 1.0 {
        return Err(config_error(
            t.line("eps"),
            format!("eps must lie in (0, 1] for chemotaxis, got {eps}"),
        ));
    }
    let n_cells = t.required("n_cells", count)?;
    if n_cells < 2 {
        return Err(config_error(
            t.line("n_cells"),
            "at least 2 cells are needed",
        ));
    }
    let n_ordinates = t
        .get("n_ordinates", count)?
        .unwrap_or(if model == ModelChoice::Radiative {
            32
        } else {
            16
        });
    if n_ordinates % 2 != 0 {
        return Err(config_error(
            t.line("n_ordinates"),
            "the number of ordinates must be even",
        ));
    }
    let quadrature = t
        .get("quadrature", |s| {
            choice(
                s,
                &[
                    ("gauss_legendre", QuadratureKind::GaussLegendre),
                    ("double_gauss", QuadratureKind::DoubleGauss),
                ],
            )
        })?
        .unwrap_or(QuadratureKind::GaussLegendre);
    if let Err(e) = Quadrature::new(quadrature, n_ordinates / 2) {
        return Err(config_error(
            t.line("n_ordinates").or(t.line("quadrature")),
            e.to_string(),
        ));
    }
    let final_time = t.required("final_time", positive)?;
    let dt = t.get("dt", positive)?;

    let (default_min, default_max) = if model == ModelChoice::Radiative {
        (0.0, 1.0)
    } else {
        (-1.0, 1.0)
    };
    let x_min = t.get("x_min", real)?.unwrap_or(default_min);
    let x_max = t.get("x_max", real)?.unwrap_or(default_max);
    if x_max <= x_min {
        return Err(config_error(
            t.line("x_max").or(t.line("x_min")),
            "x_max must exceed x_min",
        ));
    }

    let wall = |bc_key: &str, value_key: &str, default_inflow: bool| -> Result<WallSpec> {
        let kind = t
            .get(bc_key, |s| {
                choice(s, &[("specular", 0), ("inflow", 1), ("inflow_abs_mu", 2)])
            })?
            .unwrap_or(if default_inflow { 1 } else { 0 });
        let value = t.get(value_key, real)?;
        if kind == 1 {
            Ok(WallSpec::Inflow(value.unwrap_or(0.0)))
        } else if kind == 2 {
            // Only the radiative predictor weights anisotropic wall data so
            // that the small-eps limit sees the right wall value.
            if model != ModelChoice::Radiative {
                return Err(config_error(
                    t.line(bc_key),
                    "`inflow_abs_mu` is available for the radiative model only",
                ));
            }
            Ok(WallSpec::InflowAbsMu(value.unwrap_or(0.0)))
        } else if value.is_some() {
            Err(config_error(
                t.line(value_key),
                format!("`{value_key}` needs an inflow `{bc_key}`"),
            ))
        } else {
            Ok(WallSpec::Specular)
        }
    };
    let left = wall("left_bc", "left_inflow", model == ModelChoice::Radiative)?;
    let right = wall("right_bc", "right_inflow", false)?;

    let mut chemotaxis = ChemotaxisParams::standard(eps);
    for (key, slot) in [
        ("chi_s", &mut chemotaxis.chi_s),
        ("delta", &mut chemotaxis.delta),
        ("diffusion", &mut chemotaxis.diffusion),
        ("alpha", &mut chemotaxis.alpha),
        ("beta", &mut chemotaxis.beta),
    ] {
        if let Some(v) = t.get(key, positive)? {
            *slot = v;
        }
    }
    let chemical_bc = ChemicalBoundary {
        left: t.get("s_left", real)?.unwrap_or(0.0),
        right: t.get("s_right", real)?.unwrap_or(0.0),
    };

    let mut radiative = RadiativeParams::standard(eps);
    for (key, slot) in [
        ("sigma", &mut radiative.sigma),
        ("a", &mut radiative.a),
        ("c", &mut radiative.c),
        ("c_v", &mut radiative.c_v),
    ] {
        if let Some(v) = t.get(key, positive)? {
            *slot = v;
        }
    }
    let neutron = NeutronParams {
        sigma_t: t.get("sigma_t", positive)?.unwrap_or(1.0),
        sigma_a: t.get("sigma_a", real)?.unwrap_or(0.0),
        source: Source::Zero,
        eps,
    };
    if neutron.sigma_a < 0.0 {
        return Err(config_error(
            t.line("sigma_a"),
            "sigma_a must be non-negative",
        ));
    }

    let source_value = t.get("source_value", real)?;
    let default_source = if model == ModelChoice::Radiative {
        "abs_linear"
    } else {
        "zero"
    };
    let source_name = t
        .get("source", |s| {
            choice(
                s,
                &[
                    ("zero", "zero"),
                    ("constant", "constant"),
                    ("abs_linear", "abs_linear"),
                ],
            )
        })?
        .unwrap_or(default_source);
    let source = match source_name {
        "constant" => Source::Constant(source_value.unwrap_or(0.0)),
        "abs_linear" => Source::AbsLinear {
            sigma: radiative.sigma,
        },
        _ => Source::Zero,
    };
    if source_value.is_some() && source_name != "constant" {
        return Err(config_error(
            t.line("source_value"),
            "`source_value` needs `source = constant`",
        ));
    }
    if model == ModelChoice::Neutron && matches!(source, Source::AbsLinear { .. }) {
        return Err(config_error(
            t.line("source"),
            "the abs_linear source belongs to the radiative model",
        ));
    }

    let default_initial = match model {
        ModelChoice::Chemotaxis => InitialData::Bumps,
        ModelChoice::Neutron => InitialData::Cosine,
        ModelChoice::Radiative if scheme == Scheme::Limit => InitialData::Uniform,
        ModelChoice::Radiative => InitialData::Steady,
    };
    let initial = t
        .get("initial", |s| {
            choice(
                s,
                &[
                    ("bumps", InitialData::Bumps),
                    ("cosine", InitialData::Cosine),
                    ("uniform", InitialData::Uniform),
                    ("steady", InitialData::Steady),
                    ("gaussian", InitialData::Gaussian),
                ],
            )
        })?
        .unwrap_or(default_initial);
    if scheme == Scheme::Limit && initial == InitialData::Steady {
        return Err(config_error(
            t.line("initial"),
            "the anisotropic `steady` data has no limit counterpart",
        ));
    }
    let initial_value = t.get("initial_value", real)?.unwrap_or(1.0);

    let study_n_cells = t
        .get("study_n_cells", |s| list(s, count))?
        .unwrap_or_default();
    for pair in study_n_cells.windows(2) {
        if pair[1] != 2 * pair[0] {
            return Err(config_error(
                t.line("study_n_cells"),
                format!(
                    "meshes must be nested halvings, got {} then {}",
                    pair[0], pair[1]
                ),
            ));
        }
    }
    let study_eps = t
        .get("study_eps", |s| list(s, positive))?
        .unwrap_or_default();
    if study_eps.windows(2).any(|p| p[1] >= p[0]) {
        return Err(config_error(
            t.line("study_eps"),
            "the eps list must be decreasing",
        ));
    }

    let cfg = RunConfig {
        model,
        scheme,
        eps,
        n_cells,
        n_ordinates,
        quadrature,
        final_time,
        dt,
        x_min,
        x_max,
        left,
        right,
        chemotaxis,
        chemical_bc,
        radiative,
        neutron,
        source,
        initial,
        initial_value,
        output: PathBuf::from(
            t.get("output", |s| Ok(s.to_string()))?
                .unwrap_or_else(|| "out".into()),
        ),
        write_f: t.get("write_f", boolean)?.unwrap_or(false),
        repeat_steady_step: t.get("repeat_steady_step", boolean)?.unwrap_or(false),
        study_n_cells,
        study_eps,
        seed: t
            .get("seed", |s| {
                s.parse::<u64>()
                    .map_err(|_| format!("expected an unsigned integer, got `{s}`"))
            })?
            .unwrap_or(0),
        tolerances: Tolerances {
            drift_constant: t.get("drift_constant", positive)?,
            max_flux: t.get("max_flux", positive)?,
            max_steady_error: t.get("max_steady_error", positive)?,
        },
    };
    if cfg.model == ModelChoice::Chemotaxis && cfg.scheme != Scheme::Limit {
        cfg.chemotaxis_params()
            .validate()
            .map_err(|e| config_error(None, e.to_string()))?;
    }
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Final state of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum FinalState {
    Kinetic(SolverState),
    /// Limit solvers: density and the model's second field (`S`, `T`, or empty).
    Macro {
        rho: Vec<f64>,
        field: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub model: ModelChoice,
    pub scheme: Scheme,
    pub mesh: Mesh1D,
    pub quad: Quadrature,
    pub dt: f64,
    pub n_steps: usize,
    /// `(t^{n+1}, r^n)` per step.
    pub residues: Vec<(f64, f64)>,
    /// `max|f^{n+1} - f^n|` per step.
    pub drifts: Vec<f64>,
    pub final_state: FinalState,
    /// Final flux per cell: `J` for kinetic runs, the diffusive flux of the
    /// limit equation for limit runs.
    pub flux: Vec<f64>,
}

impl RunResult {
    /// Density written to `snapshot.csv`: the velocity average for neutrons
    /// and chemotaxis, `ρ = Σ ω I` (or `ψ = a c T⁴` in the limit) for radiation.
    pub fn density(&self) -> Vec<f64> {
        match &self.final_state {
            FinalState::Kinetic(s) => match self.model {
                ModelChoice::Radiative => s.f.total_density(&self.quad),
                _ => s.f.mean_density(&self.quad),
            },
            FinalState::Macro { rho, .. } => rho.clone(),
        }
    }

    /// Kinetic unknown, or the isotropic state of the limit density.
    pub fn kinetic(&self) -> KineticState {
        match &self.final_state {
            FinalState::Kinetic(s) => s.f.clone(),
            FinalState::Macro { rho, .. } => {
                let scale = if self.model == ModelChoice::Radiative {
                    0.5
                } else {
                    1.0
                };
                let iso: Vec<f64> = rho.iter().map(|r| scale * r).collect();
                KineticState::isotropic(&iso, self.quad.len())
            }
        }
    }

    fn field_column(&self) -> Option<(&'static str, &[f64])> {
        let field = match &self.final_state {
            FinalState::Kinetic(s) => &s.field,
            FinalState::Macro { field, .. } => field,
        };
        let name = match (self.model, self.scheme) {
            (ModelChoice::Neutron, _) => return None,
            (ModelChoice::Chemotaxis, _) => "S",
            (ModelChoice::Radiative, Scheme::Limit) => "T",
            (ModelChoice::Radiative, _) => "psi",
        };
        Some((name, field))
    }
}

fn initial_kinetic(cfg: &RunConfig, mesh: &Mesh1D, quad: &Quadrature) -> KineticState {
    let mid = 0.5 * (cfg.x_min + cfg.x_max);
    let v = cfg.initial_value;
    KineticState::from_fn(mesh, quad, |x, mu| match cfg.initial {
        InitialData::Bumps => chemo_initial_f(x, mu),
        InitialData::Cosine => 1.0 + 0.5 * (std::f64::consts::PI * x).cos(),
        InitialData::Uniform => v,
        InitialData::Steady => mu.abs() * x,
        InitialData::Gaussian => v + (-100.0 * (x - mid).powi(2)).exp(),
    })
}

fn step_error(step: usize, time: f64) -> impl Fn(Error) -> Error {
    move |e| Error::Step {
        step,
        time,
        source: Box::new(e),
    }
}

fn time_grid(cfg: &RunConfig) -> (usize, f64) {
    let dt = cfg.time_step();
    let n_steps = ((cfg.final_time / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (n_steps, cfg.final_time / n_steps as f64)
}

/// Runs the configured simulation in memory.
pub fn simulate(cfg: &RunConfig) -> Result<RunResult> {
    match cfg.scheme {
        Scheme::Limit => simulate_limit(cfg),
        _ => simulate_kinetic(cfg),
    }
}

fn simulate_kinetic(cfg: &RunConfig) -> Result<RunResult> {
    let mesh = cfg.mesh()?;
    let quad = cfg.quadrature()?;
    let bc = cfg.boundary(&quad);
    let dom = Domain {
        quad: &quad,
        mesh: &mesh,
        bc: &bc,
    };
    let chemo = cfg.chemotaxis_params();
    let rad = cfg.radiative_params();
    let neutron = cfg.neutron_params();
    let model = match cfg.model {
        ModelChoice::Chemotaxis => Model::Chemotaxis {
            params: &chemo,
            chemical_bc: cfg.chemical_bc,
        },
        ModelChoice::Radiative => Model::Radiative {
            params: &rad,
            source: cfg.source,
        },
        ModelChoice::Neutron => Model::Neutron(&neutron),
    };
    let f0 = initial_kinetic(cfg, &mesh, &quad);
    let field = match cfg.model {
        ModelChoice::Chemotaxis => {
            steady_chemical_field(&f0.mean_density(&quad), &chemo, &mesh, &cfg.chemical_bc)?
        }
        ModelChoice::Radiative => f0.total_density(&quad),
        ModelChoice::Neutron => Vec::new(),
    };
    let mut state = SolverState { f: f0, field };

    let (n_steps, dt) = time_grid(cfg);
    let params = WBAPParams::new(cfg.eps, dt)?.with_repeat(cfg.repeat_steady_step);
    let mut stepper = WbapStepper::new(dom, model, params)?;
    let mut residues = Vec::with_capacity(n_steps);
    let mut drifts = Vec::with_capacity(n_steps);
    for step in 0..n_steps {
        let time = step as f64 * dt;
        let next = match cfg.scheme {
            Scheme::PredictOnly => predict_only_step(&state, &dom, &model, dt),
            _ => stepper.step(&state),
        }
        .map_err(step_error(step, time))?;
        residues.push((
            (step + 1) as f64 * dt,
            residue_norm(&next.f, &state.f, &quad, &mesh),
        ));
        drifts.push(next.f.max_abs_diff(&state.f));
        state = next;
    }
    let flux = macro_flux_j(&state.f, &quad);
    Ok(RunResult {
        model: cfg.model,
        scheme: cfg.scheme,
        mesh,
        quad,
        dt,
        n_steps,
        residues,
        drifts,
        final_state: FinalState::Kinetic(state),
        flux,
    })
}

/// Boundary of the diffused quantity matching a kinetic wall.
fn macro_wall(
    w: WallSpec,
    model: ModelChoice,
    p: &RadiativeParams,
    quad: &Quadrature,
) -> MacroBoundary {
    // Anisotropic data enters the limit through the boundary layer.
    let v = match w {
        WallSpec::Specular => return MacroBoundary::NoFlux,
        WallSpec::Inflow(v) => v,
        WallSpec::InflowAbsMu(v) => {
            let pos = quad.positive().map(|j| 2.0 * quad.mu[j] * v);
            quad.milne_weights()
                .iter()
                .zip(pos)
                .map(|(w, g)| w * g)
                .sum()
        }
    };
    // Isotropic inflow `v` is the equilibrium `ψ/2 = v`.
    match model {
        ModelChoice::Radiative => MacroBoundary::Dirichlet(p.temperature(2.0 * v)),
        _ => MacroBoundary::Dirichlet(v),
    }
}

/// Cell averages of edge fluxes.
fn cell_flux(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Edge values of `-k ∂_x u`, with the walls given by `bc`.
fn diffusive_edge_flux(u: &[f64], k: f64, dx: f64, bc: (MacroBoundary, MacroBoundary)) -> Vec<f64> {
    let n = u.len();
    let mut flux = vec![0.0; n + 1];
    for j in 1..n {
        flux[j] = -k * (u[j] - u[j - 1]) / dx;
    }
    if let MacroBoundary::Dirichlet(v) = bc.0 {
        flux[0] = -2.0 * k * (u[0] - v) / dx;
    }
    if let MacroBoundary::Dirichlet(v) = bc.1 {
        flux[n] = -2.0 * k * (v - u[n - 1]) / dx;
    }
    flux
}

fn simulate_limit(cfg: &RunConfig) -> Result<RunResult> {
    let mesh = cfg.mesh()?;
    let quad = cfg.quadrature()?;
    let f0 = initial_kinetic(cfg, &mesh, &quad);
    let (n_steps, dt) = time_grid(cfg);
    let rad = cfg.radiative_params();
    let bc = (
        macro_wall(cfg.left, cfg.model, &rad, &quad),
        macro_wall(cfg.right, cfg.model, &rad, &quad),
    );
    let mut residues = Vec::with_capacity(n_steps);
    let mut drifts = Vec::with_capacity(n_steps);
    let mut record = |step: usize, old: &[f64], new: &[f64]| {
        let s: f64 = old.iter().zip(new).map(|(a, b)| (a - b).powi(2)).sum();
        residues.push((
            (step + 1) as f64 * dt,
            VELOCITY_MEASURE * (mesh.dx * s).sqrt(),
        ));
        drifts.push(
            old.iter()
                .zip(new)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    };

    let (rho, field, flux) = match cfg.model {
        ModelChoice::Chemotaxis => {
            if cfg.left != WallSpec::Specular || cfg.right != WallSpec::Specular {
                return Err(config_error(
                    None,
                    "the Keller-Segel solver has no-flux walls only",
                ));
            }
            let p = cfg.chemotaxis_params();
            let mut rho = f0.mean_density(&quad);
            let mut s = steady_chemical_field(&rho, &p, &mesh, &cfg.chemical_bc)?;
            for step in 0..n_steps {
                let (r, s_new) =
                    keller_segel_step(&rho, &s, dt, &p, &quad, &mesh, &cfg.chemical_bc)
                        .map_err(step_error(step, step as f64 * dt))?;
                record(step, &rho, &r);
                rho = r;
                s = s_new;
            }
            let grad = interface_grad_s(&s, &mesh);
            let mut edges = vec![0.0; rho.len() + 1];
            for j in 1..rho.len() {
                edges[j] = keller_segel_flux(rho[j - 1], rho[j], grad[j], &p, &quad, mesh.dx);
            }
            let flux = cell_flux(&edges);
            (rho, s, flux)
        }
        ModelChoice::Neutron => {
            let p = cfg.neutron_params();
            let mut rho = f0.mean_density(&quad);
            for step in 0..n_steps {
                let r = neutron_diffusion_step(&rho, dt, &p, &mesh, bc)
                    .map_err(step_error(step, step as f64 * dt))?;
                record(step, &rho, &r);
                rho = r;
            }
            let flux = cell_flux(&diffusive_edge_flux(
                &rho,
                1.0 / (3.0 * p.sigma_t),
                mesh.dx,
                bc,
            ));
            (rho, Vec::new(), flux)
        }
        ModelChoice::Radiative => {
            let q: Vec<f64> = mesh
                .centers()
                .iter()
                .map(|&x| VELOCITY_MEASURE * cfg.source.angular_mean(x))
                .collect();
            let mut temp: Vec<f64> = f0
                .total_density(&quad)
                .iter()
                .map(|&psi| rad.temperature(psi))
                .collect();
            let energy =
                |t: &[f64]| -> Vec<f64> { t.iter().map(|v| rad.a * rad.c * v.powi(4)).collect() };
            for step in 0..n_steps {
                let t_new = nonlinear_diffusion_step(&temp, dt, &rad, &q, &mesh, bc)
                    .map_err(step_error(step, step as f64 * dt))?;
                record(step, &energy(&temp), &energy(&t_new));
                temp = t_new;
            }
            let psi = energy(&temp);
            let psi_bc = |b: MacroBoundary| match b {
                MacroBoundary::Dirichlet(t) => MacroBoundary::Dirichlet(rad.a * rad.c * t.powi(4)),
                other => other,
            };
            let flux = cell_flux(&diffusive_edge_flux(
                &psi,
                1.0 / (3.0 * rad.sigma),
                mesh.dx,
                (psi_bc(bc.0), psi_bc(bc.1)),
            ));
            (psi, temp, flux)
        }
    };
    Ok(RunResult {
        model: cfg.model,
        scheme: cfg.scheme,
        mesh,
        quad,
        dt,
        n_steps,
        residues,
        drifts,
        final_state: FinalState::Macro { rho, field },
        flux,
    })
}

/// `{:.16e}`: 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// `x,rho[,S|psi|T]` per cell.
pub fn snapshot_csv(run: &RunResult) -> String {
    let rho = run.density();
    let extra = run.field_column();
    let mut out = String::from("x,rho");
    if let Some((name, _)) = extra {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, x) in run.mesh.centers().into_iter().enumerate() {
        let _ = write!(out, "{},{}", num(x), num(rho[i]));
        if let Some((_, field)) = extra {
            let _ = write!(out, ",{}", num(field[i]));
        }
        out.push('\n');
    }
    out
}

/// `x,mu,f` per cell and ordinate.
pub fn f_snapshot_csv(run: &RunResult) -> String {
    let f = run.kinetic();
    let mut out = String::from("x,mu,f\n");
    for (i, x) in run.mesh.centers().into_iter().enumerate() {
        for (m, mu) in run.quad.mu.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", num(x), num(*mu), num(f.get(i, m)));
        }
    }
    out
}

/// `t,r` per step.
pub fn residue_csv(run: &RunResult) -> String {
    let mut out = String::from("t,r\n");
    for (t, r) in &run.residues {
        let _ = writeln!(out, "{},{}", num(*t), num(*r));
    }
    out
}

/// `x,J` per cell.
pub fn flux_csv(run: &RunResult) -> String {
    let mut out = String::from("x,J\n");
    for (x, j) in run.mesh.centers().into_iter().zip(&run.flux) {
        let _ = writeln!(out, "{},{}", num(x), num(*j));
    }
    out
}

/// Writes the snapshot, residue and flux tables (and `f_snapshot.csv` when
/// `write_f` is set) to `dir`.
pub fn write_run(run: &RunResult, dir: &Path, write_f: bool) -> Result<()> {
    write_file(dir, "snapshot.csv", &snapshot_csv(run))?;
    if write_f {
        write_file(dir, "f_snapshot.csv", &f_snapshot_csv(run))?;
    }
    write_file(dir, "residue.csv", &residue_csv(run))?;
    write_file(dir, "flux.csv", &flux_csv(run))
}

/// Runs the simulation and writes its tables to `cfg.output`.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunResult> {
    let run = simulate(cfg)?;
    write_run(&run, &cfg.output, cfg.write_f)?;
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub control: f64,
    pub error: f64,
    /// Order from this row and the previous one; `None` on the first row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub model: ModelChoice,
    pub scheme: Scheme,
    /// Control variable and error norm.
    pub norm: String,
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `log error` against `log control`; `None` with
    /// fewer than two rows.
    pub slope: Option<f64>,
}

impl StudyReport {
    fn new(cfg: &RunConfig, norm: &str, points: Vec<(f64, f64)>) -> Self {
        let rows = points
            .iter()
            .enumerate()
            .map(|(k, &(control, error))| StudyRow {
                control,
                error,
                order: (k > 0).then(|| {
                    let (c0, e0) = points[k - 1];
                    (e0 / error).ln() / (c0 / control).ln()
                }),
            })
            .collect();
        Self {
            model: cfg.model,
            scheme: cfg.scheme,
            norm: norm.to_string(),
            rows,
            slope: fit_slope(&points),
        }
    }

    /// `control,error,order`; an undefined order is written as `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("control,error,order\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{}",
                num(r.control),
                num(r.error),
                num(r.order.unwrap_or(f64::NAN))
            );
        }
        out
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Averages pairs of fine cells onto the coarse mesh.
pub fn restrict_two_cell(fine: &KineticState) -> Result<KineticState> {
    let n = fine.n_cells();
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "cannot restrict {n} cells by pairs"
        )));
    }
    let n_ord = fine.n_ord();
    let data = (0..n / 2)
        .flat_map(|i| (0..n_ord).map(move |m| 0.5 * (fine.get(2 * i, m) + fine.get(2 * i + 1, m))))
        .collect();
    KineticState::from_vec(n / 2, n_ord, data)
}

/// `max_i Σ_m ω_m |a - b|`.
pub fn max_l1_difference(a: &KineticState, b: &KineticState, quad: &Quadrature) -> f64 {
    (0..a.n_cells())
        .map(|i| {
            (0..quad.len())
                .map(|m| quad.weights[m] * (a.get(i, m) - b.get(i, m)).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// `(Σ_i Δx Σ_m ω_m (f - ρ)²)^{1/2}` with `ρ` the velocity average of `f`.
pub fn anisotropy_norm(f: &KineticState, quad: &Quadrature, mesh: &Mesh1D) -> f64 {
    let rho = f.mean_density(quad);
    let mut acc = 0.0;
    for (i, r) in rho.iter().enumerate() {
        for m in 0..quad.len() {
            acc += mesh.dx * quad.weights[m] * (f.get(i, m) - r).powi(2);
        }
    }
    acc.sqrt()
}

fn eps_values(cfg: &RunConfig) -> Vec<f64> {
    if cfg.study_eps.is_empty() {
        vec![cfg.eps]
    } else {
        cfg.study_eps.clone()
    }
}

/// Mesh refinement study: one report per `eps` of `study_eps` (or the
/// configured `eps`), with `control = Δx` of the finer mesh of each pair.
pub fn convergence_study_dx(cfg: &RunConfig) -> Result<Vec<(f64, StudyReport)>> {
    if cfg.study_n_cells.len() < 2 {
        return Err(config_error(
            None,
            "study-dx needs at least two entries in `study_n_cells`",
        ));
    }
    for pair in cfg.study_n_cells.windows(2) {
        if pair[1] != 2 * pair[0] {
            return Err(Error::InvalidArgument(format!(
                "meshes must be nested halvings, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    let mut reports = Vec::new();
    for eps in eps_values(cfg) {
        let mut previous: Option<RunResult> = None;
        let mut points = Vec::new();
        for &n in &cfg.study_n_cells {
            let run = simulate(&cfg.with_eps(eps).with_n_cells(n))?;
            if let Some(coarse) = &previous {
                let restricted = restrict_two_cell(&run.kinetic())?;
                points.push((
                    run.mesh.dx,
                    max_l1_difference(&restricted, &coarse.kinetic(), &run.quad),
                ));
            }
            previous = Some(run);
        }
        reports.push((
            eps,
            StudyReport::new(cfg, "dx vs max_x sum_m w_m |f_dx - f_2dx|", points),
        ));
    }
    Ok(reports)
}

/// Result of the model convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsStudy {
    /// `‖f^ε - ρ^ε‖_2` against `ε`.
    pub anisotropy: StudyReport,
    /// `max_x |ρ^ε - ρ⁰|` against `ε`.
    pub limit_distance: StudyReport,
    pub runs: Vec<(f64, RunResult)>,
    pub limit: RunResult,
}

/// Runs every `eps` of `study_eps` and the limit solver to the common final
/// time.
pub fn convergence_study_eps(cfg: &RunConfig) -> Result<EpsStudy> {
    if cfg.scheme == Scheme::Limit {
        return Err(config_error(None, "study-eps needs a kinetic scheme"));
    }
    if cfg.study_eps.is_empty() {
        return Err(config_error(None, "study-eps needs `study_eps`"));
    }
    let limit = simulate(&cfg.with_scheme(Scheme::Limit).with_eps(0.0))?;
    let rho0 = limit.density();
    let mut runs = Vec::new();
    let mut aniso = Vec::new();
    let mut distance = Vec::new();
    for &eps in &cfg.study_eps {
        let run = simulate(&cfg.with_eps(eps))?;
        aniso.push((eps, anisotropy_norm(&run.kinetic(), &run.quad, &run.mesh)));
        let d = run
            .density()
            .iter()
            .zip(&rho0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        distance.push((eps, d));
        runs.push((eps, run));
    }
    Ok(EpsStudy {
        anisotropy: StudyReport::new(cfg, "eps vs (sum dx w_m (f - rho)^2)^(1/2)", aniso),
        limit_distance: StudyReport::new(cfg, "eps vs max_x |rho_eps - rho_0|", distance),
        runs,
        limit,
    })
}

/// One checked quantity of `steady-check`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: Option<f64>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.tolerance.is_none_or(|t| self.value <= t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyReport {
    pub run: RunResult,
    /// `max_n max|f^{n+1} - f^n| / (Δx Δt)`, then `max|J|` at the final time,
    /// then `max|ρ - x|` for the radiative source.
    pub checks: Vec<Check>,
}

impl SteadyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Runs the configuration and measures the per-step drift and the final flux.
pub fn steady_check(cfg: &RunConfig) -> Result<SteadyReport> {
    let run = simulate(cfg)?;
    let drift = run.drifts.iter().copied().fold(0.0, f64::max) / (run.mesh.dx * run.dt);
    let flux = run.flux.iter().map(|j| j.abs()).fold(0.0, f64::max);
    let mut checks = vec![
        Check {
            name: "drift_constant",
            value: drift,
            tolerance: cfg.tolerances.drift_constant,
        },
        Check {
            name: "max_flux",
            value: flux,
            tolerance: cfg.tolerances.max_flux,
        },
    ];
    if cfg.model == ModelChoice::Radiative && matches!(cfg.source, Source::AbsLinear { .. }) {
        let err = run
            .density()
            .iter()
            .zip(run.mesh.centers())
            .map(|(r, x)| (r - x).abs())
            .fold(0.0, f64::max);
        checks.push(Check {
            name: "max_steady_error",
            value: err,
            tolerance: cfg.tolerances.max_steady_error,
        });
    }
    Ok(SteadyReport { run, checks })
}
