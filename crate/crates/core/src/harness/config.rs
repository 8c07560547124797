//! JSON run configuration shared by the sweep and the command-line tool.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Eps, EpsMeshStyle, EtaProfile, ProfileFamily};
use crate::operator::{Alpha, OperatorFamily, OperatorSpec};
use crate::scalar::{Point, Real};
use crate::solver::SolverOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub family: ProfileFamily,
    pub params: Vec<f64>,
    #[serde(default = "default_y_samples")]
    pub y_samples: usize,
    #[serde(default)]
    pub lipschitz_bound: Option<f64>,
}

fn default_y_samples() -> usize {
    256
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaKind {
    Constant,
    Affine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaConfig {
    pub kind: AlphaKind,
    /// The constant, or the base of the affine coefficient.
    pub value: f64,
    #[serde(default)]
    pub slope_x1: f64,
    #[serde(default)]
    pub slope_x2: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig { kind: AlphaKind::Constant, value: 1.0, slope_x1: 0.0, slope_x2: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub family: OperatorFamily,
    #[serde(default)]
    pub alpha: AlphaConfig,
    #[serde(default)]
    pub matrix: Option<[[f64; 2]; 2]>,
    #[serde(default)]
    pub k_const: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// `f = c`; params `[c]` (default `c = 1`).
    Constant,
    /// `f = 0`.
    Zero,
    /// `f = a (pi^2 / 4) sin(pi x2 / 2)`; params `[a]` (default `a = 1`).
    SineX2,
    /// `f = 1 + 1 / (2 - x2)^2`, the source for which `x2 - x2^2/2` solves the
    /// regularized radial problem on the unit square.
    NonlinearMms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: SourceKind,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl SourceConfig {
    pub fn eval<T: Real>(&self, x: Point<T>) -> T {
        let a = T::lit(self.params.first().copied().unwrap_or(1.0));
        match self.id {
            SourceKind::Constant => a,
            SourceKind::Zero => T::zero(),
            SourceKind::SineX2 => a * T::PI() * T::PI() / T::lit(4.0) * (T::FRAC_PI_2() * x[1]).sin(),
            SourceKind::NonlinearMms => {
                let s = T::lit(2.0) - x[1];
                T::one() + T::one() / (s * s)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub style: EpsMeshStyle,
    pub cells_per_period: usize,
    pub ny: usize,
    /// Level meshes only: interface spacing `eps / interface_levels_per_eps` (0 keeps uniform levels).
    pub interface_levels_per_eps: usize,
    pub limit_nx: usize,
    pub limit_ny_minus: usize,
    pub limit_ny_plus: usize,
    /// With finger meshes, take the limit row counts from the finger levels instead.
    pub match_limit_levels: bool,
    /// Evaluate the density of the limit problem on the P1 interpolant of the
    /// profile at `cells_per_period` nodes, the top actually resolved by the `eps`-meshes.
    pub density_from_mesh_top: bool,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            style: EpsMeshStyle::Auto,
            cells_per_period: 16,
            ny: 64,
            interface_levels_per_eps: 8,
            limit_nx: 32,
            limit_ny_minus: 32,
            limit_ny_plus: 32,
            match_limit_levels: true,
            density_from_mesh_top: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub newton_rtol: f64,
    pub max_newton_iters: usize,
    pub cg_rtol: f64,
    /// Largest accepted per-halving ratio of the weak errors.
    pub ratio: f64,
    /// Same for the oscillatory horizontal flux.
    pub flux1_ratio: f64,
    /// Largest accepted relative drift of the a-priori norms.
    pub bound_variation: f64,
    /// Smallest accepted log-log slope of the integral-identity gap.
    pub lemma_slope: f64,
    /// Largest accepted gap when `eta` does not depend on `x1` and the identity is exact.
    pub lemma_exact_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            newton_rtol: 1e-10,
            max_newton_iters: 100,
            cg_rtol: 1e-12,
            ratio: 0.8,
            flux1_ratio: 0.9,
            bound_variation: 0.2,
            lemma_slope: 0.4,
            lemma_exact_gap: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnfoldConfig {
    pub n1: usize,
    pub n2: usize,
    pub ny: usize,
}

impl Default for UnfoldConfig {
    fn default() -> Self {
        let (n1, n2, ny) = crate::unfolding::DEFAULT_LATTICE;
        UnfoldConfig { n1, n2, ny }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub nx: usize,
    pub ny: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { nx: 32, ny: 32 }
    }
}

/// Complete run description. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileConfig,
    pub operator: OperatorConfig,
    pub source: SourceConfig,
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub unfold: UnfoldConfig,
    #[serde(default = "default_bank")]
    pub test_bank_size: usize,
    #[serde(default = "default_hypothesis_samples")]
    pub hypothesis_samples: usize,
    /// Declared bound on `|grad u_eps|_{L2}` across the sweep.
    #[serde(default = "default_grad_bound")]
    pub grad_bound: f64,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// The sweep reads the same document.
pub type SweepConfig = RunConfig;

fn default_bank() -> usize {
    12
}

fn default_hypothesis_samples() -> usize {
    10_000
}

fn default_grad_bound() -> f64 {
    10.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Parses and validates; parse errors carry the JSON path of the offending key.
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json_str(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.profile::<f64>()?;
        self.operator::<f64>()?;
        self.eps()?;
        let need = match self.source.id {
            SourceKind::Zero | SourceKind::NonlinearMms => 0,
            SourceKind::Constant | SourceKind::SineX2 => 1,
        };
        if self.source.params.len() > need {
            return Err(invalid("source.params", format!("expected at most {need} values")));
        }
        if self.source.params.iter().any(|v| !v.is_finite()) {
            return Err(invalid("source.params", "non-finite value"));
        }
        let m = &self.mesh;
        if m.cells_per_period < 8 || m.ny < 4 || m.limit_nx == 0 || m.limit_ny_minus < 4 || m.limit_ny_plus < 4 {
            return Err(invalid(
                "mesh",
                "need cells_per_period >= 8, ny >= 4, limit_nx >= 1, limit_ny_minus >= 4, limit_ny_plus >= 4",
            ));
        }
        if !(1..=super::bank::MAX_BANK).contains(&self.test_bank_size) {
            return Err(invalid("test_bank_size", format!("must lie in 1..={}", super::bank::MAX_BANK)));
        }
        if self.hypothesis_samples < 10_000 {
            return Err(invalid("hypothesis_samples", "must be at least 10000"));
        }
        if !(self.grad_bound > 0.0) {
            return Err(invalid("grad_bound", "must be positive"));
        }
        let t = &self.tolerances;
        if !(t.newton_rtol > 0.0 && t.cg_rtol > 0.0 && t.max_newton_iters > 0) {
            return Err(invalid("tolerances", "solver tolerances must be positive"));
        }
        if self.unfold.n1 == 0 || self.unfold.n2 == 0 || self.unfold.ny == 0 {
            return Err(invalid("unfold", "lattice sizes must be positive"));
        }
        if self.density.nx == 0 || self.density.ny == 0 {
            return Err(invalid("density", "lattice sizes must be positive"));
        }
        Ok(())
    }

    pub fn profile<T: Real>(&self) -> Result<EtaProfile<T>, ConfigError> {
        let p = &self.profile;
        EtaProfile::new(
            p.family,
            p.params.iter().map(|v| T::lit(*v)).collect(),
            p.y_samples,
            p.lipschitz_bound.map(T::lit),
        )
        .map_err(|e| invalid("profile", e.to_string()))
    }

    pub fn operator<T: Real>(&self) -> Result<OperatorSpec<T>, ConfigError> {
        let o = &self.operator;
        let a = &o.alpha;
        let alpha = match a.kind {
            AlphaKind::Constant => Alpha::Constant(T::lit(a.value)),
            AlphaKind::Affine => {
                Alpha::Affine { base: T::lit(a.value), slope_x1: T::lit(a.slope_x1), slope_x2: T::lit(a.slope_x2) }
            }
        };
        let matrix = o.matrix.map(|m| m.map(|r| r.map(T::lit)));
        if o.family != OperatorFamily::LinearMatrix && matrix.is_some() {
            return Err(invalid("operator.matrix", "only linear_matrix takes a matrix"));
        }
        OperatorSpec::new(o.family, matrix, alpha, T::lit(o.k_const)).map_err(|e| invalid("operator", e.to_string()))
    }

    /// `eps_list` as exact reciprocals, checked strictly decreasing.
    pub fn eps(&self) -> Result<Vec<Eps>, ConfigError> {
        if self.eps_list.is_empty() {
            return Err(invalid("eps_list", "must not be empty"));
        }
        let eps = self
            .eps_list
            .iter()
            .map(|e| Eps::from_value(*e).map_err(|err| invalid("eps_list", err.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if eps.windows(2).any(|w| w[1].k() <= w[0].k()) {
            return Err(invalid("eps_list", "must be strictly decreasing"));
        }
        Ok(eps)
    }

    pub fn solver_options<T: Real>(&self) -> SolverOptions<T> {
        let t = &self.tolerances;
        let d = SolverOptions::<T>::default();
        SolverOptions {
            rtol: T::lit(t.newton_rtol).max(d.rtol),
            max_iters: t.max_newton_iters,
            cg_rtol: T::lit(t.cg_rtol).max(d.cg_rtol),
            ..d
        }
    }
}
