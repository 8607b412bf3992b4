//! Scenario files: a TOML description of kernel, memory scheme, operator,
//! solver, optional noise and output, with strict parsing.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{load_tabulated, make_kernel, Family, KernelSpec};
use crate::memory::Backend;
use crate::operators::{
    constant, fast_diffusion_operator, linear_reaction, p_laplace_operator, porous_medium_operator, scalar_operator, OperatorModel,
    SpatialGrid, DEFAULT_EPS_REG,
};
use crate::solver::{FixedPointOptions, ForcingFn, NewtonOptions, SolveConfig, Strategy};
use crate::stochastic::{constant_diffusion, modal_diffusion, DiffusionFn, EnsembleOptions, NoiseModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kernel: Family,
    /// Kernel `k₂` of the noise term; defaults to `kernel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_kernel: Option<Family>,
    pub memory: MemorySection,
    pub operator: OperatorSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub forcing: ForcingSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySection {
    #[serde(default = "default_backend")]
    pub backend: Backend,
    pub tau: f64,
    pub n: usize,
}

fn default_backend() -> Backend {
    Backend::CqBackwardEuler
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub length: f64,
}

fn one() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    DEFAULT_EPS_REG
}

fn scalar_dim() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSection {
    /// `A(u) = a u + b u³` componentwise.
    Scalar {
        #[serde(default = "scalar_dim")]
        dim: usize,
        a: f64,
        #[serde(default)]
        b: f64,
    },
    PorousMedium {
        r: f64,
        #[serde(default = "one")]
        psi_scale: f64,
        #[serde(default)]
        phi_scale: f64,
        #[serde(default = "one")]
        alpha_frac: f64,
        grid: GridSection,
    },
    FastDiffusion {
        r: f64,
        #[serde(default = "one")]
        psi_scale: f64,
        #[serde(default = "default_eps")]
        eps_reg: f64,
        #[serde(default = "one")]
        alpha_frac: f64,
        grid: GridSection,
    },
    PLaplace {
        p: f64,
        #[serde(default = "one")]
        scale: f64,
        /// Coefficient `c` of the reaction `c·u`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reaction: Option<f64>,
        #[serde(default = "default_eps")]
        eps_reg: f64,
        grid: GridSection,
    },
}

impl OperatorSection {
    fn grid(&self) -> Option<&GridSection> {
        match self {
            OperatorSection::Scalar { .. } => None,
            OperatorSection::PorousMedium { grid, .. } | OperatorSection::FastDiffusion { grid, .. } | OperatorSection::PLaplace { grid, .. } => {
                Some(grid)
            }
        }
    }
}

/// Initial state `u₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    Constant { value: f64 },
    /// `amplitude · Π sin(mode·π x_i / L)` on grid operators.
    Sine {
        amplitude: f64,
        #[serde(default = "mode_one")]
        mode: usize,
    },
    Values { values: Vec<f64> },
}

fn mode_one() -> usize {
    1
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection::Constant { value: 0.0 }
    }
}

/// Time-independent forcing `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSection {
    Zero,
    Constant { value: f64 },
    Values { values: Vec<f64> },
}

impl Default for ForcingSection {
    fn default() -> Self {
        ForcingSection::Zero
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub strategy: Strategy,
    pub newton: NewtonOptions,
    pub fixedpoint: FixedPointOptions,
}

/// Diffusion coefficient `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSection {
    /// `B = b·I` (`d_state × d_noise`).
    Constant { b: f64 },
    /// Noise along the first `d_noise` eigenvectors with amplitude `b·k^{-decay}`.
    Modal {
        b: f64,
        #[serde(default)]
        decay: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub diffusion: DiffusionSection,
    pub d_noise: usize,
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub keep_paths: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub stem: String,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), stem: "run".into(), formats: vec![OutputFormat::Csv, OutputFormat::Json] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    /// Cross-section checks: horizon, grid and noise dimensions, vector lengths.
    pub fn validate(&self) -> Result<()> {
        let m = &self.memory;
        if !(m.tau > 0.0 && m.tau.is_finite()) || m.n == 0 {
            return Err(cfg_err(format!("memory: need tau > 0 and n >= 1 so that tau*n > 0 (tau={}, n={})", m.tau, m.n)));
        }
        self.solve_config().validate()?;
        let d = self.state_dim()?;
        if let InitialSection::Values { values } = &self.initial {
            if values.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: values.len() });
            }
        }
        if let InitialSection::Sine { .. } = &self.initial {
            if self.operator.grid().is_none() {
                return Err(cfg_err("initial.kind = \"sine\" needs a grid operator"));
            }
        }
        if let ForcingSection::Values { values } = &self.forcing {
            if values.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: values.len() });
            }
        }
        if let Some(noise) = &self.noise {
            if noise.n_paths == 0 || noise.d_noise == 0 {
                return Err(cfg_err("noise: n_paths and d_noise must be positive"));
            }
            match noise.diffusion {
                DiffusionSection::Constant { .. } => {}
                DiffusionSection::Modal { .. } => {
                    if self.operator.grid().is_none() {
                        return Err(cfg_err("noise.diffusion.kind = \"modal\" needs a grid operator"));
                    }
                }
            }
            if noise.d_noise > d {
                return Err(Error::DimensionMismatch { expected: d, got: noise.d_noise });
            }
        }
        Ok(())
    }

    /// Number of unknowns of the operator.
    pub fn state_dim(&self) -> Result<usize> {
        Ok(match &self.operator {
            OperatorSection::Scalar { dim, .. } => *dim,
            _ => self.spatial_grid()?.expect("grid operator").size(),
        })
    }

    fn spatial_grid(&self) -> Result<Option<SpatialGrid>> {
        self.operator.grid().map(|g| SpatialGrid::new(g.dim, g.n, g.length)).transpose()
    }

    fn build_family(family: &Family, base: &Path) -> Result<KernelSpec> {
        match family {
            Family::Custom { file: Some(f) } => load_tabulated(&base.join(f)),
            Family::Custom { file: None } => Err(cfg_err("custom kernel needs `file`")),
            other => make_kernel(other),
        }
    }

    /// Kernel `k`; tabulated files are resolved relative to `base`.
    pub fn build_kernel(&self, base: &Path) -> Result<KernelSpec> {
        Self::build_family(&self.kernel, base)
    }

    /// Noise kernel `k₂`.
    pub fn build_noise_kernel(&self, base: &Path) -> Result<KernelSpec> {
        Self::build_family(self.noise_kernel.as_ref().unwrap_or(&self.kernel), base)
    }

    pub fn build_operator(&self) -> Result<OperatorModel> {
        let grid = self.spatial_grid()?;
        match &self.operator {
            OperatorSection::Scalar { dim, a, b } => scalar_operator(*dim, *a, *b),
            OperatorSection::PorousMedium { r, psi_scale, phi_scale, alpha_frac, .. } => {
                porous_medium_operator(grid.unwrap(), *r, constant(*psi_scale), constant(*phi_scale), *alpha_frac)
            }
            OperatorSection::FastDiffusion { r, psi_scale, eps_reg, alpha_frac, .. } => {
                fast_diffusion_operator(grid.unwrap(), *r, constant(*psi_scale), *eps_reg, *alpha_frac)
            }
            OperatorSection::PLaplace { p, scale, reaction, eps_reg, .. } => {
                p_laplace_operator(grid.unwrap(), *p, constant(*scale), reaction.map(linear_reaction), *eps_reg)
            }
        }
    }

    pub fn initial_state(&self) -> Result<Vec<f64>> {
        let d = self.state_dim()?;
        Ok(match &self.initial {
            InitialSection::Constant { value } => vec![*value; d],
            InitialSection::Values { values } => values.clone(),
            InitialSection::Sine { amplitude, mode } => {
                let grid = self.spatial_grid()?.ok_or_else(|| cfg_err("sine initial state needs a grid"))?;
                let w = *mode as f64 * std::f64::consts::PI / grid.length;
                grid.sample(|x| amplitude * x.iter().map(|xi| (w * xi).sin()).product::<f64>())
            }
        })
    }

    pub fn forcing(&self) -> Result<ForcingFn> {
        let d = self.state_dim()?;
        let v = match &self.forcing {
            ForcingSection::Zero => vec![0.0; d],
            ForcingSection::Constant { value } => vec![*value; d],
            ForcingSection::Values { values } => values.clone(),
        };
        Ok(Arc::new(move |_| v.clone()))
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            tau: self.memory.tau,
            n: self.memory.n,
            backend: self.memory.backend,
            strategy: self.solver.strategy,
            newton: self.solver.newton,
            fixedpoint: self.solver.fixedpoint,
        }
    }

    /// Noise model for `k₁ = kernel`, `k₂ = noise_kernel`; `seed` overrides the file.
    pub fn noise_model(&self, base: &Path, op: &OperatorModel, seed: Option<u64>) -> Result<Option<(NoiseModel, EnsembleOptions)>> {
        let Some(noise) = &self.noise else { return Ok(None) };
        let k1 = self.build_kernel(base)?;
        let k2 = self.build_noise_kernel(base)?;
        let d = op.dim();
        let diffusion: DiffusionFn = match noise.diffusion {
            DiffusionSection::Constant { b } => constant_diffusion(d, noise.d_noise, b),
            DiffusionSection::Modal { b, decay } => {
                let basis = op.basis().ok_or_else(|| cfg_err("modal noise needs an operator with an eigenbasis"))?;
                modal_diffusion(basis, noise.d_noise, b, decay)
            }
        };
        let model = NoiseModel::new(&k1, &k2, diffusion, d, noise.d_noise, seed.unwrap_or(noise.seed), self.memory.tau, self.memory.n.max(4))?;
        let mut opts = EnsembleOptions::new(noise.n_paths);
        opts.keep_paths = noise.keep_paths;
        Ok(Some((model, opts)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RELAX: &str = r#"
name = "relaxation"

[kernel]
family = "caputo"
beta = 0.5

[memory]
tau = 0.001953125
n = 512

[operator]
id = "scalar"
a = 1.0

[initial]
kind = "constant"
value = 1.0
"#;

    #[test]
    fn parses_minimal_relaxation() {
        let c = ScenarioConfig::from_toml_str(RELAX).unwrap();
        assert_eq!(c.kernel, Family::Caputo { beta: 0.5 });
        assert_eq!(c.memory.backend, Backend::CqBackwardEuler);
        assert_eq!(c.initial_state().unwrap(), vec![1.0]);
        assert_eq!(c.solve_config().horizon(), 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = RELAX.replace("beta = 0.5", "beta = 0.5\nbeat = 0.4");
        assert!(matches!(ScenarioConfig::from_toml_str(&typo), Err(Error::Config(_))));
        let typo = RELAX.replace("n = 512", "n = 512\nsteps = 3");
        assert!(ScenarioConfig::from_toml_str(&typo).is_err());
    }

    #[test]
    fn horizon_must_be_positive() {
        let bad = RELAX.replace("n = 512", "n = 0");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
        let bad = RELAX.replace("tau = 0.001953125", "tau = -1.0");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn noise_dimensions_are_checked() {
        let text = format!("{RELAX}\n[noise]\nd_noise = 2\nn_paths = 10\n[noise.diffusion]\nkind = \"constant\"\nb = 1.0\n");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(Error::DimensionMismatch { .. })));
        let text = format!("{RELAX}\n[noise]\nd_noise = 1\nn_paths = 10\n[noise.diffusion]\nkind = \"modal\"\nb = 1.0\n");
        assert!(ScenarioConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let mut c = ScenarioConfig::from_toml_str(RELAX).unwrap();
        c.noise_kernel = Some(Family::MultiTerm { terms: vec![[1.0, 0.3], [0.5, 0.7]] });
        c.solver.fixedpoint.gamma = Some(25.0);
        c.noise = Some(NoiseSection { diffusion: DiffusionSection::Constant { b: 0.1 + 0.2 }, d_noise: 1, n_paths: 7, seed: 42, keep_paths: true });
        let back = ScenarioConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn builds_grid_operator_and_sine_state() {
        let text = r#"
[kernel]
family = "classical"
[memory]
tau = 0.01
n = 10
[operator]
id = "porous_medium"
r = 2.0
[operator.grid]
dim = 2
n = 5
[initial]
kind = "sine"
amplitude = 2.0
"#;
        let c = ScenarioConfig::from_toml_str(text).unwrap();
        let op = c.build_operator().unwrap();
        assert_eq!(op.dim(), 25);
        let u0 = c.initial_state().unwrap();
        assert!((u0[12] - 2.0).abs() < 1e-12);
    }
}
