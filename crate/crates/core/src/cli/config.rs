//! JSON run configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::complex::GridSpec;
use crate::estimator::MajorantVariant;
use crate::problem::MaterialField;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub materials: MaterialsConfig,
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approximation: Option<ApproxConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub outputs: OutputsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
    /// Master seed for random initial guesses and random fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// JSON array of 0/1 or booleans per box cell, x fastest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<PathBuf>,
    /// Boxes of removed cells, half-open cell index ranges.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cavities: Vec<CavityConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialsConfig {
    Constant { eps: [f64; 3], mu: [f64; 3] },
    /// JSON `{"eps": [[..]..], "mu": [[..]..]}` with one row per active cell.
    File(PathBuf),
}

impl Default for MaterialsConfig {
    fn default() -> Self {
        MaterialsConfig::Constant {
            eps: [1.0; 3],
            mu: [1.0; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Manufactured(String),
    Fields(FieldFiles),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFiles {
    /// Edge load F.
    pub f: PathBuf,
    /// Edge carrier Ǧ of the boundary data; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ApproxConfig {
    /// Inexact primal solve at this relative tolerance. With a seed the
    /// iteration starts from a random field.
    SolveTol(f64),
    Field(PathBuf),
    Perturbation(PerturbationConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub seed: u64,
    /// Size of the perturbation relative to `‖E_h‖_{M1}`.
    pub amplitude: f64,
    #[serde(rename = "type")]
    pub kind: PerturbationKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbationKind {
    #[serde(rename = "tangential-zero")]
    TangentialZero,
    #[serde(rename = "gradient")]
    Gradient,
    #[serde(rename = "harmonic")]
    Harmonic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative tolerance of the reference solve.
    #[serde(default = "default_solver_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_solver_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    20_000
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: default_solver_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantChoice {
    /// FULL when the traces differ, EXACT_TRACE otherwise.
    Auto,
    Conforming,
    Full,
    ExactTrace,
}

impl VariantChoice {
    pub fn fixed(self) -> Option<MajorantVariant> {
        match self {
            VariantChoice::Auto => None,
            VariantChoice::Conforming => Some(MajorantVariant::Conforming),
            VariantChoice::Full => Some(MajorantVariant::Full),
            VariantChoice::ExactTrace => Some(MajorantVariant::ExactTrace),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_variant")]
    pub variant: VariantChoice,
    #[serde(default = "default_outer")]
    pub outer_iters: usize,
    #[serde(default = "default_estimator_tol")]
    pub tol: f64,
    #[serde(default = "default_inflation")]
    pub c_p_inflation: f64,
}

fn default_variant() -> VariantChoice {
    VariantChoice::Auto
}

fn default_outer() -> usize {
    100
}

fn default_estimator_tol() -> f64 {
    1e-10
}

fn default_inflation() -> f64 {
    1.0
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            variant: default_variant(),
            outer_iters: default_outer(),
            tol: default_estimator_tol(),
            c_p_inflation: default_inflation(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub report: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Cells per axis of each refinement level.
    pub sizes: Vec<usize>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(format!("{what} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Parses a config file and resolves relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = &mut self.grid.mask_file {
            fix(m);
        }
        if let MaterialsConfig::File(p) = &mut self.materials {
            fix(p);
        }
        if let ProblemConfig::Fields(f) = &mut self.problem {
            fix(&mut f.f);
            if let Some(g) = &mut f.g {
                fix(g);
            }
        }
        if let Some(ApproxConfig::Field(p)) = &mut self.approximation {
            fix(p);
        }
        fix(&mut self.outputs.report);
        if let Some(d) = &mut self.outputs.fields_dir {
            fix(d);
        }
        if let Some(c) = &mut self.outputs.csv {
            fix(c);
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (a, &s) in self.grid.spacing.iter().enumerate() {
            positive_finite(&format!("grid.spacing[{a}]"), s)?;
        }
        if let MaterialsConfig::Constant { eps, mu } = &self.materials {
            for v in eps.iter().chain(mu) {
                positive_finite("materials.constant entries", *v)?;
            }
        }
        match &self.approximation {
            Some(ApproxConfig::SolveTol(t)) => positive_finite("approximation.solve_tol", *t)?,
            Some(ApproxConfig::Perturbation(p)) => {
                if !p.amplitude.is_finite() {
                    return Err(config_err("approximation.perturbation.amplitude must be finite"));
                }
            }
            _ => {}
        }
        positive_finite("solver.tol", self.solver.tol)?;
        positive_finite("estimator.tol", self.estimator.tol)?;
        if self.estimator.outer_iters == 0 {
            return Err(config_err("estimator.outer_iters must be at least 1"));
        }
        let f = self.estimator.c_p_inflation;
        if !(f.is_finite() && f >= 1.0) {
            return Err(config_err(format!("estimator.c_p_inflation must be a finite factor >= 1, got {f}")));
        }
        Ok(())
    }

    /// Replaces every seed in the config by `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let Some(ApproxConfig::Perturbation(p)) = &mut self.approximation {
            p.seed = seed;
        }
    }

    /// Grid of the configured dimensions with cavities and mask applied.
    pub fn grid_spec(&self) -> Result<GridSpec> {
        let mut spec = GridSpec::new(self.grid.dims, self.grid.spacing);
        for c in &self.grid.cavities {
            for a in 0..3 {
                if c.lo[a] >= c.hi[a] || c.hi[a] > self.grid.dims[a] {
                    return Err(config_err(format!(
                        "cavity {:?}..{:?} is empty or outside the grid",
                        c.lo, c.hi
                    )));
                }
            }
            spec = spec.with_cavity(c.lo, c.hi);
        }
        if let Some(path) = &self.grid.mask_file {
            let mask = read_mask(path, spec.cell_count_box())?;
            let merged = match &spec.active {
                Some(cur) => cur.iter().zip(&mask).map(|(a, b)| *a && *b).collect(),
                None => mask,
            };
            spec = spec.with_mask(merged);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn materials(&self, n_cells: usize) -> Result<MaterialField> {
        let m = match &self.materials {
            MaterialsConfig::Constant { eps, mu } => MaterialField::constant(n_cells, *eps, *mu),
            MaterialsConfig::File(path) => {
                let text = read_text(path)?;
                serde_json::from_str::<MaterialField>(&text)
                    .map_err(|e| config_err(format!("materials file {}: {e}", path.display())))?
            }
        };
        m.validate(n_cells)?;
        Ok(m)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_mask(path: &Path, expected: usize) -> Result<Vec<bool>> {
    let text = read_text(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| config_err(format!("mask file {}: {e}", path.display())))?;
    let items = value
        .as_array()
        .ok_or_else(|| config_err(format!("mask file {}: expected a JSON array", path.display())))?;
    if items.len() != expected {
        return Err(config_err(format!(
            "mask file {}: expected {expected} entries, found {}",
            path.display(),
            items.len()
        )));
    }
    items
        .iter()
        .map(|v| match v {
            serde_json::Value::Bool(b) => Ok(*b),
            serde_json::Value::Number(n) if n.as_u64() == Some(0) => Ok(false),
            serde_json::Value::Number(n) if n.as_u64() == Some(1) => Ok(true),
            other => Err(config_err(format!("mask file {}: invalid entry {other}", path.display()))),
        })
        .collect()
}
