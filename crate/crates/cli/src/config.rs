//! Scenario configuration: one TOML file per experiment.

use std::path::{Path, PathBuf};

use bondloc_core::density::LaminateSearch;
use bondloc_core::materials::{catalog_potential, MicroPotential};
use bondloc_core::{Grid, Kernel, KernelSequence, Mat, Potential, Profile, SubdomainMask, VectorField};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Energy,
    Density,
    Sawtooth,
    Laminate,
    Rigidity,
    Minimize,
    Linearize,
    Localize,
    Checks,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Energy => "energy",
            Experiment::Density => "density",
            Experiment::Sawtooth => "sawtooth",
            Experiment::Laminate => "laminate",
            Experiment::Rigidity => "rigidity",
            Experiment::Minimize => "minimize",
            Experiment::Linearize => "linearize",
            Experiment::Localize => "localize",
            Experiment::Checks => "checks",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` overrides it.
    pub out: Option<PathBuf>,
    #[serde(default = "one")]
    pub m: f64,
    pub domain: Option<DomainBlock>,
    pub kernel: Option<KernelBlock>,
    pub potential: Option<Potential>,
    pub micro: Option<MicroBlock>,
    pub field: Option<FieldSpec>,
    pub energy: Option<EnergyBlock>,
    pub density: Option<DensityBlock>,
    pub sawtooth: Option<SawtoothBlock>,
    pub laminate: Option<LaminateBlock>,
    pub rigidity: Option<RigidityBlock>,
    pub minimize: Option<MinimizeBlock>,
    pub linearize: Option<LinearizeBlock>,
    pub localize: Option<LocalizeBlock>,
    pub checks: Option<ChecksBlock>,
}

fn one() -> f64 {
    1.0
}

/// Ω = (0, extent)^dim with `cells` cells per axis; A is Ω minus a layer of
/// width `margin`, with a collar of width `collar` inside A.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub dim: usize,
    #[serde(default = "one")]
    pub extent: f64,
    pub cells: usize,
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub collar: f64,
}

impl DomainBlock {
    pub fn grid(&self) -> Result<Grid, CliError> {
        self.grid_with(self.cells)
    }

    pub fn grid_with(&self, cells: usize) -> Result<Grid, CliError> {
        Grid::new(
            self.dim,
            &vec![0.0; self.dim],
            &vec![self.extent; self.dim],
            &vec![cells; self.dim],
        )
        .map_err(CliError::validation)
    }

    pub fn mask(&self, grid: Grid) -> Result<SubdomainMask, CliError> {
        if self.margin > 0.0 {
            SubdomainMask::interior(grid, self.margin, self.collar).map_err(CliError::validation)
        } else {
            Ok(SubdomainMask::full(grid))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelBlock {
    #[serde(flatten)]
    pub profile: Profile,
    /// Support radius of the base kernel.
    #[serde(default = "one")]
    pub delta: f64,
    pub sequence: Option<SequenceBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceBlock {
    /// δ(n) = delta0 · n^{−power} times the base support.
    Rescaled { delta0: f64, power: f64 },
    FractionalToOne { p: f64 },
    Constant,
}

impl KernelBlock {
    pub fn kernel(&self, dim: usize) -> Result<Kernel, CliError> {
        Kernel::from_profile(dim, self.profile.clone(), self.delta).map_err(CliError::validation)
    }

    pub fn sequence(&self, dim: usize) -> Result<KernelSequence, CliError> {
        let base = self.kernel(dim)?;
        match &self.sequence {
            None | Some(SequenceBlock::Constant) => Ok(KernelSequence::Constant { kernel: base }),
            Some(SequenceBlock::Rescaled { delta0, power }) => {
                KernelSequence::rescaled(base, *delta0, *power).map_err(CliError::validation)
            }
            Some(SequenceBlock::FractionalToOne { p }) => Ok(KernelSequence::FractionalToOne { dim, p: *p }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroBlock {
    pub catalog: String,
    #[serde(default)]
    pub params: std::collections::BTreeMap<String, f64>,
}

impl MicroBlock {
    pub fn build(&self, weight: Kernel) -> Result<MicroPotential, CliError> {
        let params: Vec<(&str, f64)> = self.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        catalog_potential(&self.catalog, &params, weight).map_err(CliError::validation)
    }
}

/// Closed-form fields sampled on the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// x ↦ Fx + b with F row-major.
    Affine { matrix: Vec<f64>, offset: Option<Vec<f64>> },
    /// u_k(x) = scale · x_k².
    Quadratic { scale: f64 },
    /// The 1D sawtooth with `teeth` teeth.
    Sawtooth { teeth: usize },
    /// Oscillating laminate with singular values `lambda` and frequency k.
    Laminate { lambda: Vec<f64>, k: usize },
}

impl FieldSpec {
    pub fn sample(&self, grid: &Grid) -> Result<VectorField, CliError> {
        let d = grid.dim();
        match self {
            FieldSpec::Affine { matrix, offset } => {
                let (f, b) = affine_parts(d, matrix, offset.as_deref())?;
                Ok(VectorField::affine(*grid, &f, &b))
            }
            FieldSpec::Quadratic { scale } => {
                let s = *scale;
                Ok(VectorField::from_fn(*grid, |x, out| {
                    for k in 0..d {
                        out[k] = s * x[k] * x[k];
                    }
                }))
            }
            FieldSpec::Sawtooth { teeth } => {
                bondloc_core::constructions::sawtooth_field(*teeth, grid).map_err(CliError::validation)
            }
            FieldSpec::Laminate { lambda, k } => {
                let spec = bondloc_core::constructions::LaminateSpec {
                    lambda: lambda.clone(),
                    k: *k,
                };
                bondloc_core::constructions::laminate_field(&spec, grid).map_err(CliError::validation)
            }
        }
    }
}

pub fn affine_parts(d: usize, matrix: &[f64], offset: Option<&[f64]>) -> Result<(Mat, Vec<f64>), CliError> {
    let f = Mat::from_row_major(d, matrix).map_err(CliError::validation)?;
    let b = match offset {
        Some(b) if b.len() == d => b.to_vec(),
        Some(_) => return Err(CliError::Validation("affine offset has the wrong length".into())),
        None => vec![0.0; d],
    };
    Ok((f, b))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBlock {
    /// Also report the energy on a grid with half the cells as an error estimate.
    #[serde(default)]
    pub estimate_error: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBlock {
    /// Row-major matrices.
    pub matrices: Vec<Vec<f64>>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub laminate: bool,
    #[serde(default)]
    pub search: LaminateSearch,
}

fn default_order() -> usize {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SawtoothCase {
    pub teeth: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SawtoothBlock {
    pub cases: Vec<SawtoothCase>,
    /// h = δ / h_ratio.
    #[serde(default = "default_h_ratio")]
    pub h_ratio: f64,
}

fn default_h_ratio() -> f64 {
    32.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaminateBlock {
    pub lambda: Vec<f64>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    #[serde(default = "default_cells_per_horizon")]
    pub cells_per_horizon: f64,
    #[serde(default = "default_min_cells")]
    pub min_cells: usize,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

fn default_cells_per_horizon() -> f64 {
    8.0
}

fn default_min_cells() -> usize {
    64
}

fn default_max_cells() -> usize {
    1024
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidityBlock {
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub radius: f64,
    /// Uniform noise amplitude added to the isometry.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_rigid_tol")]
    pub tol: f64,
}

fn default_trials() -> usize {
    5
}

fn default_rigid_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineDatum {
    pub matrix: Vec<f64>,
    pub offset: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeBlock {
    pub g: AffineDatum,
    #[serde(default = "yes")]
    pub multistart: bool,
    pub settings: Option<bondloc_core::OptimizerSettings>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizeBlock {
    pub eps: Vec<f64>,
    /// Constant body force l.
    pub load: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeBlock {
    pub g: AffineDatum,
    pub n: Vec<usize>,
    /// Cells per axis for each n.
    pub cells: Vec<usize>,
    #[serde(default = "default_bracket_c")]
    pub bracket_c: f64,
    pub settings: Option<bondloc_core::OptimizerSettings>,
}

fn default_bracket_c() -> f64 {
    4.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksBlock {
    #[serde(default = "default_check_trials")]
    pub frame_trials: usize,
    #[serde(default = "default_check_trials")]
    pub zero_set_trials: usize,
    #[serde(default = "default_trials")]
    pub rigidity_trials: usize,
    #[serde(default = "default_gradient_trials")]
    pub gradient_trials: usize,
}

fn default_check_trials() -> usize {
    50
}

fn default_gradient_trials() -> usize {
    10
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn domain(&self) -> Result<&DomainBlock, CliError> {
        self.domain.as_ref().ok_or_else(|| missing("domain"))
    }

    pub fn kernel(&self) -> Result<&KernelBlock, CliError> {
        self.kernel.as_ref().ok_or_else(|| missing("kernel"))
    }

    pub fn potential(&self) -> Result<&Potential, CliError> {
        self.potential.as_ref().ok_or_else(|| missing("potential"))
    }

    /// Checks every block the experiment uses before anything runs.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.m >= 1.0) || !self.m.is_finite() {
            return Err(CliError::Validation(format!("strain order m must be >= 1, got {}", self.m)));
        }
        if let Some(p) = &self.potential {
            p.validate().map_err(CliError::validation)?;
        }
        if let Some(d) = &self.domain {
            let g = d.grid()?;
            d.mask(g)?;
            if let Some(k) = &self.kernel {
                k.sequence(d.dim)?;
            }
        }
        match self.experiment {
            Experiment::Energy => {
                let d = self.domain()?;
                self.kernel()?.kernel(d.dim)?;
                self.potential()?;
                let f = self.field.as_ref().ok_or_else(|| missing("field"))?;
                f.sample(&d.grid()?)?;
            }
            Experiment::Density => {
                let b = self.density.as_ref().ok_or_else(|| missing("density"))?;
                self.potential()?;
                if b.matrices.is_empty() {
                    return Err(CliError::Validation("density needs at least one matrix".into()));
                }
                for m in &b.matrices {
                    let d = (m.len() as f64).sqrt().round() as usize;
                    Mat::from_row_major(d, m).map_err(CliError::validation)?;
                    if b.laminate && d != 2 {
                        return Err(CliError::Validation("laminate bounds need 2x2 matrices".into()));
                    }
                }
                bondloc_core::SphereQuadrature::new(2, b.order).map_err(CliError::validation)?;
            }
            Experiment::Sawtooth => {
                let b = self.sawtooth.as_ref().ok_or_else(|| missing("sawtooth"))?;
                if b.cases.is_empty() || !(b.h_ratio >= 16.0) {
                    return Err(CliError::Validation("sawtooth needs cases and h_ratio >= 16".into()));
                }
                for c in &b.cases {
                    if c.teeth == 0 || !(c.delta > 0.0) {
                        return Err(CliError::Validation("sawtooth cases need teeth >= 1 and delta > 0".into()));
                    }
                }
            }
            Experiment::Laminate => {
                let b = self.laminate.as_ref().ok_or_else(|| missing("laminate"))?;
                self.potential()?;
                let k = self.kernel()?;
                k.sequence(b.lambda.len())?;
                if b.n.is_empty() || b.n.len() != b.k.len() {
                    return Err(CliError::Validation("laminate needs matching n and k lists".into()));
                }
                bondloc_core::constructions::LaminateSpec {
                    lambda: b.lambda.clone(),
                    k: 1,
                }
                .validate()
                .map_err(CliError::validation)?;
            }
            Experiment::Rigidity => {
                let b = self.rigidity.as_ref().ok_or_else(|| missing("rigidity"))?;
                let d = self.domain()?;
                if d.dim != 2 {
                    return Err(CliError::Validation("rigidity trials run in d = 2".into()));
                }
                if !(b.radius > 0.0) || b.trials == 0 {
                    return Err(CliError::Validation("rigidity needs radius > 0 and trials >= 1".into()));
                }
            }
            Experiment::Minimize => {
                let b = self.minimize.as_ref().ok_or_else(|| missing("minimize"))?;
                let d = self.domain()?;
                self.kernel()?.kernel(d.dim)?;
                self.potential()?;
                affine_parts(d.dim, &b.g.matrix, b.g.offset.as_deref())?;
                if !(d.margin > 0.0 && d.collar > 0.0) {
                    return Err(CliError::Validation("minimize needs domain.margin and domain.collar".into()));
                }
            }
            Experiment::Linearize => {
                let b = self.linearize.as_ref().ok_or_else(|| missing("linearize"))?;
                let d = self.domain()?;
                let w = self.kernel()?.kernel(d.dim)?;
                self.micro.as_ref().ok_or_else(|| missing("micro"))?.build(w)?;
                self.field.as_ref().ok_or_else(|| missing("field"))?.sample(&d.grid()?)?;
                if b.eps.is_empty() || b.eps.windows(2).any(|p| !(p[1] < p[0])) {
                    return Err(CliError::Validation("eps must be nonempty and strictly decreasing".into()));
                }
                if let Some(l) = &b.load {
                    if l.len() != d.dim {
                        return Err(CliError::Validation("load has the wrong length".into()));
                    }
                }
            }
            Experiment::Localize => {
                let b = self.localize.as_ref().ok_or_else(|| missing("localize"))?;
                let d = self.domain()?;
                self.kernel()?.sequence(d.dim)?;
                self.potential()?;
                affine_parts(d.dim, &b.g.matrix, b.g.offset.as_deref())?;
                if b.n.is_empty() || b.n.len() != b.cells.len() {
                    return Err(CliError::Validation("localize needs matching n and cells lists".into()));
                }
            }
            Experiment::Checks => {
                self.checks.as_ref().ok_or_else(|| missing("checks"))?;
            }
        }
        Ok(())
    }
}

fn missing(block: &str) -> CliError {
    CliError::Validation(format!("missing `{block}` block"))
}
