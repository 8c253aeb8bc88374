//! The TOML run configuration and its translation into library types.

use std::path::{Path, PathBuf};

use nonlocal_ma::geom::{self, Aabb, Point};
use nonlocal_ma::grid::{ExteriorRule, Grid};
use nonlocal_ma::kernels::{self, KernelRule, KernelSpec, Selection};
use nonlocal_ma::potential::Potential;
use nonlocal_ma::regularity::{C1AlphaConfig, HarnackConfig, HolderConfig, TailConfig};
use nonlocal_ma::solver::{Equation, Method, Problem, RhsRule, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub potential: PotentialCfg,
    pub kernel: KernelCfg,
    #[serde(default)]
    pub grid: GridCfg,
    #[serde(default)]
    pub exterior: RuleCfg,
    #[serde(default)]
    pub rhs: RuleCfg,
    #[serde(default)]
    pub solver: SolverCfg,
    #[serde(default)]
    pub output: OutputCfg,
    #[serde(default)]
    pub sections: SectionsCfg,
    #[serde(default)]
    pub operator: OperatorCfg,
    #[serde(default)]
    pub solve: EquationCfg,
    #[serde(default)]
    pub abp: AbpCfg,
    #[serde(default)]
    pub leps: LepsCfg,
    #[serde(default)]
    pub harnack: HarnackCfg,
    #[serde(default)]
    pub holder: HolderCfg,
    #[serde(default)]
    pub c1alpha: C1AlphaCfg,
    #[serde(default)]
    pub mc: McCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialCfg {
    pub id: String,
    #[serde(default)]
    pub params: Vec<f64>,
    pub n: usize,
}

impl Default for PotentialCfg {
    fn default() -> Self {
        Self {
            id: "isotropic".into(),
            params: vec![],
            n: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCfg {
    pub lambda: f64,
    #[serde(alias = "Lambda")]
    pub cap_lambda: f64,
    pub sigma: f64,
    #[serde(default = "default_selection")]
    pub selection: Selection,
}

fn default_selection() -> Selection {
    Selection::ExtremalPlus
}

impl Default for KernelCfg {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            cap_lambda: 1.0,
            sigma: 1.5,
            selection: default_selection(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    /// `[a, b]`: the interval in 1D, the square `[a, b]²` in 2D.
    #[serde(rename = "box")]
    pub bx: [f64; 2],
    pub cells: Option<usize>,
    pub h: Option<f64>,
}

impl Default for GridCfg {
    fn default() -> Self {
        Self {
            bx: [-1.0, 1.0],
            cells: None,
            h: None,
        }
    }
}

/// A catalog entry: string id plus a flat parameter list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleCfg {
    pub id: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl Default for RuleCfg {
    fn default() -> Self {
        Self {
            id: "zero".into(),
            params: vec![],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverCfg {
    pub tolerance: f64,
    pub max_iter: usize,
    pub method: Method,
}

impl Default for SolverCfg {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            tolerance: d.tolerance,
            max_iter: d.max_iter,
            method: d.method,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputCfg {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectionsCfg {
    /// Explicit centers; otherwise a lattice of `per_axis` points on `[−half, half]ⁿ`.
    pub centers: Option<Vec<[f64; 2]>>,
    pub half: f64,
    pub per_axis: usize,
    pub radii: Vec<f64>,
    pub gamma_max: f64,
    pub doubling_slack: f64,
    pub c_inner_min: f64,
}

impl Default for SectionsCfg {
    fn default() -> Self {
        Self {
            centers: None,
            half: 0.5,
            per_axis: 3,
            radii: vec![0.25, 0.5, 1.0],
            gamma_max: 8.0,
            doubling_slack: 1.05,
            c_inner_min: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorCfg {
    /// CSV with columns `x,value` (1D) or `x,y,value` (2D), one row per grid node.
    pub input: Option<PathBuf>,
    pub points: Option<Vec<[f64; 2]>>,
    /// Number of interior nodes to evaluate when `points` is absent.
    pub count: usize,
    /// Fixed Gauss nodes per ring; adaptive when absent.
    pub ring_nodes: Option<usize>,
    pub families: Option<Vec<Vec<KernelRule>>>,
}

impl Default for OperatorCfg {
    fn default() -> Self {
        Self {
            input: None,
            points: None,
            count: 25,
            ring_nodes: None,
            families: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquationCfg {
    /// `extremal_plus`, `extremal_minus`, `linear` or `isaacs`.
    pub equation: String,
    pub rule: Option<KernelRule>,
    pub families: Option<Vec<Vec<KernelRule>>>,
}

impl Default for EquationCfg {
    fn default() -> Self {
        Self {
            equation: "extremal_plus".into(),
            rule: None,
            families: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbpCfg {
    pub cells: Vec<usize>,
    pub m: f64,
    pub tau_samples: usize,
    /// Allowed ratio of the largest to the smallest constant.
    pub factor: f64,
    /// Shell fraction allowed by the quadratic detachment check.
    pub eps0: f64,
}

impl Default for AbpCfg {
    fn default() -> Self {
        Self {
            cells: vec![32, 64],
            m: 1.0,
            tau_samples: 100,
            factor: 2.0,
            eps0: nonlocal_ma::envelope::DETACHMENT_EPS0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LepsCfg {
    pub cells: Vec<usize>,
    pub tail: TailConfig,
}

impl Default for LepsCfg {
    fn default() -> Self {
        Self {
            cells: vec![128, 256],
            tail: TailConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnackCfg {
    #[serde(flatten)]
    pub config: HarnackConfig,
    /// Exterior data; defaults to five bumps, spikes and steps outside the box.
    pub data: Option<Vec<ExteriorRule>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderCfg {
    pub cells: Vec<usize>,
    pub x0: [f64; 2],
    pub c_bound: f64,
    pub drift_tol: f64,
    pub equation: EquationCfg,
}

impl Default for HolderCfg {
    fn default() -> Self {
        let d = HolderConfig::default();
        Self {
            cells: d.cells,
            x0: d.x0,
            c_bound: d.c_bound,
            drift_tol: d.drift_tol,
            equation: EquationCfg {
                equation: "extremal_minus".into(),
                ..EquationCfg::default()
            },
        }
    }
}

impl HolderCfg {
    pub fn config(&self) -> HolderConfig {
        HolderConfig {
            cells: self.cells.clone(),
            x0: self.x0,
            c_bound: self.c_bound,
            drift_tol: self.drift_tol,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct C1AlphaCfg {
    #[serde(flatten)]
    pub config: C1AlphaConfig,
    /// Kernel of the linear equation; the midpoint constant when absent.
    pub rule: Option<KernelRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McCfg {
    pub x0: Vec<[f64; 2]>,
    pub paths: usize,
    pub eta: f64,
    pub hessian_scale: f64,
    /// Compare against the grid solver at each start point.
    pub compare: bool,
    /// Allowed deviation in standard errors, on top of the bias bound.
    pub std_errors: f64,
}

impl Default for McCfg {
    fn default() -> Self {
        Self {
            x0: vec![[0.0, 0.0], [0.5, 0.0]],
            paths: 100_000,
            eta: 0.02,
            hessian_scale: 1.0,
            compare: true,
            std_errors: 3.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Input("config is not UTF-8".into()))?;
        let cfg: RunConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    /// Checks every shared section so that a bad value fails before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.potential()?;
        self.spec()?;
        self.grid()?;
        self.exterior()?;
        self.rhs()?;
        self.solver_config()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.potential.n
    }

    pub fn potential(&self) -> Result<Potential> {
        let p = &self.potential;
        if !(p.n == 1 || p.n == 2) {
            return Err(CliError::field("potential.n", format!("dimension must be 1 or 2, got {}", p.n)));
        }
        Potential::from_id(&p.id, &p.params, p.n).map_err(|e| CliError::field("potential", e))
    }

    pub fn spec(&self) -> Result<KernelSpec> {
        let k = &self.kernel;
        if !(k.sigma > 0.0 && k.sigma < 2.0) {
            return Err(CliError::field("kernel.sigma", format!("must lie in (0, 2), got {}", k.sigma)));
        }
        if !(k.lambda > 0.0 && k.lambda.is_finite()) {
            return Err(CliError::field("kernel.lambda", format!("must be positive, got {}", k.lambda)));
        }
        if !(k.cap_lambda >= k.lambda && k.cap_lambda.is_finite()) {
            return Err(CliError::field(
                "kernel.cap_lambda",
                format!("must be finite and at least lambda = {}, got {}", k.lambda, k.cap_lambda),
            ));
        }
        KernelSpec::new(k.lambda, k.cap_lambda, k.sigma, k.selection).map_err(|e| CliError::field("kernel", e))
    }

    pub fn domain(&self) -> Result<Aabb> {
        let [a, b] = self.grid.bx;
        if !(a < b && a.is_finite() && b.is_finite()) {
            return Err(CliError::field("grid.box", format!("need a < b, got [{a}, {b}]")));
        }
        Ok(if self.n() == 1 { Aabb::interval(a, b) } else { Aabb::square(a, b) })
    }

    pub fn grid(&self) -> Result<Grid> {
        let bx = self.domain()?;
        match (self.grid.cells, self.grid.h) {
            (Some(_), Some(_)) => Err(CliError::field("grid", "give either cells or h, not both")),
            (_, Some(h)) if !(h > 0.0 && h.is_finite()) => Err(CliError::field("grid.h", format!("must be positive, got {h}"))),
            (_, Some(h)) => Grid::with_spacing(bx, h).map_err(|e| CliError::field("grid.h", e)),
            (Some(c), None) => Grid::new(bx, c).map_err(|e| CliError::field("grid.cells", e)),
            (None, None) => Grid::new(bx, 64).map_err(|e| CliError::field("grid", e)),
        }
    }

    pub fn grid_with_cells(&self, cells: usize) -> Result<Grid> {
        Grid::new(self.domain()?, cells).map_err(|e| CliError::field("cells", e))
    }

    pub fn exterior(&self) -> Result<ExteriorRule> {
        ExteriorRule::from_id(&self.exterior.id, &self.exterior.params).map_err(|e| CliError::field("exterior", e))
    }

    pub fn rhs(&self) -> Result<RhsRule> {
        RhsRule::from_id(&self.rhs.id, &self.rhs.params).map_err(|e| CliError::field("rhs", e))
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        if !(s.tolerance > 0.0) {
            return Err(CliError::field("solver.tolerance", format!("must be positive, got {}", s.tolerance)));
        }
        if s.max_iter == 0 {
            return Err(CliError::field("solver.max_iter", "must be at least 1"));
        }
        Ok(SolverConfig {
            tolerance: s.tolerance,
            max_iter: s.max_iter,
            method: s.method,
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem {
            potential: self.potential()?,
            spec: self.spec()?,
            grid: self.grid()?,
            exterior: self.exterior()?,
            rhs: self.rhs()?,
        })
    }

    pub fn point(&self, p: [f64; 2]) -> Point {
        geom::project(geom::point2(p[0], p[1]), self.n())
    }
}

impl EquationCfg {
    pub fn resolve(&self, field: &str, spec: &KernelSpec) -> Result<Equation> {
        Ok(match self.equation.as_str() {
            "extremal_plus" => Equation::ExtremalPlus,
            "extremal_minus" => Equation::ExtremalMinus,
            "linear" => Equation::Linear {
                rule: self.rule.clone().unwrap_or_else(|| KernelRule::midpoint(spec)),
            },
            "isaacs" => Equation::Isaacs {
                families: self.families.clone().unwrap_or_else(|| kernels::default_families(spec)),
            },
            other => {
                return Err(CliError::field(
                    &format!("{field}.equation"),
                    format!("unknown equation `{other}` (expected extremal_plus, extremal_minus, linear or isaacs)"),
                ))
            }
        })
    }
}
