//! Monotone lattice scheme for `M⁺u = f`, `M⁻u = f`, linear and Isaacs
//! equations with exterior Dirichlet data, and discrete comparison checks.
//!
//! Two iterations are provided. Policy iteration (Howard) freezes the
//! multiplier at every stencil entry, solves the resulting linear system
//! and updates the policy from the signs of the second differences. For
//! Isaacs equations the policy is a pair of rule indices per node: an inner
//! Howard loop over the sup player runs to completion for every frozen inf
//! policy, so the outer iterates decrease and stop after finitely many
//! switches. The explicit iteration `u ← u + dt (Au − f)` with `dt` below the inverse
//! kernel mass is a positive-weight average, hence order preserving.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geom::{self, Point};
use crate::grid::{ExteriorRule, Grid, GridFunction};
use crate::kernels::{KernelRule, KernelSpec, LatticeStencil, Operator};
use crate::potential::Potential;
use crate::{Error, Result};

/// Right-hand sides. Only continuous rules are accepted by the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RhsRule {
    Constant { value: f64 },
    Gaussian { amplitude: f64, width: f64 },
    /// `amplitude · cos(freq · x₁)`.
    Cosine { amplitude: f64, freq: f64 },
    /// `value` for `x₁ ≥ at`; discontinuous.
    Step { at: f64, value: f64 },
}

impl RhsRule {
    pub fn zero() -> Self {
        Self::Constant { value: 0.0 }
    }

    pub fn from_id(id: &str, params: &[f64]) -> Result<Self> {
        let bad = || Error::Config(format!("rhs rule `{id}`: bad parameters {params:?}"));
        Ok(match (id, params) {
            ("zero", []) => Self::zero(),
            ("constant", [v]) => Self::Constant { value: *v },
            ("gaussian", [a, w]) => Self::Gaussian { amplitude: *a, width: *w },
            ("cosine", [a, f]) => Self::Cosine { amplitude: *a, freq: *f },
            ("step", [at, v]) => Self::Step { at: *at, value: *v },
            ("zero" | "constant" | "gaussian" | "cosine" | "step", _) => return Err(bad()),
            (other, _) => return Err(Error::Config(format!("unknown rhs rule `{other}`"))),
        })
    }

    /// `c·f`.
    pub fn scaled(&self, c: f64) -> Self {
        match *self {
            Self::Constant { value } => Self::Constant { value: c * value },
            Self::Gaussian { amplitude, width } => Self::Gaussian { amplitude: c * amplitude, width },
            Self::Cosine { amplitude, freq } => Self::Cosine { amplitude: c * amplitude, freq },
            Self::Step { at, value } => Self::Step { at, value: c * value },
        }
    }

    pub fn value(&self, p: &Point) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Gaussian { amplitude, width } => amplitude * (-p.norm_squared() / (width * width)).exp(),
            Self::Cosine { amplitude, freq } => amplitude * (freq * p.x).cos(),
            Self::Step { at, value } => {
                if p.x >= at {
                    value
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Self::Step { value, .. } if *value != 0.0)
    }

    pub fn sup_abs(&self) -> f64 {
        match *self {
            Self::Constant { value } | Self::Step { value, .. } => value.abs(),
            Self::Gaussian { amplitude, .. } | Self::Cosine { amplitude, .. } => amplitude.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "equation", rename_all = "snake_case")]
pub enum Equation {
    ExtremalPlus,
    ExtremalMinus,
    Linear { rule: KernelRule },
    Isaacs { families: Vec<Vec<KernelRule>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Howard,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iter: usize,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iter: 200,
            method: Method::Howard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub cfl_dt: f64,
    pub converged: bool,
    pub method: Method,
}

/// Everything that defines a Dirichlet problem on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub potential: Potential,
    pub spec: KernelSpec,
    pub grid: Grid,
    pub exterior: ExteriorRule,
    pub rhs: RhsRule,
}

/// The discretised operator: one lattice stencil per interior node.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub problem: Problem,
    pub nodes: Vec<usize>,
    stencils: Vec<Arc<LatticeStencil>>,
    position: Vec<Option<usize>>,
    rhs: Vec<f64>,
}

impl Scheme {
    /// Stencils reach past the box far enough that the exterior data is
    /// constant along every tail ray.
    pub fn new(problem: Problem) -> Result<Self> {
        problem.spec.validate()?;
        if problem.potential.n != problem.grid.n() {
            return Err(Error::Config("potential and grid dimensions differ".into()));
        }
        let grid = problem.grid;
        let nodes = grid.interior();
        if nodes.is_empty() {
            return Err(Error::Config("grid has no interior nodes".into()));
        }
        let reach = grid.bx.diameter() + problem.exterior.far_radius() + 2.0 * grid.h;
        let sigma = problem.spec.sigma;
        let pot = problem.potential;
        let stencils = if pot.is_quadratic() {
            let st = Arc::new(LatticeStencil::build(&pot, &Point::zeros(), sigma, grid.h, reach)?);
            vec![st; nodes.len()]
        } else {
            crate::par::map_collect(&nodes, |&k| LatticeStencil::build(&pot, &grid.node(k), sigma, grid.h, reach))
                .into_iter()
                .map(|s| s.map(Arc::new))
                .collect::<Result<Vec<_>>>()?
        };
        let mut position = vec![None; grid.node_count()];
        for (i, &k) in nodes.iter().enumerate() {
            position[k] = Some(i);
        }
        let rhs = nodes.iter().map(|&k| problem.rhs.value(&grid.node(k))).collect();
        Ok(Self {
            problem,
            nodes,
            stencils,
            position,
            rhs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.problem.grid
    }

    pub fn stencil(&self, i: usize) -> &LatticeStencil {
        &self.stencils[i]
    }

    /// Initial iterate: exterior data on boundary nodes, zero inside.
    pub fn initial(&self) -> GridFunction {
        GridFunction::zeros(self.problem.grid, self.problem.exterior.clone())
    }

    fn increments(st: &LatticeStencil) -> Vec<Point> {
        st.offsets
            .iter()
            .map(|(v, _)| geom::project(st.h * geom::point2(v[0] as f64, v[1] as f64), st.n))
            .chain(st.tail.iter().map(|(y, _)| *y))
            .collect()
    }

    fn apply_at(&self, i: usize, u: &GridFunction, eq: &Equation) -> f64 {
        let st = &self.stencils[i];
        let k = self.nodes[i];
        let x = self.grid().node(k);
        let d = st.deltas(u, k);
        let spec = &self.problem.spec;
        match eq {
            Equation::ExtremalPlus => st.apply(&x, &d, spec, &Operator::Plus),
            Equation::ExtremalMinus => st.apply(&x, &d, spec, &Operator::Minus),
            Equation::Linear { rule } => st.apply(&x, &d, spec, &Operator::Linear(rule.clone())),
            Equation::Isaacs { families } => families
                .iter()
                .map(|fam| {
                    fam.iter()
                        .map(|r| st.apply(&x, &d, spec, &Operator::Linear(r.clone())))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `Au` at every interior node.
    pub fn operator_values(&self, u: &GridFunction, eq: &Equation) -> Vec<f64> {
        crate::par::map_range(self.nodes.len(), |i| self.apply_at(i, u, eq))
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `sup |Au − f|` over interior nodes.
    pub fn residual(&self, u: &GridFunction, eq: &Equation) -> f64 {
        self.operator_values(u, eq)
            .iter()
            .zip(&self.rhs)
            .map(|(a, f)| (a - f).abs())
            .fold(0.0, f64::max)
    }

    /// Largest step keeping the explicit update a positive-weight average.
    pub fn cfl_dt(&self) -> f64 {
        let mass = self.stencils.iter().map(|s| s.mass()).fold(0.0, f64::max);
        1.0 / (2.0 * self.problem.spec.cap_lambda * mass)
    }

    /// One explicit step `u ← u + dt (Au − f)` on interior nodes.
    pub fn explicit_step(&self, u: &GridFunction, eq: &Equation, dt: f64) -> GridFunction {
        let a = self.operator_values(u, eq);
        let mut next = u.clone();
        for (i, &k) in self.nodes.iter().enumerate() {
            next.values[k] += dt * (a[i] - self.rhs[i]);
        }
        next
    }

    fn multipliers(&self, i: usize, u: &GridFunction, eq: &Equation, prev: Option<&[f64]>) -> Vec<f64> {
        let st = &self.stencils[i];
        let k = self.nodes[i];
        let x = self.grid().node(k);
        let d = st.deltas(u, k);
        let spec = &self.problem.spec;
        let (lo, hi) = (spec.lambda, spec.cap_lambda);
        let incs = Self::increments(st);
        d.iter()
            .enumerate()
            .map(|(j, &dj)| match eq {
                Equation::ExtremalPlus | Equation::ExtremalMinus => {
                    let plus = matches!(eq, Equation::ExtremalPlus);
                    if dj == 0.0 {
                        prev.map_or(lo, |p| p[j])
                    } else if (dj > 0.0) == plus {
                        hi
                    } else {
                        lo
                    }
                }
                Equation::Linear { rule } => 0.5 * (rule.multiplier(&x, &incs[j]) + rule.multiplier(&x, &-incs[j])),
                Equation::Isaacs { .. } => unreachable!("Isaacs policies are pairs of rule indices"),
            })
            .collect()
    }

    /// Solves the linear system for a frozen policy.
    fn solve_policy(&self, policy: &[Vec<f64>]) -> Result<GridFunction> {
        let grid = *self.grid();
        let m = self.nodes.len();
        let ext = &self.problem.exterior;
        let base = self.initial();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::from_column_slice(&self.rhs);
        for (i, &k) in self.nodes.iter().enumerate() {
            let st = &self.stencils[i];
            let x = grid.node(k);
            let pol = &policy[i];
            let mut diag = 0.0;
            for (j, (v, w)) in st.offsets.iter().enumerate() {
                let c = w * pol[j];
                diag -= 2.0 * c;
                for s in [1i64, -1] {
                    match grid.offset(k, s * v[0], s * v[1]) {
                        Some(q) => match self.position[q] {
                            Some(col) => a[(i, col)] += c,
                            None => b[i] -= c * base.values[q],
                        },
                        None => {
                            let p = x + grid.h * geom::point2((s * v[0]) as f64, (s * v[1]) as f64);
                            b[i] -= c * ext.value(&geom::project(p, grid.n()));
                        }
                    }
                }
            }
            let off = st.offsets.len();
            for (j, (y, w)) in st.tail.iter().enumerate() {
                let c = w * pol[off + j];
                diag -= 2.0 * c;
                let gp = ext.value(&geom::project(x + y, grid.n())) + ext.value(&geom::project(x - y, grid.n()));
                b[i] -= c * gp;
            }
            a[(i, i)] += diag;
        }
        let sol = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Data("singular policy matrix".into()))?;
        let mut u = base;
        for (i, &k) in self.nodes.iter().enumerate() {
            u.values[k] = sol[i];
        }
        Ok(u)
    }

    fn howard(&self, eq: &Equation, cfg: &SolverConfig) -> Result<(GridFunction, SolveReport)> {
        let mut u = self.initial();
        let mut policy: Option<Vec<Vec<f64>>> = None;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < cfg.max_iter {
            let next: Vec<Vec<f64>> = crate::par::map_range(self.nodes.len(), |i| {
                self.multipliers(i, &u, eq, policy.as_ref().map(|p| p[i].as_slice()))
            });
            if policy.as_ref() == Some(&next) {
                break;
            }
            u = self.solve_policy(&next)?;
            policy = Some(next);
            iterations += 1;
            residual = self.residual(&u, eq);
            if residual <= cfg.tolerance {
                break;
            }
        }
        let scale = 1.0 + u.max_abs() * self.max_diag() + self.problem.rhs.sup_abs();
        Ok((
            u,
            SolveReport {
                iterations,
                final_residual: residual,
                cfl_dt: self.cfl_dt(),
                converged: residual <= cfg.tolerance.max(1e-11 * scale),
                method: Method::Howard,
            },
        ))
    }

    fn rule_multipliers(&self, i: usize, rule: &KernelRule) -> Vec<f64> {
        let st = &self.stencils[i];
        let x = self.grid().node(self.nodes[i]);
        Self::increments(st)
            .iter()
            .map(|y| 0.5 * (rule.multiplier(&x, y) + rule.multiplier(&x, &-y)))
            .collect()
    }

    /// Values of every `L_{αβ}u` at interior node `i`.
    fn rule_values(&self, i: usize, u: &GridFunction, families: &[Vec<KernelRule>]) -> Vec<Vec<f64>> {
        let st = &self.stencils[i];
        let k = self.nodes[i];
        let x = self.grid().node(k);
        let d = st.deltas(u, k);
        let spec = &self.problem.spec;
        families
            .iter()
            .map(|fam| fam.iter().map(|r| st.apply(&x, &d, spec, &Operator::Linear(r.clone()))).collect())
            .collect()
    }

    fn isaacs_howard(&self, families: &[Vec<KernelRule>], cfg: &SolverConfig) -> Result<(GridFunction, SolveReport)> {
        let m = self.nodes.len();
        let table: Vec<Vec<Vec<Vec<f64>>>> = crate::par::map_range(m, |i| {
            families
                .iter()
                .map(|fam| fam.iter().map(|r| self.rule_multipliers(i, r)).collect())
                .collect()
        });
        // a switch needs a strict gain, otherwise ties could cycle
        let gain = 1e-13 * (1.0 + self.problem.rhs.sup_abs() + self.problem.exterior.sup_bound());
        let mut alpha = vec![0usize; m];
        let mut beta = vec![0usize; m];
        let mut u = self.initial();
        let mut solves = 0;
        'outer: while solves < cfg.max_iter {
            loop {
                let policy: Vec<Vec<f64>> = (0..m).map(|i| table[i][alpha[i]][beta[i]].clone()).collect();
                u = self.solve_policy(&policy)?;
                solves += 1;
                let vals = crate::par::map_range(m, |i| self.rule_values(i, &u, families));
                let mut changed = false;
                for i in 0..m {
                    let row = &vals[i][alpha[i]];
                    let best = (0..row.len()).fold(beta[i], |b, c| if row[c] > row[b] + gain { c } else { b });
                    if best != beta[i] {
                        beta[i] = best;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
                if solves >= cfg.max_iter {
                    break 'outer;
                }
            }
            let vals = crate::par::map_range(m, |i| self.rule_values(i, &u, families));
            let mut changed = false;
            for i in 0..m {
                let sup = |a: usize| vals[i][a].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut best = (alpha[i], sup(alpha[i]));
                for a in 0..families.len() {
                    let v = sup(a);
                    if v < best.1 - gain {
                        best = (a, v);
                    }
                }
                if best.0 != alpha[i] {
                    alpha[i] = best.0;
                    let row = &vals[i][best.0];
                    beta[i] = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let eq = Equation::Isaacs {
            families: families.to_vec(),
        };
        let residual = self.residual(&u, &eq);
        let scale = 1.0 + u.max_abs() * self.max_diag() + self.problem.rhs.sup_abs();
        Ok((
            u,
            SolveReport {
                iterations: solves,
                final_residual: residual,
                cfl_dt: self.cfl_dt(),
                converged: residual <= cfg.tolerance.max(1e-11 * scale),
                method: Method::Howard,
            },
        ))
    }

    fn max_diag(&self) -> f64 {
        1.0 / self.cfl_dt()
    }

    fn explicit(&self, eq: &Equation, cfg: &SolverConfig) -> Result<(GridFunction, SolveReport)> {
        let dt = self.cfl_dt();
        let mut u = self.initial();
        let mut best = (f64::INFINITY, u.clone());
        let mut iterations = 0;
        while iterations < cfg.max_iter {
            let a = self.operator_values(&u, eq);
            let mut res = 0.0f64;
            for (i, &k) in self.nodes.iter().enumerate() {
                let r = a[i] - self.rhs[i];
                res = res.max(r.abs());
                u.values[k] += dt * r;
            }
            if res < best.0 {
                best.0 = res;
            }
            iterations += 1;
            if res <= cfg.tolerance {
                break;
            }
        }
        let final_residual = self.residual(&u, eq);
        if final_residual <= best.0 {
            best = (final_residual, u);
        } else {
            best.1 = u;
        }
        Ok((
            best.1,
            SolveReport {
                iterations,
                final_residual: best.0,
                cfl_dt: dt,
                converged: best.0 <= cfg.tolerance,
                method: Method::Explicit,
            },
        ))
    }
}

fn check_equation(eq: &Equation, spec: &KernelSpec, n: usize) -> Result<()> {
    let rules: Vec<&KernelRule> = match eq {
        Equation::Linear { rule } => vec![rule],
        Equation::Isaacs { families } => {
            if families.is_empty() || families.iter().any(|f| f.is_empty()) {
                return Err(Error::Config("Isaacs families must be nonempty".into()));
            }
            families.iter().flatten().collect()
        }
        _ => vec![],
    };
    for r in rules {
        crate::kernels::assert_class(spec, r, &Point::zeros(), n, 1.0)?;
    }
    Ok(())
}

/// Solves `Au = f` in the box with the exterior data outside.
pub fn solve(problem: &Problem, eq: &Equation, cfg: &SolverConfig) -> Result<(GridFunction, SolveReport)> {
    if !problem.rhs.is_continuous() {
        return Err(Error::Config("right-hand side must be continuous".into()));
    }
    if !(cfg.tolerance > 0.0) || cfg.max_iter == 0 {
        return Err(Error::Config("need tolerance > 0 and max_iter ≥ 1".into()));
    }
    check_equation(eq, &problem.spec, problem.grid.n())?;
    let scheme = Scheme::new(problem.clone())?;
    solve_with(&scheme, eq, cfg)
}

/// As [`solve`], reusing a prebuilt scheme.
pub fn solve_with(scheme: &Scheme, eq: &Equation, cfg: &SolverConfig) -> Result<(GridFunction, SolveReport)> {
    match (cfg.method, eq) {
        (Method::Explicit, _) => scheme.explicit(eq, cfg),
        (Method::Howard, Equation::Isaacs { families }) => scheme.isaacs_howard(families, cfg),
        (Method::Howard, _) => scheme.howard(eq, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `max (u − v)` over grid nodes.
    pub max_excess: f64,
    pub worst_point: [f64; 2],
    /// `min (M⁺(u−v) − (Iu − Iv))` over interior nodes.
    pub min_plus_gap: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Discrete comparison: given a subsolution `u` (`Iu ≥ f`) and a
/// supersolution `v` (`Iv ≤ f`) with `u ≤ v` outside, checks `u ≤ v` on the
/// grid and `M⁺(u − v) ≥ Iu − Iv` pointwise.
pub fn comparison_check(scheme: &Scheme, eq: &Equation, u: &GridFunction, v: &GridFunction, tolerance: f64) -> Result<ComparisonReport> {
    let grid = *scheme.grid();
    if u.grid != grid || v.grid != grid {
        return Err(Error::Precondition("grid functions must live on the scheme grid".into()));
    }
    // exterior ordering: boundary nodes and the stencil footprint outside the box
    for k in 0..grid.node_count() {
        if !grid.is_interior(k) && u.values[k] > v.values[k] + tolerance {
            return Err(Error::Precondition(format!("u > v at boundary node {k}")));
        }
    }
    let reach = scheme.stencil(0).tail_radius;
    let probe = Grid::new(geom::Aabb::new(grid.bx.lo.add_scalar(-reach), grid.bx.hi.add_scalar(reach), grid.n()), 64)?;
    for k in 0..probe.node_count() {
        let p = probe.node(k);
        if !grid.bx.contains(&p) && u.exterior.value(&p) > v.exterior.value(&p) + tolerance {
            return Err(Error::Precondition(format!("u > v outside the box at ({}, {})", p.x, p.y)));
        }
    }
    let iu = scheme.operator_values(u, eq);
    let iv = scheme.operator_values(v, eq);
    for (i, f) in scheme.rhs().iter().enumerate() {
        let scale = 1.0 + f.abs();
        if iu[i] < f - tolerance * scale || iv[i] > f + tolerance * scale {
            return Err(Error::Precondition(format!(
                "node {}: need Iu ≥ f ≥ Iv, got {} / {f} / {}",
                scheme.nodes[i], iu[i], iv[i]
            )));
        }
    }
    let diff = u.combine(1.0, v, -1.0)?;
    let mp = scheme.operator_values(&diff, &Equation::ExtremalPlus);
    let min_plus_gap = mp
        .iter()
        .zip(iu.iter().zip(&iv))
        .map(|(m, (a, b))| m - (a - b))
        .fold(f64::INFINITY, f64::min);
    let (mut max_excess, mut worst) = (f64::NEG_INFINITY, 0);
    for k in 0..grid.node_count() {
        let e = u.values[k] - v.values[k];
        if e > max_excess {
            max_excess = e;
            worst = k;
        }
    }
    let p = grid.node(worst);
    let scale = 1.0 + iu.iter().chain(&iv).fold(0.0f64, |a, b| a.max(b.abs()));
    let holds = max_excess <= tolerance && min_plus_gap >= -tolerance * scale;
    if !holds {
        return Err(Error::ComparisonFailure {
            point: p,
            excess: max_excess,
        });
    }
    Ok(ComparisonReport {
        max_excess,
        worst_point: [p.x, p.y],
        min_plus_gap,
        tolerance,
        holds,
    })
}
