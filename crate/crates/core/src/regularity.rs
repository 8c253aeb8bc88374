//! Measurement experiments: the L^ε tail of supersolutions, Harnack ratios,
//! Hölder and C^{1,α} fits, and the shift modulus of a kernel.
//!
//! Every fitted exponent carries the R² of its log-log fit; an exponent is
//! only asserted when R² ≥ [`MIN_R2`].

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::envelope::compute_tau;
use crate::geom::{self, Aabb, Point};
use crate::grid::{ExteriorRule, Grid, GridFunction};
use crate::kernels::{KernelRule, KernelSpec};
use crate::numeric::{self, LineFit};
use crate::potential::Potential;
use crate::sections::{self, Section};
use crate::solver::{solve_with, Equation, Problem, RhsRule, Scheme, SolverConfig};
use crate::{Error, Result};

/// Inner section radius used where only existence of some ρ ∈ (0,1) is known.
pub const RHO: f64 = 0.5;
pub const MIN_R2: f64 = 0.9;
/// Oscillation fits use radii spanning at least this many cells.
pub const MIN_CELLS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value >= tolerance,
        }
    }
}

/// Raw table behind a report, written as CSV by the CLI.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub potential: Potential,
    pub spec: KernelSpec,
    pub grids: Vec<Grid>,
    pub constants: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// Largest relative change of the headline estimate between resolutions.
    pub stability: f64,
    pub trace: Trace,
    /// Wall-clock seconds per resolution; kept out of the serialized report.
    #[serde(skip)]
    pub runtimes: Vec<f64>,
}

impl ExperimentReport {
    fn new(experiment: &str, potential: Potential, spec: KernelSpec) -> Self {
        Self {
            experiment: experiment.into(),
            potential,
            spec,
            grids: Vec::new(),
            constants: BTreeMap::new(),
            checks: Vec::new(),
            stability: 0.0,
            trace: Trace::default(),
            runtimes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn drift(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs()).max(1e-300)
    }
}

/// `[lo, hi]` of a 1D section, or its bounding box in 2D.
fn section_box(pot: &Potential, s: &Section) -> Result<Aabb> {
    if pot.n == 1 {
        let r = sections::boundary_radius(pot, &s.center, s.r, &geom::point1(1.0))?;
        let l = sections::boundary_radius(pot, &s.center, s.r, &geom::point1(-1.0))?;
        return Ok(Aabb::interval(s.center.x - l, s.center.x + r));
    }
    let pts = sections::boundary_points(pot, s, 256, 0.0)?;
    let (mut lo, mut hi) = (s.center, s.center);
    for p in &pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Ok(Aabb::new(lo, hi, 2))
}

/// Box containing `S_r(0)` with spacing compatible with `cells`.
pub fn section_domain(pot: &Potential, r: f64) -> Result<Aabb> {
    let b = section_box(pot, &Section::new(Point::zeros(), r))?;
    let half = (b.hi - b.lo).max() * 0.5;
    Ok(if pot.n == 1 {
        Aabb::interval(-half, half)
    } else {
        Aabb::square(-half, half)
    })
}

/// `|{u > t} ∩ S|`: exact for the piecewise-linear interpolant in 1D,
/// node counting in 2D.
pub fn superlevel_measure(pot: &Potential, u: &GridFunction, s: &Section, t: f64) -> Result<f64> {
    let grid = u.grid;
    if grid.n() == 1 {
        let b = section_box(pot, s)?;
        let (a, c) = (b.lo.x.max(grid.bx.lo.x), b.hi.x.min(grid.bx.hi.x));
        let mut total = 0.0;
        for i in 0..grid.cells {
            let x0 = grid.node(i).x;
            let x1 = x0 + grid.h;
            let (l, r) = (x0.max(a), x1.min(c));
            if r <= l {
                continue;
            }
            let f = |x: f64| u.values[i] + (u.values[i + 1] - u.values[i]) * (x - x0) / grid.h;
            let (fl, fr) = (f(l) - t, f(r) - t);
            total += match (fl > 0.0, fr > 0.0) {
                (true, true) => r - l,
                (false, false) => 0.0,
                (true, false) => (r - l) * fl / (fl - fr),
                (false, true) => (r - l) * fr / (fr - fl),
            };
        }
        Ok(total)
    } else {
        let count = (0..grid.node_count())
            .filter(|&k| u.values[k] > t && s.contains(pot, &grid.node(k)))
            .count();
        Ok(count as f64 * grid.cell_measure())
    }
}

fn nodes_in(pot: &Potential, grid: &Grid, s: &Section) -> Vec<usize> {
    (0..grid.node_count()).filter(|&k| s.contains(pot, &grid.node(k))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TailConfig {
    /// Radius of the section on which `inf u ≤ 1` is required.
    pub r: f64,
    pub rho: f64,
    /// Levels `t = 2^0, …, 2^(levels−1)`.
    pub levels: usize,
    /// Bound on `M⁻u` over `S_{2τ}(z)`.
    pub eps0: f64,
    /// Half-width of the computational box; `None` covers `S_{2τ}(0)`.
    pub half_width: Option<f64>,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            r: 1.0,
            rho: RHO,
            levels: 9,
            eps0: 1e-6,
            half_width: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub trivial: bool,
    pub eps_hat: f64,
    pub c_hat: f64,
    pub fit: Option<LineFit>,
    /// `(t, |{u > t} ∩ S_ρ(z)|)` for every level.
    pub volumes: Vec<(f64, f64)>,
}

/// Power-law decay of superlevel sets of a nonnegative supersolution.
pub fn l_eps_tail(scheme: &Scheme, u: &GridFunction, z: &Point, tau: f64, cfg: &TailConfig) -> Result<TailFit> {
    let pot = scheme.problem.potential;
    let grid = u.grid;
    if u.values.iter().any(|v| *v < 0.0) {
        return Err(Error::Precondition("u must be nonnegative".into()));
    }
    let outer = Section::new(*z, cfg.r);
    let inf = nodes_in(&pot, &grid, &outer)
        .iter()
        .map(|&k| u.values[k])
        .fold(f64::INFINITY, f64::min);
    if !(inf <= 1.0 + 1e-12) {
        return Err(Error::Precondition(format!("inf of u over S_r(z) is {inf} > 1")));
    }
    let big = Section::new(*z, 2.0 * tau);
    let mminus = scheme.operator_values(u, &Equation::ExtremalMinus);
    for (i, &k) in scheme.nodes.iter().enumerate() {
        if big.contains(&pot, &grid.node(k)) && mminus[i] > cfg.eps0 {
            return Err(Error::Precondition(format!("M⁻u = {} exceeds ε₀ = {}", mminus[i], cfg.eps0)));
        }
    }
    let inner = Section::new(*z, cfg.rho);
    let mut volumes = Vec::with_capacity(cfg.levels);
    for l in 0..cfg.levels {
        let t = (l as f64).exp2();
        // round-off above a level does not make it nonempty
        volumes.push((t, superlevel_measure(&pot, u, &inner, t * (1.0 + 1e-9))?));
    }
    let nonempty: Vec<(f64, f64)> = volumes.iter().copied().filter(|(_, v)| *v > 0.0).collect();
    if nonempty.is_empty() {
        return Ok(TailFit {
            trivial: true,
            eps_hat: f64::INFINITY,
            c_hat: 0.0,
            fit: None,
            volumes,
        });
    }
    if nonempty.len() < 4 {
        return Err(Error::InsufficientRange(format!(
            "only {} nonempty superlevel sets",
            nonempty.len()
        )));
    }
    let xs: Vec<f64> = nonempty.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = nonempty.iter().map(|(_, v)| v.ln()).collect();
    let fit = numeric::fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientRange("degenerate fit".into()))?;
    let eps_hat = -fit.slope;
    let vol_r = sections::section_volume(&pot, &outer, 512)?;
    let c_hat = nonempty
        .iter()
        .map(|(t, v)| v * t.powf(eps_hat) / vol_r)
        .fold(0.0, f64::max);
    Ok(TailFit {
        trivial: false,
        eps_hat,
        c_hat,
        fit: Some(fit),
        volumes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub m_hat: f64,
    pub eta_hat: f64,
}

/// `M̂` = the lower decile of `u` over `S_1(z)`, `η̂ = |{u ≤ M̂} ∩ S_1(z)|`.
pub fn lower_level_measure(pot: &Potential, u: &GridFunction, z: &Point) -> Result<MeasureReport> {
    let s = Section::new(*z, 1.0);
    let mut vals: Vec<f64> = nodes_in(pot, &u.grid, &s).iter().map(|&k| u.values[k]).collect();
    if vals.is_empty() {
        return Err(Error::InsufficientRange("no nodes in S_1(z)".into()));
    }
    vals.sort_by(f64::total_cmp);
    let m_hat = vals[vals.len() / 10];
    let count = vals.iter().filter(|v| **v <= m_hat).count();
    Ok(MeasureReport {
        m_hat,
        eta_hat: count as f64 * u.grid.cell_measure(),
    })
}

fn solve_problem(problem: Problem, eq: &Equation) -> Result<(Scheme, GridFunction, f64)> {
    let start = Instant::now();
    let scheme = Scheme::new(problem)?;
    let (u, rep) = solve_with(&scheme, eq, &SolverConfig::default())?;
    if !rep.converged {
        return Err(Error::NoConvergence(format!("no convergence, residual {}", rep.final_residual)));
    }
    Ok((scheme, u, start.elapsed().as_secs_f64()))
}

/// Solves `M⁻u = f` (`f ≤ 0`) at each resolution, normalises
/// `inf_{S_1} u = 1` and fits the tail.
pub fn leps_experiment(
    pot: &Potential,
    spec: &KernelSpec,
    exterior: &ExteriorRule,
    rhs: &RhsRule,
    cells: &[usize],
    cfg: &TailConfig,
) -> Result<ExperimentReport> {
    if !exterior.is_nonnegative() {
        return Err(Error::Precondition("exterior data must be nonnegative".into()));
    }
    // M⁻u = f ≤ 0 keeps u a nonnegative supersolution
    let nonpositive = match *rhs {
        RhsRule::Constant { value } => value <= 0.0,
        RhsRule::Gaussian { amplitude, .. } => amplitude <= 0.0,
        _ => false,
    };
    if !nonpositive || !rhs.is_continuous() {
        return Err(Error::Precondition("the source must be continuous and nonpositive".into()));
    }
    let tau = compute_tau(pot, 100)?.tau;
    let z = Point::zeros();
    let domain = match cfg.half_width {
        Some(a) if pot.n == 1 => Aabb::interval(-a, a),
        Some(a) => Aabb::square(-a, a),
        None => section_domain(pot, 2.0 * tau)?,
    };
    let mut rep = ExperimentReport::new("leps", *pot, *spec);
    rep.trace = Trace::new(&["cells", "t", "volume"]);
    let mut eps = Vec::new();
    for &c in cells {
        let problem = Problem {
            potential: *pot,
            spec: *spec,
            grid: Grid::new(domain, c)?,
            exterior: exterior.clone(),
            rhs: rhs.clone(),
        };
        let (scheme, u, secs) = solve_problem(problem, &Equation::ExtremalMinus)?;
        // boundary nodes carry exterior data; normalise on the solved nodes
        let inf = nodes_in(pot, &u.grid, &Section::new(z, cfg.r))
            .iter()
            .filter(|&&k| u.grid.is_interior(k))
            .map(|&k| u.values[k])
            .fold(f64::INFINITY, f64::min);
        if !(inf > 0.0) {
            return Err(Error::Precondition("solution vanishes on S_r(z)".into()));
        }
        let mut un = u.affine_transform(1.0 / inf, 0.0, Point::zeros());
        for v in &mut un.values {
            *v = v.max(0.0);
        }
        let fit = l_eps_tail(&scheme, &un, &z, tau, cfg)?;
        let lm = lower_level_measure(pot, &un, &z)?;
        for (t, v) in &fit.volumes {
            rep.trace.rows.push(vec![c as f64, *t, *v]);
        }
        let r2 = fit.fit.map_or(1.0, |f| f.r_squared);
        rep.checks.push(Check::at_least(&format!("eps_hat_positive[{c}]"), fit.eps_hat, f64::MIN_POSITIVE));
        rep.checks.push(Check::at_least(&format!("r_squared[{c}]"), r2, MIN_R2));
        rep.checks.push(Check::at_least(&format!("lower_level_measure[{c}]"), lm.eta_hat, f64::MIN_POSITIVE));
        rep.constants.insert(format!("eps_hat[{c}]"), fit.eps_hat);
        rep.constants.insert(format!("c_hat[{c}]"), fit.c_hat);
        rep.constants.insert(format!("m_hat[{c}]"), lm.m_hat);
        rep.constants.insert(format!("eta_hat[{c}]"), lm.eta_hat);
        rep.grids.push(u.grid);
        rep.runtimes.push(secs);
        eps.push(fit.eps_hat);
    }
    rep.constants.insert("tau".into(), tau);
    rep.stability = eps.windows(2).map(|w| drift(w[0], w[1])).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("eps_hat_drift", rep.stability, 0.2));
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnackConfig {
    pub sigmas: Vec<f64>,
    pub cells: Vec<usize>,
    /// Harness cap on the ratio.
    pub cap: f64,
    pub drift_tol: f64,
    /// Slack on the pointwise bounds `M⁻u ≤ C₀`, `M⁺u ≥ −C₀`.
    pub residual_tol: f64,
}

impl Default for HarnackConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![1.5, 1.7, 1.9],
            cells: vec![128, 256],
            cap: 50.0,
            drift_tol: 0.25,
            residual_tol: 1e-6,
        }
    }
}

/// Five nonnegative exterior data placed just outside a box of half-width `half`.
pub fn default_harnack_data(half: f64) -> Vec<ExteriorRule> {
    vec![
        ExteriorRule::Bumps {
            centers: vec![[half + 0.5, 0.0], [-half - 0.5, 0.0]],
            radius: 0.5,
            height: 1.0,
        },
        ExteriorRule::Bumps {
            centers: vec![[half + 1.0, 0.0]],
            radius: 0.5,
            height: 4.0,
        },
        ExteriorRule::Spike {
            center: [half + 0.3, 0.0],
            width: 0.5,
            height: 10.0,
        },
        ExteriorRule::StepRight { at: half, value: 1.0 },
        ExteriorRule::Constant { value: 2.0 },
    ]
}

/// `sup_{S_{ρ/2}(0)} u / (u(0) + C₀)` for `u ≥ 0` solving `M⁻u = 0` on a box
/// covering `S_{2τ}(0)`, across data, σ and resolutions.
pub fn harnack_experiment(pot: &Potential, spec: &KernelSpec, data: &[ExteriorRule], cfg: &HarnackConfig) -> Result<ExperimentReport> {
    if data.is_empty() || cfg.sigmas.is_empty() || cfg.cells.is_empty() {
        return Err(Error::Config("harnack needs data, σ values and resolutions".into()));
    }
    if data.iter().any(|g| !g.is_nonnegative()) {
        return Err(Error::Precondition("exterior data must be nonnegative".into()));
    }
    let tau = compute_tau(pot, 100)?.tau;
    let domain = section_domain(pot, 2.0 * tau)?;
    let origin = Point::zeros();
    let inner = Section::new(origin, RHO / 2.0);
    let big = Section::new(origin, 2.0 * tau);
    let mut rep = ExperimentReport::new("harnack", *pot, *spec);
    rep.trace = Trace::new(&["datum", "sigma", "cells", "u0", "sup_inner", "c0", "ratio"]);
    let mut ratios = vec![vec![vec![0.0; cfg.cells.len()]; cfg.sigmas.len()]; data.len()];
    let mut runtimes = vec![0.0; cfg.cells.len()];
    let mut worst_bound = 0.0f64;
    for (d, g) in data.iter().enumerate() {
        for (s, &sigma) in cfg.sigmas.iter().enumerate() {
            let sp = spec.with_sigma(sigma)?;
            for (c, &cells) in cfg.cells.iter().enumerate() {
                let problem = Problem {
                    potential: *pot,
                    spec: sp,
                    grid: Grid::new(domain, cells)?,
                    exterior: g.clone(),
                    rhs: RhsRule::zero(),
                };
                let (scheme, u, secs) = solve_problem(problem, &Equation::ExtremalMinus)?;
                runtimes[c] += secs;
                let grid = u.grid;
                let c0 = cfg.residual_tol;
                let (lo, hi) = (
                    scheme.operator_values(&u, &Equation::ExtremalMinus),
                    scheme.operator_values(&u, &Equation::ExtremalPlus),
                );
                for (i, &k) in scheme.nodes.iter().enumerate() {
                    if big.contains(pot, &grid.node(k)) {
                        worst_bound = worst_bound.max(lo[i]).max(-hi[i]);
                    }
                }
                let min_u = u.values.iter().copied().fold(f64::INFINITY, f64::min);
                if min_u < -c0 {
                    return Err(Error::Precondition(format!("solution is negative ({min_u})")));
                }
                let centre = grid.nearest(&origin).ok_or_else(|| Error::Config("origin outside the grid".into()))?;
                let sup = nodes_in(pot, &grid, &inner)
                    .iter()
                    .map(|&k| u.values[k])
                    .fold(0.0, f64::max);
                let ratio = sup / (u.values[centre] + c0);
                ratios[d][s][c] = ratio;
                rep.trace
                    .rows
                    .push(vec![d as f64, sigma, cells as f64, u.values[centre], sup, c0, ratio]);
                if d == 0 && s == 0 {
                    rep.grids.push(grid);
                }
            }
        }
    }
    rep.runtimes = runtimes;
    let constant = ratios.iter().flatten().flatten().copied().fold(0.0, f64::max);
    let mut max_drift = 0.0f64;
    let mut blowup = 0.0f64;
    for per_datum in &ratios {
        for per_sigma in per_datum {
            for w in per_sigma.windows(2) {
                max_drift = max_drift.max(drift(w[0], w[1]));
            }
        }
        // growth factor along σ when the finest ratios increase monotonically
        let finest: Vec<f64> = per_datum.iter().map(|r| r[r.len() - 1]).collect();
        if finest.windows(2).all(|w| w[1] > w[0]) && finest.len() > 1 {
            blowup = blowup.max(finest[finest.len() - 1] / finest[0]);
        }
    }
    rep.stability = max_drift;
    rep.constants.insert("tau".into(), tau);
    rep.constants.insert("c_harnack".into(), constant);
    rep.constants.insert("c0".into(), cfg.residual_tol);
    rep.constants.insert("sigma_growth".into(), blowup.max(1.0));
    rep.checks.push(Check::at_most("pointwise_bounds", worst_bound, cfg.residual_tol));
    rep.checks.push(Check::at_most("ratio_cap", constant, cfg.cap));
    rep.checks.push(Check::at_most("resolution_drift", max_drift, cfg.drift_tol));
    // a monotone increase is tolerated while it stays within a factor 2
    rep.checks.push(Check::at_most("sigma_growth", blowup.max(1.0), 2.0));
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub alpha_hat: f64,
    pub fit: LineFit,
    pub alpha_euclidean: f64,
    /// `(r, osc_{S_r(x0)} u)` inside the fit window.
    pub oscillations: Vec<(f64, f64)>,
    /// `sup |u(x) − u(y)| / d(x, y)^α̂` over `S_{ρ/2}(x0)`, quasi-distance `d`.
    pub seminorm_hat: f64,
    pub seminorm_euclidean: f64,
}

/// Radii `ρ/2, ρ/4, …` whose sections span at least [`MIN_CELLS`] cells.
fn fit_radii(pot: &Potential, x0: &Point, h: f64) -> Result<Vec<f64>> {
    let mut radii = Vec::new();
    let mut r = RHO / 2.0;
    for _ in 0..30 {
        let b = section_box(pot, &Section::new(*x0, r))?;
        let width = (b.hi - b.lo).iter().take(pot.n).copied().fold(f64::INFINITY, f64::min);
        if 0.5 * width < MIN_CELLS * h {
            break;
        }
        radii.push(r);
        r *= 0.5;
    }
    Ok(radii)
}

fn oscillation(pot: &Potential, grid: &Grid, values: &dyn Fn(usize) -> f64, s: &Section) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in nodes_in(pot, grid, s) {
        let v = values(k);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Fits `osc_{S_r(x0)} u ≈ A r^α`. Oscillations must not grow as `r` shrinks.
pub fn holder_estimate(pot: &Potential, u: &GridFunction, x0: &Point) -> Result<HolderFit> {
    osc_fit(pot, &u.grid, &|k| u.values[k], x0, true)
}

fn osc_fit(pot: &Potential, grid: &Grid, values: &dyn Fn(usize) -> f64, x0: &Point, seminorms: bool) -> Result<HolderFit> {
    let radii = fit_radii(pot, x0, grid.h)?;
    if radii.len() < 3 {
        return Err(Error::InsufficientRange(format!(
            "only {} radii span {MIN_CELLS} cells; refine the grid",
            radii.len()
        )));
    }
    let outer = Section::new(*x0, radii[0]);
    if !grid.bx.contains(&section_box(pot, &outer)?.lo) || !grid.bx.contains(&section_box(pot, &outer)?.hi) {
        return Err(Error::Precondition("S_{ρ/2}(x0) leaves the grid".into()));
    }
    let osc: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| (r, oscillation(pot, grid, values, &Section::new(*x0, r))))
        .collect();
    for w in osc.windows(2) {
        if w[1].1 > w[0].1 * (1.0 + 1e-9) + 1e-14 {
            return Err(Error::GridArtifact(format!(
                "oscillation grows from {} to {} as r shrinks to {}",
                w[0].1, w[1].1, w[1].0
            )));
        }
    }
    if osc.iter().any(|(_, o)| *o <= 0.0) {
        return Err(Error::InsufficientRange("zero oscillation in the fit window".into()));
    }
    let xs: Vec<f64> = osc.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = osc.iter().map(|(_, o)| o.ln()).collect();
    let fit = numeric::fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientRange("degenerate fit".into()))?;
    // Euclidean radii of the same sections (outer extent along x₁)
    let exs: Vec<f64> = radii
        .iter()
        .map(|&r| section_box(pot, &Section::new(*x0, r)).map(|b| (0.5 * (b.hi.x - b.lo.x)).ln()))
        .collect::<Result<_>>()?;
    let efit = numeric::fit_line(&exs, &ys).ok_or_else(|| Error::InsufficientRange("degenerate fit".into()))?;
    let alpha = fit.slope;
    let (mut semi, mut semi_e) = (0.0f64, 0.0f64);
    if seminorms {
        let mut pts = nodes_in(pot, grid, &outer);
        // pairs are quadratic in the node count; thin large 2D sets
        let stride = (pts.len() / 400).max(1);
        pts = pts.into_iter().step_by(stride).collect();
        for (a, &i) in pts.iter().enumerate() {
            for &j in &pts[a + 1..] {
                let (p, q) = (grid.node(i), grid.node(j));
                let du = (values(i) - values(j)).abs();
                let d = sections::quasi_distance(pot, &p, &q);
                if d > 0.0 {
                    semi = semi.max(du / d.powf(alpha));
                    semi_e = semi_e.max(du / geom::norm(&(p - q), pot.n).powf(efit.slope));
                }
            }
        }
    }
    Ok(HolderFit {
        alpha_hat: alpha,
        fit,
        alpha_euclidean: efit.slope,
        oscillations: osc,
        seminorm_hat: semi,
        seminorm_euclidean: semi_e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HolderConfig {
    pub cells: Vec<usize>,
    pub x0: [f64; 2],
    /// Recorded constant in `seminorm ≤ C (sup|u| + C₀)`.
    pub c_bound: f64,
    pub drift_tol: f64,
}

impl Default for HolderConfig {
    fn default() -> Self {
        Self {
            cells: vec![192, 384],
            x0: [0.0, 0.0],
            c_bound: 20.0,
            drift_tol: 0.2,
        }
    }
}

/// Solves `eq` with the given data at each resolution and fits the Hölder exponent.
pub fn holder_experiment(base: &Problem, eq: &Equation, cfg: &HolderConfig) -> Result<ExperimentReport> {
    let pot = base.potential;
    let x0 = geom::project(geom::point2(cfg.x0[0], cfg.x0[1]), pot.n);
    let c0 = base.rhs.sup_abs();
    let mut rep = ExperimentReport::new("holder", pot, base.spec);
    rep.trace = Trace::new(&["cells", "r", "osc"]);
    let mut alphas = Vec::new();
    for &cells in &cfg.cells {
        let problem = Problem {
            grid: Grid::new(base.grid.bx, cells)?,
            ..base.clone()
        };
        let (_, u, secs) = solve_problem(problem, eq)?;
        let fit = holder_estimate(&pot, &u, &x0)?;
        for (r, o) in &fit.oscillations {
            rep.trace.rows.push(vec![cells as f64, *r, *o]);
        }
        let scale = u.max_abs().max(u.exterior.sup_bound()) + c0;
        let c = fit.seminorm_hat / scale;
        rep.checks.push(Check::at_least(&format!("alpha_positive[{cells}]"), fit.alpha_hat, f64::MIN_POSITIVE));
        rep.checks.push(Check::at_least(&format!("r_squared[{cells}]"), fit.fit.r_squared, MIN_R2));
        rep.checks.push(Check::at_most(&format!("seminorm_bound[{cells}]"), c, cfg.c_bound));
        rep.constants.insert(format!("alpha_hat[{cells}]"), fit.alpha_hat);
        rep.constants.insert(format!("alpha_euclidean[{cells}]"), fit.alpha_euclidean);
        rep.constants.insert(format!("seminorm_hat[{cells}]"), fit.seminorm_hat);
        rep.constants.insert(format!("seminorm_euclidean[{cells}]"), fit.seminorm_euclidean);
        rep.constants.insert(format!("c_ratio[{cells}]"), c);
        rep.grids.push(u.grid);
        rep.runtimes.push(secs);
        alphas.push(fit.alpha_hat);
    }
    rep.constants.insert("c_bound".into(), cfg.c_bound);
    rep.stability = alphas.windows(2).map(|w| drift(w[0], w[1])).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("alpha_drift", rep.stability, cfg.drift_tol));
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub varrho: f64,
    /// `(|h|, coarse, refined)` per shift.
    pub values: Vec<(f64, f64, f64)>,
    pub upsilon_hat: f64,
    /// Largest relative change between the two quadrature levels.
    pub refinement_change: f64,
}

/// `∫_{ℝⁿ∖S_ϱ(0)} |K(y) − K(y − h)| / |h| dy` for each shift, by log-radial
/// polar quadrature at two levels.
pub fn kernel_shift_check(pot: &Potential, spec: &KernelSpec, rule: &KernelRule, varrho: f64, shifts: &[Point]) -> Result<ShiftReport> {
    spec.validate()?;
    if !(varrho > 0.0) {
        return Err(Error::Config("ϱ must be positive".into()));
    }
    let n = pot.n;
    let origin = Point::zeros();
    let inner = sections::boundary_radius(pot, &origin, varrho, &geom::point2(1.0, 0.0))?;
    let (_, mu_hi) = pot.hessian_bounds();
    let euclid_min = varrho * (2.0 / mu_hi).sqrt();
    let kernel = |y: &Point| -> f64 {
        let w = crate::kernels::wbar(pot, &origin, y);
        rule.multiplier(&origin, y) * spec.unit_kernel(w, n)
    };
    let integrate = |hv: &Point, level: usize| -> Result<f64> {
        let hn = geom::norm(hv, n);
        let dirs = if n == 1 { 2 } else { 64 << level };
        let panels = 32 << level;
        let xi_max = 1e4f64.ln();
        let rule_r = numeric::composite_gauss(0.0, xi_max, panels, 4);
        let mut total = 0.0;
        for e in geom::directions(n, dirs, 0.5) {
            let s0 = sections::boundary_radius(pot, &origin, varrho, &e)?;
            let mut line = 0.0;
            for &(xi, w) in &rule_r {
                let s = s0 * xi.exp();
                let y = s * e;
                line += w * s.powi(n as i32) * (kernel(&y) - kernel(&(y - hv))).abs();
            }
            total += line;
        }
        let dtheta = if n == 1 { 1.0 } else { 2.0 * std::f64::consts::PI / dirs as f64 };
        Ok(total * dtheta / hn)
    };
    let mut values = Vec::with_capacity(shifts.len());
    let mut change = 0.0f64;
    for hv in shifts {
        let hn = geom::norm(hv, n);
        if !(hn > 0.0) {
            return Err(Error::Precondition("shifts must be nonzero".into()));
        }
        if hn >= 0.5 * euclid_min {
            return Err(Error::Precondition(format!("|h| = {hn} is not below ϱ/2 = {}", 0.5 * euclid_min)));
        }
        let a = integrate(hv, 0)?;
        let b = integrate(hv, 1)?;
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::ClassViolation(format!("shift integral is not finite for |h| = {hn}")));
        }
        change = change.max(drift(a, b));
        values.push((hn, a, b));
    }
    let _ = inner;
    let upsilon_hat = values.iter().map(|v| v.2).fold(0.0, f64::max);
    Ok(ShiftReport {
        varrho,
        values,
        upsilon_hat,
        refinement_change: change,
    })
}

/// Default shifts: a few lengths below `ϱ/2` along the axes.
pub fn default_shifts(pot: &Potential, varrho: f64) -> Vec<Point> {
    let (_, mu_hi) = pot.hessian_bounds();
    let top = 0.4 * varrho * (2.0 / mu_hi).sqrt();
    let mut out = Vec::new();
    for k in 0..3 {
        let len = top * 0.5f64.powi(k);
        out.push(geom::project(geom::point2(len, 0.0), pot.n));
        if pot.n == 2 {
            out.push(geom::point2(0.0, len));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct C1AlphaConfig {
    pub cells: Vec<usize>,
    pub x0: [f64; 2],
    pub varrho: f64,
    /// The kernel is refused when its shift modulus exceeds this multiple of
    /// the constant-kernel baseline, or when the quadrature is unstable.
    pub shift_factor: f64,
    pub shift_refinement_tol: f64,
    pub c_bound: f64,
    pub drift_tol: f64,
}

impl Default for C1AlphaConfig {
    fn default() -> Self {
        Self {
            cells: vec![192, 384],
            x0: [0.0, 0.0],
            varrho: 0.5,
            shift_factor: 4.0,
            shift_refinement_tol: 0.05,
            c_bound: 50.0,
            drift_tol: 0.25,
        }
    }
}

/// Certifies `rule` by its shift modulus, solves the linear equation with
/// that kernel and fits the oscillation of the discrete gradient.
pub fn c1alpha_experiment(base: &Problem, rule: &KernelRule, cfg: &C1AlphaConfig) -> Result<ExperimentReport> {
    let pot = base.potential;
    let spec = base.spec;
    if !base.rhs.is_continuous() {
        return Err(Error::Precondition("the right-hand side must be smooth".into()));
    }
    let shifts = default_shifts(&pot, cfg.varrho);
    let baseline = kernel_shift_check(&pot, &spec, &KernelRule::midpoint(&spec), cfg.varrho, &shifts)?;
    let shift = kernel_shift_check(&pot, &spec, rule, cfg.varrho, &shifts)?;
    let limit = cfg.shift_factor * baseline.upsilon_hat;
    if shift.upsilon_hat > limit || shift.refinement_change > cfg.shift_refinement_tol {
        return Err(Error::ClassViolation(format!(
            "kernel shift modulus {:.4e} (refinement change {:.2}) against limit {:.4e}",
            shift.upsilon_hat, shift.refinement_change, limit
        )));
    }
    let x0 = geom::project(geom::point2(cfg.x0[0], cfg.x0[1]), pot.n);
    let mut rep = ExperimentReport::new("c1alpha", pot, spec);
    rep.trace = Trace::new(&["cells", "r", "grad_osc"]);
    rep.constants.insert("upsilon_hat".into(), shift.upsilon_hat);
    rep.constants.insert("upsilon_baseline".into(), baseline.upsilon_hat);
    let eq = Equation::Linear { rule: rule.clone() };
    let mut gammas = Vec::new();
    for &cells in &cfg.cells {
        let problem = Problem {
            grid: Grid::new(base.grid.bx, cells)?,
            ..base.clone()
        };
        let (_, u, secs) = solve_problem(problem, &eq)?;
        let grid = u.grid;
        let h = grid.h;
        // central-difference gradient, component-wise oscillation summed
        let grad = |k: usize, axis: usize| -> f64 {
            let (di, dj) = if axis == 0 { (1, 0) } else { (0, 1) };
            (u.at_offset(k, di, dj) - u.at_offset(k, -di, -dj)) / (2.0 * h)
        };
        let mut fits = Vec::new();
        for axis in 0..pot.n {
            fits.push(osc_fit(&pot, &grid, &|k| grad(k, axis), &x0, false)?);
        }
        let best = fits
            .iter()
            .max_by(|a, b| a.oscillations[0].1.total_cmp(&b.oscillations[0].1))
            .expect("at least one axis");
        for (r, o) in &best.oscillations {
            rep.trace.rows.push(vec![cells as f64, *r, *o]);
        }
        let sup = u.max_abs().max(u.exterior.sup_bound()) + base.rhs.sup_abs();
        let (r0, o0) = best.oscillations[0];
        let seminorm = o0 / r0.powf(best.alpha_hat);
        rep.checks.push(Check::at_least(&format!("gamma_positive[{cells}]"), best.alpha_hat, f64::MIN_POSITIVE));
        rep.checks.push(Check::at_least(&format!("r_squared[{cells}]"), best.fit.r_squared, MIN_R2));
        rep.checks.push(Check::at_most(&format!("seminorm_bound[{cells}]"), seminorm / sup, cfg.c_bound));
        rep.constants.insert(format!("gamma_hat[{cells}]"), best.alpha_hat);
        rep.constants.insert(format!("seminorm_hat[{cells}]"), seminorm);
        rep.grids.push(grid);
        rep.runtimes.push(secs);
        gammas.push(best.alpha_hat);
    }
    rep.constants.insert("c_bound".into(), cfg.c_bound);
    rep.stability = gammas.windows(2).map(|w| drift(w[0], w[1])).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("gamma_drift", rep.stability, cfg.drift_tol));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Selection;

    fn spec(sigma: f64) -> KernelSpec {
        KernelSpec::new(1.0, 2.0, sigma, Selection::ExtremalMinus).unwrap()
    }

    #[test]
    fn superlevel_measure_of_a_tent_is_exact() {
        let pot = Potential::isotropic(1);
        let grid = Grid::new(Aabb::interval(-2.0, 2.0), 40).unwrap();
        let u = GridFunction::from_fn(grid, ExteriorRule::zero(), |p| 4.0 * (1.0 - p.x.abs()).max(0.0));
        // S_1(0) = (−√2, √2) contains the whole support; {u > t} = |x| < 1 − t/4
        let s = Section::new(Point::zeros(), 1.0);
        for t in [0.5, 1.0, 2.0, 3.0] {
            let m = superlevel_measure(&pot, &u, &s, t).unwrap();
            assert!((m - 2.0 * (1.0 - t / 4.0)).abs() < 1e-12, "{t}: {m}");
        }
    }

    #[test]
    fn constant_solution_has_trivial_tail() {
        let pot = Potential::isotropic(1);
        let problem = Problem {
            potential: pot,
            spec: spec(1.5),
            grid: Grid::new(section_domain(&pot, 2.0).unwrap(), 32).unwrap(),
            exterior: ExteriorRule::Constant { value: 1.0 },
            rhs: RhsRule::zero(),
        };
        let (scheme, u, _) = solve_problem(problem, &Equation::ExtremalMinus).unwrap();
        let fit = l_eps_tail(&scheme, &u, &Point::zeros(), 1.0, &TailConfig::default()).unwrap();
        assert!(fit.trivial);
    }

    #[test]
    fn harnack_ratio_of_a_constant_is_one() {
        let pot = Potential::isotropic(1);
        let cfg = HarnackConfig {
            sigmas: vec![1.5],
            cells: vec![64],
            residual_tol: 0.0,
            ..HarnackConfig::default()
        };
        let rep = harnack_experiment(&pot, &spec(1.5), &[ExteriorRule::Constant { value: 3.0 }], &cfg).unwrap();
        assert!((rep.constants["c_harnack"] - 1.0).abs() < 1e-9, "{:?}", rep.constants);
    }

    #[test]
    fn harnack_ratio_is_scale_invariant() {
        let pot = Potential::isotropic(1);
        let cfg = HarnackConfig {
            sigmas: vec![1.5],
            cells: vec![64],
            residual_tol: 0.0,
            ..HarnackConfig::default()
        };
        let half = section_domain(&pot, 6.0).unwrap().hi.x;
        let g = |height: f64| ExteriorRule::Bumps {
            centers: vec![[half + 0.5, 0.0]],
            radius: 0.5,
            height,
        };
        let a = harnack_experiment(&pot, &spec(1.5), &[g(1.0)], &cfg).unwrap();
        let b = harnack_experiment(&pot, &spec(1.5), &[g(7.0)], &cfg).unwrap();
        let (ra, rb) = (a.constants["c_harnack"], b.constants["c_harnack"]);
        assert!((ra - rb).abs() < 1e-8 * ra, "{ra} {rb}");
        assert!(ra > 1.0);
    }

    #[test]
    fn holder_of_affine_data_is_lipschitz() {
        let pot = Potential::isotropic(1);
        let grid = Grid::new(Aabb::interval(-1.0, 1.0), 256).unwrap();
        let u = GridFunction::from_fn(grid, ExteriorRule::zero(), |p| 2.0 * p.x + 1.0);
        let fit = holder_estimate(&pot, &u, &Point::zeros()).unwrap();
        assert!(fit.alpha_hat >= 0.95 && fit.alpha_hat <= 1.05, "{fit:?}");
        assert!(fit.fit.r_squared > 0.99);
    }

    #[test]
    fn holder_needs_enough_radii() {
        let pot = Potential::isotropic(1);
        let grid = Grid::new(Aabb::interval(-1.0, 1.0), 16).unwrap();
        let u = GridFunction::from_fn(grid, ExteriorRule::zero(), |p| p.x);
        assert!(matches!(holder_estimate(&pot, &u, &Point::zeros()), Err(Error::InsufficientRange(_))));
    }

    #[test]
    fn shift_modulus_is_stable_for_the_fractional_laplacian() {
        let pot = Potential::isotropic(1);
        let sp = spec(1.5);
        let shifts = default_shifts(&pot, 0.5);
        let rep = kernel_shift_check(&pot, &sp, &KernelRule::midpoint(&sp), 0.5, &shifts).unwrap();
        assert!(rep.refinement_change < 0.05, "{rep:?}");
        assert!(rep.upsilon_hat.is_finite() && rep.upsilon_hat > 0.0);
    }

    #[test]
    fn shift_modulus_closed_form_in_one_dimension() {
        // K = c|y|^{−1−σ} (isotropic, n = 1); for 0 < h < a the integral over
        // |y| ≥ a of |K(y) − K(y − h)| equals c/σ·[a^{−σ} − (a+h)^{−σ} + (a−h)^{−σ} − a^{−σ}]
        let pot = Potential::isotropic(1);
        let sp = spec(1.5);
        let sigma = 1.5;
        let rule = KernelRule::Constant { m: 1.0 };
        let a = 0.5 * 2f64.sqrt();
        let hlen = 0.1;
        let rep = kernel_shift_check(&pot, &sp, &rule, 0.5, &[geom::point1(hlen)]).unwrap();
        let c = sp.unit_kernel(0.5, 1);
        let exact = c / sigma * ((a - hlen).powf(-sigma) - (a + hlen).powf(-sigma)) / hlen;
        assert!((rep.upsilon_hat - exact).abs() < 2e-3 * exact, "{} vs {exact}", rep.upsilon_hat);
    }

    #[test]
    fn zero_shift_is_rejected() {
        let pot = Potential::isotropic(1);
        let sp = spec(1.5);
        let r = kernel_shift_check(&pot, &sp, &KernelRule::midpoint(&sp), 0.5, &[Point::zeros()]);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn rough_kernel_is_refused() {
        let pot = Potential::isotropic(1);
        let sp = spec(1.5);
        let base = Problem {
            potential: pot,
            spec: sp,
            grid: Grid::new(Aabb::interval(-1.0, 1.0), 64).unwrap(),
            exterior: ExteriorRule::zero(),
            rhs: RhsRule::Cosine { amplitude: 1.0, freq: 1.0 },
        };
        let rough = KernelRule::Checkerboard { lo: 1.0, hi: 2.0, cell: 0.02 };
        let r = c1alpha_experiment(&base, &rough, &C1AlphaConfig::default());
        assert!(matches!(r, Err(Error::ClassViolation(_))), "{r:?}");
    }

    #[test]
    fn spike_data_tail_is_positive_and_stable() {
        let pot = Potential::isotropic(1);
        let g = ExteriorRule::Spike {
            center: [1.05, 0.0],
            width: 0.1,
            height: 1.0,
        };
        let rep = leps_experiment(&pot, &spec(1.5), &g, &RhsRule::zero(), &[128, 256], &TailConfig::default()).unwrap();
        assert!(rep.constants["eps_hat[128]"] > 0.0 && rep.constants["eps_hat[256]"] > 0.0);
        assert!(rep.stability < 0.2, "{}", rep.stability);
    }

    #[test]
    fn positive_source_is_rejected_by_the_tail_experiment() {
        let pot = Potential::isotropic(1);
        let r = leps_experiment(
            &pot,
            &spec(1.5),
            &ExteriorRule::zero(),
            &RhsRule::Constant { value: 1.0 },
            &[32],
            &TailConfig::default(),
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    fn scaled(g: &ExteriorRule, k: f64) -> ExteriorRule {
        match g {
            ExteriorRule::Bumps { centers, radius, height } => ExteriorRule::Bumps {
                centers: centers.iter().map(|c| [c[0] * k, c[1] * k]).collect(),
                radius: radius * k,
                height: *height,
            },
            ExteriorRule::Spike { center, width, height } => ExteriorRule::Spike {
                center: [center[0] * k, center[1] * k],
                width: width * k,
                height: *height,
            },
            ExteriorRule::StepRight { at, value } => ExteriorRule::StepRight { at: at * k, value: *value },
            other => other.clone(),
        }
    }

    #[test]
    fn anisotropic_harnack_matches_isotropic_after_pullback() {
        let iso = Potential::isotropic(1);
        let aniso = Potential::from_id("anisotropic", &[25.0], 1).unwrap();
        let cfg = HarnackConfig {
            sigmas: vec![1.5],
            cells: vec![128],
            ..HarnackConfig::default()
        };
        let half = section_domain(&iso, 6.0).unwrap().hi.x;
        let data = default_harnack_data(half);
        let pulled: Vec<ExteriorRule> = data.iter().map(|g| scaled(g, 0.2)).collect();
        let a = harnack_experiment(&iso, &spec(1.5), &data, &cfg).unwrap();
        let b = harnack_experiment(&aniso, &spec(1.5), &pulled, &cfg).unwrap();
        let (ra, rb) = (a.constants["c_harnack"], b.constants["c_harnack"]);
        assert!(ra / rb < 4.0 && rb / ra < 4.0);
        assert!((ra - rb).abs() < 1e-3 * ra, "{ra} {rb}");
    }
}
