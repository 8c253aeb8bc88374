//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exported, each returning a JSON string:
//! the boundary of a section, a one-dimensional Dirichlet solve, and the
//! extremal operators applied to a tent function along a line.

use nonlocal_ma::geom::{point1, point2, Aabb, Point};
use nonlocal_ma::grid::{ExteriorRule, FnField, Grid};
use nonlocal_ma::kernels::{extremal_pair, KernelSpec, QuadraturePlan, Selection};
use nonlocal_ma::potential::Potential;
use nonlocal_ma::sections::{self, Section};
use nonlocal_ma::solver::{self, Equation, Problem, RhsRule, SolverConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_RAYS: usize = 2048;
const MAX_CELLS: usize = 512;
const MAX_POINTS: usize = 400;

#[derive(Debug, Serialize)]
pub struct Boundary {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub volume: f64,
}

#[derive(Debug, Serialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Serialize)]
pub struct OperatorProfile {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub m_minus: Vec<f64>,
    pub m_plus: Vec<f64>,
}

fn potential(id: &str, param: f64, n: usize) -> nonlocal_ma::Result<Potential> {
    let params: Vec<f64> = match id {
        "isotropic" => vec![],
        "anisotropic" if n == 2 => vec![param, 1.0],
        _ => vec![param],
    };
    Potential::from_id(id, &params, n)
}

fn cap(value: usize, max: usize, what: &str) -> nonlocal_ma::Result<usize> {
    if value < 2 || value > max {
        return Err(nonlocal_ma::Error::Config(format!("{what} must lie in [2, {max}], got {value}")));
    }
    Ok(value)
}

/// Boundary of `S_r(center)` for a 2D catalog potential.
pub fn section_boundary(id: &str, param: f64, cx: f64, cy: f64, r: f64, rays: usize) -> nonlocal_ma::Result<Boundary> {
    let pot = potential(id, param, 2)?;
    let s = Section::new(point2(cx, cy), r);
    let pts = sections::boundary_points(&pot, &s, cap(rays, MAX_RAYS, "rays")?, 0.0)?;
    Ok(Boundary {
        x: pts.iter().map(|p| p.x).collect(),
        y: pts.iter().map(|p| p.y).collect(),
        volume: sections::section_volume(&pot, &s, 256)?,
    })
}

/// Solves `M⁺u = f` or `M⁻u = f` on `[-1, 1]` with `u = step` for `x ≥ 1`
/// and zero for `x ≤ −1`.
#[allow(clippy::too_many_arguments)]
pub fn solve_1d(
    plus: bool,
    lambda: f64,
    cap_lambda: f64,
    sigma: f64,
    cells: usize,
    step: f64,
    rhs: f64,
) -> nonlocal_ma::Result<Solution> {
    let sel = if plus { Selection::ExtremalPlus } else { Selection::ExtremalMinus };
    let problem = Problem {
        potential: Potential::isotropic(1),
        spec: KernelSpec::new(lambda, cap_lambda, sigma, sel)?,
        grid: Grid::new(Aabb::interval(-1.0, 1.0), cap(cells, MAX_CELLS, "cells")?)?,
        exterior: ExteriorRule::StepRight { at: 1.0, value: step },
        rhs: RhsRule::Constant { value: rhs },
    };
    let eq = if plus { Equation::ExtremalPlus } else { Equation::ExtremalMinus };
    let (u, rep) = solver::solve(&problem, &eq, &SolverConfig::default())?;
    Ok(Solution {
        x: (0..u.grid.node_count()).map(|k| u.grid.node(k).x).collect(),
        u: u.values,
        iterations: rep.iterations,
        residual: rep.final_residual,
        converged: rep.converged,
    })
}

/// `M⁻u` and `M⁺u` for the tent `u = (1 − |x|²/w²)⁺` along `[−a, a]`.
pub fn tent_operators(
    id: &str,
    param: f64,
    lambda: f64,
    cap_lambda: f64,
    sigma: f64,
    width: f64,
    points: usize,
) -> nonlocal_ma::Result<OperatorProfile> {
    if !(width > 0.0) {
        return Err(nonlocal_ma::Error::Config(format!("width must be positive, got {width}")));
    }
    let pot = potential(id, param, 1)?;
    let spec = KernelSpec::new(lambda, cap_lambda, sigma, Selection::ExtremalPlus)?;
    let w2 = width * width;
    let u = FnField::new(1, 1.0, move |p: &Point| (1.0 - p.x * p.x / w2).max(0.0));
    let plan = QuadraturePlan::new(0.02 * width, 8.0 * width);
    let count = cap(points, MAX_POINTS, "points")?;
    let reach = 1.5 * width;
    let mut out = OperatorProfile {
        x: Vec::with_capacity(count),
        u: Vec::with_capacity(count),
        m_minus: Vec::with_capacity(count),
        m_plus: Vec::with_capacity(count),
    };
    for k in 0..count {
        let x = -reach + 2.0 * reach * k as f64 / (count - 1) as f64;
        let p = point1(x);
        let (lo, hi) = extremal_pair(&pot, &u, &p, &spec, &plan)?;
        out.x.push(x);
        out.u.push((1.0 - x * x / w2).max(0.0));
        out.m_minus.push(lo);
        out.m_plus.push(hi);
    }
    Ok(out)
}

fn to_js<T: Serialize>(r: nonlocal_ma::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = sectionBoundary)]
pub fn section_boundary_js(id: &str, param: f64, cx: f64, cy: f64, r: f64, rays: usize) -> Result<String, JsError> {
    to_js(section_boundary(id, param, cx, cy, r, rays))
}

#[wasm_bindgen(js_name = solve1d)]
pub fn solve_1d_js(
    plus: bool,
    lambda: f64,
    cap_lambda: f64,
    sigma: f64,
    cells: usize,
    step: f64,
    rhs: f64,
) -> Result<String, JsError> {
    to_js(solve_1d(plus, lambda, cap_lambda, sigma, cells, step, rhs))
}

#[wasm_bindgen(js_name = tentOperators)]
pub fn tent_operators_js(
    id: &str,
    param: f64,
    lambda: f64,
    cap_lambda: f64,
    sigma: f64,
    width: f64,
    points: usize,
) -> Result<String, JsError> {
    to_js(tent_operators(id, param, lambda, cap_lambda, sigma, width, points))
}
