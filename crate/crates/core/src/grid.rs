//! Uniform lattices, exterior data and grid functions.

use serde::{Deserialize, Serialize};

use crate::geom::{self, point1, point2, Aabb, Mat, Point};
use crate::{Error, Result};

/// Anything that can be evaluated on ℝⁿ and fed to the nonlocal operators.
pub trait Field: Sync {
    fn dim(&self) -> usize;

    fn value(&self, p: &Point) -> f64;

    /// Declared bound on `sup |u|`, used for tail estimates.
    fn sup_abs(&self) -> f64;

    /// Hessian at `p`. The default is a central finite difference.
    fn hessian(&self, p: &Point) -> Mat {
        fd_hessian(|q| self.value(q), p, self.dim(), 1e-4 * (1.0 + p.norm()))
    }
}

pub fn fd_hessian<F: Fn(&Point) -> f64>(f: F, p: &Point, n: usize, h: f64) -> Mat {
    let e = |k: usize| if k == 0 { point2(h, 0.0) } else { point2(0.0, h) };
    let c = f(p);
    let mut m = Mat::zeros();
    for k in 0..n {
        m[(k, k)] = (f(&(p + e(k))) - 2.0 * c + f(&(p - e(k)))) / (h * h);
    }
    if n == 2 {
        let (a, b) = (e(0), e(1));
        let mixed = (f(&(p + a + b)) - f(&(p + a - b)) - f(&(p - a + b)) + f(&(p - a - b))) / (4.0 * h * h);
        m[(0, 1)] = mixed;
        m[(1, 0)] = mixed;
    }
    m
}

/// Closed-form field wrapper.
pub struct FnField<F> {
    pub n: usize,
    pub sup: f64,
    pub f: F,
}

impl<F: Fn(&Point) -> f64 + Sync> FnField<F> {
    pub fn new(n: usize, sup: f64, f: F) -> Self {
        Self { n, sup, f }
    }
}

impl<F: Fn(&Point) -> f64 + Sync> Field for FnField<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, p: &Point) -> f64 {
        (self.f)(&geom::project(*p, self.n))
    }
    fn sup_abs(&self) -> f64 {
        self.sup
    }
}

/// Data prescribed on the complement of the computational box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ExteriorRule {
    Constant { value: f64 },
    /// `value` where `x₁ ≥ at`, zero elsewhere.
    StepRight { at: f64, value: f64 },
    /// Sum of indicators of the balls `|x − c| < radius`, each with `height`.
    Bumps { centers: Vec<[f64; 2]>, radius: f64, height: f64 },
    /// Tent `height · (1 − |x − c|/width)⁺`.
    Spike { center: [f64; 2], width: f64, height: f64 },
    /// `amplitude · exp(−|x|²/width²)`.
    Gaussian { amplitude: f64, width: f64 },
    /// `Σ cᵢ gᵢ(x) + offset + slope·x`.
    Linear {
        terms: Vec<(f64, ExteriorRule)>,
        offset: f64,
        slope: [f64; 2],
    },
}

impl ExteriorRule {
    pub fn zero() -> Self {
        Self::Constant { value: 0.0 }
    }

    pub fn from_id(id: &str, params: &[f64]) -> Result<Self> {
        let bad = || Error::Config(format!("exterior rule `{id}`: bad parameters {params:?}"));
        Ok(match id {
            "zero" => Self::zero(),
            "constant" => match params {
                [c] => Self::Constant { value: *c },
                _ => return Err(bad()),
            },
            "step_right" => match params {
                [] => Self::StepRight { at: 1.0, value: 1.0 },
                [at] => Self::StepRight { at: *at, value: 1.0 },
                [at, v] => Self::StepRight { at: *at, value: *v },
                _ => return Err(bad()),
            },
            "bumps" => match params {
                // distance, radius, height: symmetric bumps at ±distance along x₁
                [d, r, h] => Self::Bumps {
                    centers: vec![[*d, 0.0], [-*d, 0.0]],
                    radius: *r,
                    height: *h,
                },
                _ => return Err(bad()),
            },
            "bump" => match params {
                [cx, cy, r, h] => Self::Bumps {
                    centers: vec![[*cx, *cy]],
                    radius: *r,
                    height: *h,
                },
                _ => return Err(bad()),
            },
            "spike" => match params {
                [cx, w, h] => Self::Spike {
                    center: [*cx, 0.0],
                    width: *w,
                    height: *h,
                },
                [cx, cy, w, h] => Self::Spike {
                    center: [*cx, *cy],
                    width: *w,
                    height: *h,
                },
                _ => return Err(bad()),
            },
            "gaussian" => match params {
                [a, w] => Self::Gaussian { amplitude: *a, width: *w },
                _ => return Err(bad()),
            },
            other => return Err(Error::Config(format!("unknown exterior rule `{other}`"))),
        })
    }

    pub fn value(&self, p: &Point) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::StepRight { at, value } => {
                if p.x >= *at {
                    *value
                } else {
                    0.0
                }
            }
            Self::Bumps { centers, radius, height } => {
                centers
                    .iter()
                    .filter(|c| (p - point2(c[0], c[1])).norm() < *radius)
                    .count() as f64
                    * height
            }
            Self::Spike { center, width, height } => {
                height * (1.0 - (p - point2(center[0], center[1])).norm() / width).max(0.0)
            }
            Self::Gaussian { amplitude, width } => amplitude * (-p.norm_squared() / (width * width)).exp(),
            Self::Linear { terms, offset, slope } => {
                terms.iter().map(|(c, g)| c * g.value(p)).sum::<f64>() + offset + slope[0] * p.x + slope[1] * p.y
            }
        }
    }

    /// Declared `sup |g|` (the affine part of `Linear` is excluded).
    pub fn sup_bound(&self) -> f64 {
        match self {
            Self::Constant { value } => value.abs(),
            Self::StepRight { value, .. } => value.abs(),
            Self::Bumps { centers, height, .. } => centers.len() as f64 * height.abs(),
            Self::Spike { height, .. } => height.abs(),
            Self::Gaussian { amplitude, .. } => amplitude.abs(),
            Self::Linear { terms, offset, .. } => {
                terms.iter().map(|(c, g)| c.abs() * g.sup_bound()).sum::<f64>() + offset.abs()
            }
        }
    }

    /// Radius beyond which the rule is constant along every ray from the origin.
    pub fn far_radius(&self) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::StepRight { at, .. } => at.abs(),
            Self::Bumps { centers, radius, .. } => {
                centers.iter().map(|c| c[0].hypot(c[1])).fold(0.0, f64::max) + radius
            }
            Self::Spike { center, width, .. } => center[0].hypot(center[1]) + width,
            Self::Gaussian { width, .. } => 8.0 * width,
            Self::Linear { terms, .. } => terms.iter().map(|(_, g)| g.far_radius()).fold(0.0, f64::max),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Self::Constant { value } => *value >= 0.0,
            Self::StepRight { value, .. } => *value >= 0.0,
            Self::Bumps { height, .. } | Self::Spike { height, .. } => *height >= 0.0,
            Self::Gaussian { amplitude, .. } => *amplitude >= 0.0,
            Self::Linear { .. } => false,
        }
    }

    pub fn combine(terms: Vec<(f64, ExteriorRule)>, offset: f64, slope: Point) -> Self {
        Self::Linear {
            terms,
            offset,
            slope: [slope.x, slope.y],
        }
    }
}

/// Uniform lattice of spacing `h` over a box, with `cells` cells per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub bx: Aabb,
    pub cells: usize,
    pub h: f64,
}

impl Grid {
    /// The box must have equal side lengths in 2D.
    pub fn new(bx: Aabb, cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::Config("grid needs at least 2 cells per axis".into()));
        }
        let side = bx.hi.x - bx.lo.x;
        if side <= 0.0 {
            return Err(Error::Config("empty box".into()));
        }
        if bx.n == 2 && ((bx.hi.y - bx.lo.y) - side).abs() > 1e-12 * side {
            return Err(Error::Config("2D boxes must be square".into()));
        }
        Ok(Self {
            bx,
            cells,
            h: side / cells as f64,
        })
    }

    /// Grid on `bx` whose spacing is as close as possible to `h`.
    pub fn with_spacing(bx: Aabb, h: f64) -> Result<Self> {
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::Config(format!("grid spacing must be positive, got {h}")));
        }
        Self::new(bx, ((bx.hi.x - bx.lo.x) / h).round().max(2.0) as usize)
    }

    pub fn n(&self) -> usize {
        self.bx.n
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.cells + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.n() as u32)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.n() == 1 {
            i
        } else {
            i * self.nodes_per_axis() + j
        }
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        if self.n() == 1 {
            (idx, 0)
        } else {
            (idx / self.nodes_per_axis(), idx % self.nodes_per_axis())
        }
    }

    pub fn node(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        let x = self.bx.lo.x + self.h * i as f64;
        if self.n() == 1 {
            point1(x)
        } else {
            point2(x, self.bx.lo.y + self.h * j as f64)
        }
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        let (i, j) = self.coords(idx);
        let ok = |k: usize| k > 0 && k < self.cells;
        ok(i) && (self.n() == 1 || ok(j))
    }

    pub fn interior(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&k| self.is_interior(k)).collect()
    }

    /// Node index of an integer offset from node `idx`, if it stays on the grid.
    pub fn offset(&self, idx: usize, di: i64, dj: i64) -> Option<usize> {
        let (i, j) = self.coords(idx);
        let ii = i as i64 + di;
        let jj = j as i64 + dj;
        let m = self.cells as i64;
        if ii < 0 || ii > m || (self.n() == 2 && (jj < 0 || jj > m)) {
            return None;
        }
        Some(self.index(ii as usize, jj as usize))
    }

    /// Cell measure `hⁿ`.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.n() as i32)
    }

    /// Nearest node to `p`, if `p` lies within the box.
    pub fn nearest(&self, p: &Point) -> Option<usize> {
        if !self.bx.contains(p) {
            return None;
        }
        let i = ((p.x - self.bx.lo.x) / self.h).round() as usize;
        let j = if self.n() == 2 {
            ((p.y - self.bx.lo.y) / self.h).round() as usize
        } else {
            0
        };
        Some(self.index(i.min(self.cells), j.min(self.cells)))
    }
}

/// Values on the lattice nodes of a box plus exterior data on the complement.
/// Boundary nodes carry the exterior data; interpolation is multilinear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub exterior: ExteriorRule,
}

impl GridFunction {
    /// Interior nodes from `f`, boundary nodes from the exterior rule.
    pub fn from_fn<F: Fn(&Point) -> f64>(grid: Grid, exterior: ExteriorRule, f: F) -> Self {
        let values = (0..grid.node_count())
            .map(|k| {
                let p = grid.node(k);
                if grid.is_interior(k) {
                    f(&p)
                } else {
                    exterior.value(&p)
                }
            })
            .collect();
        Self {
            grid,
            values,
            exterior,
        }
    }

    /// A closed-form function sampled on the grid and used verbatim outside.
    pub fn sample_rule(grid: Grid, rule: ExteriorRule) -> Self {
        let r = rule.clone();
        Self::from_fn(grid, rule, move |p| r.value(p))
    }

    pub fn zeros(grid: Grid, exterior: ExteriorRule) -> Self {
        Self::from_fn(grid, exterior, |_| 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.node_count() {
            return Err(Error::Data("value count does not match grid".into()));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at node {k}")));
        }
        Ok(())
    }

    pub fn at_node(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Value at an integer offset of node `idx`, falling back to the
    /// exterior rule off the grid.
    pub fn at_offset(&self, idx: usize, di: i64, dj: i64) -> f64 {
        match self.grid.offset(idx, di, dj) {
            Some(k) => self.values[k],
            None => {
                let p = self.grid.node(idx) + self.grid.h * point2(di as f64, dj as f64);
                self.exterior.value(&geom::project(p, self.grid.n()))
            }
        }
    }

    fn cell_of(&self, p: &Point) -> ([usize; 2], [f64; 2]) {
        let g = &self.grid;
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for k in 0..g.n() {
            let t = ((p[k] - g.bx.lo[k]) / g.h).clamp(0.0, g.cells as f64);
            let i = (t.floor() as usize).min(g.cells - 1);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        (base, frac)
    }

    fn interpolate<F: Fn(usize) -> f64>(&self, p: &Point, node_value: F) -> f64 {
        let (b, t) = self.cell_of(p);
        let g = &self.grid;
        if g.n() == 1 {
            node_value(b[0]) * (1.0 - t[0]) + node_value(b[0] + 1) * t[0]
        } else {
            let v = |i: usize, j: usize| node_value(g.index(i, j));
            v(b[0], b[1]) * (1.0 - t[0]) * (1.0 - t[1])
                + v(b[0] + 1, b[1]) * t[0] * (1.0 - t[1])
                + v(b[0], b[1] + 1) * (1.0 - t[0]) * t[1]
                + v(b[0] + 1, b[1] + 1) * t[0] * t[1]
        }
    }

    /// Central-difference Hessian at a node.
    pub fn node_hessian(&self, idx: usize) -> Mat {
        let h2 = self.grid.h * self.grid.h;
        let c = self.values[idx];
        let mut m = Mat::zeros();
        m[(0, 0)] = (self.at_offset(idx, 1, 0) - 2.0 * c + self.at_offset(idx, -1, 0)) / h2;
        if self.grid.n() == 2 {
            m[(1, 1)] = (self.at_offset(idx, 0, 1) - 2.0 * c + self.at_offset(idx, 0, -1)) / h2;
            let mixed = (self.at_offset(idx, 1, 1) - self.at_offset(idx, 1, -1) - self.at_offset(idx, -1, 1)
                + self.at_offset(idx, -1, -1))
                / (4.0 * h2);
            m[(0, 1)] = mixed;
            m[(1, 0)] = mixed;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Interior maximum of the node Hessian norm, the scale of the
    /// interpolation error `h²/8 · |D²u|`.
    pub fn hessian_scale(&self) -> f64 {
        self.grid
            .interior()
            .iter()
            .map(|&k| self.node_hessian(k).abs().max())
            .fold(0.0, f64::max)
    }

    /// Pointwise linear combination `a·self + b·other` (same grid),
    /// with the matching combination of exterior data.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        if self.grid != other.grid {
            return Err(Error::Data("grid functions live on different grids".into()));
        }
        Ok(GridFunction {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(u, v)| a * u + b * v).collect(),
            exterior: ExteriorRule::combine(
                vec![(a, self.exterior.clone()), (b, other.exterior.clone())],
                0.0,
                Point::zeros(),
            ),
        })
    }

    /// `c·u + offset + slope·x` everywhere, exterior included.
    pub fn affine_transform(&self, c: f64, offset: f64, slope: Point) -> GridFunction {
        let values = (0..self.grid.node_count())
            .map(|k| c * self.values[k] + offset + slope.dot(&self.grid.node(k)))
            .collect();
        GridFunction {
            grid: self.grid,
            values,
            exterior: ExteriorRule::combine(vec![(c, self.exterior.clone())], offset, slope),
        }
    }
}

impl Field for GridFunction {
    fn dim(&self) -> usize {
        self.grid.n()
    }

    fn value(&self, p: &Point) -> f64 {
        if self.grid.bx.contains(p) {
            self.interpolate(p, |k| self.values[k])
        } else {
            self.exterior.value(p)
        }
    }

    fn sup_abs(&self) -> f64 {
        self.max_abs().max(self.exterior.sup_bound())
    }

    /// Node Hessians interpolated multilinearly; exact central differences
    /// when `p` is a node.
    fn hessian(&self, p: &Point) -> Mat {
        if let Some(k) = self.grid.nearest(p) {
            if (self.grid.node(k) - geom::project(*p, self.grid.n())).norm() < 1e-12 * self.grid.h {
                return self.node_hessian(k);
            }
        }
        if !self.grid.bx.contains(p) {
            return fd_hessian(|q| self.exterior.value(q), p, self.grid.n(), 1e-4);
        }
        let mut m = Mat::zeros();
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            m[(a, b)] = self.interpolate(p, |k| self.node_hessian(k)[(a, b)]);
        }
        m
    }
}
