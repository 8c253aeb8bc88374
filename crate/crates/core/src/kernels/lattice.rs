//! Monotone lattice discretisation of the operators, used by the solver.
//!
//! The operator at a node becomes `Σ_v W_v · m_v · δ(u, x, v h)` over
//! half-space offsets `v`, plus a handful of tail rays. Each weight is
//! `(2−σ)∫ K̄(y) |y|²/|vh|² dy` over the cells `±v`, i.e. the second
//! difference is assumed to scale quadratically inside a cell. All weights
//! are positive, so the scheme is monotone.

use serde::{Deserialize, Serialize};

use super::{KernelSpec, Operator};
use crate::geom::{self, Mat, Point};
use crate::grid::GridFunction;
use crate::numeric;
use crate::potential::Potential;
use crate::{Error, Result};

/// Half-width of the inner square, in cells.
const INNER_HALF: f64 = 1.5;
const SECTOR_NODES: usize = 64;
const TAIL_DIRECTIONS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeStencil {
    pub n: usize,
    pub h: f64,
    /// Half-space cell offsets with their weights.
    pub offsets: Vec<([i64; 2], f64)>,
    /// Tail increments `R e` (half the circle) with their weights.
    pub tail: Vec<(Point, f64)>,
    pub tail_radius: f64,
}

fn sector_weight(h_mat: &Mat, sigma: f64, h: f64, centre: f64, width: f64, v_len: f64) -> f64 {
    // ∫ (½eᵀHe)^{−(2+σ)/2} R(θ)^{2−σ} dθ over the sector and its mirror
    let dt = width / SECTOR_NODES as f64;
    let mut acc = 0.0;
    for k in 0..SECTOR_NODES {
        let t = centre - 0.5 * width + (k as f64 + 0.5) * dt;
        let e = geom::point2(t.cos(), t.sin());
        let q = 0.5 * geom::quad_form(h_mat, &e, 2);
        let r = INNER_HALF * h / t.cos().abs().max(t.sin().abs());
        acc += q.powf(-0.5 * (2.0 + sigma)) * r.powf(2.0 - sigma) * dt;
    }
    2.0 * acc / (v_len * h).powi(2)
}

impl LatticeStencil {
    /// Stencil at base point `x` for spacing `h`; cells extend to `reach`,
    /// beyond which the tail is handled along rays with the quadratic part
    /// of the potential.
    pub fn build(pot: &Potential, x: &Point, sigma: f64, h: f64, reach: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 2.0) {
            return Err(Error::Spec(format!("sigma must lie in (0, 2), got {sigma}")));
        }
        if !(h > 0.0 && reach > 2.0 * INNER_HALF * h) {
            return Err(Error::Config(format!("lattice reach {reach} too small for spacing {h}")));
        }
        let n = pot.n;
        let x = geom::project(*x, n);
        let hess = pot.hessian(&x);
        let cells = (reach / h).ceil() as i64;
        let tail_radius = (cells as f64 + 0.5) * h;
        let exponent = -0.5 * (n as f64 + sigma);
        let mut offsets = Vec::new();
        let cell_integral = |v: [i64; 2], order: usize| -> f64 {
            let vy = h * geom::point2(v[0] as f64, v[1] as f64);
            let v2 = vy.norm_squared();
            let rule = numeric::gauss_rule(order);
            let (nodes, weights) = (&rule.0, &rule.1);
            let mut acc = 0.0;
            let pts: Vec<(f64, f64)> = nodes
                .iter()
                .zip(weights)
                .map(|(t, w)| (0.5 * h * t, 0.5 * h * w))
                .collect();
            if n == 1 {
                for &(a, wa) in &pts {
                    let y = geom::point1(vy.x + a);
                    acc += wa * pot.sym_height(&x, &y).powf(exponent) * y.norm_squared();
                }
            } else {
                for &(a, wa) in &pts {
                    for &(b, wb) in &pts {
                        let y = vy + geom::point2(a, b);
                        acc += wa * wb * pot.sym_height(&x, &y).powf(exponent) * y.norm_squared();
                    }
                }
            }
            // both cells ±v, by the symmetry of w̄
            2.0 * (2.0 - sigma) * acc / v2
        };

        if n == 1 {
            let w1 = 2.0 * (0.5 * hess[(0, 0)]).powf(-0.5 * (1.0 + sigma)) * (INNER_HALF * h).powf(2.0 - sigma) / (h * h);
            offsets.push(([1, 0], w1));
            for v in 2..=cells {
                offsets.push(([v, 0], cell_integral([v, 0], 4)));
            }
        } else {
            let quarter = std::f64::consts::FRAC_PI_4;
            for (v, angle) in [([1, 0], 0.0), ([1, 1], quarter), ([0, 1], 2.0 * quarter), ([1, -1], -quarter)] {
                let len = ((v[0] * v[0] + v[1] * v[1]) as f64).sqrt();
                offsets.push((v, sector_weight(&hess, sigma, h, angle, quarter, len)));
            }
            let limit2 = (tail_radius / h).powi(2);
            for i in 0..=cells {
                for j in -cells..=cells {
                    if i == 0 && j <= 0 {
                        continue;
                    }
                    let inf = i.abs().max(j.abs());
                    if inf < 2 || ((i * i + j * j) as f64) > limit2 {
                        continue;
                    }
                    let order = if inf < 4 { 3 } else { 1 };
                    offsets.push(([i, j], cell_integral([i, j], order)));
                }
            }
        }

        let a = pot.quadratic_part();
        let radial = 2.0 * (2.0 - sigma) * tail_radius.powf(-sigma) / sigma;
        let tail = if n == 1 {
            vec![(geom::point1(tail_radius), radial * (0.5 * a[(0, 0)]).powf(exponent))]
        } else {
            let dt = std::f64::consts::TAU / TAIL_DIRECTIONS as f64;
            (0..TAIL_DIRECTIONS / 2)
                .map(|k| {
                    let t = (k as f64 + 0.5) * dt;
                    let e = geom::point2(t.cos(), t.sin());
                    let q = 0.5 * geom::quad_form(&a, &e, 2);
                    (tail_radius * e, radial * q.powf(exponent) * dt)
                })
                .collect()
        };
        Ok(Self {
            n,
            h,
            offsets,
            tail,
            tail_radius,
        })
    }

    /// Second differences of `u` at node `idx`, offsets first, then tail rays.
    pub fn deltas(&self, u: &GridFunction, idx: usize) -> Vec<f64> {
        let c = u.at_node(idx);
        let x = u.grid.node(idx);
        let mut out = Vec::with_capacity(self.offsets.len() + self.tail.len());
        for (v, _) in &self.offsets {
            out.push(u.at_offset(idx, v[0], v[1]) + u.at_offset(idx, -v[0], -v[1]) - 2.0 * c);
        }
        for (y, _) in &self.tail {
            let p = geom::project(x + y, self.n);
            let q = geom::project(x - y, self.n);
            out.push(u.exterior.value(&p) + u.exterior.value(&q) - 2.0 * c);
        }
        out
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.offsets.iter().map(|(_, w)| *w).chain(self.tail.iter().map(|(_, w)| *w))
    }

    /// Applies `op` to precomputed second differences. Linear rules use the
    /// multiplier at the cell centre.
    pub fn apply(&self, x: &Point, deltas: &[f64], spec: &KernelSpec, op: &Operator) -> f64 {
        let incs = self
            .offsets
            .iter()
            .map(|(v, _)| self.h * geom::point2(v[0] as f64, v[1] as f64))
            .chain(self.tail.iter().map(|(y, _)| *y));
        incs.zip(self.weights())
            .zip(deltas)
            .map(|((y, w), d)| w * op.apply(spec, x, &geom::project(y, self.n), *d))
            .sum()
    }

    /// `Σ W`, the diagonal mass per unit multiplier (each δ carries `−2u(x)`).
    pub fn mass(&self) -> f64 {
        self.weights().sum()
    }
}
