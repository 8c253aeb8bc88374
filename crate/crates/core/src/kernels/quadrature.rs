//! Pointwise singular quadrature: a semi-analytic inner region, dyadic
//! rings and a mapped tail.
//!
//! Increments are written as `y = L z` with `L = √2 · D²φ(x)^{−1/2}`, so that
//! the quadratic model of the height is `½yᵀD²φ(x)y = |z|²`. The inner
//! region is `|z| < ρ₀`, the rings are the shells between consecutive levels
//! `r_k = 2^{−1/(2−σ)−k}`, and the tail `|z| > Z_t` is mapped to a finite
//! interval by `s = Z_t τ^{−1/σ}`.

use serde::{Deserialize, Serialize};

use super::{KernelRule, KernelSpec, Operator};
use crate::geom::{self, Mat, Point};
use crate::grid::{Field, Grid};
use crate::numeric;
use crate::potential::Potential;
use crate::{Error, Result};

/// Angular nodes used for the inner region in two dimensions.
const INNER_ANGLES: usize = 512;
/// Cap on angular × radial refinement in two dimensions.
const MAX_NODES_2D: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePlan {
    /// Euclidean radius that the inner region must contain; the model
    /// height radius ρ₀ is derived from it at each base point.
    pub inner_radius: f64,
    /// Initial Gauss nodes per ring per dimension.
    pub ring_nodes: usize,
    /// Euclidean radius where the tail starts.
    pub tail_radius: f64,
    pub adaptive: bool,
    /// Two successive refinements of a ring must agree to this relative
    /// tolerance.
    pub rel_tol: f64,
    pub max_nodes: usize,
}

impl QuadraturePlan {
    pub fn new(inner_radius: f64, tail_radius: f64) -> Self {
        Self {
            inner_radius,
            ring_nodes: 64,
            tail_radius,
            adaptive: true,
            rel_tol: 1e-4,
            max_nodes: 1024,
        }
    }

    /// Inner radius of two cells, tail at the box diameter.
    pub fn for_grid(grid: &Grid) -> Self {
        Self::new(2.0 * grid.h, grid.bx.diameter())
    }

    pub fn fixed(mut self, ring_nodes: usize) -> Self {
        self.adaptive = false;
        self.ring_nodes = ring_nodes;
        self
    }

    /// Levels `r_k = 2^{−1/(2−σ)−k}`, `k ∈ ℤ`, lying strictly inside
    /// `(lo, hi)`, in decreasing order. Computed in the exponent so that
    /// σ close to 2 does not underflow.
    pub fn ring_radii(sigma: f64, lo: f64, hi: f64) -> Vec<f64> {
        let e0 = -1.0 / (2.0 - sigma);
        let k_lo = (e0 - hi.log2()).floor() as i64;
        let k_hi = (e0 - lo.log2()).ceil() as i64;
        (k_lo..=k_hi)
            .map(|k| (e0 - k as f64).exp2())
            .filter(|r| *r > lo && *r < hi)
            .collect()
    }
}

/// Quadrature nodes and weights for the operators at one base point.
/// Weights already contain `(2−σ) w̄^{−(n+σ)/2}`, the Jacobian and the
/// doubling from `y ↔ −y` symmetry; only the multiplier is left to apply.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStencil {
    pub x: Point,
    pub n: usize,
    pub rho0: f64,
    pub ring_radii: Vec<f64>,
    /// Inner-region directions `e = Lθ` with their weights.
    pub inner: Vec<(Point, f64)>,
    /// Ring and tail increments with their weights.
    pub nodes: Vec<(Point, f64)>,
    /// `(2−σ)∫_tail w̄^{−(n+σ)/2}`, for the a-priori tail bound.
    pub tail_mass: f64,
}

struct Frame {
    l: Mat,
    det_l: f64,
}

fn shell_nodes(
    pot: &Potential,
    x: &Point,
    frame: &Frame,
    sigma: f64,
    n: usize,
    radial: &[(f64, f64)],
    angular: usize,
) -> Vec<(Point, f64)> {
    let exponent = -0.5 * (n as f64 + sigma);
    let dirs: Vec<(Point, f64)> = if n == 1 {
        vec![(geom::point1(1.0), 2.0)]
    } else {
        let dt = std::f64::consts::PI / angular as f64;
        (0..angular)
            .map(|k| {
                let t = (k as f64 + 0.5) * dt;
                (geom::point2(t.cos(), t.sin()), 2.0 * dt)
            })
            .collect()
    };
    let mut out = Vec::with_capacity(radial.len() * dirs.len());
    for &(s, ws) in radial {
        let jac = frame.det_l * s.powi(n as i32 - 1) * ws;
        for (theta, wt) in &dirs {
            let y = geom::project(frame.l * (s * theta), n);
            let wb = pot.sym_height(x, &y);
            out.push((y, (2.0 - sigma) * wb.powf(exponent) * jac * wt));
        }
    }
    out
}

fn tail_radial(zt: f64, sigma: f64, m: usize) -> Vec<(f64, f64)> {
    numeric::gauss_on(0.0, 1.0, m)
        .into_iter()
        .map(|(t, w)| {
            let s = zt * t.powf(-1.0 / sigma);
            (s, w * zt / sigma * t.powf(-1.0 / sigma - 1.0))
        })
        .collect()
}

impl PointStencil {
    /// Builds the stencil at `x`; with an adaptive plan each ring is refined
    /// by doubling until `∫δK` and `∫|δ|K` over it settle, using `u` as the
    /// probe.
    pub fn build<F: Field + ?Sized>(pot: &Potential, u: &F, x: &Point, sigma: f64, plan: &QuadraturePlan) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 2.0) {
            return Err(Error::Spec(format!("sigma must lie in (0, 2), got {sigma}")));
        }
        if !(plan.inner_radius > 0.0 && plan.tail_radius > plan.inner_radius) {
            return Err(Error::Config("quadrature plan needs 0 < inner_radius < tail_radius".into()));
        }
        let n = pot.n;
        let x = geom::project(*x, n);
        let h = pot.hessian(&x);
        let ev = geom::sym_eigenvalues(&h, n);
        let mu_max = ev[ev.len() - 1];
        let l = geom::spd_power(&h, n, -0.5) * 2f64.sqrt();
        let l = geom::project_mat(l, n);
        let frame = Frame {
            det_l: geom::det(&l, n).abs(),
            l,
        };
        let rho0 = plan.inner_radius * (0.5 * mu_max).sqrt();
        let zt = plan.tail_radius * (0.5 * mu_max).sqrt();

        let inner = if n == 1 {
            let w = frame.det_l * rho0.powf(2.0 - sigma);
            vec![(geom::point1(frame.l[(0, 0)]), w), (geom::point1(-frame.l[(0, 0)]), w)]
        } else {
            let dt = std::f64::consts::TAU / INNER_ANGLES as f64;
            let w = frame.det_l * rho0.powf(2.0 - sigma) * dt;
            (0..INNER_ANGLES)
                .map(|k| {
                    let t = (k as f64 + 0.5) * dt;
                    (frame.l * geom::point2(t.cos(), t.sin()), w)
                })
                .collect()
        };

        let ring_radii = QuadraturePlan::ring_radii(sigma, rho0, zt);
        let mut edges = vec![rho0];
        edges.extend(ring_radii.iter().rev());
        edges.push(zt);

        let cap = if n == 1 { plan.max_nodes } else { plan.max_nodes.min(MAX_NODES_2D) };
        let ux = u.value(&x);
        let make = |shell: Option<(f64, f64)>, m: usize| -> Vec<(Point, f64)> {
            let radial = match shell {
                Some((a, b)) => numeric::gauss_on(a, b, m),
                None => tail_radial(zt, sigma, m),
            };
            shell_nodes(pot, &x, &frame, sigma, n, &radial, m)
        };
        let probe = |nodes: &[(Point, f64)]| -> (f64, f64, f64) {
            let mut signed = 0.0;
            let mut abs = 0.0;
            let mut mass = 0.0;
            for (y, w) in nodes {
                let d = u.value(&(x + y)) + u.value(&(x - y)) - 2.0 * ux;
                signed += w * d;
                abs += w * d.abs();
                mass += w;
            }
            (signed, abs, mass)
        };

        let mut shells: Vec<Option<(f64, f64)>> = edges.windows(2).map(|w| Some((w[0], w[1]))).collect();
        shells.push(None);
        let mut nodes = Vec::new();
        let mut tail_mass = 0.0;
        for shell in shells {
            let mut m = plan.ring_nodes.max(2);
            let mut current = make(shell, m);
            if plan.adaptive {
                let mut prev = probe(&current);
                while 2 * m <= cap {
                    let finer = make(shell, 2 * m);
                    let next = probe(&finer);
                    current = finer;
                    m *= 2;
                    let floor = 1e-14 * next.2 * (ux.abs() + u.sup_abs() + 1e-300);
                    let settled = (next.0 - prev.0).abs() <= plan.rel_tol * next.1 + floor
                        && (next.1 - prev.1).abs() <= plan.rel_tol * next.1 + floor;
                    prev = next;
                    if settled {
                        break;
                    }
                }
            }
            if shell.is_none() {
                tail_mass = current.iter().map(|(_, w)| w).sum();
            }
            nodes.extend(current);
        }
        Ok(Self {
            x,
            n,
            rho0,
            ring_radii,
            inner,
            nodes,
            tail_mass,
        })
    }

    /// Applies `op` to `u` on the stored nodes. Inside the inner region δ is
    /// replaced by the quadratic model whose curvature along `e` is the
    /// difference quotient `δ(u, x, ρ₀e)/ρ₀²`.
    pub fn apply<F: Field + ?Sized>(&self, u: &F, spec: &KernelSpec, op: &Operator) -> Result<f64> {
        let x = &self.x;
        let ux = u.value(x);
        let mut inner = 0.0;
        for (e, w) in &self.inner {
            let y = self.rho0 * e;
            let model = (u.value(&(x + y)) + u.value(&(x - y)) - 2.0 * ux) / (self.rho0 * self.rho0);
            inner += w * op.apply(spec, x, &y, model);
        }
        let mut outer = 0.0;
        for (y, w) in &self.nodes {
            let d = u.value(&(x + y)) + u.value(&(x - y)) - 2.0 * ux;
            outer += w * op.apply(spec, x, y, d);
        }
        let total = inner + outer;
        if !total.is_finite() {
            return Err(Error::Data(format!("non-finite operator value at ({}, {})", x.x, x.y)));
        }
        Ok(total)
    }

    /// Checks the multiplier of `rule` at every node against `[λ, Λ]`.
    pub fn check_rule(&self, spec: &KernelSpec, rule: &KernelRule) -> Result<()> {
        for (e, _) in &self.inner {
            rule.check(spec, &self.x, &(self.rho0 * e))?;
        }
        for (y, _) in &self.nodes {
            rule.check(spec, &self.x, y)?;
            rule.check(spec, &self.x, &-y)?;
        }
        Ok(())
    }

    /// A-priori bound `4 sup|u| Λ (2−σ)∫_tail w̄^{−(n+σ)/2}` on the tail.
    pub fn tail_bound(&self, sup_u: f64, spec: &KernelSpec) -> f64 {
        4.0 * sup_u * spec.cap_lambda * self.tail_mass
    }

    pub fn node_count(&self) -> usize {
        self.inner.len() + self.nodes.len()
    }
}
