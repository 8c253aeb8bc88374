//! Concave envelopes over sections, contact sets, the constant τ and the
//! ABP pipeline.
//!
//! In one dimension the envelope is the upper hull of the lifted points
//! (monotone chain). In two dimensions it is evaluated node by node as the
//! linear programme `max Σλᵢzᵢ` over convex combinations `Σλᵢpᵢ = x`; the
//! optimal dual is the supporting plane, whose slope is the supergradient.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geom::{self, Point};
use crate::grid::{ExteriorRule, Field, GridFunction};
use crate::potential::Potential;
use crate::sections::{self, LatticeMask, Section};
use crate::solver::{Equation, RhsRule, Scheme};
use crate::{numeric, Error, Result};

/// Rays used to sample the boundary of `S_τ(0)` in two dimensions.
const TAU_BOUNDARY_RAYS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub tau: f64,
    pub gamma_hat: f64,
    /// `max √v_0(2x − w)` over sampled `x, w ∈ S_1(0)`.
    pub needed: f64,
    pub samples: usize,
}

/// Smallest τ (bisection over `[γ̂, 64γ̂]`) such that `x + y ∉ S_τ(0)`
/// forces `x − y ∉ S_1(0)` for sampled `x ∈ S_1(0)`. Writing `w = x − y`
/// this asks `2x − w ∈ S_τ(0)` for all sampled `x, w ∈ S_1(0)`.
pub fn compute_tau(pot: &Potential, samples: usize) -> Result<TauReport> {
    if samples < 2 {
        return Err(Error::Config("compute_tau needs at least 2 samples".into()));
    }
    let origin = Point::zeros();
    let gamma_hat = sections::engulfing_probe(pot, &origin, 1.0, samples.min(64))?;
    let pts = sections::interior_samples(pot, &Section::new(origin, 1.0), samples)?;
    let mut needed2 = 0.0f64;
    for x in &pts {
        for w in &pts {
            needed2 = needed2.max(pot.height(&origin, &(2.0 * x - w)));
        }
    }
    let passes = |t: f64| needed2 < t * t;
    let hi = 64.0 * gamma_hat;
    if !passes(hi) {
        return Err(Error::Pathology(format!(
            "no τ ≤ {hi} separates the sampled reflections (need {})",
            needed2.sqrt()
        )));
    }
    let tau = if passes(gamma_hat) {
        gamma_hat
    } else {
        numeric::threshold(passes, gamma_hat, hi, 1e-4 * gamma_hat)
    };
    Ok(TauReport {
        tau,
        gamma_hat,
        needed: needed2.sqrt(),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub tau: f64,
    /// Γ on the grid nodes, zero outside `S_τ(0)`.
    pub gamma: GridFunction,
    pub in_tau: Vec<bool>,
    /// Nodes of `S_1(0)` where `u = Γ` within the local tolerance.
    pub contact: Vec<bool>,
    /// ∇Γ at nodes of `S_τ(0)`.
    pub supergradients: Vec<Option<Point>>,
    /// Contact tolerance per node, `(h²/4)|D²_h u|`.
    pub tolerances: Vec<f64>,
}

impl EnvelopeResult {
    pub fn contact_points(&self) -> Vec<usize> {
        (0..self.contact.len()).filter(|&k| self.contact[k]).collect()
    }
}

/// Upper hull of points sorted by abscissa (monotone chain).
fn upper_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        if hull.last().is_some_and(|l| l.0 == p.0) {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Value and slope of a 1D upper hull at `x` (average of one-sided slopes at vertices).
fn hull_eval(hull: &[(f64, f64)], x: f64) -> Option<(f64, f64)> {
    if hull.len() < 2 || x < hull[0].0 || x > hull[hull.len() - 1].0 {
        return None;
    }
    let slope = |i: usize| (hull[i + 1].1 - hull[i].1) / (hull[i + 1].0 - hull[i].0);
    let i = hull.partition_point(|p| p.0 <= x).clamp(1, hull.len() - 1) - 1;
    let s = slope(i);
    let value = hull[i].1 + s * (x - hull[i].0);
    let g = if x == hull[i].0 && i > 0 { 0.5 * (s + slope(i - 1)) } else { s };
    Some((value, g))
}

/// `max Σλᵢzᵢ` subject to `Σλᵢpᵢ = x, Σλᵢ = 1, λ ≥ 0` by a two-phase
/// tableau simplex with Bland's rule. Coordinates must be nonnegative.
/// Returns the optimal plane `(a, b)` with `Γ(x) = a + b·x`.
fn lp_plane(points: &[(Point, f64)], x: &Point) -> Option<(f64, Point)> {
    const EPS: f64 = 1e-12;
    let n = points.len();
    let cols = n + 3;
    let col = |j: usize| -> [f64; 3] {
        if j < n {
            [points[j].0.x, points[j].0.y, 1.0]
        } else {
            let mut e = [0.0; 3];
            e[j - n] = 1.0;
            e
        }
    };
    let mut t = vec![[0.0f64; 3]; cols];
    for (j, c) in t.iter_mut().enumerate() {
        *c = col(j);
    }
    let mut rhs = [x.x, x.y, 1.0];
    let mut basis = [n, n + 1, n + 2];
    let run = |t: &mut Vec<[f64; 3]>, rhs: &mut [f64; 3], basis: &mut [usize; 3], cost: &dyn Fn(usize) -> f64, allow: &dyn Fn(usize) -> bool| {
        for _ in 0..10_000 {
            let cb = [cost(basis[0]), cost(basis[1]), cost(basis[2])];
            let entering = (0..cols).find(|&j| {
                allow(j) && !basis.contains(&j) && cost(j) - (0..3).map(|r| cb[r] * t[j][r]).sum::<f64>() > EPS
            });
            let Some(e) = entering else { return true };
            let mut leave: Option<(f64, usize)> = None;
            for r in 0..3 {
                if t[e][r] > EPS {
                    let ratio = rhs[r] / t[e][r];
                    let better = match leave {
                        None => true,
                        Some((best, br)) => ratio < best - EPS || (ratio <= best + EPS && basis[r] < basis[br]),
                    };
                    if better {
                        leave = Some((ratio, r));
                    }
                }
            }
            let Some((_, r)) = leave else { return false };
            let piv = t[e][r];
            let prow: Vec<f64> = (0..cols).map(|j| t[j][r] / piv).collect();
            let prhs = rhs[r] / piv;
            for q in 0..3 {
                if q == r {
                    continue;
                }
                let f = t[e][q];
                if f != 0.0 {
                    for j in 0..cols {
                        t[j][q] -= f * prow[j];
                    }
                    rhs[q] -= f * prhs;
                }
            }
            for j in 0..cols {
                t[j][r] = prow[j];
            }
            rhs[r] = prhs;
            basis[r] = e;
        }
        false
    };
    let phase1 = |j: usize| if j >= n { -1.0 } else { 0.0 };
    if !run(&mut t, &mut rhs, &mut basis, &phase1, &|_| true) {
        return None;
    }
    let infeasible: f64 = (0..3).filter(|&r| basis[r] >= n).map(|r| rhs[r]).sum();
    if infeasible > 1e-9 {
        return None;
    }
    let phase2 = |j: usize| if j < n { points[j].1 } else { 0.0 };
    if !run(&mut t, &mut rhs, &mut basis, &phase2, &|j| j < n) {
        return None;
    }
    let b = Matrix3::from_fn(|r, c| col(basis[c])[r]);
    let cb = nalgebra::Vector3::new(phase2(basis[0]), phase2(basis[1]), phase2(basis[2]));
    let y = b.transpose().try_inverse()? * cb;
    Some((y[2], geom::point2(y[0], y[1])))
}

/// Concave envelope of `u⁺` over `S_τ(0)`, contact set in `S_1(0)` and
/// supergradients. Requires `u ≤ 0` outside `S_1(0)` on the lattice.
pub fn concave_envelope(pot: &Potential, u: &GridFunction, tau: f64) -> Result<EnvelopeResult> {
    u.validate()?;
    let grid = u.grid;
    let n = grid.n();
    if pot.n != n {
        return Err(Error::Config("potential and grid dimensions differ".into()));
    }
    let origin = Point::zeros();
    let big = Section::new(origin, tau);
    let unit = Section::new(origin, 1.0);
    let nodes = grid.node_count();
    for k in 0..nodes {
        let p = grid.node(k);
        if !unit.contains(pot, &p) && u.values[k] > 0.0 {
            return Err(Error::Precondition(format!("u > 0 outside S_1 at ({}, {})", p.x, p.y)));
        }
    }
    // lattice points of S_τ beyond the box carry exterior data
    let (lo, hi) = sections::bounding_box(pot, &big, grid.h)?;
    let mask = LatticeMask::from_fn(grid, |_| false);
    let mut lifted: Vec<(Point, f64)> = Vec::new();
    for k in 0..nodes {
        let p = grid.node(k);
        if big.contains(pot, &p) && u.values[k] > 0.0 {
            lifted.push((p, u.values[k]));
        }
    }
    for p in extended_lattice(&mask, &lo, &hi) {
        if grid.bx.contains(&p) || !big.contains(pot, &p) {
            continue;
        }
        let g = u.exterior.value(&p);
        if g > 0.0 {
            if !unit.contains(pot, &p) {
                return Err(Error::Precondition(format!("exterior data > 0 outside S_1 at ({}, {})", p.x, p.y)));
            }
            lifted.push((p, g));
        }
    }
    let rim: Vec<Point> = if n == 1 {
        let r = sections::boundary_radius(pot, &origin, tau, &geom::point1(1.0))?;
        let l = sections::boundary_radius(pot, &origin, tau, &geom::point1(-1.0))?;
        vec![geom::point1(r), geom::point1(-l)]
    } else {
        sections::boundary_points(pot, &big, TAU_BOUNDARY_RAYS, 0.0)?
    };
    lifted.extend(rim.iter().map(|p| (*p, 0.0)));

    let in_tau: Vec<bool> = (0..nodes).map(|k| big.contains(pot, &grid.node(k))).collect();
    let mut gamma = vec![0.0; nodes];
    let mut grads = vec![None; nodes];
    if n == 1 {
        let hull = upper_hull(lifted.iter().map(|(p, z)| (p.x, *z)).collect());
        for k in 0..nodes {
            if in_tau[k] {
                if let Some((v, s)) = hull_eval(&hull, grid.node(k).x) {
                    gamma[k] = v.max(0.0);
                    grads[k] = Some(geom::point1(s));
                }
            }
        }
    } else {
        let shift = lo - Point::repeat(1.0);
        let shifted: Vec<(Point, f64)> = lifted.iter().map(|(p, z)| (p - shift, *z)).collect();
        let vals = crate::par::map_range(nodes, |k| {
            if !in_tau[k] {
                return None;
            }
            let x = grid.node(k) - shift;
            lp_plane(&shifted, &x).map(|(a, b)| (a + b.dot(&x), b))
        });
        for (k, v) in vals.into_iter().enumerate() {
            if let Some((val, b)) = v {
                gamma[k] = val.max(0.0);
                grads[k] = Some(b);
            }
        }
    }
    let sup = u.max_abs().max(1e-300);
    let tolerances: Vec<f64> = (0..nodes)
        .map(|k| {
            let hs = u.node_hessian(k).abs().max();
            0.25 * grid.h * grid.h * hs + 1e-12 * sup
        })
        .collect();
    let contact = (0..nodes)
        .map(|k| unit.contains(pot, &grid.node(k)) && u.values[k] >= 0.0 && gamma[k] - u.values[k] <= tolerances[k])
        .collect();
    Ok(EnvelopeResult {
        tau,
        gamma: GridFunction {
            grid,
            values: gamma,
            exterior: ExteriorRule::zero(),
        },
        in_tau,
        contact,
        supergradients: grads,
        tolerances,
    })
}

/// Lattice points (aligned with the mask grid) covering `[lo, hi]`.
fn extended_lattice(mask: &LatticeMask, lo: &Point, hi: &Point) -> Vec<Point> {
    let g = &mask.grid;
    let h = g.h;
    let n = g.n();
    let range = |k: usize| {
        let a = ((lo[k] - g.bx.lo[k]) / h).floor() as i64;
        let b = ((hi[k] - g.bx.lo[k]) / h).ceil() as i64;
        (a, b)
    };
    let (i0, i1) = range(0);
    let (j0, j1) = if n == 2 { range(1) } else { (0, 0) };
    let mut out = Vec::new();
    for i in i0..=i1 {
        for j in j0..=j1 {
            let p = g.bx.lo + h * geom::point2(i as f64, j as f64);
            out.push(geom::project(p, n));
        }
    }
    out
}

/// Default bound on the detached shell fraction in [`detachment_check`].
pub const DETACHMENT_EPS0: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetachmentReport {
    pub point: [f64; 2],
    pub r: f64,
    pub h: f64,
    /// Lattice fraction of `S_r \ S_{r/2}` where Γ lies more than `h`
    /// below its tangent plane at the point.
    pub shell_fraction: f64,
    pub hypothesis: bool,
    /// `min (Γ − tangent + h)` over lattice nodes of `S_{r/2}`.
    pub inner_margin: f64,
    /// The conclusion holds, or the hypothesis fails and nothing is claimed.
    pub holds: bool,
}

/// If Γ detaches from its tangent plane at node `k` by more than `h` on at
/// most an `eps0` fraction of the shell `S_r \ S_{r/2}`, it stays within `h`
/// of that plane on all of `S_{r/2}`.
pub fn detachment_check(pot: &Potential, env: &EnvelopeResult, k: usize, r: f64, h: f64, eps0: f64) -> Result<DetachmentReport> {
    if !(r > 0.0 && h > 0.0 && eps0 > 0.0) {
        return Err(Error::Config(format!("need r, h, eps0 > 0, got {r}, {h}, {eps0}")));
    }
    let grid = env.gamma.grid;
    let slope = env
        .supergradients
        .get(k)
        .copied()
        .flatten()
        .ok_or_else(|| Error::Precondition(format!("node {k} has no supergradient")))?;
    let x = grid.node(k);
    let g = &env.gamma.values;
    let tangent = |y: &Point| g[k] + slope.dot(&(y - x));
    let (outer, inner) = (Section::new(x, r), Section::new(x, 0.5 * r));
    let (mut shell, mut detached) = (0usize, 0usize);
    let mut margin = f64::INFINITY;
    for j in (0..grid.node_count()).filter(|&j| env.in_tau[j]) {
        let y = grid.node(j);
        if !outer.contains(pot, &y) {
            continue;
        }
        let gap = g[j] - tangent(&y) + h;
        if inner.contains(pot, &y) {
            margin = margin.min(gap);
        } else {
            shell += 1;
            if gap < 0.0 {
                detached += 1;
            }
        }
    }
    if shell == 0 || !margin.is_finite() {
        return Err(Error::RefinementNeeded(format!("no lattice nodes in the shell or inner section at r = {r}")));
    }
    let shell_fraction = detached as f64 / shell as f64;
    let hypothesis = shell_fraction <= eps0;
    let tol = 1e-9 * (1.0 + env.gamma.max_abs());
    Ok(DetachmentReport {
        point: [x.x, x.y],
        r,
        h,
        shell_fraction,
        hypothesis,
        inner_margin: margin,
        holds: !hypothesis || margin >= -tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingEntry {
    pub point: [f64; 2],
    pub f: f64,
    /// First ring index meeting the inequality with the reported constant.
    pub k_min: usize,
    pub radius: f64,
    /// `|W_k| / |R_k|` for `k = 0..=K`.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingReport {
    pub m: f64,
    pub levels: usize,
    pub c0_hat: f64,
    pub entries: Vec<RingEntry>,
}

/// For every contact point `x` and ring `R_k(x) = S_{r_k}(x) \ S_{r_{k+1}}(x)`
/// with `r_K ≥ 4h`, counts lattice points of the ring and of
/// `W_k = {y ∈ R_k : u(y) < u(x) + ∇Γ(x)·(y−x) − M r_k²}`.
pub fn ring_estimate_check(scheme: &Scheme, u: &GridFunction, f: &RhsRule, env: &EnvelopeResult, m: f64) -> Result<RingReport> {
    if !(m > 0.0) {
        return Err(Error::Config("M must be positive".into()));
    }
    let pot = scheme.problem.potential;
    let sigma = scheme.problem.spec.sigma;
    let grid = u.grid;
    let h = grid.h;
    let contacts = env.contact_points();
    if contacts.is_empty() {
        return Err(Error::Precondition("contact set is empty".into()));
    }
    let r0 = (-1.0 / (2.0 - sigma)).exp2();
    // Euclidean inner radius of S_r is at least r√(2/μmax)
    let (_, mu_hi) = pot.hessian_bounds();
    let span = r0 * (2.0 / mu_hi).sqrt();
    if span < 4.0 * h {
        return Err(Error::RefinementNeeded(format!("first ring spans {span:.3e}, below 4h = {:.3e}", 4.0 * h)));
    }
    let levels = ((span / (4.0 * h)).log2().floor() as usize).min(30);
    // discrete M⁺u ≥ −f at interior contact points
    let mplus = scheme.operator_values(u, &Equation::ExtremalPlus);
    for (i, &k) in scheme.nodes.iter().enumerate() {
        if env.contact[k] {
            let fx = f.value(&grid.node(k));
            let tol = 1e-6 * (1.0 + fx.abs());
            if mplus[i] < -fx - tol {
                return Err(Error::Precondition(format!("M⁺u = {} < −f = {} at node {k}", mplus[i], -fx)));
            }
        }
    }
    let mask = LatticeMask::from_fn(grid, |_| false);
    let rows = crate::par::map_collect(&contacts, |&k| -> Result<(f64, Vec<f64>)> {
        let x = grid.node(k);
        let ux = u.values[k];
        let g = env.supergradients[k].unwrap_or_else(Point::zeros);
        let (lo, hi) = sections::bounding_box(&pot, &Section::new(x, r0), h)?;
        let lattice = extended_lattice(&mask, &lo, &hi);
        let mut ratios = Vec::with_capacity(levels + 1);
        for lev in 0..=levels {
            let rk = r0 * 0.5f64.powi(lev as i32);
            let (outer, inner) = (rk * rk, 0.25 * rk * rk);
            let (mut ring, mut w) = (0usize, 0usize);
            for y in &lattice {
                let v = pot.height(&x, y);
                if v < outer && v >= inner {
                    ring += 1;
                    if u.value(y) < ux + g.dot(&(y - x)) - m * rk * rk {
                        w += 1;
                    }
                }
            }
            ratios.push(if ring == 0 { f64::NAN } else { w as f64 / ring as f64 });
        }
        Ok((f.value(&x), ratios))
    });
    let mut c0_hat = 0.0f64;
    let mut tmp = Vec::with_capacity(rows.len());
    for (row, &k) in rows.into_iter().zip(&contacts) {
        let (fx, ratios) = row?;
        let best = ratios.iter().copied().filter(|r| r.is_finite()).fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(Error::RefinementNeeded(format!("no ring at node {k} contains lattice points")));
        }
        let cx = if best == 0.0 {
            0.0
        } else if fx > 0.0 {
            m * best / fx
        } else {
            f64::INFINITY
        };
        c0_hat = c0_hat.max(cx);
        tmp.push((k, fx, ratios));
    }
    let entries = tmp
        .into_iter()
        .map(|(k, fx, ratios)| {
            let bound = if fx > 0.0 { c0_hat * fx / m } else { 0.0 };
            let k_min = ratios
                .iter()
                .position(|r| r.is_finite() && *r <= bound * (1.0 + 1e-12))
                .unwrap_or(0);
            let p = grid.node(k);
            RingEntry {
                point: [p.x, p.y],
                f: fx,
                k_min,
                radius: r0 * 0.5f64.powi(k_min as i32),
                ratios,
            }
        })
        .collect();
    Ok(RingReport {
        m,
        levels,
        c0_hat,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbpReport {
    pub trivial: bool,
    pub tau: f64,
    pub sup_u: f64,
    pub f_sup: f64,
    pub contact_count: usize,
    pub selected: usize,
    pub union_measure: f64,
    pub c_hat: f64,
    pub c0_hat: f64,
    pub overlap_max: usize,
    /// `|∇Γ(S_{r/4}(x))| / (f(x)ⁿ |S_{r/4}(x)|)` per selected section.
    pub gradient_ratios: Vec<f64>,
    /// Quadratic detachment at every contact point, at its ring radius
    /// with `h = M f(x) r²`.
    pub detachment: Vec<DetachmentReport>,
    /// Contact points with their ring data; written separately as a table.
    #[serde(skip)]
    pub contacts: Vec<RingEntry>,
}

/// Envelope → contact set → ring check → Besicovitch subcover → measure of
/// the union, reporting `C = (sup u)ⁿ / |⋃ S_r(x)|`. `eps0` is the shell
/// fraction allowed by the detachment check.
pub fn abp_experiment(
    scheme: &Scheme,
    u: &GridFunction,
    f: &RhsRule,
    m: f64,
    tau_samples: usize,
    eps0: f64,
) -> Result<AbpReport> {
    let pot = scheme.problem.potential;
    let n = pot.n;
    let grid = u.grid;
    let tau = compute_tau(&pot, tau_samples)?.tau;
    let sup_u = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let f_sup = f.sup_abs();
    let env = concave_envelope(&pot, u, tau)?;
    if sup_u <= 0.0 {
        return Ok(AbpReport {
            trivial: true,
            tau,
            sup_u: 0.0,
            f_sup,
            contact_count: env.contact_points().len(),
            selected: 0,
            union_measure: 0.0,
            c_hat: 0.0,
            c0_hat: 0.0,
            overlap_max: 0,
            gradient_ratios: vec![],
            detachment: vec![],
            contacts: vec![],
        });
    }
    let ring = ring_estimate_check(scheme, u, f, &env, m)?;
    let points: Vec<Point> = ring.entries.iter().map(|e| geom::project(geom::point2(e.point[0], e.point[1]), n)).collect();
    let radii: Vec<f64> = ring.entries.iter().map(|e| e.radius).collect();
    let test: Vec<Point> = (0..grid.node_count()).map(|k| grid.node(k)).collect();
    let cover = sections::besicovitch_cover(&pot, &points, &radii, 0.1, &test)?;
    let mask = LatticeMask::from_fn(grid, |_| false);
    let union_measure = mask.union_measure(&pot, &cover.selected)?;
    let mut gradient_ratios = Vec::with_capacity(cover.selected.len());
    for s in &cover.selected {
        let small = s.scaled(0.25);
        let grads: Vec<Point> = (0..grid.node_count())
            .filter(|&k| small.contains(&pot, &grid.node(k)))
            .filter_map(|k| env.supergradients[k])
            .collect();
        if grads.is_empty() {
            continue;
        }
        let (mut glo, mut ghi) = (grads[0], grads[0]);
        for g in &grads {
            glo = glo.inf(g);
            ghi = ghi.sup(g);
        }
        let ext = ghi - glo;
        let image = if n == 1 { ext.x } else { ext.x * ext.y };
        let vol = sections::section_volume(&pot, &small, 256)?;
        let fx = f.value(&s.center).abs().max(1e-300);
        gradient_ratios.push(image / (fx.powi(n as i32) * vol));
    }
    let mut detachment = Vec::with_capacity(ring.entries.len());
    for (e, p) in ring.entries.iter().zip(&points) {
        let k = grid
            .nearest(p)
            .ok_or_else(|| Error::Data(format!("contact point ({}, {}) left the grid", p.x, p.y)))?;
        let h = (m * e.f.abs() * e.radius * e.radius).max(f64::MIN_POSITIVE);
        detachment.push(detachment_check(&pot, &env, k, e.radius, h, eps0)?);
    }
    Ok(AbpReport {
        trivial: false,
        tau,
        sup_u,
        f_sup,
        contact_count: env.contact_points().len(),
        selected: cover.selected.len(),
        union_measure,
        c_hat: sup_u.powi(n as i32) / union_measure,
        c0_hat: ring.c0_hat,
        overlap_max: cover.overlap_max,
        gradient_ratios,
        detachment,
        contacts: ring.entries,
    })
}
