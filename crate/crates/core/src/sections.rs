//! Geometry of Monge-Ampère sections `S_r(x) = {y : v_x(y) < r²}`:
//! membership, boundary, ellipsoid normalisation, engulfing, deformation
//! estimates and the two covering constructions.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geom::{self, Mat, Point};
use crate::grid::Grid;
use crate::numeric;
use crate::potential::Potential;
use crate::{Error, Result};

/// Boundary search gives up beyond this multiple of `r`.
pub const BRACKET_LIMIT: f64 = 1e6;
/// Relative tolerance of boundary bisection.
pub const BOUNDARY_TOL: f64 = 1e-10;
/// Engulfing probes search γ in `[1, ENGULF_MAX]`.
pub const ENGULF_MAX: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub center: Point,
    pub r: f64,
}

impl Section {
    pub fn new(center: Point, r: f64) -> Self {
        Self { center, r }
    }

    pub fn contains(&self, pot: &Potential, y: &Point) -> bool {
        contains(pot, self, y)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.center, self.r * factor)
    }
}

pub fn contains(pot: &Potential, s: &Section, y: &Point) -> bool {
    pot.height(&s.center, y) < s.r * s.r
}

/// Section quasi-distance `d(x, y) = inf{r : y ∈ S_r(x)} = √v_x(y)`.
pub fn quasi_distance(pot: &Potential, x: &Point, y: &Point) -> f64 {
    pot.height(x, y).sqrt()
}

/// `t* > 0` with `v_x(x + t*·d) = r²`.
pub fn boundary_radius(pot: &Potential, x: &Point, r: f64, direction: &Point) -> Result<f64> {
    boundary_from(pot, &Section::new(*x, r), x, direction)
}

/// Distance from an interior point `base` to `∂S` along `direction`.
pub fn boundary_from(pot: &Potential, s: &Section, base: &Point, direction: &Point) -> Result<f64> {
    let n = pot.n;
    if !(s.r > 0.0 && (s.r * s.r).is_finite()) {
        return Err(Error::Precondition(format!("section height must be positive and finite, got {}", s.r)));
    }
    let len = geom::norm(direction, n);
    if len == 0.0 || !len.is_finite() {
        return Err(Error::Precondition("direction must be nonzero".into()));
    }
    let d = geom::project(*direction, n) / len;
    let r2 = s.r * s.r;
    let f = |t: f64| pot.height(&s.center, &(base + t * d)) - r2;
    if f(0.0) >= 0.0 {
        return Err(Error::Precondition("ray base lies outside the section".into()));
    }
    let (_, mu_hi) = pot.hessian_bounds();
    let mut hi = s.r * (2.0 / mu_hi).sqrt() * 0.5;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > BRACKET_LIMIT * s.r {
            return Err(Error::UnboundedSection {
                center: s.center,
                r: s.r,
                direction: d,
            });
        }
    }
    numeric::bisect(f, 0.0, hi, BOUNDARY_TOL)
}

/// Boundary points of `S` along `rays` directions from its center.
pub fn boundary_points(pot: &Potential, s: &Section, rays: usize, phase: f64) -> Result<Vec<Point>> {
    geom::directions(pot.n, rays, phase)
        .iter()
        .map(|d| boundary_radius(pot, &s.center, s.r, d).map(|t| s.center + t * d))
        .collect()
}

/// Volume by the polar formula `(1/n) ∮ ρ(θ)ⁿ dθ` about the center.
pub fn section_volume(pot: &Potential, s: &Section, rays: usize) -> Result<f64> {
    let n = pot.n;
    let dirs = geom::directions(n, rays, 0.0);
    let mut acc = 0.0;
    for d in &dirs {
        acc += boundary_radius(pot, &s.center, s.r, d)?.powi(n as i32);
    }
    Ok(if n == 1 {
        acc
    } else {
        0.5 * acc * std::f64::consts::TAU / dirs.len() as f64
    })
}

/// Axis-aligned bounding box of a section, padded by `pad`.
pub fn bounding_box(pot: &Potential, s: &Section, pad: f64) -> Result<(Point, Point)> {
    let pts = boundary_points(pot, s, 64, 0.0)?;
    let mut lo = s.center;
    let mut hi = s.center;
    for p in &pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let w = (hi - lo) * 0.05;
    let padv = Point::new(pad, pad);
    Ok((
        geom::project(lo - w - padv, pot.n),
        geom::project(hi + w + padv, pot.n),
    ))
}

/// Invertible affine map `p ↦ linear·p + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: Mat,
    pub offset: Point,
    pub n: usize,
}

impl AffineMap {
    pub fn new(linear: Mat, offset: Point, n: usize) -> Result<Self> {
        let m = Self {
            linear: geom::project_mat(linear, n),
            offset: geom::project(offset, n),
            n,
        };
        if m.det().abs() <= 1e-300 || !m.det().is_finite() {
            return Err(Error::Geometry("affine map is not invertible".into()));
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            linear: geom::project_mat(Mat::identity(), n),
            offset: Point::zeros(),
            n,
        }
    }

    pub fn apply(&self, p: &Point) -> Point {
        geom::project(self.linear * geom::project(*p, self.n) + self.offset, self.n)
    }

    pub fn det(&self) -> f64 {
        geom::det(&self.linear, self.n)
    }

    pub fn inverse(&self) -> Self {
        let li = if self.n == 1 {
            Mat::new(1.0 / self.linear[(0, 0)], 0.0, 0.0, 0.0)
        } else {
            self.linear.try_inverse().expect("checked invertible")
        };
        Self {
            linear: li,
            offset: geom::project(-(li * self.offset), self.n),
            n: self.n,
        }
    }

    /// Operator norm of the linear part.
    pub fn norm(&self) -> f64 {
        if self.n == 1 {
            self.linear[(0, 0)].abs()
        } else {
            self.linear.singular_values().max()
        }
    }
}

/// Minimum-volume enclosing ellipsoid `{y : (y − c)ᵀ A (y − c) ≤ 1}` by
/// Khachiyan's barycentric coordinate ascent with Todd-Yıldırım away
/// steps; stops once `max_j q_jᵀX⁻¹q_j ≤ (n+1)(1 + tol)`.
pub fn mvee(points: &[Point], n: usize, tol: f64) -> Result<(Point, Mat)> {
    let m = points.len();
    if m < n + 1 {
        return Err(Error::Geometry(format!("{m} points cannot span dimension {n}")));
    }
    let d = n as f64;
    let lift = |p: &Point| if n == 1 { Vector3::new(p.x, 1.0, 0.0) } else { Vector3::new(p.x, p.y, 1.0) };
    let q: Vec<Vector3<f64>> = points.iter().map(lift).collect();
    let mut u = vec![1.0 / m as f64; m];
    for _ in 0..1_000_000 {
        let mut x = Matrix3::<f64>::zeros();
        for (qj, uj) in q.iter().zip(&u) {
            x += *uj * qj * qj.transpose();
        }
        if n == 1 {
            x[(2, 2)] = 1.0;
        }
        let xi = x
            .try_inverse()
            .ok_or_else(|| Error::Geometry("degenerate point set (rank < n)".into()))?;
        let (mut jmax, mut mmax) = (0, f64::NEG_INFINITY);
        let (mut jmin, mut mmin) = (0, f64::INFINITY);
        for (j, qj) in q.iter().enumerate() {
            let mj = qj.dot(&(xi * qj));
            if mj > mmax {
                mmax = mj;
                jmax = j;
            }
            if u[j] > 0.0 && mj < mmin {
                mmin = mj;
                jmin = j;
            }
        }
        if mmax <= (d + 1.0) * (1.0 + tol) {
            break;
        }
        let (j, step) = if mmax - (d + 1.0) >= (d + 1.0) - mmin {
            (jmax, (mmax - d - 1.0) / ((d + 1.0) * (mmax - 1.0)))
        } else {
            let away = (mmin - d - 1.0) / ((d + 1.0) * (mmin - 1.0));
            (jmin, away.max(-u[jmin] / (1.0 - u[jmin])))
        };
        for v in u.iter_mut() {
            *v *= 1.0 - step;
        }
        u[j] = (u[j] + step).max(0.0);
    }
    let mut c = Point::zeros();
    for (j, p) in points.iter().enumerate() {
        c += u[j] * p;
    }
    let mut s = Mat::zeros();
    for (j, p) in points.iter().enumerate() {
        s += u[j] * (p * p.transpose());
    }
    s -= c * c.transpose();
    let s = geom::project_mat(s, n);
    let a = if n == 1 {
        if s[(0, 0)] <= 0.0 {
            return Err(Error::Geometry("degenerate point set (rank < n)".into()));
        }
        Mat::new(1.0 / (d * s[(0, 0)]), 0.0, 0.0, 0.0)
    } else {
        if s.determinant().abs() < 1e-300 {
            return Err(Error::Geometry("degenerate point set (rank < n)".into()));
        }
        s.try_inverse()
            .ok_or_else(|| Error::Geometry("degenerate point set (rank < n)".into()))?
            / d
    };
    Ok((geom::project(c, n), a))
}

/// A normalisation of a section with its verified ball sandwich
/// `B_inner ⊆ T(S) ⊆ B_outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub map: AffineMap,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

/// Fits the minimum-volume ellipsoid of `ray_count` boundary points and
/// returns the affine map sending it to the unit ball. The sandwich is then
/// re-measured on fresh rays from the ellipsoid center; if any fresh point
/// pokes out of `B_1` the map is shrunk so that `outer_radius ≤ 1`.
pub fn fit_ellipsoid(pot: &Potential, x: &Point, r: f64, ray_count: usize) -> Result<Normalization> {
    let n = pot.n;
    if ray_count < 2 * n + 2 {
        return Err(Error::Precondition(format!("ray_count must be ≥ {}", 2 * n + 2)));
    }
    let s = Section::new(*x, r);
    let pts = if n == 1 {
        boundary_points(pot, &s, 2, 0.0)?
    } else {
        boundary_points(pot, &s, ray_count, 0.0)?
    };
    let (c, a) = mvee(&pts, n, 1e-6)?;
    let root = geom::spd_power(&a, n, 0.5);
    let mut map = AffineMap::new(root, -(root * c), n)?;

    let fresh_rays = 4 * ray_count;
    let mut radii: Vec<f64> = pts.iter().map(|p| geom::norm(&map.apply(p), n)).collect();
    for d in geom::directions(n, fresh_rays, 0.37) {
        let t = boundary_from(pot, &s, &c, &d)?;
        radii.push(geom::norm(&map.apply(&(c + t * d)), n));
    }
    let mut inner = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let mut outer = radii.iter().copied().fold(0.0, f64::max);
    if outer > 1.0 {
        map.linear /= outer;
        map.offset /= outer;
        inner /= outer;
        outer = 1.0;
    }
    Ok(Normalization {
        map,
        inner_radius: inner,
        outer_radius: outer,
    })
}

/// Deterministic interior samples of a section: area-uniform radial
/// fractions on a golden-angle spiral.
pub fn interior_samples(pot: &Potential, s: &Section, count: usize) -> Result<Vec<Point>> {
    let golden = 0.618_033_988_749_894_9;
    let mut out = Vec::with_capacity(count + 1);
    out.push(s.center);
    for i in 0..count {
        let frac = if pot.n == 1 {
            ((i as f64 + 0.5) / count as f64).min(0.999)
        } else {
            ((i as f64 + 0.5) / count as f64).sqrt().min(0.999)
        };
        let d = if pot.n == 1 {
            geom::point1(if i % 2 == 0 { 1.0 } else { -1.0 })
        } else {
            let t = std::f64::consts::TAU * ((i as f64 * golden) % 1.0);
            geom::point2(t.cos(), t.sin())
        };
        let t = boundary_radius(pot, &s.center, s.r, &d)?;
        out.push(s.center + frac * t * d);
    }
    Ok(out)
}

/// Empirical engulfing constant of `S_r(x)`: the smallest γ ∈ [1, 64]
/// (bisection to 1e-3) with `∂S_r(x) ⊂ S_{γr}(y)` for every sampled `y ∈ S_r(x)`.
pub fn engulfing_probe(pot: &Potential, x: &Point, r: f64, trial_count: usize) -> Result<f64> {
    if trial_count == 0 {
        return Err(Error::Precondition("trial_count must be at least 1".into()));
    }
    let s = Section::new(*x, r);
    let ys = interior_samples(pot, &s, trial_count)?;
    let zs = boundary_points(pot, &s, 64, 0.5)?;
    let worst = ys
        .iter()
        .flat_map(|y| zs.iter().map(move |z| (y, z)))
        .map(|(y, z)| pot.height(y, z))
        .fold(0.0, f64::max);
    let holds = |g: f64| worst < (g * r) * (g * r);
    if !holds(ENGULF_MAX) {
        return Err(Error::EngulfingFailure {
            center: *x,
            r,
            limit: ENGULF_MAX,
        });
    }
    Ok(numeric::threshold(holds, 1.0, ENGULF_MAX, 1e-3))
}

/// Result of a covering construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub selected: Vec<Section>,
    /// Lattice density `|A ∩ S_k| / |S_k|` per section (covering by
    /// densities only).
    pub densities: Vec<f64>,
    /// Maximum pointwise overlap count on the test lattice.
    pub overlap_max: usize,
    /// `overlap_max / ln(1/ε)` for Besicovitch covers.
    pub overlap_constant: f64,
    /// `|A| / |⋃ S_k|` on the lattice.
    pub measure_ratio: f64,
    pub covers_input: bool,
}

fn lex_order(points: &[Point]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
    });
    idx
}

/// Greedy Besicovitch-type selection: scan `points` lexicographically and
/// pick every point not contained in a previously selected section. The
/// overlap of the shrunk family `S_{(1−ε)r_k}(x_k)` is counted on
/// `test_lattice`.
pub fn besicovitch_cover(
    pot: &Potential,
    points: &[Point],
    radii: &[f64],
    epsilon: f64,
    test_lattice: &[Point],
) -> Result<CoverReport> {
    if points.len() != radii.len() {
        return Err(Error::Precondition("one radius per point is required".into()));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Precondition(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Precondition("radii must be positive and finite".into()));
    }
    let mut selected: Vec<Section> = Vec::new();
    for i in lex_order(points) {
        let p = &points[i];
        if !selected.iter().any(|s| s.contains(pot, p)) {
            selected.push(Section::new(*p, radii[i]));
        }
    }
    let covers_input = points.iter().all(|p| selected.iter().any(|s| s.contains(pot, p)));
    let shrunk: Vec<Section> = selected.iter().map(|s| s.scaled(1.0 - epsilon)).collect();
    let counts: Vec<usize> = test_lattice
        .iter()
        .map(|q| shrunk.iter().filter(|s| s.contains(pot, q)).count())
        .collect();
    let overlap_max = counts.iter().copied().max().unwrap_or(0);
    let covered = counts.iter().filter(|&&c| c > 0).count();
    let total: usize = counts.iter().sum();
    Ok(CoverReport {
        densities: vec![],
        overlap_max,
        overlap_constant: overlap_max as f64 / (1.0 / epsilon).ln(),
        measure_ratio: if covered == 0 { 0.0 } else { total as f64 / covered as f64 },
        covers_input,
        selected,
    })
}

/// A set given as a boolean mask on the nodes of a grid. Each node stands
/// for a cell of measure `hⁿ`; the lattice continues past the grid with the
/// mask false there.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMask {
    pub grid: Grid,
    pub inside: Vec<bool>,
}

impl LatticeMask {
    pub fn from_fn<F: Fn(&Point) -> bool>(grid: Grid, f: F) -> Self {
        let inside = (0..grid.node_count()).map(|k| f(&grid.node(k))).collect();
        Self { grid, inside }
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.inside.len())
            .filter(|&k| self.inside[k])
            .map(|k| self.grid.node(k))
            .collect()
    }

    pub fn measure(&self) -> f64 {
        self.inside.iter().filter(|b| **b).count() as f64 * self.grid.cell_measure()
    }

    fn lattice_index(&self, i: i64, j: i64) -> Option<usize> {
        let m = self.grid.cells as i64;
        if i < 0 || i > m || (self.grid.n() == 2 && (j < 0 || j > m)) {
            None
        } else {
            Some(self.grid.index(i as usize, j as usize))
        }
    }

    fn is_inside(&self, i: i64, j: i64) -> bool {
        self.lattice_index(i, j).map(|k| self.inside[k]).unwrap_or(false)
    }

    fn lattice_point(&self, i: i64, j: i64) -> Point {
        let g = &self.grid;
        geom::project(
            g.bx.lo + g.h * Point::new(i as f64, j as f64),
            g.n(),
        )
    }

    /// Integer lattice index ranges covering `[lo, hi]`.
    fn index_range(&self, lo: &Point, hi: &Point) -> ((i64, i64), (i64, i64)) {
        let g = &self.grid;
        let ix = (
            ((lo.x - g.bx.lo.x) / g.h).floor() as i64,
            ((hi.x - g.bx.lo.x) / g.h).ceil() as i64,
        );
        let iy = if g.n() == 2 {
            (
                ((lo.y - g.bx.lo.y) / g.h).floor() as i64,
                ((hi.y - g.bx.lo.y) / g.h).ceil() as i64,
            )
        } else {
            (0, 0)
        };
        (ix, iy)
    }

    /// Lattice measures `(|A ∩ S|, |S|)` with boundary cells counted
    /// fractionally by their signed distance to `∂S`.
    pub fn soft_measures(&self, pot: &Potential, s: &Section) -> Result<(f64, f64)> {
        let h = self.grid.h;
        let (lo, hi) = bounding_box(pot, s, 2.0 * h)?;
        let ((i0, i1), (j0, j1)) = self.index_range(&lo, &hi);
        let grad_x = pot.eval(&s.center).gradient;
        let r2 = s.r * s.r;
        let (mut in_a, mut total) = (0.0, 0.0);
        for i in i0..=i1 {
            for j in j0..=j1 {
                let p = self.lattice_point(i, j);
                let v = pot.height(&s.center, &p);
                let g = geom::norm(&(pot.eval(&p).gradient - grad_x), pot.n);
                let frac = if g < 1e-300 {
                    if v < r2 { 1.0 } else { 0.0 }
                } else {
                    (0.5 + (r2 - v) / (g * h)).clamp(0.0, 1.0)
                };
                total += frac;
                if self.is_inside(i, j) {
                    in_a += frac;
                }
            }
        }
        let cell = self.grid.cell_measure();
        Ok((in_a * cell, total * cell))
    }

    /// Hard lattice measure of a union of sections.
    pub fn union_measure(&self, pot: &Potential, sections: &[Section]) -> Result<f64> {
        if sections.is_empty() {
            return Ok(0.0);
        }
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for s in sections {
            let (a, b) = bounding_box(pot, s, self.grid.h)?;
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        let ((i0, i1), (j0, j1)) = self.index_range(&geom::project(lo, pot.n), &geom::project(hi, pot.n));
        let mut count = 0usize;
        for i in i0..=i1 {
            for j in j0..=j1 {
                let p = self.lattice_point(i, j);
                if sections.iter().any(|s| s.contains(pot, &p)) {
                    count += 1;
                }
            }
        }
        Ok(count as f64 * self.grid.cell_measure())
    }
}

/// Calderón-Zygmund type family: for lexicographically scanned centers of
/// `A` not yet covered, the height is bisected until the lattice density
/// `|A ∩ S| / |S|` equals `theta`.
pub fn cz_decompose(pot: &Potential, a: &LatticeMask, theta: f64) -> Result<CoverReport> {
    if !(theta > 0.1 && theta < 0.9) {
        return Err(Error::Precondition(format!("theta must lie in (0.1, 0.9), got {theta}")));
    }
    let pts = a.points();
    if pts.is_empty() {
        return Err(Error::Precondition("A is empty".into()));
    }
    let h = a.grid.h;
    let cell = a.grid.cell_measure();
    let mut selected: Vec<Section> = Vec::new();
    let mut densities = Vec::new();
    for i in lex_order(&pts) {
        let x = pts[i];
        if selected.iter().any(|s| s.contains(pot, &x)) {
            continue;
        }
        let excess = |r: f64| -> Result<f64> {
            let (ma, ms) = a.soft_measures(pot, &Section::new(x, r))?;
            Ok(ma - theta * ms)
        };
        let r_lo = 1e-3 * h;
        if excess(r_lo)? < 0.0 {
            return Err(Error::RefinementNeeded(format!(
                "density θ unreachable at center ({}, {})",
                x.x, x.y
            )));
        }
        let mut r_hi = h;
        while excess(r_hi)? >= 0.0 {
            r_hi *= 2.0;
            if r_hi > BRACKET_LIMIT * h {
                return Err(Error::RefinementNeeded(format!(
                    "density never drops below θ at ({}, {})",
                    x.x, x.y
                )));
            }
        }
        let mut lo = r_lo;
        let mut hi = r_hi;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if excess(mid)? >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * hi {
                break;
            }
        }
        let r = 0.5 * (lo + hi);
        let s = Section::new(x, r);
        let (ma, ms) = a.soft_measures(pot, &s)?;
        if (ma - theta * ms).abs() > 2.0 * cell {
            return Err(Error::RefinementNeeded(format!(
                "density {} misses θ by more than two cells at ({}, {})",
                ma / ms,
                x.x,
                x.y
            )));
        }
        densities.push(ma / ms);
        selected.push(s);
    }
    let covers_input = pts.iter().all(|p| selected.iter().any(|s| s.contains(pot, p)));
    let union = a.union_measure(pot, &selected)?;
    Ok(CoverReport {
        densities,
        overlap_max: 0,
        overlap_constant: 0.0,
        measure_ratio: a.measure() / union,
        covers_input,
        selected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationReport {
    /// Sampled `x ∈ S_{3t/4}(y) \ S_{t/2}(y)` with their δ̂.
    pub samples: Vec<(Point, f64)>,
    pub delta_min: f64,
    pub doubling_ratio: f64,
    pub doubling_ok: bool,
    /// `(|S_t| − |S_{εt}|) / (n(1 − ε)|S_t|)` at ε = ½; must be ≤ 1.
    pub shell_ratio: f64,
    pub shell_ok: bool,
}

/// Lattice tolerance for measure-based assertions.
pub const MEASURE_TOL: f64 = 0.05;

pub fn deformation_checks(pot: &Potential, t: f64, y: &Point, samples: usize) -> Result<DeformationReport> {
    if t <= 0.0 {
        return Err(Error::Precondition("t must be positive".into()));
    }
    let n = pot.n;
    let outer = Section::new(*y, t);
    let hole = Section::new(*y, t / 4.0);
    let dirs = geom::directions(n, samples.max(1), 0.25);
    let mut out = Vec::new();
    for level in [0.55, 0.625, 0.7] {
        for d in &dirs {
            let s_level = boundary_radius(pot, y, level * t, d)?;
            let x = y + s_level * d;
            let fits = |delta: f64| -> bool {
                let inner = Section::new(x, delta * t);
                let Ok(bd) = boundary_points(pot, &inner, 64, 0.0) else {
                    return false;
                };
                let mid: Vec<Point> = bd.iter().map(|b| 0.5 * (b + x)).collect();
                bd.iter()
                    .chain(mid.iter())
                    .chain(std::iter::once(&x))
                    .all(|p| outer.contains(pot, p) && !hole.contains(pot, p))
                    && !inner.contains(pot, y)
            };
            // largest passing δ: threshold on the failing predicate
            let delta = numeric::threshold(|dl| !fits(dl), 1e-6, 1.0, 1e-6);
            let delta = if fits(1.0) { 1.0 } else { delta };
            if delta < 1e-4 {
                return Err(Error::DeformationFailure { point: x, delta });
            }
            out.push((x, delta));
        }
    }
    let vol = |r: f64| section_volume(pot, &Section::new(*y, r), 256);
    let doubling_ratio = vol(t)? / vol(t / 2.0)?;
    let bound = 2f64.powi(n as i32);
    let v_t = vol(t)?;
    let shell_ratio = (v_t - vol(0.5 * t)?) / (n as f64 * 0.5 * v_t);
    Ok(DeformationReport {
        delta_min: out.iter().map(|s| s.1).fold(f64::INFINITY, f64::min),
        samples: out,
        doubling_ok: doubling_ratio >= 1.0 && doubling_ratio <= bound * (1.0 + MEASURE_TOL),
        doubling_ratio,
        shell_ok: shell_ratio <= 1.0 + MEASURE_TOL,
        shell_ratio,
    })
}

/// One row of the `sections` CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionProbe {
    pub center: Point,
    pub r: f64,
    pub gamma_hat: f64,
    pub c_inner: f64,
    pub volume: f64,
    pub doubling_ratio: f64,
}

pub fn probe(pot: &Potential, x: &Point, r: f64) -> Result<SectionProbe> {
    let s = Section::new(*x, r);
    let volume = section_volume(pot, &s, 256)?;
    Ok(SectionProbe {
        center: *x,
        r,
        gamma_hat: engulfing_probe(pot, x, r, 48)?,
        c_inner: fit_ellipsoid(pot, x, r, 32)?.inner_radius,
        volume,
        doubling_ratio: volume / section_volume(pot, &s.scaled(0.5), 256)?,
    })
}
