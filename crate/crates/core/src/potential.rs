//! Catalog of convex potentials φ with exact derivatives and the
//! Monge-Ampère height `v_x(y) = φ(y) − φ(x) − ∇φ(x)·(y − x)`.

use serde::{Deserialize, Serialize};

use crate::geom::{self, Aabb, Mat, Point};
use crate::{Error, Result};

/// Largest admissible condition number of an anisotropic quadratic.
pub const MAX_CONDITION: f64 = 100.0;
/// Largest admissible perturbation amplitude.
pub const MAX_PERTURBATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `½|x|²`
    Isotropic,
    /// `½ xᵀ A x`
    Anisotropic { a: [[f64; 2]; 2] },
    /// `½|x|² + ε √(1 + |x|²)`
    Perturbed { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    pub n: usize,
}

/// Value, gradient and Hessian of φ at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eval {
    pub value: f64,
    pub gradient: Point,
    pub hessian: Mat,
}

impl Potential {
    pub fn isotropic(n: usize) -> Self {
        Self {
            kind: PotentialKind::Isotropic,
            n,
        }
    }

    pub fn anisotropic(a: Mat, n: usize) -> Result<Self> {
        Self::from_id("anisotropic", &[a[(0, 0)], a[(0, 1)], a[(1, 1)]], n)
    }

    pub fn diagonal(d1: f64, d2: f64) -> Result<Self> {
        Self::anisotropic(Mat::new(d1, 0.0, 0.0, d2), 2)
    }

    pub fn perturbed(eps: f64, n: usize) -> Result<Self> {
        Self::from_id("perturbed", &[eps], n)
    }

    /// Builds a catalog entry from its string id and parameter list.
    ///
    /// * `isotropic` – no parameters.
    /// * `anisotropic` – `[a]` in 1D, `[a11, a22]` or `[a11, a12, a22]` in 2D.
    /// * `perturbed` – `[eps]` with `0 ≤ eps ≤ 0.5`.
    pub fn from_id(id: &str, params: &[f64], n: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {n}")));
        }
        let kind = match id {
            "isotropic" => PotentialKind::Isotropic,
            "anisotropic" => {
                let a = match (n, params) {
                    (1, [a]) => [[*a, 0.0], [0.0, 0.0]],
                    (2, [a11, a22]) => [[*a11, 0.0], [0.0, *a22]],
                    (2, [a11, a12, a22]) => [[*a11, *a12], [*a12, *a22]],
                    _ => {
                        return Err(Error::Config(format!(
                            "anisotropic potential in {n}D: bad parameter list {params:?}"
                        )))
                    }
                };
                let m = Mat::new(a[0][0], a[0][1], a[1][0], a[1][1]);
                let ev = geom::sym_eigenvalues(&m, n);
                if ev[0] <= 0.0 || !ev.iter().all(|e| e.is_finite()) {
                    return Err(Error::Config("anisotropic matrix must be positive definite".into()));
                }
                let cond = ev[ev.len() - 1] / ev[0];
                if cond > MAX_CONDITION {
                    return Err(Error::Config(format!(
                        "anisotropic condition number {cond:.3} exceeds {MAX_CONDITION}"
                    )));
                }
                PotentialKind::Anisotropic { a }
            }
            "perturbed" => match params {
                [eps] if (0.0..=MAX_PERTURBATION).contains(eps) => PotentialKind::Perturbed { eps: *eps },
                _ => {
                    return Err(Error::Config(format!(
                        "perturbed potential needs one eps in [0, {MAX_PERTURBATION}], got {params:?}"
                    )))
                }
            },
            other => return Err(Error::Config(format!("unknown potential id `{other}`"))),
        };
        Ok(Self { kind, n })
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            PotentialKind::Isotropic => "isotropic",
            PotentialKind::Anisotropic { .. } => "anisotropic",
            PotentialKind::Perturbed { .. } => "perturbed",
        }
    }

    /// Hessian of the quadratic part (`I` or `A`).
    pub fn quadratic_part(&self) -> Mat {
        let m = match self.kind {
            PotentialKind::Anisotropic { a } => Mat::new(a[0][0], a[0][1], a[1][0], a[1][1]),
            _ => Mat::identity(),
        };
        geom::project_mat(m, self.n)
    }

    /// Potentials with constant Hessian produce translation-invariant kernels.
    pub fn is_quadratic(&self) -> bool {
        !matches!(self.kind, PotentialKind::Perturbed { eps } if eps != 0.0)
    }

    /// Global bounds `(μ_lo, μ_hi)` on the eigenvalues of D²φ, so that
    /// `½μ_lo|y−x|² ≤ v_x(y) ≤ ½μ_hi|y−x|²`.
    pub fn hessian_bounds(&self) -> (f64, f64) {
        match self.kind {
            PotentialKind::Isotropic => (1.0, 1.0),
            PotentialKind::Anisotropic { .. } => {
                let ev = geom::sym_eigenvalues(&self.quadratic_part(), self.n);
                (ev[0], ev[ev.len() - 1])
            }
            PotentialKind::Perturbed { eps } => (1.0, 1.0 + eps),
        }
    }

    pub fn eval(&self, x: &Point) -> Eval {
        let n = self.n;
        let x = geom::project(*x, n);
        let a = self.quadratic_part();
        let mut value = 0.5 * geom::quad_form(&a, &x, n);
        let mut gradient = geom::project(a * x, n);
        let mut hessian = a;
        if let PotentialKind::Perturbed { eps } = self.kind {
            let r2 = x.norm_squared();
            let s = (1.0 + r2).sqrt();
            value += eps * s;
            gradient += eps * x / s;
            let outer = x * x.transpose();
            hessian += geom::project_mat(eps * (Mat::identity() / s - outer / (s * s * s)), n);
        }
        Eval {
            value,
            gradient,
            hessian,
        }
    }

    pub fn hessian(&self, x: &Point) -> Mat {
        self.eval(x).hessian
    }

    /// `v_x(y)`, evaluated without cancellation between φ(y) and its tangent.
    pub fn height(&self, x: &Point, y: &Point) -> f64 {
        let n = self.n;
        let x = geom::project(*x, n);
        let y = geom::project(*y, n);
        let d = y - x;
        let mut v = 0.5 * geom::quad_form(&self.quadratic_part(), &d, n);
        if let PotentialKind::Perturbed { eps } = self.kind {
            let sx = (1.0 + x.norm_squared()).sqrt();
            let sy = (1.0 + y.norm_squared()).sqrt();
            let xd = x.dot(&d);
            let num = d.norm_squared() * sx - xd * (2.0 * xd + d.norm_squared()) / (sx + sy);
            v += eps * num / (sx * (sx + sy));
        }
        v.max(0.0)
    }

    /// Shifted height `w_x(y) = v_x(x + y)` of an increment `y`.
    pub fn increment_height(&self, x: &Point, y: &Point) -> f64 {
        self.height(x, &(x + y))
    }

    /// Symmetrised height `w̄_x(y) = √(w_x(y) · w_x(−y))`.
    pub fn sym_height(&self, x: &Point, y: &Point) -> f64 {
        if self.is_quadratic() {
            return self.increment_height(x, y);
        }
        (self.increment_height(x, y) * self.increment_height(x, &-y)).sqrt()
    }

    pub fn det_hessian(&self, x: &Point) -> f64 {
        geom::det(&self.hessian(x), self.n)
    }

    /// Min and max of det D²φ over a `samples`-per-axis lattice of `bx`.
    pub fn verify_ma_bounds(&self, bx: &Aabb, samples: usize) -> Result<(f64, f64)> {
        if samples == 0 {
            return Err(Error::Precondition("samples must be at least 1".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in bx.lattice(samples) {
            let det = self.det_hessian(&p);
            if det <= 0.0 || !det.is_finite() {
                return Err(Error::CatalogViolation { point: p, det });
            }
            lo = lo.min(det);
            hi = hi.max(det);
        }
        Ok((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{point1, point2};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn catalog(n: usize) -> Vec<Potential> {
        let aniso = if n == 1 {
            Potential::from_id("anisotropic", &[4.0], 1).unwrap()
        } else {
            Potential::from_id("anisotropic", &[4.0, 0.7, 1.0], 2).unwrap()
        };
        vec![
            Potential::isotropic(n),
            aniso,
            Potential::perturbed(0.1, n).unwrap(),
            Potential::perturbed(0.5, n).unwrap(),
        ]
    }

    #[test]
    fn isotropic_closed_form() {
        let e = Potential::isotropic(2).eval(&point2(1.0, 0.0));
        assert_eq!(e.value, 0.5);
        assert_eq!(e.gradient, point2(1.0, 0.0));
        assert_eq!(e.hessian, Mat::identity());
    }

    #[test]
    fn anisotropic_closed_form() {
        let p = Potential::diagonal(4.0, 1.0).unwrap();
        let e = p.eval(&point2(1.0, 1.0));
        assert_eq!(e.value, 2.5);
        assert_eq!(e.gradient, point2(4.0, 1.0));
        assert_eq!(e.hessian, Mat::new(4.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn perturbed_at_symmetry_point() {
        let p = Potential::perturbed(0.1, 2).unwrap();
        let e = p.eval(&Point::zeros());
        assert_eq!(e.gradient, Point::zeros());
        assert_relative_eq!(e.hessian, 1.1 * Mat::identity(), epsilon = 1e-15);
    }

    #[test]
    fn perturbed_gradient_and_hessian_match_finite_differences() {
        for n in [1, 2] {
            let p = Potential::perturbed(0.3, n).unwrap();
            let x = geom::project(point2(0.7, -0.4), n);
            let e = p.eval(&x);
            let h = 1e-5;
            for k in 0..n {
                let mut dx = Point::zeros();
                dx[k] = h;
                let g_fd = (p.eval(&(x + dx)).value - p.eval(&(x - dx)).value) / (2.0 * h);
                assert_relative_eq!(e.gradient[k], g_fd, epsilon = 1e-8);
                let hess_fd = (p.eval(&(x + dx)).gradient - p.eval(&(x - dx)).gradient) / (2.0 * h);
                for l in 0..n {
                    assert_relative_eq!(e.hessian[(l, k)], hess_fd[l], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn height_examples() {
        let iso = Potential::isotropic(2);
        assert_eq!(iso.height(&Point::zeros(), &point2(1.0, 0.0)), 0.5);
        for p in catalog(2) {
            let x = point2(0.3, -1.2);
            assert_eq!(p.height(&x, &x), 0.0);
        }
    }

    #[test]
    fn perturbed_height_matches_definition_and_taylor() {
        let p = Potential::perturbed(0.1, 2).unwrap();
        let phi = |z: Point| 0.5 * z.norm_squared() + 0.1 * (1.0 + z.norm_squared()).sqrt();
        let x = point2(1.0, 0.0);
        let y = point2(2.0, 0.0);
        let brute = phi(y) - phi(x) - point2(1.0 + 0.1 / 2f64.sqrt(), 0.0).dot(&(y - x));
        assert_relative_eq!(p.height(&x, &y), brute, epsilon = 1e-14);
        assert!(p.height(&x, &y) > 0.0);

        // Second-order Taylor oracle: v_x(y) ≈ ½ dᵀ D²φ(x) d for tiny d.
        let hess = p.hessian(&x);
        for k in 0..16 {
            let t = std::f64::consts::TAU * k as f64 / 16.0;
            let d = 1e-3 * point2(t.cos(), t.sin());
            let taylor = 0.5 * d.dot(&(hess * d));
            let v = p.height(&x, &(x + d));
            assert!(((v - taylor) / taylor).abs() < 1e-4, "k={k}: {v} vs {taylor}");
        }
    }

    #[test]
    fn ma_bounds_examples() {
        let bx = Aabb::square(-2.0, 2.0);
        assert_eq!(Potential::isotropic(2).verify_ma_bounds(&bx, 5).unwrap(), (1.0, 1.0));
        let (lo, hi) = Potential::diagonal(4.0, 1.0).unwrap().verify_ma_bounds(&bx, 5).unwrap();
        assert_eq!((lo, hi), (4.0, 4.0));
        let (lo, hi) = Potential::perturbed(0.1, 2).unwrap().verify_ma_bounds(&bx, 64).unwrap();
        assert!(1.0 < lo && lo <= hi && hi < 1.5, "{lo} {hi}");
    }

    #[test]
    fn configuration_errors() {
        assert!(matches!(Potential::from_id("bogus", &[], 2), Err(Error::Config(_))));
        assert!(Potential::from_id("perturbed", &[0.9], 2).is_err());
        assert!(Potential::from_id("anisotropic", &[200.0, 1.0], 2).is_err());
        assert!(Potential::from_id("isotropic", &[], 3).is_err());
        assert!(Potential::isotropic(1).verify_ma_bounds(&Aabb::interval(0.0, 1.0), 0).is_err());
    }

    #[test]
    fn quadratic_height_is_exact() {
        let p = Potential::from_id("anisotropic", &[3.0, 0.5, 2.0], 2).unwrap();
        let a = p.quadratic_part();
        let x = point2(0.2, 0.9);
        let y = point2(-1.1, 0.4);
        let d = y - x;
        assert_relative_eq!(p.height(&x, &y), 0.5 * d.dot(&(a * d)), epsilon = 1e-15);
        assert_eq!(Potential::isotropic(1).height(&point1(1.0), &point1(3.0)), 2.0);
    }

    proptest! {
        #[test]
        fn height_nonnegative_and_convex(
            x in prop::array::uniform2(-3.0f64..3.0),
            y1 in prop::array::uniform2(-3.0f64..3.0),
            y2 in prop::array::uniform2(-3.0f64..3.0),
        ) {
            for n in [1, 2] {
                for p in catalog(n) {
                    let (x, y1, y2) = (point2(x[0], x[1]), point2(y1[0], y1[1]), point2(y2[0], y2[1]));
                    let v1 = p.height(&x, &y1);
                    let v2 = p.height(&x, &y2);
                    prop_assert!(v1 >= 0.0);
                    let mid = p.height(&x, &(0.5 * (y1 + y2)));
                    prop_assert!(mid <= 0.5 * v1 + 0.5 * v2 + 1e-12 * (1.0 + v1 + v2));
                }
            }
        }

        #[test]
        fn hessian_is_positive_definite(x in prop::array::uniform2(-10.0f64..10.0)) {
            for p in catalog(2) {
                let ev = geom::sym_eigenvalues(&p.hessian(&point2(x[0], x[1])), 2);
                prop_assert!(ev[0] > 0.0);
                let (lo, hi) = p.hessian_bounds();
                prop_assert!(ev[0] >= lo - 1e-12 && ev[1] <= hi + 1e-12);
            }
        }
    }
}
