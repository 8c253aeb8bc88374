//! Small fixed-size linear algebra shared by every module.
//!
//! Dimension is carried separately as `n ∈ {1, 2}`. In one dimension only the
//! `x` component of a [`Point`] and the `(0, 0)` entry of a [`Mat`] are used.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};

pub type Point = Vector2<f64>;
pub type Mat = Matrix2<f64>;

pub fn point1(x: f64) -> Point {
    Point::new(x, 0.0)
}

pub fn point2(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

/// Zeroes the unused coordinate so 1D computations stay on the real line.
pub fn project(p: Point, n: usize) -> Point {
    if n == 1 {
        Point::new(p.x, 0.0)
    } else {
        p
    }
}

pub fn project_mat(m: Mat, n: usize) -> Mat {
    if n == 1 {
        Mat::new(m[(0, 0)], 0.0, 0.0, 0.0)
    } else {
        m
    }
}

pub fn det(m: &Mat, n: usize) -> f64 {
    if n == 1 {
        m[(0, 0)]
    } else {
        m.determinant()
    }
}

pub fn norm(p: &Point, n: usize) -> f64 {
    if n == 1 {
        p.x.abs()
    } else {
        p.norm()
    }
}

/// Quadratic form `pᵀ m p` restricted to the first `n` coordinates.
pub fn quad_form(m: &Mat, p: &Point, n: usize) -> f64 {
    if n == 1 {
        m[(0, 0)] * p.x * p.x
    } else {
        p.dot(&(m * p))
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(*m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `m^{power}` for symmetric positive definite `m`.
pub fn spd_power(m: &Mat, n: usize, power: f64) -> Mat {
    if n == 1 {
        return Mat::new(m[(0, 0)].powf(power), 0.0, 0.0, 0.0);
    }
    let eig = SymmetricEigen::new(*m);
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|l| l.powf(power)));
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `dirs` unit vectors spread uniformly over the sphere `S^{n-1}`, with an
/// angular offset `phase` measured in fractions of the spacing.
pub fn directions(n: usize, dirs: usize, phase: f64) -> Vec<Point> {
    if n == 1 {
        return vec![point1(1.0), point1(-1.0)];
    }
    (0..dirs)
        .map(|k| {
            let t = std::f64::consts::TAU * (k as f64 + phase) / dirs as f64;
            point2(t.cos(), t.sin())
        })
        .collect()
}

/// Surface measure of the unit sphere in dimension `n` (counting measure for n = 1).
pub fn sphere_measure(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        std::f64::consts::TAU
    }
}

/// Volume of the unit ball in dimension `n`.
pub fn ball_volume(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        std::f64::consts::PI
    }
}


/// Axis-aligned box `[lo, hi]` in dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub lo: Point,
    pub hi: Point,
    pub n: usize,
}

impl Aabb {
    pub fn new(lo: Point, hi: Point, n: usize) -> Self {
        Self {
            lo: project(lo, n),
            hi: project(hi, n),
            n,
        }
    }

    pub fn interval(a: f64, b: f64) -> Self {
        Self::new(point1(a), point1(b), 1)
    }

    pub fn square(a: f64, b: f64) -> Self {
        Self::new(point2(a, a), point2(b, b), 2)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.n).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    /// Strict interior test, used for exit detection.
    pub fn contains_open(&self, p: &Point) -> bool {
        (0..self.n).all(|k| p[k] > self.lo[k] && p[k] < self.hi[k])
    }

    pub fn diameter(&self) -> f64 {
        norm(&(self.hi - self.lo), self.n)
    }

    pub fn center(&self) -> Point {
        0.5 * (self.lo + self.hi)
    }

    /// `samples` equispaced points per axis including the endpoints
    /// (the midpoint when `samples == 1`), in lexicographic order.
    pub fn lattice(&self, samples: usize) -> Vec<Point> {
        let coord = |k: usize, i: usize| {
            if samples == 1 {
                0.5 * (self.lo[k] + self.hi[k])
            } else {
                self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (samples - 1) as f64
            }
        };
        if self.n == 1 {
            (0..samples).map(|i| point1(coord(0, i))).collect()
        } else {
            let mut out = Vec::with_capacity(samples * samples);
            for i in 0..samples {
                for j in 0..samples {
                    out.push(point2(coord(0, i), coord(1, j)));
                }
            }
            out
        }
    }
}
