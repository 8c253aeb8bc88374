//! Explicit subsolutions: the power barrier, its section-normalised
//! variant and the compactly supported bump, with a numerical check of
//! `M⁻ ≥ 0` over a σ grid.

use serde::{Deserialize, Serialize};

use super::{KernelSpec, Operator, PointStencil, QuadraturePlan};
use crate::geom::{self, Point};
use crate::grid::Field;
use crate::potential::Potential;
use crate::sections::{self, AffineMap, Section};
use crate::{Error, Result};

/// σ values scanned when looking for the smallest admissible order.
pub const SIGMA_GRID: [f64; 10] = [1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 1.95];

const BOUNDARY_RAYS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    FPower,
    GNormalized,
    PsiBump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    /// Exponent; `None` picks the smallest admissible value plus one.
    pub m: Option<f64>,
    /// Plateau radius for the power barriers, paste radius for the bump.
    /// The bump is only a subsolution at gauge at least `2s`.
    pub s: f64,
    /// Engulfing constant τ (bump only).
    pub tau: Option<f64>,
    /// Normalising map of a section (normalised barrier only).
    pub anchor: Option<AffineMap>,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self {
            m: None,
            s: 0.5,
            tau: None,
            anchor: None,
        }
    }
}

/// `(∫_{∂S_1(0)} (y₁/|y|)² dσ, |∂S_1(0)|)` with Euclidean surface measure
/// (counting measure in one dimension).
pub fn boundary_moments(pot: &Potential) -> Result<(f64, f64)> {
    let s = Section::new(Point::zeros(), 1.0);
    if pot.n == 1 {
        return Ok((2.0, 2.0));
    }
    let pts = sections::boundary_points(pot, &s, BOUNDARY_RAYS, 0.0)?;
    let mut moment = 0.0;
    let mut perimeter = 0.0;
    for k in 0..pts.len() {
        let a = pts[k];
        let b = pts[(k + 1) % pts.len()];
        let len = (b - a).norm();
        let mid = 0.5 * (a + b);
        moment += len * mid.x * mid.x / mid.norm_squared();
        perimeter += len;
    }
    Ok((moment, perimeter))
}

/// `δ₀ = (m+2) λ I₁ − Λ P` and the exponent where it vanishes.
fn delta0(pot: &Potential, spec: &KernelSpec, m: f64) -> Result<(f64, f64)> {
    let (i1, p) = boundary_moments(pot)?;
    let d0 = (m + 2.0) * spec.lambda * i1 - spec.cap_lambda * p;
    let m_min = spec.cap_lambda * p / (spec.lambda * i1) - 2.0;
    Ok((d0, m_min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub kind: BarrierKind,
    pub m: f64,
    pub s: f64,
    pub delta0: f64,
    pub n: usize,
    pub anchor: Option<AffineMap>,
    /// Bump data: potential for the gauge, τ, scale `c` and the cap
    /// `A − Bρ²` used below the paste radius.
    pub potential: Option<Potential>,
    pub tau: f64,
    pub scale: f64,
    pub cap: (f64, f64),
}

/// Builds a barrier and checks that the exponent makes `δ₀` positive.
pub fn build_barrier(kind: BarrierKind, pot: &Potential, spec: &KernelSpec, params: &BarrierParams) -> Result<Barrier> {
    spec.validate()?;
    if !(params.s > 0.0 && params.s.is_finite()) {
        return Err(Error::Config(format!("barrier radius must be positive, got {}", params.s)));
    }
    let (_, m_min) = delta0(pot, spec, 0.0)?;
    let m = params.m.unwrap_or(m_min.max(0.0) + 1.0);
    let (d0, _) = delta0(pot, spec, m)?;
    if d0 <= 0.0 || m <= 0.0 {
        return Err(Error::MTooSmall {
            delta0: d0,
            min_m: m_min.max(0.0),
        });
    }
    let mut b = Barrier {
        kind,
        m,
        s: params.s,
        delta0: d0,
        n: pot.n,
        anchor: None,
        potential: None,
        tau: 0.0,
        scale: 1.0,
        cap: (0.0, 0.0),
    };
    match kind {
        BarrierKind::FPower => {}
        BarrierKind::GNormalized => {
            b.anchor = Some(
                params
                    .anchor
                    .ok_or_else(|| Error::Config("normalised barrier needs an anchor map".into()))?,
            );
        }
        BarrierKind::PsiBump => {
            let tau = params
                .tau
                .ok_or_else(|| Error::Config("bump barrier needs tau".into()))?;
            if !(tau > params.s) {
                return Err(Error::Config(format!("bump needs tau > s, got tau = {tau}, s = {}", params.s)));
            }
            let s = params.s;
            let far = (2.0 * tau).powf(-m);
            b.cap = (s.powf(-m) - far + 0.5 * m * s.powf(-m), 0.5 * m * s.powf(-m - 2.0));
            b.scale = 2.5 / (tau.powf(-m) - far);
            b.tau = tau;
            b.potential = Some(*pot);
        }
    }
    Ok(b)
}

impl Barrier {
    /// `√v_0(x)`, the section gauge of the bump.
    fn gauge2(&self, x: &Point) -> f64 {
        self.potential.map_or(0.0, |p| p.height(&Point::zeros(), x))
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let x = geom::project(*x, self.n);
        let m = self.m;
        match self.kind {
            BarrierKind::FPower => self.s.powf(-m).min(x.norm().powf(-m)),
            BarrierKind::GNormalized => {
                let t = self.anchor.expect("checked at build").apply(&x);
                self.s.powf(-m).min(t.norm().powf(-m))
            }
            BarrierKind::PsiBump => {
                let r2 = self.gauge2(&x);
                let far = (2.0 * self.tau).powf(-m);
                let v = if r2 >= 4.0 * self.tau * self.tau {
                    0.0
                } else if r2 >= self.s * self.s {
                    r2.sqrt().powf(-m) - far
                } else {
                    self.cap.0 - self.cap.1 * r2
                };
                self.scale * v.max(0.0)
            }
        }
    }

    /// Largest value, attained on the plateau or at the centre.
    pub fn sup(&self) -> f64 {
        match self.kind {
            BarrierKind::PsiBump => self.scale * self.cap.0,
            _ => self.s.powf(-self.m),
        }
    }

    /// Jumps in value and radial derivative across the paste sphere of the
    /// bump, measured by one-sided differences in the gauge.
    pub fn paste_defect(&self) -> (f64, f64) {
        if self.kind != BarrierKind::PsiBump {
            return (0.0, 0.0);
        }
        let s = self.s;
        let m = self.m;
        let outer = s.powf(-m) - (2.0 * self.tau).powf(-m);
        let inner = self.cap.0 - self.cap.1 * s * s;
        let d_outer = -m * s.powf(-m - 1.0);
        let d_inner = -2.0 * self.cap.1 * s;
        (self.scale * (outer - inner).abs(), self.scale * (d_outer - d_inner).abs())
    }
}

impl Field for Barrier {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, p: &Point) -> f64 {
        self.eval(p)
    }
    fn sup_abs(&self) -> f64 {
        self.sup()
    }
}

/// Where the subsolution property is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum Region {
    /// `inner ≤ |x| ≤ outer`.
    Annulus { inner: f64, outer: f64 },
    /// `inner ≤ √v_0(x) ≤ outer`, i.e. between two sections about the origin.
    SectionShell { inner: f64, outer: f64 },
}

impl Region {
    /// Deterministic samples: radii evenly spaced in the region, directions
    /// rotating by the golden angle.
    pub fn samples(&self, pot: &Potential, count: usize) -> Result<Vec<Point>> {
        let n = pot.n;
        let (lo, hi) = match *self {
            Region::Annulus { inner, outer } | Region::SectionShell { inner, outer } => (inner, outer),
        };
        if !(lo > 0.0 && hi >= lo) || count == 0 {
            return Err(Error::Config(format!("bad sampling region [{lo}, {hi}] with {count} samples")));
        }
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let t = if count == 1 { 0.5 } else { k as f64 / (count - 1) as f64 };
            let r = lo + (hi - lo) * t;
            let dir = if n == 1 {
                geom::point1(if k % 2 == 0 { 1.0 } else { -1.0 })
            } else {
                let a = golden * k as f64;
                geom::point2(a.cos(), a.sin())
            };
            let p = match self {
                Region::Annulus { .. } => r * dir,
                Region::SectionShell { .. } => {
                    let t = sections::boundary_radius(pot, &Point::zeros(), r, &dir)?;
                    t * dir
                }
            };
            out.push(p);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionReport {
    pub sigma: f64,
    pub min_value: f64,
    pub worst_point: [f64; 2],
    pub tolerance: f64,
    pub passes: bool,
    /// Smallest σ on [`SIGMA_GRID`] from which every larger grid value passes.
    pub sigma0: Option<f64>,
    /// `(σ, min M⁻)` along the grid.
    pub scan: Vec<(f64, f64)>,
}

fn min_over(barrier: &Barrier, pot: &Potential, spec: &KernelSpec, pts: &[Point], plan: &QuadraturePlan) -> Result<(f64, Point)> {
    let vals = crate::par::map_collect(pts, |p| {
        PointStencil::build(pot, barrier, p, spec.sigma, plan).and_then(|st| st.apply(barrier, spec, &Operator::Minus))
    });
    let mut best = (f64::INFINITY, Point::zeros());
    for (p, v) in pts.iter().zip(vals) {
        let v = v?;
        if v < best.0 {
            best = (v, *p);
        }
    }
    Ok(best)
}

/// Samples `M⁻(barrier)` on the region at `spec.sigma` and along
/// [`SIGMA_GRID`]. Passing means `min ≥ −10⁻⁸·sup(barrier)`.
pub fn verify_subsolution(
    barrier: &Barrier,
    pot: &Potential,
    spec: &KernelSpec,
    region: &Region,
    sample_count: usize,
) -> Result<SubsolutionReport> {
    spec.validate()?;
    let pts = region.samples(pot, sample_count)?;
    let rmin = pts.iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min);
    let plan = QuadraturePlan::new(0.02 * rmin.min(barrier.s), 64.0);
    let tolerance = 1e-8 * barrier.sup();

    let (min_value, worst) = min_over(barrier, pot, spec, &pts, &plan)?;
    let mut scan = Vec::with_capacity(SIGMA_GRID.len());
    for &sg in &SIGMA_GRID {
        let sp = spec.with_sigma(sg)?;
        scan.push((sg, min_over(barrier, pot, &sp, &pts, &plan)?.0));
    }
    let mut sigma0 = None;
    for &(sg, v) in scan.iter().rev() {
        if v >= -tolerance {
            sigma0 = Some(sg);
        } else {
            break;
        }
    }
    let passes = min_value >= -tolerance;
    if sigma0.is_none() && !passes {
        return Err(Error::BarrierFailure {
            point: worst,
            value: min_value,
        });
    }
    Ok(SubsolutionReport {
        sigma: spec.sigma,
        min_value,
        worst_point: [worst.x, worst.y],
        tolerance,
        passes,
        sigma0,
        scan,
    })
}
