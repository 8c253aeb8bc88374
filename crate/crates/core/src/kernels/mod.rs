//! Second differences, the kernel class, the extremal and Isaacs operators,
//! the lattice discretisation used by the solver, and barrier functions.
//!
//! Every kernel is written as `K_x(y) = (2−σ) · m(x, y) · w̄_x(y)^{−(n+σ)/2}`
//! with a *multiplier* `m` in `[λ, Λ]`, where `w̄_x(y) = √(w_x(y) w_x(−y))`
//! is the symmetrised shifted height. The class condition is then just a
//! bound on `m`.

mod barrier;
mod lattice;
mod quadrature;

pub use barrier::{
    boundary_moments, build_barrier, verify_subsolution, Barrier, BarrierKind, BarrierParams, Region,
    SubsolutionReport, SIGMA_GRID,
};
pub use lattice::LatticeStencil;
pub use quadrature::{PointStencil, QuadraturePlan};

use serde::{Deserialize, Serialize};

use crate::geom::{self, Point};
use crate::grid::Field;
use crate::potential::Potential;
use crate::{Error, Result};

/// How a kernel is picked out of the class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    ExtremalPlus,
    ExtremalMinus,
    FixedMidpoint,
    Table,
}

/// Ellipticity constants, order and selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub cap_lambda: f64,
    pub sigma: f64,
    pub selection: Selection,
}

impl KernelSpec {
    pub fn new(lambda: f64, cap_lambda: f64, sigma: f64, selection: Selection) -> Result<Self> {
        let s = Self {
            lambda,
            cap_lambda,
            sigma,
            selection,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 2.0) {
            return Err(Error::Spec(format!("sigma must lie in (0, 2), got {}", self.sigma)));
        }
        if !(self.lambda > 0.0 && self.lambda <= self.cap_lambda && self.cap_lambda.is_finite()) {
            return Err(Error::Spec(format!(
                "need 0 < lambda <= Lambda, got {} and {}",
                self.lambda, self.cap_lambda
            )));
        }
        Ok(())
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.lambda, self.cap_lambda, sigma, self.selection)
    }

    pub fn with_selection(&self, selection: Selection) -> Self {
        Self { selection, ..*self }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lambda + self.cap_lambda)
    }

    /// `(2−σ) w̄^{−(n+σ)/2}`, the kernel with unit multiplier.
    pub fn unit_kernel(&self, wbar: f64, n: usize) -> f64 {
        (2.0 - self.sigma) * wbar.powf(-0.5 * (n as f64 + self.sigma))
    }

    /// The operator selected by `selection`, or an error for selections that
    /// need an explicit kernel table.
    pub fn operator(&self) -> Result<Operator> {
        Ok(match self.selection {
            Selection::ExtremalPlus => Operator::Plus,
            Selection::ExtremalMinus => Operator::Minus,
            Selection::FixedMidpoint => Operator::Linear(KernelRule::Constant { m: self.midpoint() }),
            Selection::Table => {
                return Err(Error::Spec("table selection needs explicit kernel families".into()));
            }
        })
    }
}

/// Multiplier rules `m(x, y)` defining one kernel of the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum KernelRule {
    Constant { m: f64 },
    /// Alternates `lo`/`hi` on a checkerboard of increment cells of side `cell`.
    Checkerboard { lo: f64, hi: f64, cell: f64 },
    /// `mid + amp · cos(2θ)` in the angle θ of the increment.
    Angular { mid: f64, amp: f64 },
    /// `base + amp · sin(freq · x₁)` in the base point.
    Oscillating { base: f64, amp: f64, freq: f64 },
}

impl KernelRule {
    pub fn lower(spec: &KernelSpec) -> Self {
        Self::Constant { m: spec.lambda }
    }

    pub fn upper(spec: &KernelSpec) -> Self {
        Self::Constant { m: spec.cap_lambda }
    }

    pub fn midpoint(spec: &KernelSpec) -> Self {
        Self::Constant { m: spec.midpoint() }
    }

    pub fn multiplier(&self, x: &Point, y: &Point) -> f64 {
        match *self {
            Self::Constant { m } => m,
            Self::Checkerboard { lo, hi, cell } => {
                let parity = (y.x / cell).floor() as i64 + (y.y / cell).floor() as i64;
                if parity.rem_euclid(2) == 0 {
                    lo
                } else {
                    hi
                }
            }
            Self::Angular { mid, amp } => {
                let t = y.y.atan2(y.x);
                mid + amp * (2.0 * t).cos()
            }
            Self::Oscillating { base, amp, freq } => base + amp * (freq * x.x).sin(),
        }
    }

    /// Asserts `λ ≤ m(x, y) ≤ Λ`.
    pub fn check(&self, spec: &KernelSpec, x: &Point, y: &Point) -> Result<f64> {
        let m = self.multiplier(x, y);
        let slack = 1e-12 * spec.cap_lambda;
        if !(m >= spec.lambda - slack && m <= spec.cap_lambda + slack) {
            return Err(Error::KernelClass {
                value: m,
                lo: spec.lambda,
                hi: spec.cap_lambda,
                increment: *y,
            });
        }
        Ok(m)
    }
}

/// A pointwise rule turning a second difference into a weighted contribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Plus,
    Minus,
    Linear(KernelRule),
}

impl Operator {
    /// `m·δ` for the multiplier this operator picks at `(x, y)`.
    pub fn apply(&self, spec: &KernelSpec, x: &Point, y: &Point, delta: f64) -> f64 {
        let (lo, hi) = (spec.lambda, spec.cap_lambda);
        match self {
            Self::Plus => (hi * delta).max(lo * delta),
            Self::Minus => (hi * delta).min(lo * delta),
            // δ is even in y, so only the even part of the multiplier matters
            Self::Linear(rule) => 0.5 * (rule.multiplier(x, y) + rule.multiplier(x, &-y)) * delta,
        }
    }
}

/// `δ(u, x, y) = u(x+y) + u(x−y) − 2u(x)`.
pub fn second_difference<F: Field + ?Sized>(u: &F, x: &Point, y: &Point) -> f64 {
    u.value(&(x + y)) + u.value(&(x - y)) - 2.0 * u.value(x)
}

/// `w̄_x(y) = √(v_x(x+y) · v_x(x−y))`.
pub fn wbar(pot: &Potential, x: &Point, y: &Point) -> f64 {
    pot.sym_height(x, y)
}

fn check_finite<F: Field + ?Sized>(u: &F, x: &Point) -> Result<()> {
    let v = u.value(x);
    if !v.is_finite() {
        return Err(Error::Data(format!("non-finite value at ({}, {})", x.x, x.y)));
    }
    Ok(())
}

/// `M⁺u(x)` or `M⁻u(x)` depending on `spec.selection`.
pub fn extremal<F: Field + ?Sized>(
    pot: &Potential,
    u: &F,
    x: &Point,
    spec: &KernelSpec,
    plan: &QuadraturePlan,
) -> Result<f64> {
    spec.validate()?;
    let op = match spec.selection {
        Selection::ExtremalPlus => Operator::Plus,
        Selection::ExtremalMinus => Operator::Minus,
        other => return Err(Error::Spec(format!("{other:?} is not an extremal selection"))),
    };
    check_finite(u, x)?;
    let st = PointStencil::build(pot, u, x, spec.sigma, plan)?;
    st.apply(u, spec, &op)
}

/// Both extremal values `(M⁻u(x), M⁺u(x))` on one shared stencil.
pub fn extremal_pair<F: Field + ?Sized>(
    pot: &Potential,
    u: &F,
    x: &Point,
    spec: &KernelSpec,
    plan: &QuadraturePlan,
) -> Result<(f64, f64)> {
    spec.validate()?;
    check_finite(u, x)?;
    let st = PointStencil::build(pot, u, x, spec.sigma, plan)?;
    Ok((st.apply(u, spec, &Operator::Minus)?, st.apply(u, spec, &Operator::Plus)?))
}

/// `∫ δ(u, x, y) K_x(y) dy` for the kernel given by `rule`.
pub fn linear_apply<F: Field + ?Sized>(
    pot: &Potential,
    u: &F,
    x: &Point,
    spec: &KernelSpec,
    rule: &KernelRule,
    plan: &QuadraturePlan,
) -> Result<f64> {
    spec.validate()?;
    check_finite(u, x)?;
    let st = PointStencil::build(pot, u, x, spec.sigma, plan)?;
    st.check_rule(spec, rule)?;
    st.apply(u, spec, &Operator::Linear(rule.clone()))
}

fn isaacs_on(st: &PointStencil, u: &dyn Field, spec: &KernelSpec, families: &[Vec<KernelRule>]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for fam in families {
        let mut worst = f64::NEG_INFINITY;
        for rule in fam {
            worst = worst.max(st.apply(u, spec, &Operator::Linear(rule.clone()))?);
        }
        best = best.min(worst);
    }
    Ok(best)
}

fn check_families(st: &PointStencil, spec: &KernelSpec, families: &[Vec<KernelRule>]) -> Result<()> {
    if families.is_empty() || families.iter().any(|f| f.is_empty()) {
        return Err(Error::Config("Isaacs families must be nonempty".into()));
    }
    for rule in families.iter().flatten() {
        st.check_rule(spec, rule)?;
    }
    Ok(())
}

/// `inf_α sup_β L_{αβ}u(x)` over `families[α][β]`.
pub fn isaacs_apply<F: Field>(
    pot: &Potential,
    u: &F,
    x: &Point,
    spec: &KernelSpec,
    families: &[Vec<KernelRule>],
    plan: &QuadraturePlan,
) -> Result<f64> {
    spec.validate()?;
    check_finite(u, x)?;
    let st = PointStencil::build(pot, u, x, spec.sigma, plan)?;
    check_families(&st, spec, families)?;
    isaacs_on(&st, u, spec, families)
}

/// The family `{λ, Λ} × {λ, Λ}` of constant multipliers.
pub fn default_families(spec: &KernelSpec) -> Vec<Vec<KernelRule>> {
    vec![
        vec![KernelRule::lower(spec), KernelRule::upper(spec)],
        vec![KernelRule::midpoint(spec), KernelRule::upper(spec)],
    ]
}

/// Values of the ellipticity sandwich `M⁻(u−v) ≤ Iu − Iv ≤ M⁺(u−v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub m_minus: f64,
    pub difference: f64,
    pub m_plus: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Evaluates all three quantities on one shared stencil (built for `u − v`)
/// and fails if the sandwich is violated beyond `1e-6 · scale`.
pub fn ellipticity_check<U: Field, V: Field>(
    pot: &Potential,
    u: &U,
    v: &V,
    x: &Point,
    spec: &KernelSpec,
    families: &[Vec<KernelRule>],
    plan: &QuadraturePlan,
) -> Result<EllipticityReport> {
    spec.validate()?;
    check_finite(u, x)?;
    check_finite(v, x)?;
    let n = u.dim();
    let diff = crate::grid::FnField::new(n, u.sup_abs() + v.sup_abs(), |p: &Point| u.value(p) - v.value(p));
    let st = PointStencil::build(pot, &diff, x, spec.sigma, plan)?;
    check_families(&st, spec, families)?;
    let iu = isaacs_on(&st, u, spec, families)?;
    let iv = isaacs_on(&st, v, spec, families)?;
    let m_minus = st.apply(&diff, spec, &Operator::Minus)?;
    let m_plus = st.apply(&diff, spec, &Operator::Plus)?;
    let difference = iu - iv;
    let scale = 1.0 + m_minus.abs().max(m_plus.abs()).max(iu.abs()).max(iv.abs());
    let tolerance = 1e-6 * scale;
    let holds = m_minus <= difference + tolerance && difference <= m_plus + tolerance;
    let report = EllipticityReport {
        m_minus,
        difference,
        m_plus,
        tolerance,
        holds,
    };
    if !holds {
        return Err(Error::Ellipticity {
            point: *x,
            detail: format!("M⁻ = {m_minus}, Iu − Iv = {difference}, M⁺ = {m_plus}"),
        });
    }
    Ok(report)
}

/// Samples the multiplier of `rule` on a ring of increments and reports
/// the first violation of the class bounds.
pub fn assert_class(spec: &KernelSpec, rule: &KernelRule, x: &Point, n: usize, radius: f64) -> Result<()> {
    for k in 0..64 {
        let r = radius * 2f64.powf(-(k % 16) as f64);
        for d in geom::directions(n, 16, 0.1 * k as f64) {
            rule.check(spec, x, &(r * d))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
