use thiserror::Error;

use crate::geom::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("catalog violation: det D²φ = {det} at ({}, {})", .point.x, .point.y)]
    CatalogViolation { point: Point, det: f64 },

    #[error("section S_{r}({}, {}) is unbounded along ({}, {})", .center.x, .center.y, .direction.x, .direction.y)]
    UnboundedSection {
        center: Point,
        r: f64,
        direction: Point,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("engulfing failure: γ > {limit} needed at center ({}, {}), r = {r}", .center.x, .center.y)]
    EngulfingFailure { center: Point, r: f64, limit: f64 },

    #[error("refinement needed: {0}")]
    RefinementNeeded(String),

    #[error("deformation failure: δ = {delta:.3e} at ({}, {})", .point.x, .point.y)]
    DeformationFailure { point: Point, delta: f64 },

    #[error("kernel spec error: {0}")]
    Spec(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("kernel-class violation: multiplier {value} outside [{lo}, {hi}] at increment ({}, {})", .increment.x, .increment.y)]
    KernelClass {
        value: f64,
        lo: f64,
        hi: f64,
        increment: Point,
    },

    #[error("ellipticity failure at ({}, {}): {detail}", .point.x, .point.y)]
    Ellipticity { point: Point, detail: String },

    #[error("m too small: δ₀ = {delta0:.4e} ≤ 0, minimal admissible m is {min_m:.4}")]
    MTooSmall { delta0: f64, min_m: f64 },

    #[error("barrier failure: no σ passes, worst value {value:.4e} at ({}, {})", .point.x, .point.y)]
    BarrierFailure { point: Point, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("comparison failure: u - v = {excess:.4e} at ({}, {})", .point.x, .point.y)]
    ComparisonFailure { point: Point, excess: f64 },

    #[error("runaway path: more than {0} jumps")]
    Runaway(usize),

    #[error("geometry pathology: {0}")]
    Pathology(String),

    #[error("insufficient range: {0}")]
    InsufficientRange(String),

    #[error("grid artifact: {0}")]
    GridArtifact(String),

    #[error("class violation: {0}")]
    ClassViolation(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),
}
