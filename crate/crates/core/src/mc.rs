//! Monte Carlo exit payoffs of the pure jump process generated by a single
//! kernel `K_x(y) = (2−σ) m w̄_x(y)^{−(n+σ)/2}` (the case λ = Λ).
//!
//! Jumps with `w̄_x(y) < η²` are dropped. Only the exit point matters for
//! the payoff, so the embedded jump chain is simulated directly: proposals
//! come from the Pareto law `∝ |y|^{−n−σ}` on `|y| ≥ η√(2/μ_hi)` and are
//! thinned by `K_x(y)/K_model(y)`, where `K_model` uses the lower height
//! bound `½μ_lo|y|²`.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{self, Aabb, Point};
use crate::grid::ExteriorRule;
use crate::kernels::KernelSpec;
use crate::potential::Potential;
use crate::{Error, Result};

/// Proposals per path before the path is declared a runaway.
pub const MAX_PROPOSALS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpProcessConfig {
    pub potential: Potential,
    pub spec: KernelSpec,
    pub eta: f64,
    pub payoff: ExteriorRule,
    pub seed: u64,
    /// Bound on `|D²u|` used in the truncation bias estimate.
    pub hessian_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub bias_bound: f64,
    pub paths: usize,
    pub mean_jumps: f64,
}

struct Sampler {
    pot: Potential,
    n: usize,
    sigma: f64,
    eta2: f64,
    r_min: f64,
    mu_lo: f64,
}

impl Sampler {
    fn propose(&self, rng: &mut ChaCha8Rng) -> Point {
        let u: f64 = rng.random();
        let r = self.r_min * (1.0 - u).powf(-1.0 / self.sigma);
        let dir = if self.n == 1 {
            geom::point1(if rng.random::<bool>() { 1.0 } else { -1.0 })
        } else {
            let t = rng.random::<f64>() * std::f64::consts::TAU;
            geom::point2(t.cos(), t.sin())
        };
        r * dir
    }

    /// Acceptance probability `K/K_model` on the truncated support.
    fn accept(&self, x: &Point, y: &Point) -> f64 {
        let wb = self.pot.sym_height(x, y);
        if wb < self.eta2 {
            return 0.0;
        }
        let model = 0.5 * self.mu_lo * y.norm_squared();
        (wb / model).powf(-0.5 * (self.n as f64 + self.sigma)).min(1.0)
    }
}

/// Runs one path; `None` when another path already ran away.
fn path(
    s: &Sampler,
    x0: Point,
    domain: &Aabb,
    payoff: &ExteriorRule,
    rng: &mut ChaCha8Rng,
    index: usize,
    abort: &AtomicBool,
) -> Result<Option<(f64, usize)>> {
    let mut x = x0;
    let mut jumps = 0;
    for k in 0..MAX_PROPOSALS {
        if k % 4096 == 0 && abort.load(Ordering::Relaxed) {
            return Ok(None);
        }
        let y = s.propose(rng);
        let a = s.accept(&x, &y);
        if a < 1.0 && rng.random::<f64>() >= a {
            continue;
        }
        x += y;
        jumps += 1;
        if !domain.contains(&x) {
            return Ok(Some((payoff.value(&x), jumps)));
        }
    }
    abort.store(true, Ordering::Relaxed);
    Err(Error::Runaway(index))
}

/// Sample mean and standard error of `g(X_τ)` over `paths` independent
/// paths started at `x0`; path `i` draws from stream `i` of the seed.
pub fn estimate_exit_payoff(cfg: &JumpProcessConfig, x0: &Point, domain: &Aabb, paths: usize) -> Result<McEstimate> {
    let spec = &cfg.spec;
    spec.validate()?;
    if spec.lambda != spec.cap_lambda {
        return Err(Error::Spec("the jump process needs λ = Λ".into()));
    }
    if !(cfg.eta > 0.0 && cfg.eta.is_finite()) {
        return Err(Error::Config(format!("eta must be positive, got {}", cfg.eta)));
    }
    if paths < 100 {
        return Err(Error::Config(format!("need at least 100 paths, got {paths}")));
    }
    let n = cfg.potential.n;
    if domain.n != n {
        return Err(Error::Config("domain and potential dimensions differ".into()));
    }
    let x0 = geom::project(*x0, n);
    if !domain.contains_open(&x0) {
        return Err(Error::Precondition("x0 must lie inside the domain".into()));
    }
    let (mu_lo, mu_hi) = cfg.potential.hessian_bounds();
    let sampler = Sampler {
        pot: cfg.potential,
        n,
        sigma: spec.sigma,
        eta2: cfg.eta * cfg.eta,
        r_min: cfg.eta * (2.0 / mu_hi).sqrt(),
        mu_lo,
    };
    let abort = AtomicBool::new(false);
    let results = crate::par::map_range(paths, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        path(&sampler, x0, domain, &cfg.payoff, &mut rng, i, &abort)
    });
    if let Some(e) = results.iter().position(|r| r.is_err()) {
        return Err(Error::Runaway(e));
    }
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut jumps = 0usize;
    for r in results {
        let Some((g, j)) = r? else { continue };
        sum += g;
        sum2 += g * g;
        jumps += j;
    }
    let count = paths as f64;
    let mean = sum / count;
    let var = ((sum2 - count * mean * mean) / (count - 1.0)).max(0.0);
    let mean_jumps = jumps as f64 / count;

    let sigma = spec.sigma;
    let exponent = -0.5 * (n as f64 + sigma);
    let sphere = geom::sphere_measure(n);
    let rho = cfg.eta * (2.0 / mu_lo).sqrt();
    // second moment of the dropped jumps and a lower bound on the jump rate
    let small = spec.cap_lambda * (0.5 * mu_lo).powf(exponent) * sphere * rho.powf(2.0 - sigma);
    let rate = spec.lambda * (2.0 - sigma) * (0.5 * mu_hi).powf(exponent) * sphere * rho.powf(-sigma) / sigma;
    let bias_bound = cfg.hessian_scale * small * mean_jumps / rate;
    Ok(McEstimate {
        mean,
        std_error: (var / count).sqrt(),
        bias_bound,
        paths,
        mean_jumps,
    })
}
