use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geom::{point1, point2, Aabb};
use crate::grid::{ExteriorRule, FnField, Grid, GridFunction};

fn spec(lambda: f64, cap: f64, sigma: f64) -> KernelSpec {
    KernelSpec::new(lambda, cap, sigma, Selection::ExtremalPlus).unwrap()
}

fn plan1() -> QuadraturePlan {
    QuadraturePlan::new(0.02, 8.0)
}

fn bump(n: usize) -> FnField<impl Fn(&Point) -> f64 + Sync> {
    FnField::new(n, 1.0, |p: &Point| (-p.norm_squared()).exp())
}

fn wavy(n: usize, a: f64, b: f64) -> FnField<impl Fn(&Point) -> f64 + Sync> {
    FnField::new(n, 2.0, move |p: &Point| (a * p.x).sin() * (-p.norm_squared() / 4.0).exp() + b * (p.x * p.y).cos() / (1.0 + p.norm_squared()))
}

#[test]
fn second_difference_of_quadratic_is_exact() {
    let u = FnField::new(2, 1e9, |p: &Point| p.norm_squared());
    let x = point2(0.3, -1.2);
    let y = point2(0.7, 0.4);
    assert_relative_eq!(second_difference(&u, &x, &y), 2.0 * y.norm_squared(), epsilon = 1e-12);
}

#[test]
fn second_difference_of_affine_vanishes() {
    let u = FnField::new(2, 1e9, |p: &Point| 3.0 - 2.0 * p.x + 0.5 * p.y);
    assert!(second_difference(&u, &point2(1.0, 2.0), &point2(-0.3, 0.9)).abs() < 1e-12);
}

#[test]
fn sampled_gaussian_second_difference() {
    let grid = Grid::new(Aabb::square(-2.0, 2.0), 512).unwrap();
    let u = GridFunction::from_fn(grid, ExteriorRule::zero(), |p| (-p.norm_squared()).exp());
    let d = second_difference(&u, &point2(0.0, 0.0), &point2(0.5, 0.0));
    assert!((d - (-0.442_398_433_857_190_2)).abs() < 1e-4, "{d}");
}

#[test]
fn ring_radii_follow_the_dyadic_rule() {
    let r = QuadraturePlan::ring_radii(1.5, 1e-3, 10.0);
    assert!(r.contains(&0.25));
    for w in r.windows(2) {
        assert_relative_eq!(w[1], w[0] / 2.0, max_relative = 1e-14);
    }
    assert!(r.iter().all(|&v| v > 1e-3 && v < 10.0));
    // σ close to 2 pushes r_0 towards zero without underflow
    let r = QuadraturePlan::ring_radii(1.999, 1e-6, 1.0);
    assert!(r.is_empty() || r.iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn extremal_of_affine_vanishes() {
    let pot = Potential::perturbed(0.3, 2).unwrap();
    let u = FnField::new(2, 10.0, |p: &Point| 1.0 + p.x - 2.0 * p.y);
    for sel in [Selection::ExtremalPlus, Selection::ExtremalMinus] {
        let s = spec(1.0, 2.0, 1.5).with_selection(sel);
        let v = extremal(&pot, &u, &point2(0.2, 0.1), &s, &QuadraturePlan::new(0.05, 6.0)).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }
}

#[test]
fn brute_force_oracle_one_dimension() {
    // direct graded midpoint sum with 10⁶ nodes of
    // (2−σ)∫ (u(y)+u(−y)−2u(0)) (½y²)^{−(1+σ)/2} dy, u = (1−y²)⁺
    let sigma = 1.5;
    let kernel = |y: f64| (2.0 - sigma) * (0.5 * y * y).powf(-(1.0 + sigma) / 2.0);
    let u = |y: f64| (1.0 - y * y).max(0.0);
    let nodes = 1_000_000;
    let mut oracle = 0.0;
    // y = t⁴ on (0, 1] resolves the singular end; the tail by s = 1/t^{1/σ}
    for k in 0..nodes / 2 {
        let t = (k as f64 + 0.5) / (nodes / 2) as f64;
        let y = t.powi(4);
        oracle += 2.0 * (2.0 * u(y) - 2.0) * kernel(y) * 4.0 * t.powi(3) / (nodes / 2) as f64;
        let s = t.powf(-1.0 / sigma);
        let jac = s / (sigma * t);
        oracle += 2.0 * (2.0 * u(s) - 2.0) * kernel(s) * jac / (nodes / 2) as f64;
    }
    assert!((oracle - (-12.684_875_893_362_356)).abs() < 1e-2 * 12.68, "{oracle}");

    let pot = Potential::isotropic(1);
    let s = spec(1.0, 1.0, sigma);
    let f = FnField::new(1, 1.0, move |p: &Point| u(p.x));
    let v = extremal(&pot, &f, &point1(0.0), &s, &plan1()).unwrap();
    assert!((v - oracle).abs() < 0.01 * oracle.abs(), "{v} vs {oracle}");

    // same function sampled on a grid with zero exterior data
    let grid = Grid::new(Aabb::interval(-2.0, 2.0), 1024).unwrap();
    let g = GridFunction::from_fn(grid, ExteriorRule::zero(), |p| u(p.x));
    let plan = QuadraturePlan::new(2.0 * grid.h, 4.0);
    let v = extremal(&pot, &g, &point1(0.0), &s, &plan).unwrap();
    assert!((v - oracle).abs() < 0.01 * oracle.abs(), "{v} vs {oracle}");
}

#[test]
fn sign_symmetry_is_exact() {
    let pot = Potential::perturbed(0.2, 2).unwrap();
    let s = spec(1.0, 2.0, 1.3);
    let plan = QuadraturePlan::new(0.05, 6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let (a, b) = (rng.random_range(0.5..3.0), rng.random_range(-1.0..1.0));
        let u = wavy(2, a, b);
        let neg = FnField::new(2, 2.0, |p: &Point| -u.value(p));
        let x = point2(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (lo, _) = extremal_pair(&pot, &u, &x, &s, &plan).unwrap();
        let (_, hi_neg) = extremal_pair(&pot, &neg, &x, &s, &plan).unwrap();
        assert!((hi_neg + lo).abs() <= 1e-10 * lo.abs().max(1e-300), "{hi_neg} {lo}");
    }
}

#[test]
fn affine_invariance_and_homogeneity() {
    let pot = Potential::isotropic(1);
    let s = spec(1.0, 2.0, 1.5);
    let u = wavy(1, 2.0, 0.0);
    let shifted = FnField::new(1, 20.0, |p: &Point| u.value(p) + 0.7 - 0.3 * p.x);
    let scaled = FnField::new(1, 6.0, |p: &Point| 3.0 * u.value(p));
    let x = point1(0.35);
    let base = extremal(&pot, &u, &x, &s, &plan1()).unwrap();
    let sh = extremal(&pot, &shifted, &x, &s, &plan1()).unwrap();
    let sc = extremal(&pot, &scaled, &x, &s, &plan1()).unwrap();
    assert_relative_eq!(sh, base, max_relative = 1e-9);
    assert_relative_eq!(sc, 3.0 * base, max_relative = 1e-10);
}

#[test]
fn stable_as_sigma_tends_to_two() {
    // the limit of the normalised operator at σ = 2 is 2^{5/2} u''(0) in this setting
    let pot = Potential::isotropic(1);
    let u = bump(1);
    let mut prev = None;
    for sigma in [1.5, 1.9, 1.99] {
        let v = extremal(&pot, &u, &point1(0.0), &spec(1.0, 1.0, sigma), &plan1()).unwrap();
        assert!(v.is_finite() && v.abs() < 40.0, "{sigma}: {v}");
        prev = Some(v);
    }
    let limit = 2f64.powf(2.5) * -2.0;
    assert!((prev.unwrap() - limit).abs() < 0.1 * limit.abs(), "{prev:?}");
}

#[test]
fn lower_kernel_matches_minus_for_convex_data() {
    let pot = Potential::isotropic(1);
    let s = spec(1.0, 2.0, 1.5);
    let u = FnField::new(1, 1e3, |p: &Point| (1.0 + p.x * p.x).sqrt());
    let x = point1(0.4);
    let lin = linear_apply(&pot, &u, &x, &s, &KernelRule::lower(&s), &plan1()).unwrap();
    let m = extremal(&pot, &u, &x, &s.with_selection(Selection::ExtremalMinus), &plan1()).unwrap();
    assert_relative_eq!(lin, m, max_relative = 1e-12);
    assert!(lin > 0.0);
}

#[test]
fn class_violation_is_reported() {
    let pot = Potential::isotropic(2);
    let s = spec(1.0, 2.0, 1.5);
    let u = bump(2);
    let rule = KernelRule::Angular { mid: 1.5, amp: 0.8 };
    let err = linear_apply(&pot, &u, &point2(0.0, 0.0), &s, &rule, &QuadraturePlan::new(0.1, 4.0)).unwrap_err();
    assert!(matches!(err, Error::KernelClass { .. }), "{err}");
    assert!(assert_class(&s, &KernelRule::Angular { mid: 1.5, amp: 0.5 }, &point2(0.0, 0.0), 2, 1.0).is_ok());
}

#[test]
fn bad_sigma_and_bad_data_are_rejected() {
    assert!(matches!(KernelSpec::new(1.0, 2.0, 2.0, Selection::ExtremalPlus), Err(Error::Spec(_))));
    assert!(matches!(KernelSpec::new(2.0, 1.0, 1.0, Selection::ExtremalPlus), Err(Error::Spec(_))));
    let u = FnField::new(1, 1.0, |_: &Point| f64::NAN);
    let err = extremal(&Potential::isotropic(1), &u, &point1(0.0), &spec(1.0, 1.0, 1.0), &plan1()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    let err = isaacs_apply(&Potential::isotropic(1), &bump(1), &point1(0.0), &spec(1.0, 1.0, 1.0), &[], &plan1());
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn sandwich_on_random_points() {
    let pot = Potential::isotropic(1);
    let s = spec(1.0, 2.0, 1.4);
    let plan = QuadraturePlan::new(0.05, 6.0).fixed(32);
    let u = wavy(1, 3.0, 0.0);
    let families = default_families(&s);
    let mid = KernelRule::midpoint(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let x = point1(rng.random_range(-1.5..1.5));
        let st = PointStencil::build(&pot, &u, &x, s.sigma, &plan).unwrap();
        let lo = st.apply(&u, &s, &Operator::Minus).unwrap();
        let hi = st.apply(&u, &s, &Operator::Plus).unwrap();
        let lin = st.apply(&u, &s, &Operator::Linear(mid.clone())).unwrap();
        let isa = isaacs_on(&st, &u, &s, &families).unwrap();
        assert!(lo <= lin + 1e-12 && lin <= hi + 1e-12);
        assert!(lo <= isa + 1e-12 && isa <= hi + 1e-12);
    }
}

#[test]
fn single_family_is_linear() {
    let pot = Potential::isotropic(2);
    let s = spec(1.0, 2.0, 1.5);
    let rule = KernelRule::Oscillating { base: 1.5, amp: 0.4, freq: 3.0 };
    let plan = QuadraturePlan::new(0.1, 4.0).fixed(16);
    let u = wavy(2, 1.0, 0.5);
    let x = point2(0.3, 0.2);
    let a = isaacs_apply(&pot, &u, &x, &s, &[vec![rule.clone()]], &plan).unwrap();
    let b = linear_apply(&pot, &u, &x, &s, &rule, &plan).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ellipticity_on_perturbed_potential() {
    let pot = Potential::perturbed(0.2, 2).unwrap();
    let s = spec(1.0, 2.0, 1.6);
    let plan = QuadraturePlan::new(0.1, 4.0).fixed(16);
    let u = wavy(2, 1.3, 0.2);
    let v = wavy(2, 0.7, -0.4);
    let fam = default_families(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let x = point2(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = ellipticity_check(&pot, &u, &v, &x, &s, &fam, &plan).unwrap();
        assert!(r.holds);
    }
    let same = ellipticity_check(&pot, &u, &u, &point2(0.1, 0.1), &s, &fam, &plan).unwrap();
    assert_eq!((same.m_minus, same.difference, same.m_plus), (0.0, 0.0, 0.0));
    let w = FnField::new(2, 10.0, |p: &Point| u.value(p) + 2.0 - p.x + 3.0 * p.y);
    let aff = ellipticity_check(&pot, &u, &w, &point2(0.1, 0.1), &s, &fam, &plan).unwrap();
    assert!(aff.difference.abs() < 1e-9 && aff.m_minus.abs() < 1e-9 && aff.m_plus.abs() < 1e-9);
}

#[test]
fn lattice_stencil_is_monotone_and_consistent() {
    let pot = Potential::isotropic(1);
    let s = spec(1.0, 1.0, 1.5);
    let grid = Grid::new(Aabb::interval(-2.0, 2.0), 256).unwrap();
    let u = GridFunction::from_fn(grid, ExteriorRule::zero(), |p| (1.0 - p.x * p.x).max(0.0));
    let idx = grid.nearest(&point1(0.0)).unwrap();
    let st = LatticeStencil::build(&pot, &point1(0.0), s.sigma, grid.h, 6.0).unwrap();
    assert!(st.weights().all(|w| w > 0.0));
    let d = st.deltas(&u, idx);
    let v = st.apply(&point1(0.0), &d, &s, &Operator::Plus);
    assert!((v - (-12.684_875_893_362_356)).abs() < 0.03 * 12.68, "{v}");
}

#[test]
fn lattice_stencil_two_dimensions() {
    let pot = Potential::isotropic(2);
    let s = spec(1.0, 1.0, 1.5);
    let grid = Grid::new(Aabb::square(-2.0, 2.0), 64).unwrap();
    let u = GridFunction::from_fn(grid, ExteriorRule::zero(), |p| (-p.norm_squared()).exp());
    let idx = grid.nearest(&point2(0.0, 0.0)).unwrap();
    let st = LatticeStencil::build(&pot, &point2(0.0, 0.0), s.sigma, grid.h, 3.0).unwrap();
    let v = st.apply(&point2(0.0, 0.0), &st.deltas(&u, idx), &s, &Operator::Plus);
    let q = extremal(&pot, &bump(2), &point2(0.0, 0.0), &s, &QuadraturePlan::new(0.05, 3.0)).unwrap();
    assert!((v - q).abs() < 0.05 * q.abs(), "{v} vs {q}");
}

#[test]
fn power_barrier_values() {
    let pot = Potential::isotropic(1);
    let s = spec(1.0, 2.0, 1.9);
    let params = BarrierParams { m: Some(1.0), ..Default::default() };
    let b = build_barrier(BarrierKind::FPower, &pot, &s, &params).unwrap();
    assert_relative_eq!(b.eval(&point1(2.0)), 0.5);
    assert_relative_eq!(b.eval(&point1(0.1)), 2.0);
    assert_relative_eq!(b.sup(), 2.0);
}

#[test]
fn boundary_moments_isotropic_circle() {
    // ∂S_1 is the circle of radius √2: ∮ (y₁/|y|)² = √2 π, length 2√2 π
    let (i1, p) = boundary_moments(&Potential::isotropic(2)).unwrap();
    assert_relative_eq!(i1, 4.442_882_938_158_366, max_relative = 1e-4);
    assert_relative_eq!(p, 8.885_765_876_316_732, max_relative = 1e-4);
    let s = spec(1.0, 2.0, 1.9);
    let pot = Potential::isotropic(2);
    let err = build_barrier(BarrierKind::FPower, &pot, &s, &BarrierParams { m: Some(1.9), ..Default::default() }).unwrap_err();
    match err {
        Error::MTooSmall { min_m, .. } => assert_relative_eq!(min_m, 2.0, max_relative = 1e-3),
        e => panic!("{e}"),
    }
    assert!(build_barrier(BarrierKind::FPower, &pot, &s, &BarrierParams { m: Some(2.1), ..Default::default() }).is_ok());
}

#[test]
fn normalized_barrier_needs_anchor() {
    let pot = Potential::isotropic(2);
    let s = spec(1.0, 2.0, 1.9);
    assert!(build_barrier(BarrierKind::GNormalized, &pot, &s, &BarrierParams::default()).is_err());
    let norm = crate::sections::fit_ellipsoid(&pot, &point2(0.0, 0.0), 1.0, 64).unwrap();
    let params = BarrierParams { anchor: Some(norm.map), ..Default::default() };
    let b = build_barrier(BarrierKind::GNormalized, &pot, &s, &params).unwrap();
    // the section boundary maps to the unit sphere
    assert_relative_eq!(b.eval(&point2(2f64.sqrt(), 0.0)), 1.0, max_relative = 2e-2);
}

#[test]
fn bump_construction_constraints() {
    let pot = Potential::isotropic(2);
    let s = spec(1.0, 2.0, 1.9);
    let tau = 3.0;
    let params = BarrierParams { s: 0.25, tau: Some(tau), ..Default::default() };
    let b = build_barrier(BarrierKind::PsiBump, &pot, &s, &params).unwrap();
    let inside = crate::sections::interior_samples(&pot, &crate::sections::Section::new(Point::zeros(), tau), 50).unwrap();
    assert!(inside.iter().all(|p| b.eval(p) > 2.0));
    for k in 0..50 {
        let a = k as f64 * 0.37;
        let r = 2.0 * tau * 2f64.sqrt() * (1.0 + 0.02 * k as f64);
        assert_eq!(b.eval(&(r * point2(a.cos(), a.sin()))), 0.0);
    }
    let (dv, dg) = b.paste_defect();
    assert!(dv < 1e-12 * b.sup() && dg < 1e-10 * b.sup());
    // one-sided second differences stay bounded across the paste sphere
    let h = 1e-3;
    let rs = 0.25 * 2f64.sqrt();
    let f = |r: f64| b.eval(&point2(r, 0.0));
    let left = (f(rs) - 2.0 * f(rs - h) + f(rs - 2.0 * h)) / (h * h);
    let right = (f(rs + 2.0 * h) - 2.0 * f(rs + h) + f(rs)) / (h * h);
    let across = (f(rs + h) - 2.0 * f(rs) + f(rs - h)) / (h * h);
    let bound = 2.0 * left.abs().max(right.abs());
    assert!(across.abs() <= bound, "{left} {across} {right}");
}

#[test]
fn power_barrier_is_subsolution_near_two() {
    let pot = Potential::isotropic(1);
    let s = spec(1.0, 2.0, 1.9).with_selection(Selection::ExtremalMinus);
    let b = build_barrier(BarrierKind::FPower, &pot, &s, &BarrierParams::default()).unwrap();
    let r = verify_subsolution(&b, &pot, &s, &Region::Annulus { inner: 1.0, outer: 4.0 }, 200).unwrap();
    assert!(r.passes, "{r:?}");
    assert!(r.sigma0.is_some_and(|s0| s0 <= 1.9));
}

#[test]
fn power_barrier_fails_for_small_sigma() {
    let pot = Potential::isotropic(1);
    let s = spec(1.0, 2.0, 0.5);
    let b = build_barrier(BarrierKind::FPower, &pot, &s, &BarrierParams { m: Some(0.1), ..Default::default() }).unwrap();
    match verify_subsolution(&b, &pot, &s, &Region::Annulus { inner: 1.0, outer: 4.0 }, 40) {
        Ok(r) => assert!(!r.passes, "{r:?}"),
        Err(e) => assert!(matches!(e, Error::BarrierFailure { .. })),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn second_difference_is_even(x in -2.0..2.0f64, y0 in -2.0..2.0f64, y1 in -2.0..2.0f64, a in 0.1..3.0f64) {
        let u = wavy(2, a, 0.3);
        let x = point2(x, 0.5 * x);
        let y = point2(y0, y1);
        prop_assert_eq!(second_difference(&u, &x, &y), second_difference(&u, &x, &-y));
    }

    #[test]
    fn extremal_order(a in 0.2..4.0f64, x in -1.0..1.0f64, sigma in 0.3..1.95f64) {
        let pot = Potential::isotropic(1);
        let s = spec(0.5, 3.0, sigma);
        let u = wavy(1, a, 0.0);
        let (lo, hi) = extremal_pair(&pot, &u, &point1(x), &s, &QuadraturePlan::new(0.05, 4.0).fixed(24)).unwrap();
        prop_assert!(lo <= hi);
    }
}
