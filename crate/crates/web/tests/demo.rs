use nonlocal_ma_web::{section_boundary, solve_1d, tent_operators};

#[test]
fn isotropic_section_is_a_circle() {
    let b = section_boundary("isotropic", 0.0, 0.3, -0.2, 0.5, 64).unwrap();
    assert_eq!(b.x.len(), 64);
    // S_r of ½|x|² has Euclidean radius r√2
    let radius = 0.5 * 2f64.sqrt();
    for (x, y) in b.x.iter().zip(&b.y) {
        assert!(((x - 0.3).hypot(y + 0.2) - radius).abs() < 1e-9);
    }
    let area = std::f64::consts::PI * radius * radius;
    assert!((b.volume - area).abs() < 1e-3 * area, "{}", b.volume);
}

#[test]
fn anisotropic_section_is_stretched() {
    let b = section_boundary("anisotropic", 4.0, 0.0, 0.0, 1.0, 128).unwrap();
    let wx = b.x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let wy = b.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!((wy / wx - 2.0).abs() < 1e-3, "{wx} {wy}");
}

#[test]
fn symmetric_step_solution_is_monotone_and_bounded() {
    let s = solve_1d(true, 1.0, 1.0, 1.5, 64, 1.0, 0.0).unwrap();
    assert!(s.converged);
    assert_eq!(s.x.len(), 65);
    assert!(s.u.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!(s.u.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    // equal multipliers and odd data: one half at the centre
    assert!((s.u[32] - 0.5).abs() < 1e-8, "{}", s.u[32]);
}

#[test]
fn tent_operators_are_ordered() {
    let p = tent_operators("isotropic", 0.0, 1.0, 2.0, 1.2, 1.0, 21).unwrap();
    assert_eq!(p.x.len(), 21);
    for (lo, hi) in p.m_minus.iter().zip(&p.m_plus) {
        assert!(lo <= hi);
    }
    // the tent peaks at the origin, where both operators are negative
    assert!(p.m_plus[10] < 0.0);
}

#[test]
fn bad_inputs_are_reported() {
    assert!(section_boundary("saddle", 0.0, 0.0, 0.0, 1.0, 64).is_err());
    assert!(solve_1d(true, 2.0, 1.0, 1.5, 64, 1.0, 0.0).is_err());
    assert!(solve_1d(true, 1.0, 1.0, 1.5, 1 << 20, 1.0, 0.0).is_err());
    assert!(tent_operators("isotropic", 0.0, 1.0, 2.0, 2.5, 1.0, 21).is_err());
}
