use kohler_core::effective::{analyze, EffectiveReport};
use kohler_core::microstructure::{sample, GridField, MaterialSpec, Profile1d};
use kohler_core::oracles::{
    checkerboard_equality_check, laminate_gap_2p, layered_equality_classify, layered_gap, LayeredEquality,
    LayeredProfile, Verdict,
};
use kohler_core::solver::{solve_p0, solve_p1, SolverConfig};
use kohler_core::tensor::{sym_eigenvalues, Mat3, Vec3};
use proptest::prelude::*;

fn smooth(seed: u64, n: usize) -> GridField {
    sample(
        &MaterialSpec::SmoothRandom {
            seed,
            modes: 2,
            contrast: 3.0,
            hall_amplitude: 1.0,
        },
        n,
    )
    .unwrap()
}

fn rel(a: &Mat3, b: &Mat3) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

// y' = Q y with Q e1 = e2, Q e2 = e3, Q e3 = e1
fn cyclic() -> Mat3 {
    Mat3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

fn rotated(field: &GridField) -> GridField {
    let q = cyclic();
    let [n, _, _] = field.dims();
    let mut sigma = Vec::with_capacity(field.len());
    let mut s = Vec::with_capacity(field.len());
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let src = field.index(j, k, i);
                sigma.push(q * field.sigma()[src] * q.transpose());
                s.push(q * field.s()[src] * q.transpose());
            }
        }
    }
    GridField::new([n; 3], sigma, s, None).unwrap()
}

fn report(field: &GridField, h: Vec3) -> EffectiveReport {
    analyze(field, &h, &SolverConfig::default()).unwrap()
}

#[test]
fn rotation_covariance() {
    let field = smooth(7, 8);
    let h = Vec3::new(0.3, -0.7, 0.5);
    let a = report(&field, h);
    let q = cyclic();
    let b = report(&rotated(&field), q * h);
    let conj = |m: &Mat3| q * m * q.transpose();
    assert!(rel(&b.sigma_star, &conj(&a.sigma_star)) < 1e-7);
    assert!(rel(&b.s_star, &conj(&a.s_star)) < 1e-7);
    assert!(rel(&b.m_star, &conj(&a.m_star)) < 1e-6);
    assert!(rel(&b.gap, &conj(&a.gap)) < 1e-6);
}

#[test]
fn corrector_means_and_linearity() {
    let field = smooth(3, 8);
    let cfg = SolverConfig::default();
    let p0 = solve_p0(&field, &cfg).unwrap().p0;
    assert!((p0.mean() - Mat3::identity()).norm() < 1e-12);
    let h = Vec3::new(0.2, 0.9, -0.4);
    let p1 = solve_p1(&field, &h, &p0, &cfg).unwrap();
    assert!(p1.mean().norm() < 1e-12);
    let p1_neg = solve_p1(&field, &(-h), &p0, &cfg).unwrap();
    let p1_two = solve_p1(&field, &(h * 2.0), &p0, &cfg).unwrap();
    let scale = p1.values.iter().map(|m| m.norm()).fold(0.0, f64::max);
    for ((a, b), c) in p1.values.iter().zip(&p1_neg.values).zip(&p1_two.values) {
        assert!((a + b).norm() <= 1e-7 * scale);
        assert!((a * 2.0 - c).norm() <= 1e-7 * scale);
    }
}

#[test]
fn onsager_parity_and_quadratic_scaling() {
    let field = smooth(11, 8);
    let h = Vec3::new(0.5, 0.1, -0.8);
    let a = report(&field, h);
    let b = report(&field, -h);
    let c = report(&field, h * 2.0);
    assert!(rel(&b.m_star, &a.m_star) < 1e-7);
    assert!(rel(&b.gap, &a.gap) < 1e-6);
    assert!(rel(&c.m_star, &(a.m_star * 4.0)) < 1e-7);
    assert!(rel(&c.gap, &(a.gap * 4.0)) < 1e-6);
    assert!(rel(&a.n_star_direct, &a.n_star) < 1e-6);
    assert!(rel(&a.hall_star_local, &a.hall_star) < 1e-6);
}

#[test]
fn second_order_laminate_gap_is_nonnegative() {
    let thetas: Vec<f64> = (0..20).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 19.0) * 0.999).collect();
    let alphas: Vec<f64> = (0..20).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0)).collect();
    for &t in &thetas {
        for &a in &alphas {
            let (d11, d22) = laminate_gap_2p(t, a, 1.0, 1).unwrap();
            let scale = 1e-10 * (1.0 + d11.abs() + d22.abs());
            assert!(d11 >= -scale && d22 >= -scale, "theta {t}, alpha2 {a}: ({d11}, {d22})");
        }
    }
}

#[test]
fn checkerboard_with_swapped_hall_pair_is_not_equal() {
    // r = C / alpha would need (2C, 2C, C, C); swapping the middle pair breaks it
    let alpha = [2.0, 1.0, 2.0, 4.0];
    let r = [2.0, 1.0, 1.0, 2.0];
    let h = Vec3::x();
    assert_eq!(checkerboard_equality_check(&alpha, &r, &h).unwrap(), Verdict::NotEqual);
    let field = sample(&MaterialSpec::Checkerboard4 { alpha, hall: r }, 32).unwrap();
    let rep = report(&field, h);
    assert!(sym_eigenvalues(&rep.gap)[2] > 1e-3);
}

#[derive(Debug, Clone, Copy)]
enum HallKind {
    Free,
    Constant,
    InverseConductivity,
}

fn layered_strategy() -> impl Strategy<Value = (LayeredProfile, Vec3)> {
    let normal = prop::sample::select(vec![[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, 2, 0], [2, -1, 1], [1, 1, 1]]);
    let kind = prop::sample::select(vec![HallKind::Free, HallKind::Constant, HallKind::InverseConductivity]);
    let phases = (2usize..=4).prop_flat_map(|m| {
        (
            prop::collection::vec(0.1f64..1.0, m),
            prop::collection::vec(0.3f64..5.0, m),
            prop::collection::vec(-2.0f64..2.0, m),
        )
    });
    let h_kind = 0usize..4;
    let h_raw = prop::array::uniform3(-1.0f64..1.0);
    (normal, kind, phases, h_kind, h_raw, 0.2f64..2.0).prop_map(|(normal, kind, (w, a, r), hk, hr, c)| {
        let total: f64 = w.iter().sum();
        let fractions: Vec<f64> = w.iter().map(|x| x / total).collect();
        let r: Vec<f64> = match kind {
            HallKind::Free => r,
            HallKind::Constant => vec![c; a.len()],
            HallKind::InverseConductivity => a.iter().map(|x| c / x).collect(),
        };
        let profile = LayeredProfile {
            normal,
            a: Profile1d::phases(&fractions, &a),
            r: Profile1d::phases(&fractions, &r),
        };
        let xi = profile.direction();
        let mut h = Vec3::from(hr);
        if h.norm() < 1e-3 {
            h = Vec3::new(0.3, 0.2, 0.1);
        }
        let h = match hk {
            0 => h,
            1 => xi * h.norm(),
            2 => {
                let t = h - xi * h.dot(&xi);
                if t.norm() < 1e-3 {
                    xi.cross(&Vec3::x()).try_normalize(1e-6).unwrap_or(xi.cross(&Vec3::y()).normalize())
                } else {
                    t
                }
            }
            _ => Vec3::zeros(),
        };
        (profile, h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn layered_gap_is_psd((profile, h) in layered_strategy()) {
        let g = layered_gap(&profile, &h);
        let e = sym_eigenvalues(&g);
        prop_assert!(e[0] >= -1e-10 * (1.0 + g.norm()), "eigenvalues {e:?}");
        prop_assert!((g - g.transpose()).norm() <= 1e-12 * (1.0 + g.norm()));
    }

    #[test]
    fn layered_classifier_matches_gap((profile, h) in layered_strategy()) {
        let g = layered_gap(&profile, &h);
        let scale = profile.average(|a, r| a * a * a * r * r).max(1e-12) * h.norm_squared().max(1.0);
        let zero = g.norm() <= 1e-10 * scale;
        let equal = layered_equality_classify(&profile, &h) != LayeredEquality::NotEqual;
        prop_assert_eq!(zero, equal, "gap {:e}, scale {:e}", g.norm(), scale);
    }

    #[test]
    fn layered_gap_is_even_and_quadratic((profile, h) in layered_strategy(), t in 0.1f64..3.0) {
        let g = layered_gap(&profile, &h);
        let tol = 1e-11 * (1.0 + g.norm()) * t * t;
        prop_assert!((layered_gap(&profile, &(-h)) - g).norm() <= tol);
        prop_assert!((layered_gap(&profile, &(h * t)) - g * (t * t)).norm() <= tol);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn numeric_gap_is_psd(seed in 0u64..10_000, hr in prop::array::uniform3(-1.0f64..1.0)) {
        let rep = report(&smooth(seed, 8), Vec3::from(hr));
        prop_assert!(rep.gap_eigenvalues[0] >= -rep.gap_tolerance, "{:?} vs {:e}", rep.gap_eigenvalues, rep.gap_tolerance);
        prop_assert!(rep.energy_mismatch < 1e-6);
        prop_assert!(rep.sigma_star_skew < 1e-6);
    }
}
