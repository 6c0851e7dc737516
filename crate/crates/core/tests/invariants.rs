use manakov_core::floquet::{
    char_data, discriminant_centered, identity_residuals, multipliers, multipliers_from_cubic, IDENTITY_TOL,
};
use manakov_core::linalg::c;
use manakov_core::zs::{zs_monodromy, ZsPotential};
use manakov_core::{PeriodicPotential, C64};
use proptest::prelude::*;

fn coeff() -> impl Strategy<Value = C64> {
    (-0.2f64..0.2, -0.2f64..0.2).prop_map(|(a, b)| c(a, b))
}

fn potential() -> impl Strategy<Value = PeriodicPotential> {
    prop::collection::vec((-3i64..=3, coeff(), coeff()), 1..4)
        .prop_map(|m| PeriodicPotential::from_modes(&m).unwrap())
}

fn zs_potential() -> impl Strategy<Value = ZsPotential> {
    (prop::collection::vec((-3i64..=3, coeff()), 1..4), 0.0f64..std::f64::consts::TAU)
        .prop_map(|(m, th)| ZsPotential::from_modes(&m, [c(th.cos(), 0.0), c(0.0, th.sin())]).unwrap())
}

fn lambda() -> impl Strategy<Value = C64> {
    (-8.0f64..8.0, -1.5f64..1.5).prop_map(|(a, b)| c(a, b))
}

/// Motion constants by trapezoid quadrature of samples, with central
/// differences for the derivative.
fn quadrature_constants(v: &PeriodicPotential) -> [f64; 3] {
    let n = 512;
    let h = 1e-5;
    let mut out = [0.0; 3];
    for m in 0..n {
        let x = m as f64 / n as f64;
        let [a, b] = v.eval(x);
        let [ap, bp] = v.eval(x + h);
        let [am, bm] = v.eval(x - h);
        let (da, db) = ((ap - am) / (2.0 * h), (bp - bm) / (2.0 * h));
        let r = a.norm_sqr() + b.norm_sqr();
        out[0] += r;
        out[1] += (c(0.0, -1.0) * (da * a.conj() + db * b.conj())).re;
        out[2] += 0.5 * (da.norm_sqr() + db.norm_sqr() + r * r);
    }
    out.map(|s| s / n as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_identities_hold(v in potential(), l in lambda()) {
        let r = identity_residuals(&v, l).unwrap();
        prop_assert!(r.holds(1.0), "{r:?}");
        let r = identity_residuals(&v, c(l.re, 0.0)).unwrap();
        prop_assert!(r.holds(1.0), "{r:?}");
        prop_assert!(r.im_d <= IDENTITY_TOL[4]);
    }

    #[test]
    fn beta_spectrum_matches_v2_eigenvalues(v in potential()) {
        let b = v.beta_spectrum();
        let e = v.v2_eigenvalues();
        let mut got = [b.beta1, b.beta2, b.beta3];
        got.sort_by(f64::total_cmp);
        for (x, y) in got.iter().zip(e) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
        prop_assert!((b.beta1 + b.beta2 - b.beta3).abs() <= 1e-14);
        prop_assert!(((b.beta2 - b.beta1).powi(2) - b.beta_o).abs() <= 1e-12);
    }

    #[test]
    fn motion_constants_match_quadrature(v in potential()) {
        let mc = v.motion_constants();
        let q = quadrature_constants(&v);
        prop_assert!((mc.h0 - q[0]).abs() <= 1e-12);
        prop_assert!((mc.h1 - q[1]).abs() <= 1e-6);
        prop_assert!((mc.h2 - q[2]).abs() <= 1e-6);
        prop_assert!(v.momentum_raw().im.abs() <= 1e-12);
    }

    #[test]
    fn discriminant_is_real_on_the_axis(v in potential(), x in -10.0f64..10.0) {
        let d = discriminant_centered(&char_data(&v, c(x, 0.0)).unwrap());
        prop_assert!(d.im.abs() <= 1e-9 * d.norm().max(1.0), "{d}");
    }

    #[test]
    fn schur_and_cubic_multipliers_agree(v in potential(), l in lambda()) {
        let cd = char_data(&v, l).unwrap();
        let (a, b) = (multipliers(&cd).tau, multipliers_from_cubic(&cd).tau);
        // Near a double root the cubic only resolves to √ε.
        let scale = a.iter().map(|t| t.norm()).fold(1.0, f64::max);
        for t in a {
            let d = b.iter().map(|s| (s - t).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= 1e-6 * scale, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn zs_monodromy_is_unimodular_with_real_trace(u in zs_potential(), l in lambda()) {
        let m = zs_monodromy(&u, l).unwrap();
        let scale = (2.0 * l.im.abs()).exp();
        prop_assert!((m.psi.determinant() - c(1.0, 0.0)).norm() <= 1e-10 * scale);
        let r = zs_monodromy(&u, c(l.re, 0.0)).unwrap();
        prop_assert!((r.psi.trace() * 0.5).im.abs() <= 1e-10);
    }
}
