use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use std::f64::consts::PI;
use volwings::heston::*;
use volwings::stein_stein::{p_of, rbar, SteinSteinParams, Wing};
use volwings::Error;

// s_+(t), s_-(t) at the mapped figure parameters, 50-digit mpmath
const EXPONENTS: [(f64, f64, f64); 4] = [
    (0.25, 40.999562969173709635, -11.054953294875262932),
    (1.0, 13.922220392956081485, -2.8975594978227343662),
    (3.0, 8.4986608955344413673, -1.1459381004730649479),
    (10.0, 7.2452413471842827841, -0.61842744933622193847),
];

fn mapped() -> HestonParams {
    HestonParams::from_stein_stein(&SteinSteinParams::figure()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn q(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

// exact evaluation of the two slope polynomials at rational arguments
fn exact_polys(
    s: &BigRational,
    b: &BigRational,
    c: &BigRational,
    rho: &BigRational,
    t: &BigRational,
) -> (f64, f64, f64) {
    let one = q(1, 1);
    let two = q(2, 1);
    let four = q(4, 1);
    let bb = s * rho * c + b;
    let ss1 = s * (s - &one);
    let c2 = c * c;
    let k = &c2 * (&two * s - &one) - &two * rho * c * &bb;
    let inner = &c2 * &ss1 - &bb * &bb;
    let r1 = t * &c2 * &ss1 * &k - &two * &bb * &k + &four * rho * c * &inner;
    let r1r = &c2 * (t * &ss1 * &k - (&two * s - &one) * &bb + &two * rho * c * &ss1);
    let r2 = &two * &c2 * &ss1 * &inner;
    (
        r1.to_f64().unwrap(),
        r1r.to_f64().unwrap(),
        r2.to_f64().unwrap(),
    )
}

#[test]
fn delta_and_roots() {
    let hp = mapped();
    let (s1, s2) = critical_roots(&hp).unwrap();
    assert!(s1 < 0.0 && s2 > 1.0);
    for s in [s1, s2] {
        assert!(delta_neg(s, &hp).abs() < 1e-10);
    }
    assert!(delta_neg(0.5 * (s1 + s2), &hp) < 0.0);
    assert!(delta_neg(s2 + 1.0, &hp) > 0.0 && delta_neg(s1 - 1.0, &hp) > 0.0);
}

#[test]
fn explosion_time_limits() {
    let hp = mapped();
    let (s1, s2) = critical_roots(&hp).unwrap();
    // blows up at the edges of the explosion region, vanishes far out
    assert!(explosion_time(s2 + 1e-10, &hp).unwrap() > 100.0);
    assert!(explosion_time(s1 - 1e-10, &hp).unwrap() > 100.0);
    assert!(explosion_time(1e6, &hp).unwrap() < 1e-4);
    assert!(explosion_time(-1e6, &hp).unwrap() < 1e-4);
    let mut prev = f64::INFINITY;
    for i in 1..200 {
        let ts = explosion_time(s2 + 0.1 * i as f64, &hp).unwrap();
        assert!(ts < prev);
        prev = ts;
    }
}

#[test]
fn critical_exponents_match_high_precision() {
    let hp = mapped();
    for (t, sp, sm) in EXPONENTS {
        assert!(rel(critical_exponent_plus(t, &hp).unwrap().s, sp) < 1e-12);
        assert!(rel(critical_exponent_minus(t, &hp).unwrap().s, sm) < 1e-12);
    }
}

#[test]
fn critical_exponents_move_toward_roots() {
    let hp = mapped();
    let (s1, s2) = critical_roots(&hp).unwrap();
    let ts: Vec<f64> = (1..=40).map(|i| 0.1 * 1.15f64.powi(i)).collect();
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (pa, pb) = (
            critical_exponent_plus(a, &hp).unwrap().s,
            critical_exponent_plus(b, &hp).unwrap().s,
        );
        let (ma, mb) = (
            critical_exponent_minus(a, &hp).unwrap().s,
            critical_exponent_minus(b, &hp).unwrap().s,
        );
        assert!(pb < pa && pb > s2);
        assert!(mb > ma && mb < s1);
    }
}

#[test]
fn critical_exponent_round_trip() {
    let hp = mapped();
    for i in 0..=40 {
        let t = 0.1 * 200f64.powf(i as f64 / 40.0);
        for w in [Wing::Plus, Wing::Minus] {
            let s = critical_exponent_for(w, t, &hp).unwrap().s;
            assert!((explosion_time(s, &hp).unwrap() - t).abs() <= 1e-9 * t.max(1.0));
        }
    }
    assert!(critical_exponent_plus(0.0, &hp).is_err());
    assert!(critical_exponent_minus(f64::NAN, &hp).is_err());
}

#[test]
fn r_and_s_are_inverse() {
    let hp = mapped();
    let (_, s2) = critical_roots(&hp).unwrap();
    for t in [0.5, 1.0, 4.0] {
        for s in [s2 + 0.5, s2 + 2.0, s2 + 30.0] {
            assert!(rel(s_of_r(r_of_s(s, &hp, t), &hp, t), s) < 1e-12);
        }
    }
}

#[test]
fn s_of_r_is_stein_stein_exponent() {
    let hp = mapped();
    let ss = SteinSteinParams::figure();
    for t in [0.25, 1.0, 3.0] {
        for r in [1.0, 2.0, 3.0] {
            assert!(rel(s_of_r(r, &hp, t), p_of(r, Wing::Plus, &ss, t)) < 1e-12);
        }
    }
}

#[test]
fn root_r_identities() {
    let hp = mapped();
    let ss = SteinSteinParams::figure();
    for (t, sp, sm) in EXPONENTS {
        let rr = root_r(t, &hp).unwrap();
        assert!(rr > PI / 2.0 && rr < PI);
        assert!((r_of_s(sp, &hp, t) - rr).abs() < 1e-9);
        assert!((rbar(Wing::Plus, &ss, t).unwrap() - rr).abs() < 1e-9);
        assert!(
            rel(
                p_of(rbar(Wing::Plus, &ss, t).unwrap(), Wing::Plus, &ss, t),
                sp
            ) < 1e-9
        );
        assert!(
            rel(
                p_of(rbar(Wing::Minus, &ss, t).unwrap(), Wing::Minus, &ss, t),
                sm
            ) < 1e-9
        );
    }
}

#[test]
fn polynomials_match_exact_arithmetic() {
    let (b, c, rho) = (q(-1, 2), q(2, 5), q(-3, 4));
    for (sn, sd) in [(7, 2), (-3, 1), (41, 1), (-11, 1), (1, 3)] {
        for (tn, td) in [(1, 4), (1, 1), (10, 1)] {
            let (s, t) = (q(sn, sd), q(tn, td));
            let (r1, r1r, r2) = exact_polys(&s, &b, &c, &rho, &t);
            let (sf, tf) = (sn as f64 / sd as f64, tn as f64 / td as f64);
            let tol = |v: f64| 1e-12 * v.abs().max(1.0);
            assert!((r1_poly(sf, -0.5, 0.4, -0.75, tf) - r1).abs() < tol(r1));
            assert!((r1_poly_reduced(sf, -0.5, 0.4, -0.75, tf) - r1r).abs() < tol(r1r));
            assert!((r2_poly(sf, -0.5, 0.4, -0.75) - r2).abs() < tol(r2));
        }
    }
}

#[test]
fn r2_vanishes_on_explosion_boundary() {
    let hp = mapped();
    let ss = SteinSteinParams::figure();
    assert_eq!(r2_poly(0.0, ss.b, ss.c, ss.rho), 0.0);
    assert_eq!(r2_poly(1.0, ss.b, ss.c, ss.rho), 0.0);
    // c²s(s-1) - b̄² is -Δ/4 at the mapped parameters
    let (s1, s2) = critical_roots(&hp).unwrap();
    for s in [s1, s2] {
        assert!(r2_poly(s, ss.b, ss.c, ss.rho).abs() < 1e-10);
    }
}

#[test]
fn heston_slopes_are_positive() {
    let ss = SteinSteinParams::figure();
    for (t, _, _) in EXPONENTS {
        for w in [Wing::Plus, Wing::Minus] {
            assert!(hest_slope(w, t, &ss).unwrap() > 0.0);
        }
    }
}

#[test]
fn consistency_passes_on_figure_parameters() {
    let ss = SteinSteinParams::figure();
    for (t, _, _) in EXPONENTS {
        let rep = consistency_check(&ss, t, 1e-6).unwrap();
        assert!(rep.pass, "t = {t}: {rep:?}");
        assert_eq!(rep.wings.len(), 2);
        assert!(rep.rel_trig <= 1e-6);
        // the printed first polynomial does not reproduce the slope
        assert!(rep
            .wings
            .iter()
            .any(|w| rel(w.slope_heston_printed, w.slope_heston) > 1e-3));
    }
}

#[test]
fn mapping_requires_zero_level() {
    let mut ss = SteinSteinParams::figure();
    ss.a = 0.1;
    assert!(matches!(
        HestonParams::from_stein_stein(&ss),
        Err(Error::Precondition(_))
    ));
    assert!(matches!(
        consistency_check(&ss, 1.0, 1e-6),
        Err(Error::Precondition(_))
    ));
    assert!(HestonParams::new(0.1, 0.5, 0.3, 0.04, -0.5).is_err());
    assert!(HestonParams::new(0.1, -0.5, 0.3, 0.04, 0.3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn slopes_agree_across_parameters(
        b in -2.0f64..-0.1,
        c in 0.1f64..1.0,
        rho in -0.9f64..-0.05,
        t in 0.2f64..5.0,
    ) {
        let ss = SteinSteinParams::new(0.0, b, c, rho, 0.2).unwrap();
        if let Ok(rep) = consistency_check(&ss, t, 1e-6) {
            for w in &rep.wings {
                prop_assert!(w.rel_slope < 1e-6, "{w:?}");
                prop_assert!(w.rel_exponent < 1e-6);
            }
        }
    }

    #[test]
    fn explosion_time_round_trip_random(t in 0.1f64..20.0) {
        let hp = mapped();
        for w in [Wing::Plus, Wing::Minus] {
            let s = critical_exponent_for(w, t, &hp).unwrap().s;
            prop_assert!((explosion_time(s, &hp).unwrap() - t).abs() <= 1e-9 * t.max(1.0));
        }
    }
}
