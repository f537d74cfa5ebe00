use num_complex::Complex64;
use volwings::fourier::*;
use volwings::heston::HestonParams;
use volwings::stein_stein::SteinSteinParams;
use volwings::Error;

// Calls at t = 1 from a 50-digit evaluation of the Lewis integral
const CALLS_T1: [(f64, f64); 3] = [
    (-0.5, 0.40835456460442546277),
    (0.0, 0.10477594244361740545),
    (0.5, 0.00053103245168567622854),
];

fn mapped() -> HestonParams {
    HestonParams::from_stein_stein(&SteinSteinParams::figure()).unwrap()
}

// ln E[e^{uY_t}] from the Riccati system integrated with RK4
fn riccati_log_mgf(p: &HestonParams, u: Complex64, t: f64, steps: usize) -> Complex64 {
    let f = |b: Complex64| {
        0.5 * (u * u - u) + (p.kappa + p.rho * p.xi * u) * b + 0.5 * p.xi * p.xi * b * b
    };
    let h = t / steps as f64;
    let (mut a, mut b) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for _ in 0..steps {
        let k1 = f(b);
        let k2 = f(b + 0.5 * h * k1);
        let k3 = f(b + 0.5 * h * k2);
        let k4 = f(b + h * k3);
        let b1 = b + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        // A' = q B, integrated with Simpson on the step
        let bm = b + 0.5 * h * k1 + 0.125 * h * h * (k2 - k1);
        a += p.q_lvl * h / 6.0 * (b + 4.0 * bm + b1);
        b = b1;
    }
    a + b * p.v0
}

#[test]
fn cf_matches_riccati_solution() {
    let hp = mapped();
    for t in [0.25, 1.0, 5.0] {
        let cf = HestonCf::new(hp, t).unwrap();
        for (re, im) in [
            (0.5, 0.0),
            (3.0, -0.5),
            (-7.0, 0.8),
            (20.0, -2.0),
            (1.5, 0.5),
        ] {
            let w = Complex64::new(re, im);
            let got = cf.log_cf(w).unwrap();
            let want = riccati_log_mgf(&hp, Complex64::i() * w, t, 20_000);
            assert!(
                (got - want).norm() < 1e-8 * (1.0 + want.norm()),
                "t = {t}, u = {w}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn cf_basic_identities() {
    let cf = HestonCf::new(mapped(), 2.0).unwrap();
    assert!((cf.cf(Complex64::new(0.0, 0.0)).unwrap() - 1.0).norm() < 1e-14);
    assert!((cf.cf(Complex64::new(0.0, -1.0)).unwrap() - 1.0).norm() < 1e-10);
    for w in [0.3, 2.0, 11.0] {
        let a = cf.cf(Complex64::new(w, -0.4)).unwrap();
        let b = cf.cf(Complex64::new(-w, -0.4)).unwrap();
        assert!((a - b.conj()).norm() < 1e-13);
        assert!(cf.cf(Complex64::new(w, 0.0)).unwrap().norm() <= 1.0 + 1e-14);
    }
    assert!(matches!(
        cf.log_cf(Complex64::new(1.0, -cf.s_plus - 0.1)),
        Err(Error::StripViolation { .. })
    ));
    assert!(matches!(
        cf.log_mgf(cf.s_minus - 0.1),
        Err(Error::StripViolation { .. })
    ));
}

#[test]
fn call_prices_match_reference() {
    for (k, c) in CALLS_T1 {
        let got = call_price(1.0, k, &mapped()).unwrap();
        assert!(
            (got - c).abs() < 1e-9 * c.max(1e-3),
            "k = {k}: {got} vs {c}"
        );
    }
}

#[test]
fn call_prices_are_monotone_and_convex() {
    let hp = mapped();
    let ks: Vec<f64> = (-30..=30).map(|i| 0.05 * i as f64).collect();
    let c: Vec<f64> = ks
        .iter()
        .map(|k| call_price(1.0, *k, &hp).unwrap())
        .collect();
    for w in c.windows(2) {
        assert!(w[1] < w[0]);
    }
    // convex in the strike K = e^k
    for i in 1..ks.len() - 1 {
        let (k0, k1, k2) = (ks[i - 1].exp(), ks[i].exp(), ks[i + 1].exp());
        let interp = (c[i - 1] * (k2 - k1) + c[i + 1] * (k1 - k0)) / (k2 - k0);
        assert!(c[i] <= interp + 1e-14);
    }
    for (k, ci) in ks.iter().zip(&c) {
        assert!(*ci > (1.0 - k.exp()).max(0.0) && *ci < 1.0);
    }
}

#[test]
fn quadrature_doubling_is_stable() {
    let hp = mapped();
    let fine = FourierSettings {
        quad_nodes: 8192,
        ..FourierSettings::default()
    };
    for t in [0.25, 1.0, 10.0] {
        for k in [-1.0, -0.1, 0.2, 2.0] {
            let a = call_price(t, k, &hp).unwrap();
            let b = call_price_with(t, k, &hp, &fine).unwrap();
            assert!((a - b).abs() <= 1e-9 * b, "t = {t}, k = {k}");
        }
    }
}

#[test]
fn saddle_damping_moves_with_strike() {
    let hp = mapped();
    let cf = HestonCf::new(hp, 0.25).unwrap();
    let alphas: Vec<f64> = [1.0, 2.0, 4.0]
        .iter()
        .map(|k| saddle_damping(0.25, *k, &hp).unwrap())
        .collect();
    assert!(alphas.windows(2).all(|w| w[1] > w[0]));
    assert!(alphas.iter().all(|a| *a > 0.0 && *a < cf.s_plus - 1.0));
    let put = saddle_damping(0.25, -2.0, &hp).unwrap();
    assert!(put < -1.0 && put > cf.s_minus - 1.0);
}

#[test]
fn black_scholes_limit() {
    // stationary variance with negligible vol-of-vol
    let hp = HestonParams::new(0.04, -1.0, 1e-4, 0.04, -0.5).unwrap();
    for (t, y) in [(0.5, -0.3), (1.0, 0.2), (2.0, 0.6)] {
        let lv = dupire_localvar(t, y, &hp).unwrap();
        assert!((lv - 0.04).abs() < 0.02 * 0.04, "t = {t}, y = {y}: {lv}");
    }
}

#[test]
fn local_variance_is_positive_on_figure_grids() {
    let hp = mapped();
    for t in [0.25, 10.0] {
        for y in [-20.0f64, -10.0, -2.0, -0.5, 0.5, 2.0, 10.0, 20.0] {
            if t == 10.0 && y < -10.0 {
                continue;
            }
            let lv = dupire_localvar(t, y, &hp).unwrap();
            assert!(lv > 0.0 && lv.is_finite(), "t = {t}, y = {y}: {lv}");
        }
    }
}

#[test]
fn stencil_halving_changes_little() {
    let hp = mapped();
    let half = FourierSettings {
        dt_rel: 5e-4,
        dk: 2.5e-3,
        ..FourierSettings::default()
    };
    for t in [0.25, 1.0] {
        for y in [-10.0, -2.0, 2.0, 10.0] {
            let a = dupire_localvar(t, y, &hp).unwrap();
            let b = dupire_localvar_with(t, y, &hp, &half).unwrap();
            assert!((a - b).abs() < 5e-3 * b, "t = {t}, y = {y}: {a} vs {b}");
        }
    }
}

#[test]
fn ratio_curve_keeps_grid_order() {
    let ss = SteinSteinParams::figure();
    let ys = [-20.0, -2.0, 2.0, 20.0];
    let pts = ratio_curve(0.25, &ys, &ss, &FourierSettings::default()).unwrap();
    for (p, y) in pts.iter().zip(ys) {
        let p = p.as_ref().unwrap();
        assert_eq!(p.y, y);
        assert!((p.ratio - p.recomputed_ratio()).abs() < 1e-15 * p.ratio);
    }
    // approaching the wings the ratio tends to one
    let r: Vec<f64> = pts.iter().map(|p| p.as_ref().unwrap().ratio).collect();
    assert!((r[0] - 1.0).abs() < (r[1] - 1.0).abs());
    assert!((r[3] - 1.0).abs() < (r[2] - 1.0).abs());
    assert!(matches!(
        ratio_point(0.25, 0.0, &ss, &FourierSettings::default()),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn settings_are_validated() {
    let hp = mapped();
    let bad = [
        FourierSettings {
            dt_rel: 0.0,
            ..FourierSettings::default()
        },
        FourierSettings {
            dk: -1.0,
            ..FourierSettings::default()
        },
        FourierSettings {
            quad_nodes: 16,
            ..FourierSettings::default()
        },
    ];
    for s in bad {
        assert!(matches!(
            dupire_localvar_with(1.0, 0.5, &hp, &s),
            Err(Error::InvalidInput(_))
        ));
    }
    assert!(PricingGrid::new(vec![], vec![1.0], FourierSettings::default()).is_err());
}
