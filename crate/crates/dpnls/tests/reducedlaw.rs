use dpnls::groundstate::solve_q;
use dpnls::linops::LinearizedPair;
use dpnls::numcore::{line_fit, OdeOptions, RadialGrid};
use dpnls::profile::build_profile;
use dpnls::reducedlaw::*;
use dpnls::Model;
use std::f64::consts::PI;
use std::sync::Arc;

/// d=1, p=3 with the closed-form β and ‖yQ‖².
fn consts_1d(e0: f64) -> LawConstants {
    let y2q = 3f64.sqrt() * PI.powi(3) / 32.0;
    let beta = 3.0 / y2q; // 2d(p−1)/(p+1) = 1, ∫Q⁴ = 3
    LawConstants::new(Model::new(1, 3.0).unwrap(), beta, y2q, e0, 0.1).unwrap()
}

#[test]
fn constant_identities() {
    for (d, p) in [(1usize, 3.0), (1, 1.5), (1, 4.9), (2, 1.2), (2, 2.9), (3, 1.1), (3, 2.3)] {
        let m = Model::new(d, p).unwrap();
        let c = LawConstants::new(m, 1.3, 2.0, 0.0, 0.1).unwrap();
        assert!((c.sigma - 2.0 / (4.0 - c.alpha)).abs() < 1e-15);
        assert!(c.sigma > 0.5 && c.sigma < 1.0 && c.alpha > 0.0 && c.alpha < 2.0 && c.delta_alpha > 0.0);
        for t in [-1e-1, -1e-4, -1e-8] {
            let s = c.s_of_time(t).unwrap();
            assert!((c.time_of_s(s) / t - 1.0).abs() < 1e-12);
            let (lam, b) = c.app_law(s).unwrap();
            let e = 2.0 / (4.0 - c.alpha);
            assert!((lam / (c.c_lambda * (-t).powf(e)) - 1.0).abs() < 1e-10);
            assert!((b / (c.c_b * (-t).powf(c.alpha / (4.0 - c.alpha))) - 1.0).abs() < 1e-10);
        }
    }
    let c = consts_1d(0.0);
    assert_eq!(c.alpha, 1.0);
    assert!((c.delta_alpha - 0.25).abs() < 1e-15);
}

#[test]
fn app_law_solves_system() {
    let c = consts_1d(0.0);
    for s in [1.0, 10.0, 1e2, 1e4] {
        let (r1, r2) = c.app_law_residual(s).unwrap();
        assert!(r1.abs() < 1e-10 && r2.abs() < 1e-10, "{r1} {r2}");
        let (_, b) = c.app_law(s).unwrap();
        assert_eq!(b, 2.0 / s);
        assert_eq!(c.app_law(2.0 * s).unwrap().1, 0.5 * b);
        // app law is the C₀ = 0 level set
        let (lam, b) = c.app_law(s).unwrap();
        assert!(c.energy_two_term(b, lam).abs() < 1e-12 * b * b / (lam * lam));
    }
    assert!(c.app_law(0.0).is_err() && c.app_law(-1.0).is_err());
    assert!(c.s_of_time(0.0).is_err());
}

#[test]
fn big_f_properties() {
    let c = consts_1d(0.0);
    assert_eq!(c.big_f(c.lambda0).unwrap(), 0.0);
    let k = c.kappa2().sqrt();
    let a = c.alpha;
    let mut prev = 0.0;
    for lam in [0.05, 1e-2, 1e-4, 1e-8] {
        let f = c.big_f(lam).unwrap();
        let exact = 2.0 / (a * k) * (lam.powf(-a / 2.0) - c.lambda0.powf(-a / 2.0));
        assert!((f / exact - 1.0).abs() < 1e-9, "{f} vs {exact}");
        assert!(f > prev);
        prev = f;
        let back = c.big_f_inverse(f).unwrap();
        assert!((back / lam - 1.0).abs() < 1e-9);
    }
    assert!(c.big_f(0.2).is_err());
    // with E₀ ≠ 0: |𝓕 − 2/(α k λ^{α/2})| ≲ λ^{−α/4} + λ^{2−3α/2}
    for e0 in [-0.5, 0.7] {
        let c = consts_1d(e0);
        let mut worst: f64 = 0.0;
        for lam in [1e-2, 1e-4, 1e-6, 1e-8] {
            let f = c.big_f(lam).unwrap();
            let lead = 2.0 / (a * k * lam.powf(a / 2.0));
            worst = worst.max((f - lead).abs() / (lam.powf(-a / 4.0) + lam.powf(2.0 - 1.5 * a)));
            assert!((c.big_f(c.big_f_inverse(f).unwrap()).unwrap() / f - 1.0).abs() < 1e-9);
        }
        assert!(worst < 10.0, "{worst}");
    }
    assert!(LawConstants::new(Model::new(1, 3.0).unwrap(), 1.0, 1.0, -100.0, 0.5).is_err());
}

#[test]
fn init_data_lemma() {
    for e0 in [0.0, 0.3, -0.3] {
        let c = consts_1d(e0);
        let mut prev = f64::INFINITY;
        for s1 in [1e2, 1e3, 1e4] {
            let d = init_data(&c, s1, LawEnergy::TwoTerm).unwrap();
            assert!(d.f_defect.abs() < 1e-10 * s1, "{d:?}");
            assert!(d.e_defect.abs() < 1e-8 * (d.b1 / d.lambda1).powi(2).max(1.0), "{d:?}");
            let (lam_app, _) = c.app_law(s1).unwrap();
            let env = s1.powf(-0.5) + s1.powf(2.0 - 4.0 / c.alpha);
            assert!(d.proximity < 10.0 * env, "{d:?}");
            assert!(d.proximity < prev);
            prev = d.proximity;
            // λ₁ ≠ λ_app(s₁) contributes O(s₁^{−5/2}) besides the s₁^{−4/α} term
            let hb = s1.powf(-2.5) + s1.powf(-4.0 / c.alpha);
            assert!(d.h_at_app < 10.0 * hb, "{}", d.h_at_app / hb);
            assert!(d.lambda1 < c.lambda0 && (d.lambda1 / lam_app - 1.0).abs() < 0.5);
        }
    }
}

#[test]
fn one_term_integration() {
    let c = consts_1d(0.0);
    let s1 = 100.0;
    let th = |b: f64, l: f64| c.theta_one_term(b, l);
    let traj = integrate_reduced(&c, app_state(&c, s1).unwrap(), 10.0 * s1, &th, OdeOptions::default()).unwrap();
    let inv0 = traj.invariant(&traj.states[0]);
    let (mut lt, mut ll, mut lb) = (vec![], vec![], vec![]);
    for st in &traj.states {
        let (la, ba) = c.app_law(st.s).unwrap();
        if st.s <= 2.0 * s1 {
            assert!((st.lambda / la - 1.0).abs() < 1e-9 && (st.b / ba - 1.0).abs() < 1e-9);
        }
        let scale = st.b * st.b / (st.lambda * st.lambda);
        assert!((traj.invariant(st) - inv0).abs() < 1e-8 * scale);
        assert!((st.gamma - (st.s - s1)).abs() < 1e-9 * st.s);
        lt.push((-st.t).ln());
        ll.push(st.lambda.ln());
        lb.push(st.b.ln());
    }
    let fl = line_fit(&lt, &ll).unwrap();
    let fb = line_fit(&lt, &lb).unwrap();
    assert!((fl.slope - 2.0 / (4.0 - c.alpha)).abs() < 1e-3, "{}", fl.slope);
    assert!((fb.slope - c.alpha / (4.0 - c.alpha)).abs() < 1e-3, "{}", fb.slope);
    let mid = traj.at(500.0).unwrap();
    let (la, _) = c.app_law(500.0).unwrap();
    assert!((mid.lambda / la - 1.0).abs() < 1e-9);
    assert!(traj.csv().starts_with("s,t,lambda,b,gamma,lambda_app,b_app,invariant_E\n"));
    // backward diagnostics run
    let back = integrate_reduced(&c, traj.at(500.0).unwrap(), s1, &th, OdeOptions::default()).unwrap();
    let last = back.states.last().unwrap();
    assert!((last.lambda / traj.states[0].lambda - 1.0).abs() < 1e-9);
}

#[test]
fn full_theta_tracks_app_law() {
    let m = Model::new(1, 3.0).unwrap();
    let g = Arc::new(RadialGrid::new(1, 2048, 30.0).unwrap());
    let pair = Arc::new(LinearizedPair::new(solve_q(1, g).unwrap()).unwrap());
    let prof = build_profile(2, m, pair).unwrap();
    let c = LawConstants::from_profile(&prof, 0.0, 0.1).unwrap();
    let s1 = 100.0;
    let d = init_data(&c, s1, LawEnergy::TwoTerm).unwrap();
    let start = ModState { s: s1, t: c.time_of_s(s1), lambda: d.lambda1, b: d.b1, gamma: 0.0 };
    let th = |b: f64, l: f64| prof.theta(b, l);
    let traj = integrate_reduced(&c, start, 1e4, &th, OdeOptions::default()).unwrap();
    let x0 = d.b1 * d.b1 - c.kappa2() * d.lambda1.powf(c.alpha) - c.c0 * d.lambda1.powi(2);
    let mut worst: f64 = 0.0;
    for st in &traj.states {
        let (la, ba) = c.app_law(st.s).unwrap();
        let dev = ((st.lambda / la).powf(c.alpha / 2.0) - 1.0).abs() + (st.b / ba - 1.0).abs();
        assert!(dev < st.s.powf(-c.delta_alpha), "s={} dev={dev}", st.s);
        let x = st.b * st.b - c.kappa2() * st.lambda.powf(c.alpha) - c.c0 * st.lambda.powi(2);
        worst = worst.max((x - x0).abs() / (d.lambda1.powf(c.alpha) / (s1 * s1)));
    }
    assert!(worst < 10.0, "{worst}");
    // the energy-quadrature variant of h(b) lands near the two-term one
    let dp = init_data(&c, s1, LawEnergy::Profile(&prof)).unwrap();
    assert!((dp.b1 / d.b1 - 1.0).abs() < 0.05, "{} vs {}", dp.b1, d.b1);
    assert!(dp.e_defect.abs() < 1e-8 * (dp.b1 / dp.lambda1).powi(2));
}
