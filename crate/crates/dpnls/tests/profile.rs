use dpnls::groundstate::solve_q;
use dpnls::linops::LinearizedPair;
use dpnls::numcore::RadialGrid;
use dpnls::profile::{build_profile, sigma_k, ProfileCoeffs};
use dpnls::Model;
use std::f64::consts::PI;
use std::sync::Arc;

fn pair(d: usize, n: usize, r_max: f64) -> Arc<LinearizedPair> {
    let g = Arc::new(RadialGrid::new(d, n, r_max).unwrap());
    Arc::new(LinearizedPair::new(solve_q(d, g).unwrap()).unwrap())
}

fn b_app(pc: &ProfileCoeffs, lam: f64) -> f64 {
    let a = pc.model().alpha();
    (2.0 * pc.beta() / (2.0 - a) * lam.powf(a)).sqrt()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn beta_matches_closed_form_d1() {
    let m = Model::new(1, 3.0).unwrap();
    let pc = build_profile(1, m, pair(1, 4096, 30.0)).unwrap();
    // Q = 3^{1/4} sech^{1/2}(2x): ∫Q⁴ = 3, ∫x²Q² = √3π³/32
    let exact = 2.0 * (m.p - 1.0) / (m.p + 1.0) * 3.0 / (3f64.sqrt() * PI.powi(3) / 32.0);
    let beta = pc.beta();
    assert!(beta > 0.0);
    assert!(((beta - exact) / exact).abs() < 1e-6, "β = {beta}, exact {exact}");
}

#[test]
fn beta_matches_quadrature_other_dims() {
    for (d, p, n, r) in [(2usize, 1.5, 4096usize, 24.0), (3, 1.8, 4096, 24.0), (1, 2.0, 2048, 30.0)] {
        let m = Model::new(d, p).unwrap();
        let pr = pair(d, n, r);
        let pc = build_profile(1, m, pr.clone()).unwrap();
        let g = pr.q().grid();
        let q = pr.q().values();
        // plain weighted sums, not the field API
        let (mut qp, mut y2) = (0.0, 0.0);
        for ((x, w), v) in g.nodes().iter().zip(g.weights()).zip(q) {
            qp += w * v.powf(p + 1.0);
            y2 += w * x * x * v * v;
        }
        let exact = 2.0 * d as f64 * (p - 1.0) / (p + 1.0) * qp / y2;
        assert!(((pc.beta() - exact) / exact).abs() < 1e-6, "d={d} p={p}: {} vs {exact}", pc.beta());
    }
}

#[test]
fn first_system_and_orthogonality() {
    let m = Model::new(1, 3.0).unwrap();
    let pr = pair(1, 2048, 30.0);
    let pc = build_profile(1, m, pr.clone()).unwrap();
    let t = pc.term(0, 0).unwrap();
    let q = pr.q();
    // L₊P⁺ = Q^p + ¼β|y|²Q
    let rhs = q.map_r(|r, v| v.powf(m.p) + 0.25 * t.beta * r * r * v);
    let res = pr.apply_lplus(&t.pp).unwrap().sub(&rhs).sup();
    assert!(res < 1e-8, "{res}");
    let ortho = t.pp.inner(q).unwrap() / (t.pp.norm() * q.norm());
    assert!(ortho.abs() < 1e-10, "{ortho}");
    // P⁻_{0,0} solves L₋P⁻ = −αP⁺ (no source at b μ)
    let res = pr.apply_lminus(&t.pm).unwrap().add(&t.pp.scale(m.alpha())).sup();
    assert!(res < 1e-8, "{res}");
}

#[test]
fn all_systems_solved_and_decay() {
    for (d, p, n, r) in [(1usize, 3.0, 2048usize, 30.0), (1, 2.0, 2048, 30.0), (2, 1.5, 1024, 24.0), (3, 1.8, 1024, 24.0)] {
        let m = Model::new(d, p).unwrap();
        let pc = build_profile(2, m, pair(d, n, r)).unwrap();
        let res = pc.system_residuals().unwrap();
        assert_eq!(res.len(), 6);
        for s in res {
            assert!(s.plus < 1e-7 && s.minus < 1e-7, "d={d} p={p}: {s:?}");
            assert!(s.solvability.abs() < 1e-8, "{s:?}");
        }
        assert!(pc.decay_ratio(10.0) < 1.0, "d={d}: {}", pc.decay_ratio(10.0));
    }
}

#[test]
fn rebuild_is_lower_triangular() {
    let m = Model::new(1, 3.0).unwrap();
    let pr = pair(1, 1024, 30.0);
    let a = build_profile(2, m, pr.clone()).unwrap();
    let b = build_profile(3, m, pr).unwrap();
    for k in 1..=3 {
        assert_eq!(sigma_k(k).len(), (k + 1) * (k + 2) / 2);
    }
    assert_eq!(b.terms().len(), 10);
    for t in a.terms() {
        let u = b.term(t.j, t.k).unwrap();
        assert!((t.beta - u.beta).abs() < 1e-9);
        assert!(t.pp.sub(&u.pp).sup() < 1e-9 && t.pm.sub(&u.pm).sup() < 1e-9);
    }
}

#[test]
fn theta_limits() {
    let m = Model::new(1, 3.0).unwrap();
    let pc = build_profile(2, m, pair(1, 1024, 30.0)).unwrap();
    assert_eq!(pc.theta(0.3, 0.0), 0.0);
    let beta = pc.beta();
    let mut worst: f64 = 0.0;
    for lam in [1e-3, 1e-2, 5e-2] {
        for b in [0.0, 0.05, 0.2] {
            let w = b * b + lam;
            worst = worst.max((pc.theta(b, lam) - beta * lam).abs() / (w * lam));
        }
    }
    assert!(worst < 50.0, "{worst}");
}

#[test]
fn eval_basics() {
    let m = Model::new(1, 3.0).unwrap();
    let pr = pair(1, 2048, 30.0);
    let pc = build_profile(2, m, pr.clone()).unwrap();
    let e = pc.eval_profile(0.0, 0.0);
    assert!(e.p.re().sub(pr.q()).sup() == 0.0 && e.p.im().sup() == 0.0);
    assert!(e.psi.sup() < 1e-9, "{}", e.psi.sup());
    let e = pc.eval_profile(0.1, 0.01);
    let diff = e.p.values().iter().zip(e.pb.values()).map(|(a, b)| (a.norm() - b.norm()).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-14);
    assert!((e.p.norm() - e.pb.norm()).abs() < 1e-13);
    assert!((e.theta - pc.theta(0.1, 0.01)).abs() == 0.0);
    // trivial profile: P = Q, θ = 0
    let t = ProfileCoeffs::trivial(m, pr.clone()).unwrap();
    assert_eq!(t.theta(0.2, 0.1), 0.0);
    assert!(t.profile(0.2, 0.1).re().sub(pr.q()).sup() == 0.0);
}

#[test]
fn mass_defect_is_order_lambda_alpha() {
    let m = Model::new(1, 3.0).unwrap();
    let pr = pair(1, 2048, 30.0);
    let pc = build_profile(2, m, pr.clone()).unwrap();
    let q2 = pr.q().norm_sqr();
    // O(λ^α); along b_app it is in fact much smaller since ⟨P⁺_{0,0}, Q⟩ = 0
    for lam in [1e-1, 1e-2, 1e-3, 1e-4] {
        let dm = (pc.profile(b_app(&pc, lam), lam).norm_sqr() - q2).abs();
        assert!(dm < lam, "λ={lam}: {dm}");
    }
    let dm = |lam: f64| (pc.profile(b_app(&pc, lam), lam).norm_sqr() - q2).abs();
    assert!(dm(1e-2) < 1e-2 * dm(1e-1));
}

#[test]
fn residual_scaling_along_law() {
    let m = Model::new(1, 3.0).unwrap();
    let pr = pair(1, 2048, 30.0);
    for k in [1usize, 2] {
        let pc = build_profile(k, m, pr.clone()).unwrap();
        let (mut xs, mut ys) = (vec![], vec![]);
        let mut last = 0.0;
        for i in 0..9 {
            let lam = 10f64.powf(-3.0 + 0.25 * i as f64);
            let b = b_app(&pc, lam);
            let th = pc.theta(b, lam);
            let r = pc.residual_psi(b, lam, -b, th - b * b);
            assert!(r.weighted_norm > last, "not monotone");
            last = r.weighted_norm;
            xs.push((b * b + lam).ln());
            ys.push(r.weighted_sup.ln());
        }
        let s = slope(&xs, &ys);
        assert!(s >= k as f64 + 2.0 - 0.2, "K={k}: slope {s}");
    }
}

#[test]
fn residual_linear_in_violated_law() {
    let m = Model::new(1, 3.0).unwrap();
    let pc = build_profile(1, m, pair(1, 2048, 30.0)).unwrap();
    let norm = |lam: f64, delta: f64| {
        let b = b_app(&pc, lam);
        let th = pc.theta(b, lam);
        pc.residual_psi(b, lam, -b + delta, th - b * b).weighted_norm
    };
    // δ-term ≈ δ·αλ^α P⁺_{0,0} dominates the on-law residual here
    let (n1, n2) = (norm(1e-4, 1e-2), norm(1e-4, 2e-2));
    assert!((n2 / n1 - 2.0).abs() < 0.05, "{}", n2 / n1);
    let r = norm(1e-3, 1e-2) / n1;
    assert!((r / 10.0 - 1.0).abs() < 0.2, "{r}");
}

#[test]
fn mass_drift_matches_chain_rule() {
    let m = Model::new(1, 3.0).unwrap();
    let pc = build_profile(2, m, pair(1, 2048, 30.0)).unwrap();
    assert!(pc.profile_mass_drift(0.0, 0.0, 0.0, 0.0).abs() < 1e-10);
    let (b, lam) = (0.15, 0.02);
    let th = pc.theta(b, lam);
    for (ls, bs) in [(-b, th - b * b), (-b + 0.05, th - b * b + 0.02)] {
        let mass = |s: f64| pc.profile(b + bs * s, lam * (ls * s).exp()).norm_sqr();
        let h = 1e-4;
        let fd = (mass(h) - mass(-h)) / (2.0 * h);
        let drift = pc.profile_mass_drift(b, lam, ls, bs);
        assert!((fd - drift).abs() < 1e-7 * (1.0 + fd.abs()), "{fd} vs {drift}");
    }
    // on the law the drift is of residual size
    let mut prev = f64::INFINITY;
    for lam in [1e-2, 1e-3] {
        let b = b_app(&pc, lam);
        let d = pc.profile_mass_drift(b, lam, -b, pc.theta(b, lam) - b * b).abs();
        let w: f64 = b * b + lam;
        assert!(d < 10.0 * w.powi(4), "{d}");
        assert!(d < prev);
        prev = d;
    }
}

#[test]
fn energy_expansion() {
    let m = Model::new(1, 3.0).unwrap();
    let pr = pair(1, 2048, 30.0);
    let pc = build_profile(2, m, pr.clone()).unwrap();
    let y2q = pr.ground_state().yq2;
    let beta = pc.beta();
    // λ = 1, b = 0: independent quadrature with a centred derivative
    let p = pc.profile(0.0, 1.0);
    let g = p.grid();
    let dp = p.dr();
    let mut e = 0.0;
    for i in 0..p.len() {
        let a = p.values()[i].norm();
        e += g.weights()[i] * (0.5 * dp.values()[i].norm_sqr() - a.powi(6) / 6.0 - a.powi(4) / 4.0);
    }
    let direct = pc.profile_energy(0.0, 1.0).unwrap();
    assert!((direct - e).abs() < 1e-5 * e.abs().max(1.0), "{direct} vs {e}");
    assert!(pc.profile_energy(0.1, 0.0).is_err());
    // λ²E − (‖yQ‖²/8)(b² − 2βλ^α/(2−α)) = O(λ^α(b² + λ^α))
    let mut worst: f64 = 0.0;
    for lam in [1e-3, 3e-3, 1e-2] {
        for b in [0.0, 0.5 * b_app(&pc, lam), b_app(&pc, lam), 2.0 * b_app(&pc, lam)] {
            let two = b * b - 2.0 * beta / (2.0 - m.alpha()) * lam.powf(m.alpha());
            let diff = lam * lam * pc.profile_energy(b, lam).unwrap() - y2q / 8.0 * two;
            worst = worst.max(diff.abs() / (lam * (b * b + lam)));
        }
    }
    assert!(worst < 20.0, "{worst}");
    // on (b_app, λ): λ²E small compared with the separate terms
    let lam = 1e-3;
    let b = b_app(&pc, lam);
    let e2 = lam * lam * pc.profile_energy(b, lam).unwrap();
    assert!(e2.abs() < 0.05 * y2q / 8.0 * b * b, "{e2}");
}

#[test]
fn archive_round_trip() {
    let m = Model::new(1, 3.0).unwrap();
    let pr = pair(1, 512, 25.0);
    let pc = build_profile(2, m, pr.clone()).unwrap();
    let dir = std::env::temp_dir().join(format!("dpnls_profile_{}", std::process::id()));
    pc.write_archive(&dir).unwrap();
    let back = ProfileCoeffs::read_archive(m, pr, &dir).unwrap();
    assert_eq!(back.order(), Some(2));
    for t in pc.terms() {
        let u = back.term(t.j, t.k).unwrap();
        assert_eq!(t.beta, u.beta);
        assert_eq!(t.pp.values(), u.pp.values());
        assert_eq!(t.pm.values(), u.pm.values());
    }
    let other = pair(1, 256, 25.0);
    assert!(ProfileCoeffs::read_archive(m, other, &dir).is_err());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn rejects_bad_order_and_dimension() {
    let pr = pair(1, 256, 25.0);
    assert!(build_profile(0, Model::new(1, 3.0).unwrap(), pr.clone()).is_err());
    assert!(build_profile(1, Model::new(2, 1.5).unwrap(), pr).is_err());
}
