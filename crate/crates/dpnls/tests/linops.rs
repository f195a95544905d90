use dpnls::groundstate::solve_q;
use dpnls::linops::LinearizedPair;
use dpnls::numcore::{RadialGrid, RealField};
use dpnls::Error;
use std::sync::Arc;

fn pair(d: usize, n: usize) -> LinearizedPair {
    LinearizedPair::new(solve_q(d, Arc::new(RadialGrid::new(d, n, 30.0).unwrap())).unwrap()).unwrap()
}

#[test]
fn algebra_identities_and_order() {
    for d in 1..=3 {
        let a = pair(d, 2048).algebra_residuals();
        let b = pair(d, 4096).algebra_residuals();
        // L₋Q and L₊ρ are exact for the discrete problem; the Λ identities carry truncation error
        assert!(b.lminus_q < 1e-9 && b.lplus_rho < 1e-9);
        for (x, y) in [(a.lplus_lambda_q, b.lplus_lambda_q), (a.lminus_y2q, b.lminus_y2q)] {
            assert!((x / y).log2() >= 1.8, "d={d} order {}", (x / y).log2());
        }
        assert!(b.max() < if d == 1 { 1e-5 } else { 1e-3 }, "d={d} {:?}", b.as_array());
    }
}

#[test]
fn solves_recover_kernel_relations() {
    let p = pair(1, 4096);
    let q = p.q();
    assert!(p.solve_lplus(&q.scale(-2.0)).unwrap().sub(p.lambda_q()).sup() < 1e-6);
    let zero = RealField::zeros(q.grid().clone());
    assert_eq!(p.solve_lplus(&zero).unwrap().sup(), 0.0);
    assert_eq!(p.solve_lminus(&zero).unwrap().sup(), 0.0);
    // L₋(|y|²Q) = −4ΛQ: gauge-fixed solution is |y|²Q minus its Q component
    let f = p.solve_lminus(&p.lambda_q().scale(-4.0)).unwrap();
    let c = p.y2q().inner(q).unwrap() / q.norm_sqr();
    assert!(f.sub(&p.y2q().axpy(-c, q)).sup() < 1e-6);
    assert!(f.inner(q).unwrap().abs() < 1e-12);
    assert!(matches!(p.solve_lminus(q), Err(Error::Solvability { .. })));
    // round trip on a decaying field
    let g = q.map_r(|r, v| (1.0 + r * r) * v);
    let back = p.solve_lplus(&p.apply_lplus(&g).unwrap()).unwrap();
    assert!(back.sub(&g).sup() < 1e-7);
}

#[test]
fn coercivity_all_dimensions() {
    for d in 1..=3 {
        let p = pair(d, 2048);
        let rep = p.coercivity_mu().unwrap();
        eprintln!("d={d} {rep:?}");
        assert!(rep.mu > 0.0);
        assert!(rep.mu_plus_free < 0.0);
        let z = RealField::zeros(p.q().grid().clone());
        assert!(p.penalized_margin(p.lambda_q(), &z, rep.mu).unwrap() >= 0.0);
    }
}
