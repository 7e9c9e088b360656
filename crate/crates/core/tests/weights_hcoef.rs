use bsderk::hcoef::endpoint_projection;
use bsderk::psi::{default_bm, indicator, linear_b1, three_piece_b2, two_piece_b1};
use bsderk::{ForwardModel64, Psi64};
use proptest::prelude::*;

fn ou(kappa: f64, sigma: f64) -> ForwardModel64 {
    ForwardModel64 { a0: 0.0, a1: -kappa, sigma, x0: 0.0 }
}

fn b0_members(c: f64, cp: f64) -> Vec<Psi64> {
    vec![indicator(), linear_b1(), two_piece_b1(c).unwrap(), three_piece_b2(c, cp).unwrap(), default_bm(3)]
}

#[test]
fn weight_json_form() {
    let psi = two_piece_b1(0.25).unwrap();
    let v: serde_json::Value = serde_json::to_value(&psi).unwrap();
    assert_eq!(v["claimed_m"], 1);
    assert!(v["pieces"][0]["coeffs"].is_array());
    let back: Psi64 = serde_json::from_value(v).unwrap();
    assert_eq!(back, psi);
}

#[test]
fn ou_projection_depends_on_first_moment() {
    let m = ou(1.0, 1.0);
    let a = endpoint_projection(&m, &indicator(), 0.2).unwrap().lambda;
    let b = endpoint_projection(&m, &linear_b1(), 0.2).unwrap().lambda;
    assert!((a - b).abs() > 1e-8, "{a} vs {b}");
}

proptest! {
    #[test]
    fn brownian_projection_ignores_the_weight(c in 0.05f64..0.95, cp in 0.05f64..0.95, delta in 0.01f64..2.0, sigma in 0.2f64..3.0) {
        prop_assume!((c - cp).abs() > 0.05);
        let bm = ForwardModel64::brownian(0.3, sigma, 0.0);
        let base = endpoint_projection(&bm, &indicator(), delta).unwrap();
        prop_assert!((base.lambda - 1.0 / (sigma * delta)).abs() <= 1e-12 * base.lambda);
        for psi in b0_members(c, cp) {
            let p = endpoint_projection(&bm, &psi, delta).unwrap();
            prop_assert!((p.lambda - base.lambda).abs() <= 1e-12 * base.lambda);
            // Cov(H, W_{t+h} - W_t) = cov / sigma = 1.
            prop_assert!((p.cov / sigma - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn ou_projection_tends_to_brownian_as_kappa_vanishes(delta in 0.05f64..1.0) {
        let bm = endpoint_projection(&ForwardModel64::brownian(0.0, 1.0, 0.0), &linear_b1(), delta).unwrap().lambda;
        let near = endpoint_projection(&ou(1e-9, 1.0), &linear_b1(), delta).unwrap().lambda;
        prop_assert!((near - bm).abs() <= 1e-7 * bm);
    }
}
