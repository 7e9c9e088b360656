use bsderk::model::{brownian_sine, ou_manufactured};
use bsderk::numerics::marginal_mean_square;
use bsderk::solver::{solve, Engine};
use bsderk::tableau::{crank_nicholson, three_stage};
use bsderk::{Partition, SchemeSpec, SchemeSpec64, SolverConfig, Trajectory64};

fn max_diff(a: &Trajectory64, b: &Trajectory64) -> f64 {
    a.y.iter()
        .zip(&b.y)
        .chain(a.z.iter().zip(&b.z))
        .flat_map(|(p, q)| p.values.iter().zip(&q.values).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

fn b2_schemes() -> Vec<SchemeSpec64> {
    vec![
        SchemeSpec::with_classes(three_stage(0.5, 1.0, 0.0).unwrap(), 2, 2),
        SchemeSpec::with_classes(crank_nicholson(), 2, 2),
    ]
}

#[test]
fn weights_are_inert_on_the_commuting_model() {
    let p = brownian_sine(1.0);
    let part = Partition::uniform(12, 1.0).unwrap();
    let cfg = SolverConfig::default();
    for s in b2_schemes() {
        let a = solve(&s, &p, &part, &cfg).unwrap();
        let b = solve(&s.with_indicator_weights(), &p, &part, &cfg).unwrap();
        assert!(max_diff(&a, &b) <= 1e-12, "{}", max_diff(&a, &b));
    }
}

#[test]
fn weights_matter_on_ou() {
    let p = ou_manufactured(1.0, 0.5, 0.5, 1.0, 1.0).unwrap();
    let part = Partition::uniform(16, 1.0).unwrap();
    let cfg = SolverConfig::default();
    for s in b2_schemes() {
        let a = solve(&s, &p, &part, &cfg).unwrap();
        let b = solve(&s.with_indicator_weights(), &p, &part, &cfg).unwrap();
        let z0 = a.z[0].values.iter().zip(&b.z[0].values).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(z0 > 1e-6, "{z0}");
    }
}

#[test]
fn default_domain_is_not_flagged() {
    let cfg = SolverConfig::default();
    let scheme = SchemeSpec::for_order(three_stage(0.5, 1.0, 0.0).unwrap(), 3);
    for p in [brownian_sine(1.0), ou_manufactured(1.0, 0.5, 0.5, 1.0, 1.0).unwrap()] {
        let tr = solve(&scheme, &p, &Partition::uniform(32, 1.0).unwrap(), &cfg).unwrap();
        let d = tr.diagnostics.eval;
        assert!(!d.flagged, "{}: {d:?}", p.name);
        assert!(d.max_weighted_leak < 1e-6);
        assert!(d.evaluations > 0);
    }
}

#[test]
fn f32_solver_tracks_f64() {
    let cfg = SolverConfig::default();
    let err = |n: usize| -> (f64, f64) {
        let p32 = brownian_sine(1.0f32);
        let s32 = SchemeSpec::for_order(crank_nicholson::<f32>(), 2);
        let e32 = Engine::new(&s32, &p32, &cfg).unwrap();
        let t32 = e32.solve(&Partition::uniform(n, 1.0f32).unwrap()).unwrap();
        let p64 = brownian_sine(1.0f64);
        let s64 = SchemeSpec::for_order(crank_nicholson::<f64>(), 2);
        let e64 = Engine::new(&s64, &p64, &cfg).unwrap();
        let t64 = e64.solve(&Partition::uniform(n, 1.0f64).unwrap()).unwrap();
        let r32 = |x: f32| p32.exact_yz(0.0, x).unwrap().0;
        let r64 = |x: f64| p64.exact_yz(0.0, x).unwrap().0;
        (
            f64::from(marginal_mean_square(&p32.forward, &t32.y[0], r32, &e32.quad)).sqrt(),
            marginal_mean_square(&p64.forward, &t64.y[0], r64, &e64.quad).sqrt(),
        )
    };
    for n in [4, 8] {
        let (a, b) = err(n);
        assert!((a - b).abs() <= 1e-4 * (1.0 + b) && a > 0.0, "n = {n}: {a} vs {b}");
    }
    let ((a4, _), (a8, _)) = (err(4), err(8));
    let slope = (a4 / a8).log2();
    assert!((slope - 2.0).abs() < 0.4, "f32 slope {slope}");
}
