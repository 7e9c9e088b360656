use bsderk::analysis::{eta, global_convergence_study, local_truncation_study, truncation_total};
use bsderk::model::brownian_sine;
use bsderk::numerics::marginal_mean_square;
use bsderk::tableau::{crank_nicholson, explicit_euler, three_stage};
use bsderk::{Band, Engine, Partition, SchemeSpec, SolverConfig};

const ANY: Band = Band { lo: None, hi: None };

#[test]
fn slopes_increase_with_order() {
    let p = brownian_sine(1.0);
    let cfg = SolverConfig::default();
    let n = [8, 16, 32, 64];
    let slopes: Vec<f64> = [
        SchemeSpec::for_order(explicit_euler(), 1),
        SchemeSpec::for_order(crank_nicholson(), 2),
        SchemeSpec::for_order(three_stage(0.5, 1.0, 0.0).unwrap(), 3),
    ]
    .iter()
    .map(|s| global_convergence_study(s, &p, &cfg, &n, ANY, false).unwrap().check("slope_Y+Z").unwrap().slope())
    .collect();
    assert!(slopes[0] < slopes[1] && slopes[1] < slopes[2], "{slopes:?}");
}

#[test]
fn truncation_total_is_the_sum_of_step_defects() {
    let p = brownian_sine(1.0);
    let cfg = SolverConfig::default();
    let scheme = SchemeSpec::for_order(crank_nicholson(), 2);
    let engine = Engine::new(&scheme, &p, &cfg).unwrap();
    let part = Partition::from_times(vec![0.0, 0.1, 0.35, 0.5, 0.8, 1.0]).unwrap();
    let mut direct = 0.0;
    for i in 0..part.n() {
        let (t, h) = (part.times[i], part.steps[i]);
        let (y, z) = engine.one_step_hat(t, h).unwrap();
        let ey = marginal_mean_square(&p.forward, &y, |x| p.exact_yz(t, x).unwrap().0, &engine.quad);
        let ez = marginal_mean_square(&p.forward, &z, |x| p.exact_yz(t, x).unwrap().1, &engine.quad);
        direct += h * (ey / (h * h) + ez);
        let (ny, nz) = eta(&engine, t, h).unwrap();
        assert!((ny - ey / (h * h)).abs() <= 1e-12 * ny.max(1e-300) && (nz - ez).abs() <= 1e-12 * nz.max(1e-300));
    }
    let total = truncation_total(&engine, &part).unwrap();
    assert!((total - direct).abs() <= 1e-12 * direct, "{total} vs {direct}");
}

#[test]
fn global_error_is_bounded_by_truncation() {
    let p = brownian_sine(1.0);
    let cfg = SolverConfig::default();
    for scheme in [SchemeSpec::for_order(explicit_euler(), 1), SchemeSpec::for_order(three_stage(0.5, 1.0, 0.0).unwrap(), 3)] {
        let rep = global_convergence_study(&scheme, &p, &cfg, &[8, 16, 32, 64], ANY, true).unwrap();
        let ratios: Vec<f64> = rep.extra["global_vs_truncation"].as_array().unwrap().iter().map(|e| e["ratio"].as_f64().unwrap()).collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        assert!(lo > 0.0 && hi.is_finite(), "{ratios:?}");
        assert!(hi / lo < 4.0, "{ratios:?}");
    }
}

#[test]
fn studies_are_deterministic() {
    let p = brownian_sine(1.0);
    let cfg = SolverConfig::default();
    let scheme = SchemeSpec::for_order(three_stage(0.5, 1.0, 0.0).unwrap(), 3);
    let run = || local_truncation_study(&scheme, &p, &cfg, None, &[0.2, 0.1, 0.05], ANY, ANY).unwrap().to_json();
    assert_eq!(run(), run());
    let run = || global_convergence_study(&scheme, &p, &cfg, &[4, 8], ANY, true).unwrap().to_csv();
    assert_eq!(run(), run());
}

#[test]
fn local_anchor_defaults_to_last_window() {
    let p = brownian_sine(1.0);
    let cfg = SolverConfig::default();
    let scheme = SchemeSpec::for_order(explicit_euler(), 1);
    let a = local_truncation_study(&scheme, &p, &cfg, None, &[0.4, 0.2], ANY, ANY).unwrap();
    let b = local_truncation_study(&scheme, &p, &cfg, Some(0.6), &[0.4, 0.2], ANY, ANY).unwrap();
    assert_eq!(a.rows, b.rows);
    assert!(local_truncation_study(&scheme, &p, &cfg, Some(0.8), &[0.4], ANY, ANY).is_err());
}
