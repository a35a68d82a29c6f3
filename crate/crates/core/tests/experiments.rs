use sced::dispatch::ModelKind;
use sced::expcli::{misspecification_experiment, tradeoff_curve, Context, ExperimentConfig};
use sced::removal::Algorithm;
use sced::uncertainty::DrDistribution;

fn base3(n: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("base3").unwrap();
    cfg.n_scenarios = n;
    cfg.n_test = n;
    cfg
}

#[test]
fn uniform_margin_is_exact_quantile() {
    let u = DrDistribution::uniform(0.0, 2.0).unwrap();
    assert!((u.chance_margin(0.8).unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn misspecified_stochastic_costs_more() {
    let ctx = Context::new(base3(1000)).unwrap();
    let [truth, wrong] = misspecification_experiment(&ctx, &[100.0], &[DrDistribution::uniform(0.0, 2.0).unwrap()]).unwrap();
    let (t, w) = (truth.report.unwrap(), wrong.report.unwrap());
    assert_eq!(t.seed, w.seed);
    assert!(w.dispatch_cost > t.dispatch_cost);
    assert!(w.w_real > t.w_real);
    // A smaller margin means less DR is relied on.
    assert!(w.total_dr < t.total_dr);
}

#[test]
fn tradeoff_curve_is_monotone_and_skips_oversized_p() {
    let ctx = Context::new(base3(300)).unwrap();
    let cells = tradeoff_curve(&ctx, Algorithm::Min, &[0, 30, 60, 120, 300, 400], &[100.0]).unwrap();
    assert_eq!(cells.len(), 4);
    let h: Vec<f64> = cells.iter().map(|c| c.row.h_star.unwrap()).collect();
    assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{h:?}");
    let eps: Vec<f64> = cells.iter().map(|c| c.row.epsilon_bound.unwrap()).collect();
    assert!(eps.windows(2).all(|w| w[1] >= w[0]));
    assert!(cells.iter().all(|c| c.row.model == ModelKind::Scenario.to_string()));
}

#[test]
fn high_sigma_preset_runs() {
    let mut cfg = ExperimentConfig::preset("high-sigma").unwrap();
    cfg.n_scenarios = 200;
    cfg.n_test = 200;
    let ctx = Context::new(cfg).unwrap();
    assert!(ctx.robust_box.lo(0) >= 0.2 - 1e-12 && ctx.robust_box.hi(0) <= 1.8 + 1e-12);
    for m in [ModelKind::Deterministic, ModelKind::Stochastic, ModelKind::Robust, ModelKind::Scenario] {
        let c = ctx.run_cell(&[100.0], m, None).unwrap();
        assert_eq!(c.row.status, "optimal", "{m}");
    }
}
