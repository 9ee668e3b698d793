use gfm_core::harness::{run_scenario, ScenarioConfig, ScenarioMetrics};
use gfm_core::plant::FaultSchedule;
use proptest::prelude::*;

fn short_fault(scr: f64, retained: f64, x: f64, p_s: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(0.3);
    cfg.name = "short".into();
    cfg.scr = Some(scr);
    cfg.p_s = p_s;
    cfg.fault = Some(FaultSchedule { retained_voltage: retained, ..FaultSchedule::new(0.1, 0.16) });
    cfg.faultmode.damping_x = x;
    cfg
}

#[test]
fn unfaulted_grid_holds_setpoint() {
    let mut cfg = ScenarioConfig::new(1.0);
    cfg.scr = Some(5.0);
    cfg.p_s = 0.5;
    let ts = run_scenario(&cfg).unwrap();
    for s in ts.samples.iter().filter(|s| s.t >= 0.5) {
        assert!((s.p - 0.5).abs() <= 0.005, "P = {} at {}", s.p, s.t);
        assert!(!s.fm);
    }
}

#[test]
fn bundled_scenarios_engage_the_limiter() {
    for name in ["fig4", "fig6", "fig8a", "fig8b"] {
        let cfg = ScenarioConfig::bundled(name).unwrap();
        let ts = run_scenario(&cfg).unwrap();
        let m = ScenarioMetrics::compute(&ts, &cfg).unwrap();
        assert!(m.limiter_engaged, "{name}");
        assert!(m.peak_i_ref.value <= cfg.spc.i_lim + 1e-9, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn identical_configs_give_identical_output(
        scr in 2.0f64..10.0, retained in 0.2f64..0.8, x in 0.0f64..3.0, p_s in 0.1f64..0.8,
    ) {
        let cfg = short_fault(scr, retained, x, p_s);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        prop_assert_eq!(a.to_csv_bytes(), b.to_csv_bytes());
    }

    #[test]
    fn decimation_keeps_retained_samples(
        scr in 2.0f64..10.0, x in 0.0f64..3.0, n in 2usize..25,
    ) {
        let full_cfg = short_fault(scr, 0.3, x, 0.5);
        let full = run_scenario(&full_cfg).unwrap();
        let thin = run_scenario(&ScenarioConfig { decimation: n, ..full_cfg }).unwrap();
        prop_assert_eq!(thin.len(), full.len().div_ceil(n));
        for (k, s) in thin.samples.iter().enumerate() {
            prop_assert_eq!(s, &full.samples[k * n]);
        }
    }

    #[test]
    fn reference_never_exceeds_limit(
        scr in 2.0f64..10.0, retained in 0.0f64..0.9, x in 0.0f64..3.0, p_s in -0.8f64..0.9,
    ) {
        let cfg = short_fault(scr, retained, x, p_s);
        match run_scenario(&cfg) {
            Ok(ts) => {
                for s in &ts.samples {
                    prop_assert!(s.i_ref_norm() <= cfg.spc.i_lim + 1e-9);
                }
            }
            Err(gfm_core::harness::RunError::Diverged(div)) => {
                for s in &div.prefix.samples {
                    prop_assert!(s.i_ref_norm() <= cfg.spc.i_lim + 1e-9);
                }
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
