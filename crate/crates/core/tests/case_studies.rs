use std::sync::Arc;

use vsn_core::assets::{load_case_study, run_scenario, CASE_STUDIES};
use vsn_core::control::VsnStatus;
use vsn_core::network::SimClock;

#[test]
fn scenarios_pass_and_match_golden_traces() {
    for name in CASE_STUDIES {
        let case = load_case_study(name).unwrap();
        for scenario in &case.scenarios {
            let manager = case.manager(Arc::new(SimClock::new(0))).unwrap();
            let report = run_scenario(&case.dir, scenario, &manager).unwrap();
            assert!(report.passed, "{report}");
            report.check_golden(&case.dir).unwrap();
        }
    }
}

#[test]
fn every_tenant_provisions_and_tears_down_to_pristine_tables() {
    for name in CASE_STUDIES {
        let case = load_case_study(name).unwrap();
        let manager = case.manager(Arc::new(SimClock::new(0))).unwrap();
        let pristine = manager.network().tables();
        for (tenant, cfg) in &case.tenants {
            manager.create_tenant(tenant).unwrap();
            let report = manager.apply_configuration(tenant, cfg.clone(), Some(0)).unwrap();
            assert!(!report.actions_applied.is_empty(), "{tenant}");
            assert_eq!(manager.vsn(tenant).unwrap().status, VsnStatus::Ready);
            manager.teardown(tenant).unwrap();
            assert_eq!(manager.network().tables(), pristine, "{name}/{tenant}");
            assert_eq!(manager.vsn(tenant).unwrap().status, VsnStatus::Absent);
        }
    }
}
