//! Randomized checks of policy enactment through the management service.

use std::sync::Arc;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use vsn_core::assets::{load_case_study, CaseStudy, CASE_STUDIES};
use vsn_core::feature_model::{validate_configuration, FeatureConfiguration, FeatureModel};
use vsn_core::management::Manager;
use vsn_core::network::SimClock;
use vsn_core::policy::EnactmentReport;
use vsn_core::testkit::random_configuration;

fn valid_configuration(model: &FeatureModel, rng: &mut StdRng) -> FeatureConfiguration {
    loop {
        let c = random_configuration(model, rng);
        if validate_configuration(model, &c).valid {
            return c;
        }
    }
}

fn manager(case: &CaseStudy) -> Manager {
    case.manager(Arc::new(SimClock::new(0))).unwrap()
}

fn apply_all(case: &CaseStudy, tenant: &str, configs: &[&FeatureConfiguration]) -> Manager {
    let m = manager(case);
    m.create_tenant(tenant).unwrap();
    for c in configs {
        m.apply_configuration(tenant, (*c).clone(), None).unwrap();
    }
    m
}

/// Everything the tenant's VSN consists of, as comparable text.
fn footprint(m: &Manager, tenant: &str) -> String {
    let vsn = m.vsn(tenant).unwrap();
    let params: Vec<_> = m.network().tenant_params(tenant).into_iter().collect();
    serde_json::to_string(&(vsn, params)).unwrap()
}

fn without_timing(mut r: EnactmentReport) -> EnactmentReport {
    r.overhead_ms = 0.0;
    r
}

fn reconfigured_matches_fresh(case: &CaseStudy, a: &FeatureConfiguration, b: &FeatureConfiguration) -> Result<(), String> {
    let stepped = apply_all(case, "T", &[a, b]);
    let fresh = apply_all(case, "T", &[b]);
    let (x, y) = (footprint(&stepped, "T"), footprint(&fresh, "T"));
    if x != y {
        return Err(format!("{}: reconfigured\n{x}\nfresh\n{y}", case.name));
    }
    Ok(())
}

#[test]
fn reconfiguring_between_tenants_matches_fresh_provisioning() {
    for name in CASE_STUDIES {
        let case = load_case_study(name).unwrap();
        for a in case.tenants.values() {
            for b in case.tenants.values() {
                reconfigured_matches_fresh(&case, a, b).unwrap();
            }
        }
        let full = &case.full_coverage;
        for c in case.tenants.values() {
            reconfigured_matches_fresh(&case, full, c).unwrap();
            reconfigured_matches_fresh(&case, c, full).unwrap();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_reconfiguration_matches_fresh_provisioning(seed in any::<u64>(), case_index in 0..CASE_STUDIES.len()) {
        let case = load_case_study(CASE_STUDIES[case_index]).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let a = valid_configuration(&case.model, &mut rng);
        let b = valid_configuration(&case.model, &mut rng);
        let outcome = reconfigured_matches_fresh(&case, &a, &b);
        prop_assert!(outcome.is_ok(), "{}", outcome.unwrap_err());
    }

    #[test]
    fn enactment_is_deterministic_bounded_and_attributable(seed in any::<u64>(), case_index in 0..CASE_STUDIES.len()) {
        let case = load_case_study(CASE_STUDIES[case_index]).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let a = valid_configuration(&case.model, &mut rng);
        let b = valid_configuration(&case.model, &mut rng);
        let run = || {
            let m = apply_all(&case, "T", &[&a]);
            m.apply_configuration("T", b.clone(), None).unwrap()
        };
        let (first, second) = (run(), run());
        prop_assert_eq!(without_timing(first.clone()), without_timing(second));

        let rules = case.policy.rules.len();
        prop_assert!(first.passes <= rules);
        let mut fired = first.fired_rules.clone();
        fired.sort();
        fired.dedup();
        prop_assert_eq!(fired.len(), first.fired_rules.len(), "a rule fired twice");
        for action in &first.actions_applied {
            prop_assert!(first.fired_rules.contains(&action.rule));
        }
    }

    #[test]
    fn teardown_after_any_history_restores_pristine_tables(seed in any::<u64>(), case_index in 0..CASE_STUDIES.len()) {
        let case = load_case_study(CASE_STUDIES[case_index]).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let m = manager(&case);
        let pristine = m.network().tables();
        m.create_tenant("T").unwrap();
        for _ in 0..4 {
            m.apply_configuration("T", valid_configuration(&case.model, &mut rng), None).unwrap();
        }
        m.teardown("T").unwrap();
        prop_assert_eq!(m.network().tables(), pristine);
    }
}

#[test]
fn replaying_a_request_against_restored_state_gives_the_same_report() {
    let case = load_case_study("rosas").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let reconfigured = case.configuration("reconfigurations/happytours.json").unwrap();

    let original = manager(&case).with_state_dir(dir.path()).unwrap();
    original.create_tenant("HappyTours").unwrap();
    original.apply_configuration("HappyTours", case.tenants["HappyTours"].clone(), None).unwrap();

    let restored = manager(&case).with_state_dir(dir.path()).unwrap();
    assert_eq!(restored.network().tables(), original.network().tables());

    let a = original.apply_configuration("HappyTours", reconfigured.clone(), Some(1)).unwrap();
    let b = restored.apply_configuration("HappyTours", reconfigured, Some(1)).unwrap();
    assert_eq!(without_timing(a), without_timing(b));
}
