use std::sync::Arc;

use super::*;
use crate::feature_model::{Cardinality, Domain, Feature};
use crate::network::{SimClock, StubCatalog};
use crate::policy::parse_policy;
use crate::value::Value;

const TOPOLOGY: &str = r#"{
  "nodes": [{"id": "SC", "service": "Center"}, {"id": "GR", "service": "Garage"}],
  "contracts": [{"id": "SC-GR", "from": "SC", "to": "GR"}],
  "rules": [
    {"rep": "SC", "ruleId": "rLimit", "mechanism": "admit", "match": ["iRepair"], "params": {"windowSeconds": 60}, "perTenant": ["limit"]},
    {"rep": "SC", "ruleId": "rRoute", "mechanism": "route", "match": ["iRepair"], "to": [{"node": "GR", "interaction": "iRepair"}]},
    {"rep": "SC-GR", "ruleId": "rRepairP", "mechanism": "process", "match": ["iRepair"]},
    {"rep": "SC-GR", "ruleId": "rTowP", "mechanism": "process", "match": ["iTow"]}
  ]
}"#;

const CATALOG: &str = r#"{
  "collaborations": [
    {"id": "Repairing", "realizes": ["Repair"],
     "entries": [{"rep": "SC", "rules": ["rLimit", "rRoute"]}, {"rep": "SC-GR", "rules": ["rRepairP"]}],
     "params": [{"rep": "SC", "rule": "rLimit", "param": "limit", "source": "attr:Repair.Throughput"}]},
    {"id": "Towing", "realizes": ["Tow"], "entries": [{"rep": "SC-GR", "rules": ["rTowP"]}]}
  ],
  "units": []
}"#;

const POLICY: &str = r#"
policy P {
  rule rRepairSelected {
    when selected(Repair)
    then add collaboration Repairing with { limit = attr(Repair.Throughput) };
  }
  rule rRepairUpdated {
    when updated(Repair.Throughput)
    then update collaboration Repairing with { limit = attr(Repair.Throughput) };
  }
  rule rTowSelected { when selected(Tow) then add collaboration Towing; }
  rule rTowDeselected { when deselected(Tow) then remove collaboration Towing; }
}
"#;

fn manager() -> Manager {
    let root = Feature::new("Root", Cardinality::MANDATORY)
        .with_child(
            Feature::new("Repair", Cardinality::MANDATORY)
                .with_attribute("Throughput", Domain::IntRange { min: 10, max: 250 }),
        )
        .with_child(Feature::new("Tow", Cardinality::OPTIONAL));
    let model = FeatureModel::new("M", root, vec![]).unwrap();
    let net = ServiceNetwork::from_json(TOPOLOGY, &StubCatalog::new(), Arc::new(SimClock::new(0))).unwrap();
    let catalog = Catalog::from_json(CATALOG).unwrap();
    let policy = parse_policy(POLICY, &model, &catalog).unwrap();
    Manager::new(Assets { model, network: Arc::new(net), catalog, policy }).unwrap()
}

fn config(throughput: i64, tow: bool) -> FeatureConfiguration {
    let mut c = FeatureConfiguration::new("").select(["Root", "Repair"]).set("Repair.Throughput", throughput);
    if tow {
        c = c.select(["Tow"]);
    }
    c
}

#[test]
fn tenant_lifecycle() {
    let m = manager();
    assert_eq!(m.create_tenant("A").unwrap().version, 0);
    assert!(matches!(m.create_tenant("A"), Err(ManageError::DuplicateTenant(_))));
    assert!(matches!(m.configuration("A"), Err(ManageError::NoConfiguration { .. })));
    assert!(matches!(m.vsn("B"), Err(ManageError::UnknownTenant(_))));
    assert_eq!(m.vsn("A").unwrap().status, VsnStatus::Absent);

    let r = m.apply_configuration("A", config(80, true), Some(0)).unwrap();
    assert_eq!(r.phase, Phase::Configuration);
    assert_eq!(r.request_id, "req-000001");
    assert_eq!(r.fired_rules, vec!["rRepairSelected", "rTowSelected"]);
    assert_eq!(m.configuration("A").unwrap().tenant_id, "A");
    let view = m.vsn("A").unwrap();
    assert_eq!(view.status, VsnStatus::Ready);
    assert_eq!(view.installed_collaborations, vec!["Repairing", "Towing"]);
    assert_eq!(view.table_projection["SC-GR"], vec!["rRepairP", "rTowP"]);

    let err = m.apply_configuration("A", config(90, false), Some(0)).unwrap_err();
    assert!(matches!(err, ManageError::VersionConflict { expected: 0, actual: 1, .. }));

    let r = m.apply_configuration("A", config(90, false), Some(1)).unwrap();
    assert_eq!(r.phase, Phase::Reconfiguration);
    assert_eq!(r.fired_rules, vec!["rRepairUpdated", "rTowDeselected"]);
    assert_eq!(m.control().record("A").unwrap().param("SC", "rLimit", "limit"), Some(&Value::Int(90)));
    assert_eq!(m.tenant("A").unwrap().version, 2);
    assert_eq!(m.metrics().len(), 2);

    let t = m.teardown("A").unwrap();
    assert_eq!(t.operation, "teardownVsn");
    let view = m.vsn("A").unwrap();
    assert_eq!(view.status, VsnStatus::Absent);
    assert!(view.table_projection.is_empty());
    assert!(m.configuration("A").is_err());

    let r = m.apply_configuration("A", config(80, false), None).unwrap();
    assert_eq!(r.phase, Phase::Configuration);
}

#[test]
fn invalid_configuration_changes_nothing() {
    let m = manager();
    m.create_tenant("A").unwrap();
    let err = m.apply_configuration("A", config(5, false), None).unwrap_err();
    let ManageError::Invalid(result) = err else { panic!("expected invalid") };
    assert!(!result.valid);
    assert_eq!(m.tenant("A").unwrap().version, 0);
    assert!(m.metrics().is_empty());
    assert_eq!(m.vsn("A").unwrap().status, VsnStatus::Absent);
}

#[test]
fn inject_checks_tenant() {
    let m = manager();
    m.create_tenant("A").unwrap();
    m.apply_configuration("A", config(80, false), None).unwrap();
    let req = MessageRequest { at: "SC".into(), interaction: "iRepair".into(), instance_id: "c1".into(), payload: Payload::new() };
    assert!(m.inject("A", req.clone()).is_ok());
    assert!(matches!(m.inject("Z", req), Err(ManageError::UnknownTenant(_))));
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager().with_state_dir(dir.path()).unwrap();
    assert!(m.tenants().is_empty());
    m.create_tenant("A").unwrap();
    m.create_tenant("B").unwrap();
    m.apply_configuration("A", config(80, true), None).unwrap();
    m.apply_configuration("B", config(40, false), None).unwrap();
    let vsn_a = serde_json::to_string(&m.vsn("A").unwrap()).unwrap();
    let tables = m.network().tables();
    drop(m);

    let m = manager().with_state_dir(dir.path()).unwrap();
    assert_eq!(m.tenants().len(), 2);
    assert_eq!(serde_json::to_string(&m.vsn("A").unwrap()).unwrap(), vsn_a);
    assert_eq!(m.network().tables(), tables);
    assert_eq!(m.control().record("B").unwrap().param("SC", "rLimit", "limit"), Some(&Value::Int(40)));
    let r = m.apply_configuration("A", config(80, false), None).unwrap();
    assert_eq!(r.request_id, "req-000003");
    assert_eq!(r.phase, Phase::Reconfiguration);
}

#[test]
fn corrupt_snapshot_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager().with_state_dir(dir.path()).unwrap();
    m.create_tenant("A").unwrap();
    let path = dir.path().join(STATE_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() - 10]).unwrap();
    assert!(matches!(
        manager().with_state_dir(dir.path()),
        Err(ManageError::Persist(PersistError::CorruptState(_)))
    ));
    std::fs::write(&path, "garbage").unwrap();
    assert!(matches!(
        Snapshot::load(dir.path()),
        Err(PersistError::CorruptState(_))
    ));
}
