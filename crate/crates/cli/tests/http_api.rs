mod common;

use vsn_core::control::VsnStatus;
use vsn_core::feature_model::ViolationCode;
use vsn_core::management::MessageRequest;
use vsn_core::network::Payload;

use common::{major_without_tow, start};

#[test]
fn model_network_and_validate() {
    let (case, _server, client) = start("rosas");
    assert_eq!(client.model().unwrap(), case.model);
    assert_eq!(client.network().unwrap().nodes.len(), 13);
    let ok = client.validate(&case.tenants["HappyTours"]).unwrap();
    assert!(ok.valid);
    let bad = client.validate(&major_without_tow(&case)).unwrap();
    assert!(!bad.valid);
    assert!(bad.violations.iter().any(|v| v.code == ViolationCode::ConstraintViolated && v.message.contains("Major include Tow")));
}

#[test]
fn tenant_routes_and_status_codes() {
    let (case, _server, client) = start("rosas");
    let ht = &case.tenants["HappyTours"];
    assert_eq!(client.create_tenant("HappyTours").unwrap().version, 0);
    assert_eq!(client.create_tenant("HappyTours").unwrap_err().status(), Some(409));
    assert_eq!(client.tenants().unwrap().len(), 1);
    assert_eq!(client.configuration("HappyTours").unwrap_err().status(), Some(404));
    assert_eq!(client.configuration("Nobody").unwrap_err().status(), Some(404));
    assert_eq!(client.put_configuration("Nobody", ht, None).unwrap_err().status(), Some(404));

    let err = client.put_configuration("HappyTours", &major_without_tow(&case), None).unwrap_err();
    assert_eq!(err.status(), Some(422));
    assert!(err.to_string().contains("Major include Tow"), "{err}");

    let report = client.put_configuration("HappyTours", ht, Some(0)).unwrap();
    assert!(report.fired_rules.contains(&"rRepairSelected".to_string()));
    assert_eq!(client.put_configuration("HappyTours", ht, Some(0)).unwrap_err().status(), Some(409));
    assert_eq!(client.configuration("HappyTours").unwrap().selected, ht.selected);

    let vsn = client.vsn("HappyTours").unwrap();
    assert_eq!(vsn.status, VsnStatus::Ready);
    assert!(vsn.installed_collaborations.contains(&"RepairingByMacRepair".to_string()));
    assert_eq!(vsn.installed_units, vec!["SwiftTowAndMacRepair"]);

    let msg = MessageRequest { at: "SC".into(), interaction: "iRequestTow".into(), instance_id: "c1".into(), payload: Payload::new() };
    let trace = client.inject("HappyTours", &msg).unwrap();
    assert_eq!(trace.delivered(), vec![("SC", "iTowAck")]);
    let bad = MessageRequest { at: "Nowhere".into(), ..msg };
    assert_eq!(client.inject("HappyTours", &bad).unwrap_err().status(), Some(400));

    assert_eq!(client.metrics().unwrap().len(), 1);
    client.delete_configuration("HappyTours").unwrap();
    let vsn = client.vsn("HappyTours").unwrap();
    assert_eq!(vsn.status, VsnStatus::Absent);
    assert!(vsn.table_projection.is_empty());
    assert_eq!(client.delete_configuration("Nobody").unwrap_err().status(), Some(404));
}
