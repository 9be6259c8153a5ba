//! Acceptance suite. Runs each criterion against its time limit and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde_json::Value as Json;

use vsn_cli::{run_with, spawn, Client, RunningServer};
use vsn_core::assets::{load_case_study, run_scenario, CaseStudy, ServiceTarget, CASE_STUDIES};
use vsn_core::events::{diff_events, initial_events, EventKind, EventSet};
use vsn_core::feature_model::{
    enumerate_configurations, validate_configuration, FeatureConfiguration, ValidationResult, ViolationCode,
};
use vsn_core::management::{Manager, MessageRequest};
use vsn_core::network::{HopAction, SimClock};
use vsn_core::testkit::{join_network, join_part, random_churn, random_configuration, random_model, ModelShape};
use vsn_core::Value;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rosas() -> CaseStudy {
    load_case_study("rosas").expect("rosas assets load")
}

fn serve(case: &CaseStudy) -> Result<(Arc<Manager>, RunningServer, Client), String> {
    let manager = Arc::new(case.manager(Arc::new(SimClock::new(0))).map_err(err)?);
    let server = spawn(manager.clone(), "127.0.0.1:0".parse().unwrap()).map_err(err)?;
    let client = Client::new(&server.url()).map_err(err)?;
    Ok((manager, server, client))
}

fn exact_codes(result: &ValidationResult, expected: &[(ViolationCode, &str)]) -> Result<(), String> {
    let got: Vec<(ViolationCode, &str)> = result.violations.iter().map(|v| (v.code, v.subject.as_str())).collect();
    ensure(got == expected, || format!("expected {expected:?}, got {got:?}"))
}

fn constraint_fidelity() -> Result<String, String> {
    let case = rosas();
    let happy = &case.tenants["HappyTours"];
    let ok = validate_configuration(&case.model, happy);
    ensure(ok.valid, || format!("HappyTours rejected:\n{ok}"))?;

    let mut no_tow = happy.clone();
    for f in ["Tow", "Heavy"] {
        no_tow.selected.remove(f);
    }
    no_tow.attribute_values.remove("Heavy.ResponseTime");
    exact_codes(
        &validate_configuration(&case.model, &no_tow),
        &[(ViolationCode::ConstraintViolated, "Major include Tow")],
    )?;

    let mut external = happy.clone();
    external.selected.remove("Internal");
    external.selected.insert("External".into());
    exact_codes(
        &validate_configuration(&case.model, &external),
        &[(ViolationCode::ConstraintViolated, "External exclude (Major.ResponseTime = 2d)")],
    )?;
    Ok("HappyTours valid; both constraint violations reported exactly".into())
}

fn oracle_equivalence() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(2024);
    let shape = ModelShape { max_features: 12, max_attributes: 2, max_constraints: 3 };
    let (mut models, mut configs, mut valid) = (0, 0, 0);
    while models < 30 {
        let model = random_model(&mut rng, shape);
        let Ok(all) = enumerate_configurations(&model, 20_000) else { continue };
        models += 1;
        let keys: BTreeSet<_> = all.iter().map(|c| (c.selected.clone(), c.attribute_values.clone())).collect();
        let mut sample: Vec<FeatureConfiguration> = all.clone();
        sample.extend((0..300).map(|_| random_configuration(&model, &mut rng)));
        for c in &sample {
            let verdict = validate_configuration(&model, c).valid;
            let member = keys.contains(&(c.selected.clone(), c.attribute_values.clone()));
            ensure(verdict == member, || {
                format!("model {}: validator says {verdict}, enumeration says {member} for {c:?}", serde_json::to_string(&model).unwrap())
            })?;
            configs += 1;
            valid += verdict as usize;
        }
    }
    Ok(format!("{models} models, {configs} configurations ({valid} valid), 100% agreement"))
}

/// Expected (kind, subject) pairs computed from the raw model file, without
/// the library's event code.
fn features_and_attributes(case: &CaseStudy) -> Vec<(String, Vec<String>)> {
    let raw: Json = serde_json::from_str(&std::fs::read_to_string(case.dir.join("model.json")).unwrap()).unwrap();
    fn walk(f: &Json, out: &mut Vec<(String, Vec<String>)>) {
        let name = f["name"].as_str().unwrap().to_string();
        let attrs = f
            .get("attributes")
            .and_then(Json::as_array)
            .map(|a| a.iter().map(|x| format!("{name}.{}", x["name"].as_str().unwrap())).collect())
            .unwrap_or_default();
        out.push((name, attrs));
        for c in f.get("children").and_then(Json::as_array).into_iter().flatten() {
            walk(c, out);
        }
    }
    let mut out = Vec::new();
    walk(&raw["root"], &mut out);
    out
}

fn pairs(set: &EventSet) -> BTreeSet<(EventKind, String)> {
    set.events.iter().map(|e| (e.kind, e.subject.clone())).collect()
}

fn event_semantics() -> Result<String, String> {
    let case = rosas();
    let old = &case.tenants["HappyTours"];
    let new = case.configuration("reconfigurations/happytours.json").map_err(err)?;
    let tree = features_and_attributes(&case);

    let mut expected_initial = BTreeSet::new();
    let mut expected_diff = BTreeSet::new();
    for (feature, attrs) in &tree {
        let (was, is) = (old.selected.contains(feature), new.selected.contains(feature));
        let kind = if was { EventKind::Selected } else { EventKind::NotSelected };
        expected_initial.insert((kind, feature.clone()));
        expected_initial.extend(attrs.iter().map(|a| (kind, a.clone())));
        let changed: Vec<&String> = attrs.iter().filter(|a| old.attribute_values.get(*a) != new.attribute_values.get(*a)).collect();
        match (was, is) {
            (false, true) => {
                expected_diff.insert((EventKind::Selected, feature.clone()));
                expected_diff.extend(attrs.iter().map(|a| (EventKind::Selected, a.clone())));
            }
            (true, false) => {
                expected_diff.insert((EventKind::Deselected, feature.clone()));
                expected_diff.extend(attrs.iter().map(|a| (EventKind::Deselected, a.clone())));
            }
            (false, false) => {
                expected_diff.insert((EventKind::NotSelected, feature.clone()));
                expected_diff.extend(attrs.iter().map(|a| (EventKind::NotSelected, a.clone())));
            }
            (true, true) if !changed.is_empty() => {
                expected_diff.insert((EventKind::Updated, feature.clone()));
                expected_diff.extend(changed.into_iter().map(|a| (EventKind::Updated, a.clone())));
            }
            (true, true) => {}
        }
    }

    let initial = initial_events(&case.model, old, "req-1").map_err(err)?;
    ensure(pairs(&initial) == expected_initial, || format!("initial events differ: {:?}", pairs(&initial)))?;
    for (kind, subject, value) in [
        (EventKind::Selected, "Major", None),
        (EventKind::Selected, "Major.ResponseTime", Some(Value::from("2d"))),
        (EventKind::Selected, "CaseHandling.Throughput", Some(Value::Int(80))),
        (EventKind::NotSelected, "Accommodation", None),
        (EventKind::NotSelected, "Minor.ResponseTime", None),
    ] {
        let e = initial.get(kind, subject).ok_or_else(|| format!("missing {kind}({subject})"))?;
        ensure(e.value == value, || format!("{kind}({subject}) carries {:?}", e.value))?;
    }

    let diff = diff_events(&case.model, old, &new, "req-2").map_err(err)?;
    ensure(pairs(&diff) == expected_diff, || format!("reconfiguration events differ: {:?}", pairs(&diff)))?;
    for (kind, subject) in [
        (EventKind::Deselected, "RentalVehicle"),
        (EventKind::Selected, "Accommodation"),
        (EventKind::Updated, "CaseHandling"),
    ] {
        ensure(diff.contains(kind, subject), || format!("missing {kind}({subject})"))?;
    }
    let throughput = diff.get(EventKind::Updated, "CaseHandling.Throughput").ok_or("missing Updated(CaseHandling.Throughput)")?;
    ensure(throughput.value == Some(Value::Int(70)), || format!("throughput update carries {:?}", throughput.value))?;
    let changes = diff.events.iter().filter(|e| e.kind != EventKind::NotSelected).count();
    Ok(format!("{} initial events; {} reconfiguration events, {changes} of them changes; 80 -> 70", initial.len(), diff.len()))
}

fn end_to_end_provisioning() -> Result<String, String> {
    let case = rosas();
    let (_manager, _server, client) = serve(&case)?;
    client.create_tenant("HappyTours").map_err(err)?;
    let report = client.put_configuration("HappyTours", &case.tenants["HappyTours"], Some(0)).map_err(err)?;
    let position = |rule: &str| report.fired_rules.iter().position(|r| r == rule).ok_or_else(|| format!("{rule} did not fire"));
    let (repair, tow, unit) = (position("rRepairSelected")?, position("rTowSelected")?, position("rSwiftTowAndMacRepairSelected")?);
    ensure(unit > repair && unit > tow, || format!("unit rule fired out of order: {:?}", report.fired_rules))?;
    let action = |target: &str| report.actions_applied.iter().position(|a| a.change.target == target).ok_or_else(|| format!("{target} not installed"));
    ensure(action("SwiftTowAndMacRepair")? > action("RepairingByMacRepair")?.max(action("TowingBySwiftTow")?), || {
        "unit installed before its collaborations".into()
    })?;

    let vsn = client.vsn("HappyTours").map_err(err)?;
    let collaborations: BTreeSet<&str> = vsn.installed_collaborations.iter().map(String::as_str).collect();
    let expected: BTreeSet<&str> = ["CaseHandlingBy24by7", "RentalByRentACar", "RepairingByMacRepair", "TowingBySwiftTow"].into();
    ensure(collaborations == expected, || format!("collaborations {collaborations:?}"))?;
    ensure(vsn.installed_units == ["SwiftTowAndMacRepair"], || format!("units {:?}", vsn.installed_units))?;

    let scenario = case.scenario("happytours-repair").ok_or("scenario missing")?;
    let run = run_scenario(&case.dir, scenario, &client).map_err(err)?;
    ensure(run.passed, || run.to_string())?;
    run.check_golden(&case.dir).map_err(err)?;
    let (first, second) = (&run.steps[0].trace, &run.steps[1].trace);
    ensure(first.routed().contains(&("GR1", "iDoRepair")) && first.emitted_events() == ["eRepairReqd"], || {
        format!("iDoRepair leg: {:?}", first.routed())
    })?;
    ensure(first.disposition_kinds()[0] == "PendingJoin", || "GR1 did not wait for iNotifyDelivery".into())?;
    ensure(second.invocations() == [("MacRepair", "tDoRepair")], || format!("invocations {:?}", second.invocations()))?;
    ensure(second.delivered() == [("SC", "iPayRepair"), ("MO", "iNotifyRepair")], || format!("delivered {:?}", second.delivered()))?;
    Ok(format!("{} rules fired; unit after both collaborations; iDoRepair+iNotifyDelivery -> tDoRepair -> iPayRepair+iNotifyRepair", report.fired_rules.len()))
}

fn reconfiguration() -> Result<String, String> {
    let case = rosas();
    let (_manager, _server, client) = serve(&case)?;
    client.create_tenant("HappyTours").map_err(err)?;
    client.put_configuration("HappyTours", &case.tenants["HappyTours"], Some(0)).map_err(err)?;
    let new = case.configuration("reconfigurations/happytours.json").map_err(err)?;
    let report = client.put_configuration("HappyTours", &new, Some(1)).map_err(err)?;
    for rule in ["rRentalVehicleDeselected", "rAccommodationSelected", "rCaseHandlingUpdated"] {
        ensure(report.fired_rules.iter().any(|r| r == rule), || format!("{rule} did not fire: {:?}", report.fired_rules))?;
    }
    let vsn = client.vsn("HappyTours").map_err(err)?;
    let has = |c: &str| vsn.installed_collaborations.iter().any(|x| x == c);
    ensure(has("AccommodationByHotelChain") && !has("RentalByRentACar"), || format!("collaborations {:?}", vsn.installed_collaborations))?;

    let mut admitted = 0;
    for i in 1..=71 {
        let req = MessageRequest { at: "SC".into(), interaction: "iDoRepair".into(), instance_id: format!("claim-{i}"), payload: Default::default() };
        let trace = client.inject("HappyTours", &req).map_err(err)?;
        if let HopAction::Admitted { limit, .. } = trace.hops[0].action {
            ensure(limit == 70, || format!("admission limit is {limit}"))?;
        }
        match (i, trace.is_rejected()) {
            (71, true) => {}
            (71, false) => return Err("71st request admitted".into()),
            (_, true) => return Err(format!("request {i} rejected")),
            (_, false) => admitted += 1,
        }
    }
    Ok(format!("rental swapped for accommodation; {admitted} admitted, 71st rejected at limit 70"))
}

fn inverse_and_isolation() -> Result<String, String> {
    let mut total = 0;
    for name in CASE_STUDIES {
        let case = load_case_study(name).map_err(err)?;
        let manager = case.manager(Arc::new(SimClock::new(0))).map_err(err)?;
        for (tenant, cfg) in &case.tenants {
            manager.create_tenant(tenant).map_err(err)?;
            manager.apply_configuration(tenant, cfg.clone(), None).map_err(err)?;
        }
        let net = manager.network().clone();
        let watched: Vec<(String, String)> =
            case.tenants.keys().map(|t| (t.clone(), serde_json::to_string(&net.projection(t)).unwrap())).collect();
        let done = AtomicBool::new(false);
        let observed = AtomicUsize::new(0);
        let mismatch = std::thread::scope(|s| {
            let watcher = s.spawn(|| {
                while !done.load(Ordering::Relaxed) {
                    for (t, p) in &watched {
                        if serde_json::to_string(&net.projection(t)).unwrap() != *p {
                            return Some(t.clone());
                        }
                    }
                    observed.fetch_add(1, Ordering::Relaxed);
                }
                None
            });
            let mut rng = StdRng::seed_from_u64(99);
            let mut outcome = Ok(());
            for i in 0..200 {
                outcome = random_churn(manager.control(), &format!("Churn{}", i % 3), &mut rng, 12, || {
                    for (t, p) in &watched {
                        if serde_json::to_string(&net.projection(t)).unwrap() != *p {
                            return Err(format!("projection of {t} changed"));
                        }
                    }
                    Ok(())
                });
                if outcome.is_err() {
                    break;
                }
                total += 1;
            }
            done.store(true, Ordering::Relaxed);
            (outcome, watcher.join().unwrap())
        });
        mismatch.0.map_err(|e| format!("{name}: {e}"))?;
        if let Some(t) = mismatch.1 {
            return Err(format!("{name}: concurrent reader saw {t}'s projection change"));
        }
    }
    Ok(format!("{total} sequences restored tables exactly; resident tenants byte-identical throughout"))
}

fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.clone();
        let head = rest.remove(i);
        for mut p in permutations(rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

fn join_permutations() -> Result<String, String> {
    let mut runs = 0;
    for k in [2, 3] {
        let mut merged = None;
        for order in permutations((0..k).collect()) {
            let net = join_network(k, "T", Arc::new(SimClock::new(0)));
            for &i in &order {
                net.inject(join_part("T", "c1", i)).map_err(err)?;
            }
            let calls = net.stub("Joiner").unwrap().invocations();
            ensure(calls.len() == 1, || format!("k={k} {order:?}: {} invocations", calls.len()))?;
            match &merged {
                None => merged = Some(calls[0].payload.clone()),
                Some(m) => ensure(*m == calls[0].payload, || format!("k={k} {order:?}: payload {:?}", calls[0].payload))?,
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} arrival orders, one invocation each, identical merged payloads"))
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut errs) = (Vec::new(), Vec::new());
    let argv: Vec<&str> = std::iter::once("vsn").chain(args.iter().copied()).collect();
    let code = run_with(argv, &mut out, &mut errs);
    (code, String::from_utf8_lossy(&out).into(), String::from_utf8_lossy(&errs).into())
}

/// Ordinary least squares of cumulative overhead on request index.
fn r_squared(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xs: Vec<f64> = (1..=ys.len()).map(|i| i as f64).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (my + slope * (x - mx))).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

fn overhead_linearity() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut lines = Vec::new();
    for name in CASE_STUDIES {
        let case = load_case_study(name).map_err(err)?;
        let (_manager, server, _client) = serve(&case)?;
        let csv = dir.path().join(format!("{name}.csv"));
        let config = case.dir.join("full_coverage.json");
        let (code, _, stderr) = cli(&[
            "bench", "--url", &server.url(), "--requests", "200",
            "--config", config.to_str().unwrap(), "--out", csv.to_str().unwrap(),
        ]);
        ensure(code == 0, || format!("{name}: bench exited {code}: {stderr}"))?;
        let text = std::fs::read_to_string(&csv).map_err(err)?;
        let rows: Vec<(f64, f64)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[3].parse().unwrap(), f[4].parse().unwrap())
            })
            .collect();
        ensure(rows.len() == 200, || format!("{name}: {} rows", rows.len()))?;
        let cumulative: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let r2 = r_squared(&cumulative);
        let mut per: Vec<f64> = rows.iter().map(|r| r.0).collect();
        per.sort_by(f64::total_cmp);
        let median = (per[99] + per[100]) / 2.0;
        let ratio = per[199] / median;
        ensure(r2 >= 0.90, || format!("{name}: r2 {r2:.4}"))?;
        ensure(ratio <= 3.0, || format!("{name}: max/median {ratio:.2} (median {median:.4} ms, max {:.4} ms)", per[199]))?;
        lines.push(format!("{name} r2={r2:.4} max/median={ratio:.2}"));
    }
    Ok(lines.join("; "))
}

fn case_studies() -> Result<String, String> {
    let mut lines = Vec::new();
    for name in CASE_STUDIES {
        let case = load_case_study(name).map_err(err)?;
        let lint = case.coverage_lint();
        ensure(lint.is_empty(), || format!("{name}: {lint:?}"))?;
        let (manager, _server, client) = serve(&case)?;
        let pristine = manager.network().tables();
        ensure(case.tenants.len() == 3, || format!("{name}: {} tenants", case.tenants.len()))?;
        let mut scenarios = 0;
        for (tenant, cfg) in &case.tenants {
            client.prepare_tenant(tenant).map_err(err)?;
            client.apply(tenant, cfg).map_err(err)?;
            let mine: Vec<_> = case.scenarios.iter().filter(|s| &s.tenant == tenant).collect();
            ensure(!mine.is_empty(), || format!("{name}/{tenant}: no golden scenario"))?;
            for s in mine {
                let run = run_scenario(&case.dir, s, &client).map_err(err)?;
                ensure(run.passed, || run.to_string())?;
                run.check_golden(&case.dir).map_err(|e| format!("{name}/{}: {e}", s.name))?;
                scenarios += 1;
            }
            client.delete_configuration(tenant).map_err(err)?;
            ensure(manager.network().projection(tenant).is_empty(), || format!("{name}/{tenant}: entries left"))?;
        }
        ensure(manager.network().tables() == pristine, || format!("{name}: tables not pristine"))?;
        lines.push(format!("{name}: 3 tenants, {scenarios} golden scenarios"));
    }
    Ok(lines.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Duration, Check); 9] = [
        (1, "constraint fidelity", Duration::from_secs(1), constraint_fidelity),
        (2, "oracle equivalence", Duration::from_secs(30), oracle_equivalence),
        (3, "event semantics", Duration::from_secs(1), event_semantics),
        (4, "end-to-end provisioning", Duration::from_secs(5), end_to_end_provisioning),
        (5, "reconfiguration", Duration::from_secs(5), reconfiguration),
        (6, "inverse and isolation", Duration::from_secs(60), inverse_and_isolation),
        (7, "join permutation invariance", Duration::from_secs(10), join_permutations),
        (8, "overhead linearity", Duration::from_secs(300), overhead_linearity),
        (9, "case studies", Duration::from_secs(120), case_studies),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?} ({detail})")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {n} {name}: PASS in {elapsed:.2?} (limit {limit:?}): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL in {elapsed:.2?} (limit {limit:?}): {reason}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
