#![allow(dead_code)]

use std::sync::Arc;

use vsn_cli::{spawn, Client, RunningServer};
use vsn_core::assets::{load_case_study, CaseStudy};
use vsn_core::feature_model::FeatureConfiguration;
use vsn_core::network::SimClock;

pub fn start(case: &str) -> (CaseStudy, RunningServer, Client) {
    let case = load_case_study(case).unwrap();
    let manager = case.manager(Arc::new(SimClock::new(0))).unwrap();
    let server = spawn(Arc::new(manager), "127.0.0.1:0".parse().unwrap()).unwrap();
    let client = Client::new(&server.url()).unwrap();
    (case, server, client)
}

/// HappyTours with Tow removed, which breaks `Major include Tow`.
pub fn major_without_tow(case: &CaseStudy) -> FeatureConfiguration {
    let mut cfg = case.tenants["HappyTours"].clone();
    for f in ["Tow", "Heavy"] {
        cfg.selected.remove(f);
    }
    cfg.attribute_values.remove("Heavy.ResponseTime");
    cfg
}

pub fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["vsn"];
    argv.extend_from_slice(args);
    let code = vsn_cli::run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
