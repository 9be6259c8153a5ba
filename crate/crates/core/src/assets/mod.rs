//! Case-study bundles: feature model, topology, collaboration catalog,
//! policy, service stubs, tenant configurations and golden scenarios, read
//! from `assets/<case>/`.

mod overhead;
mod scenario;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::control::Catalog;
use crate::feature_model::{FeatureConfiguration, FeatureModel};
use crate::management::{Assets, ManageError, Manager};
use crate::network::{Clock, ServiceNetwork, StubCatalog};
use crate::policy::{lint, parse_policy, Action, Policy};

pub use overhead::{linear_fit, run_overhead_bench, summarize, BenchRow, LinearFit, OverheadSummary, BENCH_CSV_HEADER};
pub use scenario::{
    run_scenario, Expectation, Scenario, ScenarioError, ScenarioReport, ScenarioStep, ServiceTarget, StepReport,
    UPDATE_GOLDEN_ENV,
};

/// Case studies shipped in the workspace `assets/` directory.
pub const CASE_STUDIES: [&str; 2] = ["rosas", "camping"];

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("unknown case study `{name}`; available: {}", .available.join(", "))]
    UnknownCase { name: String, available: Vec<String> },
    #[error("{}: {message}", .file.display())]
    File { file: PathBuf, message: String },
}

fn file_error(file: &Path, message: impl ToString) -> AssetError {
    AssetError::File {
        file: file.to_path_buf(),
        message: message.to_string(),
    }
}

/// Root of the bundled asset tree.
pub fn assets_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

/// A fully resolved case study.
#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub name: String,
    pub dir: PathBuf,
    pub model: FeatureModel,
    pub topology: String,
    pub stubs: StubCatalog,
    pub catalog: Catalog,
    pub policy: Policy,
    /// Tenant configurations keyed by tenant id.
    pub tenants: BTreeMap<String, FeatureConfiguration>,
    pub scenarios: Vec<Scenario>,
    /// Selects every functional feature the model allows at once.
    pub full_coverage: FeatureConfiguration,
}

pub fn load_case_study(name: &str) -> Result<CaseStudy, AssetError> {
    if !CASE_STUDIES.contains(&name) {
        return Err(AssetError::UnknownCase {
            name: name.to_string(),
            available: CASE_STUDIES.iter().map(|s| s.to_string()).collect(),
        });
    }
    CaseStudy::load(assets_root().join(name))
}

fn read(path: &Path) -> Result<String, AssetError> {
    fs::read_to_string(path).map_err(|e| file_error(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, AssetError> {
    serde_json::from_str(&read(path)?).map_err(|e| file_error(path, e))
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, AssetError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| file_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

impl CaseStudy {
    /// Loads and cross-checks every file of a case-study directory.
    pub fn load(dir: impl Into<PathBuf>) -> Result<Self, AssetError> {
        let dir: PathBuf = dir.into();
        let dir = dir.canonicalize().map_err(|e| file_error(&dir, e))?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();

        let path = dir.join("model.json");
        let model = FeatureModel::from_json(&read(&path)?).map_err(|e| file_error(&path, e))?;
        let stubs: StubCatalog = read_json(&dir.join("stubs.json"))?;
        let path = dir.join("topology.json");
        let topology = read(&path)?;
        let net = ServiceNetwork::from_json(&topology, &stubs, Arc::new(crate::network::SimClock::new(0)))
            .map_err(|e| file_error(&path, e))?;
        let path = dir.join("catalog.json");
        let catalog = Catalog::from_json(&read(&path)?).map_err(|e| file_error(&path, e))?;
        catalog.check(&net).map_err(|e| file_error(&path, e))?;
        let path = dir.join("policy.sdl");
        let policy = parse_policy(&read(&path)?, &model, &catalog).map_err(|e| file_error(&path, e))?;

        let mut tenants = BTreeMap::new();
        for path in json_files(&dir.join("tenants"))? {
            let cfg: FeatureConfiguration = read_json(&path)?;
            if cfg.tenant_id.is_empty() {
                return Err(file_error(&path, "configuration has no tenantId"));
            }
            tenants.insert(cfg.tenant_id.clone(), cfg);
        }
        let mut scenarios = Vec::new();
        for path in json_files(&dir.join("scenarios"))? {
            let s: Scenario = read_json(&path)?;
            s.check(&dir, &net).map_err(|e| file_error(&path, e))?;
            scenarios.push(s);
        }
        let full_coverage = read_json(&dir.join("full_coverage.json"))?;
        Ok(CaseStudy {
            name,
            dir,
            model,
            topology,
            stubs,
            catalog,
            policy,
            tenants,
            scenarios,
            full_coverage,
        })
    }

    /// A fresh data plane over this case study's topology.
    pub fn network(&self, clock: Arc<dyn Clock>) -> ServiceNetwork {
        ServiceNetwork::from_json(&self.topology, &self.stubs, clock).expect("checked at load")
    }

    pub fn assets(&self, clock: Arc<dyn Clock>) -> Assets {
        Assets {
            model: self.model.clone(),
            network: Arc::new(self.network(clock)),
            catalog: self.catalog.clone(),
            policy: self.policy.clone(),
        }
    }

    pub fn manager(&self, clock: Arc<dyn Clock>) -> Result<Manager, ManageError> {
        Manager::new(self.assets(clock))
    }

    /// Reads a configuration file named relative to the case directory.
    pub fn configuration(&self, relative: &str) -> Result<FeatureConfiguration, AssetError> {
        read_json(&self.dir.join(relative))
    }

    pub fn scenario(&self, name: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    /// Coverage problems: unrealized features, realizations naming unknown
    /// features, collaborations and units no policy rule installs, and
    /// policy lint warnings. Empty for a clean bundle.
    pub fn coverage_lint(&self) -> Vec<String> {
        let mut out = Vec::new();
        let realized = self.catalog.realized_features();
        let root = &self.model.root.name;
        for f in self.model.feature_names() {
            if f != root && !realized.contains(f) {
                out.push(format!("feature `{f}` is not realized by any collaboration"));
            }
        }
        for c in &self.catalog.collaborations {
            for f in &c.realizes {
                if !self.model.contains_feature(f) {
                    out.push(format!("collaboration `{}` realizes unknown feature `{f}`", c.id));
                }
            }
        }
        let installed: Vec<&str> = self
            .policy
            .rules
            .iter()
            .flat_map(|r| &r.actions)
            .filter_map(|a| match a {
                Action::AddCollaboration { id, .. } | Action::AddUnit(id) => Some(id.as_str()),
                _ => None,
            })
            .collect();
        let ids = self
            .catalog
            .collaborations
            .iter()
            .map(|c| &c.id)
            .chain(self.catalog.units.iter().map(|u| &u.id));
        for id in ids {
            if !installed.contains(&id.as_str()) {
                out.push(format!("`{id}` is never installed by the policy"));
            }
        }
        out.extend(lint(&self.policy).into_iter().map(|w| format!("rule `{}`: {}", w.rule, w.message)));
        out
    }
}
