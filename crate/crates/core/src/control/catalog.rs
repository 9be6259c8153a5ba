use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::network::ServiceNetwork;
use crate::value::Value;

/// Where a per-tenant parameter value comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamSource {
    /// `attr:Feature.attr`; the value is supplied at install time.
    Attr(String),
    Literal(Value),
}

impl fmt::Display for ParamSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamSource::Attr(path) => write!(f, "attr:{path}"),
            ParamSource::Literal(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for ParamSource {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ParamSource::Attr(path) => s.serialize_str(&format!("attr:{path}")),
            ParamSource::Literal(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ParamSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Sym(s) => match s.strip_prefix("attr:") {
                Some("") => Err(de::Error::custom("empty attribute reference")),
                Some(path) => Ok(ParamSource::Attr(path.to_string())),
                None => Ok(ParamSource::Literal(Value::Sym(s))),
            },
            v => Ok(ParamSource::Literal(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntryDef {
    pub rep: String,
    pub rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBinding {
    pub rep: String,
    pub rule: String,
    pub param: String,
    pub source: ParamSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollaborationDef {
    pub id: String,
    /// Features this collaboration helps realize.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub realizes: Vec<String>,
    pub entries: Vec<TableEntryDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<ParamBinding>,
}

impl CollaborationDef {
    /// Parameter names that must be supplied when installing.
    pub fn attr_params(&self) -> BTreeSet<&str> {
        self.params
            .iter()
            .filter(|b| matches!(b.source, ParamSource::Attr(_)))
            .map(|b| b.param.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterCollabUnitDef {
    pub id: String,
    pub requires: BTreeSet<String>,
    pub entries: Vec<TableEntryDef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub collaborations: Vec<CollaborationDef>,
    #[serde(default)]
    pub units: Vec<InterCollabUnitDef>,
}

impl Catalog {
    pub fn from_json(text: &str) -> Result<Self, ControlError> {
        serde_json::from_str(text).map_err(|e| ControlError::Catalog(e.to_string()))
    }

    pub fn collaboration(&self, id: &str) -> Option<&CollaborationDef> {
        self.collaborations.iter().find(|c| c.id == id)
    }

    pub fn unit(&self, id: &str) -> Option<&InterCollabUnitDef> {
        self.units.iter().find(|u| u.id == id)
    }

    /// Features named by some collaboration's `realizes` list.
    pub fn realized_features(&self) -> BTreeSet<&str> {
        self.collaborations
            .iter()
            .flat_map(|c| c.realizes.iter().map(String::as_str))
            .collect()
    }

    /// Checks that every id is unique, every entry resolves against `net`,
    /// and every per-tenant parameter of an installed rule has a binding.
    pub fn check(&self, net: &ServiceNetwork) -> Result<(), ControlError> {
        let bad = |msg: String| Err(ControlError::Catalog(msg));
        let mut ids = BTreeSet::new();
        for id in self
            .collaborations
            .iter()
            .map(|c| &c.id)
            .chain(self.units.iter().map(|u| &u.id))
        {
            if !ids.insert(id) {
                return bad(format!("duplicate catalog id `{id}`"));
            }
        }
        let check_entries = |owner: &str, entries: &[TableEntryDef]| -> Result<(), ControlError> {
            for e in entries {
                if net.rep_kind(&e.rep).is_none() {
                    return bad(format!("`{owner}` names unknown REP `{}`", e.rep));
                }
                if let Some(r) = e.rules.iter().find(|r| net.rule(&e.rep, r).is_none()) {
                    return bad(format!("`{owner}` names unknown rule `{}/{r}`", e.rep));
                }
            }
            Ok(())
        };
        for c in &self.collaborations {
            check_entries(&c.id, &c.entries)?;
            let mut bound = BTreeMap::new();
            for b in &c.params {
                let Some(rule) = net.rule(&b.rep, &b.rule) else {
                    return bad(format!("`{}` binds unknown rule `{}/{}`", c.id, b.rep, b.rule));
                };
                if !rule.is_per_tenant(&b.param) {
                    return bad(format!(
                        "`{}` binds `{}` of `{}/{}`, which is not per-tenant",
                        c.id, b.param, b.rep, b.rule
                    ));
                }
                if !c.entries.iter().any(|e| e.rep == b.rep && e.rules.contains(&b.rule)) {
                    return bad(format!("`{}` binds `{}/{}` without installing it", c.id, b.rep, b.rule));
                }
                bound.insert((b.rep.as_str(), b.rule.as_str(), b.param.as_str()), ());
            }
            for e in &c.entries {
                for r in &e.rules {
                    let rule = net.rule(&e.rep, r).expect("checked above");
                    if let Some(p) = rule
                        .per_tenant
                        .iter()
                        .find(|p| !bound.contains_key(&(e.rep.as_str(), r.as_str(), p.as_str())))
                    {
                        return bad(format!("`{}` leaves `{p}` of `{}/{r}` unbound", c.id, e.rep));
                    }
                }
            }
        }
        for u in &self.units {
            check_entries(&u.id, &u.entries)?;
            if let Some(r) = u.requires.iter().find(|r| self.collaboration(r).is_none()) {
                return bad(format!("unit `{}` requires unknown collaboration `{r}`", u.id));
            }
            for e in &u.entries {
                for r in &e.rules {
                    if !net.rule(&e.rep, r).expect("checked above").per_tenant.is_empty() {
                        return bad(format!("unit `{}` installs parameterized rule `{}/{r}`", u.id, e.rep));
                    }
                }
            }
        }
        Ok(())
    }
}
