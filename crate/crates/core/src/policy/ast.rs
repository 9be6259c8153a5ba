use std::fmt;

use serde::{Deserialize, Serialize};

use crate::feature_model::CompareOp;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Atom {
    Selected(String),
    NotSelected(String),
    Deselected(String),
    /// Feature name or `Feature.attr` path.
    Updated(String),
    Event(String),
    AttrCmp { path: String, op: CompareOp, value: Value },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Atom(Atom),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Expr::Atom(a) => out.push(a),
            Expr::Not(e) => e.collect(out),
            Expr::And(a, b) | Expr::Or(a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }

    /// Atoms that occur under an odd number of negations.
    pub fn negated_atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_negated(false, &mut out);
        out
    }

    fn collect_negated<'a>(&'a self, negated: bool, out: &mut Vec<&'a Atom>) {
        match self {
            Expr::Atom(a) if negated => out.push(a),
            Expr::Atom(_) => {}
            Expr::Not(e) => e.collect_negated(!negated, out),
            Expr::And(a, b) | Expr::Or(a, b) => {
                a.collect_negated(negated, out);
                b.collect_negated(negated, out);
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Selected(x) => write!(f, "selected({x})"),
            Atom::NotSelected(x) => write!(f, "notSelected({x})"),
            Atom::Deselected(x) => write!(f, "deselected({x})"),
            Atom::Updated(x) => write!(f, "updated({x})"),
            Atom::Event(x) => write!(f, "event({x})"),
            Atom::AttrCmp { path, op, value } => write!(f, "attr({path}) {op} {}", literal(value)),
        }
    }
}

fn literal(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Sym(s) if is_bare_symbol(s) => s.clone(),
        Value::Sym(s) => format!("{s:?}"),
    }
}

fn is_bare_symbol(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s.parse::<i64>().is_err()
        && !super::lexer::is_keyword(s)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Atom(a) => write!(f, "{a}"),
            Expr::Not(e) => match **e {
                Expr::Atom(_) | Expr::Not(_) => write!(f, "not {e}"),
                _ => write!(f, "not ({e})"),
            },
            Expr::And(a, b) => {
                let (l, r) = (&**a, &**b);
                match (matches!(l, Expr::Or(..)), matches!(r, Expr::Or(..) | Expr::And(..))) {
                    (false, false) => write!(f, "{l} and {r}"),
                    (true, false) => write!(f, "({l}) and {r}"),
                    (false, true) => write!(f, "{l} and ({r})"),
                    (true, true) => write!(f, "({l}) and ({r})"),
                }
            }
            Expr::Or(a, b) => {
                if matches!(**b, Expr::Or(..)) {
                    write!(f, "{a} or ({b})")
                } else {
                    write!(f, "{a} or {b}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamExpr {
    Attr(String),
    Literal(Value),
}

impl fmt::Display for ParamExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamExpr::Attr(p) => write!(f, "attr({p})"),
            ParamExpr::Literal(v) => f.write_str(&literal(v)),
        }
    }
}

pub type Assignments = Vec<(String, ParamExpr)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    AddCollaboration { id: String, params: Assignments },
    RemoveCollaboration(String),
    UpdateCollaboration { id: String, params: Assignments },
    AddUnit(String),
    RemoveUnit(String),
    Emit(String),
}

fn write_params(f: &mut fmt::Formatter<'_>, params: &Assignments) -> fmt::Result {
    if params.is_empty() {
        return Ok(());
    }
    f.write_str(" with { ")?;
    for (i, (name, src)) in params.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{name} = {src}")?;
    }
    f.write_str(" }")
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::AddCollaboration { id, params } => {
                write!(f, "add collaboration {id}")?;
                write_params(f, params)
            }
            Action::RemoveCollaboration(id) => write!(f, "remove collaboration {id}"),
            Action::UpdateCollaboration { id, params } => {
                write!(f, "update collaboration {id}")?;
                write_params(f, params)
            }
            Action::AddUnit(id) => write!(f, "add unit {id}"),
            Action::RemoveUnit(id) => write!(f, "remove unit {id}"),
            Action::Emit(name) => write!(f, "emit {name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub name: String,
    pub condition: Expr,
    pub actions: Vec<Action>,
    /// Source line of the `rule` keyword.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub name: String,
    pub rules: Vec<PolicyRule>,
}

impl Policy {
    pub fn rule(&self, name: &str) -> Option<&PolicyRule> {
        self.rules.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "policy {} {{", self.name)?;
        for r in &self.rules {
            writeln!(f, "  rule {} {{", r.name)?;
            writeln!(f, "    when {}", r.condition)?;
            let actions: Vec<String> = r.actions.iter().map(ToString::to_string).collect();
            writeln!(f, "    then {};", actions.join("; "))?;
            writeln!(f, "  }}")?;
        }
        writeln!(f, "}}")
    }
}
