use super::ast::{Action, Assignments, Atom, Expr, ParamExpr, Policy, PolicyRule};
use super::lexer::{is_keyword, tokenize, Tok, Token};
use super::PolicyError;
use crate::feature_model::CompareOp;
use crate::value::Value;

/// Parses policy text without resolving names against a model or catalog.
pub fn parse_syntax(src: &str) -> Result<Policy, PolicyError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let policy = p.policy()?;
    p.expect_tok(Tok::Eof)?;
    Ok(policy)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Token, message: String) -> PolicyError {
        PolicyError::Syntax {
            line: t.line,
            column: t.column,
            message,
        }
    }

    fn unexpected(&self, what: &str) -> PolicyError {
        let t = self.peek();
        self.error_at(t, format!("expected {what}, found {}", t.tok.describe()))
    }

    fn expect_tok(&mut self, tok: Tok) -> Result<(), PolicyError> {
        if self.peek().tok == tok {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), PolicyError> {
        if self.at_keyword(kw) {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn name(&mut self, what: &str) -> Result<String, PolicyError> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    /// `F` or `F.a`.
    fn path(&mut self, allow_attr: bool) -> Result<String, PolicyError> {
        let mut p = self.name("a feature name")?;
        if allow_attr && self.peek().tok == Tok::Dot {
            self.next();
            p.push('.');
            p.push_str(&self.name("an attribute name")?);
        }
        Ok(p)
    }

    fn attr_path(&mut self) -> Result<String, PolicyError> {
        let p = self.path(true)?;
        if !p.contains('.') {
            return Err(self.unexpected("`.` and an attribute name"));
        }
        Ok(p)
    }

    fn policy(&mut self) -> Result<Policy, PolicyError> {
        self.keyword("policy")?;
        let name = self.name("a policy name")?;
        self.expect_tok(Tok::LBrace)?;
        let mut rules = Vec::new();
        while !matches!(self.peek().tok, Tok::RBrace) {
            rules.push(self.rule()?);
        }
        self.expect_tok(Tok::RBrace)?;
        Ok(Policy { name, rules })
    }

    fn rule(&mut self) -> Result<PolicyRule, PolicyError> {
        let line = self.peek().line;
        if !self.at_keyword("rule") {
            return Err(self.unexpected("`rule` or `}`"));
        }
        self.next();
        let name = self.name("a rule name")?;
        self.expect_tok(Tok::LBrace)?;
        self.keyword("when")?;
        let condition = self.expr()?;
        self.keyword("then")?;
        let mut actions = vec![self.action()?];
        self.expect_tok(Tok::Semi)?;
        while !matches!(self.peek().tok, Tok::RBrace) {
            actions.push(self.action()?);
            self.expect_tok(Tok::Semi)?;
        }
        self.expect_tok(Tok::RBrace)?;
        Ok(PolicyRule {
            name,
            condition,
            actions,
            line,
        })
    }

    fn expr(&mut self) -> Result<Expr, PolicyError> {
        let mut lhs = self.term()?;
        while self.at_keyword("or") {
            self.next();
            lhs = Expr::Or(Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, PolicyError> {
        let mut lhs = self.factor()?;
        while self.at_keyword("and") {
            self.next();
            lhs = Expr::And(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, PolicyError> {
        if self.at_keyword("not") {
            self.next();
            return Ok(Expr::Not(Box::new(self.factor()?)));
        }
        if self.peek().tok == Tok::LParen {
            self.next();
            let e = self.expr()?;
            self.expect_tok(Tok::RParen)?;
            return Ok(e);
        }
        self.atom().map(Expr::Atom)
    }

    fn atom(&mut self) -> Result<Atom, PolicyError> {
        let head = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("a condition")),
        };
        let ctor: fn(String) -> Atom = match head.as_str() {
            "selected" => Atom::Selected,
            "notSelected" => Atom::NotSelected,
            "deselected" => Atom::Deselected,
            "updated" => Atom::Updated,
            "event" => Atom::Event,
            "attr" => {
                self.next();
                self.expect_tok(Tok::LParen)?;
                let path = self.attr_path()?;
                self.expect_tok(Tok::RParen)?;
                let op = match self.peek().tok {
                    Tok::Op(o) => o,
                    _ => return Err(self.unexpected("a comparison operator")),
                };
                self.next();
                let op = match op {
                    "=" => CompareOp::Eq,
                    "!=" => CompareOp::Ne,
                    "<" => CompareOp::Lt,
                    "<=" => CompareOp::Le,
                    ">" => CompareOp::Gt,
                    _ => CompareOp::Ge,
                };
                let value = self.literal()?;
                return Ok(Atom::AttrCmp { path, op, value });
            }
            _ => return Err(self.unexpected("a condition")),
        };
        self.next();
        self.expect_tok(Tok::LParen)?;
        let arg = match head.as_str() {
            "updated" => self.path(true)?,
            "event" => self.name("an event name")?,
            _ => self.path(false)?,
        };
        self.expect_tok(Tok::RParen)?;
        Ok(ctor(arg))
    }

    fn literal(&mut self) -> Result<Value, PolicyError> {
        let v = match &self.peek().tok {
            Tok::Int(i) => Value::Int(*i),
            Tok::Sym(s) => Value::Sym(s.clone()),
            Tok::Ident(s) if !is_keyword(s) => Value::Sym(s.clone()),
            _ => return Err(self.unexpected("a literal")),
        };
        self.next();
        Ok(v)
    }

    fn action(&mut self) -> Result<Action, PolicyError> {
        let verb = match &self.peek().tok {
            Tok::Ident(s) if matches!(s.as_str(), "add" | "remove" | "update" | "emit") => s.clone(),
            _ => return Err(self.unexpected("an action")),
        };
        self.next();
        if verb == "emit" {
            return Ok(Action::Emit(self.name("an event name")?));
        }
        let unit = match &self.peek().tok {
            Tok::Ident(s) if s == "collaboration" => false,
            Tok::Ident(s) if s == "unit" && verb != "update" => true,
            _ if verb == "update" => return Err(self.unexpected("`collaboration`")),
            _ => return Err(self.unexpected("`collaboration` or `unit`")),
        };
        self.next();
        let id = self.name(if unit { "a unit id" } else { "a collaboration id" })?;
        Ok(match (verb.as_str(), unit) {
            ("add", true) => Action::AddUnit(id),
            ("remove", true) => Action::RemoveUnit(id),
            ("remove", false) => Action::RemoveCollaboration(id),
            ("add", false) => {
                let params = if self.at_keyword("with") { self.assignments()? } else { Vec::new() };
                Action::AddCollaboration { id, params }
            }
            _ => Action::UpdateCollaboration {
                id,
                params: self.assignments()?,
            },
        })
    }

    fn assignments(&mut self) -> Result<Assignments, PolicyError> {
        self.keyword("with")?;
        self.expect_tok(Tok::LBrace)?;
        let mut out = Vec::new();
        loop {
            let at = self.peek().clone();
            let name = self.name("a parameter name")?;
            if out.iter().any(|(n, _): &(String, ParamExpr)| *n == name) {
                return Err(self.error_at(&at, format!("parameter `{name}` assigned twice")));
            }
            if self.peek().tok != Tok::Op("=") {
                return Err(self.unexpected("`=`"));
            }
            self.next();
            let src = if self.at_keyword("attr") && self.tokens.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::LParen) {
                self.next();
                self.next();
                let p = self.attr_path()?;
                self.expect_tok(Tok::RParen)?;
                ParamExpr::Attr(p)
            } else {
                ParamExpr::Literal(self.literal()?)
            };
            out.push((name, src));
            if self.peek().tok == Tok::Comma {
                self.next();
            } else {
                break;
            }
        }
        self.expect_tok(Tok::RBrace)?;
        Ok(out)
    }
}
