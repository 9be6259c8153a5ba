use super::PolicyError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    /// Quoted string, or a bare word starting with a digit such as `2d`.
    Sym(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Dot,
    Op(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Op(o) => format!("`{o}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "policy", "rule", "when", "then", "and", "or", "not", "add", "remove", "update", "collaboration", "unit",
    "emit", "with",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, PolicyError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, column, message: String| PolicyError::Syntax { line, column, message };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut bump = |n: usize, i: &mut usize| {
            *i += n;
            col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {
                bump(1, &mut i);
                continue;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '{' | '}' | '(' | ')' | ';' | ',' | '.' => {
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    _ => Tok::Dot,
                };
                bump(1, &mut i);
                out.push(Token { tok, line: tl, column: tc });
            }
            '=' | '<' | '>' | '!' => {
                let two = chars.get(i + 1) == Some(&'=');
                let op = match (c, two) {
                    ('=', _) => "=",
                    ('!', true) => "!=",
                    ('<', true) => "<=",
                    ('<', false) => "<",
                    ('>', true) => ">=",
                    ('>', false) => ">",
                    _ => return Err(err(tl, tc, "expected `!=`".into())),
                };
                bump(op.len(), &mut i);
                out.push(Token { tok: Tok::Op(op), line: tl, column: tc });
            }
            '"' => {
                let mut s = String::new();
                bump(1, &mut i);
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(err(tl, tc, "unterminated string".into())),
                        Some('"') => {
                            bump(1, &mut i);
                            break;
                        }
                        Some('\\') if matches!(chars.get(i + 1), Some('"') | Some('\\')) => {
                            s.push(chars[i + 1]);
                            bump(2, &mut i);
                        }
                        Some(&ch) => {
                            s.push(ch);
                            bump(1, &mut i);
                        }
                    }
                }
                out.push(Token { tok: Tok::Sym(s), line: tl, column: tc });
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) => {
                let start = i;
                bump(1, &mut i);
                while chars.get(i).is_some_and(|ch| ch.is_ascii_alphanumeric() || *ch == '_') {
                    bump(1, &mut i);
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match word.parse::<i64>() {
                    Ok(n) => Tok::Int(n),
                    Err(_) if word.chars().skip(1).all(|ch| ch.is_ascii_digit()) => {
                        return Err(err(tl, tc, format!("integer `{word}` out of range")))
                    }
                    Err(_) if c == '-' => return Err(err(tl, tc, format!("malformed literal `{word}`"))),
                    Err(_) => Tok::Sym(word),
                };
                out.push(Token { tok, line: tl, column: tc });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while chars.get(i).is_some_and(|ch| ch.is_ascii_alphanumeric() || *ch == '_') {
                    bump(1, &mut i);
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line: tl,
                    column: tc,
                });
            }
            other => return Err(err(tl, tc, format!("unexpected character `{other}`"))),
        }
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_atoms_and_literals() {
        assert_eq!(
            toks("attr(Major.ResponseTime) != 2d // trailing\n<= -3 \"a b\""),
            vec![
                Tok::Ident("attr".into()),
                Tok::LParen,
                Tok::Ident("Major".into()),
                Tok::Dot,
                Tok::Ident("ResponseTime".into()),
                Tok::RParen,
                Tok::Op("!="),
                Tok::Sym("2d".into()),
                Tok::Op("<="),
                Tok::Int(-3),
                Tok::Sym("a b".into()),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn reports_location() {
        let e = tokenize("policy P {\n  rule r # \n}").unwrap_err();
        assert_eq!(e, PolicyError::Syntax { line: 2, column: 10, message: "unexpected character `#`".into() });
        assert!(matches!(tokenize("\"open"), Err(PolicyError::Syntax { line: 1, column: 1, .. })));
    }
}
