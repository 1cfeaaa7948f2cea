//! Text formats: fact files, rule files and JSON snapshots.
//!
//! Lexical rules for terms:
//! - `_Name` is a null,
//! - `?Name` is a variable (rule files only),
//! - a bare identifier `[A-Za-z0-9][A-Za-z0-9_]*` or a single-quoted string
//!   is a constant. Quoted strings escape `'` and `\` with a backslash.
//!
//! `%` starts a comment running to the end of the line.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Atom, Constraint, Term};
use crate::store::{Instance, StoreError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("malformed snapshot: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad term {text:?} in snapshot: {message}")]
    Term { text: String, message: String },
    #[error("variable {0} in snapshot fact")]
    Variable(String),
    #[error("degree given for null {0} which occurs in no fact")]
    UnknownNull(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphanumeric()
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Surface form of a constant: bare when it is an identifier, quoted otherwise.
pub fn encode_constant(s: &str) -> Cow<'_, str> {
    let mut chars = s.chars();
    let bare = chars.next().is_some_and(is_ident_start) && chars.all(is_ident_char);
    if bare {
        return Cow::Borrowed(s);
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
    Cow::Owned(out)
}

/// Surface form of a ground term or variable.
pub fn encode_term(t: &Term) -> String {
    t.to_string()
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

impl Lexer {
    fn new(src: &str) -> Lexer {
        Lexer {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line: self.line,
            col: self.col,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.pos + 1).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c == '%' {
                while self.peek().is_some_and(|c| c != '\n') {
                    self.bump();
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.peek().is_none()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(found) => self.error(format!("expected '{c}', found '{found}'")),
                None => self.error(format!("expected '{c}', found end of input")),
            }
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let mut s = String::new();
        match self.peek() {
            Some(c) if is_ident_start(c) => {}
            Some(c) => return self.error(format!("expected identifier, found '{c}'")),
            None => return self.error("expected identifier, found end of input"),
        }
        while let Some(c) = self.peek().filter(|&c| is_ident_char(c)) {
            s.push(c);
            self.bump();
        }
        Ok(s)
    }

    fn quoted(&mut self) -> Result<String, ParseError> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return self.error("unterminated quoted constant"),
                Some('\'') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some(c) => s.push(c),
                    None => return self.error("unterminated quoted constant"),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some('_') | Some('?') => {
                let sigil = self.bump().unwrap();
                let mut s = String::new();
                while let Some(c) = self.peek().filter(|&c| is_ident_char(c)) {
                    s.push(c);
                    self.bump();
                }
                if s.is_empty() {
                    return self.error(format!("empty name after '{sigil}'"));
                }
                Ok(if sigil == '_' {
                    Term::null(&s)
                } else {
                    Term::var(&s)
                })
            }
            Some('\'') => Ok(Term::constant(&self.quoted()?)),
            _ => Ok(Term::constant(&self.ident()?)),
        }
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let pred = self.ident()?;
        self.expect('(')?;
        let mut terms = Vec::new();
        if !self.eat(')') {
            loop {
                terms.push(self.term()?);
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }
        Ok(Atom::new(&pred, terms))
    }
}

/// Tracks predicate arities across a file.
#[derive(Default)]
struct Arities(HashMap<String, usize>);

impl Arities {
    fn check(&mut self, line: usize, col: usize, a: &Atom) -> Result<(), ParseError> {
        match self.0.get(&*a.pred) {
            Some(&n) if n != a.arity() => Err(ParseError {
                line,
                col,
                message: format!(
                    "predicate {} used with arity {}, earlier with arity {}",
                    a.pred,
                    a.arity(),
                    n
                ),
            }),
            _ => {
                self.0.insert(a.pred.to_string(), a.arity());
                Ok(())
            }
        }
    }
}

fn fact_list(text: &str, separators: &[char]) -> Result<Vec<Atom>, ParseError> {
    let mut lx = Lexer::new(text);
    let mut arities = Arities::default();
    let mut out = Vec::new();
    while !lx.at_end() {
        let (line, col) = (lx.line, lx.col);
        let a = lx.atom()?;
        if let Some(v) = a.terms.iter().find(|t| t.is_var()) {
            return Err(ParseError {
                line,
                col,
                message: format!("variable {v} is not allowed in a fact"),
            });
        }
        arities.check(line, col, &a)?;
        out.push(a);
        lx.skip_ws();
        match lx.peek() {
            Some(c) if separators.contains(&c) => {
                lx.bump();
            }
            None if separators.len() > 1 => {}
            Some(c) => return lx.error(format!("expected '.', found '{c}'")),
            None => return lx.error("expected '.', found end of input"),
        }
    }
    Ok(out)
}

/// Parses a fact file: `Pred(t1, ..., tn).` per fact.
pub fn parse_facts(text: &str) -> Result<Vec<Atom>, ParseError> {
    fact_list(text, &['.'])
}

/// Parses an inline update request: facts separated by `.` or `,`, the
/// final terminator optional.
pub fn parse_atoms(text: &str) -> Result<Vec<Atom>, ParseError> {
    fact_list(text, &['.', ','])
}

/// Parses a rule file: `B1, ..., Bm -> H.` per rule, with at most one body
/// atom prefixed by `-` (default: the leftmost).
pub fn parse_constraints(text: &str) -> Result<Vec<Constraint>, ParseError> {
    let mut lx = Lexer::new(text);
    let mut arities = Arities::default();
    let mut out = Vec::new();
    while !lx.at_end() {
        let (rule_line, rule_col) = (lx.line, lx.col);
        let mut body = Vec::new();
        let mut marked = None;
        loop {
            lx.skip_ws();
            let (line, col) = (lx.line, lx.col);
            if lx.peek() == Some('-') && lx.peek2() != Some('>') {
                lx.bump();
                if marked.is_some() {
                    return Err(ParseError {
                        line,
                        col,
                        message: "more than one marked body atom".into(),
                    });
                }
                marked = Some(body.len());
            }
            let (line, col) = (lx.line, lx.col);
            let a = lx.atom()?;
            arities.check(line, col, &a)?;
            body.push(a);
            lx.skip_ws();
            if lx.peek() == Some('-') && lx.peek2() == Some('>') {
                lx.bump();
                lx.bump();
                break;
            }
            lx.expect(',')?;
        }
        lx.skip_ws();
        let (line, col) = (lx.line, lx.col);
        let head = lx.atom()?;
        arities.check(line, col, &head)?;
        if lx.eat(',') {
            return lx.error("rule head must be a single atom");
        }
        lx.expect('.')?;
        match Constraint::new(body, head, marked.unwrap_or(0)) {
            Ok(c) => out.push(c),
            Err(e) => {
                return Err(ParseError {
                    line: rule_line,
                    col: rule_col,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Parses a single term written with the lexical rules above.
pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut lx = Lexer::new(text);
    let t = lx.term()?;
    if !lx.at_end() {
        return lx.error("trailing input after term");
    }
    Ok(t)
}

/// One fact per line, LF-terminated.
pub fn write_facts<'a>(facts: impl IntoIterator<Item = &'a Atom>) -> String {
    let mut out = String::new();
    for a in facts {
        out.push_str(&a.to_string());
        out.push_str(".\n");
    }
    out
}

pub fn write_constraints(constraints: &[Constraint]) -> String {
    let mut out = String::new();
    for c in constraints {
        out.push_str(&c.to_string());
        out.push_str(".\n");
    }
    out
}

#[derive(Serialize, Deserialize)]
struct SnapshotDoc {
    facts: Vec<SnapshotFact>,
    #[serde(default)]
    degrees: BTreeMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFact {
    pred: String,
    terms: Vec<String>,
}

/// Canonical compact JSON snapshot of an instance.
pub fn serialize_snapshot(inst: &Instance) -> String {
    let doc = SnapshotDoc {
        facts: inst
            .facts()
            .map(|a| SnapshotFact {
                pred: a.pred.to_string(),
                terms: a.terms.iter().map(encode_term).collect(),
            })
            .collect(),
        degrees: inst
            .degrees()
            .iter()
            .map(|(n, d)| (encode_term(n), *d))
            .collect(),
    };
    serde_json::to_string(&doc).expect("snapshot serialization cannot fail")
}

/// Parses a snapshot. Nulls without a degree entry get degree 0.
pub fn parse_snapshot(text: &str) -> Result<Instance, SnapshotError> {
    let doc: SnapshotDoc = serde_json::from_str(text)?;
    let mut inst = Instance::new();
    for f in doc.facts {
        let mut terms = Vec::with_capacity(f.terms.len());
        for s in &f.terms {
            let t = parse_term(s).map_err(|e| SnapshotError::Term {
                text: s.clone(),
                message: e.message,
            })?;
            if t.is_var() {
                return Err(SnapshotError::Variable(s.clone()));
            }
            terms.push(t);
        }
        inst.add_fact(Atom::new(&f.pred, terms))?;
    }
    for (s, d) in doc.degrees {
        let t = parse_term(&s).map_err(|e| SnapshotError::Term {
            text: s.clone(),
            message: e.message,
        })?;
        if !t.is_null() || !inst.has_null(&t) {
            return Err(SnapshotError::UnknownNull(s));
        }
        inst.set_degree(&t, d);
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn facts_with_nulls_and_constants() {
        let f = parse_facts("Authors(Nils, _N1).\nPhDPaper(Sten, P269, 2022).").unwrap();
        assert_eq!(
            f[0],
            Atom::new("Authors", vec![Term::constant("Nils"), Term::null("N1")])
        );
        assert!(f[1].terms.iter().all(Term::is_const));
    }

    #[test]
    fn quoted_constants_round_trip() {
        let f = parse_facts("Student('Alice B.').").unwrap();
        assert_eq!(f[0].terms[0], Term::constant("Alice B."));
        assert_eq!(f[0].to_string(), "Student('Alice B.')");
        let odd = Term::constant("it's \\ here");
        assert_eq!(parse_term(&odd.to_string()).unwrap(), odd);
        assert_eq!(encode_constant(""), "''");
        assert_eq!(encode_constant("_x"), "'_x'");
    }

    #[test]
    fn comments_blank_lines_and_crlf() {
        let f = parse_facts("% header\r\n\r\nP(a). % trailing\r\nQ(b).\r\n").unwrap();
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn variables_rejected_in_facts() {
        let e = parse_facts("P(a).\nQ(?X).").unwrap_err();
        assert_eq!((e.line, e.col), (2, 1));
    }

    #[test]
    fn arity_conflict_is_positioned() {
        let e = parse_facts("P(a).\n  P(a, b).").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
        assert!(e.message.contains("arity"));
    }

    #[test]
    fn syntax_errors_have_positions() {
        let e = parse_facts("P(a b).").unwrap_err();
        assert_eq!((e.line, e.col), (1, 5));
        assert!(parse_facts("P(a)").is_err());
        assert!(parse_facts("P('a).").is_err());
    }

    #[test]
    fn rules_and_marking() {
        let cs = parse_constraints(
            "Supervises(?X,?Y) -> Researcher(?X).
             -Authors(?X,?P), Authors(?Y,?P), Supervises(?X,?Y) -> PhDPaper(?Y,?P,?Z).
             Researcher(?X) -> Authors(?X,?Y).
             A(?X), -B(?X) -> C(?X).",
        )
        .unwrap();
        assert_eq!(cs.len(), 4);
        assert_eq!(cs[0].marked, 0);
        assert_eq!(cs[1].marked, 0);
        assert_eq!(
            cs[1].existential_vars().into_iter().collect::<Vec<_>>(),
            vec![Term::var("Z")]
        );
        assert_eq!(
            cs[2].existential_vars().into_iter().collect::<Vec<_>>(),
            vec![Term::var("Y")]
        );
        assert_eq!(cs[3].marked, 1);
        let again = parse_constraints(&write_constraints(&cs)).unwrap();
        assert_eq!(again, cs);
    }

    #[test]
    fn rule_errors() {
        assert!(parse_constraints("-A(?X), -B(?X) -> C(?X).").is_err());
        assert!(parse_constraints("A(_N1) -> C(a).").is_err());
        assert!(parse_constraints("A(?X) -> C(?X), D(?X).").is_err());
        assert!(parse_constraints("A(?X) -> C(?X)").is_err());
    }

    #[test]
    fn inline_atoms() {
        let a = parse_atoms("Publication(P235), Publication(P269)").unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(parse_atoms("P(a). Q(b).").unwrap().len(), 2);
    }

    #[test]
    fn empty_snapshot() {
        assert_eq!(serialize_snapshot(&Instance::new()), r#"{"facts":[],"degrees":{}}"#);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut i = Instance::from_facts(
            parse_facts("Enrolled(Bob, _N4). Degree(_N4, _N5). Language(_N4, _N5, _N6). Student('A b').")
                .unwrap(),
        )
        .unwrap();
        i.set_degree(&Term::null("N5"), 1);
        i.set_degree(&Term::null("N6"), 2);
        let s = serialize_snapshot(&i);
        let back = parse_snapshot(&s).unwrap();
        assert_eq!(back, i);
        assert_eq!(serialize_snapshot(&back), s);
    }

    #[test]
    fn snapshot_degree_for_unknown_null() {
        let e = parse_snapshot(r#"{"facts":[],"degrees":{"_N1":1}}"#).unwrap_err();
        assert!(matches!(e, SnapshotError::UnknownNull(_)));
        assert!(parse_snapshot("{").is_err());
    }

    #[test]
    fn snapshot_missing_degree_defaults_to_zero() {
        let i = parse_snapshot(r#"{"facts":[{"pred":"P","terms":["_N3"]}]}"#).unwrap();
        assert_eq!(i.degree(&Term::null("N3")), Some(0));
    }
}
