//! Text grammar for elements and for ledger expressions.
//!
//! Element grammar (used by the CLI, checkpoints, and fixtures):
//!
//! ```text
//! elt     := term ('+' term)*
//! term    := ('tau' ('^' int)?)? atom*
//! atom    := 'P(' int (',' int)* ')'          Milnor basis element
//!          | 'P()'                            the unit
//!          | 'Sq' int                         admissible-word letter
//! ```
//!
//! Expression grammar (ledger files and named-class polynomials):
//!
//! ```text
//! expr    := term ('+' term)*
//! term    := factor+
//! factor  := atom ('^' exp)?
//! atom    := 'tau' | name | '[' chars ']' | ident '(' int ')'
//! exp     := int | 'k' | '(' 'k' '+' int ')'
//! ```
//!
//! The `k` forms only appear in parametrized differential families and are
//! instantiated by the ledger machinery.

use std::fmt;

use thiserror::Error;

use crate::grading::TauCoeff;
use crate::milnor::{MilnorElt, SteenrodElt};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected character {0:?} at byte {1}")]
    Unexpected(char, usize),
    #[error("unexpected end of input")]
    Eof,
    #[error("bad integer at byte {0}")]
    BadInt(usize),
    #[error("empty expression")]
    Empty,
    #[error("inhomogeneous element: {0}")]
    Inhomogeneous(String),
    #[error("{0}")]
    Other(String),
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { s, pos: 0 }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.s[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn eat(&mut self, c: char) -> bool {
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
                Some(g) => Err(ParseError::Unexpected(g, self.pos)),
                None => Err(ParseError::Eof),
            }
        }
    }

    fn eat_str(&mut self, s: &str) -> bool {
        if self.s[self.pos..].starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if start == self.pos {
            return Err(ParseError::BadInt(start));
        }
        self.s[start..self.pos]
            .parse()
            .map_err(|_| ParseError::BadInt(start))
    }

    fn done(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.s.len()
    }
}

/// Parse "tau^k P(r1,...,rn) + ..." into a Steenrod element.  Sq-words are
/// not accepted here; they go through the Adem module.
pub fn parse_steenrod_elt(input: &str) -> Result<SteenrodElt, ParseError> {
    let mut cur = Cursor::new(input);
    let mut terms: Vec<(MilnorElt, TauCoeff)> = Vec::new();
    loop {
        cur.skip_ws();
        let tau = parse_tau_power(&mut cur)?;
        cur.skip_ws();
        if !cur.eat_str("P(") {
            return Err(match cur.peek() {
                Some(c) => ParseError::Unexpected(c, cur.pos),
                None => ParseError::Eof,
            });
        }
        let mut entries: Vec<u32> = Vec::new();
        cur.skip_ws();
        if !cur.eat(')') {
            loop {
                cur.skip_ws();
                entries.push(cur.int()? as u32);
                cur.skip_ws();
                if cur.eat(')') {
                    break;
                }
                cur.expect(',')?;
            }
        }
        terms.push((MilnorElt::from_slice(&entries), TauCoeff::Tau(tau)));
        cur.skip_ws();
        if !cur.eat('+') {
            break;
        }
    }
    if !cur.done() {
        return Err(ParseError::Unexpected(cur.peek().unwrap(), cur.pos));
    }
    if terms.is_empty() {
        return Err(ParseError::Empty);
    }
    // Only the topological degree is enforced here: classical-mode elements
    // are weight-blind.  Motivic consumers check full homogeneity themselves.
    let bid = {
        let (m, c) = &terms[0];
        let mut d = m.bidegree();
        if let TauCoeff::Tau(k) = c {
            d = d + crate::grading::Bidegree::new(0, *k as i32);
        }
        d
    };
    let mut out = SteenrodElt::zero(bid);
    for (m, c) in terms {
        if m.bidegree().p != bid.p {
            return Err(ParseError::Inhomogeneous(input.trim().to_string()));
        }
        out.add_term(m, c);
    }
    Ok(out)
}

fn parse_tau_power(cur: &mut Cursor) -> Result<u32, ParseError> {
    // "tau", "tau^k", or nothing; must not swallow identifiers like "taux"
    let save = cur.pos;
    if cur.eat_str("tau") {
        match cur.peek() {
            Some('^') => {
                cur.bump();
                Ok(cur.int()? as u32)
            }
            Some(c) if c.is_alphanumeric() => {
                cur.pos = save;
                Ok(0)
            }
            _ => Ok(1),
        }
    } else {
        Ok(0)
    }
}

/// An exponent in a ledger expression: a constant or k + constant for the
/// family parameter k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpVal {
    Const(i64),
    KPlus(i64),
}

impl ExpVal {
    pub fn eval(self, k: i64) -> i64 {
        match self {
            ExpVal::Const(c) => c,
            ExpVal::KPlus(c) => k + c,
        }
    }

    pub fn uses_k(self) -> bool {
        matches!(self, ExpVal::KPlus(_))
    }
}

/// One monomial of a ledger expression: a tau power and named factors with
/// exponents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExprTerm {
    pub tau: ExpVal,
    pub factors: Vec<(String, ExpVal)>,
}

/// A sum of monomials in named classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub terms: Vec<ExprTerm>,
}

impl Expr {
    pub fn uses_k(&self) -> bool {
        self.terms.iter().any(|t| {
            t.tau.uses_k() || t.factors.iter().any(|(_, e)| e.uses_k())
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            let mut first = true;
            if t.tau != ExpVal::Const(0) {
                match t.tau {
                    ExpVal::Const(1) => write!(f, "tau")?,
                    ExpVal::Const(c) => write!(f, "tau^{c}")?,
                    ExpVal::KPlus(0) => write!(f, "tau^k")?,
                    ExpVal::KPlus(c) => write!(f, "tau^(k+{c})")?,
                }
                first = false;
            }
            for (name, e) in &t.factors {
                if !first {
                    write!(f, " ")?;
                }
                first = false;
                write!(f, "{name}")?;
                match e {
                    ExpVal::Const(1) => {}
                    ExpVal::Const(c) => write!(f, "^{c}")?,
                    ExpVal::KPlus(0) => write!(f, "^k")?,
                    ExpVal::KPlus(c) => write!(f, "^(k+{c})")?,
                }
            }
            if first {
                write!(f, "1")?;
            }
        }
        Ok(())
    }
}

pub fn parse_expr(input: &str) -> Result<Expr, ParseError> {
    let mut cur = Cursor::new(input);
    let expr = parse_expr_at(&mut cur)?;
    if !cur.done() {
        return Err(ParseError::Unexpected(cur.peek().unwrap(), cur.pos));
    }
    Ok(expr)
}

fn parse_expr_at(cur: &mut Cursor) -> Result<Expr, ParseError> {
    let mut terms = Vec::new();
    loop {
        terms.push(parse_term(cur)?);
        cur.skip_ws();
        if !cur.eat('+') {
            break;
        }
    }
    Ok(Expr { terms })
}

fn parse_term(cur: &mut Cursor) -> Result<ExprTerm, ParseError> {
    let mut tau = ExpVal::Const(0);
    let mut factors: Vec<(String, ExpVal)> = Vec::new();
    let mut any = false;
    loop {
        cur.skip_ws();
        match cur.peek() {
            Some('1') if factors.is_empty() && !any => {
                cur.bump();
                any = true;
            }
            Some('[') => {
                cur.bump();
                let start = cur.pos;
                while let Some(c) = cur.peek() {
                    if c == ']' {
                        break;
                    }
                    cur.bump();
                }
                let name = format!("[{}]", &cur.s[start..cur.pos]);
                cur.expect(']')?;
                let e = parse_opt_exp(cur)?;
                factors.push((name, e));
                any = true;
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = cur.pos;
                if cur.eat_str("tau") && !matches!(cur.peek(), Some(c) if c.is_alphanumeric() || c == '(') {
                    let e = if cur.eat('^') {
                        parse_exp(cur)?
                    } else {
                        ExpVal::Const(1)
                    };
                    tau = match (tau, e) {
                        (ExpVal::Const(a), ExpVal::Const(b)) => ExpVal::Const(a + b),
                        (ExpVal::Const(a), ExpVal::KPlus(b)) => ExpVal::KPlus(a + b),
                        (ExpVal::KPlus(a), ExpVal::Const(b)) => ExpVal::KPlus(a + b),
                        _ => return Err(ParseError::Other("tau^2k unsupported".into())),
                    };
                    any = true;
                    continue;
                }
                cur.pos = start;
                while matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    cur.bump();
                }
                let mut name = cur.s[start..cur.pos].to_string();
                // allow names like h0(1)
                if cur.peek() == Some('(') {
                    let save = cur.pos;
                    cur.bump();
                    let mut ok = false;
                    while let Some(c) = cur.peek() {
                        if c.is_ascii_digit() {
                            cur.bump();
                        } else if c == ')' {
                            cur.bump();
                            ok = true;
                            break;
                        } else {
                            break;
                        }
                    }
                    if ok {
                        name = cur.s[start..cur.pos].to_string();
                    } else {
                        cur.pos = save;
                    }
                }
                let e = parse_opt_exp(cur)?;
                factors.push((name, e));
                any = true;
            }
            _ => break,
        }
    }
    if !any {
        return Err(ParseError::Empty);
    }
    Ok(ExprTerm { tau, factors })
}

fn parse_opt_exp(cur: &mut Cursor) -> Result<ExpVal, ParseError> {
    if cur.eat('^') {
        parse_exp(cur)
    } else {
        Ok(ExpVal::Const(1))
    }
}

fn parse_exp(cur: &mut Cursor) -> Result<ExpVal, ParseError> {
    cur.skip_ws();
    match cur.peek() {
        Some('k') => {
            cur.bump();
            Ok(ExpVal::KPlus(0))
        }
        Some('(') => {
            cur.bump();
            cur.skip_ws();
            cur.expect('k')?;
            cur.skip_ws();
            cur.expect('+')?;
            cur.skip_ws();
            let c = cur.int()?;
            cur.skip_ws();
            cur.expect(')')?;
            Ok(ExpVal::KPlus(c))
        }
        Some(c) if c.is_ascii_digit() => Ok(ExpVal::Const(cur.int()?)),
        Some(c) => Err(ParseError::Unexpected(c, cur.pos)),
        None => Err(ParseError::Eof),
    }
}

/// A differential ledger entry, possibly a family in the parameter k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerLine {
    pub page: u32,
    /// Family lower bound when the entry is parametrized.
    pub k_from: Option<i64>,
    pub source: Expr,
    pub target: Expr,
}

/// Parse a ledger file: one entry per line, of the form
/// `d<r>: src -> dst` or `d<r>[k>=n]: src -> dst`.
/// `#` starts a comment; blank lines are skipped.
pub fn parse_ledger(input: &str) -> Result<Vec<LedgerLine>, ParseError> {
    let mut out = Vec::new();
    for raw in input.lines() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cur = Cursor::new(line);
        cur.expect('d')?;
        let page = cur.int()? as u32;
        let k_from = if cur.eat('[') {
            cur.skip_ws();
            cur.expect('k')?;
            cur.skip_ws();
            cur.expect('>')?;
            cur.expect('=')?;
            cur.skip_ws();
            let n = cur.int()?;
            cur.skip_ws();
            cur.expect(']')?;
            Some(n)
        } else {
            None
        };
        cur.skip_ws();
        cur.expect(':')?;
        let arrow = line[cur.pos..]
            .find("->")
            .ok_or_else(|| ParseError::Other(format!("missing -> in {line:?}")))?;
        let src = &line[cur.pos..cur.pos + arrow];
        let dst = &line[cur.pos + arrow + 2..];
        out.push(LedgerLine {
            page,
            k_from,
            source: parse_expr(src)?,
            target: parse_expr(dst)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steenrod_roundtrip() {
        for s in ["P(1,1)", "tau P(1,1)", "tau^2 P(3) + tau^2 P(0,1)", "P()"] {
            let e = parse_steenrod_elt(s).unwrap();
            let shown = e.to_string();
            let back = parse_steenrod_elt(&shown).unwrap();
            assert_eq!(e, back);
        }
    }

    #[test]
    fn steenrod_rejects_inhomogeneous() {
        assert!(matches!(
            parse_steenrod_elt("P(1) + P(2)"),
            Err(ParseError::Inhomogeneous(_))
        ));
    }

    #[test]
    fn expr_parsing() {
        let e = parse_expr("tau h1^3 + h0^2 h2").unwrap();
        assert_eq!(e.terms.len(), 2);
        assert_eq!(e.terms[0].tau, ExpVal::Const(1));
        assert_eq!(e.terms[0].factors, vec![("h1".into(), ExpVal::Const(3))]);
        assert_eq!(
            e.terms[1].factors,
            vec![
                ("h0".into(), ExpVal::Const(2)),
                ("h2".into(), ExpVal::Const(1))
            ]
        );
    }

    #[test]
    fn expr_named_parens_and_brackets() {
        let e = parse_expr("h0(1) b20^2 [tau g]").unwrap();
        assert_eq!(
            e.terms[0].factors,
            vec![
                ("h0(1)".into(), ExpVal::Const(1)),
                ("b20".into(), ExpVal::Const(2)),
                ("[tau g]".into(), ExpVal::Const(1))
            ]
        );
    }

    #[test]
    fn expr_family_exponents() {
        let e = parse_expr("h1^(k+2) d0").unwrap();
        assert_eq!(e.terms[0].factors[0].1, ExpVal::KPlus(2));
        assert!(e.uses_k());
    }

    #[test]
    fn ledger_lines() {
        let text = "
# differentials
d2: h4 -> h0 h3^2
d2[k>=1]: h1^k e0 -> h1^(k+2) d0
d4: tau^2 x + h0^7 h5 -> P2d0
";
        let lines = parse_ledger(text).unwrap();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].page, 2);
        assert_eq!(lines[1].k_from, Some(1));
        assert_eq!(lines[2].source.terms.len(), 2);
        assert_eq!(lines[2].source.terms[0].tau, ExpVal::Const(2));
    }

    #[test]
    fn expr_display_roundtrip() {
        for s in ["tau h1^3 + h0^2 h2", "h1^(k+2) d0", "h0(1)^2", "[h3 g]"] {
            let e = parse_expr(s).unwrap();
            let back = parse_expr(&e.to_string()).unwrap();
            assert_eq!(e, back);
        }
    }
}
