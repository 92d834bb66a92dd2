//! Concrete syntax for formulas.
//!
//! ```text
//! until   := or ( 'U' interval? until )?
//! or      := and ( '|' and )*
//! and     := unary ( '&' unary )*
//! unary   := '!' unary | ('G' | 'F') interval? unary | primary
//! primary := 'true' | 'false' | '(' until ')' | ident ( '(' args ')' )? ( cmp number )?
//! interval:= '[' number ',' ( number | 'inf' ) ']'
//! ```

use serde::Serialize;
use thiserror::Error;

use super::ast::{Arg, Atom, CmpOp, Comparison, Formula};
use crate::trace::TimeInterval;

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    SyntaxError { pos: usize, message: String },
    #[error("malformed interval at {pos}: [{lo}, {hi}]")]
    MalformedInterval { pos: usize, lo: f64, hi: f64 },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::SyntaxError { pos, .. } | ParseError::MalformedInterval { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Not,
    And,
    Or,
    Cmp(CmpOp),
    Globally,
    Finally,
    Until,
    True,
    False,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(x) => format!("number {x}"),
            Tok::Eof => "end of input".to_string(),
            other => format!("{other:?}"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    let err = |pos: usize, message: String| ParseError::SyntaxError { pos, message };
    while i < chars.len() {
        let (pos, c) = chars[i];
        let peek = chars.get(i + 1).map(|&(_, c)| c);
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '!' | '¬' | '~' => Some(Tok::Not),
            '∧' => Some(Tok::And),
            '∨' => Some(Tok::Or),
            '⊤' => Some(Tok::True),
            '⊥' => Some(Tok::False),
            '∞' => Some(Tok::Num(f64::INFINITY)),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((pos, tok));
            i += 1;
            continue;
        }
        match c {
            c if c.is_whitespace() => i += 1,
            '&' | '|' => {
                let tok = if c == '&' { Tok::And } else { Tok::Or };
                out.push((pos, tok));
                i += if peek == Some(c) { 2 } else { 1 };
            }
            '>' | '<' => {
                let eq = peek == Some('=');
                let op = match (c, eq) {
                    ('>', false) => CmpOp::Gt,
                    ('>', true) => CmpOp::Ge,
                    ('<', false) => CmpOp::Lt,
                    _ => CmpOp::Le,
                };
                out.push((pos, Tok::Cmp(op)));
                i += if eq { 2 } else { 1 };
            }
            c if c.is_ascii_digit() || c == '.' || (c == '-' && peek.is_some_and(|p| p.is_ascii_digit() || p == '.')) => {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let ch = chars[i].1;
                    let prev = chars[i - 1].1;
                    if ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E' || ((ch == '-' || ch == '+') && (prev == 'e' || prev == 'E')) {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let end = chars.get(i).map_or(text.len(), |&(p, _)| p);
                let lit = &text[pos..end];
                let x: f64 = lit
                    .parse()
                    .map_err(|_| err(chars[start].0, format!("invalid number `{lit}`")))?;
                out.push((pos, Tok::Num(x)));
            }
            c if c.is_alphabetic() || c == '_' => {
                i += 1;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let end = chars.get(i).map_or(text.len(), |&(p, _)| p);
                let word = &text[pos..end];
                let tok = match word {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "G" => Tok::Globally,
                    "F" => Tok::Finally,
                    "U" => Tok::Until,
                    "inf" => Tok::Num(f64::INFINITY),
                    _ => Tok::Ident(word.to_string()),
                };
                out.push((pos, tok));
            }
            other => return Err(err(pos, format!("unexpected character `{other}`"))),
        }
    }
    out.push((text.len(), Tok::Eof));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::SyntaxError {
            pos: self.pos(),
            message: format!("expected {expected}, found {}", self.peek().describe()),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(what)
        }
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Until {
            self.bump();
            let interval = self.opt_interval()?;
            let rhs = self.until()?;
            return Ok(Formula::until(interval, lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            lhs = Formula::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Globally => {
                self.bump();
                let iv = self.opt_interval()?;
                Ok(Formula::globally(iv, self.unary()?))
            }
            Tok::Finally => {
                self.bump();
                let iv = self.opt_interval()?;
                Ok(Formula::finally(iv, self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn opt_interval(&mut self) -> Result<TimeInterval, ParseError> {
        if *self.peek() != Tok::LBracket {
            return Ok(TimeInterval::unbounded());
        }
        let pos = self.pos();
        self.bump();
        let lo = self.number("interval lower bound")?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.number("interval upper bound")?;
        self.expect(Tok::RBracket, "`]`")?;
        TimeInterval::new(lo, hi).map_err(|_| ParseError::MalformedInterval { pos, lo, hi })
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        match self.peek() {
            Tok::Num(x) => {
                let x = *x;
                self.bump();
                Ok(x)
            }
            _ => self.error(what),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::True => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::False => {
                self.bump();
                Ok(Formula::False)
            }
            Tok::LParen => {
                self.bump();
                let inner = self.until()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                let mut args = Vec::new();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    if *self.peek() != Tok::RParen {
                        loop {
                            match self.bump() {
                                Tok::Ident(n) => args.push(Arg::Name(n)),
                                Tok::Num(x) => args.push(Arg::Number(x)),
                                _ => {
                                    self.at -= 1;
                                    return self.error("atom argument");
                                }
                            }
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen, "`)` or `,`")?;
                }
                let cmp = if let Tok::Cmp(op) = *self.peek() {
                    self.bump();
                    let threshold = self.number("comparison threshold")?;
                    Some(Comparison { op, threshold })
                } else {
                    None
                };
                Ok(Formula::Atom(Atom { name, args, cmp }))
            }
            _ => self.error("formula"),
        }
    }
}

pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0 };
    let f = p.until()?;
    if *p.peek() != Tok::Eof {
        return p.error("end of input");
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::ast::atom;

    fn iv(lo: f64, hi: f64) -> TimeInterval {
        TimeInterval::new(lo, hi).unwrap()
    }

    #[test]
    fn globally_with_interval() {
        let f = parse("G[2,3](v_gt(SV, 5))").unwrap();
        let expected = Formula::globally(
            iv(2.0, 3.0),
            Formula::Atom(Atom::new(
                "v_gt",
                vec![Arg::Name("SV".into()), Arg::Number(5.0)],
            )),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn untimed_until() {
        let f = parse("laneKeep(SV,L) U danger(SV,POV)").unwrap();
        assert_eq!(
            f,
            Formula::until(
                TimeInterval::unbounded(),
                atom("laneKeep", &["SV", "L"]),
                atom("danger", &["SV", "POV"])
            )
        );
    }

    #[test]
    fn reversed_interval() {
        assert!(matches!(parse("G[3,2] true"), Err(ParseError::MalformedInterval { pos: 1, .. })));
        assert!(matches!(parse("F[-1,2] true"), Err(ParseError::MalformedInterval { .. })));
    }

    #[test]
    fn precedence() {
        // until binds loosest, and before or
        let f = parse("a & b | c U d").unwrap();
        let expected = Formula::until(
            TimeInterval::unbounded(),
            Formula::or(Formula::and(atom("a", &[]), atom("b", &[])), atom("c", &[])),
            atom("d", &[]),
        );
        assert_eq!(f, expected);
        // temporal prefix binds tighter than and
        let f = parse("G[0,1] p & q").unwrap();
        assert!(matches!(f, Formula::And { .. }));
        // right associative until
        let f = parse("a U b U c").unwrap();
        match f {
            Formula::Until { rhs, .. } => assert!(matches!(*rhs, Formula::Until { .. })),
            _ => panic!(),
        }
        let f = parse("!G p").unwrap();
        assert!(matches!(f, Formula::Not { .. }));
    }

    #[test]
    fn comparisons_and_unicode() {
        let f = parse("v(SV) > 5 ∧ ¬(a(SV) <= -1.5e0)").unwrap();
        assert_eq!(f.to_string(), "v(SV) > 5 & !(a(SV) <= -1.5)");
        let f = parse("F[0,inf] p").unwrap();
        assert_eq!(f, Formula::finally(TimeInterval::unbounded(), atom("p", &[])));
        let f = parse("F[1,inf] p").unwrap();
        assert_eq!(f.to_string(), "F[1,inf] p");
    }

    #[test]
    fn syntax_errors_have_positions() {
        let e = parse("p & ").unwrap_err();
        assert_eq!(e.position(), 4);
        let e = parse("p $ q").unwrap_err();
        assert_eq!(e.position(), 2);
        assert!(parse("").is_err());
        assert!(parse("(p").is_err());
        assert!(parse("f(a,)").is_err());
    }

    #[test]
    fn printer_round_trip() {
        for text in [
            "laneKeep(SV, L) U danger(SV, POV)",
            "(a U b) U c",
            "a & (b & c)",
            "!(a | b) & G[0,0.6] !rss(SV, POV)",
            "F (p & F[0,0] q)",
            "!!p",
            "G F[2,3.5] (x(A) >= 2 | y)",
        ] {
            let f = parse(text).unwrap();
            assert_eq!(parse(&f.to_string()).unwrap(), f, "{text}");
        }
    }
}
