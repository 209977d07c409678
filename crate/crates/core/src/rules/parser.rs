//! Line-oriented rule grammar.
//!
//! ```text
//! rule        := ID ":" cond "->" "sound" STRING ["gain" REAL]
//! cond        := cmp {"and" cmp}
//! cmp         := term OPR term          OPR ∈ { > < >= <= == }
//! term        := FEATURE_NAME | INTEGER
//! combination := ID "=" term {("+" | "-") term}
//! ```
//!
//! `#` starts a comment. Feature names contain hyphens, so a binary `-` in a
//! combination must be separated from its operands by whitespace. Several
//! rule lines with the same ID are alternatives of one rule.

use std::fmt;

use crate::features::{CombinationDef, Sign, TermRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Gt,
    Lt,
    Ge,
    Le,
    Eq,
}

impl CmpOp {
    pub fn apply(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Gt => lhs > rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
        }
    }
}

/// A comparison as written, before feature names are resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonSrc {
    pub lhs: TermRef,
    pub op: CmpOp,
    pub rhs: TermRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleLine {
    pub id: String,
    pub clause: Vec<ComparisonSrc>,
    pub sound: String,
    pub gain: Option<f64>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Rule(RuleLine),
    Combination(CombinationDef, usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RulesDocument {
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

fn term_text(t: &TermRef) -> String {
    match t {
        TermRef::Name(n) => n.clone(),
        TermRef::Literal(v) => v.to_string(),
    }
}

impl fmt::Display for ComparisonSrc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", term_text(&self.lhs), self.op.symbol(), term_text(&self.rhs))
    }
}

impl fmt::Display for RuleLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.id)?;
        for (i, c) in self.clause.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, " -> sound \"{}\"", self.sound)?;
        if let Some(g) = self.gain {
            write!(f, " gain {g}")?;
        }
        Ok(())
    }
}

impl fmt::Display for RulesDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.items {
            match item {
                Item::Rule(r) => writeln!(f, "{r}")?,
                Item::Combination(c, _) => writeln!(f, "{c}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Colon,
    Assign,
    Arrow,
    Plus,
    Minus,
    Op(CmpOp),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("{s:?}"),
            Tok::Number(s) => s.clone(),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Colon => "':'".into(),
            Tok::Assign => "'='".into(),
            Tok::Arrow => "'->'".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Op(op) => format!("'{}'", op.symbol()),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

/// Tokens of one line with their 1-based columns.
fn lex(line_no: usize, text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks: Vec<(Tok, usize)> = Vec::new();
    let mut i = 0;
    let err = |col: usize, message: String| ParseError { line: line_no, column: col + 1, message };

    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let expecting_term =
            matches!(toks.last(), None | Some((Tok::Colon | Tok::Assign | Tok::Op(_) | Tok::Plus | Tok::Minus, _)))
                || matches!(toks.last(), Some((Tok::Ident(k), _)) if k == "and");

        if is_ident_start(c) {
            while i < chars.len() && is_ident_char(chars[i]) {
                // A '-' that begins "->" or stands alone is not part of the name.
                if chars[i] == '-' {
                    let next = chars.get(i + 1).copied();
                    if !matches!(next, Some(n) if is_ident_char(n) && n != '-') {
                        break;
                    }
                }
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), start));
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && expecting_term && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && is_ident_start(chars[i]) {
                return Err(err(start, "malformed number".into()));
            }
            toks.push((Tok::Number(chars[start..i].iter().collect()), start));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, len) = match two.as_str() {
            "->" => (Tok::Arrow, 2),
            ">=" => (Tok::Op(CmpOp::Ge), 2),
            "<=" => (Tok::Op(CmpOp::Le), 2),
            "==" => (Tok::Op(CmpOp::Eq), 2),
            _ => match c {
                ':' => (Tok::Colon, 1),
                '=' => (Tok::Assign, 1),
                '>' => (Tok::Op(CmpOp::Gt), 1),
                '<' => (Tok::Op(CmpOp::Lt), 1),
                '+' => (Tok::Plus, 1),
                '-' => (Tok::Minus, 1),
                '"' => {
                    let mut j = i + 1;
                    while j < chars.len() && chars[j] != '"' {
                        j += 1;
                    }
                    if j == chars.len() {
                        return Err(err(start, "unterminated string".into()));
                    }
                    toks.push((Tok::Str(chars[i + 1..j].iter().collect()), start));
                    i = j + 1;
                    continue;
                }
                other => return Err(err(start, format!("unexpected character {other:?}"))),
            },
        };
        toks.push((tok, start));
        i += len;
    }
    Ok(toks.into_iter().map(|(t, col)| (t, col + 1)).collect())
}

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    line_len: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map(|(_, c)| *c).unwrap_or(self.line_len + 1)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: self.column(), message: message.into() }
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected {what}, found {}", t.describe()))),
            None => Err(self.error(format!("expected {what}, found end of line"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        self.expect(&Tok::Ident(kw.to_string()), &format!("'{kw}'"))
    }

    fn term(&mut self) -> Result<TermRef, ParseError> {
        match self.peek() {
            Some(Tok::Ident(name)) if name != "and" => {
                self.pos += 1;
                Ok(TermRef::Name(name.clone()))
            }
            Some(Tok::Number(n)) => {
                let v = n.parse::<i64>().map_err(|_| self.error(format!("{n} is not an integer")))?;
                self.pos += 1;
                Ok(TermRef::Literal(v))
            }
            Some(t) => Err(self.error(format!("expected feature name or integer, found {}", t.describe()))),
            None => Err(self.error("expected feature name or integer, found end of line")),
        }
    }
}

fn parse_line(line_no: usize, text: &str) -> Result<Option<Item>, ParseError> {
    let toks = lex(line_no, text)?;
    if toks.is_empty() {
        return Ok(None);
    }
    let mut cur = Cursor { toks: &toks, pos: 0, line: line_no, line_len: text.chars().count() };
    let id = match cur.next() {
        Some(Tok::Ident(id)) => id.clone(),
        _ => {
            cur.pos = 0;
            return Err(cur.error("expected rule or feature identifier"));
        }
    };
    match cur.next() {
        Some(Tok::Colon) => {
            let mut clause = Vec::new();
            loop {
                let lhs = cur.term()?;
                let op = match cur.peek() {
                    Some(Tok::Op(op)) => {
                        cur.pos += 1;
                        *op
                    }
                    Some(t) => return Err(cur.error(format!("expected comparison operator, found {}", t.describe()))),
                    None => return Err(cur.error("expected comparison operator, found end of line")),
                };
                let rhs = cur.term()?;
                clause.push(ComparisonSrc { lhs, op, rhs });
                match cur.peek() {
                    Some(Tok::Ident(k)) if k == "and" => cur.pos += 1,
                    _ => break,
                }
            }
            cur.expect(&Tok::Arrow, "'->' or 'and'")?;
            cur.keyword("sound")?;
            let sound = match cur.next() {
                Some(Tok::Str(s)) if !s.is_empty() => s.clone(),
                _ => {
                    cur.pos -= 1;
                    return Err(cur.error("expected quoted sound id"));
                }
            };
            let gain = match cur.peek() {
                Some(Tok::Ident(k)) if k == "gain" => {
                    cur.pos += 1;
                    match cur.next() {
                        Some(Tok::Number(n)) => Some(n.parse::<f64>().map_err(|_| {
                            cur.pos -= 1;
                            cur.error(format!("{n} is not a number"))
                        })?),
                        _ => {
                            cur.pos -= 1;
                            return Err(cur.error("expected gain value"));
                        }
                    }
                }
                _ => None,
            };
            if let Some(t) = cur.peek() {
                return Err(cur.error(format!("unexpected {} after rule", t.describe())));
            }
            Ok(Some(Item::Rule(RuleLine { id, clause, sound, gain, line: line_no })))
        }
        Some(Tok::Assign) => {
            let mut terms = Vec::new();
            let mut sign = Sign::Plus;
            if matches!(cur.peek(), Some(Tok::Minus)) {
                cur.pos += 1;
                sign = Sign::Minus;
            }
            loop {
                terms.push((sign, cur.term()?));
                sign = match cur.peek() {
                    Some(Tok::Plus) => Sign::Plus,
                    Some(Tok::Minus) => Sign::Minus,
                    None => break,
                    Some(t) => return Err(cur.error(format!("expected '+' or '-', found {}", t.describe()))),
                };
                cur.pos += 1;
            }
            Ok(Some(Item::Combination(CombinationDef { name: id, terms }, line_no)))
        }
        Some(t) => {
            cur.pos -= 1;
            Err(cur.error(format!("expected ':' or '=', found {}", t.describe())))
        }
        None => Err(cur.error("expected ':' or '=' after identifier")),
    }
}

/// Parses a whole document. Every line is parsed; all syntax errors are
/// returned together.
pub fn parse_document(text: &str) -> Result<RulesDocument, Vec<ParseError>> {
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        match parse_line(idx + 1, line) {
            Ok(Some(item)) => items.push(item),
            Ok(None) => {}
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(RulesDocument { items })
    } else {
        Err(errors)
    }
}
