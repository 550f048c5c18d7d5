//! Turtle serialization for the label-addressed KB.
//!
//! Entities are written as `gptkb:` prefixed names and predicates as
//! `gptkbp:` prefixed names, both with IRI-encoded local parts. Literals are
//! plain quoted strings. Output is grouped by subject with predicates and
//! objects sorted, so the same triple set always produces the same bytes.
//!
//! The parser accepts this dialect plus ordinary Turtle variation: comments,
//! free whitespace, `@prefix`/`PREFIX` declarations under any prefix name,
//! full `<IRI>` terms, single/long quoted strings and `;`/`,` lists.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::model::{decode_entity_iri, encode_entity_iri, EntityId, Namespaces, Term, Triple};
use crate::store::TripleStore;

pub const HEADER: &str = "# kbforge turtle v1";
pub const ENTITY_PREFIX: &str = "gptkb";
pub const PROPERTY_PREFIX: &str = "gptkbp";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message} (at {token:?})")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub token: String,
    pub message: String,
}

/// Escapes a percent-encoded local part for use inside a prefixed name.
fn escape_local(local: &str) -> String {
    let mut out = String::with_capacity(local.len() + 2);
    for (i, c) in local.chars().enumerate() {
        match c {
            '.' | '~' => {
                out.push('\\');
                out.push(c);
            }
            '-' if i == 0 => out.push_str("\\-"),
            _ => out.push(c),
        }
    }
    out
}

pub fn write_literal(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_entity(out: &mut String, e: &EntityId) {
    out.push_str(ENTITY_PREFIX);
    out.push(':');
    out.push_str(&escape_local(&e.iri_local()));
}

fn write_object(out: &mut String, o: &Term) {
    match o {
        Term::Entity(e) => write_entity(out, e),
        Term::Literal(l) => write_literal(out, l),
    }
}

/// Serializes an already sorted, deduplicated triple slice.
pub fn serialize_sorted(triples: &[Triple], ns: &Namespaces) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    let _ = writeln!(out, "@prefix {ENTITY_PREFIX}: <{}> .", ns.entity_prefix);
    let _ = writeln!(out, "@prefix {PROPERTY_PREFIX}: <{}> .", ns.property_prefix);
    out.push('\n');

    let mut i = 0;
    while i < triples.len() {
        let subject = &triples[i].subject;
        write_entity(&mut out, subject);
        let mut first_pred = true;
        while i < triples.len() && triples[i].subject == *subject {
            let pred = &triples[i].predicate;
            if first_pred {
                out.push(' ');
                first_pred = false;
            } else {
                out.push_str(" ;\n    ");
            }
            out.push_str(PROPERTY_PREFIX);
            out.push(':');
            out.push_str(&escape_local(&encode_entity_iri(pred)));
            out.push(' ');
            let mut first_obj = true;
            while i < triples.len() && triples[i].subject == *subject && triples[i].predicate == *pred {
                if !first_obj {
                    out.push_str(", ");
                }
                first_obj = false;
                write_object(&mut out, &triples[i].object);
                i += 1;
            }
        }
        out.push_str(" .\n");
    }
    out
}

pub fn serialize_turtle(store: &TripleStore, ns: &Namespaces) -> String {
    let mut triples: Vec<Triple> = store.iter().collect();
    triples.sort();
    serialize_sorted(&triples, ns)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    Prefixed(String, String),
    Str(String),
    PrefixDirective,
    SparqlPrefix,
    Dot,
    Semi,
    Comma,
    Other(String),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Iri(i) => write!(f, "<{i}>"),
            Tok::Prefixed(p, l) => write!(f, "{p}:{l}"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::PrefixDirective => f.write_str("@prefix"),
            Tok::SparqlPrefix => f.write_str("PREFIX"),
            Tok::Dot => f.write_str("."),
            Tok::Semi => f.write_str(";"),
            Tok::Comma => f.write_str(","),
            Tok::Other(s) => f.write_str(s),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

fn is_pn_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '%' | '\u{00B7}') || (c as u32) >= 0x80
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0, line: 1, col: 1 }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, line: usize, column: usize, token: &str, message: &str) -> ParseError {
        ParseError {
            line,
            column,
            token: token.to_string(),
            message: message.to_string(),
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    /// Returns the next token with its starting line and column.
    fn next(&mut self) -> Result<(Tok, usize, usize), ParseError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else {
            return Ok((Tok::Eof, line, col));
        };
        let tok = match c {
            '<' => {
                self.bump();
                let mut iri = String::new();
                loop {
                    match self.bump() {
                        Some('>') => break,
                        Some(c) if c.is_whitespace() || c == '<' => {
                            return Err(self.err(line, col, &iri, "invalid character in IRI"))
                        }
                        Some(c) => iri.push(c),
                        None => return Err(self.err(line, col, &iri, "unterminated IRI")),
                    }
                }
                Tok::Iri(iri)
            }
            '"' | '\'' => Tok::Str(self.string(c, line, col)?),
            '.' => {
                self.bump();
                Tok::Dot
            }
            ';' => {
                self.bump();
                Tok::Semi
            }
            ',' => {
                self.bump();
                Tok::Comma
            }
            '@' => {
                self.bump();
                let word = self.word();
                if word == "prefix" {
                    Tok::PrefixDirective
                } else {
                    return Err(self.err(line, col, &format!("@{word}"), "unsupported directive"));
                }
            }
            _ => {
                let word = self.prefixed_or_word(line, col)?;
                match word {
                    Tok::Other(w) if w.eq_ignore_ascii_case("prefix") => Tok::SparqlPrefix,
                    t => t,
                }
            }
        };
        Ok((tok, line, col))
    }

    fn word(&mut self) -> String {
        let mut w = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '-' {
                w.push(c);
                self.bump();
            } else {
                break;
            }
        }
        w
    }

    fn prefixed_or_word(&mut self, line: usize, col: usize) -> Result<Tok, ParseError> {
        let mut prefix = String::new();
        while let Some(c) = self.peek() {
            if c == ':' || !(c.is_alphanumeric() || c == '_' || c == '-' || c == '.') {
                break;
            }
            prefix.push(c);
            self.bump();
        }
        if self.peek() != Some(':') {
            if prefix.is_empty() {
                let c = self.bump().unwrap_or_default();
                return Err(self.err(line, col, &c.to_string(), "unexpected character"));
            }
            return Ok(Tok::Other(prefix));
        }
        self.bump();
        let mut local = String::new();
        loop {
            match self.peek() {
                Some('\\') => {
                    self.bump();
                    match self.bump() {
                        Some(c) if "_~.-!$&'()*+,;=/?#@%".contains(c) => local.push(c),
                        _ => return Err(self.err(line, col, &local, "invalid local name escape")),
                    }
                }
                Some('.') => {
                    // A dot ends the name unless more name characters follow.
                    match self.peek_at(1) {
                        Some(n) if is_pn_char(n) || n == '\\' || n == ':' => {
                            local.push('.');
                            self.bump();
                        }
                        _ => break,
                    }
                }
                Some(c) if is_pn_char(c) || c == ':' => {
                    local.push(c);
                    self.bump();
                }
                _ => break,
            }
        }
        Ok(Tok::Prefixed(prefix, local))
    }

    fn string(&mut self, quote: char, line: usize, col: usize) -> Result<String, ParseError> {
        let long = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        let open = if long { 3 } else { 1 };
        for _ in 0..open {
            self.bump();
        }
        let mut s = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(self.err(line, col, &s, "unterminated string"));
            };
            match c {
                '\\' => s.push(self.escape(line, col)?),
                c if c == quote => {
                    if !long {
                        break;
                    }
                    if self.peek() == Some(quote) && self.peek_at(1) == Some(quote) {
                        self.bump();
                        self.bump();
                        break;
                    }
                    s.push(c);
                }
                '\n' | '\r' if !long => {
                    return Err(self.err(line, col, &s, "newline in single-line string"))
                }
                c => s.push(c),
            }
        }
        if matches!(self.peek(), Some('@') | Some('^')) {
            return Err(self.err(self.line, self.col, &s, "typed or language-tagged literals are not supported"));
        }
        Ok(s)
    }

    fn escape(&mut self, line: usize, col: usize) -> Result<char, ParseError> {
        let c = self.bump().ok_or_else(|| self.err(line, col, "\\", "dangling escape"))?;
        Ok(match c {
            'n' => '\n',
            'r' => '\r',
            't' => '\t',
            'b' => '\u{8}',
            'f' => '\u{c}',
            '"' | '\'' | '\\' => c,
            'u' | 'U' => {
                let n = if c == 'u' { 4 } else { 8 };
                let mut hex = String::new();
                for _ in 0..n {
                    hex.push(self.bump().unwrap_or(' '));
                }
                u32::from_str_radix(&hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| self.err(line, col, &hex, "invalid unicode escape"))?
            }
            other => return Err(self.err(line, col, &format!("\\{other}"), "invalid escape")),
        })
    }
}

enum Node {
    Entity(EntityId),
    Property(String),
    Literal(String),
}

struct Parser<'a> {
    lex: Lexer<'a>,
    ns: &'a Namespaces,
    prefixes: HashMap<String, String>,
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<(), ParseError> {
        let (tok, line, col) = self.lex.next()?;
        self.tok = tok;
        self.line = line;
        self.col = col;
        Ok(())
    }

    fn fail<T>(&self, message: &str) -> Result<T, ParseError> {
        Err(ParseError {
            line: self.line,
            column: self.col,
            token: self.tok.to_string(),
            message: message.to_string(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.tok == want {
            self.advance()
        } else {
            self.fail(&format!("expected {what}"))
        }
    }

    fn classify_iri(&self, iri: &str) -> Result<Node, ParseError> {
        let decode = |local: &str| {
            decode_entity_iri(local)
                .map_err(|e| ParseError {
                    line: self.line,
                    column: self.col,
                    token: self.tok.to_string(),
                    message: e.to_string(),
                })
        };
        if let Some(local) = iri.strip_prefix(&self.ns.entity_prefix) {
            let label = decode(local)?;
            return EntityId::new(&label).map(Node::Entity).or_else(|e| self.fail(&e.to_string()));
        }
        if let Some(local) = iri.strip_prefix(&self.ns.property_prefix) {
            let label = decode(local)?;
            return crate::model::normalize_label(&label)
                .map(Node::Property)
                .or_else(|e| self.fail(&e.to_string()));
        }
        self.fail("IRI outside the entity and property namespaces")
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let node = match &self.tok {
            Tok::Iri(iri) => self.classify_iri(iri)?,
            Tok::Prefixed(p, local) => match self.prefixes.get(p) {
                Some(base) => self.classify_iri(&format!("{base}{local}"))?,
                None => return self.fail("undeclared prefix"),
            },
            Tok::Str(s) => Node::Literal(s.clone()),
            Tok::Other(w) if w == "a" => return self.fail("'a' (rdf:type) is not supported"),
            _ => return self.fail("expected a term"),
        };
        self.advance()?;
        Ok(node)
    }

    fn prefix_decl(&mut self, sparql_style: bool) -> Result<(), ParseError> {
        self.advance()?;
        let name = match &self.tok {
            Tok::Prefixed(p, l) if l.is_empty() => p.clone(),
            _ => return self.fail("expected prefix name"),
        };
        self.advance()?;
        let iri = match &self.tok {
            Tok::Iri(i) => i.clone(),
            _ => return self.fail("expected IRI"),
        };
        self.advance()?;
        self.prefixes.insert(name, iri);
        if !sparql_style {
            self.expect(Tok::Dot, "'.'")?;
        }
        Ok(())
    }

    fn statement(&mut self, out: &mut Vec<Triple>) -> Result<(), ParseError> {
        let subject = match self.term()? {
            Node::Entity(e) => e,
            _ => return self.fail("subject must be an entity"),
        };
        loop {
            let predicate = match self.term()? {
                Node::Property(p) => p,
                _ => return self.fail("predicate must be a property"),
            };
            loop {
                let object = match self.term()? {
                    Node::Entity(e) => Term::Entity(e),
                    Node::Literal(l) => Term::Literal(l),
                    Node::Property(_) => return self.fail("object cannot be a property"),
                };
                out.push(Triple {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                });
                if self.tok == Tok::Comma {
                    self.advance()?;
                } else {
                    break;
                }
            }
            if self.tok == Tok::Semi {
                while self.tok == Tok::Semi {
                    self.advance()?;
                }
                if self.tok == Tok::Dot {
                    break;
                }
            } else {
                break;
            }
        }
        self.expect(Tok::Dot, "'.'")
    }
}

/// Parses Turtle into triples (duplicates preserved).
pub fn parse_turtle(text: &str, ns: &Namespaces) -> Result<Vec<Triple>, ParseError> {
    let mut p = Parser {
        lex: Lexer::new(text),
        ns,
        prefixes: HashMap::new(),
        tok: Tok::Eof,
        line: 1,
        col: 1,
    };
    p.advance()?;
    let mut out = Vec::new();
    loop {
        match p.tok {
            Tok::Eof => break,
            Tok::PrefixDirective => p.prefix_decl(false)?,
            Tok::SparqlPrefix => p.prefix_decl(true)?,
            _ => p.statement(&mut out)?,
        }
    }
    Ok(out)
}

pub fn parse_turtle_store(text: &str, ns: &Namespaces) -> Result<TripleStore, ParseError> {
    let triples = parse_turtle(text, ns)?;
    let mut store = TripleStore::new();
    store
        .bulk_load(triples)
        .expect("parsed triples are well-formed");
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ns() -> Namespaces {
        Namespaces::default()
    }

    #[test]
    fn single_triple_line() {
        let t = Triple::entity("Suzhou", "instanceOf", "city").unwrap();
        let text = serialize_sorted(std::slice::from_ref(&t), &ns());
        assert!(text.contains("\ngptkb:Suzhou gptkbp:instanceOf gptkb:city .\n"), "{text}");
        assert_eq!(parse_turtle(&text, &ns()).unwrap(), vec![t]);
    }

    #[test]
    fn literal_escapes_roundtrip() {
        let t = Triple::literal("X", "says", "he said \"hi\"\nthen left\\").unwrap();
        let text = serialize_sorted(std::slice::from_ref(&t), &ns());
        assert!(text.contains(r#""he said \"hi\"\nthen left\\""#), "{text}");
        assert_eq!(parse_turtle(&text, &ns()).unwrap(), vec![t]);
    }

    #[test]
    fn grouping_and_sorting() {
        let mut ts = vec![
            Triple::entity("B", "p", "Y").unwrap(),
            Triple::literal("A", "q", "z").unwrap(),
            Triple::entity("A", "p", "Y").unwrap(),
            Triple::entity("A", "p", "X").unwrap(),
        ];
        ts.sort();
        let text = serialize_sorted(&ts, &ns());
        let body: Vec<&str> = text.lines().skip(4).collect();
        assert_eq!(
            body,
            vec!["gptkb:A gptkbp:p gptkb:X, gptkb:Y ;", "    gptkbp:q \"z\" .", "gptkb:B gptkbp:p gptkb:Y ."]
        );
    }

    #[test]
    fn awkward_local_names() {
        let ts = vec![
            Triple::entity("-dash.", "has~tilde", "a.b").unwrap(),
            Triple::entity("U.S.", "x_y", "Zoë Ünal").unwrap(),
        ];
        let mut sorted = ts.clone();
        sorted.sort();
        let text = serialize_sorted(&sorted, &ns());
        let mut back = parse_turtle(&text, &ns()).unwrap();
        back.sort();
        assert_eq!(back, sorted);
    }

    #[test]
    fn accepts_standard_variation() {
        let text = r#"
            PREFIX e: <https://gptkb.org/entity/>
            @prefix p: <https://gptkb.org/prop/> . # comment
            e:Suzhou p:instanceOf e:city ; p:name 'Sū', """long
"string""" ;
              .
            <https://gptkb.org/entity/Vannevar_Bush> <https://gptkb.org/prop/field> e:engineering.
        "#;
        let ts = parse_turtle(text, &ns()).unwrap();
        assert_eq!(ts.len(), 4);
        assert_eq!(ts[2].object, Term::literal("long\n\"string"));
        assert_eq!(ts[3].subject.label(), "Vannevar Bush");
        assert_eq!(ts[3].object, Term::entity("engineering").unwrap());
    }

    #[test]
    fn errors_carry_position() {
        let text = "@prefix gptkb: <https://gptkb.org/entity/> .\ngptkb:A gptkbp:p gptkb:B .";
        let e = parse_turtle(text, &ns()).unwrap_err();
        assert_eq!((e.line, e.column), (2, 9));
        assert!(e.message.contains("undeclared"));

        let e = parse_turtle("<https://other.org/x> <https://gptkb.org/prop/p> \"v\" .", &ns()).unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_turtle("<https://gptkb.org/entity/A> <https://gptkb.org/prop/p> \"v\"@en .", &ns())
            .unwrap_err();
        assert!(e.message.contains("not supported"));
        let e = parse_turtle("<https://gptkb.org/entity/A> <https://gptkb.org/prop/p> \"v\"", &ns()).unwrap_err();
        assert!(e.message.contains("expected '.'"));
    }

    #[test]
    fn control_characters_escape() {
        let t = Triple::literal("A", "p", "bell\u{7}tab\t").unwrap();
        let text = serialize_sorted(std::slice::from_ref(&t), &ns());
        assert!(text.contains("\\u0007"));
        assert_eq!(parse_turtle(&text, &ns()).unwrap(), vec![t]);
    }
}
