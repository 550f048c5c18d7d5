//! Tokenizer for the supported query language.

use super::QueryError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Bare word: keyword or `a`.
    Word(String),
    Var(String),
    Iri(String),
    /// Prefixed name; `local` keeps `%XX` escapes and has `\` escapes removed.
    PName { prefix: String, local: String },
    Str(String),
    Int(i64),
    Dec(f64),
    Punct(char),
    /// `^^`, `@lang`, `&&`, `||`, `!=`, `<=`, `>=` and similar: only legal
    /// inside constructs we do not support.
    Other(String),
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "{w}"),
            Tok::Var(v) => write!(f, "?{v}"),
            Tok::Iri(i) => write!(f, "<{i}>"),
            Tok::PName { prefix, local } => write!(f, "{prefix}:{local}"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Int(i) => write!(f, "{i}"),
            Tok::Dec(d) => write!(f, "{d}"),
            Tok::Punct(c) => write!(f, "{c}"),
            Tok::Other(s) => write!(f, "{s}"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

fn name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

impl Lexer {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, line: usize, column: usize, found: &str, expected: &str) -> QueryError {
        QueryError::Syntax {
            line,
            column,
            found: found.to_string(),
            expected: vec![expected.to_string()],
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek(0) {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while self.peek(0).is_some_and(|c| c != '\n') {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Result<Token, QueryError> {
        self.skip_trivia();
        let (line, column) = (self.line, self.col);
        let at = |tok| Ok(Token { tok, line, column });
        let Some(c) = self.peek(0) else {
            return at(Tok::Eof);
        };
        match c {
            '?' | '$' => {
                self.bump();
                let mut name = String::new();
                while self.peek(0).is_some_and(|c| c.is_alphanumeric() || c == '_') {
                    name.push(self.bump().unwrap());
                }
                if name.is_empty() {
                    return Err(self.err(line, column, &c.to_string(), "variable name"));
                }
                at(Tok::Var(name))
            }
            '<' => {
                // An IRI has no whitespace before its closing '>'.
                let mut k = 1;
                while let Some(d) = self.peek(k) {
                    if d == '>' || d.is_whitespace() || d == '<' || d == '"' || d == '{' || d == '}' {
                        break;
                    }
                    k += 1;
                }
                if self.peek(k) == Some('>') {
                    self.bump();
                    let mut iri = String::new();
                    for _ in 1..k {
                        iri.push(self.bump().unwrap());
                    }
                    self.bump();
                    return at(Tok::Iri(iri));
                }
                self.bump();
                if self.peek(0) == Some('=') {
                    self.bump();
                    return at(Tok::Other("<=".into()));
                }
                at(Tok::Other("<".into()))
            }
            '"' | '\'' => self.string(line, column).map(|s| Token { tok: Tok::Str(s), line, column }),
            '0'..='9' => self.number(line, column),
            '.' if self.peek(1).is_some_and(|d| d.is_ascii_digit()) => self.number(line, column),
            '^' | '@' | '&' | '|' | '!' | '>' | '=' => {
                self.bump();
                let mut s = c.to_string();
                if let Some(d) = self.peek(0) {
                    if matches!((c, d), ('^', '^') | ('&', '&') | ('|', '|') | ('!', '=') | ('>', '=')) {
                        s.push(self.bump().unwrap());
                    }
                }
                if c == '@' {
                    while self.peek(0).is_some_and(|d| d.is_alphanumeric() || d == '-') {
                        s.push(self.bump().unwrap());
                    }
                }
                at(Tok::Other(s))
            }
            ':' => {
                self.bump();
                let local = self.local_name(line, column)?;
                at(Tok::PName {
                    prefix: String::new(),
                    local,
                })
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut word = String::new();
                while let Some(d) = self.peek(0) {
                    if name_char(d) || (d == '.' && self.peek(1).is_some_and(name_char)) {
                        word.push(d);
                        self.bump();
                    } else {
                        break;
                    }
                }
                if self.peek(0) == Some(':') {
                    self.bump();
                    let local = self.local_name(line, column)?;
                    return at(Tok::PName { prefix: word, local });
                }
                at(Tok::Word(word))
            }
            '{' | '}' | '(' | ')' | '.' | ';' | ',' | '*' | '/' | '+' | '-' | '[' | ']' => {
                self.bump();
                at(Tok::Punct(c))
            }
            other => Err(self.err(line, column, &other.to_string(), "a token")),
        }
    }

    fn local_name(&mut self, line: usize, column: usize) -> Result<String, QueryError> {
        let mut local = String::new();
        loop {
            match self.peek(0) {
                Some(c) if name_char(c) || c == ':' => {
                    local.push(c);
                    self.bump();
                }
                // A '.' may not end a local name.
                Some('.') if self.peek(1).is_some_and(|d| name_char(d) || d == ':' || d == '%' || d == '\\') => {
                    local.push('.');
                    self.bump();
                }
                Some('%') => {
                    let hex: String = [self.peek(1), self.peek(2)].iter().flatten().collect();
                    if hex.len() != 2 || !hex.chars().all(|h| h.is_ascii_hexdigit()) {
                        return Err(self.err(line, column, "%", "two hex digits after '%'"));
                    }
                    local.push('%');
                    local.push_str(&hex);
                    self.bump();
                    self.bump();
                    self.bump();
                }
                Some('\\') => {
                    self.bump();
                    match self.bump() {
                        Some(c) if "_~.-!$&'()*+,;=/?#@%".contains(c) => local.push(c),
                        other => {
                            let found = other.map(String::from).unwrap_or_default();
                            return Err(self.err(line, column, &format!("\\{found}"), "a local-name escape"));
                        }
                    }
                }
                _ => break,
            }
        }
        Ok(local)
    }

    fn string(&mut self, line: usize, column: usize) -> Result<String, QueryError> {
        let q = self.bump().unwrap();
        let long = self.peek(0) == Some(q) && self.peek(1) == Some(q);
        if long {
            self.bump();
            self.bump();
        }
        let mut out = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(self.err(line, column, "end of input", "closing quote"));
            };
            if c == q {
                if !long {
                    return Ok(out);
                }
                if self.peek(0) == Some(q) && self.peek(1) == Some(q) {
                    self.bump();
                    self.bump();
                    return Ok(out);
                }
                out.push(c);
                continue;
            }
            if c == '\n' && !long {
                return Err(self.err(line, column, "newline", "closing quote"));
            }
            if c != '\\' {
                out.push(c);
                continue;
            }
            let e = self.bump();
            match e {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some('b') => out.push('\u{8}'),
                Some('f') => out.push('\u{c}'),
                Some('"') => out.push('"'),
                Some('\'') => out.push('\''),
                Some('\\') => out.push('\\'),
                Some(u @ ('u' | 'U')) => {
                    let n = if u == 'u' { 4 } else { 8 };
                    let hex: String = (0..n).filter_map(|_| self.bump()).collect();
                    let ch = u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32);
                    match ch {
                        Some(ch) if hex.len() == n => out.push(ch),
                        _ => return Err(self.err(self.line, self.col, &hex, "unicode escape")),
                    }
                }
                other => {
                    let found = other.map(String::from).unwrap_or_default();
                    return Err(self.err(self.line, self.col, &format!("\\{found}"), "string escape"));
                }
            }
        }
    }

    fn number(&mut self, line: usize, column: usize) -> Result<Token, QueryError> {
        let mut s = String::new();
        while self.peek(0).is_some_and(|c| c.is_ascii_digit()) {
            s.push(self.bump().unwrap());
        }
        let mut decimal = false;
        if self.peek(0) == Some('.') && self.peek(1).is_some_and(|c| c.is_ascii_digit()) {
            decimal = true;
            s.push(self.bump().unwrap());
            while self.peek(0).is_some_and(|c| c.is_ascii_digit()) {
                s.push(self.bump().unwrap());
            }
        }
        if matches!(self.peek(0), Some('e' | 'E')) {
            let sign = matches!(self.peek(1), Some('+' | '-'));
            let digit_at = if sign { 2 } else { 1 };
            if self.peek(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                decimal = true;
                for _ in 0..digit_at {
                    s.push(self.bump().unwrap());
                }
                while self.peek(0).is_some_and(|c| c.is_ascii_digit()) {
                    s.push(self.bump().unwrap());
                }
            }
        }
        let tok = if decimal {
            Tok::Dec(s.parse().map_err(|_| self.err(line, column, &s, "a number"))?)
        } else {
            match s.parse::<i64>() {
                Ok(i) => Tok::Int(i),
                Err(_) => Tok::Dec(s.parse().map_err(|_| self.err(line, column, &s, "a number"))?),
            }
        };
        Ok(Token { tok, line, column })
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, QueryError> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let eof = t.tok == Tok::Eof;
        out.push(t);
        if eof {
            return Ok(out);
        }
    }
}
