//! Recursive-descent parser producing a [`QueryPlan`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::lexer::{tokenize, Tok, Token};
use super::{
    Aggregate, BinOp, ConstTerm, Element, Expr, GroupPattern, OrderKey, PatternTerm, ProjItem, Projection,
    QueryError, QueryPlan, SelectQuery, TriplePat, ValuesBlock, VarId,
};
use crate::model::Namespaces;

/// Keywords that name SPARQL features outside the supported subset.
const UNSUPPORTED_WORDS: &[&str] = &[
    "FILTER", "UNION", "MINUS", "GRAPH", "SERVICE", "OFFSET", "HAVING", "CONSTRUCT", "ASK", "DESCRIBE", "FROM",
    "NAMED", "BASE", "REDUCED", "SUM", "AVG", "MIN", "MAX", "SAMPLE", "GROUP_CONCAT", "INSERT", "DELETE", "LOAD",
    "CLEAR", "EXISTS", "NOT", "IN",
];

type Pos = (usize, usize);

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    prefixes: BTreeMap<String, String>,
    vars: Vec<String>,
    var_ids: HashMap<String, VarId>,
    /// Aggregates of the select clause being parsed; `None` where
    /// aggregates are not allowed.
    aggs: Option<Vec<Aggregate>>,
}

/// Parses with the `gptkb:` / `gptkbp:` prefixes predeclared for the
/// default namespaces.
pub fn parse_query(text: &str) -> Result<QueryPlan, QueryError> {
    parse_query_with(text, &Namespaces::default())
}

pub fn parse_query_with(text: &str, ns: &Namespaces) -> Result<QueryPlan, QueryError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
        prefixes: BTreeMap::from([
            ("gptkb".to_string(), ns.entity_prefix.clone()),
            ("gptkbp".to_string(), ns.property_prefix.clone()),
        ]),
        vars: Vec::new(),
        var_ids: HashMap::new(),
        aggs: None,
    };
    p.prologue()?;
    if !p.is_word("SELECT") {
        return Err(p.unexpected(&["SELECT"]));
    }
    let select = p.select()?;
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected(&["end of input"]));
    }
    Ok(QueryPlan {
        prefixes: p.prefixes,
        vars: p.vars,
        select,
    })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> Pos {
        let t = &self.toks[self.pos];
        (t.line, t.column)
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_word(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_word(&mut self, kw: &str) -> bool {
        let hit = self.is_word(kw);
        if hit {
            self.advance();
        }
        hit
    }

    fn eat_punct(&mut self, c: char) -> bool {
        let hit = self.peek() == &Tok::Punct(c);
        if hit {
            self.advance();
        }
        hit
    }

    fn unexpected(&self, expected: &[&str]) -> QueryError {
        if let Some(e) = self.unsupported_here() {
            return e;
        }
        let (line, column) = self.here();
        QueryError::Syntax {
            line,
            column,
            found: self.peek().to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn error_at(&self, (line, column): Pos, found: impl Into<String>, expected: &str) -> QueryError {
        QueryError::Syntax {
            line,
            column,
            found: found.into(),
            expected: vec![expected.to_string()],
        }
    }

    fn unsupported(&self, feature: &str) -> QueryError {
        let (line, column) = self.here();
        QueryError::Unsupported {
            feature: feature.to_string(),
            line,
            column,
        }
    }

    /// Names the unsupported construct starting at the current token, if any.
    fn unsupported_here(&self) -> Option<QueryError> {
        let feature = match self.peek() {
            Tok::Word(w) => {
                let upper = w.to_ascii_uppercase();
                if UNSUPPORTED_WORDS.contains(&upper.as_str()) {
                    upper
                } else if w == "a" {
                    "'a' (rdf:type)".to_string()
                } else if upper == "TRUE" || upper == "FALSE" {
                    "boolean literal".to_string()
                } else if self.peek_at(1) == &Tok::Punct('(') && upper != "COUNT" {
                    format!("function {upper}")
                } else {
                    return None;
                }
            }
            Tok::Other(s) if s == "^^" => "typed literal".to_string(),
            Tok::Other(s) if s.starts_with('@') => "language-tagged literal".to_string(),
            Tok::Other(s) if s == "^" || s == "|" || s == "!" => "property path".to_string(),
            Tok::Other(s) => format!("operator {s}"),
            Tok::Punct('[') => "blank node".to_string(),
            _ => return None,
        };
        Some(self.unsupported(&feature))
    }

    fn expect_punct(&mut self, c: char) -> Result<(), QueryError> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.unexpected(&[&format!("'{c}'")]))
        }
    }

    fn expect_word(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_word(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&[kw]))
        }
    }

    fn var_id(&mut self, name: &str) -> VarId {
        if let Some(&id) = self.var_ids.get(name) {
            return id;
        }
        let id = self.vars.len();
        self.vars.push(name.to_string());
        self.var_ids.insert(name.to_string(), id);
        id
    }

    fn expect_var(&mut self) -> Result<VarId, QueryError> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.advance();
                Ok(self.var_id(&v))
            }
            _ => Err(self.unexpected(&["variable"])),
        }
    }

    fn prologue(&mut self) -> Result<(), QueryError> {
        while self.eat_word("PREFIX") {
            let at = self.here();
            let prefix = match self.advance() {
                Tok::PName { prefix, local } if local.is_empty() => prefix,
                other => return Err(self.error_at(at, other.to_string(), "prefix name ending in ':'")),
            };
            let at = self.here();
            match self.advance() {
                Tok::Iri(iri) => {
                    self.prefixes.insert(prefix, iri);
                }
                other => return Err(self.error_at(at, other.to_string(), "IRI")),
            }
        }
        if self.is_word("BASE") {
            return Err(self.unsupported("BASE"));
        }
        Ok(())
    }

    fn select(&mut self) -> Result<SelectQuery, QueryError> {
        let start = self.here();
        self.expect_word("SELECT")?;
        let distinct = self.eat_word("DISTINCT");
        let outer_aggs = self.aggs.replace(Vec::new());

        let mut items = Vec::new();
        let mut item_pos = Vec::new();
        let projection = if self.eat_punct('*') {
            Projection::All
        } else {
            loop {
                let at = self.here();
                match self.peek() {
                    Tok::Var(_) => {
                        let var = self.expect_var()?;
                        items.push(ProjItem { var, expr: None });
                    }
                    Tok::Punct('(') => {
                        self.advance();
                        let expr = self.expr()?;
                        self.expect_word("AS")?;
                        let var = self.expect_var()?;
                        self.expect_punct(')')?;
                        items.push(ProjItem { var, expr: Some(expr) });
                    }
                    _ => break,
                }
                item_pos.push(at);
            }
            if items.is_empty() {
                return Err(self.unexpected(&["'*'", "variable", "'('"]));
            }
            Projection::Items(items)
        };

        self.eat_word("WHERE");
        let select_aggs = self.aggs.take();
        let pattern = self.group()?;
        self.aggs = select_aggs;

        let mut group_by = Vec::new();
        if self.eat_word("GROUP") {
            self.expect_word("BY")?;
            while let Tok::Var(_) = self.peek() {
                group_by.push(self.expect_var()?);
            }
            if self.peek() == &Tok::Punct('(') {
                return Err(self.unsupported("GROUP BY expression"));
            }
            if group_by.is_empty() {
                return Err(self.unexpected(&["variable"]));
            }
        }
        let mut order_by = Vec::new();
        if self.eat_word("ORDER") {
            self.expect_word("BY")?;
            loop {
                let descending = if self.eat_word("DESC") {
                    true
                } else {
                    self.eat_word("ASC");
                    false
                };
                let expr = match self.peek() {
                    Tok::Var(_) => Expr::Var(self.expect_var()?),
                    Tok::Punct('(') => {
                        self.advance();
                        let e = self.expr()?;
                        self.expect_punct(')')?;
                        e
                    }
                    _ if order_by.is_empty() => return Err(self.unexpected(&["variable", "'('"])),
                    _ => break,
                };
                order_by.push(OrderKey { expr, descending });
            }
        }
        let mut limit = None;
        if self.eat_word("LIMIT") {
            match self.advance() {
                Tok::Int(n) if n >= 0 => limit = Some(n as u64),
                other => return Err(self.error_at(self.here(), other.to_string(), "non-negative integer")),
            }
        }
        if let Some(e) = self.unsupported_here() {
            return Err(e);
        }
        let aggregates = std::mem::replace(&mut self.aggs, outer_aggs).unwrap_or_default();
        let query = SelectQuery {
            distinct,
            projection,
            pattern,
            group_by,
            aggregates,
            order_by,
            limit,
        };
        self.validate(&query, start, &item_pos)?;
        Ok(query)
    }

    fn validate(&self, q: &SelectQuery, start: Pos, item_pos: &[Pos]) -> Result<(), QueryError> {
        let scope = q.pattern.scope_vars();
        let name = |v: VarId| format!("?{}", self.vars[v]);
        let mut defined: BTreeSet<VarId> = if q.is_aggregate() {
            q.group_by.iter().copied().collect()
        } else {
            scope.clone()
        };
        let check_expr = |e: &Expr, defined: &BTreeSet<VarId>, at: Pos| {
            let mut vs = Vec::new();
            e.vars(&mut vs);
            match vs.into_iter().find(|v| !defined.contains(v)) {
                Some(v) if q.is_aggregate() => Err(self.error_at(at, name(v), "grouped variable or aggregate")),
                _ => Ok(()),
            }
        };
        match &q.projection {
            Projection::All if q.is_aggregate() => {
                return Err(self.error_at(start, "*", "explicit projection in a grouped query"));
            }
            Projection::All => {}
            Projection::Items(items) => {
                let mut seen = BTreeSet::new();
                for (item, &at) in items.iter().zip(item_pos) {
                    if !seen.insert(item.var) {
                        return Err(self.error_at(at, name(item.var), "distinct output variables"));
                    }
                    match &item.expr {
                        None if !defined.contains(&item.var) => {
                            let expected = if q.is_aggregate() {
                                "grouped variable or aggregate"
                            } else {
                                "variable bound by the pattern"
                            };
                            return Err(self.error_at(at, name(item.var), expected));
                        }
                        None => {}
                        Some(e) => {
                            if scope.contains(&item.var) {
                                return Err(self.error_at(at, name(item.var), "fresh variable after AS"));
                            }
                            check_expr(e, &defined, at)?;
                            defined.insert(item.var);
                        }
                    }
                }
            }
        }
        for k in &q.order_by {
            check_expr(&k.expr, &defined, start)?;
        }
        Ok(())
    }

    fn group(&mut self) -> Result<GroupPattern, QueryError> {
        self.expect_punct('{')?;
        if self.is_word("SELECT") {
            let sub = self.select()?;
            self.expect_punct('}')?;
            return Ok(GroupPattern {
                elements: vec![Element::SubSelect(Box::new(sub))],
            });
        }
        let mut elements: Vec<Element> = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Punct('}') => {
                    self.advance();
                    break;
                }
                Tok::Punct('.') => {
                    self.advance();
                }
                Tok::Punct('{') => {
                    let g = self.group()?;
                    if self.is_word("UNION") {
                        return Err(self.unsupported("UNION"));
                    }
                    match <[Element; 1]>::try_from(g.elements) {
                        Ok([sub @ Element::SubSelect(_)]) => elements.push(sub),
                        Ok([e]) => elements.push(Element::Group(GroupPattern { elements: vec![e] })),
                        Err(es) => elements.push(Element::Group(GroupPattern { elements: es })),
                    }
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("OPTIONAL") => {
                    self.advance();
                    elements.push(Element::Optional(self.group()?));
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("VALUES") => {
                    self.advance();
                    elements.push(Element::Values(self.values()?));
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("BIND") => {
                    self.advance();
                    let at = self.here();
                    self.expect_punct('(')?;
                    let e = self.expr()?;
                    self.expect_word("AS")?;
                    let v = self.expect_var()?;
                    self.expect_punct(')')?;
                    let prior = GroupPattern {
                        elements: elements.clone(),
                    };
                    if prior.scope_vars().contains(&v) {
                        return Err(self.error_at(at, format!("?{}", self.vars[v]), "variable not yet in scope"));
                    }
                    elements.push(Element::Bind(e, v));
                }
                Tok::Eof => return Err(self.unexpected(&["'}'"])),
                _ => {
                    let ts = self.triples()?;
                    match elements.last_mut() {
                        Some(Element::Triples(prev)) => prev.extend(ts),
                        _ => elements.push(Element::Triples(ts)),
                    }
                }
            }
        }
        Ok(GroupPattern { elements })
    }

    fn triples(&mut self) -> Result<Vec<TriplePat>, QueryError> {
        let mut out = Vec::new();
        let subject = self.pattern_term(&["variable", "IRI", "prefixed name", "'}'"])?;
        loop {
            if let Tok::Other(s) = self.peek() {
                if s == "^" || s == "!" {
                    return Err(self.unsupported("property path"));
                }
            }
            let predicate = self.pattern_term(&["variable", "IRI", "prefixed name"])?;
            if matches!(self.peek(), Tok::Punct('/' | '*' | '+')) || matches!(self.peek(), Tok::Other(s) if s == "|") {
                return Err(self.unsupported("property path"));
            }
            loop {
                let object = self.pattern_term(&["variable", "IRI", "prefixed name", "literal"])?;
                out.push(TriplePat {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                });
                if !self.eat_punct(',') {
                    break;
                }
            }
            if !self.eat_punct(';') {
                break;
            }
            while self.eat_punct(';') {}
            if matches!(self.peek(), Tok::Punct('.' | '}')) {
                break;
            }
        }
        Ok(out)
    }

    fn resolve_pname(&self, prefix: &str, local: &str, at: Pos) -> Result<String, QueryError> {
        match self.prefixes.get(prefix) {
            Some(base) => Ok(format!("{base}{local}")),
            None => Err(self.error_at(at, format!("{prefix}:{local}"), "declared prefix")),
        }
    }

    /// A constant term: IRI, prefixed name, string or number.
    fn const_term(&mut self) -> Result<Option<ConstTerm>, QueryError> {
        let at = self.here();
        let t = match self.peek().clone() {
            Tok::Iri(iri) => ConstTerm::Iri(iri),
            Tok::PName { prefix, local } => ConstTerm::Iri(self.resolve_pname(&prefix, &local, at)?),
            Tok::Str(s) => ConstTerm::Literal(s),
            Tok::Int(i) => ConstTerm::Int(i),
            Tok::Dec(d) => ConstTerm::Dec(d),
            Tok::Punct('-') if matches!(self.peek_at(1), Tok::Int(_) | Tok::Dec(_)) => {
                self.advance();
                return Ok(Some(match self.advance() {
                    Tok::Int(i) => ConstTerm::Int(-i),
                    Tok::Dec(d) => ConstTerm::Dec(-d),
                    _ => unreachable!(),
                }));
            }
            _ => return Ok(None),
        };
        self.advance();
        if let Tok::Other(s) = self.peek() {
            if s == "^^" || s.starts_with('@') {
                return Err(self.unexpected(&[]));
            }
        }
        Ok(Some(t))
    }

    fn pattern_term(&mut self, expected: &[&str]) -> Result<PatternTerm, QueryError> {
        if let Tok::Var(_) = self.peek() {
            return Ok(PatternTerm::Var(self.expect_var()?));
        }
        if self.peek() == &Tok::Punct('(') {
            return Err(self.unsupported("RDF collection"));
        }
        match self.const_term()? {
            Some(t) => Ok(PatternTerm::Const(t)),
            None => Err(self.unexpected(expected)),
        }
    }

    fn values(&mut self) -> Result<ValuesBlock, QueryError> {
        let single = matches!(self.peek(), Tok::Var(_));
        let vars = if single {
            vec![self.expect_var()?]
        } else {
            self.expect_punct('(')?;
            let mut vs = Vec::new();
            while let Tok::Var(_) = self.peek() {
                vs.push(self.expect_var()?);
            }
            self.expect_punct(')')?;
            vs
        };
        self.expect_punct('{')?;
        let mut rows = Vec::new();
        loop {
            if self.eat_punct('}') {
                break;
            }
            if single {
                rows.push(vec![self.value_cell()?]);
                continue;
            }
            let at = self.here();
            self.expect_punct('(')?;
            let mut row = Vec::new();
            while !self.eat_punct(')') {
                row.push(self.value_cell()?);
            }
            if row.len() != vars.len() {
                return Err(self.error_at(at, format!("{} values", row.len()), &format!("{} values", vars.len())));
            }
            rows.push(row);
        }
        Ok(ValuesBlock { vars, rows })
    }

    fn value_cell(&mut self) -> Result<Option<ConstTerm>, QueryError> {
        if self.eat_word("UNDEF") {
            return Ok(None);
        }
        match self.const_term()? {
            Some(t) => Ok(Some(t)),
            None => Err(self.unexpected(&["IRI", "prefixed name", "literal", "UNDEF"])),
        }
    }

    fn expr(&mut self) -> Result<Expr, QueryError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Punct('+') => BinOp::Add,
                Tok::Punct('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.mul()?));
        }
    }

    fn mul(&mut self) -> Result<Expr, QueryError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Punct('*') => BinOp::Mul,
                Tok::Punct('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, QueryError> {
        match self.peek().clone() {
            Tok::Punct('-') => {
                self.advance();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Punct('+') => {
                self.advance();
                self.unary()
            }
            Tok::Punct('(') => {
                self.advance();
                let e = self.expr()?;
                self.expect_punct(')')?;
                Ok(e)
            }
            Tok::Var(_) => Ok(Expr::Var(self.expect_var()?)),
            Tok::Word(w) if w.eq_ignore_ascii_case("COUNT") => self.count(),
            _ => match self.const_term()? {
                Some(t) => Ok(Expr::Const(t)),
                None => Err(self.unexpected(&["expression"])),
            },
        }
    }

    fn count(&mut self) -> Result<Expr, QueryError> {
        let at = self.here();
        self.advance();
        let Some(mut aggs) = self.aggs.take() else {
            return Err(self.error_at(at, "COUNT", "no aggregate in this position"));
        };
        self.expect_punct('(')?;
        let distinct = self.eat_word("DISTINCT");
        let arg = if self.eat_punct('*') { None } else { Some(self.expr()?) };
        self.expect_punct(')')?;
        aggs.push(Aggregate { distinct, arg });
        let idx = aggs.len() - 1;
        self.aggs = Some(aggs);
        Ok(Expr::Aggregate(idx))
    }
}
