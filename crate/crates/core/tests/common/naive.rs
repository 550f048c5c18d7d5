//! A naive query evaluator for randomly generated queries. Queries are kept
//! as plain data, rendered to text for the engine and evaluated here by
//! nested loops over the triple list.

use std::collections::{BTreeMap, BTreeSet};

use kbforge::query::{ResultTable, ResultValue};
use kbforge::{EntityId, Namespaces, Term, Triple};
use rand::prelude::*;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum N {
    E(String),
    P(String),
    L(String),
    I(i64),
}

#[derive(Debug, Clone)]
pub enum Slot {
    Var(String),
    Node(N),
}

#[derive(Debug, Clone)]
pub struct Pat {
    pub s: Slot,
    pub p: Slot,
    pub o: Slot,
}

#[derive(Debug, Clone)]
pub enum Count {
    Star,
    Var { var: String, distinct: bool },
}

#[derive(Debug, Clone)]
pub struct RandomQuery {
    pub bgp: Vec<Pat>,
    pub values: Option<(String, Vec<N>)>,
    pub optional: Option<Pat>,
    pub distinct: bool,
    pub projection: Vec<String>,
    /// `(group var, aggregate)`; `None` group var aggregates everything.
    pub aggregate: Option<(Option<String>, Count)>,
    pub limit: Option<usize>,
}

type Row = BTreeMap<String, N>;

pub fn node_of_term(t: &Term) -> N {
    match t {
        Term::Entity(e) => N::E(e.label().to_string()),
        Term::Literal(l) => N::L(l.clone()),
    }
}

pub type Fact = [N; 3];

pub fn facts(triples: &[Triple]) -> Vec<Fact> {
    triples.iter().map(fact).collect()
}

fn fact(t: &Triple) -> Fact {
    [N::E(t.subject.label().to_string()), N::P(t.predicate.clone()), node_of_term(&t.object)]
}

fn unify(row: &Row, pat: &Pat, f: &Fact) -> Option<Row> {
    let slots = [&pat.s, &pat.p, &pat.o];
    // Check before cloning; a variable repeated within the pattern must
    // see the same value in every position.
    for (i, (slot, v)) in slots.iter().zip(f).enumerate() {
        match slot {
            Slot::Node(n) if n != v => return None,
            Slot::Var(x) => {
                if row.get(x).is_some_and(|b| b != v) {
                    return None;
                }
                for (other, w) in slots[..i].iter().zip(f) {
                    if matches!(other, Slot::Var(y) if y == x) && w != v {
                        return None;
                    }
                }
            }
            Slot::Node(_) => {}
        }
    }
    let mut out = row.clone();
    for (slot, v) in slots.into_iter().zip(f) {
        if let Slot::Var(x) = slot {
            out.entry(x.clone()).or_insert_with(|| v.clone());
        }
    }
    Some(out)
}

/// Evaluates `q`; `None` when an intermediate result exceeds `cap` rows.
pub fn evaluate(q: &RandomQuery, facts: &[Fact], cap: usize) -> Option<Vec<Vec<Option<N>>>> {
    let mut rows: Vec<Row> = vec![Row::new()];
    for pat in &q.bgp {
        let mut next = Vec::new();
        for r in &rows {
            next.extend(facts.iter().filter_map(|f| unify(r, pat, f)));
            if next.len() > cap {
                return None;
            }
        }
        rows = next;
    }
    if let Some((var, vals)) = &q.values {
        let mut next = Vec::new();
        for r in &rows {
            for v in vals {
                match r.get(var) {
                    Some(b) if b != v => {}
                    Some(_) => next.push(r.clone()),
                    None => {
                        let mut r = r.clone();
                        r.insert(var.clone(), v.clone());
                        next.push(r);
                    }
                }
            }
        }
        rows = next;
    }
    if let Some(pat) = &q.optional {
        let mut next = Vec::new();
        for r in &rows {
            let ext: Vec<Row> = facts.iter().filter_map(|f| unify(r, pat, f)).collect();
            if ext.is_empty() {
                next.push(r.clone());
            } else {
                next.extend(ext);
            }
            if next.len() > cap {
                return None;
            }
        }
        rows = next;
    }

    let mut out: Vec<Vec<Option<N>>> = match &q.aggregate {
        None => rows
            .iter()
            .map(|r| q.projection.iter().map(|v| r.get(v).cloned()).collect())
            .collect(),
        Some((group, count)) => {
            let mut groups: BTreeMap<Option<N>, Vec<&Row>> = BTreeMap::new();
            if group.is_none() {
                groups.insert(None, Vec::new());
            }
            for r in &rows {
                let key = group.as_ref().and_then(|g| r.get(g).cloned());
                groups.entry(key).or_default().push(r);
            }
            groups
                .into_iter()
                .map(|(key, members)| {
                    let n = match count {
                        Count::Star => members.len(),
                        Count::Var { var, distinct: false } => members.iter().filter(|r| r.contains_key(var)).count(),
                        Count::Var { var, distinct: true } => {
                            members.iter().filter_map(|r| r.get(var)).collect::<BTreeSet<_>>().len()
                        }
                    };
                    let mut row = Vec::new();
                    if group.is_some() {
                        row.push(key);
                    }
                    row.push(Some(N::I(n as i64)));
                    row
                })
                .collect()
        }
    };
    if q.distinct {
        out = out.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    }
    Some(out)
}

/// Column names of the result, in order.
pub fn columns(q: &RandomQuery) -> Vec<String> {
    match &q.aggregate {
        None => q.projection.clone(),
        Some((g, _)) => g.iter().cloned().chain(["cnt".to_string()]).collect(),
    }
}

fn escape(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

fn render_node(n: &N, ns: &Namespaces) -> String {
    match n {
        N::E(l) => format!("<{}>", ns.entity_iri(&EntityId::new(l).unwrap())),
        N::P(p) => format!("<{}>", ns.property_iri(p)),
        N::L(l) => format!("\"{}\"", escape(l)),
        N::I(i) => i.to_string(),
    }
}

fn render_slot(s: &Slot, ns: &Namespaces) -> String {
    match s {
        Slot::Var(v) => format!("?{v}"),
        Slot::Node(n) => render_node(n, ns),
    }
}

fn render_pat(p: &Pat, ns: &Namespaces) -> String {
    format!("{} {} {} .", render_slot(&p.s, ns), render_slot(&p.p, ns), render_slot(&p.o, ns))
}

pub fn render(q: &RandomQuery, ns: &Namespaces) -> String {
    let mut text = String::from("SELECT ");
    if q.distinct {
        text.push_str("DISTINCT ");
    }
    match &q.aggregate {
        None => {
            for v in &q.projection {
                text.push_str(&format!("?{v} "));
            }
        }
        Some((g, count)) => {
            if let Some(g) = g {
                text.push_str(&format!("?{g} "));
            }
            let arg = match count {
                Count::Star => "*".to_string(),
                Count::Var { var, distinct } => format!("{}?{var}", if *distinct { "DISTINCT " } else { "" }),
            };
            text.push_str(&format!("(COUNT({arg}) AS ?cnt) "));
        }
    }
    text.push_str("WHERE {\n");
    for p in &q.bgp {
        text.push_str(&format!("  {}\n", render_pat(p, ns)));
    }
    if let Some((var, vals)) = &q.values {
        let vs: Vec<String> = vals.iter().map(|v| render_node(v, ns)).collect();
        text.push_str(&format!("  VALUES ?{var} {{ {} }}\n", vs.join(" ")));
    }
    if let Some(p) = &q.optional {
        text.push_str(&format!("  OPTIONAL {{ {} }}\n", render_pat(p, ns)));
    }
    text.push('}');
    if let Some((Some(g), _)) = &q.aggregate {
        text.push_str(&format!("\nGROUP BY ?{g}"));
    }
    if let Some(l) = q.limit {
        text.push_str(&format!("\nLIMIT {l}"));
    }
    text
}

/// Engine output in the oracle's terms, columns reordered to `cols`.
pub fn table_rows(table: &ResultTable, cols: &[String]) -> Vec<Vec<Option<N>>> {
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| table.column(c).unwrap_or_else(|| panic!("missing column {c} in {:?}", table.vars)))
        .collect();
    table
        .rows
        .iter()
        .map(|r| {
            idx.iter()
                .map(|&i| {
                    r[i].as_ref().map(|v| match v {
                        ResultValue::Entity(l) => N::E(l.clone()),
                        ResultValue::Property(p) => N::P(p.clone()),
                        ResultValue::Literal(l) => N::L(l.clone()),
                        ResultValue::Integer(i) => N::I(*i),
                        other => panic!("unexpected value {other:?}"),
                    })
                })
                .collect()
        })
        .collect()
}

const NODE_VARS: [&str; 4] = ["a", "b", "c", "d"];
const PRED_VARS: [&str; 2] = ["p", "q"];

/// Generates a connected query whose constants are drawn from `triples`.
pub fn random_query(rng: &mut impl Rng, triples: &[Triple]) -> RandomQuery {
    let pick = |rng: &mut dyn RngCore| fact(&triples[rng.random_range(0..triples.len())]);
    let mut used: Vec<String> = Vec::new();
    let mut bgp = Vec::new();
    let n = rng.random_range(1..=3);
    for i in 0..n {
        let f = pick(rng);
        let node_slot = |rng: &mut dyn RngCore, pos: usize, used: &mut Vec<String>, force_var: bool| -> Slot {
            let value = &f[pos];
            let is_entity = matches!(value, N::E(_));
            if !force_var && rng.random_bool(0.3) {
                return Slot::Node(value.clone());
            }
            // Literal objects only bind fresh variables, never join on them.
            let reuse: Vec<&String> = used.iter().filter(|v| NODE_VARS.contains(&v.as_str())).collect();
            let v = if is_entity && !reuse.is_empty() && rng.random_bool(0.6) {
                reuse[rng.random_range(0..reuse.len())].clone()
            } else {
                NODE_VARS[rng.random_range(0..NODE_VARS.len())].to_string()
            };
            if !used.contains(&v) {
                used.push(v.clone());
            }
            Slot::Var(v)
        };
        let s = node_slot(rng, 0, &mut used, i > 0);
        let p = if rng.random_bool(0.25) {
            let v = PRED_VARS[rng.random_range(0..PRED_VARS.len())].to_string();
            if !used.contains(&v) {
                used.push(v.clone());
            }
            Slot::Var(v)
        } else {
            Slot::Node(f[1].clone())
        };
        let o = node_slot(rng, 2, &mut used, false);
        bgp.push(Pat { s, p, o });
    }
    if used.is_empty() {
        used.push("a".into());
        bgp[0].s = Slot::Var("a".into());
    }
    let node_used: Vec<String> = used.iter().filter(|v| NODE_VARS.contains(&v.as_str())).cloned().collect();

    let values = (!node_used.is_empty() && rng.random_bool(0.2)).then(|| {
        let var = node_used[rng.random_range(0..node_used.len())].clone();
        let mut vals: Vec<N> = (0..rng.random_range(1..=4)).map(|_| pick(rng)[0].clone()).collect();
        if rng.random_bool(0.3) {
            vals.push(N::E("Nobody at all".into()));
        }
        (var, vals)
    });
    let mut optional = None;
    let mut all_vars = used.clone();
    if !node_used.is_empty() && rng.random_bool(0.3) {
        let f = pick(rng);
        let s = Slot::Var(node_used[rng.random_range(0..node_used.len())].clone());
        let o = if rng.random_bool(0.5) {
            Slot::Var("z".into())
        } else {
            Slot::Node(f[2].clone())
        };
        let bound = match &o {
            Slot::Var(_) => Some("z".to_string()),
            Slot::Node(_) => None,
        };
        optional = Some(Pat {
            s,
            p: Slot::Node(f[1].clone()),
            o,
        });
        all_vars.extend(bound);
    }

    let mut q = RandomQuery {
        bgp,
        values,
        optional,
        distinct: false,
        projection: Vec::new(),
        aggregate: None,
        limit: None,
    };
    if rng.random_bool(0.3) {
        let group = (rng.random_bool(0.7)).then(|| used[rng.random_range(0..used.len())].clone());
        let count = if rng.random_bool(0.4) {
            Count::Star
        } else {
            Count::Var {
                var: all_vars[rng.random_range(0..all_vars.len())].clone(),
                distinct: rng.random_bool(0.5),
            }
        };
        q.aggregate = Some((group, count));
    } else {
        let mut proj: Vec<String> = all_vars.iter().filter(|_| rng.random_bool(0.7)).cloned().collect();
        if proj.is_empty() {
            proj.push(all_vars[0].clone());
        }
        q.projection = proj;
        q.distinct = rng.random_bool(0.4);
    }
    if rng.random_bool(0.2) {
        q.limit = Some(rng.random_range(0..20));
    }
    q
}

/// Compares engine rows with oracle rows: as multisets, or for `LIMIT`
/// queries, as a sub-multiset of the right size.
pub fn agrees(q: &RandomQuery, engine: &[Vec<Option<N>>], oracle: &[Vec<Option<N>>]) -> Result<(), String> {
    let mut e = engine.to_vec();
    let mut o = oracle.to_vec();
    e.sort();
    o.sort();
    match q.limit {
        None if e == o => Ok(()),
        None => Err(format!("engine {} rows, oracle {} rows", e.len(), o.len())),
        Some(l) => {
            if e.len() != l.min(o.len()) {
                return Err(format!("LIMIT {l}: engine {} rows, oracle {}", e.len(), o.len()));
            }
            let mut pool = o;
            for row in &e {
                match pool.iter().position(|r| r == row) {
                    Some(i) => {
                        pool.remove(i);
                    }
                    None => return Err(format!("row {row:?} not in oracle result")),
                }
            }
            Ok(())
        }
    }
}
