//! Rendering a relation graph back into a single SQL statement: one CTE per
//! non-trivial node in topological order, the root select inlined last.
//! Naming is deterministic (node names are content hashes), so rendering the
//! same graph always yields the same bytes.

mod dialect;

pub use dialect::Dialect;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::data_type::Value;
use crate::error::{Error, Result};
use crate::expr::{AggOp, Aggregate, Expr, Function};
use crate::relation::{topo_order, Join, JoinKind, Map, Reduce, Relation, SetOp, Values};

pub fn render(rel: &Arc<Relation>, dialect: &Dialect) -> Result<String> {
    let nodes = topo_order(rel);
    // Assign reference names: tables go by their own name, other nodes by
    // their generated name, de-duplicated structurally.
    let mut names: HashMap<*const Relation, String> = HashMap::new();
    let mut by_name: HashMap<String, Arc<Relation>> = HashMap::new();
    let mut ctes: Vec<Arc<Relation>> = Vec::new();
    let root_ptr = Arc::as_ptr(rel);
    for node in &nodes {
        let ptr = Arc::as_ptr(node);
        if let Relation::Table(t) = node.as_ref() {
            names.insert(ptr, t.name.clone());
            continue;
        }
        if ptr == root_ptr {
            continue;
        }
        let mut name = node.name().to_string();
        let mut suffix = 1usize;
        loop {
            match by_name.get(&name) {
                None => break,
                Some(existing) if existing.as_ref() == node.as_ref() => break,
                Some(_) => {
                    suffix += 1;
                    name = format!("{}_{suffix}", node.name());
                }
            }
        }
        if let Some(existing) = by_name.get(&name) {
            if existing.as_ref() == node.as_ref() {
                // Structurally identical subgraph: reuse the existing CTE.
                names.insert(ptr, name);
                continue;
            }
        }
        by_name.insert(name.clone(), node.clone());
        names.insert(ptr, name);
        ctes.push(node.clone());
    }

    let mut out = String::new();
    if !ctes.is_empty() {
        out.push_str("WITH ");
        for (i, node) in ctes.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let materialized = dialect.materialized_cte && node_has_random(node);
            let _ = write!(
                out,
                "{} AS {}({})",
                quote(&names[&Arc::as_ptr(node)]),
                if materialized { "MATERIALIZED " } else { "" },
                render_node(node, &names, dialect)?
            );
        }
        out.push(' ');
    }
    out.push_str(&render_node(rel, &names, dialect)?);
    Ok(out)
}

fn node_has_random(node: &Relation) -> bool {
    match node {
        Relation::Map(m) => {
            m.projections.iter().any(|(_, e)| e.contains_random())
                || m.filter.as_ref().is_some_and(Expr::contains_random)
        }
        _ => false,
    }
}

fn quote(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

fn render_node(
    node: &Arc<Relation>,
    names: &HashMap<*const Relation, String>,
    dialect: &Dialect,
) -> Result<String> {
    match node.as_ref() {
        Relation::Table(t) => Ok(format!("SELECT * FROM {}", quote(&t.name))),
        Relation::Map(m) => render_map(m, names, dialect),
        Relation::Reduce(r) => render_reduce(r, names, dialect),
        Relation::Join(j) => render_join(j, names, dialect),
        Relation::Values(v) => render_values(v, dialect),
        Relation::SetOp(s) => render_set_op(s, names, dialect),
    }
}

fn input_ref(input: &Arc<Relation>, names: &HashMap<*const Relation, String>) -> String {
    quote(&names[&Arc::as_ptr(input)])
}

/// `expr AS "name"`, dropping the alias when the expression is the column
/// itself.
fn aliased(expr_sql: String, name: &str, plain_column: bool) -> String {
    if plain_column && expr_sql == quote(name) {
        expr_sql
    } else {
        format!("{expr_sql} AS {}", quote(name))
    }
}

fn render_map(
    m: &Map,
    names: &HashMap<*const Relation, String>,
    dialect: &Dialect,
) -> Result<String> {
    let mut items = Vec::with_capacity(m.projections.len());
    for (name, expr) in &m.projections {
        let sql = render_expr(expr, dialect, &|c| quote(c))?;
        items.push(aliased(sql, name, matches!(expr, Expr::Column(_))));
    }
    let mut out = format!(
        "SELECT {} FROM {}",
        items.join(", "),
        input_ref(&m.input, names)
    );
    if let Some(f) = &m.filter {
        let _ = write!(out, " WHERE {}", render_expr(f, dialect, &|c| quote(c))?);
    }
    if !m.order_by.is_empty() {
        let hints: Vec<String> = m
            .order_by
            .iter()
            .map(|h| {
                Ok(format!(
                    "{} {}",
                    render_expr(&h.expr, dialect, &|c| quote(c))?,
                    if h.ascending { "ASC" } else { "DESC" }
                ))
            })
            .collect::<Result<_>>()?;
        let _ = write!(out, " ORDER BY {}", hints.join(", "));
    }
    if let Some(l) = m.limit {
        let _ = write!(out, " LIMIT {l}");
    }
    Ok(out)
}

fn render_aggregate(agg: &Aggregate, dialect: &Dialect) -> Result<String> {
    if agg.op == AggOp::Count && agg.arg == Expr::int(1) {
        return Ok("COUNT(*)".to_string());
    }
    Ok(format!(
        "{}({})",
        agg.op.name(),
        render_expr(&agg.arg, dialect, &|c| quote(c))?
    ))
}

fn render_reduce(
    r: &Reduce,
    names: &HashMap<*const Relation, String>,
    dialect: &Dialect,
) -> Result<String> {
    let mut items = Vec::new();
    let mut group_exprs = Vec::new();
    for (name, expr) in &r.group_by {
        let sql = render_expr(expr, dialect, &|c| quote(c))?;
        group_exprs.push(sql.clone());
        items.push(aliased(sql, name, matches!(expr, Expr::Column(_))));
    }
    for (name, agg) in &r.aggregates {
        items.push(format!("{} AS {}", render_aggregate(agg, dialect)?, quote(name)));
    }
    let mut out = format!(
        "SELECT {} FROM {}",
        items.join(", "),
        input_ref(&r.input, names)
    );
    if !group_exprs.is_empty() {
        let _ = write!(out, " GROUP BY {}", group_exprs.join(", "));
    }
    Ok(out)
}

fn render_join(
    j: &Join,
    names: &HashMap<*const Relation, String>,
    dialect: &Dialect,
) -> Result<String> {
    let split = j.left.schema().len();
    let fields = j.schema.fields();
    // Output column i maps back to a side and original column.
    let origin = |out_name: &str| -> Option<(bool, String)> {
        let idx = j.schema.index_of(out_name)?;
        if idx < split {
            Some((true, j.left.schema().fields()[idx].name.clone()))
        } else {
            Some((false, j.right.schema().fields()[idx - split].name.clone()))
        }
    };
    let column_ref = |c: &str| -> String {
        match origin(c) {
            Some((true, orig)) => format!("{}.{}", quote("_l"), quote(&orig)),
            Some((false, orig)) => format!("{}.{}", quote("_r"), quote(&orig)),
            None => quote(c),
        }
    };
    let mut items = Vec::with_capacity(fields.len());
    for f in fields {
        let (is_left, orig) = origin(&f.name).expect("join schema column");
        let side = if is_left { "_l" } else { "_r" };
        items.push(format!(
            "{}.{} AS {}",
            quote(side),
            quote(&orig),
            quote(&f.name)
        ));
    }
    let mut out = format!(
        "SELECT {} FROM {} AS {} ",
        items.join(", "),
        input_ref(&j.left, names),
        quote("_l")
    );
    match j.kind {
        JoinKind::Cross => {
            let _ = write!(out, "CROSS JOIN {} AS {}", input_ref(&j.right, names), quote("_r"));
        }
        kind => {
            let kw = match kind {
                JoinKind::Inner => "INNER JOIN",
                JoinKind::Left => "LEFT JOIN",
                JoinKind::Right => "RIGHT JOIN",
                JoinKind::Full => "FULL JOIN",
                JoinKind::Cross => unreachable!(),
            };
            let _ = write!(
                out,
                "{kw} {} AS {} ON {}",
                input_ref(&j.right, names),
                quote("_r"),
                render_expr(&j.on, dialect, &column_ref)?
            );
        }
    }
    Ok(out)
}

fn render_values(v: &Values, dialect: &Dialect) -> Result<String> {
    let mut arms = Vec::with_capacity(v.rows.len());
    for (ri, row) in v.rows.iter().enumerate() {
        let mut cols = Vec::with_capacity(row.len());
        for (ci, value) in row.iter().enumerate() {
            let lit = render_literal(value);
            if ri == 0 {
                cols.push(format!("{lit} AS {}", quote(&v.schema.fields()[ci].name)));
            } else {
                cols.push(lit);
            }
        }
        arms.push(format!("SELECT {}", cols.join(", ")));
    }
    let _ = dialect;
    Ok(arms.join(" UNION ALL "))
}

fn render_set_op(
    s: &SetOp,
    names: &HashMap<*const Relation, String>,
    dialect: &Dialect,
) -> Result<String> {
    let _ = dialect;
    let side = |rel: &Arc<Relation>| -> String {
        let cols: Vec<String> = rel.schema().names().into_iter().map(quote).collect();
        format!("SELECT {} FROM {}", cols.join(", "), input_ref(rel, names))
    };
    Ok(format!(
        "{} {}{} {}",
        side(&s.left),
        s.kind.name(),
        if s.all { " ALL" } else { "" },
        side(&s.right)
    ))
}

fn render_literal(value: &Value) -> String {
    match value {
        Value::Null => "NULL".to_string(),
        Value::Boolean(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => format!("{f:?}"),
        Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
    }
}

fn infix_name(func: Function) -> Option<&'static str> {
    Some(match func {
        Function::Plus => "+",
        Function::Minus => "-",
        Function::Multiply => "*",
        Function::Divide => "/",
        Function::Eq => "=",
        Function::NotEq => "<>",
        Function::Lt => "<",
        Function::LtEq => "<=",
        Function::Gt => ">",
        Function::GtEq => ">=",
        Function::And => "AND",
        Function::Or => "OR",
        _ => return None,
    })
}

pub(crate) fn render_expr(
    expr: &Expr,
    dialect: &Dialect,
    column_ref: &dyn Fn(&str) -> String,
) -> Result<String> {
    Ok(match expr {
        Expr::Column(c) => column_ref(c),
        Expr::Literal(v) => render_literal(v),
        Expr::Function(func, args) => {
            let rendered: Vec<String> = args
                .iter()
                .map(|a| render_expr(a, dialect, column_ref))
                .collect::<Result<_>>()?;
            match func {
                Function::Case => format!(
                    "CASE WHEN {} THEN {} ELSE {} END",
                    rendered[0], rendered[1], rendered[2]
                ),
                Function::InList => {
                    format!("({} IN ({}))", rendered[0], rendered[1..].join(", "))
                }
                Function::IsNull => format!("({} IS NULL)", rendered[0]),
                Function::Not => format!("(NOT {})", rendered[0]),
                Function::Neg => format!("(- {})", rendered[0]),
                Function::CastText => {
                    format!("CAST({} AS {})", rendered[0], dialect.cast_text)
                }
                Function::CastInteger => {
                    format!("CAST({} AS {})", rendered[0], dialect.cast_integer)
                }
                Function::CastFloat => {
                    format!("CAST({} AS {})", rendered[0], dialect.cast_float)
                }
                Function::RandomUniform => dialect
                    .uniform_random
                    .ok_or_else(|| {
                        Error::rewriting(format!(
                            "dialect {:?} has no uniform-random primitive",
                            dialect.name
                        ))
                    })?
                    .to_string(),
                Function::Least => format!("{}({})", dialect.least, rendered.join(", ")),
                Function::Greatest => format!("{}({})", dialect.greatest, rendered.join(", ")),
                Function::Ln => format!("{}({})", dialect.natural_log, rendered[0]),
                Function::Sqrt => format!("{}({})", dialect.square_root, rendered[0]),
                other => match infix_name(*other) {
                    Some(op) => format!("({} {op} {})", rendered[0], rendered[1]),
                    None => format!("{}({})", other.name(), rendered.join(", ")),
                },
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::frontend::{bind, parse};

    fn catalog() -> Catalog {
        Catalog::from_json(
            r#"{
            "tables": [
                {"name": "t", "columns": [
                    {"name": "a", "type": "integer"},
                    {"name": "x", "type": "float", "min": 0, "max": 1}
                ], "visibility": "public"},
                {"name": "u", "columns": [
                    {"name": "a", "type": "integer"},
                    {"name": "y", "type": "float"}
                ], "visibility": "public"}
            ]
        }"#,
        )
        .unwrap()
    }

    fn round_trip(sql: &str) {
        let cat = catalog();
        let rel = bind(&parse(sql).unwrap(), &cat, None).unwrap();
        let rendered = render(&rel, &Dialect::generic()).unwrap();
        let rebound = bind(&parse(&rendered).unwrap(), &cat, None)
            .unwrap_or_else(|e| panic!("rendered SQL failed to bind: {e}\n{rendered}"));
        assert!(
            rel.structurally_eq(&rebound),
            "round trip changed the graph:\n  sql: {sql}\n  rendered: {rendered}\n  before: {rel}\n  after: {rebound}"
        );
        // And rendering is a fixpoint.
        assert_eq!(rendered, render(&rebound, &Dialect::generic()).unwrap());
    }

    #[test]
    fn table_renders_plainly() {
        let cat = catalog();
        let rel = bind(&parse("SELECT * FROM t").unwrap(), &cat, None).unwrap();
        assert_eq!(render(&rel, &Dialect::generic()).unwrap(), "SELECT * FROM \"t\"");
    }

    #[test]
    fn map_over_table_single_statement() {
        let cat = catalog();
        let rel = bind(&parse("SELECT a FROM t WHERE a > 0").unwrap(), &cat, None).unwrap();
        let sql = render(&rel, &Dialect::generic()).unwrap();
        assert_eq!(sql, "SELECT \"a\" FROM \"t\" WHERE (\"a\" > 0)");
    }

    #[test]
    fn round_trips() {
        round_trip("SELECT a FROM t WHERE a > 0");
        round_trip("SELECT a, x FROM t WHERE x > 0.5 AND a IN (1, 2, 3) LIMIT 10");
        round_trip("SELECT a, sum(x) AS s FROM t GROUP BY a");
        round_trip("SELECT t.a, u.y FROM t JOIN u ON t.a = u.a");
        round_trip("SELECT a FROM t UNION ALL SELECT a FROM u");
        round_trip("SELECT DISTINCT a FROM t");
        round_trip("WITH w AS (SELECT a, x FROM t WHERE x > 0.1) SELECT a, count(*) AS n FROM w GROUP BY a");
        round_trip("SELECT 1 AS one");
        round_trip("SELECT CASE WHEN x > 0.5 THEN 1 ELSE 0 END AS ind FROM t");
        round_trip("SELECT a FROM t ORDER BY a DESC LIMIT 3");
    }

    #[test]
    fn dialect_without_uniform_errors_on_noise() {
        let e = Expr::f(Function::RandomUniform, vec![]);
        let mut d = Dialect::generic();
        d.uniform_random = None;
        let err = render_expr(&e, &d, &|c| quote(c)).unwrap_err();
        assert!(err.to_string().contains("uniform-random"));
    }

    #[test]
    fn embedded_dialect_binds_primitives() {
        let e = Expr::f(
            Function::Greatest,
            vec![Expr::int(1), Expr::f(Function::RandomUniform, vec![])],
        );
        let sql = render_expr(&e, &Dialect::embedded(), &|c| quote(c)).unwrap();
        assert_eq!(sql, "MAX(1, QRW_UNIFORM())");
    }
}
