//! SQL frontend: parsing into an AST and binding against a catalog.

mod bind;

pub(crate) use bind::map_or_input;

use std::sync::Arc;

use sqlparser::dialect::GenericDialect;
use sqlparser::parser::Parser;

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::privacy_unit::PrivacyUnitDefinition;
use crate::relation::Relation;

/// A parsed query, structurally faithful to the input text.
#[derive(Clone, Debug, PartialEq)]
pub struct Ast {
    pub(crate) query: Box<sqlparser::ast::Query>,
}

/// Parse one SQL statement of the supported subset.
pub fn parse(sql: &str) -> Result<Ast> {
    let statements = Parser::parse_sql(&GenericDialect {}, sql)
        .map_err(|e| Error::parse(e.to_string()))?;
    let mut statements = statements.into_iter();
    let first = statements
        .next()
        .ok_or_else(|| Error::parse("empty input"))?;
    if statements.next().is_some() {
        return Err(Error::unsupported("multiple statements"));
    }
    match first {
        sqlparser::ast::Statement::Query(query) => Ok(Ast { query }),
        other => Err(Error::unsupported(format!(
            "only SELECT queries are supported, got {}",
            statement_kind(&other)
        ))),
    }
}

fn statement_kind(stmt: &sqlparser::ast::Statement) -> &'static str {
    use sqlparser::ast::Statement::*;
    match stmt {
        Insert { .. } => "INSERT",
        Update { .. } => "UPDATE",
        Delete { .. } => "DELETE",
        CreateTable { .. } => "CREATE TABLE",
        Drop { .. } => "DROP",
        _ => "a non-query statement",
    }
}

/// Bind a parsed query against the catalog, producing a relation DAG.
///
/// When a privacy unit definition is supplied, private tables that are
/// covered by no entry and have no synthetic twin are rejected here.
pub fn bind(
    ast: &Ast,
    catalog: &Catalog,
    privacy_unit: Option<&PrivacyUnitDefinition>,
) -> Result<Arc<Relation>> {
    bind::Binder::new(catalog, privacy_unit).bind(ast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::SetOpKind;

    fn catalog() -> Catalog {
        Catalog::from_json(
            r#"{
            "tables": [
                {"name": "table_1", "columns": [
                    {"name": "a", "type": "integer"},
                    {"name": "b", "type": "float"}
                ], "visibility": "private"},
                {"name": "t", "columns": [
                    {"name": "a", "type": "integer", "min": -10, "max": 10},
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

    fn bind_sql(sql: &str) -> Arc<Relation> {
        bind(&parse(sql).unwrap(), &catalog(), None).unwrap()
    }

    #[test]
    fn select_literal() {
        let rel = bind_sql("SELECT 1");
        let Relation::Values(v) = rel.as_ref() else { panic!("expected Values") };
        assert_eq!(v.rows, vec![vec![crate::data_type::Value::Integer(1)]]);
    }

    #[test]
    fn simple_filter_becomes_map() {
        let rel = bind_sql("SELECT a FROM t WHERE a > 0");
        let Relation::Map(m) = rel.as_ref() else { panic!("expected Map") };
        assert!(m.filter.is_some());
        assert_eq!(rel.schema().names(), vec!["a"]);
        assert_eq!(
            rel.schema().field("a").unwrap().data_type.to_string(),
            "integer[0, 10]"
        );
    }

    #[test]
    fn select_star_collapses_to_table() {
        let rel = bind_sql("SELECT * FROM t");
        assert!(matches!(rel.as_ref(), Relation::Table(_)));
    }

    #[test]
    fn group_by_query_structure() {
        // the running example: filter + IN-list + grouped count
        let rel = bind_sql(
            "SELECT a, count(abs(10*a+b)) AS x FROM table_1 WHERE b > -0.1 AND a IN (1,2,3) GROUP BY a",
        );
        let Relation::Reduce(r) = rel.as_ref() else { panic!("expected Reduce") };
        assert_eq!(rel.schema().names(), vec!["a", "x"]);
        let Relation::Map(pre) = r.input.as_ref() else { panic!("expected pre-Map") };
        assert!(pre.filter.is_some());
        // ranges propagated through the filtered Map
        assert_eq!(
            pre.schema.field("a").unwrap().data_type.to_string(),
            "integer{1, 2, 3}"
        );
        let arg = pre.schema.fields().iter().find(|f| f.name != "a").unwrap();
        let iv = arg.data_type.interval().unwrap();
        assert!((iv.min().unwrap() - 9.9).abs() < 1e-9);
        // count output is a non-negative integer
        assert_eq!(rel.schema().field("x").unwrap().data_type.kind(), "integer");
    }

    #[test]
    fn cte_and_join() {
        let rel = bind_sql("WITH w AS (SELECT a FROM u) SELECT * FROM w JOIN t ON w.a = t.a");
        let Relation::Join(j) = rel.as_ref() else { panic!("expected Join, got {rel}") };
        let Relation::Map(_) = j.left.as_ref() else { panic!("expected CTE Map") };
        assert_eq!(j.right.name(), "t");
    }

    #[test]
    fn union_becomes_set_op() {
        let rel = bind_sql("SELECT a FROM t UNION SELECT a FROM u");
        let Relation::SetOp(s) = rel.as_ref() else { panic!("expected SetOp") };
        assert_eq!(s.kind, SetOpKind::Union);
        assert!(!s.all);
    }

    #[test]
    fn distinct_becomes_reduce() {
        let rel = bind_sql("SELECT DISTINCT a FROM t");
        let Relation::Reduce(r) = rel.as_ref() else { panic!("expected Reduce") };
        assert!(r.aggregates.is_empty());
        assert_eq!(r.group_by.len(), 1);
    }

    #[test]
    fn mixed_select_list_splits_into_post_map() {
        let rel = bind_sql("SELECT a, sum(x) / count(*) AS ratio FROM t GROUP BY a");
        let Relation::Map(post) = rel.as_ref() else { panic!("expected post Map") };
        assert!(matches!(post.input.as_ref(), Relation::Reduce(_)));
        assert_eq!(rel.schema().names(), vec!["a", "ratio"]);
    }

    #[test]
    fn having_binds_against_aggregates() {
        let rel = bind_sql("SELECT a FROM t GROUP BY a HAVING count(*) > 2");
        let Relation::Map(post) = rel.as_ref() else { panic!("expected post Map") };
        assert!(post.filter.is_some());
        assert_eq!(rel.schema().names(), vec!["a"]);
    }

    #[test]
    fn shared_table_binds_to_one_node() {
        let rel = bind_sql("SELECT * FROM t t1 JOIN t t2 ON t1.a = t2.a");
        let Relation::Join(j) = rel.as_ref() else { panic!() };
        assert!(Arc::ptr_eq(&j.left, &j.right));
        assert_eq!(rel.schema().names().len(), 4);
    }

    #[test]
    fn errors_are_specific() {
        let cat = catalog();
        let err = |sql: &str| bind(&parse(sql).unwrap(), &cat, None).unwrap_err().to_string();
        assert!(err("SELECT nope FROM t").contains("unknown column"));
        assert!(err("SELECT a FROM missing").contains("unknown table"));
        assert!(err("SELECT a FROM t JOIN u ON t.a = u.a").contains("ambiguous"));
        assert!(err("SELECT sum(sum(x)) FROM t").contains("nested aggregates"));
        assert!(err("SELECT rank() OVER () FROM t").contains("window functions"));
        assert!(err("SELECT x FROM t GROUP BY a").contains("GROUP BY"));
        assert!(parse("SELEC 1").unwrap_err().to_string().contains("Expected"));
    }

    #[test]
    fn order_by_in_subquery_rejected() {
        let cat = catalog();
        let e = bind(
            &parse("SELECT a FROM (SELECT a FROM t ORDER BY a) sub").unwrap(),
            &cat,
            None,
        )
        .unwrap_err();
        assert!(e.to_string().contains("ORDER BY"));
        // top-level ORDER BY is fine and kept as a hint
        let rel = bind_sql("SELECT a FROM t ORDER BY a DESC LIMIT 3");
        let Relation::Map(m) = rel.as_ref() else { panic!() };
        assert_eq!(m.limit, Some(3));
        assert_eq!(m.order_by.len(), 1);
        assert!(!m.order_by[0].ascending);
    }

    #[test]
    fn scalar_subquery_cross_joins() {
        let rel = bind_sql("SELECT x - (SELECT avg(x) FROM t) AS centered FROM t");
        assert_eq!(rel.schema().names(), vec!["centered"]);
        let Relation::Map(m) = rel.as_ref() else { panic!() };
        let Relation::Join(j) = m.input.as_ref() else { panic!("expected cross join") };
        assert_eq!(j.kind, crate::relation::JoinKind::Cross);
    }

    #[test]
    fn binding_is_deterministic() {
        let sql = "SELECT a, count(*) AS n FROM table_1 WHERE b > 0 GROUP BY a";
        let a = bind_sql(sql);
        let b = bind_sql(sql);
        assert_eq!(a, b);
        assert_eq!(a.name(), b.name());
    }
}
