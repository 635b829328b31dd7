//! Binding: lowering the SQL AST into the normalized relation IR.
//!
//! Every SELECT..WHERE..LIMIT becomes a Map, every GROUP BY / aggregate
//! becomes a Reduce (with a Map above when the select list mixes grouping
//! keys and post-aggregation expressions), joins become Join nodes, and CTEs
//! and subqueries become shared subgraphs. Identity Maps are collapsed so
//! rendering and re-binding are mutually inverse.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use sqlparser::ast as sql;

use crate::catalog::Catalog;
use crate::data_type::Value;
use crate::error::{Error, Result};
use crate::expr::{AggOp, Aggregate, Expr, Function};
use crate::privacy_unit::PrivacyUnitDefinition;
use crate::relation::{JoinKind, OrderByHint, Relation, SetOpKind, Visibility};

use super::Ast;

pub(super) struct Binder<'a> {
    catalog: &'a Catalog,
    privacy_unit: Option<&'a PrivacyUnitDefinition>,
    table_cache: BTreeMap<String, Arc<Relation>>,
}

/// Tables visible through WITH, innermost layer last.
type CteEnv = Vec<BTreeMap<String, Arc<Relation>>>;

/// One FROM item: a qualifier and its visible columns, each mapped to the
/// (possibly disambiguated) column name in the current relation.
struct ScopeItem {
    qualifier: String,
    columns: Vec<(String, String)>,
}

struct Scope {
    relation: Arc<Relation>,
    items: Vec<ScopeItem>,
}

impl Scope {
    fn resolve(&self, qualifier: Option<&str>, name: &str) -> Result<String> {
        match qualifier {
            Some(q) => {
                let item = self
                    .items
                    .iter()
                    .find(|i| i.qualifier == q)
                    .ok_or_else(|| Error::bind(format!("unknown table or alias {q:?}")))?;
                item.columns
                    .iter()
                    .find(|(vis, _)| vis == name)
                    .map(|(_, actual)| actual.clone())
                    .ok_or_else(|| Error::bind(format!("unknown column {q:?}.{name:?}")))
            }
            None => {
                let mut found: Option<String> = None;
                for item in &self.items {
                    for (vis, actual) in &item.columns {
                        if vis == name {
                            if found.is_some() {
                                return Err(Error::bind(format!("ambiguous column {name:?}")));
                            }
                            found = Some(actual.clone());
                        }
                    }
                }
                found.ok_or_else(|| Error::bind(format!("unknown column {name:?}")))
            }
        }
    }
}

fn ident_name(ident: &sql::Ident) -> String {
    match ident.quote_style {
        Some(_) => ident.value.clone(),
        None => ident.value.to_lowercase(),
    }
}

fn object_name(name: &sql::ObjectName) -> String {
    name.0
        .iter()
        .map(ident_name)
        .collect::<Vec<_>>()
        .join(".")
}

fn parse_number(repr: &str) -> Result<Value> {
    if repr.contains(['.', 'e', 'E']) {
        repr.parse::<f64>()
            .map(Value::Float)
            .map_err(|_| Error::parse(format!("bad numeric literal {repr:?}")))
    } else {
        repr.parse::<i64>()
            .map(Value::Integer)
            .or_else(|_| repr.parse::<f64>().map(Value::Float))
            .map_err(|_| Error::parse(format!("bad numeric literal {repr:?}")))
    }
}

fn value_literal(v: &sql::Value) -> Result<Value> {
    match v {
        sql::Value::Number(repr, _) => parse_number(repr),
        sql::Value::SingleQuotedString(s) | sql::Value::DoubleQuotedString(s) => {
            Ok(Value::Text(s.clone()))
        }
        sql::Value::Boolean(b) => Ok(Value::Boolean(*b)),
        sql::Value::Null => Ok(Value::Null),
        other => Err(Error::unsupported(format!("literal {other}"))),
    }
}

fn aggregate_op(name: &str) -> Option<AggOp> {
    match name {
        "count" => Some(AggOp::Count),
        "sum" => Some(AggOp::Sum),
        "avg" => Some(AggOp::Avg),
        "variance" | "var_samp" | "var" => Some(AggOp::Variance),
        "stddev" | "stddev_samp" | "std" => Some(AggOp::Stddev),
        "min" => Some(AggOp::Min),
        "max" => Some(AggOp::Max),
        _ => None,
    }
}

fn scalar_function(name: &str) -> Option<Function> {
    match name {
        "abs" => Some(Function::Abs),
        "exp" => Some(Function::Exp),
        "ln" | "log" => Some(Function::Ln),
        "sqrt" => Some(Function::Sqrt),
        "sin" => Some(Function::Sin),
        "cos" => Some(Function::Cos),
        "least" => Some(Function::Least),
        "greatest" => Some(Function::Greatest),
        "random" | "qrw_uniform" => Some(Function::RandomUniform),
        _ => None,
    }
}

/// Does this AST expression contain an aggregate function call?
fn contains_aggregate(expr: &sql::Expr) -> bool {
    use sql::Expr as E;
    match expr {
        E::Function(f) => {
            if f.over.is_none() && aggregate_op(&object_name(&f.name).to_lowercase()).is_some() {
                return true;
            }
            match &f.args {
                sql::FunctionArguments::List(list) => list.args.iter().any(|a| match a {
                    sql::FunctionArg::Unnamed(sql::FunctionArgExpr::Expr(e)) => {
                        contains_aggregate(e)
                    }
                    _ => false,
                }),
                _ => false,
            }
        }
        E::BinaryOp { left, right, .. } => contains_aggregate(left) || contains_aggregate(right),
        E::UnaryOp { expr, .. } | E::Nested(expr) | E::IsNull(expr) | E::IsNotNull(expr) => {
            contains_aggregate(expr)
        }
        E::Cast { expr, .. } => contains_aggregate(expr),
        E::InList { expr, list, .. } => {
            contains_aggregate(expr) || list.iter().any(contains_aggregate)
        }
        E::Between { expr, low, high, .. } => {
            contains_aggregate(expr) || contains_aggregate(low) || contains_aggregate(high)
        }
        E::Case { operand, conditions, results, else_result } => {
            operand.as_deref().map_or(false, contains_aggregate)
                || conditions.iter().any(contains_aggregate)
                || results.iter().any(contains_aggregate)
                || else_result.as_deref().map_or(false, contains_aggregate)
        }
        _ => false,
    }
}

/// Collect scalar subqueries appearing anywhere in an expression.
fn collect_subqueries<'e>(expr: &'e sql::Expr, out: &mut Vec<&'e sql::Query>) {
    use sql::Expr as E;
    match expr {
        E::Subquery(q) => out.push(q),
        E::BinaryOp { left, right, .. } => {
            collect_subqueries(left, out);
            collect_subqueries(right, out);
        }
        E::UnaryOp { expr, .. } | E::Nested(expr) | E::IsNull(expr) | E::IsNotNull(expr) => {
            collect_subqueries(expr, out)
        }
        E::Cast { expr, .. } => collect_subqueries(expr, out),
        E::InList { expr, list, .. } => {
            collect_subqueries(expr, out);
            list.iter().for_each(|e| collect_subqueries(e, out));
        }
        E::Between { expr, low, high, .. } => {
            collect_subqueries(expr, out);
            collect_subqueries(low, out);
            collect_subqueries(high, out);
        }
        E::Case { operand, conditions, results, else_result } => {
            if let Some(e) = operand {
                collect_subqueries(e, out);
            }
            conditions.iter().for_each(|e| collect_subqueries(e, out));
            results.iter().for_each(|e| collect_subqueries(e, out));
            if let Some(e) = else_result {
                collect_subqueries(e, out);
            }
        }
        E::Function(f) => {
            if let sql::FunctionArguments::List(list) = &f.args {
                for a in &list.args {
                    if let sql::FunctionArg::Unnamed(sql::FunctionArgExpr::Expr(e)) = a {
                        collect_subqueries(e, out);
                    }
                }
            }
        }
        _ => {}
    }
}

impl<'a> Binder<'a> {
    pub(super) fn new(
        catalog: &'a Catalog,
        privacy_unit: Option<&'a PrivacyUnitDefinition>,
    ) -> Binder<'a> {
        Binder { catalog, privacy_unit, table_cache: BTreeMap::new() }
    }

    pub(super) fn bind(&mut self, ast: &Ast) -> Result<Arc<Relation>> {
        let mut env: CteEnv = Vec::new();
        self.bind_query(&ast.query, &mut env, true)
    }

    fn bind_query(
        &mut self,
        query: &sql::Query,
        env: &mut CteEnv,
        top_level: bool,
    ) -> Result<Arc<Relation>> {
        if query.offset.is_some() || query.fetch.is_some() || !query.limit_by.is_empty() {
            return Err(Error::unsupported("OFFSET / FETCH / LIMIT BY"));
        }
        if !query.locks.is_empty() || query.for_clause.is_some() {
            return Err(Error::unsupported("FOR UPDATE / FOR XML"));
        }
        let mut pushed = false;
        if let Some(with) = &query.with {
            if with.recursive {
                return Err(Error::unsupported("recursive CTEs"));
            }
            env.push(BTreeMap::new());
            pushed = true;
            for cte in &with.cte_tables {
                if cte.from.is_some() {
                    return Err(Error::unsupported("CTE FROM clause"));
                }
                let name = ident_name(&cte.alias.name);
                let rel = self.bind_query(&cte.query, env, false)?;
                let rel = if cte.alias.columns.is_empty() {
                    rel
                } else {
                    // WITH t(a, b) AS (...) renames the output columns.
                    if cte.alias.columns.len() != rel.schema().len() {
                        if pushed {
                            env.pop();
                        }
                        return Err(Error::bind(format!(
                            "CTE {name:?} declares {} columns but its query produces {}",
                            cte.alias.columns.len(),
                            rel.schema().len()
                        )));
                    }
                    let projections = cte
                        .alias
                        .columns
                        .iter()
                        .zip(rel.schema().names())
                        .map(|(alias, actual)| {
                            (ident_name(alias), Expr::col(actual))
                        })
                        .collect();
                    map_or_input(projections, None, vec![], None, rel)?
                };
                env.last_mut().unwrap().insert(name, rel);
            }
        }
        let result = self.bind_query_body(query, env, top_level);
        if pushed {
            env.pop();
        }
        result
    }

    fn bind_query_body(
        &mut self,
        query: &sql::Query,
        env: &mut CteEnv,
        top_level: bool,
    ) -> Result<Arc<Relation>> {
        let rel = self.bind_set_expr(&query.body, env)?;

        let limit = match &query.limit {
            None => None,
            Some(sql::Expr::Value(sql::Value::Number(repr, _))) => {
                let n = repr
                    .parse::<u64>()
                    .map_err(|_| Error::bind(format!("LIMIT must be a non-negative integer, got {repr}")))?;
                Some(n)
            }
            Some(other) => {
                return Err(Error::unsupported(format!("non-literal LIMIT {other}")))
            }
        };
        let order_by = match &query.order_by {
            None => vec![],
            Some(ob) => {
                if !top_level {
                    return Err(Error::unsupported(
                        "ORDER BY inside a subquery or CTE (only top-level ORDER BY is accepted)",
                    ));
                }
                if ob.interpolate.is_some() {
                    return Err(Error::unsupported("ORDER BY INTERPOLATE"));
                }
                let scope = output_scope(&rel);
                ob.exprs
                    .iter()
                    .map(|o| {
                        if o.with_fill.is_some() {
                            return Err(Error::unsupported("ORDER BY WITH FILL"));
                        }
                        let expr = match &o.expr {
                            sql::Expr::Value(sql::Value::Number(repr, _)) => {
                                let idx: usize = repr.parse().map_err(|_| {
                                    Error::bind(format!("bad ORDER BY ordinal {repr}"))
                                })?;
                                let names = rel.schema().names();
                                let name = names.get(idx.wrapping_sub(1)).ok_or_else(|| {
                                    Error::bind(format!("ORDER BY ordinal {idx} out of range"))
                                })?;
                                Expr::col(*name)
                            }
                            other => self.bind_expr(other, &scope, env)?,
                        };
                        Ok(OrderByHint { expr, ascending: o.asc.unwrap_or(true) })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };

        if limit.is_none() && order_by.is_empty() {
            return Ok(rel);
        }
        // Attach to the existing Map when possible, otherwise wrap.
        if let Relation::Map(m) = rel.as_ref() {
            if m.limit.is_none() && m.order_by.is_empty() {
                return Ok(Arc::new(Relation::map(
                    m.projections.clone(),
                    m.filter.clone(),
                    order_by,
                    limit,
                    m.input.clone(),
                )?));
            }
        }
        let projections = rel
            .schema()
            .names()
            .into_iter()
            .map(|n| (n.to_string(), Expr::col(n)))
            .collect();
        Ok(Arc::new(Relation::map(projections, None, order_by, limit, rel)?))
    }

    fn bind_set_expr(&mut self, body: &sql::SetExpr, env: &mut CteEnv) -> Result<Arc<Relation>> {
        match body {
            sql::SetExpr::Select(select) => self.bind_select(select, env),
            sql::SetExpr::Query(query) => self.bind_query(query, env, false),
            sql::SetExpr::SetOperation { op, set_quantifier, left, right } => {
                let all = match set_quantifier {
                    sql::SetQuantifier::All => true,
                    sql::SetQuantifier::None | sql::SetQuantifier::Distinct => false,
                    other => {
                        return Err(Error::unsupported(format!("set quantifier {other}")))
                    }
                };
                let kind = match op {
                    sql::SetOperator::Union => SetOpKind::Union,
                    sql::SetOperator::Intersect => SetOpKind::Intersect,
                    sql::SetOperator::Except => SetOpKind::Except,
                };
                let left = self.bind_set_expr(left, env)?;
                let right = self.bind_set_expr(right, env)?;
                Ok(Arc::new(Relation::set_op(kind, all, left, right)?))
            }
            sql::SetExpr::Values(values) => self.bind_values(values),
            other => Err(Error::unsupported(format!("query body {other}"))),
        }
    }

    fn bind_values(&mut self, values: &sql::Values) -> Result<Arc<Relation>> {
        let rows: Vec<Vec<Value>> = values
            .rows
            .iter()
            .map(|row| row.iter().map(|e| literal_expr(e)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let width = rows.first().map_or(0, Vec::len);
        let columns = (0..width).map(|i| format!("field_{i}")).collect();
        Ok(Arc::new(Relation::values(columns, rows)?))
    }

    fn bind_select(&mut self, select: &sql::Select, env: &mut CteEnv) -> Result<Arc<Relation>> {
        if select.top.is_some() || select.into.is_some() {
            return Err(Error::unsupported("SELECT TOP / SELECT INTO"));
        }
        if !select.lateral_views.is_empty() || select.prewhere.is_some() {
            return Err(Error::unsupported("LATERAL VIEW / PREWHERE"));
        }
        if !select.cluster_by.is_empty()
            || !select.distribute_by.is_empty()
            || !select.sort_by.is_empty()
        {
            return Err(Error::unsupported("CLUSTER BY / DISTRIBUTE BY / SORT BY"));
        }
        if !select.named_window.is_empty() || select.qualify.is_some() {
            return Err(Error::unsupported("window clauses / QUALIFY"));
        }
        if let Some(sql::Distinct::On(_)) = select.distinct {
            return Err(Error::unsupported("DISTINCT ON"));
        }

        // FROM-less SELECT: literal projections become a one-row Values.
        if select.from.is_empty() {
            return self.bind_select_without_from(select);
        }

        let mut scope = self.bind_from(&select.from, env)?;

        // Scalar subqueries get bound once and cross-joined into the scope;
        // the expression site then refers to the joined column.
        let mut subqueries: Vec<&sql::Query> = Vec::new();
        for item in &select.projection {
            match item {
                sql::SelectItem::UnnamedExpr(e) | sql::SelectItem::ExprWithAlias { expr: e, .. } => {
                    collect_subqueries(e, &mut subqueries)
                }
                _ => {}
            }
        }
        if let Some(e) = &select.selection {
            collect_subqueries(e, &mut subqueries);
        }
        if let Some(e) = &select.having {
            collect_subqueries(e, &mut subqueries);
        }
        if let sql::GroupByExpr::Expressions(exprs, _) = &select.group_by {
            exprs.iter().for_each(|e| collect_subqueries(e, &mut subqueries));
        }
        let mut subquery_cols: HashMap<*const sql::Query, String> = HashMap::new();
        for (i, sq) in subqueries.iter().enumerate() {
            let rel = self.bind_query(sq, env, false)?;
            if rel.schema().len() != 1 {
                return Err(Error::bind(format!(
                    "scalar subquery must produce exactly one column, got {}",
                    rel.schema().len()
                )));
            }
            let qualifier = format!("_qrw_sq{i}");
            let col = rel.schema().names()[0].to_string();
            scope = self.join_scope(
                scope,
                rel,
                qualifier.clone(),
                vec![col],
                JoinKind::Cross,
                &sql::JoinConstraint::None,
                env,
            )?;
            let actual = scope.items.last().unwrap().columns[0].1.clone();
            subquery_cols.insert(*sq as *const sql::Query, actual);
        }
        let subquery_cols = subquery_cols; // frozen

        let filter = select
            .selection
            .as_ref()
            .map(|e| self.bind_expr_sq(e, &scope, env, &subquery_cols))
            .transpose()?;

        // Expand wildcards into plain column references up front.
        enum Item<'e> {
            Bound(String, Expr),
            Ast(Option<String>, &'e sql::Expr),
        }
        let mut items: Vec<Item> = Vec::new();
        for item in &select.projection {
            match item {
                sql::SelectItem::Wildcard(opts) => {
                    check_wildcard_options(opts)?;
                    for it in &scope.items {
                        for (_, actual) in &it.columns {
                            items.push(Item::Bound(actual.clone(), Expr::col(actual)));
                        }
                    }
                }
                sql::SelectItem::QualifiedWildcard(name, opts) => {
                    check_wildcard_options(opts)?;
                    let q = object_name(name);
                    let it = scope
                        .items
                        .iter()
                        .find(|i| i.qualifier == q)
                        .ok_or_else(|| Error::bind(format!("unknown table or alias {q:?}")))?;
                    for (vis, actual) in &it.columns {
                        items.push(Item::Bound(vis.clone(), Expr::col(actual)));
                    }
                }
                sql::SelectItem::UnnamedExpr(e) => {
                    let name = match e {
                        sql::Expr::Identifier(id) => Some(ident_name(id)),
                        sql::Expr::CompoundIdentifier(parts) => {
                            parts.last().map(ident_name)
                        }
                        _ => None,
                    };
                    items.push(Item::Ast(name, e));
                }
                sql::SelectItem::ExprWithAlias { expr, alias } => {
                    items.push(Item::Ast(Some(ident_name(alias)), expr));
                }
            }
        }

        let group_exprs: Vec<&sql::Expr> = match &select.group_by {
            sql::GroupByExpr::Expressions(exprs, modifiers) => {
                if !modifiers.is_empty() {
                    return Err(Error::unsupported("GROUP BY modifiers (ROLLUP/CUBE)"));
                }
                exprs.iter().collect()
            }
            sql::GroupByExpr::All(_) => return Err(Error::unsupported("GROUP BY ALL")),
        };
        let has_aggregate = items.iter().any(|i| match i {
            Item::Ast(_, e) => contains_aggregate(e),
            Item::Bound(..) => false,
        }) || select.having.as_ref().map_or(false, |e| contains_aggregate(e));
        let aggregate_path =
            !group_exprs.is_empty() || has_aggregate || select.having.is_some();

        let rel = if !aggregate_path {
            // Plain Map.
            let mut projections = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                match item {
                    Item::Bound(name, expr) => projections.push((name.clone(), expr.clone())),
                    Item::Ast(name, e) => {
                        let bound =
                            self.bind_expr_sq(e, &scope, env, &subquery_cols)?;
                        let name = name.clone().unwrap_or_else(|| format!("field_{i}"));
                        projections.push((name, bound));
                    }
                }
            }
            map_or_input(projections, filter, vec![], None, scope.relation.clone())?
        } else {
            self.bind_aggregate_select(
                &scope,
                env,
                &subquery_cols,
                filter,
                &group_exprs,
                &items
                    .iter()
                    .map(|i| match i {
                        Item::Bound(n, e) => (Some(n.clone()), ItemExpr::Bound(e.clone())),
                        Item::Ast(n, e) => (n.clone(), ItemExpr::Ast(e)),
                    })
                    .collect::<Vec<_>>(),
                select.having.as_ref(),
            )?
        };

        // SELECT DISTINCT is an aggregation: group by all projected columns.
        if matches!(select.distinct, Some(sql::Distinct::Distinct)) {
            let group_by = rel
                .schema()
                .names()
                .into_iter()
                .map(|n| (n.to_string(), Expr::col(n)))
                .collect();
            return Ok(Arc::new(Relation::reduce(group_by, vec![], rel)?));
        }
        Ok(rel)
    }

    fn bind_select_without_from(&mut self, select: &sql::Select) -> Result<Arc<Relation>> {
        if select.selection.is_some()
            || select.having.is_some()
            || !matches!(&select.group_by, sql::GroupByExpr::Expressions(e, _) if e.is_empty())
            || select.distinct.is_some()
        {
            return Err(Error::unsupported("WHERE/GROUP BY/HAVING without FROM"));
        }
        let mut columns = Vec::new();
        let mut row = Vec::new();
        for (i, item) in select.projection.iter().enumerate() {
            let (name, expr) = match item {
                sql::SelectItem::UnnamedExpr(e) => (format!("field_{i}"), e),
                sql::SelectItem::ExprWithAlias { expr, alias } => (ident_name(alias), expr),
                _ => return Err(Error::unsupported("wildcard without FROM")),
            };
            row.push(literal_expr(expr)?);
            columns.push(name);
        }
        Ok(Arc::new(Relation::values(columns, vec![row])?))
    }

    fn bind_from(&mut self, from: &[sql::TableWithJoins], env: &mut CteEnv) -> Result<Scope> {
        let mut scope: Option<Scope> = None;
        for twj in from {
            let (rel, qualifier, cols) = self.bind_table_factor(&twj.relation, env)?;
            scope = Some(match scope {
                None => Scope {
                    items: vec![ScopeItem {
                        qualifier,
                        columns: cols
                            .iter()
                            .zip(rel.schema().names())
                            .map(|(vis, actual)| (vis.clone(), actual.to_string()))
                            .collect(),
                    }],
                    relation: rel,
                },
                Some(s) => self.join_scope(
                    s,
                    rel,
                    qualifier,
                    cols,
                    JoinKind::Cross,
                    &sql::JoinConstraint::None,
                    env,
                )?,
            });
            let mut s = scope.take().unwrap();
            for join in &twj.joins {
                let (kind, constraint) = match &join.join_operator {
                    sql::JoinOperator::Inner(c) => (JoinKind::Inner, c),
                    sql::JoinOperator::LeftOuter(c) => (JoinKind::Left, c),
                    sql::JoinOperator::RightOuter(c) => (JoinKind::Right, c),
                    sql::JoinOperator::FullOuter(c) => (JoinKind::Full, c),
                    sql::JoinOperator::CrossJoin => (JoinKind::Cross, &sql::JoinConstraint::None),
                    other => {
                        return Err(Error::unsupported(format!("join operator {other:?}")))
                    }
                };
                let (rel, qualifier, cols) = self.bind_table_factor(&join.relation, env)?;
                s = self.join_scope(s, rel, qualifier, cols, kind, constraint, env)?;
            }
            scope = Some(s);
        }
        scope.ok_or_else(|| Error::bind("empty FROM clause"))
    }

    fn bind_table_factor(
        &mut self,
        factor: &sql::TableFactor,
        env: &mut CteEnv,
    ) -> Result<(Arc<Relation>, String, Vec<String>)> {
        match factor {
            sql::TableFactor::Table { name, alias, args: None, with_ordinality: false, .. } => {
                let table_name = object_name(name);
                let rel = self.resolve_table(&table_name, env)?;
                let qualifier = match alias {
                    Some(a) => {
                        if !a.columns.is_empty() {
                            return Err(Error::unsupported("table alias column lists"));
                        }
                        ident_name(&a.name)
                    }
                    None => name.0.last().map(ident_name).unwrap_or(table_name),
                };
                let cols = rel.schema().names().into_iter().map(str::to_string).collect();
                Ok((rel, qualifier, cols))
            }
            sql::TableFactor::Derived { lateral: false, subquery, alias } => {
                let rel = self.bind_query(subquery, env, false)?;
                let qualifier = match alias {
                    Some(a) => {
                        if !a.columns.is_empty() {
                            return Err(Error::unsupported("table alias column lists"));
                        }
                        ident_name(&a.name)
                    }
                    None => rel.name().to_string(),
                };
                let cols = rel.schema().names().into_iter().map(str::to_string).collect();
                Ok((rel, qualifier, cols))
            }
            sql::TableFactor::NestedJoin { table_with_joins, alias: None } => {
                let scope = self.bind_from(std::slice::from_ref(table_with_joins), env)?;
                // Flatten: expose every inner qualifier's columns under their
                // disambiguated names with a synthetic group qualifier.
                let cols: Vec<String> = scope
                    .relation
                    .schema()
                    .names()
                    .into_iter()
                    .map(str::to_string)
                    .collect();
                Ok((scope.relation, "_qrw_nested".to_string(), cols))
            }
            other => Err(Error::unsupported(format!("FROM item {other}"))),
        }
    }

    fn resolve_table(&mut self, name: &str, env: &CteEnv) -> Result<Arc<Relation>> {
        for layer in env.iter().rev() {
            if let Some(rel) = layer.get(name) {
                return Ok(rel.clone());
            }
        }
        if let Some(cached) = self.table_cache.get(name) {
            return Ok(cached.clone());
        }
        let table = self
            .catalog
            .table(name)
            .ok_or_else(|| Error::bind(format!("unknown table {name:?}")))?;
        if table.visibility == Visibility::Private {
            if let Some(pu) = self.privacy_unit {
                if pu.entry(name).is_none() && table.synthetic.is_none() {
                    return Err(Error::bind(format!(
                        "private table {name:?} has no privacy unit entry and no synthetic twin; it cannot be queried"
                    )));
                }
            }
        }
        let rel = self.catalog.relation(name).unwrap();
        self.table_cache.insert(name.to_string(), rel.clone());
        Ok(rel)
    }

    #[allow(clippy::too_many_arguments)]
    fn join_scope(
        &mut self,
        scope: Scope,
        right: Arc<Relation>,
        qualifier: String,
        right_cols: Vec<String>,
        kind: JoinKind,
        constraint: &sql::JoinConstraint,
        env: &mut CteEnv,
    ) -> Result<Scope> {
        if scope.items.iter().any(|i| i.qualifier == qualifier) {
            return Err(Error::bind(format!("duplicate table alias {qualifier:?}")));
        }
        let fields = Relation::join_output_fields(kind, &scope.relation, &right);
        let split = scope.relation.schema().len();
        // Remap existing items through the (possibly renamed) left columns.
        let left_schema = scope.relation.schema().clone();
        let mut items: Vec<ScopeItem> = scope
            .items
            .into_iter()
            .map(|item| ScopeItem {
                qualifier: item.qualifier,
                columns: item
                    .columns
                    .into_iter()
                    .map(|(vis, actual)| {
                        let idx = left_schema.index_of(&actual).expect("stale scope column");
                        (vis, fields[idx].name.clone())
                    })
                    .collect(),
            })
            .collect();
        items.push(ScopeItem {
            qualifier,
            columns: right_cols
                .iter()
                .enumerate()
                .map(|(i, vis)| (vis.clone(), fields[split + i].name.clone()))
                .collect(),
        });
        let pending = Scope { relation: scope.relation.clone(), items };
        let on = match constraint {
            sql::JoinConstraint::On(e) => {
                // The ON expression is resolved against the joined output.
                let joined_scope = Scope {
                    relation: pending.relation.clone(), // placeholder, not used by resolve
                    items: pending.items,
                };
                let bound = self.bind_expr(e, &joined_scope, env)?;
                if contains_aggregate(e) {
                    return Err(Error::bind("aggregates are not allowed in JOIN conditions"));
                }
                let items = joined_scope.items;
                let rel = Arc::new(Relation::join(kind, bound, scope.relation, right)?);
                return Ok(Scope { relation: rel, items });
            }
            sql::JoinConstraint::None => Expr::Literal(Value::Boolean(true)),
            sql::JoinConstraint::Using(_) => {
                return Err(Error::unsupported("JOIN USING"));
            }
            sql::JoinConstraint::Natural => {
                return Err(Error::unsupported("NATURAL JOIN"));
            }
        };
        let items = pending.items;
        let rel = Arc::new(Relation::join(kind, on, scope.relation, right)?);
        Ok(Scope { relation: rel, items })
    }

    #[allow(clippy::too_many_arguments)]
    fn bind_aggregate_select(
        &mut self,
        scope: &Scope,
        env: &mut CteEnv,
        subquery_cols: &HashMap<*const sql::Query, String>,
        filter: Option<Expr>,
        group_exprs: &[&sql::Expr],
        items: &[(Option<String>, ItemExpr)],
        having: Option<&sql::Expr>,
    ) -> Result<Arc<Relation>> {
        // Bind grouping keys against the pre-aggregation scope.
        let mut keys: Vec<(String, Expr)> = Vec::new();
        for (i, g) in group_exprs.iter().enumerate() {
            let bound = match g {
                // GROUP BY <ordinal>
                sql::Expr::Value(sql::Value::Number(repr, _)) => {
                    let idx: usize = repr
                        .parse()
                        .map_err(|_| Error::bind(format!("bad GROUP BY ordinal {repr}")))?;
                    let (_, item) = items.get(idx.wrapping_sub(1)).ok_or_else(|| {
                        Error::bind(format!("GROUP BY ordinal {idx} out of range"))
                    })?;
                    match item {
                        ItemExpr::Bound(e) => e.clone(),
                        ItemExpr::Ast(e) => {
                            self.bind_expr_sq(e, scope, env, subquery_cols)?
                        }
                    }
                }
                other => {
                    match self.bind_expr_sq(other, scope, env, subquery_cols)
                    {
                        Ok(e) => e,
                        Err(err) => {
                            // GROUP BY <select alias>
                            let alias_match = match other {
                                sql::Expr::Identifier(id) => {
                                    let name = ident_name(id);
                                    items.iter().find(|(n, _)| n.as_deref() == Some(&name))
                                }
                                _ => None,
                            };
                            match alias_match {
                                Some((_, ItemExpr::Bound(e))) => e.clone(),
                                Some((_, ItemExpr::Ast(e))) => {
                                    self.bind_expr_sq(e, scope, env, subquery_cols)?
                                }
                                None => return Err(err),
                            }
                        }
                    }
                }
            };
            if !keys.iter().any(|(_, e)| e == &bound) {
                let name = match &bound {
                    Expr::Column(c) => c.clone(),
                    _ => format!("_qrw_k{i}"),
                };
                keys.push((name, bound));
            }
        }

        // Bind select items and HAVING in post-aggregation context,
        // collecting aggregate calls.
        let mut aggs: Vec<(String, Aggregate)> = Vec::new();
        let mut post_items: Vec<(String, Expr)> = Vec::new();
        for (i, (name, item)) in items.iter().enumerate() {
            let bound = match item {
                ItemExpr::Bound(e) => {
                    // A wildcard column in an aggregate query must be a key.
                    keys.iter()
                        .find(|(_, k)| k == e)
                        .map(|(kname, _)| Expr::col(kname))
                        .ok_or_else(|| {
                            Error::bind(format!(
                                "column {e} must appear in GROUP BY or be used in an aggregate"
                            ))
                        })?
                }
                ItemExpr::Ast(e) => {
                    let preferred = name.clone();
                    self.bind_post_expr(e, scope, &keys, &mut aggs, preferred, env, subquery_cols)?
                }
            };
            post_items.push((name.clone().unwrap_or_else(|| format!("field_{i}")), bound));
        }
        let having_bound = having
            .map(|e| self.bind_post_expr(e, scope, &keys, &mut aggs, None, env, subquery_cols))
            .transpose()?;

        // Pre-aggregation Map computes keys and aggregate arguments.
        let mut pre_projections: Vec<(String, Expr)> = Vec::new();
        for (kname, kexpr) in &keys {
            pre_projections.push((kname.clone(), kexpr.clone()));
        }
        let mut reduce_aggs: Vec<(String, Aggregate)> = Vec::new();
        for (i, (aname, agg)) in aggs.iter().enumerate() {
            let arg_col = format!("_qrw_e{i}");
            pre_projections.push((arg_col.clone(), agg.arg.clone()));
            reduce_aggs.push((aname.clone(), Aggregate::new(agg.op, Expr::col(arg_col))));
        }
        if pre_projections.is_empty() {
            return Err(Error::bind("aggregate query with no keys and no aggregates"));
        }
        let pre = map_or_input(pre_projections, filter, vec![], None, scope.relation.clone())?;
        let reduce_keys: Vec<(String, Expr)> = keys
            .iter()
            .map(|(kname, _)| (kname.clone(), Expr::col(kname)))
            .collect();
        let reduce = Arc::new(Relation::reduce(reduce_keys, reduce_aggs, pre)?);
        map_or_input(post_items, having_bound, vec![], None, reduce)
    }

    /// Bind in post-aggregation context: subtrees equal to a grouping key
    /// become key references, aggregate calls register in `aggs`.
    #[allow(clippy::too_many_arguments)]
    fn bind_post_expr(
        &mut self,
        expr: &sql::Expr,
        pre: &Scope,
        keys: &[(String, Expr)],
        aggs: &mut Vec<(String, Aggregate)>,
        preferred_name: Option<String>,
        env: &mut CteEnv,
        subquery_cols: &HashMap<*const sql::Query, String>,
    ) -> Result<Expr> {
        if !contains_aggregate(expr) {
            if let Ok(bound) = self.bind_expr_sq(expr, pre, env, subquery_cols)
            {
                if let Some((kname, _)) = keys.iter().find(|(_, k)| k == &bound) {
                    return Ok(Expr::col(kname));
                }
                if let Expr::Literal(_) = bound {
                    return Ok(bound);
                }
                return Err(Error::bind(format!(
                    "expression {bound} must appear in GROUP BY or be used in an aggregate"
                )));
            }
        }
        use sql::Expr as E;
        match expr {
            E::Function(f) if f.over.is_none() => {
                let fname = object_name(&f.name).to_lowercase();
                if let Some(op) = aggregate_op(&fname) {
                    let agg = self.bind_aggregate_call(f, op, pre, env, subquery_cols)?;
                    // Deduplicate identical aggregate calls.
                    if let Some((existing, _)) =
                        aggs.iter().find(|(_, a)| a == &agg)
                    {
                        return Ok(Expr::col(existing));
                    }
                    let name =
                        preferred_name.unwrap_or_else(|| format!("_qrw_a{}", aggs.len()));
                    aggs.push((name.clone(), agg));
                    return Ok(Expr::col(name));
                }
                // Non-aggregate function over post-aggregation operands.
                self.rebuild_post(expr, pre, keys, aggs, env, subquery_cols)
            }
            _ => self.rebuild_post(expr, pre, keys, aggs, env, subquery_cols),
        }
    }

    /// Recurse into a compound expression, binding children in post context.
    fn rebuild_post(
        &mut self,
        expr: &sql::Expr,
        pre: &Scope,
        keys: &[(String, Expr)],
        aggs: &mut Vec<(String, Aggregate)>,
        env: &mut CteEnv,
        subquery_cols: &HashMap<*const sql::Query, String>,
    ) -> Result<Expr> {
        use sql::Expr as E;
        let mut recurse = |e: &sql::Expr, binder: &mut Self, aggs: &mut Vec<(String, Aggregate)>| {
            binder.bind_post_expr(e, pre, keys, aggs, None, env, subquery_cols)
        };
        match expr {
            E::Nested(inner) => recurse(inner, self, aggs),
            E::BinaryOp { left, op, right } => {
                let func = binary_function(op)?;
                let l = self.bind_post_expr(left, pre, keys, aggs, None, env, subquery_cols)?;
                let r = self.bind_post_expr(right, pre, keys, aggs, None, env, subquery_cols)?;
                Ok(Expr::f(func, vec![l, r]))
            }
            E::UnaryOp { op, expr: inner } => {
                let bound = self.bind_post_expr(inner, pre, keys, aggs, None, env, subquery_cols)?;
                unary_apply(op, bound)
            }
            E::IsNull(inner) => {
                let bound = self.bind_post_expr(inner, pre, keys, aggs, None, env, subquery_cols)?;
                Ok(Expr::is_null(bound))
            }
            E::IsNotNull(inner) => {
                let bound = self.bind_post_expr(inner, pre, keys, aggs, None, env, subquery_cols)?;
                Ok(Expr::f(Function::Not, vec![Expr::is_null(bound)]))
            }
            E::Cast { kind: sql::CastKind::Cast, expr: inner, data_type, format: None } => {
                let bound = self.bind_post_expr(inner, pre, keys, aggs, None, env, subquery_cols)?;
                Ok(Expr::f(cast_function(data_type)?, vec![bound]))
            }
            E::Case { .. } => {
                let (conds, results, else_r) = normalize_case(expr)?;
                let mut out = match else_r {
                    Some(e) => self.bind_post_expr(e, pre, keys, aggs, None, env, subquery_cols)?,
                    None => Expr::Literal(Value::Null),
                };
                for (c, r) in conds.iter().zip(results.iter()).rev() {
                    let c = self.bind_post_expr(c, pre, keys, aggs, None, env, subquery_cols)?;
                    let r = self.bind_post_expr(r, pre, keys, aggs, None, env, subquery_cols)?;
                    out = Expr::case(c, r, out);
                }
                Ok(out)
            }
            E::Function(f) if f.over.is_none() => {
                let fname = object_name(&f.name).to_lowercase();
                let func = scalar_function(&fname)
                    .ok_or_else(|| Error::unsupported(format!("function {fname}")))?;
                let args = function_args(f)?;
                let bound: Vec<Expr> = args
                    .iter()
                    .map(|a| self.bind_post_expr(a, pre, keys, aggs, None, env, subquery_cols))
                    .collect::<Result<_>>()?;
                Ok(Expr::f(func, bound))
            }
            E::InList { expr: inner, list, negated } => {
                let bound = self.bind_post_expr(inner, pre, keys, aggs, None, env, subquery_cols)?;
                let mut all = vec![bound];
                for item in list {
                    all.push(Expr::Literal(literal_expr(item)?));
                }
                let e = Expr::f(Function::InList, all);
                Ok(if *negated { Expr::f(Function::Not, vec![e]) } else { e })
            }
            other => Err(Error::bind(format!(
                "expression {other} must appear in GROUP BY or be used in an aggregate"
            ))),
        }
    }

    fn bind_aggregate_call(
        &mut self,
        f: &sql::Function,
        op: AggOp,
        pre: &Scope,
        env: &mut CteEnv,
        subquery_cols: &HashMap<*const sql::Query, String>,
    ) -> Result<Aggregate> {
        let list = match &f.args {
            sql::FunctionArguments::List(list) => list,
            sql::FunctionArguments::None => {
                return Err(Error::bind(format!("{} requires parentheses", op.name())))
            }
            sql::FunctionArguments::Subquery(_) => {
                return Err(Error::unsupported("subquery as aggregate argument"))
            }
        };
        if list.duplicate_treatment == Some(sql::DuplicateTreatment::Distinct) {
            return Err(Error::unsupported(format!(
                "DISTINCT inside aggregates ({}(DISTINCT ...))",
                op.name()
            )));
        }
        if !list.clauses.is_empty() {
            return Err(Error::unsupported("aggregate argument clauses"));
        }
        if f.filter.is_some() || f.null_treatment.is_some() || !f.within_group.is_empty() {
            return Err(Error::unsupported("FILTER / WITHIN GROUP on aggregates"));
        }
        match list.args.as_slice() {
            [sql::FunctionArg::Unnamed(sql::FunctionArgExpr::Wildcard)] => {
                if op == AggOp::Count {
                    Ok(Aggregate::count_star())
                } else {
                    Err(Error::bind(format!("{}(*) is not valid", op.name())))
                }
            }
            [sql::FunctionArg::Unnamed(sql::FunctionArgExpr::Expr(e))] => {
                if contains_aggregate(e) {
                    return Err(Error::bind("nested aggregates are not allowed"));
                }
                let arg = self.bind_expr_sq(e, pre, env, subquery_cols)?;
                Ok(Aggregate::new(op, arg))
            }
            _ => Err(Error::bind(format!(
                "{} expects exactly one argument",
                op.name()
            ))),
        }
    }

    fn bind_expr(
        &mut self,
        expr: &sql::Expr,
        scope: &Scope,
        env: &mut CteEnv,
    ) -> Result<Expr> {
        self.bind_expr_sq(expr, scope, env, &HashMap::new())
    }

    fn bind_expr_sq(
        &mut self,
        expr: &sql::Expr,
        scope: &Scope,
        env: &mut CteEnv,
        subquery_cols: &HashMap<*const sql::Query, String>,
    ) -> Result<Expr> {
        use sql::Expr as E;
        match expr {
            E::Identifier(id) => {
                let name = ident_name(id);
                Ok(Expr::col(scope.resolve(None, &name)?))
            }
            E::CompoundIdentifier(parts) => {
                if parts.len() != 2 {
                    return Err(Error::unsupported(format!(
                        "multi-part identifier {}",
                        parts.iter().map(ident_name).collect::<Vec<_>>().join(".")
                    )));
                }
                let q = ident_name(&parts[0]);
                let name = ident_name(&parts[1]);
                Ok(Expr::col(scope.resolve(Some(&q), &name)?))
            }
            E::Value(v) => Ok(Expr::Literal(value_literal(v)?)),
            E::Nested(inner) => self.bind_expr_sq(inner, scope, env, subquery_cols),
            E::BinaryOp { left, op, right } => {
                let func = binary_function(op)?;
                let l = self.bind_expr_sq(left, scope, env, subquery_cols)?;
                let r = self.bind_expr_sq(right, scope, env, subquery_cols)?;
                Ok(Expr::f(func, vec![l, r]))
            }
            E::UnaryOp { op, expr: inner } => {
                let bound = self.bind_expr_sq(inner, scope, env, subquery_cols)?;
                unary_apply(op, bound)
            }
            E::IsNull(inner) => Ok(Expr::is_null(self.bind_expr_sq(inner, scope, env, subquery_cols)?)),
            E::IsNotNull(inner) => Ok(Expr::f(
                Function::Not,
                vec![Expr::is_null(self.bind_expr_sq(inner, scope, env, subquery_cols)?)],
            )),
            E::InList { expr: inner, list, negated } => {
                let bound = self.bind_expr_sq(inner, scope, env, subquery_cols)?;
                let mut all = vec![bound];
                for item in list {
                    all.push(Expr::Literal(literal_expr(item)?));
                }
                let e = Expr::f(Function::InList, all);
                Ok(if *negated { Expr::f(Function::Not, vec![e]) } else { e })
            }
            E::Between { expr: inner, negated, low, high } => {
                let e = self.bind_expr_sq(inner, scope, env, subquery_cols)?;
                let lo = self.bind_expr_sq(low, scope, env, subquery_cols)?;
                let hi = self.bind_expr_sq(high, scope, env, subquery_cols)?;
                let both = Expr::and(
                    Expr::f(Function::GtEq, vec![e.clone(), lo]),
                    Expr::f(Function::LtEq, vec![e, hi]),
                );
                Ok(if *negated { Expr::f(Function::Not, vec![both]) } else { both })
            }
            E::Case { .. } => {
                let (conds, results, else_r) = normalize_case(expr)?;
                let mut out = match else_r {
                    Some(e) => self.bind_expr_sq(e, scope, env, subquery_cols)?,
                    None => Expr::Literal(Value::Null),
                };
                for (c, r) in conds.iter().zip(results.iter()).rev() {
                    let c = self.bind_expr_sq(c, scope, env, subquery_cols)?;
                    let r = self.bind_expr_sq(r, scope, env, subquery_cols)?;
                    out = Expr::case(c, r, out);
                }
                Ok(out)
            }
            E::Cast { kind: sql::CastKind::Cast, expr: inner, data_type, format: None } => {
                let bound = self.bind_expr_sq(inner, scope, env, subquery_cols)?;
                Ok(Expr::f(cast_function(data_type)?, vec![bound]))
            }
            E::Function(f) => {
                if f.over.is_some() {
                    return Err(Error::unsupported(format!(
                        "window functions ({} OVER ...)",
                        object_name(&f.name)
                    )));
                }
                let fname = object_name(&f.name).to_lowercase();
                if aggregate_op(&fname).is_some() {
                    return Err(Error::bind(format!(
                        "aggregate {} is not allowed here",
                        fname.to_uppercase()
                    )));
                }
                let func = scalar_function(&fname)
                    .ok_or_else(|| Error::unsupported(format!("function {fname}")))?;
                let args = function_args(f)?;
                let bound: Vec<Expr> = args
                    .iter()
                    .map(|a| self.bind_expr_sq(a, scope, env, subquery_cols))
                    .collect::<Result<_>>()?;
                if func == Function::RandomUniform && !bound.is_empty() {
                    return Err(Error::bind("random() takes no arguments"));
                }
                Ok(Expr::f(func, bound))
            }
            E::Subquery(q) => {
                let key = q.as_ref() as *const sql::Query;
                subquery_cols
                    .get(&key)
                    .map(|col| Expr::col(col.clone()))
                    .ok_or_else(|| {
                        Error::unsupported(
                            "scalar subqueries are only supported in SELECT, WHERE, GROUP BY and HAVING",
                        )
                    })
            }
            E::InSubquery { .. } => Err(Error::unsupported("IN (subquery); use IN-lists")),
            E::Exists { .. } => Err(Error::unsupported("EXISTS subqueries")),
            other => Err(Error::unsupported(format!("expression {other}"))),
        }
    }
}

/// Select-list item carried through aggregate binding.
enum ItemExpr<'e> {
    Bound(Expr),
    Ast(&'e sql::Expr),
}

fn function_args(f: &sql::Function) -> Result<Vec<&sql::Expr>> {
    match &f.args {
        sql::FunctionArguments::List(list) => {
            if list.duplicate_treatment.is_some() || !list.clauses.is_empty() {
                return Err(Error::unsupported("function argument modifiers"));
            }
            list.args
                .iter()
                .map(|a| match a {
                    sql::FunctionArg::Unnamed(sql::FunctionArgExpr::Expr(e)) => Ok(e),
                    other => Err(Error::unsupported(format!("function argument {other}"))),
                })
                .collect()
        }
        sql::FunctionArguments::None => Ok(vec![]),
        sql::FunctionArguments::Subquery(_) => {
            Err(Error::unsupported("subquery as function argument"))
        }
    }
}

fn binary_function(op: &sql::BinaryOperator) -> Result<Function> {
    use sql::BinaryOperator as B;
    Ok(match op {
        B::Plus => Function::Plus,
        B::Minus => Function::Minus,
        B::Multiply => Function::Multiply,
        B::Divide => Function::Divide,
        B::Eq => Function::Eq,
        B::NotEq => Function::NotEq,
        B::Lt => Function::Lt,
        B::LtEq => Function::LtEq,
        B::Gt => Function::Gt,
        B::GtEq => Function::GtEq,
        B::And => Function::And,
        B::Or => Function::Or,
        other => return Err(Error::unsupported(format!("operator {other}"))),
    })
}

fn unary_apply(op: &sql::UnaryOperator, bound: Expr) -> Result<Expr> {
    use sql::UnaryOperator as U;
    match op {
        U::Not => Ok(Expr::f(Function::Not, vec![bound])),
        U::Plus => Ok(bound),
        U::Minus => Ok(match bound {
            // Fold negative literals so range extraction sees them directly.
            Expr::Literal(Value::Integer(i)) => Expr::Literal(Value::Integer(-i)),
            Expr::Literal(Value::Float(f)) => Expr::Literal(Value::Float(-f)),
            other => Expr::f(Function::Neg, vec![other]),
        }),
        other => Err(Error::unsupported(format!("unary operator {other}"))),
    }
}

fn cast_function(data_type: &sql::DataType) -> Result<Function> {
    use sql::DataType as D;
    Ok(match data_type {
        D::Text | D::Varchar(_) | D::Char(_) | D::String(_) => Function::CastText,
        D::Int(_) | D::Integer(_) | D::BigInt(_) | D::SmallInt(_) => Function::CastInteger,
        D::Float(_) | D::Real | D::Double | D::DoublePrecision | D::Float8 | D::Float4 => {
            Function::CastFloat
        }
        other => return Err(Error::unsupported(format!("CAST to {other}"))),
    })
}

/// Flatten CASE (both simple and searched forms) into parallel condition and
/// result lists.
fn normalize_case(
    expr: &sql::Expr,
) -> Result<(Vec<sql::Expr>, Vec<&sql::Expr>, Option<&sql::Expr>)> {
    let sql::Expr::Case { operand, conditions, results, else_result } = expr else {
        return Err(Error::bind("not a CASE expression"));
    };
    let conds: Vec<sql::Expr> = match operand {
        None => conditions.clone(),
        // CASE x WHEN v ... means x = v
        Some(op) => conditions
            .iter()
            .map(|c| sql::Expr::BinaryOp {
                left: op.clone(),
                op: sql::BinaryOperator::Eq,
                right: Box::new(c.clone()),
            })
            .collect(),
    };
    Ok((conds, results.iter().collect(), else_result.as_deref()))
}

fn literal_expr(e: &sql::Expr) -> Result<Value> {
    match e {
        sql::Expr::Value(v) => value_literal(v),
        sql::Expr::UnaryOp { op: sql::UnaryOperator::Minus, expr } => {
            match literal_expr(expr)? {
                Value::Integer(i) => Ok(Value::Integer(-i)),
                Value::Float(f) => Ok(Value::Float(-f)),
                other => Err(Error::bind(format!("cannot negate {other}"))),
            }
        }
        sql::Expr::Nested(inner) => literal_expr(inner),
        other => Err(Error::unsupported(format!(
            "expected a literal, got {other}"
        ))),
    }
}

/// Scope over a relation's own output columns (used for ORDER BY binding).
fn output_scope(rel: &Arc<Relation>) -> Scope {
    Scope {
        relation: rel.clone(),
        items: vec![ScopeItem {
            qualifier: rel.name().to_string(),
            columns: rel
                .schema()
                .names()
                .into_iter()
                .map(|n| (n.to_string(), n.to_string()))
                .collect(),
        }],
    }
}

fn check_wildcard_options(opts: &sql::WildcardAdditionalOptions) -> Result<()> {
    if opts.opt_ilike.is_some()
        || opts.opt_exclude.is_some()
        || opts.opt_except.is_some()
        || opts.opt_replace.is_some()
        || opts.opt_rename.is_some()
    {
        return Err(Error::unsupported("wildcard modifiers (EXCLUDE/EXCEPT/REPLACE)"));
    }
    Ok(())
}

/// Build a Map, collapsing the identity case: projecting exactly the input's
/// columns in order, under the same names, with no filter, order or limit.
pub(crate) fn map_or_input(
    projections: Vec<(String, Expr)>,
    filter: Option<Expr>,
    order_by: Vec<OrderByHint>,
    limit: Option<u64>,
    input: Arc<Relation>,
) -> Result<Arc<Relation>> {
    let identity = filter.is_none()
        && order_by.is_empty()
        && limit.is_none()
        && projections.len() == input.schema().len()
        && projections.iter().zip(input.schema().names()).all(|((name, expr), col)| {
            name == col && matches!(expr, Expr::Column(c) if c == col)
        });
    if identity {
        return Ok(input);
    }
    Ok(Arc::new(Relation::map(projections, filter, order_by, limit, input)?))
}
