//! The normalized dataflow IR: a DAG of Tables, Maps, Reduces, Joins, Values
//! and set operations, each carrying a derived schema with propagated ranges.
//!
//! Nodes are immutable after construction and shared by `Arc`. Generated node
//! names are content hashes, so structurally equal graphs always carry equal
//! names and plain equality is structural equality.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::data_type::{DataType, Value};
use crate::error::{Error, Result};
use crate::expr::{Aggregate, Expr, Function};
use crate::range;
use crate::schema::{Field, Schema};
use crate::stable_hash::StableHasher;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    Right,
    Full,
    Cross,
}

impl JoinKind {
    pub fn name(&self) -> &'static str {
        match self {
            JoinKind::Inner => "INNER",
            JoinKind::Left => "LEFT",
            JoinKind::Right => "RIGHT",
            JoinKind::Full => "FULL",
            JoinKind::Cross => "CROSS",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetOpKind {
    Union,
    Intersect,
    Except,
}

impl SetOpKind {
    pub fn name(&self) -> &'static str {
        match self {
            SetOpKind::Union => "UNION",
            SetOpKind::Intersect => "INTERSECT",
            SetOpKind::Except => "EXCEPT",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub schema: Schema,
    pub visibility: Visibility,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderByHint {
    pub expr: Expr,
    pub ascending: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Map {
    pub name: String,
    pub projections: Vec<(String, Expr)>,
    pub filter: Option<Expr>,
    pub order_by: Vec<OrderByHint>,
    pub limit: Option<u64>,
    pub input: Arc<Relation>,
    pub schema: Schema,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reduce {
    pub name: String,
    pub group_by: Vec<(String, Expr)>,
    pub aggregates: Vec<(String, Aggregate)>,
    pub input: Arc<Relation>,
    pub schema: Schema,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Join {
    pub name: String,
    pub kind: JoinKind,
    /// Boolean expression over the join's (disambiguated) output columns.
    pub on: Expr,
    pub left: Arc<Relation>,
    pub right: Arc<Relation>,
    pub schema: Schema,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Values {
    pub name: String,
    pub schema: Schema,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetOp {
    pub name: String,
    pub kind: SetOpKind,
    /// UNION ALL / INTERSECT ALL / EXCEPT ALL when true.
    pub all: bool,
    pub left: Arc<Relation>,
    pub right: Arc<Relation>,
    pub schema: Schema,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Relation {
    Table(Table),
    Map(Map),
    Reduce(Reduce),
    Join(Join),
    Values(Values),
    SetOp(SetOp),
}

fn generated_name(h: StableHasher) -> String {
    format!("qrw_{:012x}", h.finish() & 0xffff_ffff_ffff)
}

impl Relation {
    pub fn name(&self) -> &str {
        match self {
            Relation::Table(t) => &t.name,
            Relation::Map(m) => &m.name,
            Relation::Reduce(r) => &r.name,
            Relation::Join(j) => &j.name,
            Relation::Values(v) => &v.name,
            Relation::SetOp(s) => &s.name,
        }
    }

    pub fn schema(&self) -> &Schema {
        match self {
            Relation::Table(t) => &t.schema,
            Relation::Map(m) => &m.schema,
            Relation::Reduce(r) => &r.schema,
            Relation::Join(j) => &j.schema,
            Relation::Values(v) => &v.schema,
            Relation::SetOp(s) => &s.schema,
        }
    }

    pub fn inputs(&self) -> Vec<&Arc<Relation>> {
        match self {
            Relation::Table(_) | Relation::Values(_) => vec![],
            Relation::Map(m) => vec![&m.input],
            Relation::Reduce(r) => vec![&r.input],
            Relation::Join(j) => vec![&j.left, &j.right],
            Relation::SetOp(s) => vec![&s.left, &s.right],
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Relation::Table(_) => "Table",
            Relation::Map(_) => "Map",
            Relation::Reduce(_) => "Reduce",
            Relation::Join(_) => "Join",
            Relation::Values(_) => "Values",
            Relation::SetOp(_) => "SetOp",
        }
    }

    /// Structural equality. Generated names are content-derived, so plain
    /// equality already ignores naming accidents.
    pub fn structurally_eq(&self, other: &Relation) -> bool {
        self == other
    }

    pub fn table(name: impl Into<String>, schema: Schema, visibility: Visibility) -> Relation {
        Relation::Table(Table { name: name.into(), schema, visibility })
    }

    pub fn map(
        projections: Vec<(String, Expr)>,
        filter: Option<Expr>,
        order_by: Vec<OrderByHint>,
        limit: Option<u64>,
        input: Arc<Relation>,
    ) -> Result<Relation> {
        let mut env = input.schema().env();
        if let Some(f) = &filter {
            let t = f.infer_type(&env)?;
            if !t.is_boolean() {
                return Err(Error::bind(format!("filter must be boolean, got {t}")));
            }
            let domains = range::extract_domains(f, crate::interval::DEFAULT_K);
            env = range::refine_env(env, &domains);
        }
        for hint in &order_by {
            hint.expr.infer_type(&env)?;
        }
        let mut fields = Vec::with_capacity(projections.len());
        for (name, expr) in &projections {
            fields.push(Field::new(name.clone(), expr.infer_type(&env)?));
        }
        let schema = Schema::new(fields)?;

        let mut h = StableHasher::new();
        h.write_str("map");
        h.write_str(input.name());
        for (name, expr) in &projections {
            h.write_str(name);
            expr.hash_into(&mut h);
        }
        if let Some(f) = &filter {
            h.write_u64(1);
            f.hash_into(&mut h);
        }
        for hint in &order_by {
            hint.expr.hash_into(&mut h);
            h.write_u64(hint.ascending as u64);
        }
        if let Some(l) = limit {
            h.write_u64(2);
            h.write_u64(l);
        }
        Ok(Relation::Map(Map {
            name: generated_name(h),
            projections,
            filter,
            order_by,
            limit,
            input,
            schema,
        }))
    }

    pub fn reduce(
        group_by: Vec<(String, Expr)>,
        aggregates: Vec<(String, Aggregate)>,
        input: Arc<Relation>,
    ) -> Result<Relation> {
        let env = input.schema().env();
        let grouped = !group_by.is_empty();
        let mut fields = Vec::with_capacity(group_by.len() + aggregates.len());
        for (name, expr) in &group_by {
            fields.push(Field::new(name.clone(), expr.infer_type(&env)?));
        }
        for (name, agg) in &aggregates {
            fields.push(Field::new(name.clone(), agg.infer_type(&env, grouped)?));
        }
        let schema = Schema::new(fields)?;

        let mut h = StableHasher::new();
        h.write_str("reduce");
        h.write_str(input.name());
        for (name, expr) in &group_by {
            h.write_str(name);
            expr.hash_into(&mut h);
        }
        for (name, agg) in &aggregates {
            h.write_str(name);
            agg.hash_into(&mut h);
        }
        Ok(Relation::Reduce(Reduce {
            name: generated_name(h),
            group_by,
            aggregates,
            input,
            schema,
        }))
    }

    pub fn join(
        kind: JoinKind,
        on: Expr,
        left: Arc<Relation>,
        right: Arc<Relation>,
    ) -> Result<Relation> {
        let fields = Relation::join_output_fields(kind, &left, &right);
        let mut env: std::collections::BTreeMap<String, DataType> = fields
            .iter()
            .map(|f| (f.name.clone(), f.data_type.clone()))
            .collect();
        let t = on.infer_type(&env)?;
        if !t.is_boolean() {
            return Err(Error::bind(format!("join condition must be boolean, got {t}")));
        }
        let mut fields = fields;
        if kind == JoinKind::Inner {
            // Equality joins narrow both key columns to the intersection.
            let split = left.schema().len();
            for conjunct in conjuncts(&on) {
                if let Expr::Function(Function::Eq, args) = conjunct {
                    if let (Expr::Column(a), Expr::Column(b)) = (&args[0], &args[1]) {
                        let ia = fields.iter().position(|f| &f.name == a);
                        let ib = fields.iter().position(|f| &f.name == b);
                        if let (Some(ia), Some(ib)) = (ia, ib) {
                            if (ia < split) != (ib < split) {
                                if let (Some(va), Some(vb)) = (
                                    fields[ia].data_type.interval().cloned(),
                                    fields[ib].data_type.interval().cloned(),
                                ) {
                                    let meet = va.intersect(&vb);
                                    fields[ia].data_type =
                                        fields[ia].data_type.with_interval(meet.clone());
                                    fields[ib].data_type =
                                        fields[ib].data_type.with_interval(meet);
                                }
                            }
                        }
                    }
                }
            }
            env = fields
                .iter()
                .map(|f| (f.name.clone(), f.data_type.clone()))
                .collect();
        }
        let _ = env;
        let schema = Schema::new(fields)?;

        let mut h = StableHasher::new();
        h.write_str("join");
        h.write_str(kind.name());
        h.write_str(left.name());
        h.write_str(right.name());
        on.hash_into(&mut h);
        Ok(Relation::Join(Join {
            name: generated_name(h),
            kind,
            on,
            left,
            right,
            schema,
        }))
    }

    /// Output columns of a join: left fields then right fields. Names that
    /// appear on both sides get a deterministic side prefix; outer joins make
    /// the non-preserved side nullable.
    pub fn join_output_fields(kind: JoinKind, left: &Relation, right: &Relation) -> Vec<Field> {
        let lnames: HashSet<&str> = left.schema().names().into_iter().collect();
        let rnames: HashSet<&str> = right.schema().names().into_iter().collect();
        let mut fields = Vec::with_capacity(left.schema().len() + right.schema().len());
        let left_nullable = matches!(kind, JoinKind::Right | JoinKind::Full);
        let right_nullable = matches!(kind, JoinKind::Left | JoinKind::Full);
        for f in left.schema().fields() {
            let name = if rnames.contains(f.name.as_str()) {
                format!("left_{}", f.name)
            } else {
                f.name.clone()
            };
            let dt = if left_nullable {
                DataType::optional(f.data_type.clone())
            } else {
                f.data_type.clone()
            };
            fields.push(Field::new(name, dt));
        }
        for f in right.schema().fields() {
            let name = if lnames.contains(f.name.as_str()) {
                format!("right_{}", f.name)
            } else {
                f.name.clone()
            };
            let dt = if right_nullable {
                DataType::optional(f.data_type.clone())
            } else {
                f.data_type.clone()
            };
            fields.push(Field::new(name, dt));
        }
        fields
    }

    pub fn values(columns: Vec<String>, rows: Vec<Vec<Value>>) -> Result<Relation> {
        if rows.is_empty() {
            return Err(Error::bind("VALUES must have at least one row"));
        }
        for row in &rows {
            if row.len() != columns.len() {
                return Err(Error::bind("VALUES rows have inconsistent arity"));
            }
        }
        let mut fields = Vec::with_capacity(columns.len());
        for (i, name) in columns.iter().enumerate() {
            let mut ty: Option<DataType> = None;
            for row in &rows {
                let vt = DataType::of_value(&row[i]);
                ty = Some(match ty {
                    None => vt,
                    Some(t) => DataType::unify(&t, &vt)?,
                });
            }
            let mut ty = ty.unwrap();
            // Very large text sets degrade to unknown.
            if let DataType::Text(Some(s)) = &ty {
                if s.len() > 64 {
                    ty = DataType::text();
                }
            }
            fields.push(Field::new(name.clone(), ty));
        }
        let schema = Schema::new(fields)?;
        let mut h = StableHasher::new();
        h.write_str("values");
        for name in &columns {
            h.write_str(name);
        }
        for row in &rows {
            for v in row {
                Expr::Literal(v.clone()).hash_into(&mut h);
            }
        }
        Ok(Relation::Values(Values { name: generated_name(h), schema, rows }))
    }

    pub fn set_op(
        kind: SetOpKind,
        all: bool,
        left: Arc<Relation>,
        right: Arc<Relation>,
    ) -> Result<Relation> {
        if left.schema().len() != right.schema().len() {
            return Err(Error::bind(format!(
                "set operation arity mismatch: {} vs {} columns",
                left.schema().len(),
                right.schema().len()
            )));
        }
        let mut fields = Vec::with_capacity(left.schema().len());
        for (lf, rf) in left.schema().fields().iter().zip(right.schema().fields()) {
            let unified = DataType::unify(&lf.data_type, &rf.data_type)?;
            let dt = match kind {
                SetOpKind::Union => unified,
                // Intersect and except results are subsets of the left side.
                SetOpKind::Intersect | SetOpKind::Except => lf.data_type.clone(),
            };
            fields.push(Field::new(lf.name.clone(), dt));
        }
        let schema = Schema::new(fields)?;
        let mut h = StableHasher::new();
        h.write_str("setop");
        h.write_str(kind.name());
        h.write_u64(all as u64);
        h.write_str(left.name());
        h.write_str(right.name());
        Ok(Relation::SetOp(SetOp {
            name: generated_name(h),
            kind,
            all,
            left,
            right,
            schema,
        }))
    }
}

/// Split a boolean expression into its AND conjuncts.
pub fn conjuncts(expr: &Expr) -> Vec<&Expr> {
    match expr {
        Expr::Function(Function::And, args) => {
            args.iter().flat_map(conjuncts).collect()
        }
        other => vec![other],
    }
}

/// Deterministic topological order: every node appears after all of its
/// inputs; shared nodes appear once.
pub fn topo_order(root: &Arc<Relation>) -> Vec<Arc<Relation>> {
    let mut seen: HashSet<*const Relation> = HashSet::new();
    let mut out = Vec::new();
    fn visit(
        node: &Arc<Relation>,
        seen: &mut HashSet<*const Relation>,
        out: &mut Vec<Arc<Relation>>,
    ) {
        let ptr = Arc::as_ptr(node);
        if !seen.insert(ptr) {
            return;
        }
        for input in node.inputs() {
            visit(input, seen, out);
        }
        out.push(node.clone());
    }
    visit(root, &mut seen, &mut out);
    out
}

/// Per-node schemas with propagated ranges, bottom-up. Ranges are computed at
/// construction; this exposes them in topological order.
pub fn propagate(root: &Arc<Relation>) -> Vec<(Arc<Relation>, Schema)> {
    topo_order(root)
        .into_iter()
        .map(|node| {
            let schema = node.schema().clone();
            (node, schema)
        })
        .collect()
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.variant_name(), self.name(), self.schema())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_type::DataType;
    use crate::expr::AggOp;

    fn users() -> Arc<Relation> {
        let schema = Schema::new(vec![
            Field::new("id", DataType::integer()),
            Field::new("age", DataType::integer_range(0.0, 120.0)),
        ])
        .unwrap();
        Arc::new(Relation::table("users", schema, Visibility::Private))
    }

    #[test]
    fn table_schema_is_identity() {
        let t = users();
        assert_eq!(t.schema().names(), vec!["id", "age"]);
        assert_eq!(
            t.schema().field("age").unwrap().data_type.to_string(),
            "integer[0, 120]"
        );
    }

    #[test]
    fn map_addition_range() {
        let schema = Schema::new(vec![
            Field::new("a", DataType::float_range(0.0, 1.0)),
            Field::new("b", DataType::float_range(0.0, 1.0)),
        ])
        .unwrap();
        let t = Arc::new(Relation::table("t", schema, Visibility::Public));
        let m = Relation::map(
            vec![("x".into(), Expr::add(Expr::col("a"), Expr::col("b")))],
            None,
            vec![],
            None,
            t,
        )
        .unwrap();
        assert_eq!(
            m.schema().field("x").unwrap().data_type.to_string(),
            "float[0, 2]"
        );
    }

    #[test]
    fn join_disambiguates_shared_names() {
        let s1 = Schema::new(vec![Field::new("a", DataType::integer())]).unwrap();
        let s2 = Schema::new(vec![Field::new("a", DataType::integer())]).unwrap();
        let t1 = Arc::new(Relation::table("t1", s1, Visibility::Public));
        let t2 = Arc::new(Relation::table("t2", s2, Visibility::Public));
        let j = Relation::join(
            JoinKind::Inner,
            Expr::eq(Expr::col("left_a"), Expr::col("right_a")),
            t1,
            t2,
        )
        .unwrap();
        assert_eq!(j.schema().names(), vec!["left_a", "right_a"]);
    }

    #[test]
    fn topo_diamond_lists_shared_table_once() {
        let t = users();
        let m1 = Arc::new(
            Relation::map(
                vec![("id".into(), Expr::col("id"))],
                None,
                vec![],
                None,
                t.clone(),
            )
            .unwrap(),
        );
        let m2 = Arc::new(
            Relation::map(
                vec![("age".into(), Expr::col("age"))],
                None,
                vec![],
                None,
                t.clone(),
            )
            .unwrap(),
        );
        let j = Arc::new(
            Relation::join(JoinKind::Cross, Expr::Literal(Value::Boolean(true)), m1, m2)
                .unwrap(),
        );
        let order = topo_order(&j);
        assert_eq!(order.len(), 4);
        assert_eq!(order[0].name(), "users");
        assert_eq!(order[3].name(), j.name());
    }

    #[test]
    fn structural_equality_ignores_construction_site() {
        let t = users();
        let build = || {
            Relation::reduce(
                vec![("age".into(), Expr::col("age"))],
                vec![("n".into(), Aggregate::new(AggOp::Count, Expr::int(1)))],
                t.clone(),
            )
            .unwrap()
        };
        let a = build();
        let b = build();
        assert!(a.structurally_eq(&b));
        assert_eq!(a.name(), b.name());
    }

    #[test]
    fn filter_refines_ranges() {
        let t = users();
        let m = Relation::map(
            vec![("age".into(), Expr::col("age"))],
            Some(Expr::f(
                Function::Gt,
                vec![Expr::col("age"), Expr::int(18)],
            )),
            vec![],
            None,
            t,
        )
        .unwrap();
        assert_eq!(
            m.schema().field("age").unwrap().data_type.to_string(),
            "integer[18, 120]"
        );
    }
}
