//! Bounds extraction from WHERE predicates.
//!
//! Conjunctions of comparisons against literals and IN-lists yield per-column
//! constraints; disjunctions extract per branch and merge by union, so a
//! column constrained in only one branch stays unconstrained. Anything the
//! analysis cannot interpret contributes no constraint, which keeps the
//! result a sound over-approximation.

use std::collections::{BTreeMap, BTreeSet};

use crate::data_type::{DataType, Value};
use crate::expr::{Expr, Function};
use crate::interval::KInterval;

/// Per-column constraints extracted from a predicate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Domains {
    pub intervals: BTreeMap<String, KInterval>,
    pub texts: BTreeMap<String, BTreeSet<String>>,
    pub booleans: BTreeMap<String, BTreeSet<bool>>,
}

impl Domains {
    fn meet(mut self, other: Domains) -> Domains {
        for (col, iv) in other.intervals {
            self.intervals
                .entry(col)
                .and_modify(|cur| *cur = cur.intersect(&iv))
                .or_insert(iv);
        }
        for (col, set) in other.texts {
            self.texts
                .entry(col)
                .and_modify(|cur| *cur = cur.intersection(&set).cloned().collect())
                .or_insert(set);
        }
        for (col, set) in other.booleans {
            self.booleans
                .entry(col)
                .and_modify(|cur| *cur = cur.intersection(&set).copied().collect())
                .or_insert(set);
        }
        self
    }

    /// Branch union: only columns constrained in both branches stay
    /// constrained.
    fn join(self, other: Domains) -> Domains {
        let mut out = Domains::default();
        for (col, a) in &self.intervals {
            if let Some(b) = other.intervals.get(col) {
                out.intervals.insert(col.clone(), a.union(b));
            }
        }
        for (col, a) in &self.texts {
            if let Some(b) = other.texts.get(col) {
                out.texts.insert(col.clone(), a.union(b).cloned().collect());
            }
        }
        for (col, a) in &self.booleans {
            if let Some(b) = other.booleans.get(col) {
                out.booleans.insert(col.clone(), a.union(b).copied().collect());
            }
        }
        out
    }
}

/// Numeric bounds implied by a boolean predicate (the k-interval part of
/// `extract_domains`).
pub fn extract_intervals(filter: &Expr, k: usize) -> BTreeMap<String, KInterval> {
    extract_domains(filter, k).intervals
}

pub fn extract_domains(filter: &Expr, k: usize) -> Domains {
    match filter {
        Expr::Function(Function::And, args) => args
            .iter()
            .map(|a| extract_domains(a, k))
            .fold(Domains::default(), Domains::meet),
        Expr::Function(Function::Or, args) => {
            let mut it = args.iter().map(|a| extract_domains(a, k));
            let first = it.next().unwrap_or_default();
            it.fold(first, Domains::join)
        }
        Expr::Function(func, args)
            if matches!(
                func,
                Function::Eq | Function::Lt | Function::LtEq | Function::Gt | Function::GtEq
            ) && args.len() == 2 =>
        {
            comparison_domains(*func, &args[0], &args[1], k)
        }
        Expr::Function(Function::InList, args) => {
            let mut out = Domains::default();
            if let Expr::Column(col) = &args[0] {
                let mut nums = Vec::new();
                let mut texts = BTreeSet::new();
                let mut bools = BTreeSet::new();
                for item in &args[1..] {
                    match item {
                        Expr::Literal(Value::Integer(i)) => nums.push(*i as f64),
                        Expr::Literal(Value::Float(f)) => nums.push(*f),
                        Expr::Literal(Value::Text(s)) => {
                            texts.insert(s.clone());
                        }
                        Expr::Literal(Value::Boolean(b)) => {
                            bools.insert(*b);
                        }
                        _ => return Domains::default(),
                    }
                }
                if !nums.is_empty() && texts.is_empty() && bools.is_empty() {
                    out.intervals.insert(
                        col.clone(),
                        KInterval::from_pieces(nums.into_iter().map(|v| (v, v)), k),
                    );
                } else if !texts.is_empty() && nums.is_empty() && bools.is_empty() {
                    out.texts.insert(col.clone(), texts);
                } else if !bools.is_empty() && nums.is_empty() && texts.is_empty() {
                    out.booleans.insert(col.clone(), bools);
                }
            }
            out
        }
        _ => Domains::default(),
    }
}

fn comparison_domains(func: Function, a: &Expr, b: &Expr, k: usize) -> Domains {
    // Normalize to column-on-the-left.
    let (col, value, func) = match (a, b) {
        (Expr::Column(c), Expr::Literal(v)) => (c, v, func),
        (Expr::Literal(v), Expr::Column(c)) => {
            let flipped = match func {
                Function::Lt => Function::Gt,
                Function::LtEq => Function::GtEq,
                Function::Gt => Function::Lt,
                Function::GtEq => Function::LtEq,
                other => other,
            };
            (c, v, flipped)
        }
        _ => return Domains::default(),
    };
    let mut out = Domains::default();
    match value {
        Value::Integer(_) | Value::Float(_) => {
            let v = value.as_f64().unwrap();
            // Strict inequalities collapse to closed intervals; closed is a
            // superset of open, so soundness is preserved.
            let iv = match func {
                Function::Eq => KInterval::point(v, k),
                Function::Lt | Function::LtEq => KInterval::closed(f64::NEG_INFINITY, v, k),
                Function::Gt | Function::GtEq => KInterval::closed(v, f64::INFINITY, k),
                _ => return Domains::default(),
            };
            out.intervals.insert(col.clone(), iv);
        }
        Value::Text(s) if func == Function::Eq => {
            out.texts.insert(col.clone(), BTreeSet::from([s.clone()]));
        }
        Value::Boolean(b) if func == Function::Eq => {
            out.booleans.insert(col.clone(), BTreeSet::from([*b]));
        }
        _ => {}
    }
    out
}

/// Narrow a column environment with extracted constraints.
pub fn refine_env(
    mut env: BTreeMap<String, DataType>,
    domains: &Domains,
) -> BTreeMap<String, DataType> {
    for (col, iv) in &domains.intervals {
        if let Some(t) = env.get_mut(col) {
            if let Some(cur) = t.interval() {
                *t = t.with_interval(cur.intersect(iv));
            }
        }
    }
    for (col, set) in &domains.texts {
        if let Some(t) = env.get_mut(col) {
            let (bare, opt) = t.unwrap_optional();
            if let DataType::Text(cur) = bare {
                let narrowed = match cur {
                    Some(cur) => cur.intersection(set).cloned().collect(),
                    None => set.clone(),
                };
                *t = DataType::with_optional(DataType::Text(Some(narrowed)), opt);
            }
        }
    }
    for (col, set) in &domains.booleans {
        if let Some(t) = env.get_mut(col) {
            let (bare, opt) = t.unwrap_optional();
            if let DataType::Boolean(cur) = bare {
                let narrowed = match cur {
                    Some(cur) => cur.intersection(set).copied().collect(),
                    None => set.clone(),
                };
                *t = DataType::with_optional(DataType::Boolean(Some(narrowed)), opt);
            }
        }
    }
    env
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(col: &str, v: f64) -> Expr {
        Expr::f(Function::Gt, vec![Expr::col(col), Expr::float(v)])
    }

    fn lteq(col: &str, v: f64) -> Expr {
        Expr::f(Function::LtEq, vec![Expr::col(col), Expr::float(v)])
    }

    #[test]
    fn closed_window_from_strict_and_weak() {
        // x > 0 AND x <= 1 implies x in [0, 1]
        let f = Expr::and(gt("x", 0.0), lteq("x", 1.0));
        let m = extract_intervals(&f, 8);
        assert_eq!(m["x"].pieces(), &[(0.0, 1.0)]);
    }

    #[test]
    fn in_list_three_singletons() {
        let f = Expr::f(
            Function::InList,
            vec![Expr::col("x"), Expr::int(1), Expr::int(2), Expr::int(3)],
        );
        let m = extract_intervals(&f, 8);
        assert_eq!(m["x"].pieces(), &[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
    }

    #[test]
    fn disjunction_leaves_single_branch_columns_unconstrained() {
        // x > 0 OR y < 1: neither column is constrained in both branches.
        let f = Expr::f(Function::Or, vec![gt("x", 0.0), lteq("y", 1.0)]);
        let m = extract_intervals(&f, 8);
        assert!(m.is_empty());
    }

    #[test]
    fn disjunction_unions_shared_column() {
        let f = Expr::f(Function::Or, vec![lteq("x", 0.0), gt("x", 10.0)]);
        let m = extract_intervals(&f, 8);
        assert_eq!(
            m["x"].pieces(),
            &[(f64::NEG_INFINITY, 0.0), (10.0, f64::INFINITY)]
        );
    }

    #[test]
    fn unanalyzable_predicates_are_unconstrained() {
        let f = Expr::f(Function::Not, vec![gt("x", 0.0)]);
        assert!(extract_intervals(&f, 8).is_empty());
        let g = Expr::eq(Expr::col("x"), Expr::col("y"));
        assert!(extract_intervals(&g, 8).is_empty());
    }

    #[test]
    fn flipped_literal_side() {
        // -0.1 < b  is  b > -0.1
        let f = Expr::f(Function::Lt, vec![Expr::float(-0.1), Expr::col("b")]);
        let m = extract_intervals(&f, 8);
        assert_eq!(m["b"].pieces(), &[(-0.1, f64::INFINITY)]);
    }

    #[test]
    fn text_equality_narrows_value_set() {
        let f = Expr::eq(Expr::col("city"), Expr::text("paris"));
        let d = extract_domains(&f, 8);
        assert_eq!(d.texts["city"], BTreeSet::from(["paris".to_string()]));
    }
}
