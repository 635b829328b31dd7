//! Scalar expression language and aggregate functions, with type and range
//! inference over column environments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::data_type::{DataType, Value};
use crate::error::{Error, Result};
use crate::interval::{KInterval, DEFAULT_K};
use crate::monotone::{self, image};
use crate::stable_hash::StableHasher;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Function {
    Plus,
    Minus,
    Multiply,
    Divide,
    Neg,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    And,
    Or,
    Not,
    Abs,
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Least,
    Greatest,
    /// CASE WHEN args[0] THEN args[1] ELSE args[2] END
    Case,
    /// args[0] IN (args[1..]) where args[1..] are literals
    InList,
    IsNull,
    CastText,
    CastInteger,
    CastFloat,
    /// Uniform draw in [0, 1), bound per dialect at render time.
    RandomUniform,
}

impl Function {
    pub fn name(&self) -> &'static str {
        match self {
            Function::Plus => "+",
            Function::Minus => "-",
            Function::Multiply => "*",
            Function::Divide => "/",
            Function::Neg => "neg",
            Function::Eq => "=",
            Function::NotEq => "<>",
            Function::Lt => "<",
            Function::LtEq => "<=",
            Function::Gt => ">",
            Function::GtEq => ">=",
            Function::And => "AND",
            Function::Or => "OR",
            Function::Not => "NOT",
            Function::Abs => "ABS",
            Function::Exp => "EXP",
            Function::Ln => "LN",
            Function::Sqrt => "SQRT",
            Function::Sin => "SIN",
            Function::Cos => "COS",
            Function::Least => "LEAST",
            Function::Greatest => "GREATEST",
            Function::Case => "CASE",
            Function::InList => "IN",
            Function::IsNull => "IS NULL",
            Function::CastText => "CAST#text",
            Function::CastInteger => "CAST#integer",
            Function::CastFloat => "CAST#float",
            Function::RandomUniform => "RANDOM",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Column(String),
    Literal(Value),
    Function(Function, Vec<Expr>),
}

impl Expr {
    pub fn col(name: impl Into<String>) -> Expr {
        Expr::Column(name.into())
    }

    pub fn int(v: i64) -> Expr {
        Expr::Literal(Value::Integer(v))
    }

    pub fn float(v: f64) -> Expr {
        Expr::Literal(Value::Float(v))
    }

    pub fn text(v: impl Into<String>) -> Expr {
        Expr::Literal(Value::Text(v.into()))
    }

    pub fn f(func: Function, args: Vec<Expr>) -> Expr {
        Expr::Function(func, args)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::f(Function::Plus, vec![a, b])
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::f(Function::Minus, vec![a, b])
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::f(Function::Multiply, vec![a, b])
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::f(Function::Divide, vec![a, b])
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        Expr::f(Function::Eq, vec![a, b])
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::f(Function::And, vec![a, b])
    }

    pub fn and_all(mut exprs: Vec<Expr>) -> Expr {
        match exprs.len() {
            0 => Expr::Literal(Value::Boolean(true)),
            1 => exprs.pop().unwrap(),
            _ => {
                let mut it = exprs.into_iter();
                let first = it.next().unwrap();
                it.fold(first, Expr::and)
            }
        }
    }

    pub fn case(cond: Expr, then: Expr, otherwise: Expr) -> Expr {
        Expr::f(Function::Case, vec![cond, then, otherwise])
    }

    pub fn is_null(e: Expr) -> Expr {
        Expr::f(Function::IsNull, vec![e])
    }

    /// Column names referenced anywhere in the expression.
    pub fn columns(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.visit_columns(&mut |c| {
            out.insert(c);
        });
        out
    }

    fn visit_columns<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Column(c) => f(c),
            Expr::Literal(_) => {}
            Expr::Function(_, args) => args.iter().for_each(|a| a.visit_columns(f)),
        }
    }

    pub fn contains_random(&self) -> bool {
        match self {
            Expr::Function(Function::RandomUniform, _) => true,
            Expr::Function(_, args) => args.iter().any(Expr::contains_random),
            _ => false,
        }
    }

    pub fn hash_into(&self, h: &mut StableHasher) {
        match self {
            Expr::Column(c) => {
                h.write_u64(1);
                h.write_str(c);
            }
            Expr::Literal(v) => {
                h.write_u64(2);
                match v {
                    Value::Null => h.write_u64(0),
                    Value::Boolean(b) => {
                        h.write_u64(3);
                        h.write_u64(*b as u64);
                    }
                    Value::Integer(i) => {
                        h.write_u64(4);
                        h.write_u64(*i as u64);
                    }
                    Value::Float(x) => {
                        h.write_u64(5);
                        h.write_f64(*x);
                    }
                    Value::Text(s) => {
                        h.write_u64(6);
                        h.write_str(s);
                    }
                }
            }
            Expr::Function(func, args) => {
                h.write_u64(7);
                h.write_str(func.name());
                h.write_u64(args.len() as u64);
                args.iter().for_each(|a| a.hash_into(h));
            }
        }
    }

    /// Type and range of the expression over the given column environment.
    pub fn infer_type(&self, env: &BTreeMap<String, DataType>) -> Result<DataType> {
        match self {
            Expr::Column(name) => env
                .get(name)
                .cloned()
                .ok_or_else(|| Error::bind(format!("unknown column {name:?}"))),
            Expr::Literal(v) => Ok(DataType::of_value(v)),
            Expr::Function(func, args) => infer_function(*func, args, env),
        }
    }
}

fn numeric_interval(t: &DataType) -> Result<KInterval> {
    t.interval()
        .cloned()
        .ok_or_else(|| Error::bind(format!("expected a numeric operand, got {t}")))
}

fn all_integer(types: &[DataType]) -> bool {
    types
        .iter()
        .all(|t| matches!(t.unwrap_optional().0, DataType::Integer(_)))
}

fn any_optional(types: &[DataType]) -> bool {
    types.iter().any(DataType::is_optional)
}

/// Truncate-toward-zero applied to an interval (integer division semantics).
fn trunc_interval(iv: &KInterval) -> KInterval {
    KInterval::from_pieces(
        iv.pieces().iter().map(|&(lo, hi)| {
            let t = |v: f64| if v.is_finite() { v.trunc() } else { v };
            (t(lo), t(hi))
        }),
        iv.k(),
    )
}

fn infer_function(
    func: Function,
    args: &[Expr],
    env: &BTreeMap<String, DataType>,
) -> Result<DataType> {
    let arg_types: Vec<DataType> = args
        .iter()
        .map(|a| a.infer_type(env))
        .collect::<Result<_>>()?;
    let optional = any_optional(&arg_types);
    let arity = |n: usize| -> Result<()> {
        if args.len() == n {
            Ok(())
        } else {
            Err(Error::bind(format!(
                "{} expects {n} argument(s), got {}",
                func.name(),
                args.len()
            )))
        }
    };
    let numeric_args = || -> Result<Vec<KInterval>> {
        arg_types.iter().map(numeric_interval).collect()
    };
    match func {
        Function::Plus | Function::Minus | Function::Multiply => {
            arity(2)?;
            let ivs = numeric_args()?;
            let spec = match func {
                Function::Plus => monotone::add_spec(),
                Function::Minus => monotone::sub_spec(),
                _ => monotone::mul_spec(),
            };
            let out = image(&spec, &ivs);
            let bare = if all_integer(&arg_types) {
                DataType::Integer(out.round_integer())
            } else {
                DataType::Float(out)
            };
            Ok(DataType::with_optional(bare, optional))
        }
        Function::Divide => {
            arity(2)?;
            let ivs = numeric_args()?;
            let out = image(&monotone::div_spec(), &ivs);
            let bare = if all_integer(&arg_types) {
                // SQL integer division truncates toward zero.
                DataType::Integer(trunc_interval(&out))
            } else {
                DataType::Float(out)
            };
            Ok(DataType::with_optional(bare, optional))
        }
        Function::Neg => {
            arity(1)?;
            let ivs = numeric_args()?;
            let out = image(&monotone::neg_spec(), &ivs);
            let bare = if all_integer(&arg_types) {
                DataType::Integer(out)
            } else {
                DataType::Float(out)
            };
            Ok(DataType::with_optional(bare, optional))
        }
        Function::Abs => {
            arity(1)?;
            let ivs = numeric_args()?;
            let out = image(&monotone::abs_spec(), &ivs);
            let bare = if all_integer(&arg_types) {
                DataType::Integer(out)
            } else {
                DataType::Float(out)
            };
            Ok(DataType::with_optional(bare, optional))
        }
        Function::Exp | Function::Ln | Function::Sqrt => {
            arity(1)?;
            let ivs = numeric_args()?;
            let spec = match func {
                Function::Exp => monotone::exp_spec(),
                Function::Ln => monotone::ln_spec(),
                _ => monotone::sqrt_spec(),
            };
            Ok(DataType::with_optional(DataType::Float(image(&spec, &ivs)), optional))
        }
        Function::Sin | Function::Cos => {
            arity(1)?;
            let ivs = numeric_args()?;
            let out = if func == Function::Sin {
                monotone::sin_image(&ivs[0])
            } else {
                monotone::cos_image(&ivs[0])
            };
            Ok(DataType::with_optional(DataType::Float(out), optional))
        }
        Function::Least | Function::Greatest => {
            if args.is_empty() {
                return Err(Error::bind(format!("{} needs arguments", func.name())));
            }
            let ivs = numeric_args()?;
            let spec = if func == Function::Least {
                monotone::least_spec(ivs.len())
            } else {
                monotone::greatest_spec(ivs.len())
            };
            let out = image(&spec, &ivs);
            let bare = if all_integer(&arg_types) {
                DataType::Integer(out)
            } else {
                DataType::Float(out)
            };
            Ok(DataType::with_optional(bare, optional))
        }
        Function::Eq | Function::NotEq | Function::Lt | Function::LtEq | Function::Gt | Function::GtEq => {
            arity(2)?;
            let (a, b) = (&arg_types[0], &arg_types[1]);
            let comparable = (a.is_numeric() && b.is_numeric())
                || (a.is_text() && b.is_text())
                || (a.is_boolean() && b.is_boolean());
            if !comparable {
                return Err(Error::bind(format!(
                    "cannot compare {} with {}",
                    a.kind(),
                    b.kind()
                )));
            }
            Ok(DataType::with_optional(DataType::boolean(), optional))
        }
        Function::And | Function::Or => {
            arity(2)?;
            for t in &arg_types {
                if !t.is_boolean() {
                    return Err(Error::bind(format!("{} expects booleans, got {t}", func.name())));
                }
            }
            Ok(DataType::with_optional(DataType::boolean(), optional))
        }
        Function::Not => {
            arity(1)?;
            if !arg_types[0].is_boolean() {
                return Err(Error::bind(format!("NOT expects a boolean, got {}", arg_types[0])));
            }
            Ok(DataType::with_optional(DataType::boolean(), optional))
        }
        Function::Case => {
            arity(3)?;
            if !arg_types[0].is_boolean() {
                return Err(Error::bind("CASE condition must be boolean".to_string()));
            }
            DataType::unify(&arg_types[1], &arg_types[2])
        }
        Function::InList => {
            if args.len() < 2 {
                return Err(Error::bind("IN list must not be empty".to_string()));
            }
            for item in &args[1..] {
                if !matches!(item, Expr::Literal(_)) {
                    return Err(Error::bind("IN list items must be literals".to_string()));
                }
            }
            Ok(DataType::with_optional(DataType::boolean(), optional))
        }
        Function::IsNull => {
            arity(1)?;
            Ok(DataType::boolean())
        }
        Function::CastText => {
            arity(1)?;
            Ok(DataType::with_optional(DataType::text(), optional))
        }
        Function::CastInteger => {
            arity(1)?;
            let iv = arg_types[0]
                .interval()
                .cloned()
                .unwrap_or_else(|| KInterval::unbounded(DEFAULT_K));
            Ok(DataType::with_optional(
                DataType::Integer(trunc_interval(&iv)),
                optional,
            ))
        }
        Function::CastFloat => {
            arity(1)?;
            let iv = arg_types[0]
                .interval()
                .cloned()
                .unwrap_or_else(|| KInterval::unbounded(DEFAULT_K));
            Ok(DataType::with_optional(DataType::Float(iv), optional))
        }
        Function::RandomUniform => {
            arity(0)?;
            Ok(DataType::Float(KInterval::closed(0.0, 1.0, DEFAULT_K)))
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Literal(v) => match v {
                Value::Text(s) => write!(f, "'{s}'"),
                other => write!(f, "{other}"),
            },
            Expr::Function(Function::Case, args) if args.len() == 3 => write!(
                f,
                "CASE WHEN {} THEN {} ELSE {} END",
                args[0], args[1], args[2]
            ),
            Expr::Function(Function::InList, args) => {
                let items: Vec<String> = args[1..].iter().map(|a| a.to_string()).collect();
                write!(f, "({} IN ({}))", args[0], items.join(", "))
            }
            Expr::Function(Function::IsNull, args) => write!(f, "({} IS NULL)", args[0]),
            Expr::Function(Function::Neg, args) => write!(f, "(-{})", args[0]),
            Expr::Function(func, args) if args.len() == 2 && is_infix(*func) => {
                write!(f, "({} {} {})", args[0], func.name(), args[1])
            }
            Expr::Function(func, args) => {
                let items: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                write!(f, "{}({})", func.name(), items.join(", "))
            }
        }
    }
}

fn is_infix(func: Function) -> bool {
    matches!(
        func,
        Function::Plus
            | Function::Minus
            | Function::Multiply
            | Function::Divide
            | Function::Eq
            | Function::NotEq
            | Function::Lt
            | Function::LtEq
            | Function::Gt
            | Function::GtEq
            | Function::And
            | Function::Or
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggOp {
    Count,
    Sum,
    Avg,
    Variance,
    Stddev,
    Min,
    Max,
}

impl AggOp {
    pub fn name(&self) -> &'static str {
        match self {
            AggOp::Count => "COUNT",
            AggOp::Sum => "SUM",
            AggOp::Avg => "AVG",
            AggOp::Variance => "VAR_SAMP",
            AggOp::Stddev => "STDDEV",
            AggOp::Min => "MIN",
            AggOp::Max => "MAX",
        }
    }

    /// Aggregations reducible to sums, i.e. supported by the DP rewriting.
    pub fn dp_supported(&self) -> bool {
        matches!(
            self,
            AggOp::Count | AggOp::Sum | AggOp::Avg | AggOp::Variance | AggOp::Stddev
        )
    }
}

/// An aggregate call. Aggregates appear only in `Reduce` aggregate positions,
/// never nested inside scalar expressions; the structure enforces it.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub op: AggOp,
    pub arg: Expr,
}

impl Aggregate {
    pub fn new(op: AggOp, arg: Expr) -> Aggregate {
        Aggregate { op, arg }
    }

    pub fn count_star() -> Aggregate {
        Aggregate::new(AggOp::Count, Expr::int(1))
    }

    pub fn hash_into(&self, h: &mut StableHasher) {
        h.write_str(self.op.name());
        self.arg.hash_into(h);
    }

    /// Output type over the input environment. `grouped` tells whether the
    /// reduce has grouping keys (groups are then non-empty by construction).
    pub fn infer_type(&self, env: &BTreeMap<String, DataType>, grouped: bool) -> Result<DataType> {
        let arg_type = self.arg.infer_type(env)?;
        let (bare, arg_optional) = arg_type.unwrap_optional();
        // A global aggregate over an empty input yields NULL (except COUNT).
        let optional = arg_optional || !grouped;
        if self.op == AggOp::Count {
            return Ok(DataType::Integer(KInterval::closed(0.0, f64::INFINITY, DEFAULT_K)));
        }
        let iv = numeric_interval(&arg_type)?;
        let (lo, hi) = (
            iv.min().unwrap_or(f64::NEG_INFINITY),
            iv.max().unwrap_or(f64::INFINITY),
        );
        let out = match self.op {
            AggOp::Sum => {
                // n >= 1 values each in [lo, hi]: sign reasoning only.
                let sum_lo = if lo >= 0.0 { 0.0 } else { f64::NEG_INFINITY };
                let sum_hi = if hi <= 0.0 { 0.0 } else { f64::INFINITY };
                let sum_iv = KInterval::closed(sum_lo, sum_hi, iv.k());
                if matches!(bare, DataType::Integer(_)) {
                    DataType::Integer(sum_iv)
                } else {
                    DataType::Float(sum_iv)
                }
            }
            AggOp::Avg => DataType::Float(iv.hull()),
            AggOp::Variance => {
                let width = hi - lo;
                let vmax = if width.is_finite() { width * width } else { f64::INFINITY };
                DataType::Float(KInterval::closed(0.0, vmax, iv.k()))
            }
            AggOp::Stddev => {
                let width = hi - lo;
                let smax = if width.is_finite() { width } else { f64::INFINITY };
                DataType::Float(KInterval::closed(0.0, smax, iv.k()))
            }
            AggOp::Min | AggOp::Max => arg_type.with_interval(iv.hull()),
            AggOp::Count => unreachable!(),
        };
        Ok(DataType::with_optional(out, optional))
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.op.name(), self.arg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(cols: &[(&str, DataType)]) -> BTreeMap<String, DataType> {
        cols.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    #[test]
    fn sum_over_unit_interval_example() {
        let e = env(&[("x", DataType::float_range(0.0, 1.0))]);
        let agg = Aggregate::new(AggOp::Sum, Expr::col("x"));
        let t = agg.infer_type(&e, true).unwrap();
        let iv = t.interval().unwrap();
        assert_eq!(iv.min(), Some(0.0));
        assert_eq!(iv.max(), Some(f64::INFINITY));
    }

    #[test]
    fn count_star_is_nonnegative_integer() {
        let e = env(&[]);
        let t = Aggregate::count_star().infer_type(&e, false).unwrap();
        assert_eq!(t.kind(), "integer");
        assert_eq!(t.interval().unwrap().min(), Some(0.0));
        assert!(!t.is_optional());
    }

    #[test]
    fn addition_range_example() {
        let e = env(&[
            ("a", DataType::float_range(0.0, 1.0)),
            ("b", DataType::float_range(0.0, 1.0)),
        ]);
        let t = Expr::add(Expr::col("a"), Expr::col("b")).infer_type(&e).unwrap();
        assert_eq!(t.interval().unwrap().pieces(), &[(0.0, 2.0)]);
    }

    #[test]
    fn integer_division_truncates() {
        let e = env(&[("a", DataType::integer_range(1.0, 7.0))]);
        let t = Expr::div(Expr::col("a"), Expr::int(2)).infer_type(&e).unwrap();
        assert_eq!(t.kind(), "integer");
        assert_eq!(t.interval().unwrap().pieces(), &[(0.0, 3.0)]);
    }

    #[test]
    fn type_errors() {
        let e = env(&[("s", DataType::text())]);
        assert!(Expr::add(Expr::col("s"), Expr::int(1)).infer_type(&e).is_err());
        assert!(Expr::col("missing").infer_type(&e).is_err());
        assert!(Expr::eq(Expr::col("s"), Expr::int(1)).infer_type(&e).is_err());
    }

    #[test]
    fn case_unifies_branches() {
        let e = env(&[("p", DataType::boolean())]);
        let t = Expr::case(Expr::col("p"), Expr::int(0), Expr::float(1.5))
            .infer_type(&e)
            .unwrap();
        assert_eq!(t.kind(), "float");
        assert!(t.interval().unwrap().contains(0.0));
        assert!(t.interval().unwrap().contains(1.5));
    }
}
