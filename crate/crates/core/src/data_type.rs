//! Column types carrying value-range information.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{KInterval, DEFAULT_K};

/// A concrete SQL value, used in literals, fixtures and query results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Boolean(bool),
    Integer(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "NULL"),
            Value::Boolean(b) => write!(f, "{}", if *b { "TRUE" } else { "FALSE" }),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

/// Column type: numeric kinds carry a k-interval, text and boolean carry a
/// possible-value set (`None` = unknown), and nullability is the `Optional`
/// wrapper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DataType {
    Boolean(Option<BTreeSet<bool>>),
    Integer(KInterval),
    Float(KInterval),
    Text(Option<BTreeSet<String>>),
    Optional(Box<DataType>),
}

impl DataType {
    pub fn boolean() -> DataType {
        DataType::Boolean(None)
    }

    pub fn integer() -> DataType {
        DataType::Integer(KInterval::unbounded(DEFAULT_K))
    }

    pub fn float() -> DataType {
        DataType::Float(KInterval::unbounded(DEFAULT_K))
    }

    pub fn text() -> DataType {
        DataType::Text(None)
    }

    pub fn integer_range(lo: f64, hi: f64) -> DataType {
        DataType::Integer(KInterval::closed(lo, hi, DEFAULT_K).round_integer())
    }

    pub fn float_range(lo: f64, hi: f64) -> DataType {
        DataType::Float(KInterval::closed(lo, hi, DEFAULT_K))
    }

    pub fn integer_values(values: impl IntoIterator<Item = i64>) -> DataType {
        DataType::Integer(KInterval::from_pieces(
            values.into_iter().map(|v| (v as f64, v as f64)),
            DEFAULT_K,
        ))
    }

    pub fn float_values(values: impl IntoIterator<Item = f64>) -> DataType {
        DataType::Float(KInterval::from_pieces(
            values.into_iter().map(|v| (v, v)),
            DEFAULT_K,
        ))
    }

    pub fn text_values(values: impl IntoIterator<Item = String>) -> DataType {
        DataType::Text(Some(values.into_iter().collect()))
    }

    pub fn optional(inner: DataType) -> DataType {
        match inner {
            DataType::Optional(_) => inner,
            other => DataType::Optional(Box::new(other)),
        }
    }

    pub fn with_optional(inner: DataType, optional: bool) -> DataType {
        if optional {
            DataType::optional(inner)
        } else {
            inner
        }
    }

    pub fn is_optional(&self) -> bool {
        matches!(self, DataType::Optional(_))
    }

    /// Strip the optional wrapper; returns the bare type and whether it was
    /// wrapped.
    pub fn unwrap_optional(&self) -> (&DataType, bool) {
        match self {
            DataType::Optional(inner) => (inner, true),
            other => (other, false),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self.unwrap_optional().0,
            DataType::Integer(_) | DataType::Float(_)
        )
    }

    pub fn is_boolean(&self) -> bool {
        matches!(self.unwrap_optional().0, DataType::Boolean(_))
    }

    pub fn is_text(&self) -> bool {
        matches!(self.unwrap_optional().0, DataType::Text(_))
    }

    /// Numeric range, when numeric.
    pub fn interval(&self) -> Option<&KInterval> {
        match self.unwrap_optional().0 {
            DataType::Integer(iv) | DataType::Float(iv) => Some(iv),
            _ => None,
        }
    }

    /// Same underlying kind with a new numeric range.
    pub fn with_interval(&self, iv: KInterval) -> DataType {
        let (bare, opt) = self.unwrap_optional();
        let replaced = match bare {
            DataType::Integer(_) => DataType::Integer(iv.round_integer()),
            DataType::Float(_) => DataType::Float(iv),
            other => other.clone(),
        };
        DataType::with_optional(replaced, opt)
    }

    /// Kind tag, ignoring ranges and nullability.
    pub fn kind(&self) -> &'static str {
        match self.unwrap_optional().0 {
            DataType::Boolean(_) => "boolean",
            DataType::Integer(_) => "integer",
            DataType::Float(_) => "float",
            DataType::Text(_) => "text",
            DataType::Optional(_) => unreachable!(),
        }
    }

    /// Least common supertype of two column types (used by CASE branches,
    /// LEAST/GREATEST and set operations). Ranges are unioned.
    pub fn unify(a: &DataType, b: &DataType) -> Result<DataType> {
        let (ba, oa) = a.unwrap_optional();
        let (bb, ob) = b.unwrap_optional();
        let optional = oa || ob;
        let bare = match (ba, bb) {
            (DataType::Integer(x), DataType::Integer(y)) => DataType::Integer(x.union(y)),
            (DataType::Integer(x), DataType::Float(y)) | (DataType::Float(y), DataType::Integer(x)) => {
                DataType::Float(x.union(y))
            }
            (DataType::Float(x), DataType::Float(y)) => DataType::Float(x.union(y)),
            (DataType::Text(x), DataType::Text(y)) => DataType::Text(match (x, y) {
                (Some(x), Some(y)) => Some(x.union(y).cloned().collect()),
                _ => None,
            }),
            (DataType::Boolean(x), DataType::Boolean(y)) => DataType::Boolean(match (x, y) {
                (Some(x), Some(y)) => Some(x.union(y).copied().collect()),
                _ => None,
            }),
            (x, y) => {
                return Err(Error::bind(format!(
                    "incompatible types {} and {}",
                    x.kind(),
                    y.kind()
                )))
            }
        };
        Ok(DataType::with_optional(bare, optional))
    }

    /// The type of a literal value.
    pub fn of_value(value: &Value) -> DataType {
        match value {
            // A bare NULL has no carrier type; an optional empty-float stands
            // in and unifies with anything numeric, text-null is handled by
            // unify call sites.
            Value::Null => DataType::Optional(Box::new(DataType::Float(KInterval::empty(DEFAULT_K)))),
            Value::Boolean(b) => DataType::Boolean(Some(BTreeSet::from([*b]))),
            Value::Integer(i) => DataType::Integer(KInterval::point(*i as f64, DEFAULT_K)),
            Value::Float(f) => DataType::Float(KInterval::point(*f, DEFAULT_K)),
            Value::Text(s) => DataType::Text(Some(BTreeSet::from([s.clone()]))),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Boolean(None) => write!(f, "boolean"),
            DataType::Boolean(Some(s)) => {
                let vals: Vec<String> = s.iter().map(|b| b.to_string()).collect();
                write!(f, "boolean{{{}}}", vals.join(", "))
            }
            DataType::Integer(iv) => {
                if iv == &KInterval::unbounded(iv.k()) {
                    write!(f, "integer")
                } else {
                    write!(f, "integer{iv}")
                }
            }
            DataType::Float(iv) => {
                if iv == &KInterval::unbounded(iv.k()) {
                    write!(f, "float")
                } else {
                    write!(f, "float{iv}")
                }
            }
            DataType::Text(None) => write!(f, "text"),
            DataType::Text(Some(s)) => {
                let vals: Vec<String> = s.iter().cloned().collect();
                write!(f, "text{{{}}}", vals.join(", "))
            }
            DataType::Optional(inner) => write!(f, "optional<{inner}>"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_forms() {
        assert_eq!(DataType::integer_range(0.0, 120.0).to_string(), "integer[0, 120]");
        assert_eq!(
            DataType::integer_values([1, 2, 3]).to_string(),
            "integer{1, 2, 3}"
        );
        assert_eq!(DataType::text().to_string(), "text");
        assert_eq!(
            DataType::optional(DataType::float()).to_string(),
            "optional<float>"
        );
    }

    #[test]
    fn unify_promotes_numeric() {
        let t = DataType::unify(
            &DataType::integer_range(0.0, 1.0),
            &DataType::float_range(2.0, 3.0),
        )
        .unwrap();
        assert_eq!(t.kind(), "float");
        assert_eq!(t.interval().unwrap().min(), Some(0.0));
        assert_eq!(t.interval().unwrap().max(), Some(3.0));
    }

    #[test]
    fn unify_rejects_text_number() {
        assert!(DataType::unify(&DataType::text(), &DataType::integer()).is_err());
    }

    #[test]
    fn value_json_round_trip() {
        let vals = vec![
            Value::Null,
            Value::Boolean(true),
            Value::Integer(7),
            Value::Float(0.5),
            Value::Text("x".into()),
        ];
        let json = serde_json::to_string(&vals).unwrap();
        assert_eq!(json, r#"[null,true,7,0.5,"x"]"#);
        let back: Vec<Value> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vals);
    }
}
