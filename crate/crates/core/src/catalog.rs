//! Table catalog: schemas, visibility, and synthetic-twin declarations,
//! loadable from a JSON document.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data_type::DataType;
use crate::error::{Error, Result};
use crate::interval::{KInterval, DEFAULT_K};
use crate::relation::{Relation, Visibility};
use crate::schema::{Field, Schema};

/// Reserved prefix for columns the compiler generates; user columns must not
/// use it.
pub const RESERVED_PREFIX: &str = "_qrw";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CatalogDoc {
    tables: Vec<TableDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TableDoc {
    name: String,
    columns: Vec<ColumnDoc>,
    visibility: Visibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    synthetic: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ColumnDoc {
    name: String,
    #[serde(rename = "type")]
    type_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<serde_json::Value>>,
}

#[derive(Clone, Debug)]
pub struct CatalogTable {
    pub name: String,
    pub schema: Schema,
    pub visibility: Visibility,
    pub synthetic: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Catalog {
    tables: BTreeMap<String, CatalogTable>,
}

fn parse_type_name(name: &str) -> Result<DataType> {
    let trimmed = name.trim();
    if let Some(inner) = trimmed
        .strip_prefix("optional<")
        .and_then(|s| s.strip_suffix('>'))
    {
        return Ok(DataType::optional(parse_type_name(inner)?));
    }
    match trimmed {
        "boolean" => Ok(DataType::boolean()),
        "integer" => Ok(DataType::integer()),
        "float" => Ok(DataType::float()),
        "text" => Ok(DataType::text()),
        other => Err(Error::invalid(format!("unknown column type {other:?}"))),
    }
}

fn column_type(doc: &ColumnDoc) -> Result<DataType> {
    let base = parse_type_name(&doc.type_name)?;
    let (bare, optional) = base.unwrap_optional();
    let bare = match bare {
        DataType::Integer(_) | DataType::Float(_) => {
            let iv = if let Some(values) = &doc.values {
                let nums: Option<Vec<f64>> = values.iter().map(|v| v.as_f64()).collect();
                let nums = nums.ok_or_else(|| {
                    Error::invalid(format!("non-numeric values for column {:?}", doc.name))
                })?;
                KInterval::from_pieces(nums.into_iter().map(|v| (v, v)), DEFAULT_K)
            } else {
                KInterval::closed(
                    doc.min.unwrap_or(f64::NEG_INFINITY),
                    doc.max.unwrap_or(f64::INFINITY),
                    DEFAULT_K,
                )
            };
            if matches!(bare, DataType::Integer(_)) {
                DataType::Integer(iv.round_integer())
            } else {
                DataType::Float(iv)
            }
        }
        DataType::Text(_) => {
            if let Some(values) = &doc.values {
                let texts: Option<Vec<String>> = values
                    .iter()
                    .map(|v| v.as_str().map(str::to_string))
                    .collect();
                let texts = texts.ok_or_else(|| {
                    Error::invalid(format!("non-text values for column {:?}", doc.name))
                })?;
                DataType::text_values(texts)
            } else {
                DataType::text()
            }
        }
        other => other.clone(),
    };
    Ok(DataType::with_optional(bare, optional))
}

impl Catalog {
    pub fn new(tables: Vec<CatalogTable>) -> Result<Catalog> {
        let mut map = BTreeMap::new();
        for t in tables {
            for f in t.schema.fields() {
                if f.name.starts_with(RESERVED_PREFIX) {
                    return Err(Error::invalid(format!(
                        "column {:?} in table {:?} uses the reserved prefix {RESERVED_PREFIX}",
                        f.name, t.name
                    )));
                }
            }
            if map.insert(t.name.clone(), t).is_some() {
                return Err(Error::invalid("duplicate table in catalog"));
            }
        }
        Ok(Catalog { tables: map })
    }

    pub fn from_json(json: &str) -> Result<Catalog> {
        let doc: CatalogDoc =
            serde_json::from_str(json).map_err(|e| Error::invalid(format!("catalog: {e}")))?;
        let mut tables = Vec::with_capacity(doc.tables.len());
        for t in &doc.tables {
            let fields: Vec<Field> = t
                .columns
                .iter()
                .map(|c| Ok(Field::new(c.name.clone(), column_type(c)?)))
                .collect::<Result<_>>()?;
            tables.push(CatalogTable {
                name: t.name.clone(),
                schema: Schema::new(fields)?,
                visibility: t.visibility,
                synthetic: t.synthetic.clone(),
            });
        }
        Catalog::new(tables)
    }

    pub fn table(&self, name: &str) -> Option<&CatalogTable> {
        self.tables.get(name)
    }

    pub fn tables(&self) -> impl Iterator<Item = &CatalogTable> {
        self.tables.values()
    }

    pub fn relation(&self, name: &str) -> Option<Arc<Relation>> {
        self.tables.get(name).map(|t| {
            Arc::new(Relation::table(
                t.name.clone(),
                t.schema.clone(),
                t.visibility,
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "tables": [
            {
                "name": "table_1",
                "columns": [
                    {"name": "a", "type": "integer", "values": [1, 2, 3, 4, 5]},
                    {"name": "b", "type": "float", "min": -5.0, "max": 5.0},
                    {"name": "city", "type": "text", "values": ["paris", "rome"]},
                    {"name": "note", "type": "optional<text>"}
                ],
                "visibility": "private",
                "synthetic": "synthetic_table_1"
            },
            {
                "name": "pub",
                "columns": [{"name": "x", "type": "float"}],
                "visibility": "public"
            }
        ]
    }"#;

    #[test]
    fn loads_document() {
        let cat = Catalog::from_json(DOC).unwrap();
        let t = cat.table("table_1").unwrap();
        assert_eq!(t.visibility, Visibility::Private);
        assert_eq!(t.synthetic.as_deref(), Some("synthetic_table_1"));
        assert_eq!(
            t.schema.field("a").unwrap().data_type.to_string(),
            "integer{1, 2, 3, 4, 5}"
        );
        assert_eq!(
            t.schema.field("b").unwrap().data_type.to_string(),
            "float[-5, 5]"
        );
        assert!(t.schema.field("note").unwrap().data_type.is_optional());
        assert_eq!(cat.table("pub").unwrap().visibility, Visibility::Public);
    }

    #[test]
    fn rejects_reserved_prefix() {
        let doc = r#"{"tables": [{"name": "t", "columns": [{"name": "_qrw_pid", "type": "text"}], "visibility": "public"}]}"#;
        assert!(Catalog::from_json(doc).is_err());
    }
}
