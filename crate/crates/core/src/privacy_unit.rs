//! Privacy-unit definition language and PID materialization.
//!
//! A definition maps each private table to the path of foreign-key steps
//! leading to the table that hosts its privacy identifier. Applying it turns
//! a private table into a relation carrying the original columns plus one
//! synthesized PID column.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::expr::{Expr, Function};
use crate::relation::{JoinKind, Relation};
use crate::schema::Schema;

/// Reserved name of the synthesized PID column.
pub const PID_COLUMN: &str = "_qrw_pid";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub referring: String,
    pub to_table: String,
    pub referred: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuEntry {
    pub table: String,
    #[serde(default)]
    pub path: Vec<PathStep>,
    pub pid: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrivacyUnitDefinition {
    entries: Vec<PuEntry>,
}

impl PrivacyUnitDefinition {
    pub fn new(entries: Vec<PuEntry>) -> PrivacyUnitDefinition {
        PrivacyUnitDefinition { entries }
    }

    /// Parse the JSON document and validate it against the catalog.
    pub fn parse(doc: &str, catalog: &Catalog) -> Result<PrivacyUnitDefinition> {
        let def: PrivacyUnitDefinition = serde_json::from_str(doc)
            .map_err(|e| Error::invalid(format!("privacy unit definition: {e}")))?;
        def.validate(catalog)?;
        Ok(def)
    }

    pub fn entries(&self) -> &[PuEntry] {
        &self.entries
    }

    pub fn entry(&self, table: &str) -> Option<&PuEntry> {
        self.entries.iter().find(|e| e.table == table)
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        let mut seen = BTreeSet::new();
        for entry in &self.entries {
            if !seen.insert(entry.table.as_str()) {
                return Err(Error::invalid(format!(
                    "table {:?} appears in more than one privacy unit entry",
                    entry.table
                )));
            }
            let base = catalog.table(&entry.table).ok_or_else(|| {
                Error::invalid(format!("privacy unit references unknown table {:?}", entry.table))
            })?;
            let mut visited = BTreeSet::from([entry.table.as_str()]);
            let mut prev: &Schema = &base.schema;
            let mut prev_name = entry.table.as_str();
            for step in &entry.path {
                let referring = prev.field(&step.referring).ok_or_else(|| {
                    Error::invalid(format!(
                        "path step refers to unknown column {:?} in table {:?}",
                        step.referring, prev_name
                    ))
                })?;
                let target = catalog.table(&step.to_table).ok_or_else(|| {
                    Error::invalid(format!(
                        "path step refers to unknown table {:?}",
                        step.to_table
                    ))
                })?;
                let referred = target.schema.field(&step.referred).ok_or_else(|| {
                    Error::invalid(format!(
                        "path step refers to unknown column {:?} in table {:?}",
                        step.referred, step.to_table
                    ))
                })?;
                if referring.data_type.kind() != referred.data_type.kind() {
                    return Err(Error::invalid(format!(
                        "path step {}.{} -> {}.{} joins incompatible types {} and {}",
                        prev_name,
                        step.referring,
                        step.to_table,
                        step.referred,
                        referring.data_type.kind(),
                        referred.data_type.kind()
                    )));
                }
                if !visited.insert(step.to_table.as_str()) {
                    return Err(Error::invalid(format!(
                        "privacy unit path for {:?} cycles through {:?}",
                        entry.table, step.to_table
                    )));
                }
                prev = &target.schema;
                prev_name = &step.to_table;
            }
            if prev.field(&entry.pid).is_none() {
                return Err(Error::invalid(format!(
                    "PID column {:?} does not exist in terminal table {:?}",
                    entry.pid, prev_name
                )));
            }
        }
        Ok(())
    }
}

/// Rewrite a private table into a relation computing its original columns
/// plus the PID, following the entry's path as a chain of inner joins. Rows
/// with no resolvable owner are dropped: a row without a privacy unit cannot
/// be protected.
pub fn attach_pid(
    table_rel: &Arc<Relation>,
    def: &PrivacyUnitDefinition,
    catalog: &Catalog,
) -> Result<Arc<Relation>> {
    let table_name = match table_rel.as_ref() {
        Relation::Table(t) => t.name.clone(),
        other => {
            return Err(Error::rewriting(format!(
                "attach_pid expects a table, got {}",
                other.variant_name()
            )))
        }
    };
    let entry = def.entry(&table_name).ok_or_else(|| {
        Error::rewriting(format!(
            "no privacy unit entry for private table {:?}",
            table_name
        ))
    })?;

    let base_len = table_rel.schema().len();
    let base_names: Vec<String> = table_rel
        .schema()
        .names()
        .into_iter()
        .map(str::to_string)
        .collect();

    let mut current = table_rel.clone();
    // Column offset and schema of the table joined last (the base at first):
    // the next step's referring column and the final PID live there.
    let mut prev_offset = 0usize;
    let mut prev_schema = table_rel.schema().clone();
    for step in &entry.path {
        let right = catalog.relation(&step.to_table).ok_or_else(|| {
            Error::rewriting(format!("unknown table {:?} in privacy unit path", step.to_table))
        })?;
        let referring_idx = prev_offset
            + prev_schema.index_of(&step.referring).ok_or_else(|| {
                Error::rewriting(format!("unknown column {:?} in privacy unit path", step.referring))
            })?;
        let referred_idx = right.schema().index_of(&step.referred).ok_or_else(|| {
            Error::rewriting(format!("unknown column {:?} in privacy unit path", step.referred))
        })?;
        let fields = Relation::join_output_fields(JoinKind::Inner, &current, &right);
        let split = current.schema().len();
        let on = Expr::eq(
            Expr::col(fields[referring_idx].name.clone()),
            Expr::col(fields[split + referred_idx].name.clone()),
        );
        prev_offset = split;
        prev_schema = right.schema().clone();
        current = Arc::new(Relation::join(JoinKind::Inner, on, current, right)?);
    }
    let pid_idx = prev_offset
        + prev_schema.index_of(&entry.pid).ok_or_else(|| {
            Error::rewriting(format!("PID column {:?} not found", entry.pid))
        })?;

    // Project the base table's columns back under their original names and
    // append the PID, cast to text so heterogeneous key types compose.
    let out_fields = current.schema().names();
    let mut projections: Vec<(String, Expr)> = Vec::with_capacity(base_len + 1);
    for (i, name) in base_names.iter().enumerate() {
        projections.push((name.clone(), Expr::col(out_fields[i])));
    }
    projections.push((
        PID_COLUMN.to_string(),
        Expr::f(Function::CastText, vec![Expr::col(out_fields[pid_idx])]),
    ));
    Ok(Arc::new(Relation::map(projections, None, vec![], None, current)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;

    const CATALOG: &str = r#"{
        "tables": [
            {"name": "users", "columns": [
                {"name": "id", "type": "integer"},
                {"name": "name", "type": "text"}
            ], "visibility": "private"},
            {"name": "orders", "columns": [
                {"name": "id", "type": "integer"},
                {"name": "user_id", "type": "integer"},
                {"name": "total", "type": "float", "min": 0.0, "max": 100.0}
            ], "visibility": "private"},
            {"name": "items", "columns": [
                {"name": "id", "type": "integer"},
                {"name": "order_id", "type": "integer"},
                {"name": "price", "type": "float", "min": 0.0, "max": 50.0}
            ], "visibility": "private"}
        ]
    }"#;

    const PU: &str = r#"[
        {"table": "users", "path": [], "pid": "id"},
        {"table": "orders", "path": [
            {"referring": "user_id", "to_table": "users", "referred": "id"}
        ], "pid": "id"},
        {"table": "items", "path": [
            {"referring": "order_id", "to_table": "orders", "referred": "id"},
            {"referring": "user_id", "to_table": "users", "referred": "id"}
        ], "pid": "id"}
    ]"#;

    #[test]
    fn parses_three_table_definition() {
        let catalog = Catalog::from_json(CATALOG).unwrap();
        let def = PrivacyUnitDefinition::parse(PU, &catalog).unwrap();
        assert_eq!(def.entries().len(), 3);
        assert_eq!(def.entry("items").unwrap().path.len(), 2);
    }

    #[test]
    fn rejects_missing_table_and_cycles() {
        let catalog = Catalog::from_json(CATALOG).unwrap();
        let missing = r#"[{"table": "nope", "path": [], "pid": "id"}]"#;
        assert!(PrivacyUnitDefinition::parse(missing, &catalog).is_err());
        let cyclic = r#"[{"table": "orders", "path": [
            {"referring": "user_id", "to_table": "users", "referred": "id"},
            {"referring": "id", "to_table": "orders", "referred": "id"}
        ], "pid": "id"}]"#;
        assert!(PrivacyUnitDefinition::parse(cyclic, &catalog).is_err());
        let dangling = r#"[{"table": "orders", "path": [
            {"referring": "missing_col", "to_table": "users", "referred": "id"}
        ], "pid": "id"}]"#;
        assert!(PrivacyUnitDefinition::parse(dangling, &catalog).is_err());
    }

    #[test]
    fn empty_path_projects_pid_from_own_column() {
        let catalog = Catalog::from_json(CATALOG).unwrap();
        let def = PrivacyUnitDefinition::parse(PU, &catalog).unwrap();
        let users = catalog.relation("users").unwrap();
        let rewritten = attach_pid(&users, &def, &catalog).unwrap();
        assert_eq!(rewritten.schema().names(), vec!["id", "name", PID_COLUMN]);
        assert!(matches!(rewritten.as_ref(), Relation::Map(_)));
    }

    #[test]
    fn one_step_path_adds_inner_join() {
        let catalog = Catalog::from_json(CATALOG).unwrap();
        let def = PrivacyUnitDefinition::parse(PU, &catalog).unwrap();
        let orders = catalog.relation("orders").unwrap();
        let rewritten = attach_pid(&orders, &def, &catalog).unwrap();
        assert_eq!(
            rewritten.schema().names(),
            vec!["id", "user_id", "total", PID_COLUMN]
        );
        // Map over Join over (orders, users)
        let Relation::Map(m) = rewritten.as_ref() else { panic!() };
        let Relation::Join(j) = m.input.as_ref() else { panic!() };
        assert_eq!(j.kind, JoinKind::Inner);
        assert_eq!(j.left.name(), "orders");
        assert_eq!(j.right.name(), "users");
    }

    #[test]
    fn two_step_path_chains_joins() {
        let catalog = Catalog::from_json(CATALOG).unwrap();
        let def = PrivacyUnitDefinition::parse(PU, &catalog).unwrap();
        let items = catalog.relation("items").unwrap();
        let rewritten = attach_pid(&items, &def, &catalog).unwrap();
        assert_eq!(
            rewritten.schema().names(),
            vec!["id", "order_id", "price", PID_COLUMN]
        );
        let Relation::Map(m) = rewritten.as_ref() else { panic!() };
        let Relation::Join(outer) = m.input.as_ref() else { panic!() };
        assert_eq!(outer.right.name(), "users");
        let Relation::Join(inner) = outer.left.as_ref() else { panic!() };
        assert_eq!(inner.left.name(), "items");
        assert_eq!(inner.right.name(), "orders");
    }
}
