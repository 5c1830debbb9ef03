//! Relational schemas and the in-memory databases plans run against.
//!
//! Names keep their original spelling for display and SQL generation; all
//! lookups are ASCII case-insensitive.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::interpret::Relation;
use crate::semantic::{ColumnSignature, SignatureColumn};
use crate::value::{DataType, Value};

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Malformed(String),
    #[error("schema has no tables")]
    ZeroTables,
    #[error("duplicate table name `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("unknown column type `{dtype}` for `{table}.{column}`")]
    UnknownType {
        table: String,
        column: String,
        dtype: String,
    },
    #[error("primary key column `{column}` does not exist in table `{table}`")]
    UnknownKeyColumn { table: String, column: String },
    #[error("foreign key `{table}.{column}` references missing `{remote_table}.{remote_column}`")]
    DanglingForeignKey {
        table: String,
        column: String,
        remote_table: String,
        remote_column: String,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum ResolveError {
    #[error("column reference `{0}` is not qualified with a table name")]
    MissingQualifier(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("table `{table}` has no column `{column}`")]
    UnknownColumn { table: String, column: String },
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing data file {0}")]
    MissingFile(PathBuf),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: expected {expected} columns, found {found} (row {row})")]
    ArityMismatch {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: header column `{found}` does not match schema column `{expected}`")]
    HeaderMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: row {row}, column `{column}`: cannot parse `{raw}` as {dtype}")]
    UnparseableCell {
        path: PathBuf,
        row: usize,
        column: String,
        raw: String,
        dtype: DataType,
    },
    #[error("relation for table `{0}` does not match its schema")]
    NonConforming(String),
    #[error("no relation supplied for table `{0}`")]
    MissingRelation(String),
    #[error("relation supplied for unknown table `{0}`")]
    ExtraRelation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub dtype: DataType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForeignKey {
    pub column: String,
    pub remote_table: String,
    pub remote_column: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub primary_key: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Every column of the table, qualified by the table's name.
    pub fn signature(&self) -> ColumnSignature {
        ColumnSignature::new(
            self.columns
                .iter()
                .map(|c| SignatureColumn::qualified(&self.name, &c.name, c.dtype))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    db_id: String,
    tables: Vec<Table>,
}

impl Schema {
    /// Builds a schema and checks every structural invariant.
    pub fn new(db_id: impl Into<String>, tables: Vec<Table>) -> Result<Schema, SchemaError> {
        if tables.is_empty() {
            return Err(SchemaError::ZeroTables);
        }
        let mut seen = HashSet::new();
        for table in &tables {
            if !seen.insert(table.name.to_ascii_lowercase()) {
                return Err(SchemaError::DuplicateTable(table.name.clone()));
            }
            let mut cols = HashSet::new();
            for c in &table.columns {
                if !cols.insert(c.name.to_ascii_lowercase()) {
                    return Err(SchemaError::DuplicateColumn {
                        table: table.name.clone(),
                        column: c.name.clone(),
                    });
                }
            }
            let local_columns = table
                .primary_key
                .iter()
                .chain(table.foreign_keys.iter().map(|fk| &fk.column));
            for k in local_columns {
                if table.column(k).is_none() {
                    return Err(SchemaError::UnknownKeyColumn {
                        table: table.name.clone(),
                        column: k.clone(),
                    });
                }
            }
        }
        let schema = Schema {
            db_id: db_id.into(),
            tables,
        };
        for table in &schema.tables {
            for fk in &table.foreign_keys {
                let ok = schema
                    .table(&fk.remote_table)
                    .is_some_and(|t| t.column(&fk.remote_column).is_some());
                if !ok {
                    return Err(SchemaError::DanglingForeignKey {
                        table: table.name.clone(),
                        column: fk.column.clone(),
                        remote_table: fk.remote_table.clone(),
                        remote_column: fk.remote_column.clone(),
                    });
                }
            }
        }
        Ok(schema)
    }

    pub fn db_id(&self) -> &str {
        &self.db_id
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// Resolves a fully qualified `table.column` name.
    pub fn resolve_column(&self, qualified: &str) -> Result<(&Table, &Column), ResolveError> {
        let (table, column) = qualified
            .split_once('.')
            .filter(|(_, c)| !c.contains('.'))
            .ok_or_else(|| ResolveError::MissingQualifier(qualified.to_string()))?;
        self.resolve_parts(table, column)
    }

    pub fn resolve_parts(&self, table: &str, column: &str) -> Result<(&Table, &Column), ResolveError> {
        let t = self
            .table(table)
            .ok_or_else(|| ResolveError::UnknownTable(table.to_string()))?;
        let c = t.column(column).ok_or_else(|| ResolveError::UnknownColumn {
            table: t.name.clone(),
            column: column.to_string(),
        })?;
        Ok((t, c))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDoc {
    db_id: String,
    tables: Vec<TableDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    name: String,
    columns: Vec<ColumnDoc>,
    #[serde(default)]
    primary_key: Vec<String>,
    #[serde(default)]
    foreign_keys: Vec<(String, String, String)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnDoc {
    name: String,
    #[serde(rename = "type")]
    dtype: String,
}

/// Parses a schema JSON document.
pub fn load_schema(source: &str) -> Result<Schema, SchemaError> {
    let doc: SchemaDoc =
        serde_json::from_str(source).map_err(|e| SchemaError::Malformed(e.to_string()))?;
    let mut tables = Vec::with_capacity(doc.tables.len());
    for t in doc.tables {
        let mut columns = Vec::with_capacity(t.columns.len());
        for c in t.columns {
            let dtype = DataType::parse_name(&c.dtype).ok_or_else(|| SchemaError::UnknownType {
                table: t.name.clone(),
                column: c.name.clone(),
                dtype: c.dtype.clone(),
            })?;
            columns.push(Column { name: c.name, dtype });
        }
        tables.push(Table {
            name: t.name,
            columns,
            primary_key: t.primary_key,
            foreign_keys: t
                .foreign_keys
                .into_iter()
                .map(|(column, remote_table, remote_column)| ForeignKey {
                    column,
                    remote_table,
                    remote_column,
                })
                .collect(),
        });
    }
    Schema::new(doc.db_id, tables)
}

pub fn load_schema_file(path: &Path) -> Result<Schema, SchemaError> {
    let text = fs::read_to_string(path)
        .map_err(|e| SchemaError::Malformed(format!("{}: {e}", path.display())))?;
    load_schema(&text)
}

/// Renders a schema back into its JSON document form.
pub fn schema_to_json(schema: &Schema) -> serde_json::Value {
    serde_json::json!({
        "db_id": schema.db_id(),
        "tables": schema.tables().iter().map(|t| serde_json::json!({
            "name": t.name,
            "columns": t.columns.iter().map(|c| serde_json::json!({"name": c.name, "type": c.dtype.name()})).collect::<Vec<_>>(),
            "primary_key": t.primary_key,
            "foreign_keys": t.foreign_keys.iter().map(|fk| serde_json::json!([fk.column, fk.remote_table, fk.remote_column])).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

/// A schema together with one relation per table.
#[derive(Debug, Clone)]
pub struct Database {
    schema: Schema,
    contents: HashMap<String, Relation>,
}

impl Database {
    pub fn new(schema: Schema, relations: Vec<(String, Relation)>) -> Result<Database, DataError> {
        let mut contents = HashMap::new();
        for (name, rel) in relations {
            let table = schema
                .table(&name)
                .ok_or_else(|| DataError::ExtraRelation(name.clone()))?;
            let conforming = rel.signature().len() == table.columns.len()
                && rel.rows().iter().all(|row| {
                    row.len() == table.columns.len()
                        && row.iter().zip(&table.columns).all(|(v, c)| v.conforms_to(c.dtype))
                });
            if !conforming {
                return Err(DataError::NonConforming(table.name.clone()));
            }
            contents.insert(table.name.to_ascii_lowercase(), rel);
        }
        for t in schema.tables() {
            if !contents.contains_key(&t.name.to_ascii_lowercase()) {
                return Err(DataError::MissingRelation(t.name.clone()));
            }
        }
        Ok(Database { schema, contents })
    }

    /// A database with every table empty.
    pub fn empty(schema: Schema) -> Database {
        let relations = schema
            .tables()
            .iter()
            .map(|t| (t.name.clone(), Relation::new(t.signature(), Vec::new())))
            .collect();
        Database::new(schema, relations).expect("empty relations always conform")
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn relation(&self, table: &str) -> Option<&Relation> {
        self.contents.get(&table.to_ascii_lowercase())
    }

    /// Rows of a table, in file order.
    pub fn rows(&self, table: &str) -> &[Vec<Value>] {
        self.relation(table).map_or(&[], |r| r.rows())
    }
}

/// Loads `<table>.csv` for every schema table from `data_dir`.
pub fn load_database(schema: &Schema, data_dir: &Path) -> Result<Database, DataError> {
    let mut relations = Vec::new();
    for table in schema.tables() {
        let path = find_table_file(data_dir, &table.name)
            .ok_or_else(|| DataError::MissingFile(data_dir.join(format!("{}.csv", table.name))))?;
        let text = fs::read_to_string(&path).map_err(|e| DataError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        relations.push((table.name.clone(), parse_table_csv(table, &text, &path)?));
    }
    Database::new(schema.clone(), relations)
}

fn find_table_file(dir: &Path, table: &str) -> Option<PathBuf> {
    let exact = dir.join(format!("{table}.csv"));
    if exact.is_file() {
        return Some(exact);
    }
    let wanted = format!("{}.csv", table.to_ascii_lowercase());
    fs::read_dir(dir)
        .ok()?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .find(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.to_ascii_lowercase() == wanted)
        })
}

/// Parses one table's CSV text. The header must list the schema columns in order.
pub fn parse_table_csv(table: &Table, text: &str, path: &Path) -> Result<Relation, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let io_err = |e: csv::Error| DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let header = reader.headers().map_err(io_err)?.clone();
    if header.len() != table.columns.len() {
        return Err(DataError::ArityMismatch {
            path: path.to_path_buf(),
            row: 0,
            expected: table.columns.len(),
            found: header.len(),
        });
    }
    for (found, col) in header.iter().zip(&table.columns) {
        if !found.trim().eq_ignore_ascii_case(&col.name) {
            return Err(DataError::HeaderMismatch {
                path: path.to_path_buf(),
                expected: col.name.clone(),
                found: found.to_string(),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(io_err)?;
        let row_no = i + 1;
        if record.len() != table.columns.len() {
            return Err(DataError::ArityMismatch {
                path: path.to_path_buf(),
                row: row_no,
                expected: table.columns.len(),
                found: record.len(),
            });
        }
        let row = record
            .iter()
            .zip(&table.columns)
            .map(|(raw, col)| {
                Value::parse_cell(raw, col.dtype).ok_or_else(|| DataError::UnparseableCell {
                    path: path.to_path_buf(),
                    row: row_no,
                    column: col.name.clone(),
                    raw: raw.to_string(),
                    dtype: col.dtype,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Relation::new(table.signature(), rows))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const MUSEUM: &str = r#"{
        "db_id": "museum_visit",
        "tables": [
            {"name": "visitor", "columns": [{"name": "ID", "type": "integer"}, {"name": "Level_of_membership", "type": "integer"}], "primary_key": ["ID"], "foreign_keys": []},
            {"name": "visit", "columns": [{"name": "visitor_ID", "type": "integer"}, {"name": "Total_spent", "type": "real"}], "primary_key": [], "foreign_keys": [["visitor_ID", "visitor", "ID"]]}
        ]
    }"#;

    #[test]
    fn loads_museum_schema() {
        let s = load_schema(MUSEUM).unwrap();
        assert_eq!(s.db_id(), "museum_visit");
        assert_eq!(s.tables().len(), 2);
        assert_eq!(s.table("VISITOR").unwrap().name, "visitor");
    }

    #[test]
    fn zero_tables_rejected() {
        let err = load_schema(r#"{"db_id": "x", "tables": []}"#).unwrap_err();
        assert_eq!(err, SchemaError::ZeroTables);
    }

    #[test]
    fn dangling_foreign_key_rejected() {
        let doc = MUSEUM.replace(r#"["visitor_ID", "visitor", "ID"]"#, r#"["visitor_ID", "person", "ID"]"#);
        assert!(matches!(load_schema(&doc), Err(SchemaError::DanglingForeignKey { .. })));
    }

    #[test]
    fn duplicate_names_rejected_case_insensitively() {
        let doc = MUSEUM.replace(r#""name": "visit","#, r#""name": "VISITOR","#);
        assert!(matches!(load_schema(&doc), Err(SchemaError::DuplicateTable(_))));
        let doc = MUSEUM.replace("Level_of_membership", "id");
        assert!(matches!(load_schema(&doc), Err(SchemaError::DuplicateColumn { .. })));
    }

    #[test]
    fn malformed_document_rejected() {
        assert!(matches!(load_schema("{"), Err(SchemaError::Malformed(_))));
        let doc = MUSEUM.replace(r#""type": "real""#, r#""type": "blob""#);
        assert!(matches!(load_schema(&doc), Err(SchemaError::UnknownType { .. })));
    }

    #[test]
    fn spider_type_names_map_into_closed_set() {
        let doc = MUSEUM.replace(r#""type": "real""#, r#""type": "number""#);
        let s = load_schema(&doc).unwrap();
        assert_eq!(s.table("visit").unwrap().columns[1].dtype, DataType::Real);
    }

    #[test]
    fn resolve_column_cases() {
        let s = load_schema(MUSEUM).unwrap();
        let (t, c) = s.resolve_column("visitor.Level_of_membership").unwrap();
        assert_eq!((t.name.as_str(), c.name.as_str()), ("visitor", "Level_of_membership"));
        assert!(s.resolve_column("VISITOR.level_of_MEMBERSHIP").is_ok());
        assert!(matches!(
            s.resolve_column("visitor.visitor"),
            Err(ResolveError::UnknownColumn { .. })
        ));
        assert!(matches!(
            s.resolve_column("Total_spent"),
            Err(ResolveError::MissingQualifier(_))
        ));
        assert!(matches!(s.resolve_column("nope.ID"), Err(ResolveError::UnknownTable(_))));
    }

    #[test]
    fn resolve_column_exhaustive() {
        let s = load_schema(MUSEUM).unwrap();
        for t in s.tables() {
            for other in s.tables() {
                for c in &other.columns {
                    let q = format!("{}.{}", t.name, c.name);
                    assert_eq!(s.resolve_column(&q).is_ok(), t.column(&c.name).is_some(), "{q}");
                }
            }
        }
    }

    #[test]
    fn csv_loading_errors() {
        let s = load_schema(MUSEUM).unwrap();
        let visitor = s.table("visitor").unwrap();
        let p = Path::new("visitor.csv");
        let rel = parse_table_csv(visitor, "ID,Level_of_membership\n1,1\n2,\n", p).unwrap();
        assert_eq!(rel.rows().len(), 2);
        assert!(rel.rows()[1][1].is_null());
        assert!(matches!(
            parse_table_csv(visitor, "ID,Level_of_membership\n1,gold\n", p),
            Err(DataError::UnparseableCell { .. })
        ));
        assert!(matches!(
            parse_table_csv(visitor, "ID,Level_of_membership\n1,2,3\n", p),
            Err(DataError::ArityMismatch { .. })
        ));
        let empty = parse_table_csv(visitor, "ID,Level_of_membership\n", p).unwrap();
        assert!(empty.rows().is_empty());
    }
}
