//! External SQL engines behind a minimal executor interface.

use rusqlite::types::ValueRef;
use thiserror::Error;

use crate::cte::quote;
use crate::schema::Database;
use crate::value::{DataType, Value};

#[derive(Debug, Error)]
#[error("SQL backend error: {0}")]
pub struct BackendError(pub String);

/// Column names and rows returned by a query.
pub type QueryResult = (Vec<String>, Vec<Vec<Value>>);

/// Submit SQL text, receive columns and rows.
pub trait SqlExecutor {
    /// Runs statements that return no rows (DDL, inserts).
    fn execute_batch(&mut self, sql: &str) -> Result<(), BackendError>;
    fn query(&mut self, sql: &str) -> Result<QueryResult, BackendError>;
}

/// In-memory SQLite through the bundled library.
pub struct SqliteBackend {
    conn: rusqlite::Connection,
}

impl SqliteBackend {
    pub fn in_memory() -> Result<SqliteBackend, BackendError> {
        let conn = rusqlite::Connection::open_in_memory().map_err(|e| BackendError(e.to_string()))?;
        Ok(SqliteBackend { conn })
    }
}

impl SqlExecutor for SqliteBackend {
    fn execute_batch(&mut self, sql: &str) -> Result<(), BackendError> {
        self.conn.execute_batch(sql).map_err(|e| BackendError(e.to_string()))
    }

    fn query(&mut self, sql: &str) -> Result<QueryResult, BackendError> {
        let err = |e: rusqlite::Error| BackendError(e.to_string());
        let mut stmt = self.conn.prepare(sql).map_err(err)?;
        let columns: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
        let width = columns.len();
        let mut rows = Vec::new();
        let mut cursor = stmt.query([]).map_err(err)?;
        while let Some(row) = cursor.next().map_err(err)? {
            let mut out = Vec::with_capacity(width);
            for i in 0..width {
                out.push(match row.get_ref(i).map_err(err)? {
                    ValueRef::Null => Value::Null,
                    ValueRef::Integer(v) => Value::Integer(v),
                    ValueRef::Real(v) => Value::Real(v),
                    ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
                    ValueRef::Blob(_) => return Err(BackendError("unexpected BLOB value".into())),
                });
            }
            rows.push(out);
        }
        Ok((columns, rows))
    }
}

/// Creates every table of `db` (dropping any previous one of the same name)
/// and inserts its rows. Booleans are stored as 0/1 and dates as text.
pub fn load_into(backend: &mut dyn SqlExecutor, db: &Database) -> Result<(), BackendError> {
    let mut sql = String::from("BEGIN;\n");
    for t in db.schema().tables() {
        let cols: Vec<String> = t
            .columns
            .iter()
            .map(|c| format!("{} {}", quote(&c.name), sql_type(c.dtype)))
            .collect();
        sql.push_str(&format!(
            "DROP TABLE IF EXISTS {name};\nCREATE TABLE {name} ({});\n",
            cols.join(", "),
            name = quote(&t.name)
        ));
        for row in db.rows(&t.name) {
            let cells: Vec<String> = row.iter().map(value_sql).collect();
            sql.push_str(&format!("INSERT INTO {} VALUES ({});\n", quote(&t.name), cells.join(", ")));
        }
    }
    sql.push_str("COMMIT;");
    backend.execute_batch(&sql)
}

fn sql_type(t: DataType) -> &'static str {
    match t {
        DataType::Integer | DataType::Boolean => "INTEGER",
        DataType::Real => "REAL",
        DataType::Text | DataType::Date => "TEXT",
    }
}

fn value_sql(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Integer(i) => i.to_string(),
        Value::Real(r) => format!("{r:?}"),
        Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Boolean(b) => u8::from(*b).to_string(),
        Value::Date(_) => format!("'{v}'"),
    }
}
