//! Typed cell values shared by the loader, the interpreter and the SQL backend.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Column data types. Spider's `number` maps to `Real`, `others` to `Text`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Integer,
    Real,
    Text,
    Boolean,
    Date,
}

impl DataType {
    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Integer | DataType::Real)
    }

    /// Whether values of the two types may be compared with each other.
    pub fn comparable_with(self, other: DataType) -> bool {
        self == other || (self.is_numeric() && other.is_numeric())
    }

    /// Result type when two streams with these positional types are combined
    /// by a set operation.
    pub fn unify(self, other: DataType) -> Option<DataType> {
        if self == other {
            Some(self)
        } else if self.is_numeric() && other.is_numeric() {
            Some(DataType::Real)
        } else {
            None
        }
    }

    pub fn parse_name(name: &str) -> Option<DataType> {
        match name.to_ascii_lowercase().as_str() {
            "integer" | "int" => Some(DataType::Integer),
            "real" | "number" | "float" | "double" => Some(DataType::Real),
            "text" | "others" | "string" | "varchar" => Some(DataType::Text),
            "boolean" | "bool" => Some(DataType::Boolean),
            "date" | "time" => Some(DataType::Date),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::Integer => "integer",
            DataType::Real => "real",
            DataType::Text => "text",
            DataType::Boolean => "boolean",
            DataType::Date => "date",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single cell. `Null` is a member of every data type.
#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Boolean(bool),
    Date(NaiveDate),
}

pub const DATE_FORMAT: &str = "%Y-%m-%d";

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn data_type(&self) -> Option<DataType> {
        match self {
            Value::Null => None,
            Value::Integer(_) => Some(DataType::Integer),
            Value::Real(_) => Some(DataType::Real),
            Value::Text(_) => Some(DataType::Text),
            Value::Boolean(_) => Some(DataType::Boolean),
            Value::Date(_) => Some(DataType::Date),
        }
    }

    pub fn conforms_to(&self, dtype: DataType) -> bool {
        self.data_type().is_none_or(|t| t == dtype)
    }

    /// Parses a CSV field for the given type. The empty field is null.
    pub fn parse_cell(raw: &str, dtype: DataType) -> Option<Value> {
        if raw.is_empty() {
            return Some(Value::Null);
        }
        let trimmed = raw.trim();
        match dtype {
            DataType::Integer => trimmed.parse().ok().map(Value::Integer),
            DataType::Real => trimmed
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Value::Real),
            DataType::Text => Some(Value::Text(raw.to_string())),
            DataType::Boolean => match trimmed.to_ascii_lowercase().as_str() {
                "true" | "t" | "1" | "yes" => Some(Value::Boolean(true)),
                "false" | "f" | "0" | "no" => Some(Value::Boolean(false)),
                _ => None,
            },
            DataType::Date => parse_date(trimmed).map(Value::Date),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    /// Three-valued comparison: `None` when either side is null or the
    /// values are not comparable.
    pub fn sql_cmp(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Null, _) | (_, Value::Null) => None,
            (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
            (Value::Integer(_) | Value::Real(_), Value::Integer(_) | Value::Real(_)) => {
                self.as_f64()?.partial_cmp(&other.as_f64()?)
            }
            (Value::Text(a), Value::Text(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
            (Value::Boolean(a), Value::Boolean(b)) => Some(a.cmp(b)),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            (Value::Date(a), Value::Text(b)) => parse_date(b).map(|b| a.cmp(&b)),
            (Value::Text(a), Value::Date(b)) => parse_date(a).map(|a| a.cmp(b)),
            _ => None,
        }
    }

    /// Total order used for sorting: nulls first, then by value.
    pub fn sort_cmp(&self, other: &Value) -> Ordering {
        match (self.is_null(), other.is_null()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (false, false) => self
                .sql_cmp(other)
                .unwrap_or_else(|| self.rank().cmp(&other.rank())),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Integer(_) | Value::Real(_) | Value::Boolean(_) => 1,
            Value::Text(_) | Value::Date(_) => 2,
        }
    }

    /// Widens integers to reals; used when a set operation unifies types.
    pub fn coerce_to(self, dtype: DataType) -> Value {
        match (self, dtype) {
            (Value::Integer(i), DataType::Real) => Value::Real(i as f64),
            (v, _) => v,
        }
    }
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let date = NaiveDate::parse_from_str(s, DATE_FORMAT).ok()?;
    // only the zero-padded canonical spelling compares correctly as text
    (date.format(DATE_FORMAT).to_string() == s).then_some(date)
}

/// Grouping equality: null equals null, numbers compare by value.
impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Null, Value::Null) => true,
            (Value::Null, _) | (_, Value::Null) => false,
            _ => self.sql_cmp(other) == Some(Ordering::Equal) && self.rank() == other.rank(),
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Null => 0u8.hash(state),
            Value::Integer(_) | Value::Real(_) => {
                1u8.hash(state);
                let v = self.as_f64().unwrap_or(0.0);
                // -0.0 and 0.0 are equal
                let v = if v == 0.0 { 0.0 } else { v };
                v.to_bits().hash(state);
            }
            Value::Text(s) => {
                2u8.hash(state);
                s.hash(state);
            }
            Value::Boolean(b) => {
                3u8.hash(state);
                b.hash(state);
            }
            Value::Date(d) => {
                2u8.hash(state);
                d.format(DATE_FORMAT).to_string().hash(state);
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Text(s) => f.write_str(s),
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Date(d) => write!(f, "{}", d.format(DATE_FORMAT)),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => serializer.serialize_none(),
            Value::Integer(i) => serializer.serialize_i64(*i),
            Value::Real(r) => serializer.serialize_f64(*r),
            Value::Text(s) => serializer.serialize_str(s),
            Value::Boolean(b) => serializer.serialize_bool(*b),
            Value::Date(d) => serializer.serialize_str(&d.format(DATE_FORMAT).to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_field_is_null_for_every_type() {
        for t in [
            DataType::Integer,
            DataType::Real,
            DataType::Text,
            DataType::Boolean,
            DataType::Date,
        ] {
            assert_eq!(Value::parse_cell("", t), Some(Value::Null));
        }
    }

    #[test]
    fn cell_parsing() {
        assert_eq!(Value::parse_cell("12", DataType::Integer), Some(Value::Integer(12)));
        assert_eq!(Value::parse_cell("x", DataType::Integer), None);
        assert_eq!(Value::parse_cell("2.5", DataType::Real), Some(Value::Real(2.5)));
        assert_eq!(Value::parse_cell("inf", DataType::Real), None);
        assert!(Value::parse_cell("2020-01-05", DataType::Date).is_some());
        assert_eq!(Value::parse_cell("2020-1-5", DataType::Date), None);
        assert_eq!(Value::parse_cell("TRUE", DataType::Boolean), Some(Value::Boolean(true)));
    }

    #[test]
    fn nulls_sort_first() {
        let mut v = vec![Value::Integer(2), Value::Null, Value::Real(1.5)];
        v.sort_by(Value::sort_cmp);
        assert_eq!(v, vec![Value::Null, Value::Real(1.5), Value::Integer(2)]);
    }

    #[test]
    fn null_comparisons_are_unknown() {
        assert_eq!(Value::Null.sql_cmp(&Value::Integer(1)), None);
        assert_eq!(Value::Null, Value::Null);
        assert_eq!(Value::Integer(1), Value::Real(1.0));
    }

    #[test]
    fn unify_types() {
        assert_eq!(DataType::Integer.unify(DataType::Real), Some(DataType::Real));
        assert_eq!(DataType::Text.unify(DataType::Integer), None);
        assert!(DataType::Date.comparable_with(DataType::Date));
        assert!(!DataType::Boolean.comparable_with(DataType::Integer));
    }
}
