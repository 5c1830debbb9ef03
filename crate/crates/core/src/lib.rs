//! Query Plan Language toolchain.
//!
//! A QPL plan is a tree of relational operators written bottom-up. This crate
//! parses plans (including incremental prefix checking for constrained
//! decoding), validates them against a schema, compiles them to SQL common
//! table expressions, runs them with a reference interpreter and evaluates
//! predicted plans against gold plans.

pub mod cte;
pub mod diagnostic;
pub mod eval;
pub mod gen;
pub mod interpret;
pub mod parser;
pub mod plan;
pub mod schema;
pub mod semantic;
pub mod value;

pub use cte::{compile, render, CteProgram, Dialect};
pub use diagnostic::{Code, Diagnostic, Severity};
pub use interpret::{interpret, interpret_all_steps, Relation};
pub use parser::{check_prefix, check_prefix_with_schema, parse, parse_with_schema, serialize, PrefixVerdict};
pub use plan::{Operator, Plan};
pub use schema::{load_database, load_schema, Database, Schema};
pub use semantic::{output_signature, validate, ColumnSignature, ValidationReport};
pub use value::{DataType, Value};
