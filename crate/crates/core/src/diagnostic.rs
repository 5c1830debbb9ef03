use std::fmt;
use std::ops::Range;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Machine-readable classification of a diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Code {
    Syntax,
    UnexpectedEnd,
    ArityViolation,
    MalformedClause,
    UnknownTable,
    UnknownColumn,
    MissingQualifier,
    ColumnNotVisible,
    AmbiguousColumn,
    NameCollision,
    DuplicateOutput,
    TypeMismatch,
    SetArityMismatch,
    UngroupedColumn,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::Syntax => "syntax",
            Code::UnexpectedEnd => "unexpected-end",
            Code::ArityViolation => "arity-violation",
            Code::MalformedClause => "malformed-clause",
            Code::UnknownTable => "unknown-table",
            Code::UnknownColumn => "unknown-column",
            Code::MissingQualifier => "missing-qualifier",
            Code::ColumnNotVisible => "column-not-visible",
            Code::AmbiguousColumn => "ambiguous-column",
            Code::NameCollision => "name-collision",
            Code::DuplicateOutput => "duplicate-output",
            Code::TypeMismatch => "type-mismatch",
            Code::SetArityMismatch => "set-arity-mismatch",
            Code::UngroupedColumn => "ungrouped-column",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Code,
    /// Byte span in the source text; empty for diagnostics on parsed plans.
    pub span: Range<usize>,
    /// 1-based bottom-up step the diagnostic refers to, for plan-level checks.
    pub step: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: Code, span: Range<usize>, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            code,
            span,
            step: None,
            message: message.into(),
        }
    }

    pub fn at_step(code: Code, step: usize, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            step: Some(step),
            ..Diagnostic::error(code, 0..0, message)
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]", self.code.as_str())?;
        if let Some(step) = self.step {
            write!(f, " in Step_{step}")?;
        } else {
            write!(f, " at {}", self.span.start)?;
        }
        write!(f, ": {}", self.message)
    }
}
