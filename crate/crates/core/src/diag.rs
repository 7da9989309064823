use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::span::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Note,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Note => "note",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: SourceSpan,
    pub message: String,
}

impl Diagnostic {
    pub fn error(span: SourceSpan, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            span,
            message: message.into(),
        }
    }

    pub fn warning(span: SourceSpan, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            span,
            message: message.into(),
        }
    }

    /// Renders as `file:line:col: severity: message`.
    pub fn render(&self, file: &str) -> String {
        format!(
            "{}:{}:{}: {}: {}",
            file, self.span.line, self.span.col, self.severity, self.message
        )
    }
}

/// Failures of the frontend: the input is not in the accepted subset.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrontendError {
    #[error("syntax error: {message}")]
    SyntaxError { span: SourceSpan, message: String },
    #[error("unsupported construct: {name}")]
    UnsupportedConstruct { span: SourceSpan, name: String },
}

impl FrontendError {
    pub fn span(&self) -> SourceSpan {
        match self {
            FrontendError::SyntaxError { span, .. } => *span,
            FrontendError::UnsupportedConstruct { span, .. } => *span,
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::error(self.span(), self.to_string())
    }
}
