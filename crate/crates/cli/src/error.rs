//! Error reporting: every failure path prints a machine-readable JSON
//! diagnostic to stderr and maps to the documented exit codes
//! (0 ok, 1 run/check failure, 2 config error).

use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration (file contents or flag values). Exit 2.
    Config { message: String, field: Option<String> },
    /// A computation failed at run time. Exit 1.
    Run { component: &'static str, message: String },
    /// One or more invariant checks failed; report already printed. Exit 1.
    ChecksFailed,
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    error: DiagnosticBody<'a>,
}

#[derive(Serialize)]
struct DiagnosticBody<'a> {
    component: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl CliError {
    pub fn run(component: &'static str, err: impl std::fmt::Display) -> Self {
        CliError::Run { component, message: err.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Run { .. } | CliError::ChecksFailed => 1,
        }
    }

    pub fn report(&self) {
        let diag = match self {
            CliError::Config { message, field } => Diagnostic {
                error: DiagnosticBody {
                    component: "config",
                    message,
                    field: field.as_deref(),
                },
            },
            CliError::Run { component, message } => Diagnostic {
                error: DiagnosticBody { component, message, field: None },
            },
            CliError::ChecksFailed => Diagnostic {
                error: DiagnosticBody {
                    component: "check",
                    message: "one or more checks failed",
                    field: None,
                },
            },
        };
        let text = serde_json::to_string(&diag)
            .unwrap_or_else(|_| r#"{"error":{"component":"cli","message":"unreportable"}}"#.into());
        eprintln!("{text}");
    }
}
