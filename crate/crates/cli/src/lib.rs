//! Command-line front end for fitting, evaluating and sampling vector-valued
//! emotion-to-landmark models.

pub mod commands;
pub mod config;

use serde_json::json;
use vitl_core::VitlError;

/// Process exit status for an error.
pub fn exit_code(err: &VitlError) -> i32 {
    match err {
        VitlError::Config(_) | VitlError::Data(_) | VitlError::InvalidArgument(_) | VitlError::Io(_) => 2,
        VitlError::Dimension(_) | VitlError::Format(_) => 3,
        VitlError::Numerical(_) => 4,
    }
}

pub fn error_kind(err: &VitlError) -> &'static str {
    match err {
        VitlError::Config(_) => "config",
        VitlError::Data(_) => "data",
        VitlError::InvalidArgument(_) => "invalid_argument",
        VitlError::Io(_) => "io",
        VitlError::Dimension(_) => "dimension",
        VitlError::Format(_) => "format",
        VitlError::Numerical(_) => "numerical",
    }
}

/// The single stderr line printed for a failed run.
pub fn error_line(err: &VitlError) -> String {
    json!({ "error": error_kind(err), "code": exit_code(err), "message": err.to_string() }).to_string()
}
