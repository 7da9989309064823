//! Parsing and name resolution for the accepted C++ subset.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod sema;

pub use ast::TranslationUnit;
pub use parser::parse_translation_unit;
pub use sema::{enumerate_call_sites, enumerate_functions, Model};
