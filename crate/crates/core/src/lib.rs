//! Source-to-source task parallelization for a small C++ subset.
//!
//! The pipeline parses a translation unit, hoists nested calls, infers
//! `depend` clauses from callee signatures and emits OpenMP task pragmas
//! through a span-anchored rewrite buffer.

pub mod diag;
pub mod frontend;
pub mod span;
pub mod rewrite_buffer;
pub mod normalize;
pub mod access_analysis;
pub mod throttle;
pub mod transform;
pub mod pipeline;
