//! Parse, normalize, analyze and emit in one call.

use crate::access_analysis::{analyze_unit, AnalysisOptions, UnitPlan};
use crate::diag::Diagnostic;
use crate::frontend::ast::TranslationUnit;
use crate::frontend::parse_translation_unit;
use crate::frontend::sema::Model;
use crate::normalize::hoist_nested_calls;
use crate::span::FileId;
use crate::throttle::ThrottleStrategy;
use crate::transform::transform_unit;

/// A unit after analysis: the original program and the normalized one the
/// plan refers to.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub original: String,
    pub tree0: TranslationUnit,
    pub model0: Model,
    pub text1: String,
    pub tree1: TranslationUnit,
    pub model1: Model,
    pub plan: UnitPlan,
}

pub fn prepare(source: &str, options: &AnalysisOptions) -> Result<Prepared, Vec<Diagnostic>> {
    let tree0 = parse_translation_unit(source, FileId(0)).map_err(|e| vec![e.to_diagnostic()])?;
    let model0 = Model::build(&tree0)?;
    let text1 = hoist_nested_calls(source, &tree0, &model0, &options.exclude).text;
    let tree1 = parse_translation_unit(&text1, FileId(0)).map_err(|e| vec![e.to_diagnostic()])?;
    let model1 = Model::build(&tree1)?;
    let plan = analyze_unit(&model1, &tree1, options)?;
    Ok(Prepared {
        original: source.to_string(),
        tree0,
        model0,
        text1,
        tree1,
        model1,
        plan,
    })
}

impl Prepared {
    pub fn emit(&self, strategy: ThrottleStrategy) -> Result<String, Vec<Diagnostic>> {
        transform_unit(&self.text1, &self.tree1, &self.model1, &self.plan, strategy).map_err(|e| {
            vec![Diagnostic::error(self.tree1.trailing, format!("internal rewrite error: {e}"))]
        })
    }
}

/// Source-to-source transformation of one unit.
pub fn transform_source(source: &str, options: &AnalysisOptions, strategy: ThrottleStrategy) -> Result<String, Vec<Diagnostic>> {
    prepare(source, options)?.emit(strategy)
}
