use std::time::{Duration, Instant};

use apac_core::access_analysis::AnalysisOptions;
use apac_core::frontend::lexer::token_stream;
use apac_core::pipeline::transform_source;
use apac_core::throttle::ThrottleStrategy;

fn corpus(rel: &str) -> String {
    let path = format!("{}/../../corpus/{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

/// Tokens with numeric suffixes of generated names removed.
fn tokens(src: &str) -> Vec<String> {
    token_stream(src)
        .unwrap()
        .into_iter()
        .map(|t| match t.strip_prefix("apac_") {
            Some(rest) => {
                let trimmed = rest.trim_end_matches(|c: char| c.is_ascii_digit());
                format!("apac_{}", trimmed.strip_suffix('_').unwrap_or(trimmed))
            }
            None => t,
        })
        .collect()
}

#[test]
fn listings_are_reproduced() {
    for i in 1..=5 {
        let original = corpus(&format!("golden/code{i}.cpp"));
        let expected = corpus(&format!("golden/code{i}.expected.cpp"));
        let start = Instant::now();
        let out = transform_source(&original, &AnalysisOptions::default(), ThrottleStrategy::Unlimited).unwrap();
        assert!(start.elapsed() < Duration::from_secs(1), "code{i} took {:?}", start.elapsed());
        assert_eq!(tokens(&out), tokens(&expected), "code{i}:\n{out}");
    }
}

#[test]
fn pragmas_never_carry_braces() {
    for i in 1..=5 {
        let out = transform_source(&corpus(&format!("golden/code{i}.cpp")), &AnalysisOptions::default(), ThrottleStrategy::default()).unwrap();
        for line in out.lines().filter(|l| l.trim_start().starts_with("#pragma")) {
            assert!(!line.contains('{') && !line.contains('}'), "code{i}: {line}");
        }
    }
}

#[test]
fn throttled_output_adds_activation_clause() {
    let out = transform_source(&corpus("golden/code1.cpp"), &AnalysisOptions::default(), "depth:5".parse().unwrap()).unwrap();
    assert!(out.contains("if(apac_active)"));
    assert!(out.contains("threadprivate(apac_depth)"));
    let plain = transform_source(&corpus("golden/code1.cpp"), &AnalysisOptions::default(), ThrottleStrategy::Unlimited).unwrap();
    assert!(!plain.contains("if(apac_active)"));
}

#[test]
fn suffix_normalization() {
    assert_eq!(tokens("apac_res_2 apac_res apac_tmp3"), vec!["apac_res", "apac_res", "apac_tmp"]);
}
