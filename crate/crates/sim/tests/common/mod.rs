#![allow(dead_code)]

use apac_core::access_analysis::AnalysisOptions;
use apac_core::pipeline::{prepare, Prepared};

pub fn corpus(rel: &str) -> String {
    let path = format!("{}/../../corpus/{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn prepared(src: &str) -> Prepared {
    prepare(src, &AnalysisOptions::default()).unwrap_or_else(|d| panic!("fixture rejected: {d:?}"))
}

pub fn stf(name: &str) -> Prepared {
    prepared(&corpus(&format!("stf/{name}.cpp")))
}

/// Outputs of the corpus programs built with g++ and run natively.
pub const NATIVE_STDOUT: &[(&str, &str)] = &[
    ("aliases", "6 6\n"),
    ("arrays", "236 5\n"),
    ("bank", "80 60 25 80\n"),
    ("code3_main", "5\n"),
    ("code4_main", "7\n"),
    ("fib", "8\n"),
    ("loops", "301 7 6\n"),
    ("mergesort", "0123456789\n"),
    ("molecular", "0.016343 5.012333 0.024533 0.003190\n"),
    ("quicksort", "6 10 24 44 59 67 73 75 78 92 93 97 \n"),
    ("reduction", "213\n"),
    ("returns", "21 50 45\n"),
    ("scopes", "20 4.500\n"),
];
