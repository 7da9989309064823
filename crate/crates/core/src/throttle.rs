//! Task-creation throttling: activation preambles and counter instrumentation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access_analysis::GeneratedNames;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThrottleStrategy {
    Unlimited,
    /// Activate a taskgroup only while fewer than `N` tasks exist.
    MaxCount(u32),
    /// Activate a taskgroup only below nesting depth `D`.
    MaxDepth(u32),
}

impl Default for ThrottleStrategy {
    fn default() -> Self {
        ThrottleStrategy::MaxDepth(5)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid strategy `{0}`: expected none, count:N or depth:D")]
pub struct StrategyParseError(pub String);

impl FromStr for ThrottleStrategy {
    type Err = StrategyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || StrategyParseError(s.to_string());
        let t = s.trim();
        if t == "none" {
            return Ok(ThrottleStrategy::Unlimited);
        }
        let (kind, n) = t.split_once(':').ok_or_else(err)?;
        let n: u32 = n.trim().parse().map_err(|_| err())?;
        match kind.trim() {
            "count" => Ok(ThrottleStrategy::MaxCount(n)),
            "depth" => Ok(ThrottleStrategy::MaxDepth(n)),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for ThrottleStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThrottleStrategy::Unlimited => f.write_str("none"),
            ThrottleStrategy::MaxCount(n) => write!(f, "count:{n}"),
            ThrottleStrategy::MaxDepth(d) => write!(f, "depth:{d}"),
        }
    }
}

impl ThrottleStrategy {
    /// Whether a taskgroup created under the given state spawns real tasks.
    pub fn activates(&self, live_tasks: u64, depth: u32) -> bool {
        match *self {
            ThrottleStrategy::Unlimited => true,
            ThrottleStrategy::MaxCount(n) => live_tasks < u64::from(n),
            ThrottleStrategy::MaxDepth(d) => depth < d,
        }
    }
}

/// File-scope declarations the strategy relies on.
pub fn emit_globals(strategy: ThrottleStrategy, names: &GeneratedNames) -> Vec<String> {
    match strategy {
        ThrottleStrategy::Unlimited => Vec::new(),
        ThrottleStrategy::MaxCount(_) => vec![format!("int {} = 0;", names.task_count)],
        ThrottleStrategy::MaxDepth(_) => vec![
            format!("int {} = 0;", names.depth),
            format!("#pragma omp threadprivate({})", names.depth),
        ],
    }
}

/// Lines computing the activation boolean at the start of a taskgroup.
pub fn emit_activation_preamble(strategy: ThrottleStrategy, names: &GeneratedNames) -> Vec<String> {
    match strategy {
        ThrottleStrategy::Unlimited => Vec::new(),
        ThrottleStrategy::MaxCount(n) => vec![
            format!("int {};", names.count_snapshot),
            "#pragma omp atomic read".to_string(),
            format!("{} = {};", names.count_snapshot, names.task_count),
            format!("bool {} = {} < {n};", names.active, names.count_snapshot),
        ],
        ThrottleStrategy::MaxDepth(d) => vec![
            format!("int {} = {};", names.depth_local, names.depth),
            format!("bool {} = {} < {d};", names.active, names.depth_local),
        ],
    }
}

/// `if` clause of every task.
pub fn activation_clause(strategy: ThrottleStrategy, names: &GeneratedNames) -> Option<String> {
    match strategy {
        ThrottleStrategy::Unlimited => None,
        _ => Some(format!("if({})", names.active)),
    }
}

/// Variables every task must capture by value.
pub fn throttle_firstprivate(strategy: ThrottleStrategy, names: &GeneratedNames) -> Vec<String> {
    match strategy {
        ThrottleStrategy::Unlimited => Vec::new(),
        ThrottleStrategy::MaxCount(_) => vec![names.active.clone()],
        ThrottleStrategy::MaxDepth(_) => vec![names.depth_local.clone()],
    }
}

/// Code around one task: lines before its pragma plus text opening and
/// closing its body.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaskInstrumentation {
    pub before: Vec<String>,
    pub body_prefix: String,
    pub body_suffix: String,
}

pub fn instrument_counters(strategy: ThrottleStrategy, names: &GeneratedNames) -> TaskInstrumentation {
    match strategy {
        ThrottleStrategy::Unlimited => TaskInstrumentation::default(),
        ThrottleStrategy::MaxCount(_) => TaskInstrumentation {
            before: vec![
                format!("if({}) {{", names.active),
                "#pragma omp atomic".to_string(),
                format!("{} += 1;", names.task_count),
                "}".to_string(),
            ],
            body_prefix: String::new(),
            body_suffix: format!(
                " if({}) {{\n#pragma omp atomic\n{} -= 1;\n}}",
                names.active, names.task_count
            ),
        },
        ThrottleStrategy::MaxDepth(_) => TaskInstrumentation {
            before: Vec::new(),
            body_prefix: format!(
                "int {s} = {d}; {d} = {l} + 1; ",
                s = names.saved_depth,
                d = names.depth,
                l = names.depth_local
            ),
            body_suffix: format!(" {} = {};", names.depth, names.saved_depth),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> GeneratedNames {
        GeneratedNames {
            active: "apac_active".into(),
            res: "apac_res".into(),
            depth: "apac_depth".into(),
            depth_local: "apac_depth_local".into(),
            saved_depth: "apac_saved_depth".into(),
            task_count: "apac_task_count".into(),
            count_snapshot: "apac_count_snapshot".into(),
        }
    }

    #[test]
    fn parses_and_prints() {
        for s in ["none", "count:8", "depth:5", "depth:0"] {
            assert_eq!(s.parse::<ThrottleStrategy>().unwrap().to_string(), s);
        }
        assert!("depth".parse::<ThrottleStrategy>().is_err());
        assert!("depth:-1".parse::<ThrottleStrategy>().is_err());
        assert!("width:3".parse::<ThrottleStrategy>().is_err());
    }

    #[test]
    fn unlimited_emits_nothing() {
        let n = names();
        assert!(emit_activation_preamble(ThrottleStrategy::Unlimited, &n).is_empty());
        assert!(activation_clause(ThrottleStrategy::Unlimited, &n).is_none());
        assert!(throttle_firstprivate(ThrottleStrategy::Unlimited, &n).is_empty());
        assert_eq!(instrument_counters(ThrottleStrategy::Unlimited, &n), TaskInstrumentation::default());
    }

    #[test]
    fn depth_preamble_compares_local_copy() {
        let lines = emit_activation_preamble(ThrottleStrategy::MaxDepth(3), &names());
        assert_eq!(lines, ["int apac_depth_local = apac_depth;", "bool apac_active = apac_depth_local < 3;"]);
    }

    #[test]
    fn activation_rules() {
        assert!(ThrottleStrategy::MaxDepth(2).activates(100, 1));
        assert!(!ThrottleStrategy::MaxDepth(2).activates(0, 2));
        assert!(!ThrottleStrategy::MaxDepth(0).activates(0, 0));
        assert!(ThrottleStrategy::MaxCount(4).activates(3, 9));
        assert!(!ThrottleStrategy::MaxCount(4).activates(4, 0));
    }
}
