//! Executes annotated programs as task graphs.
//!
//! A recording run executes every task at its creation point, which is the
//! sequential order, and records one graph node per task fragment. Replaying
//! the program under any topological order of that graph must reproduce the
//! memory state of the unannotated program.

pub mod graph;
mod machine;
pub mod makespan;
pub mod program;
pub mod schedule;
pub mod value;

use apac_core::pipeline::Prepared;
use apac_core::throttle::ThrottleStrategy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{Edge, EdgeKind, TaskGraph, TaskNode};
pub use machine::{GroupActivation, ThrottleStats};
pub use makespan::{simulate_makespan, Makespan};
pub use program::{Ablation, Program};
pub use schedule::{count_schedules, enumerate_schedules, sample_schedules, select_schedules, ScheduleRequest, ScheduleSet};
pub use value::{Cell, MemoryState, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot simulate: {0}")]
    Compile(String),
    #[error("no entry function `{0}`")]
    NoEntry(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("call depth exceeded {0} frames")]
    RecursionLimit(usize),
    #[error("step limit of {0} exceeded")]
    StepLimit(u64),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("execution left the recorded graph: {0}")]
    Mismatch(String),
    #[error("no runnable task among {0} queued")]
    Deadlock(usize),
}

/// Abstract cost of each fragment: `per_task` on a task's first fragment,
/// plus an integer argument of selected callees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub per_task: u64,
    pub arg_costs: Vec<(String, usize)>,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            per_task: 1,
            arg_costs: Vec::new(),
        }
    }
}

impl CostModel {
    /// Charges the value of argument `arg` on every call to `callee`.
    pub fn with_arg_cost(mut self, callee: &str, arg: usize) -> Self {
        self.arg_costs.push((callee.to_string(), arg));
        self
    }

    fn call_cost(&self, callee: &str, args: &[Value]) -> Option<u64> {
        let (_, i) = self.arg_costs.iter().find(|(c, _)| c == callee)?;
        args.get(*i).map(|v| value::num_i64(v).max(0) as u64)
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub entry: String,
    pub strategy: ThrottleStrategy,
    pub cost: CostModel,
    /// Initial values for globals (by name) and entry parameters
    /// (`entry::param`).
    pub input: MemoryState,
    pub max_frames: usize,
    pub step_limit: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            entry: "main".into(),
            strategy: ThrottleStrategy::default(),
            cost: CostModel::default(),
            input: MemoryState::default(),
            max_frames: 10_000,
            step_limit: 200_000_000,
        }
    }
}

impl SimConfig {
    pub fn with_entry(mut self, entry: &str) -> Self {
        self.entry = entry.to_string();
        self
    }

    pub fn with_strategy(mut self, strategy: ThrottleStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_cost(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }
}

/// Runs a program in source order. Annotated programs run each task at its
/// creation point.
pub fn sequential_execute(program: &Program, cfg: &SimConfig) -> Result<MemoryState, SimError> {
    if program.is_tasked() {
        machine::run_record(program, cfg).map(|r| r.2)
    } else {
        machine::run_plain(program, cfg)
    }
}

/// Graph of one recording run, with what is needed to replay it.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub graph: TaskGraph,
    pub state: MemoryState,
    pub stats: ThrottleStats,
    recording: machine::Recording,
}

pub fn extract_task_graph(program: &Program, cfg: &SimConfig) -> Result<Extraction, SimError> {
    let (graph, recording, state, stats) = machine::run_record(program, cfg)?;
    debug_assert!(graph.is_acyclic());
    Ok(Extraction {
        graph,
        state,
        stats,
        recording,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleOutcome {
    Completed(MemoryState),
    /// The run faulted or reached a boundary the recording does not have.
    Faulted(String),
}

/// Replays `ex` under `order`. An order that is not a topological order of
/// the graph is rejected before anything runs.
pub fn schedule_execute(program: &Program, cfg: &SimConfig, ex: &Extraction, order: &[usize]) -> Result<ScheduleOutcome, SimError> {
    ex.graph.check_order(order).map_err(SimError::InvalidSchedule)?;
    Ok(match machine::run_replay(program, cfg, &ex.graph, &ex.recording, order) {
        Ok(state) => ScheduleOutcome::Completed(state),
        Err(e) => ScheduleOutcome::Faulted(e.to_string()),
    })
}

/// Runs with a FIFO queue of deferred tasks: parents keep running after a
/// spawn, so many tasks are live at once.
pub fn run_deferred(program: &Program, cfg: &SimConfig) -> Result<(MemoryState, ThrottleStats), SimError> {
    machine::run_deferred(program, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleVerdict {
    pub index: usize,
    pub order: Vec<usize>,
    /// `None` when the final state matched the reference.
    pub divergence: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StfReport {
    pub reference: MemoryState,
    pub graph: TaskGraph,
    pub exhaustive: bool,
    pub verdicts: Vec<ScheduleVerdict>,
}

impl StfReport {
    pub fn divergences(&self) -> usize {
        self.verdicts.iter().filter(|v| v.divergence.is_some()).count()
    }

    pub fn passed(&self) -> bool {
        self.divergences() == 0
    }
}

/// Compares the unannotated program against the annotated one under each
/// selected schedule.
pub fn check_stf(prepared: &Prepared, ablation: &Ablation, cfg: &SimConfig, request: ScheduleRequest, seed: u64) -> Result<StfReport, SimError> {
    let original = Program::sequential(prepared)?;
    let reference = sequential_execute(&original, cfg)?;
    let tasked = Program::tasked(prepared, ablation)?;
    check_against(&tasked, &reference, cfg, request, seed)
}

/// How schedule replays are spread over threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon data parallelism; same as `Sequential` without the `parallel`
    /// feature.
    #[default]
    Parallel,
}

/// Schedule check of an already compiled annotated program.
pub fn check_against(tasked: &Program, reference: &MemoryState, cfg: &SimConfig, request: ScheduleRequest, seed: u64) -> Result<StfReport, SimError> {
    check_against_with(tasked, reference, cfg, request, seed, Exec::default())
}

pub fn check_against_with(
    tasked: &Program,
    reference: &MemoryState,
    cfg: &SimConfig,
    request: ScheduleRequest,
    seed: u64,
    exec: Exec,
) -> Result<StfReport, SimError> {
    let ex = extract_task_graph(tasked, cfg)?;
    let set = select_schedules(&ex.graph, request, seed);
    let judge = |(index, order): (usize, &Vec<usize>)| -> Result<ScheduleVerdict, SimError> {
        let divergence = match schedule_execute(tasked, cfg, &ex, order)? {
            ScheduleOutcome::Completed(state) => reference.first_difference(&state),
            ScheduleOutcome::Faulted(msg) => Some(msg),
        };
        Ok(ScheduleVerdict {
            index,
            order: order.clone(),
            divergence,
        })
    };
    let verdicts = match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            set.orders.par_iter().enumerate().map(judge).collect::<Result<Vec<_>, _>>()?
        }
        _ => set.orders.iter().enumerate().map(judge).collect::<Result<Vec<_>, _>>()?,
    };
    Ok(StfReport {
        reference: reference.clone(),
        graph: ex.graph,
        exhaustive: set.exhaustive,
        verdicts,
    })
}
