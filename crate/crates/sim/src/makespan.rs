//! Greedy list scheduling on a fixed number of workers.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

use crate::graph::TaskGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Makespan {
    pub workers: usize,
    pub makespan: u64,
    pub total_cost: u64,
    pub critical_path: u64,
}

impl Makespan {
    /// Total cost over makespan; 1.0 for an empty graph.
    pub fn speedup(&self) -> f64 {
        if self.makespan == 0 {
            1.0
        } else {
            self.total_cost as f64 / self.makespan as f64
        }
    }
}

/// Idle workers take ready nodes in the order they became ready.
pub fn simulate_makespan(graph: &TaskGraph, workers: usize) -> Makespan {
    let workers = workers.max(1);
    let succ = graph.successors();
    let mut indeg = graph.in_degrees();
    let mut ready: VecDeque<usize> = graph.sources().into();
    let mut running: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut now = 0u64;
    loop {
        while running.len() < workers {
            let Some(n) = ready.pop_front() else { break };
            running.push(Reverse((now + graph.nodes[n].cost, n)));
        }
        let Some(Reverse((t, n))) = running.pop() else { break };
        now = t;
        for &s in &succ[n] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push_back(s);
            }
        }
    }
    Makespan {
        workers,
        makespan: now,
        total_cost: graph.total_cost(),
        critical_path: graph.critical_path(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeKind, TaskNode};

    fn graph(costs: &[u64], edges: &[(usize, usize)]) -> TaskGraph {
        let nodes = costs
            .iter()
            .enumerate()
            .map(|(id, &cost)| TaskNode {
                id,
                task: id as u32,
                fragment: 0,
                label: format!("t{id}"),
                reads: vec![],
                writes: vec![],
                depth: 0,
                cost,
            })
            .collect();
        TaskGraph::new(nodes, edges.iter().map(|&(from, to)| Edge { from, to, kind: EdgeKind::Sync }).collect())
    }

    #[test]
    fn one_worker_sums_costs() {
        let g = graph(&[3, 4, 5, 1], &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(simulate_makespan(&g, 1).makespan, 13);
    }

    #[test]
    fn fork_join_on_two_workers() {
        let g = graph(&[3, 4, 5, 1], &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let m = simulate_makespan(&g, 2);
        assert_eq!(m.makespan, 3 + 5 + 1);
        assert_eq!(m.critical_path, 9);
        assert!((m.speedup() - 13.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn independent_tasks_fill_workers() {
        let g = graph(&[2; 8], &[]);
        assert_eq!(simulate_makespan(&g, 4).makespan, 4);
        assert_eq!(simulate_makespan(&g, 16).makespan, 2);
    }
}
