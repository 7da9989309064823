//! Task graphs extracted from a recording run.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeKind {
    /// Read after write on a depend item.
    Raw,
    /// Write after read on a depend item.
    War,
    /// Write after write on a depend item.
    Waw,
    /// A wait in the target fragment covers the source task.
    Sync,
    /// The source fragment created the target task.
    Nest,
    /// Consecutive fragments of one task.
    Seq,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Raw => "RAW",
            EdgeKind::War => "WAR",
            EdgeKind::Waw => "WAW",
            EdgeKind::Sync => "Sync",
            EdgeKind::Nest => "Nest",
            EdgeKind::Seq => "Seq",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

/// A stretch of one task between two scheduling points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskNode {
    pub id: usize,
    pub task: u32,
    pub fragment: u32,
    /// `callee@line:col`, with `#k` appended for later fragments.
    pub label: String,
    pub reads: Vec<String>,
    pub writes: Vec<String>,
    pub depth: u32,
    pub cost: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TaskGraph {
    pub nodes: Vec<TaskNode>,
    pub edges: Vec<Edge>,
}

impl TaskGraph {
    pub fn new(nodes: Vec<TaskNode>, edges: Vec<Edge>) -> TaskGraph {
        TaskGraph { nodes, edges }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of distinct tasks, the root included.
    pub fn task_count(&self) -> usize {
        self.nodes.iter().map(|n| n.task).collect::<BTreeSet<_>>().len()
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.from].push(e.to);
        }
        out
    }

    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.to].push(e.from);
        }
        out
    }

    /// Kahn order with the lowest ready id first, or `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let succ = self.successors();
        let mut indeg = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            indeg[e.to] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..self.nodes.len()).filter(|&n| indeg[n] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for &s in &succ[n] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Checks that `order` lists every node once and respects every edge.
    pub fn check_order(&self, order: &[usize]) -> Result<(), String> {
        if order.len() != self.nodes.len() {
            return Err(format!("order has {} entries for {} nodes", order.len(), self.nodes.len()));
        }
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for (i, &n) in order.iter().enumerate() {
            if n >= self.nodes.len() {
                return Err(format!("node {n} does not exist"));
            }
            if pos[n] != usize::MAX {
                return Err(format!("node {n} appears twice"));
            }
            pos[n] = i;
        }
        for e in &self.edges {
            if pos[e.from] > pos[e.to] {
                return Err(format!(
                    "`{}` runs before `{}` despite a {} edge",
                    self.nodes[e.to].label, self.nodes[e.from].label, e.kind
                ));
            }
        }
        Ok(())
    }

    pub fn total_cost(&self) -> u64 {
        self.nodes.iter().map(|n| n.cost).sum()
    }

    /// Heaviest path through the graph, counting node costs.
    pub fn critical_path(&self) -> u64 {
        let Some(order) = self.topological_order() else {
            return 0;
        };
        let preds = self.predecessors();
        let mut finish = vec![0u64; self.nodes.len()];
        for n in order {
            let start = preds[n].iter().map(|&p| finish[p]).max().unwrap_or(0);
            finish[n] = start + self.nodes[n].cost;
        }
        finish.into_iter().max().unwrap_or(0)
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph tasks {\n  node [shape=box];\n");
        for n in &self.nodes {
            let _ = writeln!(s, "  n{} [label=\"{} depth={}\"];", n.id, escape(&n.label), n.depth);
        }
        for e in &self.edges {
            let _ = writeln!(s, "  n{} -> n{} [label=\"{}\"];", e.from, e.to, e.kind);
        }
        s.push_str("}\n");
        s
    }

    /// Nodes with no predecessors.
    pub fn sources(&self) -> Vec<usize> {
        let mut indeg = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            indeg[e.to] += 1;
        }
        (0..self.nodes.len()).filter(|&n| indeg[n] == 0).collect()
    }

    pub(crate) fn in_degrees(&self) -> Vec<usize> {
        let mut indeg = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            indeg[e.to] += 1;
        }
        indeg
    }

    /// Breadth-first levels from the sources, mostly for display.
    pub fn levels(&self) -> Vec<usize> {
        let succ = self.successors();
        let mut indeg = self.in_degrees();
        let mut level = vec![0usize; self.nodes.len()];
        let mut queue: VecDeque<usize> = self.sources().into();
        while let Some(n) = queue.pop_front() {
            for &s in &succ[n] {
                level[s] = level[s].max(level[n] + 1);
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    queue.push_back(s);
                }
            }
        }
        level
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: usize, cost: u64) -> TaskNode {
        TaskNode {
            id,
            task: id as u32,
            fragment: 0,
            label: format!("t{id}"),
            reads: vec![],
            writes: vec![],
            depth: 0,
            cost,
        }
    }

    fn diamond() -> TaskGraph {
        let e = |from, to| Edge { from, to, kind: EdgeKind::Raw };
        TaskGraph::new((0..4).map(|i| node(i, i as u64 + 1)).collect(), vec![e(0, 1), e(0, 2), e(1, 3), e(2, 3)])
    }

    #[test]
    fn order_checks() {
        let g = diamond();
        assert!(g.check_order(&[0, 2, 1, 3]).is_ok());
        assert!(g.check_order(&[0, 3, 1, 2]).is_err());
        assert!(g.check_order(&[0, 1, 1, 3]).is_err());
        assert_eq!(g.topological_order(), Some(vec![0, 1, 2, 3]));
    }

    #[test]
    fn critical_path_takes_heaviest_branch() {
        assert_eq!(diamond().critical_path(), 1 + 3 + 4);
        assert_eq!(diamond().total_cost(), 10);
    }

    #[test]
    fn cycle_detected() {
        let mut g = diamond();
        g.edges.push(Edge { from: 3, to: 0, kind: EdgeKind::Sync });
        assert!(!g.is_acyclic());
    }

    #[test]
    fn dot_labels() {
        let dot = diamond().to_dot();
        assert!(dot.contains("n0 [label=\"t0 depth=0\"]"));
        assert!(dot.contains("n0 -> n1 [label=\"RAW\"]"));
    }
}
