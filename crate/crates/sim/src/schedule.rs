//! Enumeration and seeded sampling of topological orders.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::TaskGraph;

/// Orders of more than this many nodes are sampled by random ready choice
/// instead of exact uniform sampling.
pub const EXACT_SAMPLING_MAX_NODES: usize = 20;

/// Exhaustive enumeration is used up to this many orders.
pub const EXHAUSTIVE_LIMIT: usize = 5040;

/// Sample count when a graph has too many orders to enumerate.
pub const FALLBACK_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleSet {
    /// Whether `orders` holds every valid order.
    pub exhaustive: bool,
    pub orders: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleRequest {
    /// Every order when there are at most `EXHAUSTIVE_LIMIT`, otherwise
    /// `FALLBACK_SAMPLES` seeded samples.
    All,
    /// Exactly this many seeded samples.
    Random(usize),
}

impl std::str::FromStr for ScheduleRequest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(ScheduleRequest::All);
        }
        match s.strip_prefix("random:").map(str::parse::<usize>) {
            Some(Ok(k)) if k > 0 => Ok(ScheduleRequest::Random(k)),
            _ => Err(format!("expected `all` or `random:K`, got `{s}`")),
        }
    }
}

pub fn select_schedules(graph: &TaskGraph, request: ScheduleRequest, seed: u64) -> ScheduleSet {
    match request {
        ScheduleRequest::All => {
            let set = enumerate_schedules(graph, EXHAUSTIVE_LIMIT, seed);
            if set.exhaustive {
                set
            } else {
                ScheduleSet {
                    exhaustive: false,
                    orders: sample_schedules(graph, FALLBACK_SAMPLES, seed),
                }
            }
        }
        ScheduleRequest::Random(k) => ScheduleSet {
            exhaustive: false,
            orders: sample_schedules(graph, k, seed),
        },
    }
}

/// All orders if there are at most `limit`, otherwise `limit` seeded samples.
pub fn enumerate_schedules(graph: &TaskGraph, limit: usize, seed: u64) -> ScheduleSet {
    let mut orders = Vec::new();
    if all_orders(graph, limit, &mut orders) {
        ScheduleSet { exhaustive: true, orders }
    } else {
        ScheduleSet {
            exhaustive: false,
            orders: sample_schedules(graph, limit, seed),
        }
    }
}

/// Number of orders, stopping once it exceeds `cap`.
pub fn count_schedules(graph: &TaskGraph, cap: usize) -> Option<usize> {
    let mut n = 0usize;
    let mut st = Dfs::new(graph);
    let complete = st.run(&mut |_| {
        n += 1;
        n <= cap
    });
    complete.then_some(n)
}

fn all_orders(graph: &TaskGraph, limit: usize, out: &mut Vec<Vec<usize>>) -> bool {
    let mut st = Dfs::new(graph);
    st.run(&mut |order| {
        if out.len() == limit {
            return false;
        }
        out.push(order.to_vec());
        true
    })
}

struct Dfs {
    succ: Vec<Vec<usize>>,
    indeg: Vec<usize>,
    placed: Vec<bool>,
    order: Vec<usize>,
}

impl Dfs {
    fn new(g: &TaskGraph) -> Dfs {
        Dfs {
            succ: g.successors(),
            indeg: g.in_degrees(),
            placed: vec![false; g.len()],
            order: Vec::with_capacity(g.len()),
        }
    }

    /// Visits every complete order; stops early when `visit` returns false.
    fn run(&mut self, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if self.order.len() == self.placed.len() {
            return visit(&self.order);
        }
        for n in 0..self.placed.len() {
            if self.placed[n] || self.indeg[n] != 0 {
                continue;
            }
            self.placed[n] = true;
            self.order.push(n);
            for &s in &self.succ[n] {
                self.indeg[s] -= 1;
            }
            let go_on = self.run(visit);
            for &s in &self.succ[n] {
                self.indeg[s] += 1;
            }
            self.order.pop();
            self.placed[n] = false;
            if !go_on {
                return false;
            }
        }
        true
    }
}

/// `k` orders drawn with a ChaCha8 stream seeded by `seed`. Small graphs are
/// sampled uniformly over all orders; larger ones pick uniformly among the
/// ready nodes at each step.
pub fn sample_schedules(graph: &TaskGraph, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if graph.len() <= EXACT_SAMPLING_MAX_NODES {
        let mut counter = Extensions::new(graph);
        (0..k).map(|_| counter.sample(&mut rng)).collect()
    } else {
        (0..k).map(|_| random_ready(graph, &mut rng)).collect()
    }
}

fn random_ready(graph: &TaskGraph, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let succ = graph.successors();
    let mut indeg = graph.in_degrees();
    let mut ready: Vec<usize> = graph.sources();
    let mut order = Vec::with_capacity(graph.len());
    while !ready.is_empty() {
        let n = ready.swap_remove(rng.gen_range(0..ready.len()));
        order.push(n);
        for &s in &succ[n] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(s);
            }
        }
    }
    order
}

/// Counts linear extensions per placed down-set, for exact uniform sampling.
struct Extensions {
    n: usize,
    pred_mask: Vec<u32>,
    memo: HashMap<u32, u64>,
}

impl Extensions {
    fn new(g: &TaskGraph) -> Extensions {
        let mut pred_mask = vec![0u32; g.len()];
        for e in &g.edges {
            pred_mask[e.to] |= 1 << e.from;
        }
        Extensions {
            n: g.len(),
            pred_mask,
            memo: HashMap::new(),
        }
    }

    fn ready(&self, placed: u32) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| placed & (1 << v) == 0 && self.pred_mask[v] & !placed == 0)
    }

    fn count(&mut self, placed: u32) -> u64 {
        if placed.count_ones() as usize == self.n {
            return 1;
        }
        if let Some(&c) = self.memo.get(&placed) {
            return c;
        }
        let ready: Vec<usize> = self.ready(placed).collect();
        let c = ready.into_iter().map(|v| self.count(placed | 1 << v)).sum();
        self.memo.insert(placed, c);
        c
    }

    fn sample(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut placed = 0u32;
        let mut order = Vec::with_capacity(self.n);
        while order.len() < self.n {
            let total = self.count(placed);
            let mut pick = rng.gen_range(0..total);
            let ready: Vec<usize> = self.ready(placed).collect();
            for v in ready {
                let c = self.count(placed | 1 << v);
                if pick < c {
                    order.push(v);
                    placed |= 1 << v;
                    break;
                }
                pick -= c;
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeKind, TaskNode};

    fn graph(n: usize, edges: &[(usize, usize)]) -> TaskGraph {
        let nodes = (0..n)
            .map(|id| TaskNode {
                id,
                task: id as u32,
                fragment: 0,
                label: format!("t{id}"),
                reads: vec![],
                writes: vec![],
                depth: 0,
                cost: 1,
            })
            .collect();
        let edges = edges.iter().map(|&(from, to)| Edge { from, to, kind: EdgeKind::Raw }).collect();
        TaskGraph::new(nodes, edges)
    }

    #[test]
    fn counts_antichain_and_chain() {
        assert_eq!(count_schedules(&graph(4, &[]), 100), Some(24));
        assert_eq!(count_schedules(&graph(4, &[(0, 1), (1, 2), (2, 3)]), 100), Some(1));
        assert_eq!(count_schedules(&graph(8, &[]), 100), None);
    }

    #[test]
    fn exhaustive_orders_are_distinct_and_valid() {
        let g = graph(5, &[(0, 1), (0, 2), (3, 4)]);
        let set = enumerate_schedules(&g, 1000, 0);
        assert!(set.exhaustive);
        let mut uniq = set.orders.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), set.orders.len());
        assert!(set.orders.iter().all(|o| g.check_order(o).is_ok()));
    }

    #[test]
    fn sampling_is_seeded() {
        let g = graph(6, &[(0, 5)]);
        assert_eq!(sample_schedules(&g, 10, 7), sample_schedules(&g, 10, 7));
        assert_ne!(sample_schedules(&g, 10, 7), sample_schedules(&g, 10, 8));
    }

    #[test]
    fn request_parses() {
        assert_eq!("all".parse(), Ok(ScheduleRequest::All));
        assert_eq!("random:12".parse(), Ok(ScheduleRequest::Random(12)));
        assert!("random:0".parse::<ScheduleRequest>().is_err());
        assert!("some".parse::<ScheduleRequest>().is_err());
    }
}
