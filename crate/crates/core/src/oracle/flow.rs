//! Exact Edmonds-Karp max-flow over rational capacities.
//!
//! Networks here are tiny (users + servers + 2), so the plain BFS
//! augmenting-path method is plenty.

use std::collections::VecDeque;

use num_traits::{Signed, Zero};

use crate::rational::Rat;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: Rat,
    flow: Rat,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds `from -> to` with capacity `cap`; returns the edge handle.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: Rat) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge {
            to,
            cap,
            flow: Rat::zero(),
        });
        self.edges.push(Edge {
            to: from,
            cap: Rat::zero(),
            flow: Rat::zero(),
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    fn residual(&self, e: usize) -> Rat {
        self.edges[e].cap - self.edges[e].flow
    }

    pub fn flow(&self, edge: usize) -> Rat {
        self.edges[edge].flow
    }

    pub fn max_flow(&mut self, source: usize, sink: usize) -> Rat {
        let mut total = Rat::zero();
        loop {
            let mut parent: Vec<Option<usize>> = vec![None; self.adj.len()];
            let mut seen = vec![false; self.adj.len()];
            seen[source] = true;
            let mut queue = VecDeque::from([source]);
            while let Some(u) = queue.pop_front() {
                if u == sink {
                    break;
                }
                for &e in &self.adj[u] {
                    let v = self.edges[e].to;
                    if !seen[v] && self.residual(e).is_positive() {
                        seen[v] = true;
                        parent[v] = Some(e);
                        queue.push_back(v);
                    }
                }
            }
            if !seen[sink] {
                return total;
            }
            let mut bottleneck: Option<Rat> = None;
            let mut v = sink;
            while let Some(e) = parent[v] {
                let r = self.residual(e);
                bottleneck = Some(bottleneck.map_or(r, |b: Rat| b.min(r)));
                v = self.edges[e ^ 1].to;
            }
            let push = bottleneck.expect("augmenting path has edges");
            let mut v = sink;
            while let Some(e) = parent[v] {
                self.edges[e].flow += push;
                self.edges[e ^ 1].flow -= push;
                v = self.edges[e ^ 1].to;
            }
            total += push;
        }
    }

    /// Nodes reachable from `source` through edges with residual capacity.
    pub fn reachable_from(&self, source: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[source] = true;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.edges[e].to;
                if !seen[v] && self.residual(e).is_positive() {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Nodes that can still push flow into `sink` in the residual graph.
    pub fn reaching(&self, sink: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[sink] = true;
        let mut queue = VecDeque::from([sink]);
        while let Some(v) = queue.pop_front() {
            // an edge u -> v with residual capacity is the twin of some
            // edge stored in adj[v]
            for &e in &self.adj[v] {
                let twin = e ^ 1;
                let u = self.edges[e].to;
                if !seen[u] && self.residual(twin).is_positive() {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    #[test]
    fn classic_diamond() {
        let mut g = FlowNetwork::new(4);
        g.add_edge(0, 1, rat(3));
        g.add_edge(0, 2, rat(2));
        g.add_edge(1, 2, rat(5));
        g.add_edge(1, 3, rat(2));
        g.add_edge(2, 3, rat(3));
        assert_eq!(g.max_flow(0, 3), rat(5));
        let cut = g.reachable_from(0);
        assert!(cut[0] && !cut[3]);
    }

    #[test]
    fn rational_capacities() {
        let mut g = FlowNetwork::new(3);
        let a = g.add_edge(0, 1, ratio(5, 4));
        g.add_edge(1, 2, ratio(2, 3));
        assert_eq!(g.max_flow(0, 2), ratio(2, 3));
        assert_eq!(g.flow(a), ratio(2, 3));
        let reach = g.reaching(2);
        assert!(!reach[1] && !reach[0]);
    }
}
