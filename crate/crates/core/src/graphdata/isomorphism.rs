//! Exhaustive backtracking search for typed subgraph occurrences.
//!
//! A pattern occurs in a host graph when there is an injective map of pattern
//! nodes to host nodes that preserves node types and maps every pattern edge
//! onto a host edge of the same type (non-induced matching). Intended for the
//! small graphs used by the synthetic generator (at most ~30 nodes).

use std::collections::BTreeSet;

use super::graph::AttributedGraph;

/// Pattern nodes in an order where every node after the first of its
/// component has an earlier neighbor, paired with that anchor.
fn match_order(pattern: &AttributedGraph) -> Vec<(usize, Option<usize>)> {
    let n = pattern.num_nodes();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for start in 0..n {
        if placed[start] {
            continue;
        }
        placed[start] = true;
        order.push((start, None));
        let mut head = order.len() - 1;
        while head < order.len() {
            let u = order[head].0;
            head += 1;
            for &(v, _) in pattern.neighbors(u) {
                if !placed[v] {
                    placed[v] = true;
                    order.push((v, Some(u)));
                }
            }
        }
    }
    order
}

struct Search<'a> {
    pattern: &'a AttributedGraph,
    host: &'a AttributedGraph,
    order: Vec<(usize, Option<usize>)>,
    mapping: Vec<Option<usize>>,
    used: Vec<bool>,
}

impl Search<'_> {
    fn consistent(&self, p: usize, h: usize) -> bool {
        if self.used[h] || self.pattern.node_types()[p] != self.host.node_types()[h] {
            return false;
        }
        // Every pattern edge to an already-mapped node needs a host edge of
        // the same type; parallel pattern edges need as many host edges.
        let mut need: Vec<(usize, usize)> = Vec::new();
        for &(q, e) in self.pattern.neighbors(p) {
            if q == p {
                need.push((h, e));
            } else if let Some(hq) = self.mapping[q] {
                need.push((hq, e));
            }
        }
        need.sort_unstable();
        let mut i = 0;
        while i < need.len() {
            let mut j = i;
            while j < need.len() && need[j] == need[i] {
                j += 1;
            }
            let (hq, e) = need[i];
            let have = self.host.edge_types_between(h, hq).filter(|&t| t == e).count();
            if have < j - i {
                return false;
            }
            i = j;
        }
        true
    }

    /// Visits every complete mapping; `visit` returns `false` to stop.
    fn run(&mut self, depth: usize, visit: &mut dyn FnMut(&[Option<usize>]) -> bool) -> bool {
        if depth == self.order.len() {
            return visit(&self.mapping);
        }
        let (p, anchor) = self.order[depth];
        let candidates: Vec<usize> = match anchor.and_then(|a| self.mapping[a]) {
            Some(ha) => {
                let mut c: Vec<usize> = self.host.neighbors(ha).iter().map(|&(v, _)| v).collect();
                c.sort_unstable();
                c.dedup();
                c
            }
            None => (0..self.host.num_nodes()).collect(),
        };
        for h in candidates {
            if !self.consistent(p, h) {
                continue;
            }
            self.mapping[p] = Some(h);
            self.used[h] = true;
            let keep_going = self.run(depth + 1, visit);
            self.used[h] = false;
            self.mapping[p] = None;
            if !keep_going {
                return false;
            }
        }
        true
    }
}

fn search(
    pattern: &AttributedGraph,
    host: &AttributedGraph,
    visit: &mut dyn FnMut(&[Option<usize>]) -> bool,
) {
    if pattern.num_nodes() > host.num_nodes() {
        return;
    }
    let mut s = Search {
        pattern,
        host,
        order: match_order(pattern),
        mapping: vec![None; pattern.num_nodes()],
        used: vec![false; host.num_nodes()],
    };
    s.run(0, visit);
}

/// Whether `pattern` occurs anywhere in `host`.
pub fn contains(pattern: &AttributedGraph, host: &AttributedGraph) -> bool {
    let mut found = false;
    search(pattern, host, &mut |_| {
        found = true;
        false
    });
    found
}

/// Every embedding, as `host_node[pattern_node]`.
pub fn embeddings(pattern: &AttributedGraph, host: &AttributedGraph) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    search(pattern, host, &mut |m| {
        out.push(m.iter().map(|h| h.expect("complete mapping")).collect());
        true
    });
    out
}

/// Union of host nodes covered by any occurrence of `pattern`.
pub fn occurrence_nodes(pattern: &AttributedGraph, host: &AttributedGraph) -> BTreeSet<usize> {
    let mut nodes = BTreeSet::new();
    search(pattern, host, &mut |m| {
        nodes.extend(m.iter().flatten());
        true
    });
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(types: &[usize], edges: &[(usize, usize, usize)]) -> AttributedGraph {
        AttributedGraph::new(types.to_vec(), edges.to_vec()).unwrap()
    }

    #[test]
    fn single_node_pattern_is_type_presence() {
        let p = g(&[7], &[]);
        assert!(contains(&p, &g(&[6, 7, 6], &[(0, 1, 0), (1, 2, 0)])));
        assert!(!contains(&p, &g(&[6, 6], &[(0, 1, 0)])));
    }

    #[test]
    fn edge_types_must_match() {
        let p = g(&[0, 1], &[(0, 1, 1)]);
        assert!(!contains(&p, &g(&[0, 1], &[(0, 1, 0)])));
        assert!(contains(&p, &g(&[1, 0], &[(1, 0, 1)])));
    }

    #[test]
    fn path_in_triangle_counts_both_directions() {
        let p = g(&[0, 0], &[(0, 1, 0)]);
        let tri = g(&[0, 0, 0], &[(0, 1, 0), (1, 2, 0), (2, 0, 0)]);
        assert_eq!(embeddings(&p, &tri).len(), 6);
        assert_eq!(occurrence_nodes(&p, &tri).len(), 3);
    }

    #[test]
    fn injectivity() {
        // A 3-path needs three distinct nodes.
        let p = g(&[0, 0, 0], &[(0, 1, 0), (1, 2, 0)]);
        assert!(!contains(&p, &g(&[0, 0], &[(0, 1, 0)])));
    }
}
