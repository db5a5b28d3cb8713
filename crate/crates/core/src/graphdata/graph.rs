use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A typed, undirected input graph.
///
/// Each undirected edge is stored once in `edges`; [`AttributedGraph::neighbors`]
/// exposes the expanded two-directional view.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    node_types: Vec<usize>,
    edges: Vec<(usize, usize, usize)>,
    node_features: Option<Tensor>,
    allow_self_loops: bool,
    neighbors: Vec<Vec<(usize, usize)>>,
}

impl AttributedGraph {
    pub fn new(node_types: Vec<usize>, edges: Vec<(usize, usize, usize)>) -> Result<Self> {
        Self::build(node_types, edges, None, false)
    }

    pub fn with_features(
        node_types: Vec<usize>,
        edges: Vec<(usize, usize, usize)>,
        features: Tensor,
    ) -> Result<Self> {
        Self::build(node_types, edges, Some(features), false)
    }

    /// Full constructor; `allow_self_loops` must be set for `(i, i, e)` edges.
    pub fn build(
        node_types: Vec<usize>,
        edges: Vec<(usize, usize, usize)>,
        node_features: Option<Tensor>,
        allow_self_loops: bool,
    ) -> Result<Self> {
        let n = node_types.len();
        if n == 0 {
            return Err(Error::Validation("graph must have at least one node".into()));
        }
        if let Some(f) = &node_features {
            if f.rows() != n {
                return Err(Error::Validation(format!(
                    "feature matrix has {} rows for {n} nodes",
                    f.rows()
                )));
            }
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j, e) in &edges {
            if i >= n || j >= n {
                return Err(Error::Validation(format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                if !allow_self_loops {
                    return Err(Error::Validation(format!("self-loop on node {i}")));
                }
                neighbors[i].push((i, e));
            } else {
                neighbors[i].push((j, e));
                neighbors[j].push((i, e));
            }
        }
        Ok(Self {
            node_types,
            edges,
            node_features,
            allow_self_loops,
            neighbors,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_types
    }

    /// Edges as stored (one record per undirected edge).
    pub fn edges(&self) -> &[(usize, usize, usize)] {
        &self.edges
    }

    pub fn node_features(&self) -> Option<&Tensor> {
        self.node_features.as_ref()
    }

    pub fn allows_self_loops(&self) -> bool {
        self.allow_self_loops
    }

    /// Expanded neighborhood `N(i)` as `(neighbor, edge_type)` pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.neighbors[i]
    }

    /// Edge types connecting `i` and `j`, if any.
    pub fn edge_types_between(&self, i: usize, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[i]
            .iter()
            .filter(move |&&(n, _)| n == j)
            .map(|&(_, e)| e)
    }

    pub fn max_node_type(&self) -> Option<usize> {
        self.node_types.iter().copied().max()
    }

    pub fn max_edge_type(&self) -> Option<usize> {
        self.edges.iter().map(|e| e.2).max()
    }

    /// Breadth-first hop distances from `root`; unreachable nodes are `None`.
    pub fn bfs_distances(&self, root: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_nodes()];
        let mut queue = VecDeque::new();
        dist[root] = Some(0);
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &(v, _) in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Validation("not a permutation of the node ids".into()));
        }
        let mut types = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            types[p] = self.node_types[i];
        }
        let edges = self
            .edges
            .iter()
            .map(|&(i, j, e)| (perm[i], perm[j], e))
            .collect();
        let features = self.node_features.as_ref().map(|f| {
            let mut out = Tensor::zeros(f.rows(), f.cols());
            for (i, &p) in perm.iter().enumerate() {
                out.row_mut(p).copy_from_slice(f.row(i));
            }
            out
        });
        Self::build(types, edges, features, self.allow_self_loops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_is_symmetric() {
        let g = AttributedGraph::new(vec![0, 1, 2], vec![(0, 1, 0), (1, 2, 1)]).unwrap();
        assert_eq!(g.neighbors(1), &[(0, 0), (2, 1)]);
        assert_eq!(g.neighbors(2), &[(1, 1)]);
        assert_eq!(g.edge_types_between(2, 1).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn rejects_self_loop_unless_flagged() {
        assert!(AttributedGraph::new(vec![0], vec![(0, 0, 0)]).is_err());
        let g = AttributedGraph::build(vec![0], vec![(0, 0, 0)], None, true).unwrap();
        assert_eq!(g.neighbors(0).len(), 1);
    }

    #[test]
    fn rejects_out_of_range_and_empty() {
        assert!(AttributedGraph::new(vec![0, 0], vec![(0, 2, 0)]).is_err());
        assert!(AttributedGraph::new(vec![], vec![]).is_err());
    }
}
