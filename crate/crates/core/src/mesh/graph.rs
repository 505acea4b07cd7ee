use std::collections::VecDeque;
use std::sync::Arc;

use super::{norm, sub, MeshError, TetMesh};

/// Undirected node graph of a tetrahedral mesh.
///
/// Two nodes are adjacent iff they share a tetrahedron. Each edge is stored
/// once as `(u, v)` with `u < v` and weighted by the inverse Euclidean distance
/// between its endpoints (1/mm). Adjacency is also kept in compressed form with
/// neighbours sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshGraph {
    node_count: usize,
    edges: Vec<[usize; 2]>,
    weights: Vec<f64>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    neighbor_edges: Vec<usize>,
}

/// Directed arcs for message passing: for every undirected edge both `v → u`
/// and `u → v`, grouped by destination.
#[derive(Clone, Debug)]
pub struct Arcs {
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub weight: Arc<[f64]>,
}

impl MeshGraph {
    pub fn build(mesh: &TetMesh) -> Result<Self, MeshError> {
        let mut pairs: Vec<[usize; 2]> = Vec::with_capacity(mesh.tet_count() * 6);
        for tet in mesh.tets() {
            for i in 0..4 {
                for j in i + 1..4 {
                    let (u, v) = (tet[i].min(tet[j]), tet[i].max(tet[j]));
                    if u != v {
                        pairs.push([u, v]);
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let nodes = mesh.nodes();
        let mut weights = Vec::with_capacity(pairs.len());
        for &[u, v] in &pairs {
            let d = norm(sub(nodes[u], nodes[v]));
            let w = 1.0 / d;
            if !(d > 0.0) || !w.is_finite() {
                return Err(MeshError::CoincidentNodes { u, v });
            }
            weights.push(w);
        }
        Ok(Self::from_weighted_edges(mesh.node_count(), pairs, weights))
    }

    /// Assembles the compressed adjacency from deduplicated `u < v` edges.
    fn from_weighted_edges(node_count: usize, edges: Vec<[usize; 2]>, weights: Vec<f64>) -> Self {
        let mut degree = vec![0usize; node_count];
        for &[u, v] in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0; offsets[node_count]];
        let mut neighbor_edges = vec![0; offsets[node_count]];
        for (e, &[u, v]) in edges.iter().enumerate() {
            neighbors[fill[u]] = v;
            neighbor_edges[fill[u]] = e;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            neighbor_edges[fill[v]] = e;
            fill[v] += 1;
        }
        for u in 0..node_count {
            let range = offsets[u]..offsets[u + 1];
            let mut pairs: Vec<(usize, usize)> = neighbors[range.clone()]
                .iter()
                .copied()
                .zip(neighbor_edges[range.clone()].iter().copied())
                .collect();
            pairs.sort_unstable();
            for (k, (n, e)) in pairs.into_iter().enumerate() {
                neighbors[range.start + k] = n;
                neighbor_edges[range.start + k] = e;
            }
        }
        Self {
            node_count,
            edges,
            weights,
            offsets,
            neighbors,
            neighbor_edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    /// Weight of edge `{u, v}`, if it exists. Symmetric in its arguments.
    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let range = self.offsets[u]..self.offsets[u + 1];
        let k = self.neighbors[range.clone()].binary_search(&v).ok()?;
        Some(self.weights[self.neighbor_edges[range.start + k]])
    }

    /// Both directions of every edge, ordered by destination then source.
    pub fn arcs(&self) -> Arcs {
        let n = self.neighbors.len();
        let mut src = Vec::with_capacity(n);
        let mut dst = Vec::with_capacity(n);
        let mut weight = Vec::with_capacity(n);
        for u in 0..self.node_count {
            for k in self.offsets[u]..self.offsets[u + 1] {
                src.push(self.neighbors[k]);
                dst.push(u);
                weight.push(self.weights[self.neighbor_edges[k]]);
            }
        }
        Arcs {
            src: src.into(),
            dst: dst.into(),
            weight: weight.into(),
        }
    }

    /// Hop distances from `start`; unreachable nodes get `usize::MAX`.
    pub fn hop_distances(&self, start: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count];
        let mut queue = VecDeque::new();
        dist[start] = 0;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::mesh::{generate_synthetic_mesh, Point, Region};

    fn unit_tet_nodes() -> Vec<Point> {
        vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    }

    #[test]
    fn single_tet_is_complete_graph() {
        let mesh = TetMesh::new(unit_tet_nodes(), vec![[0, 1, 2, 3]], vec![Region::Healthy]).unwrap();
        let g = MeshGraph::build(&mesh).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!((0..4).all(|u| g.degree(u) == 3));
    }

    #[test]
    fn two_tets_sharing_a_face() {
        let mut nodes = unit_tet_nodes();
        nodes.push([1.0, 1.0, 1.0]);
        let mesh = TetMesh::new(
            nodes,
            vec![[0, 1, 2, 3], [1, 2, 3, 4]],
            vec![Region::Healthy; 2],
        )
        .unwrap();
        let g = MeshGraph::build(&mesh).unwrap();
        assert_eq!(g.node_count(), 5);
        // 6 + 6 pairs, minus the 3 edges of the shared face.
        assert_eq!(g.edge_count(), 9);
        assert_eq!(g.weight(0, 4), None);
    }

    #[test]
    fn weight_is_inverse_distance() {
        let nodes = vec![
            [0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, 0.0, 2.0],
        ];
        let mesh = TetMesh::new(nodes, vec![[0, 1, 2, 3]], vec![Region::Healthy]).unwrap();
        let g = MeshGraph::build(&mesh).unwrap();
        assert_eq!(g.weight(0, 1), Some(0.5));
        assert_eq!(g.weight(1, 0), Some(0.5));
    }

    #[test]
    fn coincident_nodes_are_rejected() {
        let mut nodes = unit_tet_nodes();
        nodes[3] = nodes[0];
        let mesh = TetMesh::from_raw_unchecked(nodes, vec![[0, 1, 2, 3]], vec![Region::Healthy]);
        assert_eq!(
            MeshGraph::build(&mesh).unwrap_err(),
            MeshError::CoincidentNodes { u: 0, v: 3 }
        );
    }

    #[test]
    fn hop_distances_on_grid() {
        let mesh = generate_synthetic_mesh(4, 2, 2, 1.0, None).unwrap();
        let g = MeshGraph::build(&mesh).unwrap();
        let d = g.hop_distances(0);
        assert_eq!(d[0], 0);
        assert_eq!(d[3], 3);
    }

    proptest! {
        #[test]
        fn relabeling_is_equivariant(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mesh = generate_synthetic_mesh(3, 3, 2, 1.3, None).unwrap();
            let mut perm: Vec<usize> = (0..mesh.node_count()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let g = MeshGraph::build(&mesh).unwrap();
            let h = MeshGraph::build(&mesh.relabeled(&perm).unwrap()).unwrap();
            prop_assert_eq!(g.edge_count(), h.edge_count());
            for (&[u, v], &w) in g.edges().iter().zip(g.weights()) {
                prop_assert_eq!(h.weight(perm[u], perm[v]), Some(w));
                prop_assert_eq!(g.weight(v, u), Some(w));
            }
        }
    }
}
