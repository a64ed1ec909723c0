//! Network topologies and the 2-vertex-connectivity precondition.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for AgentId {
    fn from(v: u32) -> Self {
        AgentId(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Complete,
    Custom,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("{kind:?} topology needs at least {min} agents, got {n}")]
    SizeTooSmall { kind: TopologyKind, n: usize, min: usize },
    #[error("malformed edge ({0}, {1})")]
    MalformedEdge(u32, u32),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(u32, u32),
    #[error("topology is not 2-vertex-connected")]
    NotTwoConnected,
    #[error("invalid topology document: {0}")]
    Document(String),
}

/// An undirected graph over dense ids `0..n`. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Topology {
    n: usize,
    kind: TopologyKind,
    agents: Vec<AgentId>,
    edges: BTreeSet<(AgentId, AgentId)>,
    #[serde(skip)]
    neighbors: Vec<Vec<AgentId>>,
}

/// JSON form of a custom topology: `{ "n": 4, "edges": [[0,1], ...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyDocument {
    pub n: usize,
    pub edges: Vec<[u32; 2]>,
}

impl Topology {
    fn from_edges(n: usize, kind: TopologyKind, edges: BTreeSet<(AgentId, AgentId)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a.index()].push(b);
            neighbors[b.index()].push(a);
        }
        for list in &mut neighbors {
            list.sort();
        }
        Topology {
            n,
            kind,
            agents: (0..n as u32).map(AgentId).collect(),
            edges,
            neighbors,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    /// Edges as ordered pairs `(low, high)`.
    pub fn edges(&self) -> &BTreeSet<(AgentId, AgentId)> {
        &self.edges
    }

    pub fn neighbors(&self, a: AgentId) -> &[AgentId] {
        &self.neighbors[a.index()]
    }

    pub fn contains(&self, a: AgentId) -> bool {
        a.index() < self.n
    }

    pub fn is_edge(&self, a: AgentId, b: AgentId) -> bool {
        self.edges.contains(&ordered(a, b))
    }

    /// If the graph is a single cycle through every agent, returns the agents
    /// in cycle order starting at agent 0 and heading to its smaller neighbor.
    /// "Clockwise" in the ring protocols means following this order forward.
    pub fn ring_order(&self) -> Option<Vec<AgentId>> {
        if self.n < 3 || self.neighbors.iter().any(|l| l.len() != 2) {
            return None;
        }
        let mut order = vec![AgentId(0)];
        let mut prev = AgentId(0);
        let mut cur = self.neighbors[0][0];
        while cur != AgentId(0) {
            order.push(cur);
            let nb = &self.neighbors[cur.index()];
            let next = if nb[0] == prev { nb[1] } else { nb[0] };
            prev = cur;
            cur = next;
            if order.len() > self.n {
                return None;
            }
        }
        (order.len() == self.n).then_some(order)
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * (self.n - 1) / 2
    }

    /// Shortest hop distances from `src` in the graph with `removed` deleted.
    pub fn distances_avoiding(&self, src: AgentId, removed: &[AgentId]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        if removed.contains(&src) {
            return dist;
        }
        dist[src.index()] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u.index()].unwrap();
            for &v in self.neighbors(u) {
                if dist[v.index()].is_none() && !removed.contains(&v) {
                    dist[v.index()] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn to_document(&self) -> TopologyDocument {
        TopologyDocument {
            n: self.n,
            edges: self.edges.iter().map(|(a, b)| [a.0, b.0]).collect(),
        }
    }
}

fn ordered(a: AgentId, b: AgentId) -> (AgentId, AgentId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn build_topology(kind: TopologyKind, n: usize) -> Result<Topology, NetError> {
    let mut edges = BTreeSet::new();
    match kind {
        TopologyKind::Ring => {
            if n < 3 {
                return Err(NetError::SizeTooSmall { kind, n, min: 3 });
            }
            for i in 0..n as u32 {
                edges.insert(ordered(AgentId(i), AgentId((i + 1) % n as u32)));
            }
        }
        TopologyKind::Complete => {
            if n < 2 {
                return Err(NetError::SizeTooSmall { kind, n, min: 2 });
            }
            for i in 0..n as u32 {
                for j in i + 1..n as u32 {
                    edges.insert((AgentId(i), AgentId(j)));
                }
            }
        }
        TopologyKind::Custom => {
            return Err(NetError::Document(
                "custom topologies are built from an edge list".into(),
            ))
        }
    }
    Ok(Topology::from_edges(n, kind, edges))
}

pub fn build_custom(n: usize, edges: &[(u32, u32)]) -> Result<Topology, NetError> {
    let mut set = BTreeSet::new();
    for &(a, b) in edges {
        if a == b || a as usize >= n || b as usize >= n {
            return Err(NetError::MalformedEdge(a, b));
        }
        if !set.insert(ordered(AgentId(a), AgentId(b))) {
            return Err(NetError::DuplicateEdge(a, b));
        }
    }
    Ok(Topology::from_edges(n, TopologyKind::Custom, set))
}

pub fn topology_from_json(text: &str) -> Result<Topology, NetError> {
    let doc: TopologyDocument =
        serde_json::from_str(text).map_err(|e| NetError::Document(e.to_string()))?;
    let edges: Vec<(u32, u32)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
    build_custom(doc.n, &edges)
}

/// Brute force: drop each agent in turn and check the rest stays connected.
pub fn check_two_vertex_connected(t: &Topology) -> bool {
    if t.n < 3 {
        return false;
    }
    t.agents.iter().all(|&removed| {
        let start = if removed == AgentId(0) {
            AgentId(1)
        } else {
            AgentId(0)
        };
        let reach = t.distances_avoiding(start, &[removed]);
        reach
            .iter()
            .enumerate()
            .all(|(i, d)| i == removed.index() || d.is_some())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(pairs: &[(u32, u32)]) -> BTreeSet<(AgentId, AgentId)> {
        pairs.iter().map(|&(a, b)| ordered(AgentId(a), AgentId(b))).collect()
    }

    #[test]
    fn ring3_is_canonical_triangle() {
        let t = build_topology(TopologyKind::Ring, 3).unwrap();
        assert_eq!(t.edges(), &ids(&[(0, 1), (1, 2), (2, 0)]));
    }

    #[test]
    fn complete4_has_six_edges() {
        let t = build_topology(TopologyKind::Complete, 4).unwrap();
        assert_eq!(t.edges().len(), 6);
        assert!(t.is_complete());
    }

    #[test]
    fn ring2_is_too_small() {
        assert!(matches!(
            build_topology(TopologyKind::Ring, 2),
            Err(NetError::SizeTooSmall { .. })
        ));
    }

    #[test]
    fn custom_topologies() {
        let tri = build_custom(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(tri.kind(), TopologyKind::Custom);
        assert!(check_two_vertex_connected(&tri));

        let path = build_custom(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(!check_two_vertex_connected(&path));

        assert_eq!(build_custom(3, &[(0, 0)]), Err(NetError::MalformedEdge(0, 0)));
        assert_eq!(build_custom(3, &[(0, 5)]), Err(NetError::MalformedEdge(0, 5)));
        assert_eq!(
            build_custom(3, &[(0, 1), (1, 0)]),
            Err(NetError::DuplicateEdge(1, 0))
        );
    }

    #[test]
    fn connectivity_examples() {
        let path = build_custom(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(!check_two_vertex_connected(&path));
        let k5 = build_topology(TopologyKind::Complete, 5).unwrap();
        assert!(check_two_vertex_connected(&k5));
        let k2 = build_topology(TopologyKind::Complete, 2).unwrap();
        assert!(!check_two_vertex_connected(&k2));
    }

    #[test]
    fn ring_order_of_diamond() {
        let d = build_custom(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        assert_eq!(
            d.ring_order().unwrap(),
            vec![AgentId(0), AgentId(1), AgentId(3), AgentId(2)]
        );
        let k4 = build_topology(TopologyKind::Complete, 4).unwrap();
        assert!(k4.ring_order().is_none());
    }

    #[test]
    fn json_document_round_trip() {
        let t = topology_from_json(r#"{"n": 3, "edges": [[0,1],[1,2],[2,0]]}"#).unwrap();
        let again = topology_from_json(&serde_json::to_string(&t.to_document()).unwrap()).unwrap();
        assert_eq!(t, again);
        assert!(topology_from_json(r#"{"n": 3}"#).is_err());
    }

    proptest! {
        #[test]
        fn canonical_kinds_are_two_connected(n in 3usize..9) {
            let ring = build_topology(TopologyKind::Ring, n).unwrap();
            prop_assert_eq!(ring.edges().len(), n);
            prop_assert!(check_two_vertex_connected(&ring));
            prop_assert_eq!(ring.ring_order().unwrap().len(), n);
            let k = build_topology(TopologyKind::Complete, n).unwrap();
            prop_assert!(check_two_vertex_connected(&k));
        }
    }
}
