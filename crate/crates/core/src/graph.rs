//! Similarity graph and connected-component clusters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::HyperplaneIndex;
use crate::config::passes;
use crate::embed_store::EmbeddingStore;
use crate::{Error, RecordId, Result};

/// Undirected edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    #[serde(rename = "id_a")]
    pub a: RecordId,
    #[serde(rename = "id_b")]
    pub b: RecordId,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityGraph {
    nodes: Vec<RecordId>,
    edges: Vec<Edge>,
}

impl SimilarityGraph {
    /// Canonicalizes and deduplicates edges; self-loops are rejected.
    pub fn new(
        nodes: impl IntoIterator<Item = RecordId>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self> {
        let mut nodes: Vec<RecordId> = nodes.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        let node_set: HashSet<RecordId> = nodes.iter().copied().collect();
        let mut canon: BTreeMap<(RecordId, RecordId), f64> = BTreeMap::new();
        for e in edges {
            if e.a == e.b {
                return Err(Error::InvalidInput(format!("self-loop on {}", e.a)));
            }
            for id in [e.a, e.b] {
                if !node_set.contains(&id) {
                    return Err(Error::UnknownId(id));
                }
            }
            canon
                .entry((e.a.min(e.b), e.a.max(e.b)))
                .or_insert(e.similarity);
        }
        let edges = canon
            .into_iter()
            .map(|((a, b), similarity)| Edge { a, b, similarity })
            .collect();
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &[RecordId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_set(&self) -> HashSet<(RecordId, RecordId)> {
        self.edges.iter().map(|e| (e.a, e.b)).collect()
    }

    /// Sorted neighbour lists with edge similarities.
    pub fn adjacency(&self) -> HashMap<RecordId, Vec<(RecordId, f64)>> {
        let mut adj: HashMap<RecordId, Vec<(RecordId, f64)>> =
            self.nodes.iter().map(|&n| (n, Vec::new())).collect();
        for e in &self.edges {
            adj.get_mut(&e.a)
                .expect("edge endpoint is a node")
                .push((e.b, e.similarity));
            adj.get_mut(&e.b)
                .expect("edge endpoint is a node")
                .push((e.a, e.similarity));
        }
        for list in adj.values_mut() {
            list.sort_by_key(|&(id, _)| id);
        }
        adj
    }

    pub fn write_edges_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.edges {
            out.serialize(e)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Keeps the edges that pass a (higher) threshold.
    pub fn filtered(&self, threshold: f64, strict: bool) -> SimilarityGraph {
        SimilarityGraph {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .filter(|e| passes(e.similarity, threshold, strict))
                .copied()
                .collect(),
        }
    }

    /// Rebuilds a graph from an edge CSV plus the full node list.
    pub fn read_edges_csv<R: Read>(
        nodes: impl IntoIterator<Item = RecordId>,
        r: R,
    ) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let edges = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<Edge>, _>>()?;
        Self::new(nodes, edges)
    }
}

/// Links every node to the neighbours its threshold query returns.
///
/// A hit found from either endpoint creates the edge.
pub fn build_graph(
    store: &EmbeddingStore,
    index: &HyperplaneIndex,
    threshold: f64,
    initial_k: usize,
    strict: bool,
) -> Result<SimilarityGraph> {
    let per_node: Vec<Vec<Edge>> = store
        .ids()
        .par_iter()
        .map(|&id| {
            index
                .query_threshold(store, id, threshold, initial_k, strict)
                .map(|hits| {
                    hits.into_iter()
                        .map(|h| Edge {
                            a: id.min(h.record_id),
                            b: id.max(h.record_id),
                            similarity: h.similarity,
                        })
                        .collect()
                })
        })
        .collect::<Result<_>>()?;
    SimilarityGraph::new(store.ids().iter().copied(), per_node.into_iter().flatten())
}

/// Exact O(n²) thresholding over every pair of rows.
pub fn build_exact_graph(store: &EmbeddingStore, threshold: f64, strict: bool) -> SimilarityGraph {
    let n = store.len();
    let edges: Vec<Edge> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = store.id_at(i);
            ((i + 1)..n).filter_map(move |j| {
                let sim = store.row_similarity(i, j);
                passes(sim, threshold, strict).then(|| {
                    let b = store.id_at(j);
                    Edge {
                        a: a.min(b),
                        b: a.max(b),
                        similarity: sim,
                    }
                })
            })
        })
        .collect();
    SimilarityGraph::new(store.ids().iter().copied(), edges).expect("rows have distinct ids")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Smallest member id.
    pub cluster_id: RecordId,
    /// Sorted ascending.
    pub member_ids: Vec<RecordId>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.member_ids.len() == 1
    }

    /// Unordered member pairs `(a, b)` with `a < b`.
    pub fn pairs(&self) -> impl Iterator<Item = (RecordId, RecordId)> + '_ {
        let m = &self.member_ids;
        (0..m.len()).flat_map(move |i| (i + 1..m.len()).map(move |j| (m[i], m[j])))
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Partitions the nodes into connected components, ordered by cluster id.
pub fn connected_components(graph: &SimilarityGraph) -> Vec<Cluster> {
    let pos: HashMap<RecordId, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let mut ds = DisjointSet::new(graph.nodes.len());
    for e in &graph.edges {
        ds.union(pos[&e.a], pos[&e.b]);
    }
    let mut groups: BTreeMap<usize, Vec<RecordId>> = BTreeMap::new();
    // Nodes are sorted, so members come out sorted too.
    for (i, &id) in graph.nodes.iter().enumerate() {
        groups.entry(ds.find(i)).or_default().push(id);
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(|member_ids| Cluster {
            cluster_id: member_ids[0],
            member_ids,
        })
        .collect();
    clusters.sort_by_key(|c| c.cluster_id);
    clusters
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub n_nodes: usize,
    pub n_singletons: usize,
    pub singleton_fraction: f64,
    /// Clusters with at least two members.
    pub n_repeated_claims: usize,
    /// Fact-checks living in such clusters.
    pub n_repeated_fact_checks: usize,
    pub mean_nonsingleton_size: Option<f64>,
}

pub fn cluster_stats(clusters: &[Cluster]) -> Result<ClusterStats> {
    let n_nodes: usize = clusters.iter().map(Cluster::len).sum();
    if n_nodes == 0 {
        return Err(Error::InsufficientData("no clustered nodes".into()));
    }
    let n_singletons = clusters.iter().filter(|c| c.is_singleton()).count();
    let n_repeated_claims = clusters.iter().filter(|c| c.len() >= 2).count();
    let n_repeated_fact_checks = n_nodes - n_singletons;
    Ok(ClusterStats {
        n_nodes,
        n_singletons,
        singleton_fraction: n_singletons as f64 / n_nodes as f64,
        n_repeated_claims,
        n_repeated_fact_checks,
        mean_nonsingleton_size: (n_repeated_claims > 0)
            .then(|| n_repeated_fact_checks as f64 / n_repeated_claims as f64),
    })
}

#[derive(Serialize, Deserialize)]
struct MembershipRow {
    cluster_id: RecordId,
    record_id: RecordId,
}

pub fn write_clusters_csv<W: Write>(clusters: &[Cluster], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in clusters {
        for &record_id in &c.member_ids {
            out.serialize(MembershipRow {
                cluster_id: c.cluster_id,
                record_id,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_clusters_csv<R: Read>(r: R) -> Result<Vec<Cluster>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut groups: BTreeMap<RecordId, Vec<RecordId>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: MembershipRow = row?;
        groups
            .entry(row.cluster_id)
            .or_default()
            .push(row.record_id);
    }
    Ok(groups
        .into_iter()
        .map(|(cluster_id, mut member_ids)| {
            member_ids.sort_unstable();
            Cluster {
                cluster_id,
                member_ids,
            }
        })
        .collect())
}

/// Cluster lookup by member.
pub fn membership(clusters: &[Cluster]) -> HashMap<RecordId, usize> {
    clusters
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.member_ids.iter().map(move |&id| (id, i)))
        .collect()
}
