//! Enclosing subgraphs around a pair of target Places.
//!
//! The node set is the intersection of the two Place-restricted k-hop
//! neighbourhoods, pruned to a fixed point (isolated nodes and nodes farther
//! than `k` from either target inside the induced subgraph are dropped), and
//! finally restricted to nodes that lie on a simple `u`–`v` path of at most
//! `k + 1` edges. Pruning alone is not enough for `k ≥ 2`: a node can be
//! within `k` of both targets and still only reach them through each other.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use crate::autodiff::Tensor;
use crate::kg::{EntityId, GraphView, NodeKind, RelationId};

pub const DEFAULT_RADIUS: usize = 2;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SubgraphError {
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("{0} is not a Place")]
    NotAPlace(EntityId),
    #[error("targets must differ, got {0} twice")]
    SameTarget(EntityId),
    #[error("subgraph radius must be at least 1")]
    ZeroRadius,
    #[error("malformed subgraph: {0}")]
    Malformed(String),
}

/// Nodes within `k` undirected hops of `node`, with their hop distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSet {
    pub node: EntityId,
    pub k: usize,
    pub members: BTreeMap<EntityId, usize>,
}

impl NeighborhoodSet {
    pub fn contains(&self, id: &EntityId) -> bool {
        self.members.contains_key(id)
    }
}

fn undirected<G: GraphView + ?Sized>(g: &G, ix: usize) -> impl Iterator<Item = usize> + '_ {
    g.out_edges(ix)
        .iter()
        .chain(g.in_edges(ix))
        .map(|&(n, _)| n)
}

fn khop_ix<G: GraphView + ?Sized>(
    g: &G,
    start: usize,
    k: usize,
    kind_filter: Option<NodeKind>,
) -> HashMap<usize, usize> {
    let mut dist = HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        if d == k {
            continue;
        }
        for n in undirected(g, x) {
            if kind_filter.is_some_and(|kind| g.kind_at(n) != kind) || dist.contains_key(&n) {
                continue;
            }
            dist.insert(n, d + 1);
            queue.push_back(n);
        }
    }
    dist
}

/// Breadth-first k-hop neighbourhood over undirected edges. With a kind
/// filter, only nodes of that kind are entered; the start node is always a
/// member.
pub fn khop<G: GraphView + ?Sized>(
    g: &G,
    node: &EntityId,
    k: usize,
    kind_filter: Option<NodeKind>,
) -> Result<NeighborhoodSet, SubgraphError> {
    let ix = g
        .index_of(node)
        .ok_or_else(|| SubgraphError::UnknownEntity(node.clone()))?;
    let members = khop_ix(g, ix, k, kind_filter)
        .into_iter()
        .map(|(n, d)| (g.id_at(n).clone(), d))
        .collect();
    Ok(NeighborhoodSet {
        node: node.clone(),
        k,
        members,
    })
}

/// Undirected adjacency restricted to a node set, without self-loops.
fn induced_adjacency<G: GraphView + ?Sized>(
    g: &G,
    nodes: &BTreeSet<usize>,
) -> BTreeMap<usize, BTreeSet<usize>> {
    nodes
        .iter()
        .map(|&x| {
            let ns = undirected(g, x)
                .filter(|n| *n != x && nodes.contains(n))
                .collect();
            (x, ns)
        })
        .collect()
}

fn bfs(adj: &BTreeMap<usize, BTreeSet<usize>>, start: usize) -> HashMap<usize, usize> {
    let mut dist = HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        for &n in &adj[&x] {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(n) {
                e.insert(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Nodes on some simple `u`→`v` path with at most `max_len` edges.
fn on_short_paths(
    adj: &BTreeMap<usize, BTreeSet<usize>>,
    u: usize,
    v: usize,
    max_len: usize,
) -> BTreeSet<usize> {
    let to_v = bfs(adj, v);
    let mut marked = BTreeSet::new();
    let mut path = vec![u];

    fn walk(
        adj: &BTreeMap<usize, BTreeSet<usize>>,
        v: usize,
        max_len: usize,
        to_v: &HashMap<usize, usize>,
        path: &mut Vec<usize>,
        marked: &mut BTreeSet<usize>,
    ) {
        let x = *path.last().expect("path starts at u");
        let len = path.len() - 1;
        for &n in &adj[&x] {
            if n == v {
                marked.extend(path.iter().copied());
                continue;
            }
            let fits = to_v.get(&n).is_some_and(|d| len + 1 + d <= max_len);
            if fits && !path.contains(&n) {
                path.push(n);
                walk(adj, v, max_len, to_v, path, marked);
                path.pop();
            }
        }
    }

    walk(adj, v, max_len, &to_v, &mut path, &mut marked);
    marked
}

/// Induced subgraph `G(u, v)` with double-radius labels.
///
/// Local index 0 is `u` and 1 is `v` after [`EnclosingSubgraph::canonical`];
/// other orders only arise through [`EnclosingSubgraph::permuted`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnclosingSubgraph {
    nodes: Vec<EntityId>,
    u_local: usize,
    v_local: usize,
    edges: Vec<(usize, RelationId, usize)>,
    labels: Vec<(usize, usize)>,
    features: Tensor,
    k: usize,
}

impl EnclosingSubgraph {
    /// Builds a subgraph from explicit parts with `u` at local index 0 and `v`
    /// at 1, then labels it.
    pub fn from_parts(
        nodes: Vec<EntityId>,
        edges: Vec<(usize, RelationId, usize)>,
        k: usize,
    ) -> Result<Self, SubgraphError> {
        if nodes.len() < 2 {
            return Err(SubgraphError::Malformed("need both targets".into()));
        }
        if k == 0 {
            return Err(SubgraphError::ZeroRadius);
        }
        if let Some(e) = edges.iter().find(|e| e.0 >= nodes.len() || e.2 >= nodes.len()) {
            return Err(SubgraphError::Malformed(format!("edge {e:?} out of range")));
        }
        let mut sg = Self {
            nodes,
            u_local: 0,
            v_local: 1,
            edges,
            labels: vec![],
            features: Tensor::zeros(0, 0),
            k,
        };
        sg.edges.sort();
        sg.edges.dedup();
        sg.label_and_featurize();
        Ok(sg)
    }

    pub fn nodes(&self) -> &[EntityId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn u_local(&self) -> usize {
        self.u_local
    }

    pub fn v_local(&self) -> usize {
        self.v_local
    }

    pub fn u(&self) -> &EntityId {
        &self.nodes[self.u_local]
    }

    pub fn v(&self) -> &EntityId {
        &self.nodes[self.v_local]
    }

    /// Directed `(src, relation, dst)` edges in local indices, sorted.
    pub fn edges(&self) -> &[(usize, RelationId, usize)] {
        &self.edges
    }

    /// `(d_u, d_v)` per local node.
    pub fn labels(&self) -> &[(usize, usize)] {
        &self.labels
    }

    /// One row per node: `onehot(d_u) ⊕ onehot(d_v)`, width `2(k+1)`.
    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn feature_dim(&self) -> usize {
        2 * (self.k + 1)
    }

    /// Recomputes labels and features: undirected BFS distances inside the
    /// subgraph, clamped to `k` (unreachable counts as `k`), with the targets
    /// fixed at `u = (0, 1)` and `v = (1, 0)`.
    pub fn label_and_featurize(&mut self) {
        let n = self.nodes.len();
        let all: BTreeSet<usize> = (0..n).collect();
        let mut adj: BTreeMap<usize, BTreeSet<usize>> = all.iter().map(|&i| (i, BTreeSet::new())).collect();
        for &(s, _, d) in &self.edges {
            if s != d {
                adj.get_mut(&s).unwrap().insert(d);
                adj.get_mut(&d).unwrap().insert(s);
            }
        }
        let du = bfs(&adj, self.u_local);
        let dv = bfs(&adj, self.v_local);
        let k = self.k;
        let clamp = |d: Option<&usize>| d.map_or(k, |&d| d.min(k));
        self.labels = (0..n).map(|i| (clamp(du.get(&i)), clamp(dv.get(&i)))).collect();
        self.labels[self.u_local] = (0, 1);
        self.labels[self.v_local] = (1, 0);

        let width = self.feature_dim();
        let mut f = Tensor::zeros(n, width);
        for (i, &(a, b)) in self.labels.iter().enumerate() {
            f.set(i, a, 1.0);
            f.set(i, k + 1 + b, 1.0);
        }
        self.features = f;
    }

    /// Reorders local nodes so that new position `i` holds old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, SubgraphError> {
        let n = self.nodes.len();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(SubgraphError::Malformed("not a permutation".into()));
            }
            inverse[old] = new;
        }
        if perm.len() != n {
            return Err(SubgraphError::Malformed("not a permutation".into()));
        }
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .map(|&(s, r, d)| (inverse[s], r, inverse[d]))
            .collect();
        edges.sort();
        let mut features = Tensor::zeros(n, self.features.cols());
        for (new, &old) in perm.iter().enumerate() {
            features.row_mut(new).copy_from_slice(self.features.row(old));
        }
        Ok(Self {
            nodes: perm.iter().map(|&o| self.nodes[o].clone()).collect(),
            u_local: inverse[self.u_local],
            v_local: inverse[self.v_local],
            edges,
            labels: perm.iter().map(|&o| self.labels[o]).collect(),
            features,
            k: self.k,
        })
    }

    pub fn is_canonical(&self) -> bool {
        self.u_local == 0
            && self.v_local == 1
            && self.nodes.get(2..).is_none_or(|rest| rest.windows(2).all(|w| w[0] < w[1]))
    }

    /// Canonical local order: `u`, `v`, then the rest by entity id.
    pub fn canonical(&self) -> Self {
        let mut rest: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| i != self.u_local && i != self.v_local)
            .collect();
        rest.sort_by(|&a, &b| self.nodes[a].cmp(&self.nodes[b]));
        let perm: Vec<usize> = [self.u_local, self.v_local].into_iter().chain(rest).collect();
        self.permuted(&perm).expect("canonical order is a permutation")
    }

    /// Id-free fingerprint: sorted label multiset and sorted labelled edges.
    #[allow(clippy::type_complexity)]
    pub fn canonical_form(&self) -> (Vec<(usize, usize)>, Vec<((usize, usize), usize, (usize, usize))>) {
        let mut labels = self.labels.clone();
        labels.sort();
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .map(|&(s, r, d)| (self.labels[s], r.index(), self.labels[d]))
            .collect();
        edges.sort();
        (labels, edges)
    }

    /// Graphviz rendering with `(d_u, d_v)` node annotations.
    pub fn to_dot<G: GraphView + ?Sized>(&self, g: &G) -> String {
        let mut out = String::from("digraph enclosing {\n");
        for (i, id) in self.nodes.iter().enumerate() {
            let (a, b) = self.labels[i];
            let shape = if i == self.u_local || i == self.v_local { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  n{i} [label=\"{} ({a},{b})\" shape={shape}];", id.as_str().replace('"', "\\\""));
        }
        for &(s, r, d) in &self.edges {
            let label = if r.index() < g.relation_count() { g.relation_label(r) } else { "?" };
            let _ = writeln!(out, "  n{s} -> n{d} [label=\"{}\"];", label.replace('"', "\\\""));
        }
        out.push_str("}\n");
        out
    }
}

/// Extracts and labels `G(u, v)` with radius `k`.
pub fn extract<G: GraphView + ?Sized>(
    g: &G,
    u: &EntityId,
    v: &EntityId,
    k: usize,
) -> Result<EnclosingSubgraph, SubgraphError> {
    let resolve = |id: &EntityId| {
        let ix = g
            .index_of(id)
            .ok_or_else(|| SubgraphError::UnknownEntity(id.clone()))?;
        if g.kind_at(ix) != NodeKind::Place {
            return Err(SubgraphError::NotAPlace(id.clone()));
        }
        Ok(ix)
    };
    let (ui, vi) = (resolve(u)?, resolve(v)?);
    if ui == vi {
        return Err(SubgraphError::SameTarget(u.clone()));
    }
    if k == 0 {
        return Err(SubgraphError::ZeroRadius);
    }

    let nu = khop_ix(g, ui, k, Some(NodeKind::Place));
    let nv = khop_ix(g, vi, k, Some(NodeKind::Place));
    let mut keep: BTreeSet<usize> = nu.keys().filter(|n| nv.contains_key(n)).copied().collect();
    keep.extend([ui, vi]);

    loop {
        let adj = induced_adjacency(g, &keep);
        let (du, dv) = (bfs(&adj, ui), bfs(&adj, vi));
        let drop: Vec<usize> = keep
            .iter()
            .copied()
            .filter(|&x| x != ui && x != vi)
            .filter(|x| {
                adj[x].is_empty()
                    || du.get(x).is_none_or(|&d| d > k)
                    || dv.get(x).is_none_or(|&d| d > k)
            })
            .collect();
        if drop.is_empty() {
            break;
        }
        for x in drop {
            keep.remove(&x);
        }
    }

    let adj = induced_adjacency(g, &keep);
    let mut on_path = on_short_paths(&adj, ui, vi, k + 1);
    on_path.extend([ui, vi]);

    let mut rest: Vec<usize> = on_path.iter().copied().filter(|&x| x != ui && x != vi).collect();
    rest.sort_by(|&a, &b| g.id_at(a).cmp(g.id_at(b)));
    let order: Vec<usize> = [ui, vi].into_iter().chain(rest).collect();
    let local: HashMap<usize, usize> = order.iter().enumerate().map(|(l, &x)| (x, l)).collect();

    let mut edges = Vec::new();
    for &x in &order {
        for &(tail, r) in g.out_edges(x) {
            if let Some(&t) = local.get(&tail) {
                edges.push((local[&x], r, t));
            }
        }
    }
    EnclosingSubgraph::from_parts(order.iter().map(|&x| g.id_at(x).clone()).collect(), edges, k)
}
