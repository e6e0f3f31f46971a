//! Undirected graph algorithms: chordality, chordal extension, maximal cliques
//! and clique trees.
//!
//! Nodes are 0-based internally. All routines are deterministic: ties are
//! always broken towards the lowest node or clique index.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Simple undirected graph on nodes `0..node_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<BTreeSet<usize>>,
}

impl Graph {
    pub fn new(node_count: usize) -> Self {
        Graph {
            adj: vec![BTreeSet::new(); node_count],
        }
    }

    /// Builds a graph from unordered pairs. Self-loops are rejected.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::new(node_count);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn complete(node_count: usize) -> Self {
        let mut g = Graph::new(node_count);
        for i in 0..node_count {
            for j in (i + 1)..node_count {
                g.adj[i].insert(j);
                g.adj[j].insert(i);
            }
        }
        g
    }

    pub fn path(node_count: usize) -> Self {
        let mut g = Graph::new(node_count);
        for i in 1..node_count {
            g.adj[i - 1].insert(i);
            g.adj[i].insert(i - 1);
        }
        g
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        let n = self.node_count();
        if i >= n || j >= n {
            return Err(Error::BadClique { node: i.max(j), n });
        }
        if i == j {
            return Err(Error::PatternMismatch(format!("self-loop on node {i}")));
        }
        self.adj[i].insert(j);
        self.adj[j].insert(i);
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj.get(i).is_some_and(|s| s.contains(&j))
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.adj[i]
    }

    /// Edges as ordered pairs `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, nb) in self.adj.iter().enumerate() {
            for &j in nb.range(i + 1..) {
                out.push((i, j));
            }
        }
        out
    }

    pub fn is_supergraph_of(&self, other: &Graph) -> bool {
        self.node_count() == other.node_count() && other.edges().into_iter().all(|(i, j)| self.has_edge(i, j))
    }

    /// True when every pair of nodes in `nodes` is adjacent.
    pub fn is_complete_on(&self, nodes: &[usize]) -> bool {
        nodes
            .iter()
            .enumerate()
            .all(|(a, &u)| nodes[a + 1..].iter().all(|&v| self.has_edge(u, v)))
    }

    /// Connected components, each sorted, listed by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &v in &self.adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }
}

/// Perfect elimination ordering: `order[k]` is the k-th node eliminated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationOrdering {
    pub order: Vec<usize>,
}

impl EliminationOrdering {
    /// `position[v]` = index of `v` in the ordering.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (k, &v) in self.order.iter().enumerate() {
            pos[v] = k;
        }
        pos
    }
}

/// Maximal cliques, each sorted ascending, the list in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueSet {
    pub cliques: Vec<Vec<usize>>,
}

impl CliqueSet {
    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec<usize>> {
        self.cliques.iter()
    }

    pub fn largest(&self) -> usize {
        self.cliques.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Puts every clique and the list itself in canonical order.
    pub fn canonical(mut cliques: Vec<Vec<usize>>) -> Self {
        for c in &mut cliques {
            c.sort_unstable();
        }
        cliques.sort();
        CliqueSet { cliques }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub separator: Vec<usize>,
}

/// Spanning forest of the clique intersection graph with the running
/// intersection property.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueTree {
    pub cliques: CliqueSet,
    pub edges: Vec<TreeEdge>,
}

impl CliqueTree {
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.cliques.len()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Parent of every clique when each tree is rooted at its lowest-index
    /// clique, and a post-order (children before parents) over all cliques.
    pub fn rooted(&self) -> (Vec<Option<usize>>, Vec<usize>) {
        let p = self.cliques.len();
        let adj = self.adjacency();
        let mut parent = vec![None; p];
        let mut visited = vec![false; p];
        let mut post = Vec::with_capacity(p);
        for root in 0..p {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            let mut preorder = vec![root];
            let mut stack = vec![root];
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !visited[v] {
                        visited[v] = true;
                        parent[v] = Some(u);
                        preorder.push(v);
                        stack.push(v);
                    }
                }
            }
            post.extend(preorder.into_iter().rev());
        }
        (parent, post)
    }

    /// For every node, the cliques containing it induce a connected subtree.
    pub fn has_running_intersection(&self, node_count: usize) -> bool {
        let adj = self.adjacency();
        for v in 0..node_count {
            let holders: Vec<usize> = (0..self.cliques.len())
                .filter(|&k| self.cliques.cliques[k].binary_search(&v).is_ok())
                .collect();
            let Some(&start) = holders.first() else {
                continue;
            };
            let mut seen = vec![false; self.cliques.len()];
            seen[start] = true;
            let mut stack = vec![start];
            let mut reached = 1;
            while let Some(u) = stack.pop() {
                for &w in &adj[u] {
                    if !seen[w] && self.cliques.cliques[w].binary_search(&v).is_ok() {
                        seen[w] = true;
                        reached += 1;
                        stack.push(w);
                    }
                }
            }
            if reached != holders.len() {
                return false;
            }
        }
        true
    }
}

/// Maximum cardinality search; returns the visit order (lowest index wins
/// ties among maximal-weight candidates).
fn mcs_visit_order(g: &Graph) -> Vec<usize> {
    let n = g.node_count();
    let mut weight = vec![0usize; n];
    let mut numbered = vec![false; n];
    let mut visit = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for v in 0..n {
            if !numbered[v] && best.is_none_or(|b| weight[v] > weight[b]) {
                best = Some(v);
            }
        }
        let v = best.expect("an unnumbered node remains");
        numbered[v] = true;
        visit.push(v);
        for &u in g.neighbors(v) {
            if !numbered[u] {
                weight[u] += 1;
            }
        }
    }
    visit
}

/// Later neighbours of `v` in the elimination ordering (its monotone
/// adjacency set), sorted ascending by node index.
fn later_neighbors(g: &Graph, pos: &[usize], v: usize) -> Vec<usize> {
    g.neighbors(v).iter().copied().filter(|&u| pos[u] > pos[v]).collect()
}

fn is_perfect_elimination(g: &Graph, ord: &EliminationOrdering) -> bool {
    let pos = ord.positions();
    for &v in &ord.order {
        let later = later_neighbors(g, &pos, v);
        // Tarjan–Yannakakis: the earliest-eliminated later neighbour must be
        // adjacent to all the others.
        let Some(&parent) = later.iter().min_by_key(|&&u| pos[u]) else {
            continue;
        };
        if later.iter().any(|&u| u != parent && !g.has_edge(parent, u)) {
            return false;
        }
    }
    true
}

/// Chordality test by maximum cardinality search. When the graph is chordal
/// the returned ordering is a perfect elimination ordering.
pub fn is_chordal(g: &Graph) -> (bool, Option<EliminationOrdering>) {
    let mut order = mcs_visit_order(g);
    order.reverse();
    let ord = EliminationOrdering { order };
    if is_perfect_elimination(g, &ord) {
        (true, Some(ord))
    } else {
        (false, None)
    }
}

/// Greedy minimum-degree chordal extension. Returns the extended graph and
/// the added fill edges `(i, j)`, `i < j`, sorted. Chordal inputs are returned
/// unchanged.
pub fn chordal_extension(g: &Graph) -> (Graph, Vec<(usize, usize)>) {
    if is_chordal(g).0 {
        return (g.clone(), Vec::new());
    }
    let n = g.node_count();
    let mut filled = g.clone();
    let mut work: Vec<BTreeSet<usize>> = (0..n).map(|v| g.neighbors(v).clone()).collect();
    let mut alive = vec![true; n];
    let mut fill = BTreeSet::new();
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (work[v].len(), v))
            .expect("a live node remains");
        let nb: Vec<usize> = work[v].iter().copied().collect();
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                if !work[x].contains(&y) {
                    work[x].insert(y);
                    work[y].insert(x);
                    filled.adj[x].insert(y);
                    filled.adj[y].insert(x);
                    fill.insert((x.min(y), x.max(y)));
                }
            }
        }
        for &x in &nb {
            work[x].remove(&v);
        }
        work[v].clear();
        alive[v] = false;
    }
    debug_assert!(is_chordal(&filled).0);
    (filled, fill.into_iter().collect())
}

/// Maximal cliques of a chordal graph from its perfect elimination ordering.
pub fn maximal_cliques(g: &Graph) -> Result<CliqueSet> {
    let (chordal, ord) = is_chordal(g);
    if !chordal {
        return Err(Error::NotChordal);
    }
    let ord = ord.expect("chordal graphs come with an ordering");
    let pos = ord.positions();
    let n = g.node_count();
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            let mut c = later_neighbors(g, &pos, v);
            c.push(v);
            c.sort_unstable();
            c
        })
        .collect();
    // A candidate C(v) is non-maximal iff it is contained in C(u) for some
    // earlier-eliminated neighbour u (then v ∈ C(u)).
    let mut cliques = Vec::new();
    for v in 0..n {
        let cv = &candidates[v];
        let dominated = g.neighbors(v).iter().any(|&u| {
            pos[u] < pos[v]
                && candidates[u].len() > cv.len()
                && cv.iter().all(|x| candidates[u].binary_search(x).is_ok())
        });
        if !dominated {
            cliques.push(cv.clone());
        }
    }
    Ok(CliqueSet::canonical(cliques))
}

/// Maximum-weight spanning forest of the clique intersection graph, weights
/// being separator cardinalities (Kruskal with deterministic tie-breaking).
pub fn clique_tree(cs: &CliqueSet) -> CliqueTree {
    let p = cs.len();
    let mut candidates = Vec::new();
    for a in 0..p {
        for b in (a + 1)..p {
            let sep = intersect_sorted(&cs.cliques[a], &cs.cliques[b]);
            if !sep.is_empty() {
                candidates.push((sep.len(), a, b, sep));
            }
        }
    }
    candidates.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut uf: Vec<usize> = (0..p).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut edges = Vec::new();
    for (_, a, b, sep) in candidates {
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        if ra != rb {
            uf[ra.max(rb)] = ra.min(rb);
            edges.push(TreeEdge { a, b, separator: sep });
        }
    }
    CliqueTree {
        cliques: cs.clone(),
        edges,
    }
}

pub(crate) fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}
