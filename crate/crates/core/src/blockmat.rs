//! Block-partitioned symmetric matrices with a prescribed block sparsity
//! pattern, clique index matrices, and the block versions of the Grone
//! (completion) and Agler (decomposition) theorems.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{intersect_sorted, CliqueSet, CliqueTree, Graph};
use crate::solver::symmetric_eig;

/// Relative eigenvalue floor under which a symmetric matrix is declared
/// indefinite: `λ_min >= -PSD_TOL * max(1, ‖X‖₂)`.
pub const PSD_TOL: f64 = 1e-9;

/// Block sizes `α = (α_1, …, α_n)` with prefix offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Partition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::DimensionMismatch(format!("block {i} has size zero")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Partition { sizes, offsets })
    }

    pub fn scalar(n: usize) -> Self {
        Partition::new(vec![1; n]).expect("unit blocks are valid")
    }

    /// Number of blocks `n`.
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Total dimension `N = Σ α_i`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().expect("offsets start with 0")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Block containing scalar index `r`.
    pub fn block_of(&self, r: usize) -> usize {
        self.offsets.partition_point(|&o| o <= r) - 1
    }

    /// Concatenation of two partitions.
    pub fn concat(&self, other: &Partition) -> Partition {
        let mut sizes = self.sizes.clone();
        sizes.extend_from_slice(&other.sizes);
        Partition::new(sizes).expect("both halves are valid")
    }
}

/// Allowed block positions of a symmetric matrix: the diagonal blocks plus the
/// blocks `(i, j)` for every undirected edge `{i, j}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPattern {
    partition: Partition,
    graph: Graph,
}

impl BlockPattern {
    pub fn new(partition: Partition, graph: Graph) -> Result<Self> {
        if graph.node_count() != partition.len() {
            return Err(Error::DimensionMismatch(format!(
                "pattern graph has {} nodes but partition has {} blocks",
                graph.node_count(),
                partition.len()
            )));
        }
        Ok(BlockPattern { partition, graph })
    }

    pub fn from_edges<I>(partition: Partition, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let graph = Graph::from_edges(partition.len(), edges)?;
        BlockPattern::new(partition, graph)
    }

    /// Pattern whose edges are all pairs inside each clique.
    pub fn from_cliques(partition: Partition, cliques: &CliqueSet) -> Result<Self> {
        let mut graph = Graph::new(partition.len());
        for c in cliques.iter() {
            for (a, &u) in c.iter().enumerate() {
                for &v in &c[a + 1..] {
                    graph.add_edge(u, v)?;
                }
            }
        }
        BlockPattern::new(partition, graph)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        i == j || self.graph.has_edge(i, j)
    }

    /// Every block allowed by `other` is allowed here (same partition).
    pub fn contains(&self, other: &BlockPattern) -> bool {
        self.partition == other.partition && self.graph.is_supergraph_of(&other.graph)
    }

    /// Dense 0/1 mask of allowed scalar entries.
    pub fn scalar_mask(&self) -> DMatrix<bool> {
        let n = self.partition.dim();
        let mut mask = DMatrix::from_element(n, n, false);
        for i in 0..self.partition.len() {
            for j in 0..self.partition.len() {
                if self.allows(i, j) {
                    for r in self.partition.range(i) {
                        for c in self.partition.range(j) {
                            mask[(r, c)] = true;
                        }
                    }
                }
            }
        }
        mask
    }
}

/// Symmetric matrix in `S^N_α(E, 0)`, stored as its upper block triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSymMatrix {
    pattern: BlockPattern,
    blocks: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl BlockSymMatrix {
    pub fn zeros(pattern: BlockPattern) -> Self {
        BlockSymMatrix {
            pattern,
            blocks: BTreeMap::new(),
        }
    }

    pub fn pattern(&self) -> &BlockPattern {
        &self.pattern
    }

    pub fn partition(&self) -> &Partition {
        &self.pattern.partition
    }

    /// Stored blocks `(i, j)` with `i <= j`.
    pub fn stored_blocks(&self) -> impl Iterator<Item = (&(usize, usize), &DMatrix<f64>)> {
        self.blocks.iter()
    }

    /// Sets block `(i, j)` (and implicitly `(j, i) = Mᵀ`). Diagonal blocks
    /// must be symmetric.
    pub fn set_block(&mut self, i: usize, j: usize, m: DMatrix<f64>) -> Result<()> {
        let p = &self.pattern.partition;
        if i >= p.len() || j >= p.len() {
            return Err(Error::BadClique {
                node: i.max(j),
                n: p.len(),
            });
        }
        if !self.pattern.allows(i, j) {
            return Err(Error::PatternMismatch(format!(
                "block ({i}, {j}) is outside the sparsity pattern"
            )));
        }
        if m.shape() != (p.size(i), p.size(j)) {
            return Err(Error::DimensionMismatch(format!(
                "block ({i}, {j}) must be {}x{}, got {}x{}",
                p.size(i),
                p.size(j),
                m.nrows(),
                m.ncols()
            )));
        }
        if i == j && !is_symmetric(&m, 1e-12) {
            return Err(Error::DimensionMismatch(format!("diagonal block {i} is not symmetric")));
        }
        if i <= j {
            self.blocks.insert((i, j), m);
        } else {
            self.blocks.insert((j, i), m.transpose());
        }
        Ok(())
    }

    /// Block `(i, j)`, zero when not stored.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let p = &self.pattern.partition;
        if i <= j {
            self.blocks
                .get(&(i, j))
                .cloned()
                .unwrap_or_else(|| DMatrix::zeros(p.size(i), p.size(j)))
        } else {
            self.block(j, i).transpose()
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = &self.pattern.partition;
        let mut out = DMatrix::zeros(p.dim(), p.dim());
        for (&(i, j), b) in &self.blocks {
            out.view_mut((p.offset(i), p.offset(j)), b.shape()).copy_from(b);
            if i != j {
                out.view_mut((p.offset(j), p.offset(i)), (b.ncols(), b.nrows()))
                    .copy_from(&b.transpose());
            }
        }
        out
    }

    /// Projection of a dense symmetric matrix onto the pattern: entries outside
    /// the allowed blocks are dropped.
    pub fn from_dense(pattern: BlockPattern, x: &DMatrix<f64>) -> Result<Self> {
        let p = pattern.partition.clone();
        if x.shape() != (p.dim(), p.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "expected {0}x{0} matrix, got {1}x{2}",
                p.dim(),
                x.nrows(),
                x.ncols()
            )));
        }
        let mut m = BlockSymMatrix::zeros(pattern);
        for i in 0..p.len() {
            for j in i..p.len() {
                if m.pattern.allows(i, j) {
                    let b = x.view((p.offset(i), p.offset(j)), (p.size(i), p.size(j)));
                    m.blocks.insert((i, j), b.into_owned());
                }
            }
        }
        // symmetrize diagonal blocks against round-off in the input
        for i in 0..p.len() {
            if let Some(b) = m.blocks.get_mut(&(i, i)) {
                let s = (&*b + b.transpose()) * 0.5;
                *b = s;
            }
        }
        Ok(m)
    }

    /// Adds `E_Cᵀ Y E_C`. The clique must be complete in the pattern.
    pub fn add_inflated(&mut self, y: &DMatrix<f64>, idx: &IndexMatrix) -> Result<()> {
        if idx.partition != self.pattern.partition {
            return Err(Error::DimensionMismatch(
                "index matrix built for a different partition".into(),
            ));
        }
        if y.shape() != (idx.row_dim, idx.row_dim) {
            return Err(Error::DimensionMismatch(format!(
                "clique matrix must be {0}x{0}, got {1}x{2}",
                idx.row_dim,
                y.nrows(),
                y.ncols()
            )));
        }
        let p = self.pattern.partition.clone();
        let local = idx.local_offsets();
        for (a, &i) in idx.clique.iter().enumerate() {
            for (b, &j) in idx.clique.iter().enumerate().skip(a) {
                if !self.pattern.allows(i, j) {
                    return Err(Error::PatternMismatch(format!(
                        "clique block ({i}, {j}) is outside the sparsity pattern"
                    )));
                }
                let sub = y.view((local[a], local[b]), (p.size(i), p.size(j)));
                let entry = self
                    .blocks
                    .entry((i, j))
                    .or_insert_with(|| DMatrix::zeros(p.size(i), p.size(j)));
                *entry += sub;
            }
        }
        Ok(())
    }

    /// `E_C X E_Cᵀ` straight from the stored blocks.
    pub fn extract(&self, idx: &IndexMatrix) -> Result<DMatrix<f64>> {
        if idx.partition != self.pattern.partition {
            return Err(Error::DimensionMismatch(
                "index matrix built for a different partition".into(),
            ));
        }
        let mut out = DMatrix::zeros(idx.row_dim, idx.row_dim);
        let local = idx.local_offsets();
        for (a, &i) in idx.clique.iter().enumerate() {
            for (b, &j) in idx.clique.iter().enumerate().skip(a) {
                let blk = self.block(i, j);
                out.view_mut((local[a], local[b]), blk.shape()).copy_from(&blk);
                if a != b {
                    out.view_mut((local[b], local[a]), (blk.ncols(), blk.nrows()))
                        .copy_from(&blk.transpose());
                }
            }
        }
        Ok(out)
    }
}

/// Block row selector `E_C` for a clique, nodes in natural order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMatrix {
    clique: Vec<usize>,
    partition: Partition,
    row_dim: usize,
}

impl IndexMatrix {
    pub fn new(clique: &[usize], partition: &Partition) -> Result<Self> {
        let mut clique = clique.to_vec();
        clique.sort_unstable();
        clique.dedup();
        if let Some(&bad) = clique.iter().find(|&&v| v >= partition.len()) {
            return Err(Error::BadClique {
                node: bad,
                n: partition.len(),
            });
        }
        let row_dim = clique.iter().map(|&i| partition.size(i)).sum();
        Ok(IndexMatrix {
            clique,
            partition: partition.clone(),
            row_dim,
        })
    }

    pub fn clique(&self) -> &[usize] {
        &self.clique
    }

    /// `|C| = Σ_{i ∈ C} α_i`.
    pub fn row_dim(&self) -> usize {
        self.row_dim
    }

    fn local_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.clique
            .iter()
            .map(|&i| {
                let o = acc;
                acc += self.partition.size(i);
                o
            })
            .collect()
    }

    /// Global scalar index of every local row.
    pub fn scalar_indices(&self) -> Vec<usize> {
        self.clique.iter().flat_map(|&i| self.partition.range(i)).collect()
    }

    /// The explicit `|C| × N` 0/1 matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.row_dim, self.partition.dim());
        for (r, g) in self.scalar_indices().into_iter().enumerate() {
            e[(r, g)] = 1.0;
        }
        e
    }
}

/// `E_C X E_Cᵀ` of a dense symmetric matrix.
pub fn extract(x: &DMatrix<f64>, idx: &IndexMatrix) -> Result<DMatrix<f64>> {
    let n = idx.partition.dim();
    if x.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "expected {n}x{n} matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let rows = idx.scalar_indices();
    Ok(DMatrix::from_fn(rows.len(), rows.len(), |a, b| x[(rows[a], rows[b])]))
}

/// `E_Cᵀ Y E_C` as a block-sparse matrix whose pattern is the clique itself.
pub fn inflate(y: &DMatrix<f64>, idx: &IndexMatrix) -> Result<BlockSymMatrix> {
    let cs = CliqueSet {
        cliques: vec![idx.clique.clone()],
    };
    let pattern = BlockPattern::from_cliques(idx.partition.clone(), &cs)?;
    let mut m = BlockSymMatrix::zeros(pattern);
    m.add_inflated(y, idx)?;
    Ok(m)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Smallest eigenvalue together with the tolerance scale `max(1, ‖X‖₂)`.
pub fn min_eig_and_scale(x: &DMatrix<f64>) -> Result<(f64, f64)> {
    if x.nrows() == 0 {
        return Ok((0.0, 1.0));
    }
    let e = symmetric_eig(x)?;
    let lo = e.values[0];
    let hi = e.values[e.values.len() - 1];
    Ok((lo, 1.0f64.max(lo.abs()).max(hi.abs())))
}

/// Whether the symmetric matrix is PSD within the library tolerance.
pub fn is_psd(x: &DMatrix<f64>) -> Result<bool> {
    let (lo, scale) = min_eig_and_scale(x)?;
    Ok(lo >= -PSD_TOL * scale)
}

fn check_chordal_cover(pattern: &BlockPattern, cs: &CliqueSet) -> Result<()> {
    if !crate::graph::is_chordal(pattern.graph()).0 {
        return Err(Error::NotChordal);
    }
    for (i, j) in pattern.graph().edges() {
        if !cs
            .iter()
            .any(|c| c.binary_search(&i).is_ok() && c.binary_search(&j).is_ok())
        {
            return Err(Error::PatternMismatch(format!(
                "edge ({i}, {j}) is not covered by any clique"
            )));
        }
    }
    Ok(())
}

/// Block Grone test: `X` has a PSD completion iff every clique principal
/// submatrix is PSD.
pub fn grone_completable(x: &BlockSymMatrix, cs: &CliqueSet) -> Result<bool> {
    check_chordal_cover(x.pattern(), cs)?;
    for c in cs.iter() {
        let idx = IndexMatrix::new(c, x.partition())?;
        if !is_psd(&x.extract(&idx)?)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `Σ_k E_{C_k}ᵀ Z_k E_{C_k}` over the pattern spanned by the cliques.
pub fn agler_compose(parts: &[DMatrix<f64>], cs: &CliqueSet, partition: &Partition) -> Result<BlockSymMatrix> {
    if parts.len() != cs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} parts for {} cliques",
            parts.len(),
            cs.len()
        )));
    }
    let pattern = BlockPattern::from_cliques(partition.clone(), cs)?;
    let mut z = BlockSymMatrix::zeros(pattern);
    for (part, c) in parts.iter().zip(cs.iter()) {
        let idx = IndexMatrix::new(c, partition)?;
        z.add_inflated(part, &idx)?;
    }
    Ok(z)
}

/// Splits a PSD block-sparse matrix into clique parts `Z_k ⪰ 0` with
/// `Z = Σ E_kᵀ Z_k E_k`.
///
/// Cliques are peeled in clique-tree post-order: a non-root clique keeps its
/// exclusive rows plus the Schur-complement correction `Z_SR Z_RR⁻¹ Z_RS` on
/// the separator, which is then subtracted from what remains. Singular input
/// is shifted by `δI`, `δ = 1e-10·max(1, ‖Z‖₂)`, and `δ` is taken back out of
/// the clique in which each node is eliminated, so parts can dip to `-δ`.
pub fn agler_decompose(z: &BlockSymMatrix, ct: &CliqueTree) -> Result<Vec<DMatrix<f64>>> {
    let part = z.partition().clone();
    let cs = &ct.cliques;
    for (&(i, j), _) in z.stored_blocks() {
        if !cs
            .iter()
            .any(|c| c.binary_search(&i).is_ok() && c.binary_search(&j).is_ok())
        {
            return Err(Error::PatternMismatch(format!(
                "stored block ({i}, {j}) is not inside any clique"
            )));
        }
    }
    let mut work = z.to_dense();
    let (lo, scale) = min_eig_and_scale(&work)?;
    if lo < -PSD_TOL * scale {
        return Err(Error::NotDecomposable { min_eig: lo });
    }
    let delta = if lo <= 1e-8 * scale { 1e-10 * scale } else { 0.0 };
    for r in 0..part.dim() {
        work[(r, r)] += delta;
    }

    let (parent, post) = ct.rooted();
    let mut parts: Vec<Option<DMatrix<f64>>> = vec![None; cs.len()];
    for &k in &post {
        let ck = &cs.cliques[k];
        let sep = match parent[k] {
            Some(p) => intersect_sorted(ck, &cs.cliques[p]),
            None => Vec::new(),
        };
        let idx = IndexMatrix::new(ck, &part)?;
        let rows = idx.scalar_indices();
        let mut zk = DMatrix::zeros(rows.len(), rows.len());
        if parent[k].is_none() {
            for a in 0..rows.len() {
                for b in 0..rows.len() {
                    zk[(a, b)] = work[(rows[a], rows[b])];
                }
            }
            for a in 0..rows.len() {
                zk[(a, a)] -= delta;
            }
            parts[k] = Some(zk);
            continue;
        }
        // local positions of exclusive (R) and separator (S) rows
        let mut r_loc = Vec::new();
        let mut s_loc = Vec::new();
        let mut a = 0;
        for &v in ck {
            let target = if sep.binary_search(&v).is_ok() {
                &mut s_loc
            } else {
                &mut r_loc
            };
            for _ in part.range(v) {
                target.push(a);
                a += 1;
            }
        }
        let r_glob: Vec<usize> = r_loc.iter().map(|&l| rows[l]).collect();
        let s_glob: Vec<usize> = s_loc.iter().map(|&l| rows[l]).collect();
        let zrr = DMatrix::from_fn(r_glob.len(), r_glob.len(), |a, b| work[(r_glob[a], r_glob[b])]);
        let zrs = DMatrix::from_fn(r_glob.len(), s_glob.len(), |a, b| work[(r_glob[a], s_glob[b])]);
        let chol = zrr
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NumericalBreakdown(format!("exclusive block of clique {k} is singular")))?;
        let t = chol
            .l()
            .solve_lower_triangular(&zrs)
            .ok_or_else(|| Error::NumericalBreakdown(format!("triangular solve failed for clique {k}")))?;
        let corr = t.transpose() * &t;
        for (a, &la) in r_loc.iter().enumerate() {
            for (b, &lb) in r_loc.iter().enumerate() {
                zk[(la, lb)] = zrr[(a, b)];
            }
            for (b, &lb) in s_loc.iter().enumerate() {
                zk[(la, lb)] = zrs[(a, b)];
                zk[(lb, la)] = zrs[(a, b)];
            }
            zk[(la, la)] -= delta;
        }
        for (a, &la) in s_loc.iter().enumerate() {
            for (b, &lb) in s_loc.iter().enumerate() {
                zk[(la, lb)] = corr[(a, b)];
            }
        }
        for (a, &ga) in s_glob.iter().enumerate() {
            for (b, &gb) in s_glob.iter().enumerate() {
                work[(ga, gb)] -= corr[(a, b)];
            }
        }
        for &g in &r_glob {
            work.row_mut(g).fill(0.0);
            work.column_mut(g).fill(0.0);
        }
        parts[k] = Some(zk);
    }
    Ok(parts.into_iter().map(|p| p.expect("every clique visited")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chordal_extension, clique_tree, maximal_cliques};
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain3() -> BlockPattern {
        BlockPattern::from_edges(Partition::scalar(3), [(0, 1), (1, 2)]).unwrap()
    }

    fn chain_matrix(d: [f64; 3], x12: f64, x23: f64) -> BlockSymMatrix {
        let mut m = BlockSymMatrix::zeros(chain3());
        for (i, v) in d.iter().enumerate() {
            m.set_block(i, i, dmatrix![*v]).unwrap();
        }
        m.set_block(0, 1, dmatrix![x12]).unwrap();
        m.set_block(1, 2, dmatrix![x23]).unwrap();
        m
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    /// Random chordal block pattern: random graph, chordally extended.
    fn random_pattern(rng: &mut ChaCha8Rng, n: usize, max_alpha: usize) -> BlockPattern {
        let sizes = (0..n).map(|_| rng.gen_range(1..=max_alpha)).collect();
        let mut g = Graph::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.4) {
                    g.add_edge(i, j).unwrap();
                }
            }
        }
        let (g, _) = chordal_extension(&g);
        BlockPattern::new(Partition::new(sizes).unwrap(), g).unwrap()
    }

    #[test]
    fn partition_offsets() {
        let p = Partition::new(vec![2, 1, 3]).unwrap();
        assert_eq!(p.dim(), 6);
        assert_eq!(p.range(2), 3..6);
        assert_eq!(p.block_of(0), 0);
        assert_eq!(p.block_of(2), 1);
        assert_eq!(p.block_of(5), 2);
        assert!(Partition::new(vec![1, 0]).is_err());
    }

    #[test]
    fn extract_identity_and_submatrix() {
        let p = Partition::new(vec![2, 1, 3]).unwrap();
        let idx = IndexMatrix::new(&[0, 2], &p).unwrap();
        assert_eq!(
            extract(&DMatrix::identity(6, 6), &idx).unwrap(),
            DMatrix::identity(5, 5)
        );

        let x = dmatrix![1.0, 2.0, 0.0; 2.0, 3.0, 4.0; 0.0, 4.0, 5.0];
        let idx = IndexMatrix::new(&[1, 2], &Partition::scalar(3)).unwrap();
        assert_eq!(extract(&x, &idx).unwrap(), dmatrix![3.0, 4.0; 4.0, 5.0]);
        assert!(matches!(
            IndexMatrix::new(&[3], &Partition::scalar(3)),
            Err(Error::BadClique { node: 3, n: 3 })
        ));
    }

    #[test]
    fn extract_matches_explicit_selector() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Partition::new(vec![2, 1]).unwrap();
        let x = random_sym(&mut rng, 3);
        let idx = IndexMatrix::new(&[0], &p).unwrap();
        let e = idx.to_dense();
        let via_selector = &e * &x * e.transpose();
        assert_eq!(extract(&x, &idx).unwrap(), via_selector);
        assert_eq!(via_selector, x.view((0, 0), (2, 2)).into_owned());
    }

    #[test]
    fn inflate_places_blocks_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Partition::new(vec![2, 3, 1, 2]).unwrap();
        let idx = IndexMatrix::new(&[1, 3], &p).unwrap();
        assert_eq!(
            inflate(&DMatrix::zeros(5, 5), &idx).unwrap().to_dense(),
            DMatrix::zeros(8, 8)
        );
        let y = random_sym(&mut rng, 5);
        let m = inflate(&y, &idx).unwrap();
        assert_eq!(m.extract(&idx).unwrap(), y);
        let e = idx.to_dense();
        assert_eq!(m.to_dense(), e.transpose() * &y * &e);
        // block (a, b) of Y lands at global block position (C(a), C(b))
        let dense = m.to_dense();
        assert_eq!(dense.view((2, 6), (3, 2)), y.view((0, 3), (3, 2)));
        assert!(inflate(&DMatrix::zeros(4, 4), &idx).is_err());
    }

    #[test]
    fn grone_chain_examples() {
        let cs = maximal_cliques(chain3().graph()).unwrap();
        assert!(grone_completable(&chain_matrix([1.0, 1.0, 1.0], 1.0, 1.0), &cs).unwrap());
        // The rank-one completion with X13 = 1 is PSD, eigenvalues {0, 0, 3}.
        let full = dmatrix![1.0, 1.0, 1.0; 1.0, 1.0, 1.0; 1.0, 1.0, 1.0];
        let ev = symmetric_eig(&full).unwrap().values;
        assert!((ev[0]).abs() < 1e-12 && (ev[1]).abs() < 1e-12 && (ev[2] - 3.0).abs() < 1e-12);
        assert!(!grone_completable(&chain_matrix([1.0, 0.5, 1.0], 1.0, 1.0), &cs).unwrap());
        let eye = BlockSymMatrix::from_dense(chain3(), &DMatrix::identity(3, 3)).unwrap();
        assert!(grone_completable(&eye, &cs).unwrap());
    }

    #[test]
    fn grone_rejects_nonchordal_pattern() {
        let p = BlockPattern::from_edges(Partition::scalar(4), [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let x = BlockSymMatrix::from_dense(p, &DMatrix::identity(4, 4)).unwrap();
        let cs = CliqueSet {
            cliques: vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![0, 3]],
        };
        assert!(matches!(grone_completable(&x, &cs), Err(Error::NotChordal)));
    }

    #[test]
    fn compose_examples() {
        let cs = maximal_cliques(chain3().graph()).unwrap();
        let z = agler_compose(
            &[DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            &cs,
            &Partition::scalar(3),
        )
        .unwrap();
        assert_eq!(z.to_dense(), DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0, 1.0]));

        let p = Partition::new(vec![2, 1]).unwrap();
        let single = CliqueSet {
            cliques: vec![vec![0, 1]],
        };
        let z1 = dmatrix![2.0, 1.0, 0.0; 1.0, 2.0, 0.5; 0.0, 0.5, 1.0];
        assert_eq!(
            agler_compose(std::slice::from_ref(&z1), &single, &p)
                .unwrap()
                .to_dense(),
            z1
        );
    }

    #[test]
    fn decompose_identity_and_zero_on_chain() {
        let cs = maximal_cliques(chain3().graph()).unwrap();
        let ct = clique_tree(&cs);
        let eye = BlockSymMatrix::from_dense(chain3(), &DMatrix::identity(3, 3)).unwrap();
        let parts = agler_decompose(&eye, &ct).unwrap();
        // Z_1 = diag(1, t), Z_2 = diag(1 - t, 1) for some t in [0, 1]
        assert_eq!(parts.len(), 2);
        let t = parts[0][(1, 1)];
        assert!((0.0..=1.0).contains(&t));
        assert!((parts[0][(0, 0)] - 1.0).abs() < 1e-12 && parts[0][(0, 1)].abs() < 1e-12);
        assert!((parts[1][(0, 0)] - (1.0 - t)).abs() < 1e-12 && (parts[1][(1, 1)] - 1.0).abs() < 1e-12);
        let back = agler_compose(&parts, &cs, &Partition::scalar(3)).unwrap();
        assert!((back.to_dense() - DMatrix::identity(3, 3)).norm() < 1e-12);

        let zero = BlockSymMatrix::zeros(chain3());
        for part in agler_decompose(&zero, &ct).unwrap() {
            assert_eq!(part, DMatrix::zeros(2, 2));
        }
    }

    #[test]
    fn decompose_rejects_indefinite() {
        let cs = maximal_cliques(chain3().graph()).unwrap();
        let ct = clique_tree(&cs);
        let bad = chain_matrix([1.0, 0.5, 1.0], 1.0, 1.0);
        assert!(matches!(agler_decompose(&bad, &ct), Err(Error::NotDecomposable { .. })));
    }

    #[test]
    fn decompose_round_trip_random_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..=8);
            let pat = random_pattern(&mut rng, n, 3);
            let dim = pat.partition().dim();
            // strictly PD matrix in the pattern: diagonally dominant
            let mask = pat.scalar_mask();
            let mut x = random_sym(&mut rng, dim);
            for r in 0..dim {
                for c in 0..dim {
                    if !mask[(r, c)] {
                        x[(r, c)] = 0.0;
                    }
                }
            }
            for r in 0..dim {
                let s: f64 = x.row(r).iter().map(|v| v.abs()).sum();
                x[(r, r)] = s + 0.1;
            }
            let z = BlockSymMatrix::from_dense(pat.clone(), &x).unwrap();
            let cs = maximal_cliques(pat.graph()).unwrap();
            let ct = clique_tree(&cs);
            let parts = agler_decompose(&z, &ct).unwrap();
            for part in &parts {
                assert!(min_eig_and_scale(part).unwrap().0 >= -1e-9);
            }
            let back = agler_compose(&parts, &cs, pat.partition()).unwrap().to_dense();
            assert!((back - &x).norm() <= 1e-8 * x.norm());
        }
    }

    #[test]
    fn scalar_partition_matches_plain_indexing() {
        // With unit blocks, extract is plain principal-submatrix indexing and
        // Grone reduces to checking scalar clique submatrices.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let n = rng.gen_range(2..=7);
            let pat = random_pattern(&mut rng, n, 1);
            let x = random_sym(&mut rng, n) + DMatrix::identity(n, n) * rng.gen_range(0.0..3.0);
            let m = BlockSymMatrix::from_dense(pat.clone(), &x).unwrap();
            let cs = maximal_cliques(pat.graph()).unwrap();
            let mut scalar_verdict = true;
            for c in cs.iter() {
                let sub = DMatrix::from_fn(c.len(), c.len(), |a, b| x[(c[a], c[b])]);
                let idx = IndexMatrix::new(c, pat.partition()).unwrap();
                assert_eq!(m.extract(&idx).unwrap(), sub);
                let ev = sub.clone().symmetric_eigen().eigenvalues;
                if ev.min() < -1e-9 * ev.amax().max(1.0) {
                    scalar_verdict = false;
                }
            }
            assert_eq!(grone_completable(&m, &cs).unwrap(), scalar_verdict);
        }
    }

    #[test]
    fn pattern_membership_survives_extension() {
        let p = Partition::new(vec![1, 2, 1, 1, 2]).unwrap();
        let pat = BlockPattern::from_edges(p.clone(), [(0, 2), (0, 3), (1, 2), (1, 4), (2, 4), (3, 4)]).unwrap();
        let (ext, fill) = chordal_extension(pat.graph());
        assert!(!fill.is_empty());
        let ext = BlockPattern::new(p, ext).unwrap();
        assert!(ext.contains(&pat));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = BlockSymMatrix::from_dense(pat.clone(), &random_sym(&mut rng, 7)).unwrap();
        let mut lifted = BlockSymMatrix::zeros(ext);
        for (&(i, j), b) in m.stored_blocks() {
            lifted.set_block(i, j, b.clone()).unwrap();
        }
        assert_eq!(lifted.to_dense(), m.to_dense());
    }

    #[test]
    fn set_block_checks_pattern_and_shape() {
        let mut m = BlockSymMatrix::zeros(chain3());
        assert!(matches!(
            m.set_block(0, 2, dmatrix![1.0]),
            Err(Error::PatternMismatch(_))
        ));
        assert!(matches!(
            m.set_block(0, 1, dmatrix![1.0, 2.0]),
            Err(Error::DimensionMismatch(_))
        ));
        m.set_block(1, 0, dmatrix![4.0]).unwrap();
        assert_eq!(m.block(0, 1), dmatrix![4.0]);
    }
}
