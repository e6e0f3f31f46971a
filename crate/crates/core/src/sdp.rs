//! Analysis problems as dual-form SDPs
//!
//! ```text
//! maximize bᵀy  subject to  Z = A_0 - Σ y_i A_i ⪰ 0
//! ```
//!
//! over a single lifted symmetric matrix with a block partition, plus the
//! aggregate sparsity pattern and its clique decomposition.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::blockmat::{BlockPattern, IndexMatrix, Partition};
use crate::error::{Error, Result};
use crate::graph::{chordal_extension, maximal_cliques, CliqueSet, Graph};
use crate::sysmodel::GlobalSystem;

/// Sparse symmetric matrix stored as its upper-triangle nonzeros `(r, c, v)`,
/// `r <= c`, sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    /// Builds from upper-triangle entries; explicit zeros are dropped.
    pub fn from_upper(map: BTreeMap<(usize, usize), f64>) -> Self {
        let entries = map
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((r, c), v)| {
                debug_assert!(r <= c);
                (r, c, v)
            })
            .collect();
        SparseSym { entries }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut map = BTreeMap::new();
        for c in 0..m.ncols() {
            for r in 0..=c {
                map.insert((r, c), m[(r, c)]);
            }
        }
        SparseSym::from_upper(map)
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }
}

/// Which side of the primal/dual pair the problem is read as. Both share the
/// same data: primal `min ⟨A_0, X⟩ s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Primal,
    Dual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub partition: Partition,
    pub a0: SparseSym,
    pub a: Vec<SparseSym>,
    pub b: DVector<f64>,
    pub sense: Sense,
}

impl SdpProblem {
    pub fn new(partition: Partition, a0: SparseSym, a: Vec<SparseSym>, b: DVector<f64>) -> Result<Self> {
        let p = SdpProblem {
            partition,
            a0,
            a,
            b,
            sense: Sense::Dual,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.b.len() != self.a.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} data matrices but b has length {}",
                self.a.len(),
                self.b.len()
            )));
        }
        let dim = self.dim();
        for m in std::iter::once(&self.a0).chain(&self.a) {
            for &(r, c, v) in m.entries() {
                if r > c || c >= dim || !v.is_finite() {
                    return Err(Error::DimensionMismatch(format!(
                        "data entry ({r}, {c}) = {v} invalid for dimension {dim}"
                    )));
                }
            }
        }
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("b has a non-finite entry".into()));
        }
        Ok(())
    }

    /// Number of scalar variables `m`.
    pub fn m(&self) -> usize {
        self.a.len()
    }

    /// Outer dimension of the lifted matrix.
    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    /// `Z(y) = A_0 - Σ y_i A_i`, dense.
    pub fn slack(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut z = self.a0.to_dense(self.dim());
        for (ai, &yi) in self.a.iter().zip(y.iter()) {
            for &(r, c, v) in ai.entries() {
                z[(r, c)] -= yi * v;
                if r != c {
                    z[(c, r)] -= yi * v;
                }
            }
        }
        z
    }

    pub fn dual_objective(&self, y: &DVector<f64>) -> f64 {
        self.b.dot(y)
    }
}

/// Block-diagonal Lyapunov variable `P = blkdiag(P_1, …, P_n)`.
///
/// Scalar variables enumerate the upper triangle of each diagonal block,
/// row by row; variable `(r, c)` multiplies `W = e_r e_cᵀ + e_c e_rᵀ`
/// (or `e_r e_rᵀ` on the diagonal), so `P[r, c] = y` exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PPattern {
    partition: Partition,
}

impl PPattern {
    pub fn new(partition: Partition) -> Self {
        PPattern { partition }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// `m = Σ α_i(α_i + 1)/2`.
    pub fn var_count(&self) -> usize {
        self.partition.sizes().iter().map(|&a| a * (a + 1) / 2).sum()
    }

    /// Global `(r, c)`, `r <= c`, of every basis matrix in variable order.
    pub fn basis(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.var_count());
        for i in 0..self.partition.len() {
            let range = self.partition.range(i);
            for r in range.clone() {
                for c in r..range.end {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Diagonal blocks `P_i` from the leading `var_count()` entries of `y`.
    pub fn blocks(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut k = 0;
        (0..self.partition.len())
            .map(|i| {
                let a = self.partition.size(i);
                let mut p = DMatrix::zeros(a, a);
                for r in 0..a {
                    for c in r..a {
                        p[(r, c)] = y[k];
                        p[(c, r)] = y[k];
                        k += 1;
                    }
                }
                p
            })
            .collect()
    }

    pub fn dense(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.partition.dim();
        let mut p = DMatrix::zeros(n, n);
        for (i, blk) in self.blocks(y).iter().enumerate() {
            let o = self.partition.offset(i);
            p.view_mut((o, o), blk.shape()).copy_from(blk);
        }
        p
    }

    fn check(&self, gs: &GlobalSystem) -> Result<()> {
        if self.partition != gs.states {
            return Err(Error::DimensionMismatch(
                "P pattern blocks do not match the state partition".into(),
            ));
        }
        Ok(())
    }
}

/// Nonzeros of each row of a dense matrix.
fn sparse_rows(a: &DMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..a.nrows())
        .map(|r| {
            (0..a.ncols())
                .filter(|&c| a[(r, c)] != 0.0)
                .map(|c| (c, a[(r, c)]))
                .collect()
        })
        .collect()
}

fn add_sym(map: &mut BTreeMap<(usize, usize), f64>, r: usize, c: usize, v: f64) {
    let key = if r <= c { (r, c) } else { (c, r) };
    *map.entry(key).or_insert(0.0) += v;
}

/// Upper-triangle entries of `AᵀW + WA` for basis element `(r, c)`, placed at
/// `offset`.
fn lyapunov_term(
    rows: &[Vec<(usize, f64)>],
    r: usize,
    c: usize,
    offset: usize,
    map: &mut BTreeMap<(usize, usize), f64>,
) {
    // AᵀW has column c equal to row r of A (and column r equal to row c).
    // Adding its transpose doubles the diagonal hit.
    let mut push = |col: usize, src: usize| {
        for &(p, v) in &rows[src] {
            add_sym(map, offset + p, offset + col, v);
            if p == col {
                add_sym(map, offset + p, offset + col, v);
            }
        }
    };
    if r == c {
        push(r, r);
    } else {
        push(c, r);
        push(r, c);
    }
}

/// `-W` for basis element `(r, c)` placed at `offset`.
fn neg_basis(r: usize, c: usize, offset: usize, map: &mut BTreeMap<(usize, usize), f64>) {
    map.insert((offset + r, offset + c), -1.0);
}

/// Stability LMI `P ⪰ εI`, `AᵀP + PA ⪯ -εI` with block-diagonal `P`.
///
/// Lifted partition: `(α_1..α_n | α_1..α_n)`, `A_0 = -εI`,
/// `A_i = blkdiag(-W_i, AᵀW_i + W_iA)`, `b = 0`.
pub fn stability_sdp(gs: &GlobalSystem, pp: &PPattern, eps: f64) -> Result<SdpProblem> {
    pp.check(gs)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::DimensionMismatch(format!("epsilon must be positive, got {eps}")));
    }
    let n = gs.states.dim();
    let rows = sparse_rows(&gs.a);
    let a = pp
        .basis()
        .into_iter()
        .map(|(r, c)| {
            let mut map = BTreeMap::new();
            neg_basis(r, c, 0, &mut map);
            lyapunov_term(&rows, r, c, n, &mut map);
            SparseSym::from_upper(map)
        })
        .collect::<Vec<_>>();
    let a0 = SparseSym::from_upper((0..2 * n).map(|k| ((k, k), -eps)).collect());
    let m = a.len();
    SdpProblem::new(gs.states.concat(&gs.states), a0, a, DVector::zeros(m))
}

/// H2 bound: minimize `Tr(BᵀPB)` subject to `P ⪰ 0` and
/// `AᵀP + PA + CᵀC ⪯ 0`. The bound is `sqrt(-bᵀy)`.
pub fn h2_sdp(gs: &GlobalSystem, pp: &PPattern) -> Result<SdpProblem> {
    pp.check(gs)?;
    if let Some(block) = gs.nonzero_feedthrough() {
        return Err(Error::NonzeroD { block });
    }
    let n = gs.states.dim();
    let rows = sparse_rows(&gs.a);
    let basis = pp.basis();
    let bbt = &gs.b * gs.b.transpose();
    let mut b = DVector::zeros(basis.len());
    let a = basis
        .iter()
        .enumerate()
        .map(|(k, &(r, c))| {
            // Tr(BᵀWB) = ⟨W, BBᵀ⟩
            b[k] = -if r == c { bbt[(r, r)] } else { 2.0 * bbt[(r, c)] };
            let mut map = BTreeMap::new();
            neg_basis(r, c, 0, &mut map);
            lyapunov_term(&rows, r, c, n, &mut map);
            SparseSym::from_upper(map)
        })
        .collect();
    let ctc = gs.c.transpose() * &gs.c;
    let mut a0 = BTreeMap::new();
    for c in 0..n {
        for r in 0..=c {
            a0.insert((n + r, n + c), -ctc[(r, c)]);
        }
    }
    SdpProblem::new(gs.states.concat(&gs.states), SparseSym::from_upper(a0), a, b)
}

/// H∞ bound: minimize `γ` subject to `P ⪰ 0` and
///
/// ```text
/// ⎡AᵀP + PA  PB   Cᵀ ⎤
/// ⎢BᵀP       -γI  Dᵀ ⎥ ⪯ 0
/// ⎣C          D   -γI⎦
/// ```
///
/// Lifted partition `(α | α, m, d)`; the last variable is `γ = -bᵀy`.
pub fn hinf_sdp(gs: &GlobalSystem, pp: &PPattern) -> Result<SdpProblem> {
    pp.check(gs)?;
    let n = gs.states.dim();
    let mm = gs.disturbances.dim();
    let dd = gs.outputs.dim();
    let (ox, ow, oy) = (n, 2 * n, 2 * n + mm);
    let rows = sparse_rows(&gs.a);
    let brows = sparse_rows(&gs.b);
    let mut a: Vec<SparseSym> = pp
        .basis()
        .into_iter()
        .map(|(r, c)| {
            let mut map = BTreeMap::new();
            neg_basis(r, c, 0, &mut map);
            lyapunov_term(&rows, r, c, ox, &mut map);
            // WB: row r gets row c of B and vice versa
            let mut push = |row: usize, src: usize| {
                for &(q, v) in &brows[src] {
                    add_sym(&mut map, ox + row, ow + q, v);
                }
            };
            push(r, c);
            if r != c {
                push(c, r);
            }
            SparseSym::from_upper(map)
        })
        .collect();
    let gamma = (ow..oy + dd).map(|k| ((k, k), -1.0)).collect();
    a.push(SparseSym::from_upper(gamma));

    let mut a0 = BTreeMap::new();
    for r in 0..dd {
        for c in 0..n {
            if gs.c[(r, c)] != 0.0 {
                a0.insert((ox + c, oy + r), -gs.c[(r, c)]);
            }
        }
        for c in 0..mm {
            if gs.d[(r, c)] != 0.0 {
                a0.insert((ow + c, oy + r), -gs.d[(r, c)]);
            }
        }
    }
    let partition = gs
        .states
        .concat(&gs.states)
        .concat(&gs.disturbances)
        .concat(&gs.outputs);
    let m = a.len();
    let mut b = DVector::zeros(m);
    b[m - 1] = -1.0;
    SdpProblem::new(partition, SparseSym::from_upper(a0), a, b)
}

/// Union of the block patterns of `A_0, …, A_m` over the problem partition.
pub fn aggregate_pattern(p: &SdpProblem) -> BlockPattern {
    let mut g = Graph::new(p.partition.len());
    for m in std::iter::once(&p.a0).chain(&p.a) {
        for &(r, c, _) in m.entries() {
            let (i, j) = (p.partition.block_of(r), p.partition.block_of(c));
            if i != j {
                g.add_edge(i, j).expect("blocks are in range");
            }
        }
    }
    BlockPattern::new(p.partition.clone(), g).expect("graph sized to the partition")
}

/// Undirected block pattern of `A` read from its nonzero blocks.
pub fn state_graph(gs: &GlobalSystem) -> Graph {
    let p = &gs.states;
    let mut g = Graph::new(p.len());
    for i in 0..p.len() {
        for j in 0..p.len() {
            if i != j
                && gs
                    .a
                    .view((p.offset(i), p.offset(j)), (p.size(i), p.size(j)))
                    .iter()
                    .any(|&v| v != 0.0)
            {
                g.add_edge(i, j).expect("blocks are in range");
            }
        }
    }
    g
}

/// Block pattern of the H∞ matrix over `(α_1..α_n, m_1..m_n, d_1..d_n)`
/// together with its maximal cliques, predicted without enumeration: the
/// cliques of the chordally extended state graph plus one triple
/// `{i, n+i, 2n+i}` per subsystem.
pub fn hinf_pattern(gs: &GlobalSystem, pp: &PPattern) -> Result<(BlockPattern, CliqueSet)> {
    pp.check(gs)?;
    let n = gs.states.len();
    let (ec, _) = chordal_extension(&state_graph(gs));
    let base = maximal_cliques(&ec)?;
    let mut g = Graph::new(3 * n);
    for (i, j) in ec.edges() {
        g.add_edge(i, j)?;
    }
    // an isolated subsystem is a 1-clique of the state graph, absorbed by its triple
    let mut cliques: Vec<Vec<usize>> = base.cliques.into_iter().filter(|c| c.len() > 1).collect();
    for i in 0..n {
        g.add_edge(i, n + i)?;
        g.add_edge(i, 2 * n + i)?;
        g.add_edge(n + i, 2 * n + i)?;
        cliques.push(vec![i, n + i, 2 * n + i]);
    }
    let partition = gs.states.concat(&gs.disturbances).concat(&gs.outputs);
    Ok((BlockPattern::new(partition, g)?, CliqueSet::canonical(cliques)))
}

/// `pattern` with `prefix.len()` isolated blocks put in front.
pub fn prepend_isolated(prefix: &Partition, pattern: &BlockPattern) -> BlockPattern {
    let k = prefix.len();
    let mut g = Graph::new(k + pattern.partition().len());
    for (i, j) in pattern.graph().edges() {
        g.add_edge(k + i, k + j).expect("shifted edge is in range");
    }
    BlockPattern::new(prefix.concat(pattern.partition()), g).expect("sizes agree")
}

/// Consensus form: one PSD cone per maximal clique of the (chordally
/// extended) pattern, coupled through the shared entries of the lifted
/// matrix.
#[derive(Debug, Clone)]
pub struct DecomposedSdp {
    pub base: SdpProblem,
    /// Chordal pattern that the cliques cover.
    pub pattern: BlockPattern,
    /// Edges added to make the requested pattern chordal.
    pub fill: Vec<(usize, usize)>,
    pub cliques: CliqueSet,
    pub index: Vec<IndexMatrix>,
}

impl DecomposedSdp {
    /// Scalar dimension `|C_k|` of each clique cone.
    pub fn cone_dims(&self) -> Vec<usize> {
        self.index.iter().map(IndexMatrix::row_dim).collect()
    }
}

pub fn decompose(p: &SdpProblem, pattern: &BlockPattern) -> Result<DecomposedSdp> {
    if pattern.partition() != &p.partition {
        return Err(Error::PatternMismatch(
            "pattern partition differs from the problem partition".into(),
        ));
    }
    let agg = aggregate_pattern(p);
    if let Some((i, j)) = agg
        .graph()
        .edges()
        .into_iter()
        .find(|&(i, j)| !pattern.graph().has_edge(i, j))
    {
        return Err(Error::PatternMismatch(format!(
            "data couples blocks {i} and {j}, which the pattern does not allow"
        )));
    }
    let (ext, fill) = chordal_extension(pattern.graph());
    let cliques = maximal_cliques(&ext)?;
    let index = cliques
        .iter()
        .map(|c| IndexMatrix::new(c, &p.partition))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecomposedSdp {
        base: p.clone(),
        pattern: BlockPattern::new(p.partition.clone(), ext)?,
        fill,
        cliques,
        index,
    })
}

/// Writes the problem in SDPA sparse format (`.dat-s`).
///
/// SDPA reads `min cᵀx s.t. Σ F_i x_i - F_0 ⪰ 0`, so `c = -b`,
/// `F_i = -A_i`, `F_0 = -A_0`. The PSD blocks are the connected components
/// of the aggregate pattern; row and column numbers are local to the block
/// and 1-based.
pub fn write_sdpa<W: Write>(p: &SdpProblem, mut w: W) -> Result<()> {
    let comps = aggregate_pattern(p).graph().components();
    let mut block_of = vec![(0usize, 0usize); p.dim()];
    let mut sizes = Vec::with_capacity(comps.len());
    for (k, comp) in comps.iter().enumerate() {
        let mut local = 0;
        for &node in comp {
            for r in p.partition.range(node) {
                local += 1;
                block_of[r] = (k + 1, local);
            }
        }
        sizes.push(local);
    }
    writeln!(w, "\"chordnet SDP export")?;
    writeln!(w, "{}", p.m())?;
    writeln!(w, "{}", sizes.len())?;
    let sizes: Vec<String> = sizes.iter().map(usize::to_string).collect();
    writeln!(w, "{}", sizes.join(" "))?;
    let c: Vec<String> = p.b.iter().map(|v| format!("{:.16e}", 0.0 - v)).collect();
    writeln!(w, "{}", c.join(" "))?;
    for (k, m) in std::iter::once(&p.a0).chain(&p.a).enumerate() {
        for &(r, c, v) in m.entries() {
            let (blk, lr) = block_of[r];
            let (_, lc) = block_of[c];
            let (lr, lc) = (lr.min(lc), lr.max(lc));
            writeln!(w, "{k} {blk} {lr} {lc} {:.16e}", -v)?;
        }
    }
    Ok(())
}
