//! Networked linear systems: subsystem data, global assembly, the random
//! chain benchmark, and the JSON system file format.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockmat::{BlockPattern, Partition};
use crate::error::{Error, Result};
use crate::graph::Graph;

pub const FORMAT_VERSION: u32 = 1;

/// Local dynamics `ẋ_i = A_ii x_i + … + B_i w_i`, `y_i = C_i x_i + D_i w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl Subsystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let s = Subsystem { a, b, c, d };
        s.validate(0)?;
        Ok(s)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    fn validate(&self, i: usize) -> Result<()> {
        let (al, m, d) = (self.a.nrows(), self.b.ncols(), self.c.nrows());
        if al == 0 || m == 0 || d == 0 {
            return Err(Error::InvalidSystem(format!(
                "subsystem {i}: state, disturbance and output dimensions must be positive"
            )));
        }
        let ok = self.a.shape() == (al, al)
            && self.b.shape() == (al, m)
            && self.c.shape() == (d, al)
            && self.d.shape() == (d, m);
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "subsystem {i}: A {:?}, B {:?}, C {:?}, D {:?} are inconsistent",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.d.shape()
            )));
        }
        let finite = [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidSystem(format!("subsystem {i}: non-finite entry")));
        }
        Ok(())
    }
}

/// Subsystems coupled over a directed graph. A directed edge `(i, j)` carries
/// the coupling block `A_ij` (size `α_i × α_j`), so that the assembled `A`
/// has a nonzero block exactly at each edge.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkedSystem {
    subsystems: Vec<Subsystem>,
    coupling: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl NetworkedSystem {
    pub fn new(subsystems: Vec<Subsystem>, coupling: BTreeMap<(usize, usize), DMatrix<f64>>) -> Result<Self> {
        let sys = NetworkedSystem { subsystems, coupling };
        sys.validate()?;
        Ok(sys)
    }

    fn validate(&self) -> Result<()> {
        if self.subsystems.is_empty() {
            return Err(Error::InvalidSystem("system has no subsystems".into()));
        }
        for (i, s) in self.subsystems.iter().enumerate() {
            s.validate(i)?;
        }
        let n = self.subsystems.len();
        for (&(i, j), blk) in &self.coupling {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidSystem(format!(
                    "coupling edge ({}, {}) is invalid for {n} subsystems",
                    i + 1,
                    j + 1
                )));
            }
            let want = (self.subsystems[i].state_dim(), self.subsystems[j].state_dim());
            if blk.shape() != want {
                return Err(Error::DimensionMismatch(format!(
                    "coupling block ({}, {}) must be {}x{}, got {}x{}",
                    i + 1,
                    j + 1,
                    want.0,
                    want.1,
                    blk.nrows(),
                    blk.ncols()
                )));
            }
            if blk.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSystem(format!(
                    "coupling block ({}, {}) has a non-finite entry",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn coupling(&self) -> &BTreeMap<(usize, usize), DMatrix<f64>> {
        &self.coupling
    }

    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        self.coupling.keys().copied().collect()
    }

    pub fn state_partition(&self) -> Partition {
        Partition::new(self.subsystems.iter().map(Subsystem::state_dim).collect())
            .expect("validated subsystems have positive dimensions")
    }

    /// Index of the first subsystem with `D_i ≠ 0`.
    pub fn nonzero_feedthrough(&self) -> Option<usize> {
        self.subsystems.iter().position(|s| s.d.iter().any(|&v| v != 0.0))
    }
}

/// The stacked model `ẋ = Ax + Bw`, `y = Cx + Dw`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub states: Partition,
    pub disturbances: Partition,
    pub outputs: Partition,
}

impl GlobalSystem {
    /// Index of the first subsystem whose `D_i` is nonzero.
    pub fn nonzero_feedthrough(&self) -> Option<usize> {
        (0..self.outputs.len()).find(|&i| {
            self.d
                .view(
                    (self.outputs.offset(i), self.disturbances.offset(i)),
                    (self.outputs.size(i), self.disturbances.size(i)),
                )
                .iter()
                .any(|&v| v != 0.0)
        })
    }
}

pub fn assemble(sys: &NetworkedSystem) -> Result<GlobalSystem> {
    sys.validate()?;
    let subs = &sys.subsystems;
    let states = sys.state_partition();
    let disturbances = Partition::new(subs.iter().map(Subsystem::disturbance_dim).collect())?;
    let outputs = Partition::new(subs.iter().map(Subsystem::output_dim).collect())?;
    let (nn, mm, dd) = (states.dim(), disturbances.dim(), outputs.dim());
    let mut a = DMatrix::zeros(nn, nn);
    let mut b = DMatrix::zeros(nn, mm);
    let mut c = DMatrix::zeros(dd, nn);
    let mut d = DMatrix::zeros(dd, mm);
    for (i, s) in subs.iter().enumerate() {
        let (si, wi, yi) = (states.offset(i), disturbances.offset(i), outputs.offset(i));
        a.view_mut((si, si), s.a.shape()).copy_from(&s.a);
        b.view_mut((si, wi), s.b.shape()).copy_from(&s.b);
        c.view_mut((yi, si), s.c.shape()).copy_from(&s.c);
        d.view_mut((yi, wi), s.d.shape()).copy_from(&s.d);
    }
    for (&(i, j), blk) in &sys.coupling {
        a.view_mut((states.offset(i), states.offset(j)), blk.shape())
            .copy_from(blk);
    }
    Ok(GlobalSystem {
        a,
        b,
        c,
        d,
        states,
        disturbances,
        outputs,
    })
}

/// `E ∪ E_r` as an undirected block pattern over the state partition.
pub fn undirected_pattern(sys: &NetworkedSystem) -> BlockPattern {
    let mut g = Graph::new(sys.len());
    for &(i, j) in sys.coupling.keys() {
        g.add_edge(i, j).expect("validated edge");
    }
    BlockPattern::new(sys.state_partition(), g).expect("graph sized to the partition")
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "spectral abscissa of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConvergenceFailure("non-finite matrix entry".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 1000 * a.nrows())
        .ok_or_else(|| Error::ConvergenceFailure("Schur iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Random benchmark chain with two-way coupling between neighbours.
///
/// State sizes are uniform on `5..=10`, disturbance and output sizes on
/// `1..=5`, all entries uniform on `[-1, 1]`. The diagonal blocks are then
/// shifted by `-(λ_max + 5)` so the assembled `A` has spectral abscissa `-5`.
pub fn random_chain(n: usize, seed: u64) -> Result<NetworkedSystem> {
    if n < 2 {
        return Err(Error::InvalidSystem("a chain needs at least two subsystems".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims: Vec<(usize, usize, usize)> = (0..n)
        .map(|_| (rng.gen_range(5..=10), rng.gen_range(1..=5), rng.gen_range(1..=5)))
        .collect();
    let mut uniform = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..=1.0));
    let mut subsystems: Vec<Subsystem> = dims
        .iter()
        .map(|&(al, m, d)| Subsystem {
            a: uniform(al, al),
            b: uniform(al, m),
            c: uniform(d, al),
            d: uniform(d, m),
        })
        .collect();
    let mut coupling = BTreeMap::new();
    for i in 0..n - 1 {
        let (ai, aj) = (dims[i].0, dims[i + 1].0);
        coupling.insert((i, i + 1), uniform(ai, aj));
        coupling.insert((i + 1, i), uniform(aj, ai));
    }
    let mut sys = NetworkedSystem {
        subsystems: std::mem::take(&mut subsystems),
        coupling,
    };
    let lambda = spectral_abscissa(&assemble(&sys)?.a)?;
    let shift = lambda + 5.0;
    for s in &mut sys.subsystems {
        for k in 0..s.a.nrows() {
            s.a[(k, k)] -= shift;
        }
    }
    Ok(sys)
}

/// Same chain with `D_i = 0`, as required by the H2 analysis.
pub fn without_feedthrough(sys: &NetworkedSystem) -> NetworkedSystem {
    let mut out = sys.clone();
    for s in &mut out.subsystems {
        s.d.fill(0.0);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct BlockDims {
    alpha: usize,
    m: usize,
    d: usize,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct SystemFile {
    version: u32,
    n: usize,
    blocks: Vec<BlockDims>,
    edges: Vec<[usize; 2]>,
    A: BTreeMap<String, Vec<f64>>,
    B: Vec<Vec<f64>>,
    C: Vec<Vec<f64>>,
    D: Vec<Vec<f64>>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(r: usize, c: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if data.len() != r * c {
        return Err(Error::DimensionMismatch(format!(
            "{what} needs {} entries, got {}",
            r * c,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(r, c, data))
}

/// Writes floats as `{:.16e}`: 17 significant digits, enough to read back
/// the identical `f64`.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

pub fn write_system<W: Write>(sys: &NetworkedSystem, writer: W) -> Result<()> {
    let file = SystemFile {
        version: FORMAT_VERSION,
        n: sys.len(),
        blocks: sys
            .subsystems
            .iter()
            .map(|s| BlockDims {
                alpha: s.state_dim(),
                m: s.disturbance_dim(),
                d: s.output_dim(),
            })
            .collect(),
        edges: sys.coupling.keys().map(|&(i, j)| [i + 1, j + 1]).collect(),
        A: sys
            .subsystems
            .iter()
            .enumerate()
            .map(|(i, s)| ((i, i), &s.a))
            .chain(sys.coupling.iter().map(|(&k, v)| (k, v)))
            .map(|((i, j), m)| (format!("{},{}", i + 1, j + 1), row_major(m)))
            .collect(),
        B: sys.subsystems.iter().map(|s| row_major(&s.b)).collect(),
        C: sys.subsystems.iter().map(|s| row_major(&s.c)).collect(),
        D: sys.subsystems.iter().map(|s| row_major(&s.d)).collect(),
    };
    let mut ser = serde_json::Serializer::with_formatter(writer, SeventeenDigits);
    file.serialize(&mut ser)?;
    Ok(())
}

pub fn read_system<R: Read>(reader: R) -> Result<NetworkedSystem> {
    let file: SystemFile = serde_json::from_reader(reader)?;
    if file.version != FORMAT_VERSION {
        return Err(Error::InvalidSystem(format!(
            "unsupported format version {}",
            file.version
        )));
    }
    let n = file.n;
    if file.blocks.len() != n || file.B.len() != n || file.C.len() != n || file.D.len() != n {
        return Err(Error::InvalidSystem(format!(
            "expected {n} entries in blocks, B, C and D"
        )));
    }
    let mut a_blocks = file.A;
    let mut subsystems = Vec::with_capacity(n);
    for (i, dims) in file.blocks.iter().enumerate() {
        let key = format!("{},{}", i + 1, i + 1);
        let a = a_blocks
            .remove(&key)
            .ok_or_else(|| Error::InvalidSystem(format!("missing diagonal block A[{key}]")))?;
        let sub = Subsystem {
            a: from_row_major(dims.alpha, dims.alpha, &a, &format!("A[{key}]"))?,
            b: from_row_major(dims.alpha, dims.m, &file.B[i], &format!("B[{}]", i + 1))?,
            c: from_row_major(dims.d, dims.alpha, &file.C[i], &format!("C[{}]", i + 1))?,
            d: from_row_major(dims.d, dims.m, &file.D[i], &format!("D[{}]", i + 1))?,
        };
        sub.validate(i)?;
        subsystems.push(sub);
    }
    let mut coupling = BTreeMap::new();
    for [i, j] in file.edges {
        if i == 0 || j == 0 || i > n || j > n || i == j {
            return Err(Error::InvalidSystem(format!("invalid edge [{i}, {j}]")));
        }
        let key = format!("{i},{j}");
        let data = a_blocks
            .remove(&key)
            .ok_or_else(|| Error::InvalidSystem(format!("edge [{i}, {j}] has no block A[{key}]")))?;
        let blk = from_row_major(
            file.blocks[i - 1].alpha,
            file.blocks[j - 1].alpha,
            &data,
            &format!("A[{key}]"),
        )?;
        if coupling.insert((i - 1, j - 1), blk).is_some() {
            return Err(Error::InvalidSystem(format!("duplicate edge [{i}, {j}]")));
        }
    }
    if let Some(key) = a_blocks.keys().next() {
        return Err(Error::InvalidSystem(format!(
            "block A[{key}] does not correspond to an edge"
        )));
    }
    NetworkedSystem::new(subsystems, coupling)
}
