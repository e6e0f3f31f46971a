#![allow(dead_code)]

use chordnet::blockmat::{BlockPattern, BlockSymMatrix, IndexMatrix, Partition};
use chordnet::graph::{chordal_extension, maximal_cliques, CliqueSet, Graph};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random chordal block pattern with `n` blocks of size `1..=alpha_max`.
pub fn random_chordal_pattern(rng: &mut ChaCha8Rng, n: usize, alpha_max: usize) -> (BlockPattern, CliqueSet) {
    let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=alpha_max)).collect();
    let density = rng.gen_range(0.1..0.7);
    let mut g = Graph::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(density) {
                g.add_edge(i, j).unwrap();
            }
        }
    }
    let (h, _) = chordal_extension(&g);
    let cs = maximal_cliques(&h).unwrap();
    (BlockPattern::new(Partition::new(sizes).unwrap(), h).unwrap(), cs)
}

/// `G Gᵀ` with `G` of the given shape, entries uniform on [-1, 1].
pub fn random_psd(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, rank, |_, _| rng.gen_range(-1.0..1.0));
    &g * g.transpose()
}

pub fn clique_dim(c: &[usize], p: &Partition) -> usize {
    c.iter().map(|&b| p.size(b)).sum()
}

pub fn clique_min_eig(x: &BlockSymMatrix, c: &[usize]) -> f64 {
    let idx = IndexMatrix::new(c, x.partition()).unwrap();
    x.extract(&idx).unwrap().symmetric_eigenvalues().min()
}

/// Alternating projections between the PSD cone and the matrices agreeing
/// with `x` on its pattern. Returns whether the two sets met to within
/// `1e-7·max(1, ‖x‖)` inside `max_iter` rounds.
pub fn alternating_projection_completes(x: &BlockSymMatrix, max_iter: usize) -> bool {
    let known = x.pattern().scalar_mask();
    let target = x.to_dense();
    let tol = 1e-7 * target.norm().max(1.0);
    let mut y = target.clone();
    for _ in 0..max_iter {
        let e = y.clone().symmetric_eigen();
        let clipped = e.eigenvalues.map(|v| v.max(0.0));
        let z = &e.eigenvectors * DMatrix::from_diagonal(&clipped) * e.eigenvectors.transpose();
        let mut gap = 0.0;
        y = z.clone();
        for r in 0..y.nrows() {
            for c in 0..y.ncols() {
                if known[(r, c)] {
                    gap += (z[(r, c)] - target[(r, c)]).powi(2);
                    y[(r, c)] = target[(r, c)];
                }
            }
        }
        if gap.sqrt() <= tol {
            return true;
        }
    }
    false
}

/// A dense random PSD matrix restricted to the pattern, then shifted by
/// `-t·I` with `t` placed around the smallest clique eigenvalue. Completable
/// draws mostly land where the zero fill is indefinite, so only the clique
/// submatrices decide.
pub fn restricted_sample(rng: &mut ChaCha8Rng, pattern: &BlockPattern, cs: &CliqueSet) -> BlockSymMatrix {
    let n = pattern.partition().dim();
    let dense = random_psd(rng, n, n) / n as f64;
    let x = BlockSymMatrix::from_dense(pattern.clone(), &dense).unwrap();
    let clique_min = cs.iter().map(|c| clique_min_eig(&x, c)).fold(f64::INFINITY, f64::min);
    let fill_min = x.to_dense().symmetric_eigenvalues().min();
    let s = rng.gen_range(-0.05..(clique_min - fill_min).max(0.05));
    let mut shifted = x.to_dense();
    for i in 0..n {
        shifted[(i, i)] -= clique_min - s;
    }
    BlockSymMatrix::from_dense(pattern.clone(), &shifted).unwrap()
}
