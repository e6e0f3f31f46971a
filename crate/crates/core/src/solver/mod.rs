//! First-order SDP solvers: consensus ADMM over clique cones, and the same
//! iteration over the undecomposed cone as a dense baseline.

mod admm;
mod chol;
mod eig;

use nalgebra::{DMatrix, DVector};

pub use chol::EnvelopeCholesky;
pub use eig::{symmetric_eig, SymmetricEigen};

use crate::blockmat::is_symmetric;
use crate::error::{Error, Result};
use crate::sdp::{aggregate_pattern, DecomposedSdp, SdpProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmSettings {
    /// Penalty parameter.
    pub rho: f64,
    /// Over-relaxation, in `[1, 2)`.
    pub alpha_relax: f64,
    /// Bound on the relative primal residual, dual residual and duality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Residuals are evaluated every `check_every` iterations.
    pub check_every: usize,
    /// Rebalance `rho` from the residual ratio while iterating. `rho` is then
    /// only the starting value.
    pub adaptive_rho: bool,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            rho: 1.0,
            alpha_relax: 1.5,
            tol: 1e-4,
            max_iter: 2000,
            check_every: 1,
            adaptive_rho: true,
        }
    }
}

impl AdmmSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.rho.is_finite()
            && (1.0..2.0).contains(&self.alpha_relax)
            && self.tol > 0.0
            && self.max_iter >= 1
            && self.check_every >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("invalid solver settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    MaxIters,
    /// Iteration cap reached while the scaled dual iterate kept growing
    /// (its norm rose by half or more over the second half of the run).
    InfeasibleSuspected,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Solved => "solved",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::InfeasibleSuspected => "infeasible_suspected",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub y: DVector<f64>,
    /// Scalar rows of the lifted matrix covered by each cone.
    pub cone_rows: Vec<Vec<usize>>,
    /// Cone variables `Z_k` (PSD) at the returned iterate.
    pub cone_vars: Vec<DMatrix<f64>>,
    /// `bᵀy` for dual-sense problems, `⟨A_0, X⟩` for primal-sense ones.
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Penalty in effect at the end.
    pub rho: f64,
    pub wall_time: f64,
}

/// ADMM over one cone per clique of the decomposition.
pub fn solve_decomposed(d: &DecomposedSdp, s: &AdmmSettings) -> Result<SolveResult> {
    admm::solve_with_cones(&d.base, &d.cliques.cliques, s)
}

/// The same iteration without chordal decomposition: each connected
/// component of the aggregate pattern is one full PSD cone.
pub fn solve_dense(p: &SdpProblem, s: &AdmmSettings) -> Result<SolveResult> {
    let comps = aggregate_pattern(p).graph().components();
    admm::solve_with_cones(p, &comps, s)
}

/// Frobenius-nearest PSD matrix: eigenvalues clipped at zero.
pub fn psd_project(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !x.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "psd_project expects a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let scale = 1f64.max(x.amax());
    if !is_symmetric(x, 1e-12 * scale) {
        return Err(Error::DimensionMismatch(
            "psd_project expects a symmetric matrix".into(),
        ));
    }
    admm::project_dense(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eig_examples() {
        let e = symmetric_eig(&DMatrix::identity(4, 4)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let e = symmetric_eig(&DMatrix::from_diagonal(&nalgebra::dvector![3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 2.0, 3.0]);
        for (k, row) in [1usize, 2, 0].iter().enumerate() {
            assert!((e.vectors[(*row, k)].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn eig_residual_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for n in [1usize, 2, 3, 7, 20, 33] {
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let x = (&a + a.transpose()) * 0.5;
            let e = symmetric_eig(&x).unwrap();
            assert!((e.recompose() - &x).norm() <= 1e-10 * x.norm().max(f64::MIN_POSITIVE));
            let q = &e.vectors;
            assert!((q.transpose() * q - DMatrix::identity(n, n)).norm() <= 1e-10);
            assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
            // deterministic
            let again = symmetric_eig(&x).unwrap();
            assert_eq!(again.values, e.values);
            assert_eq!(again.vectors, e.vectors);
        }
    }

    #[test]
    fn eig_handles_degenerate_spectra() {
        let x = DMatrix::from_element(5, 5, 1.0);
        let e = symmetric_eig(&x).unwrap();
        assert!((e.values[4] - 5.0).abs() < 1e-12);
        assert!(e.values.iter().take(4).all(|v| v.abs() < 1e-12));
        assert!(symmetric_eig(&DMatrix::zeros(3, 3))
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
        assert!(symmetric_eig(&DMatrix::zeros(2, 3)).is_err());
        let mut bad = DMatrix::identity(3, 3);
        bad[(1, 0)] = f64::NAN;
        assert!(matches!(symmetric_eig(&bad), Err(Error::ConvergenceFailure(_))));
    }

    #[test]
    fn psd_project_examples() {
        assert_eq!(
            psd_project(&dmatrix![1.0, 0.0; 0.0, -2.0]).unwrap(),
            dmatrix![1.0, 0.0; 0.0, 0.0]
        );
        let p = dmatrix![2.0, 1.0; 1.0, 2.0];
        assert!((psd_project(&p).unwrap() - &p).norm() < 1e-12);
        assert_eq!(psd_project(&dmatrix![-1.0]).unwrap(), dmatrix![0.0]);
        assert!(psd_project(&dmatrix![1.0, 2.0; 0.0, 1.0]).is_err());
    }

    #[test]
    fn psd_project_is_idempotent_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in 1..12 {
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let x = (&a + a.transpose()) * 0.5;
            let p = psd_project(&x).unwrap();
            let ev = symmetric_eig(&p).unwrap().values;
            assert!(ev[0] >= -1e-12);
            let pp = psd_project(&p).unwrap();
            assert!((&pp - &p).norm() < 1e-12);
            // the residual is the negative part: X - P ⪯ 0 and ⟨X - P, P⟩ = 0
            let r = &x - &p;
            assert!(symmetric_eig(&r).unwrap().values[n - 1] <= 1e-12);
            assert!(r.dot(&p).abs() < 1e-10);
        }
    }

    #[test]
    fn settings_validation() {
        assert!(AdmmSettings::default().validate().is_ok());
        let bad = AdmmSettings {
            alpha_relax: 2.0,
            ..AdmmSettings::default()
        };
        assert!(bad.validate().is_err());
    }
}
