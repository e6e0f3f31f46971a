//! Consensus ADMM on the dual form `Z = A_0 - Σ y_i A_i ⪰ 0`.
//!
//! The lifted matrix is covered by PSD cones (index sets). Every covered
//! upper-triangle entry `e` gives one linear constraint
//! `Σ_{k ∋ e} z_{k,e} + (F y)_e = a0_e`, written `G z + F y = a0`, where
//! `G` sums the cone copies of each entry. Off-diagonal coordinates carry a
//! factor `√2` so that Euclidean norms equal Frobenius norms.
//!
//! Iteration (scaled form, penalty `ρ`, relaxation `α`):
//!
//! ```text
//! (v, y) = argmin -bᵀy + ρ/2 ‖v - (z - u)‖²  s.t.  G v + F y = a0
//! z⁺     = Π_K(α v + (1 - α) z + u)
//! u⁺     = u + α v + (1 - α) z - z⁺
//! ```
//!
//! The affine step reduces to `(Fᵀ D⁻¹ F) y = b/ρ + Fᵀ D⁻¹ (a0 - G c)` with
//! `D = G Gᵀ` diagonal (entry multiplicities), factored once.
//!
//! The data are first equilibrated by a diagonal congruence `S A_i S` of the
//! lifted rows, which leaves `y`, the objective and the cone structure
//! unchanged. Residuals are measured in the scaled coordinates; returned
//! cone variables are mapped back.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::chol::EnvelopeCholesky;
use super::eig::eig_in_place;
use super::{AdmmSettings, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::sdp::{SdpProblem, Sense};

const SQRT2: f64 = std::f64::consts::SQRT_2;

// Residual balancing: scale ρ by ADAPT_STEP towards the larger residual once
// they differ by more than ADAPT_RATIO. Checks start every ADAPT_EVERY
// iterations; the wait doubles after each change so ρ cannot oscillate.
const ADAPT_EVERY: usize = 20;
const ADAPT_RATIO: f64 = 5.0;
const ADAPT_STEP: f64 = 2.0;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

struct Cone {
    /// Global scalar rows, ascending.
    rows: Vec<usize>,
    /// Offset of this cone's svec block inside `z`.
    offset: usize,
}

impl Cone {
    fn dim(&self) -> usize {
        self.rows.len()
    }

    fn svec_len(&self) -> usize {
        let d = self.dim();
        d * (d + 1) / 2
    }
}

struct Engine<'a> {
    problem: &'a SdpProblem,
    cones: Vec<Cone>,
    /// svec coordinate → constraint entry.
    entry_of: Vec<usize>,
    a0: Vec<f64>,
    /// Column `i` of `F`: `(entry, value)`.
    fcols: Vec<Vec<(usize, f64)>>,
    dinv: Vec<f64>,
    chol: EnvelopeCholesky,
    /// Congruence scaling of the lifted rows.
    scale: Vec<f64>,
}

/// svec position of `(r, c)`, `r <= c`, in a cone: columns of the upper
/// triangle, top to bottom.
#[inline]
fn svec_index(r: usize, c: usize) -> usize {
    c * (c + 1) / 2 + r
}

impl<'a> Engine<'a> {
    fn new(problem: &'a SdpProblem, cone_rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut entries: HashMap<(usize, usize), usize> = HashMap::new();
        let mut multiplicity: Vec<f64> = Vec::new();
        let mut entry_of = Vec::new();
        let mut cones = Vec::with_capacity(cone_rows.len());
        let mut offset = 0;
        for rows in cone_rows {
            debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
            let cone = Cone { rows, offset };
            for c in 0..cone.dim() {
                for r in 0..=c {
                    let key = (cone.rows[r], cone.rows[c]);
                    let next = multiplicity.len();
                    let e = *entries.entry(key).or_insert(next);
                    if e == next {
                        multiplicity.push(0.0);
                    }
                    multiplicity[e] += 1.0;
                    entry_of.push(e);
                }
            }
            offset += cone.svec_len();
            cones.push(cone);
        }

        let scale = row_scaling(problem);
        let lookup = |r: usize, c: usize, v: f64| -> Result<(usize, f64)> {
            let e = entries
                .get(&(r, c))
                .ok_or_else(|| Error::PatternMismatch(format!("data entry ({r}, {c}) is not covered by any cone")))?;
            let v = v * scale[r] * scale[c];
            Ok((*e, if r == c { v } else { SQRT2 * v }))
        };
        let mut a0 = vec![0.0; multiplicity.len()];
        for &(r, c, v) in problem.a0.entries() {
            let (e, s) = lookup(r, c, v)?;
            a0[e] = s;
        }
        let fcols = problem
            .a
            .iter()
            .map(|ai| {
                ai.entries()
                    .iter()
                    .map(|&(r, c, v)| lookup(r, c, v))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let dinv: Vec<f64> = multiplicity.iter().map(|m| 1.0 / m).collect();

        // K = Fᵀ D⁻¹ F, assembled straight into its envelope.
        let m = fcols.len();
        let mut vars_of: Vec<Vec<(usize, f64)>> = vec![Vec::new(); multiplicity.len()];
        for (i, col) in fcols.iter().enumerate() {
            for &(e, v) in col {
                vars_of[e].push((i, v));
            }
        }
        let mut first: Vec<usize> = (0..m).collect();
        for vars in &vars_of {
            if let Some(lo) = vars.iter().map(|&(i, _)| i).min() {
                for &(i, _) in vars {
                    first[i] = first[i].min(lo);
                }
            }
        }
        let mut k = EnvelopeCholesky::zeros(first);
        for (e, vars) in vars_of.iter().enumerate() {
            for &(i, vi) in vars {
                for &(j, vj) in vars {
                    if j <= i {
                        k.add(i, j, vi * vj * dinv[e]);
                    }
                }
            }
        }
        let chol = k.factor_assembled().map_err(|e| match e {
            Error::NumericalBreakdown(msg) => Error::NumericalBreakdown(format!(
                "{msg}; the data matrices are linearly dependent on the covered entries"
            )),
            other => other,
        })?;

        Ok(Engine {
            problem,
            cones,
            entry_of,
            a0,
            fcols,
            dinv,
            chol,
            scale,
        })
    }

    fn svec_total(&self) -> usize {
        self.entry_of.len()
    }

    fn n_entries(&self) -> usize {
        self.a0.len()
    }

    /// `z ← Π_K(x)` cone by cone.
    fn project(&self, x: &[f64], z: &mut [f64]) -> Result<()> {
        let mut slices: Vec<(&Cone, &[f64], &mut [f64])> = Vec::with_capacity(self.cones.len());
        let mut rest = z;
        for cone in &self.cones {
            let (head, tail) = rest.split_at_mut(cone.svec_len());
            slices.push((cone, &x[cone.offset..cone.offset + cone.svec_len()], head));
            rest = tail;
        }
        slices
            .into_par_iter()
            .map(|(cone, xs, zs)| project_svec(cone.dim(), xs, zs))
            .collect::<Result<Vec<()>>>()?;
        Ok(())
    }

    fn run(&self, s: &AdmmSettings, start: Instant) -> Result<SolveResult> {
        let (mut rho, alpha) = (s.rho, s.alpha_relax);
        let nz = self.svec_total();
        let ne = self.n_entries();
        let m = self.fcols.len();
        let b = self.problem.b.as_slice();

        let mut z = vec![0.0; nz];
        let mut u = vec![0.0; nz];
        let mut c = vec![0.0; nz];
        let mut v = vec![0.0; nz];
        let mut x = vec![0.0; nz];
        let mut z_new = vec![0.0; nz];
        let mut gc = vec![0.0; ne];
        let mut w = vec![0.0; ne];
        let mut y = vec![0.0; m];

        let mut status = SolveStatus::MaxIters;
        let mut primal_res = f64::INFINITY;
        let mut dual_res = f64::INFINITY;
        let mut gap = f64::INFINITY;
        let mut iterations = 0;
        let mut u_half = 0.0;
        let mut next_adapt = ADAPT_EVERY;
        let mut changes = 0u32;

        for it in 1..=s.max_iter {
            iterations = it;
            for k in 0..nz {
                c[k] = z[k] - u[k];
            }
            gc.fill(0.0);
            for (k, &e) in self.entry_of.iter().enumerate() {
                gc[e] += c[k];
            }
            // w temporarily holds D⁻¹ (a0 - Gc)
            for e in 0..ne {
                w[e] = self.dinv[e] * (self.a0[e] - gc[e]);
            }
            for (i, col) in self.fcols.iter().enumerate() {
                y[i] = b[i] / rho + col.iter().map(|&(e, f)| f * w[e]).sum::<f64>();
            }
            self.chol.solve_in_place(&mut y);
            // w = D⁻¹ (F y + G c - a0)
            for e in 0..ne {
                w[e] = gc[e] - self.a0[e];
            }
            for (col, &yi) in self.fcols.iter().zip(&y) {
                for &(e, f) in col {
                    w[e] += f * yi;
                }
            }
            for (we, d) in w.iter_mut().zip(&self.dinv) {
                *we *= d;
            }
            for (k, &e) in self.entry_of.iter().enumerate() {
                v[k] = c[k] - w[e];
                x[k] = alpha * v[k] + (1.0 - alpha) * z[k] + u[k];
            }
            self.project(&x, &mut z_new)?;

            let mut r_prim = 0.0;
            let mut r_dual = 0.0;
            let (mut nv, mut nzn, mut nu) = (0.0, 0.0, 0.0);
            for k in 0..nz {
                let un = x[k] - z_new[k];
                r_prim += (v[k] - z_new[k]).powi(2);
                r_dual += (z_new[k] - z[k]).powi(2);
                nv += v[k] * v[k];
                nzn += z_new[k] * z_new[k];
                nu += un * un;
                u[k] = un;
            }
            std::mem::swap(&mut z, &mut z_new);
            if it == s.max_iter / 2 {
                u_half = rho * nu.sqrt();
            }
            if it % s.check_every != 0 && it != s.max_iter {
                continue;
            }
            primal_res = r_prim.sqrt() / 1f64.max(nv.sqrt()).max(nzn.sqrt());
            dual_res = rho * r_dual.sqrt() / 1f64.max(rho * nu.sqrt());
            let dobj: f64 = b.iter().zip(&y).map(|(bi, yi)| bi * yi).sum();
            let pobj: f64 = rho * self.a0.iter().zip(&w).map(|(a, wi)| a * wi).sum::<f64>();
            gap = (pobj - dobj).abs() / 1f64.max(pobj.abs()).max(dobj.abs());
            if primal_res <= s.tol && dual_res <= s.tol && gap <= s.tol {
                status = SolveStatus::Solved;
                break;
            }
            if s.adaptive_rho && it >= next_adapt {
                next_adapt = it + ADAPT_EVERY;
                let next = if primal_res > ADAPT_RATIO * dual_res {
                    rho * ADAPT_STEP
                } else if dual_res > ADAPT_RATIO * primal_res {
                    rho / ADAPT_STEP
                } else {
                    rho
                }
                .clamp(RHO_MIN, RHO_MAX);
                if next != rho {
                    changes += 1;
                    next_adapt = it + (ADAPT_EVERY << changes.min(20));
                    // keep the unscaled multiplier ρu fixed
                    let f = rho / next;
                    u.iter_mut().for_each(|v| *v *= f);
                    rho = next;
                }
            }
        }
        if status != SolveStatus::Solved {
            let u_final = rho * u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if s.max_iter >= 2 && u_final >= 1.5 * u_half && u_final > 0.0 {
                status = SolveStatus::InfeasibleSuspected;
            }
        }

        let y = DVector::from_vec(y);
        let dual_objective = self.problem.dual_objective(&y);
        let primal_objective = rho * self.a0.iter().zip(&w).map(|(a, wi)| a * wi).sum::<f64>();
        let cone_vars = self
            .cones
            .iter()
            .map(|cone| {
                let mut zk = unpack(cone.dim(), &z[cone.offset..cone.offset + cone.svec_len()]);
                for (a, &ra) in cone.rows.iter().enumerate() {
                    for (b, &rb) in cone.rows.iter().enumerate() {
                        zk[(a, b)] /= self.scale[ra] * self.scale[rb];
                    }
                }
                zk
            })
            .collect();
        Ok(SolveResult {
            status,
            objective: match self.problem.sense {
                Sense::Dual => dual_objective,
                Sense::Primal => primal_objective,
            },
            y,
            cone_rows: self.cones.iter().map(|c| c.rows.clone()).collect(),
            cone_vars,
            primal_objective,
            dual_objective,
            primal_residual: primal_res,
            dual_residual: dual_res,
            gap,
            iterations,
            rho,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

/// Ruiz-style equilibration of the lifted rows under congruence.
fn row_scaling(p: &SdpProblem) -> Vec<f64> {
    let n = p.dim();
    let mut s = vec![1.0; n];
    for _ in 0..10 {
        let mut norm = vec![0.0f64; n];
        for ai in &p.a {
            for &(r, c, v) in ai.entries() {
                let x = (v * s[r] * s[c]).abs();
                norm[r] = norm[r].max(x);
                norm[c] = norm[c].max(x);
            }
        }
        for r in 0..n {
            if norm[r] > 0.0 {
                s[r] /= norm[r].sqrt();
            }
        }
    }
    s
}

fn unpack(d: usize, zs: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for c in 0..d {
        for r in 0..=c {
            let v = zs[svec_index(r, c)];
            let v = if r == c { v } else { v / SQRT2 };
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    m
}

/// Projects one svec block onto the PSD cone.
fn project_svec(d: usize, xs: &[f64], zs: &mut [f64]) -> Result<()> {
    if d == 1 {
        zs[0] = xs[0].max(0.0);
        return Ok(());
    }
    // row-major upper triangle, as eig_in_place expects
    let mut w = vec![0.0; d * d];
    for c in 0..d {
        for r in 0..=c {
            let v = xs[svec_index(r, c)];
            w[r * d + c] = if r == c { v } else { v / SQRT2 };
        }
    }
    let mut lam = vec![0.0; d];
    let mut e = vec![0.0; d];
    eig_in_place(d, &mut w, &mut lam, &mut e)?;
    let neg = lam.iter().take_while(|&&l| l < 0.0).count();
    if neg == 0 {
        zs.copy_from_slice(xs);
        return Ok(());
    }
    if neg == d {
        zs.fill(0.0);
        return Ok(());
    }
    // Rebuild from whichever eigen-set is smaller, one rank-one term at a time.
    let (set, sign) = if neg <= d - neg { (0..neg, -1.0) } else { (neg..d, 1.0) };
    if sign < 0.0 {
        zs.copy_from_slice(xs);
    } else {
        zs.fill(0.0);
    }
    for k in set {
        let q = &w[k * d..(k + 1) * d];
        let lk = sign * lam[k];
        for c in 0..d {
            let f = lk * q[c];
            let col = &mut zs[svec_index(0, c)..svec_index(0, c) + c + 1];
            for (z, &qr) in col.iter_mut().zip(&q[..c]) {
                *z += SQRT2 * f * qr;
            }
            col[c] += f * q[c];
        }
    }
    Ok(())
}

/// Dense PSD projection `Q max(Λ, 0) Qᵀ`.
pub(crate) fn project_dense(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = x.nrows();
    let mut xs = vec![0.0; d * (d + 1) / 2];
    for c in 0..d {
        for r in 0..=c {
            xs[svec_index(r, c)] = if r == c { x[(r, c)] } else { SQRT2 * x[(r, c)] };
        }
    }
    let mut zs = vec![0.0; xs.len()];
    project_svec(d, &xs, &mut zs)?;
    Ok(unpack(d, &zs))
}

/// Solves with the given cones (lists of lifted-partition blocks).
pub(crate) fn solve_with_cones(
    problem: &SdpProblem,
    cone_blocks: &[Vec<usize>],
    settings: &AdmmSettings,
) -> Result<SolveResult> {
    settings.validate()?;
    let start = Instant::now();
    let rows = cone_blocks
        .iter()
        .map(|blocks| {
            let mut rows: Vec<usize> = blocks.iter().flat_map(|&b| problem.partition.range(b)).collect();
            rows.sort_unstable();
            rows
        })
        .collect();
    let engine = Engine::new(problem, rows)?;
    engine.run(settings, start)
}
