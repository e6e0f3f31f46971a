//! Dense symmetric eigensolver.
//!
//! Householder reduction to tridiagonal form followed by the implicit QL
//! iteration (the EISPACK `tred2`/`tql2` pair). The orthogonal factor is kept
//! transposed in a flat row-major buffer so that every inner loop runs over
//! contiguous memory; at the end row `k` of the buffer holds eigenvector `k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_QL_SWEEPS: usize = 60;

/// Eigen-decomposition `X = Q diag(values) Qᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors, stored as columns in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn recompose(&self) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.values);
        scaled * self.vectors.transpose()
    }
}

/// Eigenvalues and eigenvectors of the symmetric matrix `x`.
///
/// Only the lower triangle is read.
pub fn symmetric_eig(x: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "symmetric_eig expects a square matrix, got {}x{}",
            n,
            x.ncols()
        )));
    }
    // Row-major copy of the transposed lower triangle; for symmetric input
    // this is the upper triangle of x.
    let mut w = vec![0.0; n * n];
    for j in 0..n {
        for k in j..n {
            w[j * n + k] = x[(k, j)];
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    eig_in_place(n, &mut w, &mut d, &mut e)?;
    let values = DVector::from_vec(d);
    // w rows are eigenvectors; nalgebra is column-major, so w is exactly Q.
    let vectors = DMatrix::from_vec(n, n, w);
    Ok(SymmetricEigen { values, vectors })
}

/// Core routine on a flat row-major `n*n` buffer holding the upper triangle of
/// the input. On return `d` holds the ascending eigenvalues and row `k` of `w`
/// the unit eigenvector for `d[k]`.
pub(crate) fn eig_in_place(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    debug_assert_eq!(w.len(), n * n);
    if n == 0 {
        return Ok(());
    }
    if n == 1 {
        d[0] = w[0];
        w[0] = 1.0;
        return Ok(());
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConvergenceFailure(
            "non-finite entry in symmetric eigenproblem".into(),
        ));
    }
    tridiagonalize(n, w, d, e);
    tridiagonal_ql(n, w, d, e)
}

#[allow(clippy::needless_range_loop)]
fn tridiagonalize(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    // w[b*n + a] plays the role of V[a][b] in the classical formulation.
    for j in 0..n {
        d[j] = w[j * n + n - 1];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[j * n + i - 1];
                w[j * n + i] = 0.0;
                w[i * n + j] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                w[i * n + j] = f;
                let row = &w[j * n..j * n + i];
                g = e[j] + row[j] * f;
                for k in (j + 1)..i {
                    g += row[k] * d[k];
                    e[k] += row[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let row = &mut w[j * n..j * n + i];
                for k in j..i {
                    row[k] -= f * e[k] + g * d[k];
                }
                d[j] = w[j * n + i - 1];
                w[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate the transformations.
    for i in 0..(n - 1) {
        w[i * n + n - 1] = w[i * n + i];
        w[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = w[(i + 1) * n + k] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += w[(i + 1) * n + k] * w[j * n + k];
                }
                let row = &mut w[j * n..j * n + i + 1];
                for k in 0..=i {
                    row[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            w[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = w[j * n + n - 1];
        w[j * n + n - 1] = 0.0;
    }
    w[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

fn rotate_rows(w: &mut [f64], n: usize, i: usize, c: f64, s: f64) {
    let (lo, hi) = w.split_at_mut((i + 1) * n);
    let ri = &mut lo[i * n..];
    let rj = &mut hi[..n];
    for (a, b) in ri.iter_mut().zip(rj.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

fn tridiagonal_ql(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= f64::EPSILON * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }

        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::ConvergenceFailure(format!(
                        "QL iteration did not converge for eigenvalue {l} of {n}"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_rows(w, n, i, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= f64::EPSILON * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Selection sort, ascending; swaps whole eigenvector rows.
    for i in 0..(n - 1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            let (lo, hi) = w.split_at_mut(k * n);
            lo[i * n..(i + 1) * n].swap_with_slice(&mut hi[..n]);
        }
    }
    Ok(())
}
