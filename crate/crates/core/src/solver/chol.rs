//! Envelope (skyline) Cholesky factorization for symmetric positive definite
//! matrices whose nonzeros sit close to the diagonal.

use crate::error::{Error, Result};

/// Lower-triangular factor stored row by row: row `i` holds columns
/// `first[i]..=i` contiguously.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors the matrix given by its lower-triangle entries `(i, j, v)`,
    /// `j <= i`. Repeated entries are summed.
    pub fn factor(n: usize, lower: &[(usize, usize, f64)]) -> Result<Self> {
        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j, _) in lower {
            if j > i || i >= n {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({i}, {j}) is not in the lower triangle of a {n}x{n} matrix"
                )));
            }
            first[i] = first[i].min(j);
        }
        let mut f = EnvelopeCholesky::zeros(first);
        for &(i, j, v) in lower {
            f.add(i, j, v);
        }
        f.factor_in_place()?;
        Ok(f)
    }

    /// Zero matrix whose row `i` spans columns `first[i]..=i`; fill with
    /// [`add`](Self::add), then call [`factor_assembled`](Self::factor_assembled).
    pub(crate) fn zeros(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            debug_assert!(f <= i);
            start.push(acc);
            acc += i - f + 1;
        }
        start.push(acc);
        EnvelopeCholesky {
            first,
            start,
            data: vec![0.0; acc],
        }
    }

    /// Adds `v` to lower-triangle entry `(i, j)`, which must lie in the envelope.
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && j >= self.first[i]);
        self.data[self.start[i] + j - self.first[i]] += v;
    }

    pub(crate) fn factor_assembled(mut self) -> Result<Self> {
        self.factor_in_place()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.start[i]..self.start[i + 1]]
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                let (before, rest) = self.data.split_at_mut(self.start[i]);
                let row_i = &mut rest[..i - fi + 1];
                let row_j: &[f64] = if j == i {
                    &row_i[..0]
                } else {
                    &before[self.start[j]..self.start[j + 1]]
                };
                if j < i {
                    let dot: f64 = row_i[lo - fi..j - fi]
                        .iter()
                        .zip(&row_j[lo - fj..j - fj])
                        .map(|(a, b)| a * b)
                        .sum();
                    let ljj = row_j[j - fj];
                    row_i[j - fi] = (row_i[j - fi] - dot) / ljj;
                } else {
                    let sq: f64 = row_i[..i - fi].iter().map(|a| a * a).sum();
                    let d = row_i[i - fi] - sq;
                    if !d.is_finite() || d <= 0.0 {
                        return Err(Error::NumericalBreakdown(format!(
                            "affine system is not positive definite (pivot {i} = {d:e})"
                        )));
                    }
                    row_i[i - fi] = d.sqrt();
                }
            }
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        for i in 0..n {
            let fi = self.first[i];
            let row = self.row(i);
            let dot: f64 = row[..i - fi].iter().zip(&x[fi..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            x[i] /= row[i - fi];
            let xi = x[i];
            for (xk, a) in x[fi..i].iter_mut().zip(&row[..i - fi]) {
                *xk -= a * xi;
            }
        }
    }
}
