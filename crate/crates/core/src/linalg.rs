//! Dense symmetric matrices and a rank-revealing pivoted Cholesky
//! factorization suitable for degenerate covariances.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// Symmetry tolerance accepted by [`validate_psd`] and the factorization.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative pivot tolerance for the PSD verdict.
pub const PSD_TOL: f64 = 1e-8;
/// Relative pivot below which a direction is treated as degenerate when
/// factoring for sampling.
pub const TRUNCATION_TOL: f64 = 1e-10;

/// Row-major dense square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        SymMatrix { dim, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::validation(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(SymMatrix { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Plain-text form: first line the dimension, then one row per line.
    pub fn read_text(reader: impl BufRead) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut lines = reader.lines();
        let dim = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    let t = line.trim();
                    if t.is_empty() || t.starts_with('#') {
                        continue;
                    }
                    break t.parse::<usize>().map_err(|e| Error::Parse {
                        position: 0,
                        message: format!("matrix dimension {t:?}: {e}"),
                    })?;
                }
                None => return Err(Error::validation("empty matrix file")),
            }
        };
        for line in lines {
            let line = line?;
            for tok in line.split_whitespace() {
                let v = tok.parse::<f64>().map_err(|e| Error::Parse {
                    position: tokens.len(),
                    message: format!("matrix entry {tok:?}: {e}"),
                })?;
                tokens.push(v);
            }
        }
        if tokens.len() != dim * dim {
            return Err(Error::validation(format!(
                "matrix of dimension {dim} needs {} entries, found {}",
                dim * dim,
                tokens.len()
            )));
        }
        Ok(SymMatrix { dim, data: tokens })
    }

    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Lower factor `L` (dim × rank, rows in original order) with `L Lᵀ ≈ C`.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    dim: usize,
    rank: usize,
    // column-major: column k holds L[.., k]
    columns: Vec<f64>,
    pivots: Vec<f64>,
}

/// Outcome of the pivoted elimination, including the Schur complement left
/// over on the indices that were never pivoted.
struct Elimination {
    factor: CholeskyFactor,
    residual_min_diag: f64,
    residual_max_offdiag: f64,
}

fn eliminate(c: &SymMatrix, stop_tol: f64) -> Elimination {
    let n = c.dim;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag: Vec<f64> = (0..n).map(|i| c.get(i, i)).collect();
    let mut columns: Vec<f64> = Vec::new();
    let mut pivots = Vec::new();
    let mut k = 0;
    while k < n {
        let (j, &dmax) = perm[k..]
            .iter()
            .map(|&r| &diag[r])
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (i, d)| if *d > *acc.1 { (i, d) } else { acc });
        if dmax <= stop_tol {
            break;
        }
        perm.swap(k, k + j);
        let p = perm[k];
        let lpp = dmax.sqrt();
        let mut col = vec![0.0; n];
        col[p] = lpp;
        for &r in &perm[k + 1..] {
            let mut s = c.get(r, p);
            for m in 0..k {
                s -= columns[m * n + r] * columns[m * n + p];
            }
            let lrk = s / lpp;
            col[r] = lrk;
            diag[r] -= lrk * lrk;
        }
        columns.extend(col);
        pivots.push(dmax);
        k += 1;
    }
    let rank = k;
    let rest = &perm[rank..];
    let mut residual_min_diag = f64::INFINITY;
    let mut residual_max_offdiag = 0.0f64;
    for (a, &r) in rest.iter().enumerate() {
        residual_min_diag = residual_min_diag.min(diag[r]);
        for &s in &rest[a + 1..] {
            let mut v = c.get(r, s);
            for m in 0..rank {
                v -= columns[m * n + r] * columns[m * n + s];
            }
            residual_max_offdiag = residual_max_offdiag.max(v.abs());
        }
    }
    Elimination {
        factor: CholeskyFactor {
            dim: n,
            rank,
            columns,
            pivots,
        },
        residual_min_diag,
        residual_max_offdiag,
    }
}

impl CholeskyFactor {
    /// Factors a PSD (possibly singular) matrix, truncating pivots below
    /// `TRUNCATION_TOL · max diag`. Indefinite input beyond `PSD_TOL` is
    /// rejected.
    pub fn factor(c: &SymMatrix) -> Result<Self> {
        if c.asymmetry() > SYMMETRY_TOL {
            return Err(Error::validation(format!(
                "covariance matrix is not symmetric (max asymmetry {:e})",
                c.asymmetry()
            )));
        }
        let scale = c.max_diagonal();
        if scale <= 0.0 {
            return Err(Error::validation("covariance has no positive diagonal entry"));
        }
        let e = eliminate(c, TRUNCATION_TOL * scale);
        let tol = PSD_TOL * scale;
        if e.residual_min_diag < -tol || e.residual_max_offdiag > tol {
            return Err(Error::validation(format!(
                "covariance matrix is indefinite (residual diagonal {:e}, off-diagonal {:e})",
                e.residual_min_diag, e.residual_max_offdiag
            )));
        }
        Ok(e.factor)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.columns[col * self.dim + row]
    }

    /// Dense `L Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_fn(self.dim, |i, j| {
            (0..self.rank).map(|k| self.entry(i, k) * self.entry(j, k)).sum()
        })
    }

    /// Returns `L g` for `rank` fresh standard normals `g`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for k in 0..self.rank {
            let g: f64 = rng.sample(StandardNormal);
            let col = &self.columns[k * self.dim..(k + 1) * self.dim];
            for (o, l) in out.iter_mut().zip(col) {
                *o += l * g;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsdReport {
    /// Smallest pivot when full rank (an upper bound on the smallest
    /// eigenvalue), 0 for a PSD rank-deficient matrix, negative otherwise.
    pub min_eigenvalue_estimate: f64,
    pub psd: bool,
    pub rank: usize,
}

/// PSD verdict via pivoted elimination with tolerance `PSD_TOL · max diag`.
pub fn validate_psd(c: &SymMatrix) -> Result<PsdReport> {
    if c.asymmetry() > SYMMETRY_TOL {
        return Err(Error::validation(format!(
            "matrix is not symmetric (max asymmetry {:e})",
            c.asymmetry()
        )));
    }
    if c.dim == 0 {
        return Err(Error::validation("empty matrix"));
    }
    let scale = c.max_diagonal().max(f64::MIN_POSITIVE);
    let tol = PSD_TOL * scale;
    let e = eliminate(c, tol);
    let rank = e.factor.rank;
    let psd = e.residual_min_diag >= -tol && e.residual_max_offdiag <= tol;
    let min_eigenvalue_estimate = if rank == c.dim {
        e.factor.pivots.iter().copied().fold(f64::INFINITY, f64::min)
    } else if psd {
        0.0
    } else {
        e.residual_min_diag.min(-e.residual_max_offdiag)
    };
    Ok(PsdReport {
        min_eigenvalue_estimate,
        psd,
        rank,
    })
}
