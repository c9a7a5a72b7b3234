//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance on |R_jj| used to declare a column linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Thin QR least squares. Returns coefficients and the inverse of the
/// triangular factor, from which `(X'X)^-1 = R^-1 R^-T` follows.
pub(crate) fn qr_solve(x: &Matrix, y: &Vector) -> Result<(Vector, Matrix)> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::InsufficientData(format!(
            "least squares needs n >= p, got n={n}, p={p}"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0_f64, f64::max);
    let dependent: Vec<usize> = (0..p)
        .filter(|&j| !(r[(j, j)].abs() > RANK_TOL * scale.max(f64::MIN_POSITIVE)))
        .collect();
    if !dependent.is_empty() || scale == 0.0 {
        return Err(Error::RankDeficient {
            columns: if dependent.is_empty() {
                (0..p).collect()
            } else {
                dependent
            },
        });
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&Matrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("triangular inverse failed".into()))?;
    Ok((beta, r_inv))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divisor n).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Select rows `rows` of `m` into a new matrix.
pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn row_range(m: &Matrix, start: usize, end: usize) -> Matrix {
    m.rows(start, end - start).into_owned()
}

/// Horizontally concatenate two matrices with equal row counts.
pub fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.nrows(), b.nrows(), "hstack row mismatch");
    let mut out = Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solve_detects_duplicate_column() {
        let x = Matrix::from_row_slice(4, 3, &[1., 1., 2., 1., 2., 4., 1., 3., 6., 1., 4., 8.]);
        let y = Vector::from_vec(vec![1., 2., 3., 4.]);
        match qr_solve(&x, &y) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec![2]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn hstack_places_blocks() {
        let a = Matrix::from_element(2, 1, 1.0);
        let b = Matrix::from_element(2, 2, 2.0);
        let c = hstack(&a, &b);
        assert_eq!(c.shape(), (2, 3));
        assert_eq!(c[(1, 0)], 1.0);
        assert_eq!(c[(1, 2)], 2.0);
    }
}
