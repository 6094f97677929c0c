//! Small dense helpers for the per-node matrix work.

use nalgebra::{DMatrix, SymmetricEigen};

/// Inverse of a row-major `dim x dim` matrix by LU with partial pivoting.
pub fn inverse(mat: &[f64], dim: usize) -> Option<Vec<f64>> {
    match dim {
        1 => (mat[0] != 0.0).then(|| vec![1.0 / mat[0]]),
        _ => {
            let m = DMatrix::from_row_slice(dim, dim, mat);
            let inv = m.lu().try_inverse()?;
            let mut out = vec![0.0; dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    out[i * dim + j] = inv[(i, j)];
                }
            }
            Some(out)
        }
    }
}

pub fn determinant(mat: &[f64], dim: usize) -> f64 {
    match dim {
        1 => mat[0],
        2 => mat[0] * mat[3] - mat[1] * mat[2],
        _ => DMatrix::from_row_slice(dim, dim, mat).determinant(),
    }
}

pub fn min_symmetric_eigenvalue(mat: &[f64], dim: usize) -> f64 {
    if dim == 1 {
        return mat[0];
    }
    let m = DMatrix::from_row_slice(dim, dim, mat);
    SymmetricEigen::new(m).eigenvalues.min()
}

/// `f(M)` for symmetric `M`, applied through the eigendecomposition.
pub fn symmetric_function(mat: &[f64], dim: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let m = DMatrix::from_row_slice(dim, dim, mat);
    let eig = SymmetricEigen::new(m);
    let q = &eig.eigenvectors;
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let mut acc = 0.0;
            for k in 0..dim {
                acc += q[(i, k)] * f(eig.eigenvalues[k]) * q[(j, k)];
            }
            out[i * dim + j] = acc;
            out[j * dim + i] = acc;
        }
    }
    out
}

pub fn matmul(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

pub fn trace(a: &[f64], dim: usize) -> f64 {
    (0..dim).map(|i| a[i * dim + i]).sum()
}

/// Largest absolute entry.
pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_roundtrip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = inverse(&a, 3).unwrap();
        let id = matmul(&a, &inv, 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(id[i * 3 + j], (i == j) as u8 as f64, epsilon = 1e-14);
            }
        }
        assert!(inverse(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }

    #[test]
    fn symmetric_exp_of_diagonal() {
        let e = symmetric_function(&[1.0, 0.0, 0.0, -2.0], 2, f64::exp);
        assert_relative_eq!(e[0], 1f64.exp(), epsilon = 1e-14);
        assert_relative_eq!(e[3], (-2f64).exp(), epsilon = 1e-14);
        assert_eq!(e[1], 0.0);
    }
}
