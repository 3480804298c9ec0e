//! Small dense linear algebra for pointwise tensor work (dim 3 or 4).
//!
//! Values are fixed-size arrays padded to [`MAX_DIM`]; every routine takes
//! the active dimension and ignores the padding.

pub const MAX_DIM: usize = 4;

pub type Vector = [f64; MAX_DIM];
pub type Matrix = [[f64; MAX_DIM]; MAX_DIM];
pub type Tensor3 = [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM];
pub type Tensor4 = [[[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM]; MAX_DIM];

pub fn zero_vector() -> Vector {
    [0.0; MAX_DIM]
}

pub fn zero_matrix() -> Matrix {
    [[0.0; MAX_DIM]; MAX_DIM]
}

pub fn zero_tensor3() -> Tensor3 {
    [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM]
}

pub fn zero_tensor4() -> Tensor4 {
    [[[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM]; MAX_DIM]
}

pub fn determinant(m: &Matrix, dim: usize) -> f64 {
    match dim {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        4 => {
            let mut det = 0.0;
            for j in 0..4 {
                let mut minor = [[0.0; MAX_DIM]; MAX_DIM];
                for (mr, r) in (1..4).enumerate() {
                    let mut mc = 0;
                    for c in 0..4 {
                        if c == j {
                            continue;
                        }
                        minor[mr][mc] = m[r][c];
                        mc += 1;
                    }
                }
                let cof = determinant(&minor, 3);
                det += if j % 2 == 0 { 1.0 } else { -1.0 } * m[0][j] * cof;
            }
            det
        }
        _ => panic!("unsupported dimension {}", dim),
    }
}

/// Gauss-Jordan inverse with partial pivoting. Returns `None` when a pivot
/// falls below `pivot_tol`.
pub fn invert(m: &Matrix, dim: usize, pivot_tol: f64) -> Option<Matrix> {
    let mut a = *m;
    let mut inv = zero_matrix();
    for (i, row) in inv.iter_mut().enumerate().take(dim) {
        row[i] = 1.0;
    }
    for col in 0..dim {
        let mut pivot = col;
        for r in col + 1..dim {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        if a[pivot][col].abs() <= pivot_tol {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let inv_p = 1.0 / a[col][col];
        for c in 0..dim {
            a[col][c] *= inv_p;
            inv[col][c] *= inv_p;
        }
        for r in 0..dim {
            if r == col {
                continue;
            }
            let f = a[r][col];
            if f == 0.0 {
                continue;
            }
            for c in 0..dim {
                a[r][c] -= f * a[col][c];
                inv[r][c] -= f * inv[col][c];
            }
        }
    }
    Some(inv)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(m: &Matrix, dim: usize) -> Vector {
    let mut a = *m;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..dim {
            for j in i + 1..dim {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig = zero_vector();
    for i in 0..dim {
        eig[i] = a[i][i];
    }
    eig
}

/// Counts of (negative, positive) eigenvalues; near-zero eigenvalues count
/// to neither side.
pub fn signature(m: &Matrix, dim: usize, tol: f64) -> (usize, usize) {
    let eig = symmetric_eigenvalues(m, dim);
    let mut neg = 0;
    let mut pos = 0;
    for &e in eig.iter().take(dim) {
        if e < -tol {
            neg += 1;
        } else if e > tol {
            pos += 1;
        }
    }
    (neg, pos)
}

pub fn dot(g: &Matrix, u: &[f64], v: &[f64], dim: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            acc += g[i][j] * u[i] * v[j];
        }
    }
    acc
}

pub fn coord_norm_sq(v: &[f64], dim: usize) -> f64 {
    v.iter().take(dim).map(|x| x * x).sum()
}

pub fn mat_vec(m: &Matrix, v: &[f64], dim: usize) -> Vector {
    let mut out = zero_vector();
    for (i, row) in m.iter().enumerate().take(dim) {
        let mut acc = 0.0;
        for j in 0..dim {
            acc += row[j] * v[j];
        }
        out[i] = acc;
    }
    out
}
