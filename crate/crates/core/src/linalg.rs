//! Small dense complex-matrix helpers shared by the oracles, the simulator
//! and the multiplicative-weights solver. Everything is plain `nalgebra`
//! with a few conveniences for Hermitian matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Kronecker product, `a` as the most significant factor.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// the matching unitary of column eigenvectors.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let se = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[a]
            .partial_cmp(&se.eigenvalues[b])
            .expect("Hermitian eigenvalues are finite")
    });
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let dim = m.nrows();
    let mut vecs = CMatrix::zeros(dim, dim);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let (vals, _) = hermitian_eigen(m);
    vals[0]
}

/// `exp(m)` for Hermitian `m`, via eigendecomposition. A uniform shift is
/// applied internally so the result never overflows for the normalized
/// Gibbs-state use (callers renormalize anyway).
pub fn hermitian_exp_normalized(m: &CMatrix) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let shift = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dim = m.nrows();
    let mut out = CMatrix::zeros(dim, dim);
    let mut total = 0.0;
    let weights: Vec<f64> = vals.iter().map(|v| (v - shift).exp()).collect();
    for w in &weights {
        total += w;
    }
    for (k, w) in weights.iter().enumerate() {
        let col = vecs.column(k);
        let scale = Complex64::new(w / total, 0.0);
        for r in 0..dim {
            for c in 0..dim {
                out[(r, c)] += col[r] * col[c].conj() * scale;
            }
        }
    }
    out
}

/// Unitary time evolution `exp(i t m)` for Hermitian `m`.
pub fn hermitian_evolution(m: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let dim = m.nrows();
    let mut out = CMatrix::zeros(dim, dim);
    for (k, v) in vals.iter().enumerate() {
        let col = vecs.column(k);
        let ph = Complex64::new(0.0, t * v).exp();
        for r in 0..dim {
            for c in 0..dim {
                out[(r, c)] += col[r] * col[c].conj() * ph;
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hermitian_fixture() -> CMatrix {
        let i = Complex64::new(0.0, 1.0);
        let o = Complex64::new(1.0, 0.0);
        CMatrix::from_row_slice(2, 2, &[o * 2.0, o * 0.5 + i * 0.25, o * 0.5 - i * 0.25, -o])
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let m = hermitian_fixture();
        let (vals, vecs) = hermitian_eigen(&m);
        let mut rec = CMatrix::zeros(2, 2);
        for (k, v) in vals.iter().enumerate() {
            let col = vecs.column(k);
            for r in 0..2 {
                for c in 0..2 {
                    rec[(r, c)] += col[r] * col[c].conj() * Complex64::new(*v, 0.0);
                }
            }
        }
        assert!(max_abs_diff(&m, &rec) < 1e-12);
        assert!(vals[0] <= vals[1]);
    }

    #[test]
    fn exp_normalized_is_a_state() {
        let m = hermitian_fixture();
        let g = hermitian_exp_normalized(&m);
        let tr = trace(&g);
        assert!((tr.re - 1.0).abs() < 1e-12 && tr.im.abs() < 1e-14);
        let (vals, _) = hermitian_eigen(&g);
        assert!(vals.iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn evolution_is_unitary() {
        let m = hermitian_fixture();
        let u = hermitian_evolution(&m, 0.37);
        let prod = &u * u.adjoint();
        assert!(max_abs_diff(&prod, &CMatrix::identity(2, 2)) < 1e-12);
    }
}
