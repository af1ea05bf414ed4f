//! Independent verification oracles for the test suites.
//!
//! Everything here deliberately avoids the SVD / Cholesky pipeline used by
//! the implementation: square roots come from symmetric eigendecompositions
//! and the smallest positive singular value from a restricted inverse
//! power iteration. Compiled only for tests (`test-oracles` feature).

use nalgebra::{DMatrix, DVector};

/// Inverse symmetric square root from an eigendecomposition.
pub fn eigen_inv_sqrt(g: &DMatrix<f64>) -> DMatrix<f64> {
    let se = g.clone().symmetric_eigen();
    let n = g.nrows();
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        assert!(se.eigenvalues[i] > 0.0, "Gram matrix must be SPD");
        d[(i, i)] = 1.0 / se.eigenvalues[i].sqrt();
    }
    &se.eigenvectors * d * se.eigenvectors.transpose()
}

/// Symmetric square root from an eigendecomposition.
pub fn eigen_sqrt(g: &DMatrix<f64>) -> DMatrix<f64> {
    let se = g.clone().symmetric_eigen();
    let n = g.nrows();
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        assert!(se.eigenvalues[i] >= 0.0);
        d[(i, i)] = se.eigenvalues[i].sqrt();
    }
    &se.eigenvectors * d * se.eigenvectors.transpose()
}

/// gamma_B oracle: the square root of the second-smallest eigenvalue of
/// `E^(-1/2) B^T D^(-1) B E^(-1/2)`, everything via symmetric
/// eigendecompositions.
pub fn gamma_b_eigen_oracle(
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
    e: &DMatrix<f64>,
) -> f64 {
    let se = d.clone().symmetric_eigen();
    let n = d.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        assert!(se.eigenvalues[i] > 0.0, "D must be SPD");
        inv[(i, i)] = 1.0 / se.eigenvalues[i];
    }
    let d_inv = &se.eigenvectors * inv * se.eigenvectors.transpose();
    let e_inv_sqrt = eigen_inv_sqrt(e);
    let s = &e_inv_sqrt * b.transpose() * d_inv * b * &e_inv_sqrt;
    let mut eig: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig[1].max(0.0).sqrt()
}

/// Smallest positive singular value of `M~ = G^(-1/2) M G^(-1/2)` by a
/// normalized inverse power iteration on `M~^T M~` restricted to the
/// complement of the known one-dimensional kernel.
///
/// `kernel_raw` is the kernel of M in the original coordinates (constant
/// pressure); the kernel of M~ is then `G^(1/2) kernel_raw`.
pub fn gamma_a_power_oracle(
    m: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    kernel_raw: &DVector<f64>,
) -> f64 {
    let g_inv_sqrt = eigen_inv_sqrt(gram);
    let g_sqrt = eigen_sqrt(gram);
    let m_tilde = &g_inv_sqrt * m * &g_inv_sqrt;
    let s = m_tilde.transpose() * &m_tilde;
    let z = (&g_sqrt * kernel_raw).normalize();
    let n = s.nrows();

    // crude power iteration for the top of the spectrum
    let mut v = DVector::from_element(n, 1.0).normalize();
    let mut lam_max = 0.0;
    for _ in 0..200 {
        v = (&s * &v).normalize();
        lam_max = (v.transpose() * &s * &v)[(0, 0)];
    }
    let shift = 1.5 * lam_max.max(1e-30);

    // inverse iteration on S + shift z z^T (SPD, kernel moved to +shift)
    let shifted = &s + &z * z.transpose() * shift;
    let chol = shifted.cholesky().expect("shifted operator is SPD");
    let mut v = DVector::from_fn(n, |i, _| ((i * 37 + 11) % 101) as f64 / 101.0 - 0.5);
    v -= &z * (z.dot(&v));
    v = v.normalize();
    let mut lam = f64::INFINITY;
    for _ in 0..1000 {
        let mut w = chol.solve(&v);
        w -= &z * (z.dot(&w));
        let wn = w.normalize_mut();
        assert!(wn > 0.0, "iteration collapsed onto the kernel");
        let new_lam = (w.transpose() * &s * &w)[(0, 0)];
        let done = (new_lam - lam).abs() <= 1e-13 * new_lam.abs().max(1e-30);
        v = w;
        lam = new_lam;
        if done {
            break;
        }
    }
    lam.max(0.0).sqrt()
}

/// Orthonormal basis of the complement of `m` (Householder reflector
/// columns); the null-space parametrization of the zero-mean constraint.
pub fn mean_null_basis(m: &DVector<f64>) -> DMatrix<f64> {
    let n = m.len();
    let w = m.normalize();
    let sign = if w[n - 1] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = w.clone();
    v[n - 1] += sign;
    let vnorm2 = v.norm_squared();
    let mut h = DMatrix::<f64>::identity(n, n);
    h -= &v * v.transpose() * (2.0 / vnorm2);
    h.columns(0, n - 1).into_owned()
}

/// Direct dense solve of the explicitly constrained mixed system: the
/// zero-mean constraint is eliminated with [`mean_null_basis`], the
/// reduced saddle-point matrix is LU-factored, and the pressure lifted
/// back. Returns (u, p) with p in the full space and zero mean.
pub fn constrained_dense_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    mean: &DVector<f64>,
    rhs_u: &DVector<f64>,
    rhs_p: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let m = a.nrows();
    let n = b.ncols();
    let z = mean_null_basis(mean);
    let bz = b * &z;
    let czz = z.transpose() * c * &z;
    let dim = m + n - 1;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    k.view_mut((0, 0), (m, m)).copy_from(a);
    k.view_mut((0, m), (m, n - 1)).copy_from(&bz);
    k.view_mut((m, 0), (n - 1, m)).copy_from(&(-bz.transpose()));
    k.view_mut((m, m), (n - 1, n - 1)).copy_from(&czz);
    let mut rhs = DVector::<f64>::zeros(dim);
    rhs.rows_mut(0, m).copy_from(rhs_u);
    rhs.rows_mut(m, n - 1).copy_from(&(z.transpose() * rhs_p));
    let sol = k.lu().solve(&rhs).expect("constrained system is nonsingular");
    let u = sol.rows(0, m).into_owned();
    let p = &z * sol.rows(m, n - 1).into_owned();
    (u, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_basis_is_orthonormal_and_annihilates_mean() {
        let m = DVector::from_column_slice(&[0.25, 0.5, 0.125, 0.125]);
        let z = mean_null_basis(&m);
        assert_eq!(z.shape(), (4, 3));
        let ztz = z.transpose() * &z;
        assert!((ztz - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        let mz = m.transpose() * &z;
        assert!(mz.abs().max() < 1e-12);
    }

    #[test]
    fn power_oracle_on_known_spectrum() {
        // M diagonal with singular values {3, 2, 0.5, 0}; gram = I;
        // kernel = e4; smallest positive = 0.5
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, 2.0, 0.5, 0.0]));
        let gram = DMatrix::identity(4, 4);
        let kernel = DVector::from_column_slice(&[0.0, 0.0, 0.0, 1.0]);
        let got = gamma_a_power_oracle(&m, &gram, &kernel);
        assert!((got - 0.5).abs() < 1e-10, "{got}");
    }
}
