//! Linear algebra backends: preconditioned GMRES for the augmented system,
//! dense SVD, and Cholesky-based congruence transforms for the inf-sup
//! pipeline.
//!
//! Dense factorizations call LAPACK (system OpenBLAS). GMRES is restarted
//! and right-preconditioned, so the internal residual estimate tracks the
//! unpreconditioned residual, which is what the termination rule is
//! defined on.

use crate::error::{Error, Result};
use crate::sparse::SparseBlock;
use nalgebra::DMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precond {
    Ilu0,
    None,
}

#[derive(Clone, Debug)]
pub struct SolveConfig {
    /// absolute Euclidean tolerance on the unpreconditioned residual
    pub tol: f64,
    pub max_iters: usize,
    pub restart: usize,
    pub precond: Precond,
    /// largest dense dimension dense_svd accepts
    pub dense_cap: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { tol: 1e-12, max_iters: 6000, restart: 200, precond: Precond::Ilu0, dense_cap: 6000 }
    }
}

#[derive(Clone, Debug)]
pub struct IterationReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    /// residual estimate after each iteration
    pub residuals: Vec<f64>,
    pub preconditioner: &'static str,
}

impl IterationReport {
    /// One JSON line per iteration, for the solver log files.
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for (i, r) in self.residuals.iter().enumerate() {
            s.push_str(&format!("{{\"iteration\":{},\"residual\":{:.16e}}}\n", i + 1, r));
        }
        s
    }
}

/// ILU(0): incomplete LU on the unchanged sparsity pattern.
pub struct Ilu0 {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &SparseBlock) -> Result<Self> {
        let n = a.nrows;
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            for idx in a.row_ptr[r]..a.row_ptr[r + 1] {
                if a.col_idx[idx] == r {
                    diag[r] = idx;
                }
            }
            if diag[r] == usize::MAX {
                return Err(Error::ZeroPivot(r));
            }
        }
        let mut values = a.values.clone();
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (ri, re) = (a.row_ptr[i], a.row_ptr[i + 1]);
            for idx in ri..re {
                pos[a.col_idx[idx]] = idx;
            }
            for idx in ri..re {
                let k = a.col_idx[idx];
                if k >= i {
                    break;
                }
                let pivot = values[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::ZeroPivot(k));
                }
                let factor = values[idx] / pivot;
                values[idx] = factor;
                for jdx in diag[k] + 1..a.row_ptr[k + 1] {
                    let j = a.col_idx[jdx];
                    if pos[j] != usize::MAX {
                        values[pos[j]] -= factor * values[jdx];
                    }
                }
            }
            if values[diag[i]] == 0.0 {
                return Err(Error::ZeroPivot(i));
            }
            for idx in ri..re {
                pos[a.col_idx[idx]] = usize::MAX;
            }
        }
        Ok(Ilu0 {
            n,
            row_ptr: a.row_ptr.clone(),
            col_idx: a.col_idx.clone(),
            values,
            diag,
        })
    }

    /// Solves LU y = x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        for i in 0..self.n {
            let mut s = y[i];
            for idx in self.row_ptr[i]..self.diag[i] {
                s -= self.values[idx] * y[self.col_idx[idx]];
            }
            y[i] = s;
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for idx in self.diag[i] + 1..self.row_ptr[i + 1] {
                s -= self.values[idx] * y[self.col_idx[idx]];
            }
            y[i] = s / self.values[self.diag[i]];
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Restarted GMRES with right preconditioning. Terminates as soon as the
/// Euclidean norm of the unpreconditioned residual is <= `cfg.tol`
/// (estimated within a cycle, recomputed explicitly at every restart).
/// Non-convergence reports the best iterate in the error.
pub fn gmres_solve(
    op: &SparseBlock,
    rhs: &[f64],
    cfg: &SolveConfig,
) -> Result<(Vec<f64>, IterationReport)> {
    assert_eq!(op.nrows, op.ncols, "operator must be square");
    assert_eq!(rhs.len(), op.nrows, "rhs dimension mismatch");
    let n = op.nrows;
    let mut report = IterationReport {
        iterations: 0,
        converged: false,
        final_residual: 0.0,
        residuals: Vec::new(),
        preconditioner: "none",
    };

    let ilu = match cfg.precond {
        Precond::Ilu0 => match Ilu0::factor(op) {
            Ok(f) => {
                report.preconditioner = "ilu0";
                Some(f)
            }
            Err(_) => {
                // zero pivot (possible in the Stokes limit); run unpreconditioned
                report.preconditioner = "none (ilu0 zero pivot)";
                None
            }
        },
        Precond::None => None,
    };
    let precond = |x: &[f64], y: &mut [f64]| match &ilu {
        Some(f) => f.apply(x, y),
        None => y.copy_from_slice(x),
    };

    let mut x = vec![0.0; n];
    let bnorm = norm2(rhs);
    if bnorm <= cfg.tol {
        report.converged = true;
        report.final_residual = bnorm;
        return Ok((x, report));
    }

    let m = cfg.restart.max(1);
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![0.0f64; m]; m + 1];
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![0.0f64; m];
    let mut g = vec![0.0f64; m + 1];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    while report.iterations < cfg.max_iters {
        let mut r = vec![0.0; n];
        op.matvec(&x, &mut r);
        for i in 0..n {
            r[i] = rhs[i] - r[i];
        }
        let beta = norm2(&r);
        report.final_residual = beta;
        if beta <= cfg.tol {
            report.converged = true;
            return Ok((x, report));
        }
        v.clear();
        for row in h.iter_mut() {
            row.fill(0.0);
        }
        g.fill(0.0);
        g[0] = beta;
        for ri in r.iter_mut() {
            *ri /= beta;
        }
        v.push(r);

        let mut j_used = 0;
        for j in 0..m {
            if report.iterations >= cfg.max_iters {
                break;
            }
            precond(&v[j], &mut z);
            op.matvec(&z, &mut w);
            // modified Gram-Schmidt
            for (i, vi) in v.iter().enumerate() {
                let hij: f64 = w.iter().zip(vi).map(|(a, b)| a * b).sum();
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm2(&w);
            h[j + 1][j] = hn;
            let happy = hn <= 1e-14 * beta;
            if !happy {
                v.push(w.iter().map(|&t| t / hn).collect());
            }
            // apply accumulated Givens rotations to the new column
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = h[j][j] / denom;
                sn[j] = h[j + 1][j] / denom;
            }
            h[j][j] = cs[j] * h[j][j] + sn[j] * h[j + 1][j];
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            report.iterations += 1;
            j_used = j + 1;
            let est = g[j + 1].abs();
            report.residuals.push(est);
            if est <= cfg.tol || happy {
                break;
            }
        }

        // back-substitute y and update x += M^-1 (V y)
        if j_used > 0 {
            let mut y = vec![0.0; j_used];
            for i in (0..j_used).rev() {
                let mut s = g[i];
                for l in i + 1..j_used {
                    s -= h[i][l] * y[l];
                }
                y[i] = s / h[i][i];
            }
            let mut u = vec![0.0; n];
            for (l, yl) in y.iter().enumerate() {
                for (uk, vk) in u.iter_mut().zip(&v[l]) {
                    *uk += yl * vk;
                }
            }
            precond(&u, &mut z);
            for i in 0..n {
                x[i] += z[i];
            }
        }
    }

    // explicit final residual
    let mut r = vec![0.0; n];
    op.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let res = norm2(&r);
    report.final_residual = res;
    if res <= cfg.tol {
        report.converged = true;
        return Ok((x, report));
    }
    Err(Error::NoConvergence { iterations: report.iterations, residual: res, best: x })
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// descending
    pub singular_values: Vec<f64>,
    pub u: Option<DMatrix<f64>>,
    pub vt: Option<DMatrix<f64>>,
}

/// Dense SVD via LAPACK dgesdd (divide-and-conquer bidiagonalization).
/// Rejects matrices larger than `cap` in either dimension.
pub fn dense_svd(m: &DMatrix<f64>, want_vectors: bool, cap: usize) -> Result<SvdResult> {
    let (nr, nc) = m.shape();
    if nr.max(nc) > cap {
        return Err(Error::DimensionCap { dim: nr.max(nc), cap });
    }
    if nr == 0 || nc == 0 {
        return Ok(SvdResult { singular_values: Vec::new(), u: None, vt: None });
    }
    let mn = nr.min(nc);
    let mut a = m.as_slice().to_vec();
    let mut s = vec![0.0f64; mn];
    let jobz = if want_vectors { b'S' } else { b'N' };
    let (mut u, ldu) = if want_vectors { (vec![0.0f64; nr * mn], nr) } else { (vec![0.0], 1) };
    let (mut vt, ldvt) = if want_vectors { (vec![0.0f64; mn * nc], mn) } else { (vec![0.0], 1) };
    let mut iwork = vec![0i32; 8 * mn];
    let mut info = 0i32;
    let mut work = vec![0.0f64; 1];
    unsafe {
        lapack::dgesdd(
            jobz,
            nr as i32,
            nc as i32,
            &mut a,
            nr as i32,
            &mut s,
            &mut u,
            ldu as i32,
            &mut vt,
            ldvt as i32,
            &mut work,
            -1,
            &mut iwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::LapackFailure { routine: "dgesdd", info });
    }
    let lwork = work[0] as usize;
    let mut work = vec![0.0f64; lwork];
    unsafe {
        lapack::dgesdd(
            jobz,
            nr as i32,
            nc as i32,
            &mut a,
            nr as i32,
            &mut s,
            &mut u,
            ldu as i32,
            &mut vt,
            ldvt as i32,
            &mut work,
            lwork as i32,
            &mut iwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::LapackFailure { routine: "dgesdd", info });
    }
    Ok(SvdResult {
        singular_values: s,
        u: want_vectors.then(|| DMatrix::from_column_slice(nr, mn, &u)),
        vt: want_vectors.then(|| DMatrix::from_column_slice(mn, nc, &vt)),
    })
}

/// Lower Cholesky factor of an SPD matrix via dpotrf.
pub fn cholesky_factor(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    assert_eq!(n, g.ncols(), "Gram matrix must be square");
    let mut a = g.as_slice().to_vec();
    let mut info = 0i32;
    unsafe {
        lapack::dpotrf(b'L', n as i32, &mut a, n as i32, &mut info);
    }
    if info > 0 {
        return Err(Error::NotSpd);
    }
    if info < 0 {
        return Err(Error::LapackFailure { routine: "dpotrf", info });
    }
    let mut l = DMatrix::from_column_slice(n, n, &a);
    for j in 1..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Ok(l)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CongruenceSide {
    Left,
    Right,
    Both,
}

fn tri_solve_lower(l: &DMatrix<f64>, b: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let nrhs = b.ncols();
    let mut bb = b;
    let mut info = 0i32;
    unsafe {
        lapack::dtrtrs(
            b'L',
            b'N',
            b'N',
            n as i32,
            nrhs as i32,
            l.as_slice(),
            n as i32,
            bb.as_mut_slice(),
            n as i32,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::LapackFailure { routine: "dtrtrs", info });
    }
    Ok(bb)
}

/// Congruence transform with the Cholesky factor of an SPD Gram matrix G:
/// `Left -> L^-1 X`, `Right -> X L^-T`, `Both -> L^-1 X L^-T`.
///
/// Replacing the symmetric square root G^(-1/2) by L^-1 preserves all
/// singular values (L = G^(1/2) Q for an orthogonal Q), which is what the
/// inf-sup pipeline relies on; the invariant is oracle-tested.
pub fn cholesky_congruence(
    g: &DMatrix<f64>,
    x: &DMatrix<f64>,
    side: CongruenceSide,
) -> Result<DMatrix<f64>> {
    let l = cholesky_factor(g)?;
    congruence_with_factor(&l, x, side)
}

/// Same as [`cholesky_congruence`] but with a precomputed lower factor.
pub fn congruence_with_factor(
    l: &DMatrix<f64>,
    x: &DMatrix<f64>,
    side: CongruenceSide,
) -> Result<DMatrix<f64>> {
    match side {
        CongruenceSide::Left => {
            assert_eq!(l.nrows(), x.nrows());
            tri_solve_lower(l, x.clone())
        }
        CongruenceSide::Right => {
            // X L^-T = (L^-1 X^T)^T
            assert_eq!(l.nrows(), x.ncols());
            Ok(tri_solve_lower(l, x.transpose())?.transpose())
        }
        CongruenceSide::Both => {
            let y = tri_solve_lower(l, x.clone())?;
            Ok(tri_solve_lower(l, y.transpose())?.transpose())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};

    fn identity_csr(n: usize) -> SparseBlock {
        SparseBlock::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    #[test]
    fn gmres_identity_one_iteration() {
        let op = identity_csr(5);
        let rhs = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        let (x, rep) = gmres_solve(&op, &rhs, &SolveConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 1);
        for (a, b) in x.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_diagonal() {
        let n = 50;
        let op =
            SparseBlock::from_triplets(n, n, (0..n).map(|i| (i, i, (i + 1) as f64)).collect());
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, rep) = gmres_solve(&op, &rhs, &SolveConfig::default()).unwrap();
        assert!(rep.converged);
        for i in 0..n {
            assert!((x[i] - rhs[i] / (i + 1) as f64).abs() < 1e-12);
        }
        let mut r = vec![0.0; n];
        op.matvec(&x, &mut r);
        let res = norm2(&r.iter().zip(&rhs).map(|(a, b)| b - a).collect::<Vec<_>>());
        assert!(res <= 1e-12);
    }

    #[test]
    fn gmres_zero_rhs_returns_zero() {
        let op = identity_csr(4);
        let (x, rep) = gmres_solve(&op, &[0.0; 4], &SolveConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gmres_nonconvergence_reports_best_iterate() {
        let op = identity_csr(6);
        let cfg = SolveConfig { max_iters: 0, ..Default::default() };
        match gmres_solve(&op, &[1.0; 6], &cfg) {
            Err(Error::NoConvergence { best, residual, .. }) => {
                assert_eq!(best.len(), 6);
                assert!(residual > 0.0);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn gmres_with_ilu_matches_dense_lu() {
        let n = 60;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.gen_range(0.0..1.0)));
            if i + 1 < n {
                t.push((i, i + 1, rng.gen_range(-1.0..1.0)));
                t.push((i + 1, i, rng.gen_range(-1.0..1.0)));
            }
            if i + 7 < n {
                t.push((i, i + 7, rng.gen_range(-0.5..0.5)));
            }
        }
        let op = SparseBlock::from_triplets(n, n, t);
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, rep) = gmres_solve(&op, &rhs, &SolveConfig::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.preconditioner, "ilu0");
        let dense = op.to_dense();
        let lu = dense.lu();
        let xd = lu.solve(&DVector::from_column_slice(&rhs)).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn gmres_restart_cycles_converge() {
        // a short restart length forces several outer cycles
        let n = 80;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0 + 0.1 * rng.gen_range(-1.0..1.0)));
                t.push((i + 1, i, -1.0));
            }
        }
        let op = SparseBlock::from_triplets(n, n, t);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let cfg = SolveConfig { restart: 5, precond: Precond::None, ..Default::default() };
        let (x, rep) = gmres_solve(&op, &rhs, &cfg).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations > 5, "restart path not exercised");
        let mut r = vec![0.0; n];
        op.matvec(&x, &mut r);
        let res = norm2(&r.iter().zip(&rhs).map(|(a, b)| b - a).collect::<Vec<_>>());
        assert!(res <= cfg.tol, "explicit residual {res:.3e}");
    }

    #[test]
    fn ilu_zero_pivot_falls_back() {
        // leading zero diagonal that no update can fill
        let op = SparseBlock::from_triplets(
            2,
            2,
            vec![(0, 0, 0.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0)],
        );
        let (x, rep) = gmres_solve(&op, &[1.0, 2.0], &SolveConfig::default()).unwrap();
        assert!(rep.preconditioner.starts_with("none"));
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_identity_and_rank_one() {
        let id = DMatrix::<f64>::identity(3, 3);
        let svd = dense_svd(&id, false, 6000).unwrap();
        for s in &svd.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
        let u = DVector::from_column_slice(&[1.0, 2.0, -2.0]);
        let v = DVector::from_column_slice(&[3.0, 0.0, 4.0, 0.0]);
        let m = &u * v.transpose();
        let svd = dense_svd(&m, false, 6000).unwrap();
        assert!((svd.singular_values[0] - u.norm() * v.norm()).abs() < 1e-12);
        for s in &svd.singular_values[1..] {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn svd_matches_symmetric_eigen_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let m = DMatrix::<f64>::from_fn(20, 12, |_, _| rng.gen_range(-1.0..1.0));
        let svd = dense_svd(&m, true, 6000).unwrap();
        // oracle: eigenvalues of M^T M
        let mtm = m.transpose() * &m;
        let mut eig: Vec<f64> =
            mtm.symmetric_eigen().eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (s, e) in svd.singular_values.iter().zip(&eig) {
            assert!((s - e).abs() <= 1e-10 * eig[0]);
        }
        // descending order, reconstruction, orthogonality
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let u = svd.u.as_ref().unwrap();
        let vt = svd.vt.as_ref().unwrap();
        let sig = DMatrix::from_diagonal(&DVector::from_column_slice(&svd.singular_values));
        let recon = u * sig * vt;
        let err = (&recon - &m).abs().max();
        assert!(err <= 1e-10 * svd.singular_values[0]);
        let utu = (u.transpose() * u - DMatrix::identity(12, 12)).abs().max();
        let vtv = (vt * vt.transpose() - DMatrix::identity(12, 12)).abs().max();
        assert!(utu < 1e-10 && vtv < 1e-10);
    }

    #[test]
    fn svd_dimension_cap() {
        let m = DMatrix::<f64>::zeros(11, 3);
        assert!(matches!(dense_svd(&m, false, 10), Err(Error::DimensionCap { dim: 11, cap: 10 })));
    }

    #[test]
    fn congruence_identity_and_scaling() {
        let x = DMatrix::<f64>::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = DMatrix::<f64>::identity(3, 3);
        let y = cholesky_congruence(&g, &x, CongruenceSide::Left).unwrap();
        assert!((&y - &x).abs().max() < 1e-14);
        let g4 = DMatrix::<f64>::identity(3, 3) * 4.0;
        let y = cholesky_congruence(&g4, &x, CongruenceSide::Left).unwrap();
        assert!((&y - &x.scale(0.5)).abs().max() < 1e-14);
    }

    #[test]
    fn congruence_preserves_singular_values_vs_sqrt_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let n = 18;
        let r = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let g = &r * r.transpose() + DMatrix::identity(n, n) * (n as f64);
        let x = DMatrix::<f64>::from_fn(n, 10, |_, _| rng.gen_range(-1.0..1.0));
        let y = cholesky_congruence(&g, &x, CongruenceSide::Left).unwrap();
        // oracle: symmetric inverse square root from an eigendecomposition
        let se = g.clone().symmetric_eigen();
        let mut d = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = 1.0 / se.eigenvalues[i].sqrt();
        }
        let ginvsqrt = &se.eigenvectors * d * se.eigenvectors.transpose();
        let yref = ginvsqrt * &x;
        let mut s1 = dense_svd(&y, false, 6000).unwrap().singular_values;
        let mut s2 = dense_svd(&yref, false, 6000).unwrap().singular_values;
        s1.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s2.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in s1.iter().zip(&s2) {
            assert!((a - b).abs() <= 1e-10 * s2[0]);
        }
        // right side: X L^-T has the same singular values as X G^-1/2
        let xr = DMatrix::<f64>::from_fn(7, n, |_, _| rng.gen_range(-1.0..1.0));
        let yr = cholesky_congruence(&g, &xr, CongruenceSide::Right).unwrap();
        let yr_ref = &xr * ginvsqrt_copy(&g);
        let s1 = dense_svd(&yr, false, 6000).unwrap().singular_values;
        let s2 = dense_svd(&yr_ref, false, 6000).unwrap().singular_values;
        for (a, b) in s1.iter().zip(&s2) {
            assert!((a - b).abs() <= 1e-10 * s2[0]);
        }
    }

    fn ginvsqrt_copy(g: &DMatrix<f64>) -> DMatrix<f64> {
        let se = g.clone().symmetric_eigen();
        let n = g.nrows();
        let mut d = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = 1.0 / se.eigenvalues[i].sqrt();
        }
        &se.eigenvectors * d * se.eigenvectors.transpose()
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let g = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_factor(&g), Err(Error::NotSpd)));
    }
}
