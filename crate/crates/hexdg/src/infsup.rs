//! Discrete inf-sup constants via SVD.
//!
//! gamma_B is the smallest positive singular value of
//! `B~ = L_D^-1 B L_E^-T`; gamma_a (at nu = 1/2) the smallest positive
//! singular value of `M~ = L^-1 M L^-T` with the DG-norm Gram
//! blockdiag(D, E). Cholesky factors stand in for the symmetric square
//! roots; singular values are unchanged and the substitution is
//! oracle-tested. "Smallest positive" is operationalized as the
//! second-smallest singular value after asserting that exactly one
//! singular value sits at zero (the constant-pressure kernel).

use crate::assembly::{assemble_all, assemble_b, assemble_norm_matrices, DGConfig};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::mesh::{build_patch_mesh, extract_faces, GeometricMesh, PatchKind};
use crate::solver::{cholesky_factor, congruence_with_factor, dense_svd, CongruenceSide, SvdResult};
use crate::spaces::build_dofmap;
use nalgebra::DMatrix;

/// Separation thresholds for the one-dimensional kernel.
const KERNEL_RATIO: f64 = 1e-10;
const SEPARATION_RATIO: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfSupKind {
    GammaB,
    GammaA,
}

impl std::fmt::Display for InfSupKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InfSupKind::GammaB => "gammaB",
            InfSupKind::GammaA => "gammaA",
        })
    }
}

impl std::str::FromStr for InfSupKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gammab" | "gamma-b" | "gamma_b" | "b" => Ok(InfSupKind::GammaB),
            "gammaa" | "gamma-a" | "gamma_a" | "a" => Ok(InfSupKind::GammaA),
            other => Err(Error::Config(format!("unknown inf-sup kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct InfSupConfig {
    pub sigma: f64,
    pub theta: f64,
    pub gamma: f64,
    pub dense_cap: usize,
    /// study caps keeping the dense SVD tractable
    pub gamma_b_max_k: usize,
    pub gamma_b_max_levels: usize,
    pub gamma_a_max_k: usize,
    pub gamma_a_max_levels: usize,
}

impl Default for InfSupConfig {
    fn default() -> Self {
        InfSupConfig {
            sigma: 0.5,
            theta: 1.0,
            gamma: 10.0,
            dense_cap: 6000,
            gamma_b_max_k: 4,
            gamma_b_max_levels: 5,
            gamma_a_max_k: 3,
            gamma_a_max_levels: 3,
        }
    }
}

impl InfSupConfig {
    fn dg_config(&self, k: usize) -> DGConfig {
        DGConfig {
            theta: self.theta,
            gamma: self.gamma,
            nu: 0.5,
            k,
            quad_form: None,
            quad_overkill: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InfSupResult {
    pub kind: InfSupKind,
    pub patch: PatchKind,
    pub sigma: f64,
    pub k: usize,
    pub levels: usize,
    pub m: usize,
    pub n: usize,
    /// smallest positive singular value
    pub value: f64,
    /// the kernel singular value, ~0
    pub kernel_sigma: f64,
    pub sigma_max: f64,
    pub seconds: f64,
}

fn check_kernel(sigma: &[f64], value_idx: usize) -> Result<(f64, f64, f64)> {
    let smax = sigma[0];
    let kernel = *sigma.last().unwrap();
    let value = sigma[value_idx];
    if !(kernel <= KERNEL_RATIO * smax && value > SEPARATION_RATIO * smax) {
        return Err(Error::KernelDimension {
            kernel_ratio: kernel / smax,
            separation_ratio: value / smax,
        });
    }
    Ok((value, kernel, smax))
}

/// gamma_B from dense blocks: SVD of `L_D^-1 B L_E^-T`.
pub fn gamma_b_from_dense(
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
    e: &DMatrix<f64>,
    cap: usize,
) -> Result<(f64, f64, f64)> {
    let n = b.ncols();
    if n < 2 {
        return Err(Error::DegenerateSpace { n });
    }
    let l_d = cholesky_factor(d)?;
    let x = congruence_with_factor(&l_d, b, CongruenceSide::Left)?;
    drop(l_d);
    let l_e = cholesky_factor(e)?;
    let b_tilde = congruence_with_factor(&l_e, &x, CongruenceSide::Right)?;
    drop(x);
    let svd = dense_svd(&b_tilde, false, cap)?;
    check_kernel(&svd.singular_values, n - 2)
}

/// Discrete inf-sup constant of the divergence form B_h.
pub fn gamma_b(
    mesh: &GeometricMesh,
    k: usize,
    cfg: &InfSupConfig,
    mode: ExecMode,
) -> Result<InfSupResult> {
    let t0 = std::time::Instant::now();
    let dofmap = build_dofmap(mesh, k)?;
    if dofmap.m + dofmap.n > cfg.dense_cap {
        return Err(Error::DimensionCap { dim: dofmap.m + dofmap.n, cap: cfg.dense_cap });
    }
    let faces = extract_faces(mesh)?;
    let config = cfg.dg_config(k);
    let b = assemble_b(mesh, &faces, &dofmap, &config, mode)?;
    let (d, e) = assemble_norm_matrices(mesh, &faces, &dofmap, &config, mode)?;
    let (value, kernel_sigma, sigma_max) =
        gamma_b_from_dense(&b.to_dense(), &d.to_dense(), &e.to_dense(), cfg.dense_cap)?;
    Ok(InfSupResult {
        kind: InfSupKind::GammaB,
        patch: mesh.kind,
        sigma: mesh.sigma,
        k,
        levels: mesh.levels,
        m: dofmap.m,
        n: dofmap.n,
        value,
        kernel_sigma,
        sigma_max,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// The dense full form matrix `[[A, B], [-B^T, C]]` and the DG-norm Gram
/// `blockdiag(D, (2-2nu) E)`.
pub fn full_form_dense(
    blocks: &crate::assembly::SystemBlocks,
    nu: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = blocks.a.nrows;
    let n = blocks.b.ncols;
    let mut mat = DMatrix::<f64>::zeros(m + n, m + n);
    for r in 0..m {
        let (cols, vals) = blocks.a.row(r);
        for (c, v) in cols.iter().zip(vals) {
            mat[(r, *c)] += v;
        }
        let (cols, vals) = blocks.b.row(r);
        for (c, v) in cols.iter().zip(vals) {
            mat[(r, m + c)] += v;
            mat[(m + c, r)] -= v;
        }
    }
    for r in 0..n {
        let (cols, vals) = blocks.c.row(r);
        for (c, v) in cols.iter().zip(vals) {
            mat[(m + r, m + c)] += v;
        }
    }
    let mut gram = DMatrix::<f64>::zeros(m + n, m + n);
    for r in 0..m {
        let (cols, vals) = blocks.d.row(r);
        for (c, v) in cols.iter().zip(vals) {
            gram[(r, *c)] += v;
        }
    }
    let w = 2.0 - 2.0 * nu;
    for r in 0..n {
        let (cols, vals) = blocks.e.row(r);
        for (c, v) in cols.iter().zip(vals) {
            gram[(m + r, m + c)] += w * v;
        }
    }
    (mat, gram)
}

/// gamma_a pipeline returning the SVD (with vectors) and the Cholesky
/// factor of the Gram matrix, for the kernel-direction diagnostics.
pub fn gamma_a_svd(
    mesh: &GeometricMesh,
    k: usize,
    cfg: &InfSupConfig,
    mode: ExecMode,
    want_vectors: bool,
) -> Result<(InfSupResult, SvdResult, DMatrix<f64>)> {
    let t0 = std::time::Instant::now();
    let dofmap = build_dofmap(mesh, k)?;
    let total = dofmap.m + dofmap.n;
    if total > cfg.dense_cap {
        return Err(Error::DimensionCap { dim: total, cap: cfg.dense_cap });
    }
    if dofmap.n < 2 {
        return Err(Error::DegenerateSpace { n: dofmap.n });
    }
    let faces = extract_faces(mesh)?;
    let config = cfg.dg_config(k); // nu = 1/2: C = 0 and unit pressure weight
    let blocks = assemble_all(mesh, &faces, &dofmap, &config, mode)?;
    let (mat, gram) = full_form_dense(&blocks, config.nu);
    drop(blocks);
    let l = cholesky_factor(&gram)?;
    drop(gram);
    let m_tilde = congruence_with_factor(&l, &mat, CongruenceSide::Both)?;
    drop(mat);
    let svd = dense_svd(&m_tilde, want_vectors, cfg.dense_cap)?;
    let (value, kernel_sigma, sigma_max) = check_kernel(&svd.singular_values, total - 2)?;
    Ok((
        InfSupResult {
            kind: InfSupKind::GammaA,
            patch: mesh.kind,
            sigma: mesh.sigma,
            k,
            levels: mesh.levels,
            m: dofmap.m,
            n: dofmap.n,
            value,
            kernel_sigma,
            sigma_max,
            seconds: t0.elapsed().as_secs_f64(),
        },
        svd,
        l,
    ))
}

/// Discrete inf-sup constant of the full form a_h in the incompressible
/// limit nu = 1/2.
pub fn gamma_a(
    mesh: &GeometricMesh,
    k: usize,
    cfg: &InfSupConfig,
    mode: ExecMode,
) -> Result<InfSupResult> {
    Ok(gamma_a_svd(mesh, k, cfg, mode, false)?.0)
}

/// Runs the (kind, k, level) sweep. Cells beyond the study caps, beyond
/// the dense cap, or with a degenerate pressure space are skipped with a
/// note on stderr. Rows are ordered by (patch, k, level).
pub fn infsup_study(
    which: InfSupKind,
    patches: &[PatchKind],
    ks: &[usize],
    levels: &[usize],
    cfg: &InfSupConfig,
    mode: ExecMode,
) -> Result<Vec<InfSupResult>> {
    let (max_k, max_l) = match which {
        InfSupKind::GammaB => (cfg.gamma_b_max_k, cfg.gamma_b_max_levels),
        InfSupKind::GammaA => (cfg.gamma_a_max_k, cfg.gamma_a_max_levels),
    };
    let mut rows = Vec::new();
    for &patch in patches {
        for &k in ks {
            for &l in levels {
                if k > max_k || l > max_l {
                    eprintln!("note: skipping {which} {patch} k={k} l={l}: beyond study caps");
                    continue;
                }
                let mesh = build_patch_mesh(patch, cfg.sigma, l)?;
                let res = match which {
                    InfSupKind::GammaB => gamma_b(&mesh, k, cfg, mode),
                    InfSupKind::GammaA => gamma_a(&mesh, k, cfg, mode),
                };
                match res {
                    Ok(r) => rows.push(r),
                    Err(Error::DimensionCap { dim, cap }) => {
                        eprintln!(
                            "note: skipping {which} {patch} k={k} l={l}: dimension {dim} > cap {cap}"
                        );
                    }
                    Err(Error::DegenerateSpace { n }) => {
                        eprintln!(
                            "note: skipping {which} {patch} k={k} l={l}: pressure space dim {n} < 2"
                        );
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(rows)
}

/// Least-squares exponent of value ~ k^slope over the stabilized values
/// (largest level per k), grouped by (kind, patch).
#[derive(Clone, Debug)]
pub struct ExponentFit {
    pub kind: InfSupKind,
    pub patch: PatchKind,
    pub slope: f64,
    pub intercept: f64,
    /// (k, stabilized value) pairs entering the fit
    pub points: Vec<(usize, f64)>,
}

pub fn fit_exponent(rows: &[InfSupResult]) -> Vec<ExponentFit> {
    let mut groups: Vec<(InfSupKind, PatchKind)> = Vec::new();
    for r in rows {
        if !groups.contains(&(r.kind, r.patch)) {
            groups.push((r.kind, r.patch));
        }
    }
    let mut fits = Vec::new();
    for (kind, patch) in groups {
        let mut points: Vec<(usize, f64)> = Vec::new();
        let ks: Vec<usize> = {
            let mut v: Vec<usize> = rows
                .iter()
                .filter(|r| r.kind == kind && r.patch == patch)
                .map(|r| r.k)
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for k in ks {
            if let Some(r) = rows
                .iter()
                .filter(|r| r.kind == kind && r.patch == patch && r.k == k)
                .max_by_key(|r| r.levels)
            {
                points.push((k, r.value));
            }
        }
        if points.len() < 2 {
            continue;
        }
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| (p.0 as f64).ln()).sum();
        let sy: f64 = points.iter().map(|p| p.1.ln()).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 as f64).ln().powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 as f64).ln() * p.1.ln()).sum();
        let denom = n * sxx - sx * sx;
        let slope = (n * sxy - sx * sy) / denom;
        let intercept = (sy - slope * sx) / n;
        fits.push(ExponentFit { kind, patch, slope, intercept, points });
    }
    fits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

    #[test]
    fn gamma_b_single_element_matches_eigen_oracle() {
        let mesh = build_patch_mesh(PatchKind::Uniform, 0.5, 0).unwrap();
        let cfg = InfSupConfig::default();
        for k in [2usize, 3] {
            let res = gamma_b(&mesh, k, &cfg, ExecMode::default()).unwrap();
            assert!(res.value > 0.0);
            assert!(res.kernel_sigma <= 1e-10 * res.sigma_max);
            // independent eigen route
            let dofmap = build_dofmap(&mesh, k).unwrap();
            let faces = extract_faces(&mesh).unwrap();
            let config = cfg.dg_config(k);
            let b = assemble_b(&mesh, &faces, &dofmap, &config, ExecMode::default()).unwrap();
            let (d, e) =
                assemble_norm_matrices(&mesh, &faces, &dofmap, &config, ExecMode::default())
                    .unwrap();
            let oracle = oracles::gamma_b_eigen_oracle(&b.to_dense(), &d.to_dense(), &e.to_dense());
            assert!(
                (res.value - oracle).abs() <= 1e-8 * oracle,
                "k={k}: {} vs oracle {}",
                res.value,
                oracle
            );
        }
    }

    #[test]
    fn gamma_b_scale_invariance() {
        let mesh = build_patch_mesh(PatchKind::Edge, 0.5, 1).unwrap();
        let cfg = InfSupConfig::default();
        let k = 2;
        let dofmap = build_dofmap(&mesh, k).unwrap();
        let faces = extract_faces(&mesh).unwrap();
        let config = cfg.dg_config(k);
        let b = assemble_b(&mesh, &faces, &dofmap, &config, ExecMode::default())
            .unwrap()
            .to_dense();
        let (d, e) =
            assemble_norm_matrices(&mesh, &faces, &dofmap, &config, ExecMode::default()).unwrap();
        let (d, e) = (d.to_dense(), e.to_dense());
        let (v0, _, _) = gamma_b_from_dense(&b, &d, &e, cfg.dense_cap).unwrap();
        // B -> 3B scales gamma by 3
        let (v1, _, _) = gamma_b_from_dense(&(&b * 3.0), &d, &e, cfg.dense_cap).unwrap();
        assert!((v1 - 3.0 * v0).abs() <= 1e-9 * v0);
        // D -> 4D scales gamma by 1/2
        let (v2, _, _) = gamma_b_from_dense(&b, &(&d * 4.0), &e, cfg.dense_cap).unwrap();
        assert!((v2 - 0.5 * v0).abs() <= 1e-9 * v0);
    }

    #[test]
    fn gamma_b_rejects_degenerate_single_element_k1() {
        let mesh = build_patch_mesh(PatchKind::Uniform, 0.5, 0).unwrap();
        let cfg = InfSupConfig::default();
        assert!(matches!(
            gamma_b(&mesh, 1, &cfg, ExecMode::default()),
            Err(Error::DegenerateSpace { n: 1 })
        ));
    }

    #[test]
    fn gamma_a_single_element_matches_power_oracle() {
        let mesh = build_patch_mesh(PatchKind::Uniform, 0.5, 0).unwrap();
        let cfg = InfSupConfig::default();
        let k = 2;
        let (res, _, _) = gamma_a_svd(&mesh, k, &cfg, ExecMode::default(), false).unwrap();
        let dofmap = build_dofmap(&mesh, k).unwrap();
        let faces = extract_faces(&mesh).unwrap();
        let config = cfg.dg_config(k);
        let blocks = assemble_all(&mesh, &faces, &dofmap, &config, ExecMode::default()).unwrap();
        let (mat, gram) = full_form_dense(&blocks, 0.5);
        let mut kernel = nalgebra::DVector::zeros(dofmap.m + dofmap.n);
        for j in 0..dofmap.n {
            kernel[dofmap.m + j] = 1.0;
        }
        let oracle = oracles::gamma_a_power_oracle(&mat, &gram, &kernel);
        assert!(
            (res.value - oracle).abs() <= 1e-6 * oracle,
            "{} vs oracle {}",
            res.value,
            oracle
        );
    }

    #[test]
    fn gamma_a_kernel_direction_is_constant_pressure() {
        let mesh = build_patch_mesh(PatchKind::Uniform, 0.5, 0).unwrap();
        let cfg = InfSupConfig::default();
        let (res, svd, l) = gamma_a_svd(&mesh, 2, &cfg, ExecMode::default(), true).unwrap();
        let dofmap = build_dofmap(&mesh, 2).unwrap();
        let total = dofmap.m + dofmap.n;
        let vt = svd.vt.unwrap();
        let w = vt.row(total - 1).transpose();
        // velocity block of the kernel singular vector vanishes
        let vel_norm = w.rows(0, dofmap.m).norm();
        assert!(vel_norm <= 1e-8 * w.norm(), "velocity part {vel_norm}");
        // back-transformed pressure block is proportional to ones
        let q = l
            .transpose()
            .solve_upper_triangular(&w)
            .expect("factor is nonsingular")
            .rows(dofmap.m, dofmap.n)
            .into_owned();
        let qn = q.normalize();
        let ones = nalgebra::DVector::from_element(dofmap.n, 1.0).normalize();
        let cos = qn.dot(&ones).abs();
        assert!(cos > 1.0 - 1e-8, "cosine with constants {cos}");
        assert!(res.kernel_sigma <= 1e-10 * res.sigma_max);
    }

    #[test]
    fn study_rows_and_fits() {
        let cfg = InfSupConfig::default();
        let rows = infsup_study(
            InfSupKind::GammaB,
            &[PatchKind::Edge],
            &[2, 3],
            &[1, 2],
            &cfg,
            ExecMode::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.value > 0.0));
        let fits = fit_exponent(&rows);
        assert_eq!(fits.len(), 1);
        assert_eq!(fits[0].points.len(), 2);
        // stabilized values use the largest level per k
        assert!(fits[0].points.iter().all(|&(k, v)| {
            let r = rows.iter().find(|r| r.k == k && r.levels == 2).unwrap();
            (v - r.value).abs() < 1e-15
        }));
        // empty ranges give an empty report
        let empty =
            infsup_study(InfSupKind::GammaB, &[], &[2], &[1], &cfg, ExecMode::default()).unwrap();
        assert!(empty.is_empty());
    }
}
