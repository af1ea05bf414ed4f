//! Assembly of the mixed interior-penalty DG system: sparse blocks A, B, C,
//! the norm matrices D (DG velocity norm) and E (pressure mass), the
//! right-hand side with Dirichlet flux lifting, and the augmented
//! saddle-point operator with the zero-mean multiplier.
//!
//! Face terms integrate on the smallest faces. On a hanging-node face the
//! coarse owner's basis is traced on the small rectangle. Jump and average
//! signs follow the fixed convention that the sharp owner lies on the
//! negative side of the face normal axis; boundary faces use the single
//! trace and the outward normal.
//!
//! Local element and face matrices may be computed in parallel; they are
//! merged in construction order, so the result is bit-identical to the
//! sequential assembly.

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::fem::{eval_basis, gauss_rule, trace_basis, GaussRule, TensorBasis};
use crate::mesh::{FaceKind, FaceSet, GeometricMesh};
use crate::sparse::SparseBlock;
use crate::spaces::DofMap;

type Triplet = (u32, u32, f64);

/// Discretization parameters. Defaults follow the reference settings:
/// symmetric interior penalty (theta = 1) with gamma = 10.
#[derive(Clone, Copy, Debug)]
pub struct DGConfig {
    pub theta: f64,
    pub gamma: f64,
    pub nu: f64,
    pub k: usize,
    /// quadrature points per axis for form assembly; default k+1 (exact)
    pub quad_form: Option<usize>,
    /// points per axis for right-hand sides and error integrals; default k+4
    pub quad_overkill: Option<usize>,
}

impl DGConfig {
    pub fn new(k: usize, nu: f64) -> Result<Self> {
        let cfg =
            DGConfig { theta: 1.0, gamma: 10.0, nu, k, quad_form: None, quad_overkill: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 0.5) {
            return Err(Error::NuOutOfRange(self.nu));
        }
        if self.k < 1 {
            return Err(Error::DegreeTooSmall(self.k));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("penalty gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn form_points(&self) -> usize {
        self.quad_form.unwrap_or(self.k + 1)
    }

    pub fn overkill_points(&self) -> usize {
        self.quad_overkill.unwrap_or(self.k + 4)
    }

    /// Penalty c = gamma * k^2 / hperp, constant per smallest face.
    pub fn penalty(&self, hperp: f64) -> f64 {
        self.gamma * (self.k * self.k) as f64 / hperp
    }
}

/// Forcing and Dirichlet data for the right-hand side.
pub trait ProblemData: Sync {
    fn forcing(&self, x: [f64; 3]) -> [f64; 3];
    fn dirichlet(&self, x: [f64; 3]) -> [f64; 3];
}

/// The assembled blocks of one discretization.
#[derive(Clone, Debug)]
pub struct SystemBlocks {
    /// M x M velocity form A_h
    pub a: SparseBlock,
    /// M x N divergence form B_h
    pub b: SparseBlock,
    /// N x N reaction block C = (1-2nu) E
    pub c: SparseBlock,
    /// M x M Gram matrix of the DG velocity norm
    pub d: SparseBlock,
    /// N x N pressure mass matrix
    pub e: SparseBlock,
    /// integrals of the pressure basis functions
    pub mean: Vec<f64>,
    /// |Omega|
    pub volume: f64,
}

#[derive(Clone, Copy, Default)]
struct Parts {
    a: bool,
    b: bool,
    d: bool,
    e: bool,
}

#[derive(Default)]
struct LocalOut {
    a: Vec<Triplet>,
    b: Vec<Triplet>,
    d: Vec<Triplet>,
    e: Vec<Triplet>,
    mean: Vec<(usize, f64)>,
}

/// Per-side trace data on one face, flattened [basis * nq + q].
struct SideTrace {
    elem: usize,
    /// jump sign: +1 / -1 for the sharp / flat interior owner, the outward
    /// normal sign for a boundary owner
    t: f64,
    vals: Vec<f64>,
    /// raw derivative along the face normal axis (not orientation-signed)
    nder: Vec<f64>,
    pvals: Vec<f64>,
}

fn side_trace(
    mesh: &GeometricMesh,
    face: &crate::mesh::Face,
    elem: usize,
    t: f64,
    vel: &TensorBasis,
    pre: &TensorBasis,
    rule: &GaussRule,
    need_pre: bool,
) -> (SideTrace, Vec<f64>) {
    let el = &mesh.elements[elem];
    let vt = trace_basis(vel, el, face, rule).expect("face lies on owner facet");
    let nq = vt.n_points;
    let nb = vt.n_basis;
    let mut vals = vec![0.0; nb * nq];
    let mut nder = vec![0.0; nb * nq];
    for i in 0..nb {
        for q in 0..nq {
            vals[i * nq + q] = vt.value(i, q);
            nder[i * nq + q] = vt.grad(i, q)[face.axis];
        }
    }
    let pvals = if need_pre {
        let pt = trace_basis(pre, el, face, rule).expect("face lies on owner facet");
        let np = pt.n_basis;
        let mut pv = vec![0.0; np * nq];
        for j in 0..np {
            for q in 0..nq {
                pv[j * nq + q] = pt.value(j, q);
            }
        }
        pv
    } else {
        Vec::new()
    };
    (SideTrace { elem, t, vals, nder, pvals }, vt.weights)
}

fn assemble_parts(
    mesh: &GeometricMesh,
    faces: &FaceSet,
    dofmap: &DofMap,
    config: &DGConfig,
    parts: Parts,
    mode: ExecMode,
) -> Result<Vec<LocalOut>> {
    config.validate()?;
    if config.k != dofmap.k {
        return Err(Error::Config(format!(
            "dof map was built for k={}, config has k={}",
            dofmap.k, config.k
        )));
    }
    if dofmap.total() >= u32::MAX as usize {
        return Err(Error::Config("system too large for 32-bit triplet indices".into()));
    }
    for f in &faces.faces {
        if !(f.hperp > 0.0) {
            return Err(Error::ZeroPerpDiameter);
        }
    }
    let k = config.k;
    let vel = TensorBasis::new(k)?;
    let pre = TensorBasis::new(k - 1)?;
    let rule = gauss_rule(config.form_points())?;
    let theta = config.theta;

    // element-local volume contributions
    let nb = vel.n_basis();
    let np = pre.n_basis();
    let elem_out: Vec<LocalOut> = exec::map_indexed(mode, mesh.n_elements(), |e| {
        let el = &mesh.elements[e];
        let mut out = LocalOut::default();
        let vt = eval_basis(&vel, el, &rule).expect("element validated");
        let nq = vt.n_points;
        let w = &vt.weights;
        if parts.a || parts.d {
            // scalar gradient Gram, shared by all three components
            let mut gram = vec![0.0; nb * nb];
            for i in 0..nb {
                let gi = vt.grads_of(i);
                for j in 0..=i {
                    let gj = vt.grads_of(j);
                    let mut s = 0.0;
                    for q in 0..nq {
                        s += w[q] * (gi[q][0] * gj[q][0] + gi[q][1] * gj[q][1] + gi[q][2] * gj[q][2]);
                    }
                    gram[i * nb + j] = s;
                    gram[j * nb + i] = s;
                }
            }
            for c in 0..3 {
                for i in 0..nb {
                    let row = dofmap.vel_index(e, c, i) as u32;
                    for j in 0..nb {
                        let v = gram[i * nb + j];
                        let col = dofmap.vel_index(e, c, j) as u32;
                        if parts.a {
                            out.a.push((row, col, v));
                        }
                        if parts.d {
                            out.d.push((row, col, v));
                        }
                    }
                }
            }
        }
        if parts.b || parts.e {
            let pt = eval_basis(&pre, el, &rule).expect("element validated");
            if parts.b {
                // -int psi_j d_c phi_i
                for c in 0..3 {
                    for i in 0..nb {
                        let gi = vt.grads_of(i);
                        let row = dofmap.vel_index(e, c, i) as u32;
                        for j in 0..np {
                            let pj = pt.values_of(j);
                            let mut s = 0.0;
                            for q in 0..nq {
                                s += w[q] * pj[q] * gi[q][c];
                            }
                            out.b.push((row, (e * np + j) as u32, -s));
                        }
                    }
                }
            }
            if parts.e {
                for i in 0..np {
                    let pi = pt.values_of(i);
                    for j in 0..=i {
                        let pj = pt.values_of(j);
                        let mut s = 0.0;
                        for q in 0..nq {
                            s += w[q] * pi[q] * pj[q];
                        }
                        out.e.push(((e * np + i) as u32, (e * np + j) as u32, s));
                        if i != j {
                            out.e.push(((e * np + j) as u32, (e * np + i) as u32, s));
                        }
                    }
                    let mut m = 0.0;
                    for q in 0..nq {
                        m += w[q] * pi[q];
                    }
                    out.mean.push((e * np + i, m));
                }
            }
        }
        out
    });

    // face-local contributions
    let need_face = parts.a || parts.b || parts.d;
    let face_out: Vec<LocalOut> = if need_face {
        exec::map_indexed(mode, faces.faces.len(), |fi| {
            let f = &faces.faces[fi];
            let mut out = LocalOut::default();
            let c_pen = config.penalty(f.hperp);
            let mut sides = Vec::with_capacity(2);
            let weights;
            match f.kind {
                FaceKind::Interior => {
                    let (s0, w) = side_trace(mesh, f, f.sharp, 1.0, &vel, &pre, &rule, parts.b);
                    let (s1, _) =
                        side_trace(mesh, f, f.flat.unwrap(), -1.0, &vel, &pre, &rule, parts.b);
                    weights = w;
                    sides.push(s0);
                    sides.push(s1);
                }
                FaceKind::Boundary => {
                    let (s0, w) =
                        side_trace(mesh, f, f.sharp, f.normal_sign, &vel, &pre, &rule, parts.b);
                    weights = w;
                    sides.push(s0);
                }
            }
            let nq = weights.len();
            let avg = 1.0 / sides.len() as f64;
            if parts.a || parts.d {
                // per-component scalar blocks; row side = test, col side = trial
                for sb in &sides {
                    for sa in &sides {
                        let tt = sa.t * sb.t;
                        for i in 0..nb {
                            let vb = &sb.vals[i * nq..(i + 1) * nq];
                            let db = &sb.nder[i * nq..(i + 1) * nq];
                            for j in 0..nb {
                                let va = &sa.vals[j * nq..(j + 1) * nq];
                                let da = &sa.nder[j * nq..(j + 1) * nq];
                                let mut pen = 0.0;
                                let mut cons = 0.0;
                                for q in 0..nq {
                                    pen += weights[q] * va[q] * vb[q];
                                    cons += weights[q]
                                        * (theta * db[q] * sa.t * va[q] + da[q] * sb.t * vb[q]);
                                }
                                let a_val = c_pen * tt * pen - avg * cons;
                                let d_val = c_pen * tt * pen;
                                for c in 0..3 {
                                    let row = dofmap.vel_index(sb.elem, c, i) as u32;
                                    let col = dofmap.vel_index(sa.elem, c, j) as u32;
                                    if parts.a {
                                        out.a.push((row, col, a_val));
                                    }
                                    if parts.d {
                                        out.d.push((row, col, d_val));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if parts.b {
                // int <q> [[v]] over the face; only the normal component of
                // v participates
                for sb in &sides {
                    for sa in &sides {
                        for i in 0..nb {
                            let vb = &sb.vals[i * nq..(i + 1) * nq];
                            let row = dofmap.vel_index(sb.elem, f.axis, i) as u32;
                            for j in 0..np {
                                let pa = &sa.pvals[j * nq..(j + 1) * nq];
                                let mut s = 0.0;
                                for q in 0..nq {
                                    s += weights[q] * pa[q] * vb[q];
                                }
                                out.b.push((row, (sa.elem * np + j) as u32, avg * sb.t * s));
                            }
                        }
                    }
                }
            }
            out
        })
    } else {
        Vec::new()
    };

    let mut all = elem_out;
    all.extend(face_out);
    Ok(all)
}

/// Stable sort by (row, col); the parallel merge sort produces the same
/// ordering as the sequential one, so duplicate summation stays
/// bit-identical across modes.
fn sort_triplets(t: &mut [Triplet], mode: ExecMode) {
    let cmp = |a: &Triplet, b: &Triplet| a.0.cmp(&b.0).then(a.1.cmp(&b.1));
    match mode {
        ExecMode::Sequential => t.sort_by(cmp),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::slice::ParallelSliceMut;
                t.par_sort_by(cmp);
            }
            #[cfg(not(feature = "parallel"))]
            t.sort_by(cmp);
        }
    }
}

/// Merges the per-element / per-face streams in construction order and
/// builds the four blocks. Consumes the streams to keep one copy alive.
fn merge(outs: Vec<LocalOut>, dofmap: &DofMap, mode: ExecMode) -> (SystemBlocksRaw, Vec<f64>) {
    let cap = |pick: fn(&LocalOut) -> usize| -> usize { outs.iter().map(pick).sum() };
    let mut ta = Vec::with_capacity(cap(|o| o.a.len()));
    let mut tb = Vec::with_capacity(cap(|o| o.b.len()));
    let mut td = Vec::with_capacity(cap(|o| o.d.len()));
    let mut te = Vec::with_capacity(cap(|o| o.e.len()));
    let mut mean = vec![0.0; dofmap.n];
    for mut o in outs {
        ta.append(&mut o.a);
        tb.append(&mut o.b);
        td.append(&mut o.d);
        te.append(&mut o.e);
        for (j, v) in o.mean.drain(..) {
            mean[j] += v;
        }
    }
    let build = |mut t: Vec<Triplet>, nr: usize, nc: usize| {
        sort_triplets(&mut t, mode);
        SparseBlock::from_sorted_triplets_u32(nr, nc, t)
    };
    let raw = SystemBlocksRaw {
        a: build(ta, dofmap.m, dofmap.m),
        b: build(tb, dofmap.m, dofmap.n),
        d: build(td, dofmap.m, dofmap.m),
        e: build(te, dofmap.n, dofmap.n),
    };
    (raw, mean)
}

struct SystemBlocksRaw {
    a: SparseBlock,
    b: SparseBlock,
    d: SparseBlock,
    e: SparseBlock,
}

/// A_h: broken gradient plus consistency and penalty face terms.
pub fn assemble_a(
    mesh: &GeometricMesh,
    faces: &FaceSet,
    dofmap: &DofMap,
    config: &DGConfig,
    mode: ExecMode,
) -> Result<SparseBlock> {
    let outs =
        assemble_parts(mesh, faces, dofmap, config, Parts { a: true, ..Default::default() }, mode)?;
    Ok(merge(outs, dofmap, mode).0.a)
}

/// B_h: -int q div(v) plus <q>[[v]] over all faces (including boundary).
pub fn assemble_b(
    mesh: &GeometricMesh,
    faces: &FaceSet,
    dofmap: &DofMap,
    config: &DGConfig,
    mode: ExecMode,
) -> Result<SparseBlock> {
    let outs =
        assemble_parts(mesh, faces, dofmap, config, Parts { b: true, ..Default::default() }, mode)?;
    Ok(merge(outs, dofmap, mode).0.b)
}

/// C_h = (1-2nu) E, exactly zero at nu = 1/2 (pattern preserved).
pub fn assemble_c(
    mesh: &GeometricMesh,
    faces: &FaceSet,
    dofmap: &DofMap,
    config: &DGConfig,
    mode: ExecMode,
) -> Result<SparseBlock> {
    let outs =
        assemble_parts(mesh, faces, dofmap, config, Parts { e: true, ..Default::default() }, mode)?;
    Ok(merge(outs, dofmap, mode).0.e.scaled(1.0 - 2.0 * config.nu))
}

/// Gram matrices of the DG velocity norm (D) and the pressure L2 norm (E).
/// The full DG-norm Gram for a pair (v, q) is blockdiag(D, (2-2nu) E).
pub fn assemble_norm_matrices(
    mesh: &GeometricMesh,
    faces: &FaceSet,
    dofmap: &DofMap,
    config: &DGConfig,
    mode: ExecMode,
) -> Result<(SparseBlock, SparseBlock)> {
    let outs = assemble_parts(
        mesh,
        faces,
        dofmap,
        config,
        Parts { d: true, e: true, ..Default::default() },
        mode,
    )?;
    let (raw, _) = merge(outs, dofmap, mode);
    Ok((raw.d, raw.e))
}

/// All blocks in one pass over the mesh.
pub fn assemble_all(
    mesh: &GeometricMesh,
    faces: &FaceSet,
    dofmap: &DofMap,
    config: &DGConfig,
    mode: ExecMode,
) -> Result<SystemBlocks> {
    let outs = assemble_parts(
        mesh,
        faces,
        dofmap,
        config,
        Parts { a: true, b: true, d: true, e: true },
        mode,
    )?;
    let (raw, mean) = merge(outs, dofmap, mode);
    let c = raw.e.scaled(1.0 - 2.0 * config.nu);
    Ok(SystemBlocks { a: raw.a, b: raw.b, c, d: raw.d, e: raw.e, mean, volume: mesh.volume() })
}

/// Right-hand side of the augmented system, length M + N + 1.
///
/// The velocity block carries the volume forcing and the Dirichlet flux
/// lifting `int_FB (c g.v - theta g.(grad v n))`; the pressure block carries
/// `-int_FB q (g.n)` (zero for the catalog cases, whose boundary data has
/// vanishing normal component); the multiplier slot is zero.
pub fn assemble_rhs<P: ProblemData>(
    mesh: &GeometricMesh,
    faces: &FaceSet,
    dofmap: &DofMap,
    config: &DGConfig,
    data: &P,
    mode: ExecMode,
) -> Result<Vec<f64>> {
    config.validate()?;
    let k = config.k;
    let vel = TensorBasis::new(k)?;
    let pre = TensorBasis::new(k - 1)?;
    let rule = gauss_rule(config.overkill_points())?;
    let theta = config.theta;
    let nb = vel.n_basis();
    let np = pre.n_basis();

    let elem_parts: Vec<Vec<(usize, f64)>> = exec::map_indexed(mode, mesh.n_elements(), |e| {
        let vt = eval_basis(&vel, &mesh.elements[e], &rule).expect("element validated");
        let mut out = Vec::with_capacity(3 * nb);
        let fvals: Vec<[f64; 3]> = vt.points.iter().map(|&x| data.forcing(x)).collect();
        for c in 0..3 {
            for i in 0..nb {
                let vi = vt.values_of(i);
                let mut s = 0.0;
                for q in 0..vt.n_points {
                    s += vt.weights[q] * fvals[q][c] * vi[q];
                }
                out.push((dofmap.vel_index(e, c, i), s));
            }
        }
        out
    });

    let bfaces: Vec<usize> = (0..faces.faces.len())
        .filter(|&i| faces.faces[i].kind == FaceKind::Boundary)
        .collect();
    let face_parts: Vec<Vec<(usize, f64)>> = exec::map_indexed(mode, bfaces.len(), |bi| {
        let f = &faces.faces[bfaces[bi]];
        let e = f.sharp;
        let el = &mesh.elements[e];
        let c_pen = config.penalty(f.hperp);
        let vt = trace_basis(&vel, el, f, &rule).expect("face lies on owner facet");
        let pt = trace_basis(&pre, el, f, &rule).expect("face lies on owner facet");
        let nq = vt.n_points;
        let gvals: Vec<[f64; 3]> = vt.points.iter().map(|&x| data.dirichlet(x)).collect();
        let mut out = Vec::with_capacity(3 * nb + np);
        for c in 0..3 {
            for i in 0..nb {
                let mut s = 0.0;
                for q in 0..nq {
                    let nd = f.normal_sign * vt.grad(i, q)[f.axis];
                    s += vt.weights[q] * gvals[q][c] * (c_pen * vt.value(i, q) - theta * nd);
                }
                out.push((dofmap.vel_index(e, c, i), s));
            }
        }
        for j in 0..np {
            let mut s = 0.0;
            for q in 0..nq {
                let gn = f.normal_sign * gvals[q][f.axis];
                s += vt.weights[q] * pt.value(j, q) * gn;
            }
            out.push((dofmap.pre_index(e, j), -s));
        }
        out
    });

    let mut rhs = vec![0.0; dofmap.total()];
    for part in elem_parts.iter().chain(face_parts.iter()) {
        for &(idx, v) in part {
            rhs[idx] += v;
        }
    }
    Ok(rhs)
}

/// The augmented saddle-point operator
/// `[[A, B, 0], [-B^T, C, -m], [0, m^T/|Omega|, -1]]` of size M+N+1.
pub fn assemble_augmented(blocks: &SystemBlocks, _config: &DGConfig) -> SparseBlock {
    let m = blocks.a.nrows;
    let n = blocks.b.ncols;
    let total = m + n + 1;
    let mut t: Vec<(usize, usize, f64)> =
        Vec::with_capacity(blocks.a.nnz() + 2 * blocks.b.nnz() + blocks.c.nnz() + 2 * n + 2);
    for r in 0..m {
        let (cols, vals) = blocks.a.row(r);
        for (c, v) in cols.iter().zip(vals) {
            t.push((r, *c, *v));
        }
        let (cols, vals) = blocks.b.row(r);
        for (c, v) in cols.iter().zip(vals) {
            t.push((r, m + c, *v));
            t.push((m + c, r, -v));
        }
    }
    for r in 0..n {
        let (cols, vals) = blocks.c.row(r);
        for (c, v) in cols.iter().zip(vals) {
            t.push((m + r, m + c, *v));
        }
    }
    for (j, &mj) in blocks.mean.iter().enumerate() {
        t.push((m + j, total - 1, -mj));
        t.push((total - 1, m + j, mj / blocks.volume));
    }
    t.push((total - 1, total - 1, -1.0));
    SparseBlock::from_triplets(total, total, t)
}
