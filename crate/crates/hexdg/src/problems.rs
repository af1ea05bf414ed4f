//! Manufactured-solution catalog, analytic forcing with a finite-difference
//! verification oracle, DG-norm error evaluation, reference-solution
//! comparison, and the convergence study driver.
//!
//! The singular cases place the edge at x = y = 0 and the corner at the
//! origin of the unit cube, with pressures defined through
//! p = -div(u)/(1-2nu); they are therefore restricted to nu < 1/2. The
//! smooth divergence-free case has p = 0 and works up to the Stokes limit.

use crate::assembly::{
    assemble_all, assemble_augmented, assemble_rhs, DGConfig, ProblemData, SystemBlocks,
};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::fem::{eval_basis, gauss_rule, trace_basis, TensorBasis};
use crate::mesh::{extract_faces, FaceKind, FaceSet, GeometricMesh, PatchKind};
use crate::solver::{gmres_solve, IterationReport, SolveConfig};
use crate::spaces::{build_dofmap, DofMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseId {
    EdgeSing,
    CornerSing,
    CornerEdgeSing,
    SmoothDivFree,
    PolyExact,
    CircularForce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingularSet {
    None,
    /// the edge x = y = 0
    EdgeZ,
    /// the corner at the origin
    Origin,
    /// edge and corner combined; the closure is the edge line
    CornerEdgeZ,
}

impl SingularSet {
    pub fn distance(&self, x: [f64; 3]) -> f64 {
        match self {
            SingularSet::None => f64::INFINITY,
            SingularSet::EdgeZ | SingularSet::CornerEdgeZ => (x[0] * x[0] + x[1] * x[1]).sqrt(),
            SingularSet::Origin => (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt(),
        }
    }
}

/// A manufactured solution record.
#[derive(Clone, Copy, Debug)]
pub struct ExactCase {
    pub id: CaseId,
    pub name: &'static str,
    pub singular_set: SingularSet,
    pub has_exact: bool,
}

fn phi(z: f64) -> f64 {
    z * (1.0 - z)
}
fn dphi(z: f64) -> f64 {
    1.0 - 2.0 * z
}

/// (u3, grad u3, div u, grad div u, lap u3) for u = (0, 0, u3).
type ScalarFields = (f64, [f64; 3], f64, [f64; 3], f64);

/// u3 = (x^2+y^2)^(1/4) z(1-z)
fn edge_sing_fields(x: [f64; 3]) -> ScalarFields {
    let (xx, yy, z) = (x[0], x[1], x[2]);
    let r2 = xx * xx + yy * yy;
    let s = r2.powf(0.25);
    let r34 = r2.powf(0.75);
    let (f, df) = (phi(z), dphi(z));
    let u3 = s * f;
    let grad = [xx * f / (2.0 * r34), yy * f / (2.0 * r34), s * df];
    let div = s * df;
    let grad_div = [xx * df / (2.0 * r34), yy * df / (2.0 * r34), -2.0 * s];
    let lap = 0.25 * f / r34 - 2.0 * s;
    (u3, grad, div, grad_div, lap)
}

/// u3 = (x^2+y^2+z^2)^(1/6) z(1-z)
fn corner_sing_fields(x: [f64; 3]) -> ScalarFields {
    let (xx, yy, z) = (x[0], x[1], x[2]);
    let p2 = xx * xx + yy * yy + z * z;
    let w = p2.powf(1.0 / 6.0);
    let p56 = p2.powf(5.0 / 6.0);
    let p116 = p2.powf(11.0 / 6.0);
    let (f, df) = (phi(z), dphi(z));
    let u3 = w * f;
    let grad = [xx * f / (3.0 * p56), yy * f / (3.0 * p56), z * f / (3.0 * p56) + w * df];
    let div = z * f / (3.0 * p56) + w * df;
    let grad_div = [
        -5.0 * xx * z * f / (9.0 * p116) + xx * df / (3.0 * p56),
        -5.0 * yy * z * f / (9.0 * p116) + yy * df / (3.0 * p56),
        f / (3.0 * p56) - 5.0 * z * z * f / (9.0 * p116) + 2.0 * z * df / (3.0 * p56) - 2.0 * w,
    ];
    let lap = 4.0 * f / (9.0 * p56) + 2.0 * z * df / (3.0 * p56) - 2.0 * w;
    (u3, grad, div, grad_div, lap)
}

/// u3 = (x^2+y^2+z^2)^(1/6) (x^2+y^2)^(1/4) z(1-z)
fn corner_edge_fields(x: [f64; 3]) -> ScalarFields {
    let (xx, yy, z) = (x[0], x[1], x[2]);
    let r2 = xx * xx + yy * yy;
    let p2 = r2 + z * z;
    let s = r2.powf(0.25);
    let r34 = r2.powf(0.75);
    let w = p2.powf(1.0 / 6.0);
    let p56 = p2.powf(5.0 / 6.0);
    let p116 = p2.powf(11.0 / 6.0);
    let (f, df) = (phi(z), dphi(z));
    let ws = w * s;
    let u3 = ws * f;
    // d/dxi (w s) = xi s / (3 p^(5/6)) + w xi / (2 r^(3/2)) for xi in {x, y}
    let dws = |c: f64| c * s / (3.0 * p56) + w * c / (2.0 * r34);
    let grad = [dws(xx) * f, dws(yy) * f, z * s * f / (3.0 * p56) + ws * df];
    let div = z * s * f / (3.0 * p56) + ws * df;
    // d/dxi (s p^(-5/6)) = xi p^(-5/6) / (2 r^(3/2)) - (5 xi s / 3) p^(-11/6)
    let dsp = |c: f64| c / (2.0 * r34 * p56) - 5.0 * c * s / (3.0 * p116);
    let grad_div = [
        z * dsp(xx) * f / 3.0 + dws(xx) * df,
        z * dsp(yy) * f / 3.0 + dws(yy) * df,
        s * f / (3.0 * p56) - 5.0 * s * z * z * f / (9.0 * p116)
            + 2.0 * z * s * df / (3.0 * p56)
            - 2.0 * ws,
    ];
    let lap = (7.0 * s / (9.0 * p56) + w / (4.0 * r34)) * f + 2.0 * z * s * df / (3.0 * p56)
        - 2.0 * ws;
    (u3, grad, div, grad_div, lap)
}

const PI: f64 = std::f64::consts::PI;

fn smooth_u(x: [f64; 3]) -> [f64; 3] {
    let (sx, sy, sz) = ((PI * x[0]).sin(), (PI * x[1]).sin(), (PI * x[2]).sin());
    let (s2x, s2y, s2z) =
        ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin(), (2.0 * PI * x[2]).sin());
    [
        0.25 * sx * sx * s2y * s2z,
        0.25 * sy * sy * s2x * s2z,
        -0.5 * sz * sz * s2x * s2y,
    ]
}

fn smooth_grad(x: [f64; 3]) -> [[f64; 3]; 3] {
    let (sx, sy, sz) = ((PI * x[0]).sin(), (PI * x[1]).sin(), (PI * x[2]).sin());
    let (s2x, s2y, s2z) =
        ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin(), (2.0 * PI * x[2]).sin());
    let (c2x, c2y, c2z) =
        ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos(), (2.0 * PI * x[2]).cos());
    [
        [
            0.25 * PI * s2x * s2y * s2z,
            0.5 * PI * sx * sx * c2y * s2z,
            0.5 * PI * sx * sx * s2y * c2z,
        ],
        [
            0.5 * PI * sy * sy * c2x * s2z,
            0.25 * PI * s2y * s2x * s2z,
            0.5 * PI * sy * sy * s2x * c2z,
        ],
        [
            -PI * sz * sz * c2x * s2y,
            -PI * sz * sz * s2x * c2y,
            -0.5 * PI * s2z * s2x * s2y,
        ],
    ]
}

fn smooth_lap(x: [f64; 3]) -> [f64; 3] {
    let u = smooth_u(x);
    let (s2x, s2y, s2z) =
        ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin(), (2.0 * PI * x[2]).sin());
    let (c2x, c2y, c2z) =
        ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos(), (2.0 * PI * x[2]).cos());
    let pp = PI * PI;
    [
        0.5 * pp * c2x * s2y * s2z - 8.0 * pp * u[0],
        0.5 * pp * c2y * s2x * s2z - 8.0 * pp * u[1],
        -pp * c2z * s2x * s2y - 8.0 * pp * u[2],
    ]
}

impl ExactCase {
    pub fn u(&self, x: [f64; 3]) -> [f64; 3] {
        match self.id {
            CaseId::EdgeSing => [0.0, 0.0, edge_sing_fields(x).0],
            CaseId::CornerSing => [0.0, 0.0, corner_sing_fields(x).0],
            CaseId::CornerEdgeSing => [0.0, 0.0, corner_edge_fields(x).0],
            CaseId::SmoothDivFree => smooth_u(x),
            CaseId::PolyExact => [x[0] * x[0] - x[0], 0.0, 0.0],
            CaseId::CircularForce => panic!("circular-force has no exact solution"),
        }
    }

    /// (grad u)_ij = d_j u_i
    pub fn grad_u(&self, x: [f64; 3]) -> [[f64; 3]; 3] {
        let z3 = [0.0; 3];
        match self.id {
            CaseId::EdgeSing => [z3, z3, edge_sing_fields(x).1],
            CaseId::CornerSing => [z3, z3, corner_sing_fields(x).1],
            CaseId::CornerEdgeSing => [z3, z3, corner_edge_fields(x).1],
            CaseId::SmoothDivFree => smooth_grad(x),
            CaseId::PolyExact => [[2.0 * x[0] - 1.0, 0.0, 0.0], z3, z3],
            CaseId::CircularForce => panic!("circular-force has no exact solution"),
        }
    }

    /// Pressure from the constitutive relation p = -div(u) / (1-2nu);
    /// identically zero for the divergence-free case.
    pub fn p(&self, x: [f64; 3], nu: f64) -> f64 {
        match self.id {
            CaseId::EdgeSing => -edge_sing_fields(x).2 / (1.0 - 2.0 * nu),
            CaseId::CornerSing => -corner_sing_fields(x).2 / (1.0 - 2.0 * nu),
            CaseId::CornerEdgeSing => -corner_edge_fields(x).2 / (1.0 - 2.0 * nu),
            CaseId::SmoothDivFree => 0.0,
            CaseId::PolyExact => -(2.0 * x[0] - 1.0) / (1.0 - 2.0 * nu),
            CaseId::CircularForce => panic!("circular-force has no exact solution"),
        }
    }

    /// Closed-form f = -lap(u) + grad(p).
    pub fn forcing(&self, x: [f64; 3], nu: f64) -> [f64; 3] {
        let scale = |gd: [f64; 3], lap: f64| {
            let c = -1.0 / (1.0 - 2.0 * nu);
            [c * gd[0], c * gd[1], -lap + c * gd[2]]
        };
        match self.id {
            CaseId::EdgeSing => {
                let (_, _, _, gd, lap) = edge_sing_fields(x);
                scale(gd, lap)
            }
            CaseId::CornerSing => {
                let (_, _, _, gd, lap) = corner_sing_fields(x);
                scale(gd, lap)
            }
            CaseId::CornerEdgeSing => {
                let (_, _, _, gd, lap) = corner_edge_fields(x);
                scale(gd, lap)
            }
            CaseId::SmoothDivFree => {
                let l = smooth_lap(x);
                [-l[0], -l[1], -l[2]]
            }
            CaseId::PolyExact => [-2.0 - 2.0 / (1.0 - 2.0 * nu), 0.0, 0.0],
            CaseId::CircularForce => [-x[1] - 0.5, x[0] - 0.5, x[0] - 0.5],
        }
    }

    /// Dirichlet data: the exact boundary trace, or zero where none exists.
    pub fn dirichlet(&self, x: [f64; 3]) -> [f64; 3] {
        if self.has_exact {
            self.u(x)
        } else {
            [0.0; 3]
        }
    }

    /// Singular cases (and the polynomial case) define p through
    /// 1/(1-2nu) and exclude the incompressible limit.
    pub fn allows_nu(&self, nu: f64) -> bool {
        let nu_ok = nu > 0.0 && nu <= 0.5;
        match self.id {
            CaseId::SmoothDivFree | CaseId::CircularForce => nu_ok,
            _ => nu_ok && nu < 0.5,
        }
    }

    /// Patch family matching the case's singular support.
    pub fn patch_kind(&self) -> PatchKind {
        match self.singular_set {
            SingularSet::EdgeZ => PatchKind::Edge,
            SingularSet::Origin => PatchKind::Corner,
            SingularSet::CornerEdgeZ => PatchKind::CornerEdge,
            SingularSet::None => PatchKind::Uniform,
        }
    }

    /// Root r of the dof count for the exponential fit exp(-b N^(1/r)).
    pub fn fit_root(&self) -> u32 {
        match self.singular_set {
            SingularSet::CornerEdgeZ => 5,
            SingularSet::EdgeZ | SingularSet::Origin => 4,
            SingularSet::None => 3,
        }
    }
}

pub fn catalog() -> Vec<ExactCase> {
    vec![
        ExactCase {
            id: CaseId::EdgeSing,
            name: "edge-sing",
            singular_set: SingularSet::EdgeZ,
            has_exact: true,
        },
        ExactCase {
            id: CaseId::CornerSing,
            name: "corner-sing",
            singular_set: SingularSet::Origin,
            has_exact: true,
        },
        ExactCase {
            id: CaseId::CornerEdgeSing,
            name: "corner-edge-sing",
            singular_set: SingularSet::CornerEdgeZ,
            has_exact: true,
        },
        ExactCase {
            id: CaseId::SmoothDivFree,
            name: "smooth-div-free",
            singular_set: SingularSet::None,
            has_exact: true,
        },
        ExactCase {
            id: CaseId::PolyExact,
            name: "poly-exact",
            singular_set: SingularSet::None,
            has_exact: true,
        },
        ExactCase {
            id: CaseId::CircularForce,
            name: "circular-force",
            singular_set: SingularSet::None,
            has_exact: false,
        },
    ]
}

pub fn case_by_name(name: &str) -> Option<ExactCase> {
    catalog().into_iter().find(|c| c.name == name.to_ascii_lowercase().replace('_', "-"))
}

/// Second-order central finite-difference oracle for f = -lap(u) + grad(p);
/// used by the verification suites against the closed forms.
pub fn forcing_fd_oracle(case: &ExactCase, nu: f64, x: [f64; 3], h: f64) -> [f64; 3] {
    let mut lap = [0.0; 3];
    let u0 = case.u(x);
    for d in 0..3 {
        let mut xp = x;
        let mut xm = x;
        xp[d] += h;
        xm[d] -= h;
        let up = case.u(xp);
        let um = case.u(xm);
        for c in 0..3 {
            lap[c] += (up[c] - 2.0 * u0[c] + um[c]) / (h * h);
        }
    }
    let mut grad_p = [0.0; 3];
    for d in 0..3 {
        let mut xp = x;
        let mut xm = x;
        xp[d] += h;
        xm[d] -= h;
        grad_p[d] = (case.p(xp, nu) - case.p(xm, nu)) / (2.0 * h);
    }
    [0, 1, 2].map(|c| -lap[c] + grad_p[c])
}

/// Case plus Poisson ratio: the right-hand-side data of one solve.
#[derive(Clone, Copy)]
pub struct CaseData {
    pub case: ExactCase,
    pub nu: f64,
}

impl ProblemData for CaseData {
    fn forcing(&self, x: [f64; 3]) -> [f64; 3] {
        self.case.forcing(x, self.nu)
    }
    fn dirichlet(&self, x: [f64; 3]) -> [f64; 3] {
        self.case.dirichlet(x)
    }
}

/// Exact (or reference) fields entering the DG error.
pub trait FieldEval: Sync {
    fn u(&self, x: [f64; 3]) -> [f64; 3];
    fn grad_u(&self, x: [f64; 3]) -> [[f64; 3]; 3];
    fn p(&self, x: [f64; 3]) -> f64;
    /// Dirichlet data for the boundary jump term; defaults to the trace.
    fn dirichlet(&self, x: [f64; 3]) -> [f64; 3] {
        self.u(x)
    }
}

impl FieldEval for CaseData {
    fn u(&self, x: [f64; 3]) -> [f64; 3] {
        self.case.u(x)
    }
    fn grad_u(&self, x: [f64; 3]) -> [[f64; 3]; 3] {
        self.case.grad_u(x)
    }
    fn p(&self, x: [f64; 3]) -> f64 {
        self.case.p(x, self.nu)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ErrorResult {
    pub dg_error: f64,
    pub velocity_h_error: f64,
    pub pressure_l2_error: f64,
    pub n_dofs: usize,
    pub level: usize,
    pub k: usize,
}

/// DG-norm error of a discrete solution against exact (or reference)
/// fields, by overkill quadrature. Interior faces penalize the jumps of
/// u_h alone (the exact field is continuous); boundary faces penalize
/// g - u_h; the pressure error carries the (2-2nu) weight.
pub fn dg_error<F: FieldEval>(
    solution: &[f64],
    exact: &F,
    mesh: &GeometricMesh,
    faces: &FaceSet,
    dofmap: &DofMap,
    config: &DGConfig,
    mode: ExecMode,
) -> Result<ErrorResult> {
    assert!(solution.len() >= dofmap.m + dofmap.n);
    let vel = TensorBasis::new(config.k)?;
    let pre = TensorBasis::new(config.k - 1)?;
    let rule = gauss_rule(config.overkill_points())?;
    let nb = vel.n_basis();
    let np = pre.n_basis();

    let vol_terms: Vec<(f64, f64)> = exec::map_indexed(mode, mesh.n_elements(), |e| {
        let vt = eval_basis(&vel, &mesh.elements[e], &rule).expect("element validated");
        let pt = eval_basis(&pre, &mesh.elements[e], &rule).expect("element validated");
        let mut grad_err = 0.0;
        let mut p_err = 0.0;
        for q in 0..vt.n_points {
            let x = vt.points[q];
            let ge = exact.grad_u(x);
            let mut diff2 = 0.0;
            for c in 0..3 {
                let mut gh = [0.0; 3];
                for i in 0..nb {
                    let ci = solution[dofmap.vel_index(e, c, i)];
                    let g = vt.grad(i, q);
                    gh[0] += ci * g[0];
                    gh[1] += ci * g[1];
                    gh[2] += ci * g[2];
                }
                for d in 0..3 {
                    let dd = ge[c][d] - gh[d];
                    diff2 += dd * dd;
                }
            }
            grad_err += vt.weights[q] * diff2;
            let mut ph = 0.0;
            for j in 0..np {
                ph += solution[dofmap.pre_index(e, j)] * pt.value(j, q);
            }
            let dp = exact.p(x) - ph;
            p_err += vt.weights[q] * dp * dp;
        }
        (grad_err, p_err)
    });

    let jump_terms: Vec<f64> = exec::map_indexed(mode, faces.faces.len(), |fi| {
        let f = &faces.faces[fi];
        let c_pen = config.penalty(f.hperp);
        match f.kind {
            FaceKind::Interior => {
                let ts = trace_basis(&vel, &mesh.elements[f.sharp], f, &rule)
                    .expect("face lies on owner facet");
                let tf = trace_basis(&vel, &mesh.elements[f.flat.unwrap()], f, &rule)
                    .expect("face lies on owner facet");
                let mut s = 0.0;
                for q in 0..ts.n_points {
                    let mut jump2 = 0.0;
                    for c in 0..3 {
                        let mut us = 0.0;
                        let mut uf = 0.0;
                        for i in 0..nb {
                            us += solution[dofmap.vel_index(f.sharp, c, i)] * ts.value(i, q);
                            uf += solution[dofmap.vel_index(f.flat.unwrap(), c, i)]
                                * tf.value(i, q);
                        }
                        jump2 += (us - uf) * (us - uf);
                    }
                    s += ts.weights[q] * c_pen * jump2;
                }
                s
            }
            FaceKind::Boundary => {
                let t = trace_basis(&vel, &mesh.elements[f.sharp], f, &rule)
                    .expect("face lies on owner facet");
                let mut s = 0.0;
                for q in 0..t.n_points {
                    let g = exact.dirichlet(t.points[q]);
                    let mut jump2 = 0.0;
                    for c in 0..3 {
                        let mut uh = 0.0;
                        for i in 0..nb {
                            uh += solution[dofmap.vel_index(f.sharp, c, i)] * t.value(i, q);
                        }
                        let d = g[c] - uh;
                        jump2 += d * d;
                    }
                    s += t.weights[q] * c_pen * jump2;
                }
                s
            }
        }
    });

    let grad2: f64 = vol_terms.iter().map(|t| t.0).sum();
    let pre2: f64 = vol_terms.iter().map(|t| t.1).sum();
    let jump2: f64 = jump_terms.iter().sum();
    let vel2 = grad2 + jump2;
    let dg2 = vel2 + (2.0 - 2.0 * config.nu) * pre2;
    Ok(ErrorResult {
        dg_error: dg2.sqrt(),
        velocity_h_error: vel2.sqrt(),
        pressure_l2_error: pre2.sqrt(),
        n_dofs: dofmap.m + dofmap.n - 1,
        level: mesh.levels,
        k: config.k,
    })
}

/// A solved discretization used as the "exact" field for cases without a
/// closed-form solution.
pub struct ReferenceSolution {
    pub mesh: GeometricMesh,
    pub dofmap: DofMap,
    pub k: usize,
    coefficients: Vec<f64>,
    vel: TensorBasis,
    pre: TensorBasis,
    tol: f64,
}

impl ReferenceSolution {
    pub fn new(
        mesh: GeometricMesh,
        dofmap: DofMap,
        k: usize,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        assert!(coefficients.len() >= dofmap.m + dofmap.n);
        let tol = 1e-12 * mesh.diameter().max(1.0);
        Ok(ReferenceSolution {
            vel: TensorBasis::new(k)?,
            pre: TensorBasis::new(k - 1)?,
            mesh,
            dofmap,
            k,
            coefficients,
            tol,
        })
    }

    /// Locates the element containing x (first match in construction
    /// order; points on shared facets resolve to the lower index).
    fn locate(&self, x: [f64; 3]) -> Result<usize> {
        self.mesh
            .elements
            .iter()
            .position(|b| b.contains(x, self.tol))
            .ok_or(Error::PointOutsideDomain(x))
    }

    /// (u, grad u, p) of the reference field at a point.
    pub fn evaluate(&self, x: [f64; 3]) -> Result<([f64; 3], [[f64; 3]; 3], f64)> {
        let e = self.locate(x)?;
        let b = &self.mesh.elements[e];
        let mv = self.vel.n_nodes_1d();
        let mp = self.pre.n_nodes_1d();
        let mut vals = [vec![0.0; mv], vec![0.0; mv], vec![0.0; mv]];
        let mut ders = [vec![0.0; mv], vec![0.0; mv], vec![0.0; mv]];
        let mut pvals = [vec![0.0; mp], vec![0.0; mp], vec![0.0; mp]];
        for d in 0..3 {
            let xi = 2.0 * (x[d] - b.lo[d]) / b.extent(d) - 1.0;
            self.vel.eval_1d(xi, &mut vals[d]);
            self.vel.eval_1d_deriv(xi, &mut ders[d]);
            for v in ders[d].iter_mut() {
                *v *= 2.0 / b.extent(d);
            }
            self.pre.eval_1d(xi, &mut pvals[d]);
        }
        let mut u = [0.0; 3];
        let mut grad = [[0.0; 3]; 3];
        for iz in 0..mv {
            for iy in 0..mv {
                for ix in 0..mv {
                    let node = ix + mv * (iy + mv * iz);
                    let v = vals[0][ix] * vals[1][iy] * vals[2][iz];
                    let g = [
                        ders[0][ix] * vals[1][iy] * vals[2][iz],
                        vals[0][ix] * ders[1][iy] * vals[2][iz],
                        vals[0][ix] * vals[1][iy] * ders[2][iz],
                    ];
                    for c in 0..3 {
                        let ci = self.coefficients[self.dofmap.vel_index(e, c, node)];
                        u[c] += ci * v;
                        for d in 0..3 {
                            grad[c][d] += ci * g[d];
                        }
                    }
                }
            }
        }
        let mut p = 0.0;
        for iz in 0..mp {
            for iy in 0..mp {
                for ix in 0..mp {
                    let node = ix + mp * (iy + mp * iz);
                    p += self.coefficients[self.dofmap.pre_index(e, node)]
                        * pvals[0][ix]
                        * pvals[1][iy]
                        * pvals[2][iz];
                }
            }
        }
        Ok((u, grad, p))
    }
}

impl FieldEval for ReferenceSolution {
    fn u(&self, x: [f64; 3]) -> [f64; 3] {
        self.evaluate(x).expect("point inside reference domain").0
    }
    fn grad_u(&self, x: [f64; 3]) -> [[f64; 3]; 3] {
        self.evaluate(x).expect("point inside reference domain").1
    }
    fn p(&self, x: [f64; 3]) -> f64 {
        self.evaluate(x).expect("point inside reference domain").2
    }
    fn dirichlet(&self, _x: [f64; 3]) -> [f64; 3] {
        // the reference problem carries homogeneous Dirichlet data
        [0.0; 3]
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    /// augmented solution, length M + N + 1
    pub solution: Vec<f64>,
    pub report: IterationReport,
    /// multiplier value; zero (to solver accuracy) by the equivalence of
    /// the augmented and the constrained formulation
    pub r_tilde: f64,
    /// integral of the discrete pressure
    pub mean_pressure: f64,
}

/// Assembles and solves one augmented system.
pub fn solve_system(
    mesh: &GeometricMesh,
    faces: &FaceSet,
    dofmap: &DofMap,
    config: &DGConfig,
    case: &ExactCase,
    solve_cfg: &SolveConfig,
    mode: ExecMode,
) -> Result<(SolveOutput, SystemBlocks)> {
    if !case.allows_nu(config.nu) {
        return Err(Error::NuUnsupported { case: case.name.to_string(), nu: config.nu });
    }
    let blocks = assemble_all(mesh, faces, dofmap, config, mode)?;
    let data = CaseData { case: *case, nu: config.nu };
    let rhs = assemble_rhs(mesh, faces, dofmap, config, &data, mode)?;
    let aug = assemble_augmented(&blocks, config);
    let (solution, report) = gmres_solve(&aug, &rhs, solve_cfg)?;
    let r_tilde = solution[dofmap.multiplier_index()];
    let mean_pressure = blocks
        .mean
        .iter()
        .zip(&solution[dofmap.m..dofmap.m + dofmap.n])
        .map(|(m, p)| m * p)
        .sum();
    Ok((SolveOutput { solution, report, r_tilde, mean_pressure }, blocks))
}

/// How the degree and the mesh evolve along a study.
#[derive(Clone, Copy, Debug)]
pub enum KRule {
    /// geometric refinement toward the case's singular support with
    /// k = level + 1 (degree grows with the refinement depth)
    Ladder,
    /// fixed mesh at the given refinement level, sweeping k = step + 1
    FixedMesh { levels: usize },
}

#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub case: &'static str,
    pub nu: f64,
    pub patch: PatchKind,
    pub k: usize,
    pub levels: usize,
    pub n_dofs: usize,
    pub dg_error: f64,
    pub vel_error: f64,
    pub pre_error: f64,
    pub gmres_iters: usize,
    pub converged: bool,
    pub seconds: f64,
}

/// Runs the convergence study: for each step, build the mesh per `krule`,
/// set k = step + 1, solve, and record the DG error. Rows are ordered by
/// (nu, step). Solver non-convergence is recorded, not fatal: the best
/// iterate is evaluated and `converged` is set to false.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    case: &ExactCase,
    nus: &[f64],
    max_level: usize,
    krule: KRule,
    base: &DGConfig,
    solve_cfg: &SolveConfig,
    reference: Option<&ReferenceSolution>,
    sigma: f64,
    mode: ExecMode,
) -> Result<Vec<ConvergenceRow>> {
    if nus.is_empty() {
        return Err(Error::EmptyRange("nu list".into()));
    }
    if case.has_exact && reference.is_none() {
        // fine: errors against the closed form
    } else if !case.has_exact && reference.is_none() {
        return Err(Error::MissingExact(case.name.to_string()));
    }
    let mut rows = Vec::new();
    for &nu in nus {
        for step in 0..=max_level {
            let t0 = std::time::Instant::now();
            let k = step + 1;
            let (kind, levels) = match krule {
                KRule::Ladder => (case.patch_kind(), step),
                KRule::FixedMesh { levels } => (PatchKind::Uniform, levels),
            };
            let mesh = crate::mesh::build_patch_mesh(kind, sigma, levels)?;
            let faces = extract_faces(&mesh)?;
            let dofmap = build_dofmap(&mesh, k)?;
            let config = DGConfig { k, nu, ..*base };
            let solve_res = solve_system(&mesh, &faces, &dofmap, &config, case, solve_cfg, mode);
            let (solution, iters, converged) = match solve_res {
                Ok((out, _)) => (out.solution, out.report.iterations, out.report.converged),
                Err(Error::NoConvergence { iterations, best, residual }) => {
                    eprintln!(
                        "warning: GMRES stalled at residual {residual:.3e} \
                         (case {} nu={nu} k={k} l={levels})",
                        case.name
                    );
                    (best, iterations, false)
                }
                Err(e) => return Err(e),
            };
            let err = match reference {
                Some(r) => dg_error(&solution, r, &mesh, &faces, &dofmap, &config, mode)?,
                None => {
                    let data = CaseData { case: *case, nu };
                    dg_error(&solution, &data, &mesh, &faces, &dofmap, &config, mode)?
                }
            };
            rows.push(ConvergenceRow {
                case: case.name,
                nu,
                patch: kind,
                k,
                levels,
                n_dofs: err.n_dofs,
                dg_error: err.dg_error,
                vel_error: err.velocity_h_error,
                pre_error: err.pressure_l2_error,
                gmres_iters: iters,
                converged,
                seconds: t0.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

/// Least-squares fit of ln(error) against N^(1/root).
#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// rate constant of error^2 <= exp(-b N^(1/root))
    pub b: f64,
    pub root: u32,
    pub n_points: usize,
}

/// Fits rows with level >= `min_level` (pre-asymptotic points discarded).
pub fn fit_convergence(rows: &[(usize, usize, f64)], root: u32, min_level: usize) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(lvl, _, err)| *lvl >= min_level && err.is_finite() && *err > 0.0)
        .map(|(_, n, err)| ((*n as f64).powf(1.0 / root as f64), err.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ybar = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - ybar).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(RateFit { slope, intercept, r_squared, b: -2.0 * slope, root, n_points: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_patch_mesh;
    use rand::{Rng, SeedableRng};

    fn sample_points(
        case: &ExactCase,
        n: usize,
        min_dist: f64,
        seed: u64,
    ) -> Vec<[f64; 3]> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        while pts.len() < n {
            let x = [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)];
            if case.singular_set.distance(x) >= min_dist {
                pts.push(x);
            }
        }
        pts
    }

    #[test]
    fn catalog_contents() {
        let cat = catalog();
        assert_eq!(cat.len(), 6);
        assert!(case_by_name("edge-sing").unwrap().has_exact);
        assert!(!case_by_name("circular-force").unwrap().has_exact);
        assert!(case_by_name("CORNER_SING").is_some());
        assert!(case_by_name("nope").is_none());
    }

    #[test]
    fn smooth_case_is_divergence_free() {
        let case = case_by_name("smooth-div-free").unwrap();
        for x in sample_points(&case, 100, 0.0, 1) {
            let g = case.grad_u(x);
            let div = g[0][0] + g[1][1] + g[2][2];
            assert!(div.abs() <= 1e-13, "div={div} at {x:?}");
        }
    }

    #[test]
    fn normal_component_vanishes_on_boundary() {
        // u1 = u2 = 0 and u3 = 0 at z = 0, 1 for all three singular cases
        for name in ["edge-sing", "corner-sing", "corner-edge-sing"] {
            let case = case_by_name(name).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
            for _ in 0..30 {
                let (a, b) = (rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99));
                for (face_axis, coord) in
                    [(0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0), (2, 0.0), (2, 1.0)]
                {
                    let mut x = [a, b, 0.0];
                    x.swap(2, face_axis);
                    x[face_axis] = coord;
                    let un = case.u(x)[face_axis];
                    assert!(un.abs() <= 1e-13, "{name} face {face_axis}={coord}: {un}");
                }
            }
        }
    }

    #[test]
    fn poly_exact_constitutive_identity() {
        let case = case_by_name("poly-exact").unwrap();
        let nu = 0.25;
        for x in sample_points(&case, 20, 0.0, 3) {
            let g = case.grad_u(x);
            let div = g[0][0] + g[1][1] + g[2][2];
            let residual = div + (1.0 - 2.0 * nu) * case.p(x, nu);
            assert!(residual.abs() < 1e-13);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for case in catalog().into_iter().filter(|c| c.has_exact) {
            for x in sample_points(&case, 20, 0.1, 4) {
                let g = case.grad_u(x);
                for d in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[d] += h;
                    xm[d] -= h;
                    let up = case.u(xp);
                    let um = case.u(xm);
                    for c in 0..3 {
                        let fd = (up[c] - um[c]) / (2.0 * h);
                        let scale = g[c][d].abs().max(1.0);
                        assert!(
                            (g[c][d] - fd).abs() <= 1e-6 * scale,
                            "{} grad[{c}][{d}] at {x:?}: {} vs {}",
                            case.name,
                            g[c][d],
                            fd
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn forcing_matches_fd_oracle() {
        for case in catalog().into_iter().filter(|c| c.has_exact) {
            let nus: &[f64] =
                if case.allows_nu(0.5) { &[0.125, 0.375, 0.5] } else { &[0.125, 0.375] };
            for &nu in nus {
                for x in sample_points(&case, 10, 0.1, 5) {
                    let f = case.forcing(x, nu);
                    let fd = forcing_fd_oracle(&case, nu, x, 1e-4);
                    let fnorm =
                        (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt().max(1e-8);
                    let dnorm = ((f[0] - fd[0]).powi(2)
                        + (f[1] - fd[1]).powi(2)
                        + (f[2] - fd[2]).powi(2))
                    .sqrt();
                    assert!(
                        dnorm <= 1e-5 * fnorm,
                        "{} nu={nu} at {x:?}: rel err {}",
                        case.name,
                        dnorm / fnorm
                    );
                }
            }
        }
    }

    #[test]
    fn pressure_constitutive_relation_for_singular_cases() {
        for name in ["edge-sing", "corner-sing", "corner-edge-sing"] {
            let case = case_by_name(name).unwrap();
            for &nu in &[0.125, 0.375] {
                for x in sample_points(&case, 15, 0.05, 6) {
                    let g = case.grad_u(x);
                    let div = g[0][0] + g[1][1] + g[2][2];
                    let p = case.p(x, nu);
                    assert!((p + div / (1.0 - 2.0 * nu)).abs() <= 1e-12 * p.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn pressure_mean_is_zero_by_overkill_quadrature() {
        // integrate p over geometrically refined meshes so that the
        // singular cell contributions fall below the tolerance
        let rule = gauss_rule(12).unwrap();
        let cases = [("edge-sing", 8usize), ("corner-sing", 16), ("corner-edge-sing", 24)];
        for (name, levels) in cases {
            let case = case_by_name(name).unwrap();
            let mesh = build_patch_mesh(case.patch_kind(), 0.5, levels).unwrap();
            let basis = TensorBasis::new(1).unwrap();
            let nu = 0.375;
            let mut integral = 0.0;
            for el in &mesh.elements {
                let t = eval_basis(&basis, el, &rule).unwrap();
                for q in 0..t.n_points {
                    integral += t.weights[q] * case.p(t.points[q], nu);
                }
            }
            assert!(integral.abs() <= 1e-10, "{name}: int p = {integral:.3e}");
        }
        // the polynomial case integrates to zero on any mesh
        let case = case_by_name("poly-exact").unwrap();
        let mesh = build_patch_mesh(PatchKind::Uniform, 0.5, 1).unwrap();
        let basis = TensorBasis::new(1).unwrap();
        let mut integral = 0.0;
        for el in &mesh.elements {
            let t = eval_basis(&basis, el, &rule).unwrap();
            for q in 0..t.n_points {
                integral += t.weights[q] * case.p(t.points[q], 0.25);
            }
        }
        assert!(integral.abs() <= 1e-13);
    }

    #[test]
    fn dg_error_of_zero_solution_matches_direct_quadrature() {
        // for the smooth case g = 0 on the boundary and p = 0, so the DG
        // error of the zero solution is just the broken gradient norm
        let case = case_by_name("smooth-div-free").unwrap();
        let mesh = build_patch_mesh(PatchKind::Uniform, 0.5, 1).unwrap();
        let faces = extract_faces(&mesh).unwrap();
        let config = DGConfig::new(2, 0.5).unwrap();
        let dofmap = build_dofmap(&mesh, 2).unwrap();
        let zero = vec![0.0; dofmap.total()];
        let data = CaseData { case, nu: 0.5 };
        let err =
            dg_error(&zero, &data, &mesh, &faces, &dofmap, &config, ExecMode::default()).unwrap();
        // identity between the components
        let identity = err.dg_error.powi(2)
            - err.velocity_h_error.powi(2)
            - (2.0 - 2.0 * config.nu) * err.pressure_l2_error.powi(2);
        assert!(identity.abs() <= 1e-12 * err.dg_error.powi(2));
        assert!(err.pressure_l2_error.abs() < 1e-14);
        // independent quadrature of |grad u|^2
        let rule = gauss_rule(8).unwrap();
        let basis = TensorBasis::new(1).unwrap();
        let mut grad2 = 0.0;
        for el in &mesh.elements {
            let t = eval_basis(&basis, el, &rule).unwrap();
            for q in 0..t.n_points {
                let g = case.grad_u(t.points[q]);
                grad2 += t.weights[q]
                    * g.iter().map(|row| row.iter().map(|v| v * v).sum::<f64>()).sum::<f64>();
            }
        }
        assert!(
            (err.velocity_h_error.powi(2) - grad2).abs() <= 1e-6 * grad2,
            "{} vs {}",
            err.velocity_h_error.powi(2),
            grad2
        );
    }

    #[test]
    fn reference_solution_evaluation() {
        // piecewise-constant pressure and a known velocity on a 2-element
        // mesh; points on the shared plane resolve to the lower element
        let mesh = GeometricMesh::from_elements(vec![
            crate::mesh::Box3::new([0.0, 0.0, 0.0], [0.5, 1.0, 1.0]).unwrap(),
            crate::mesh::Box3::new([0.5, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap(),
        ]);
        let dofmap = build_dofmap(&mesh, 1).unwrap();
        let mut coeffs = vec![0.0; dofmap.total()];
        for j in 0..dofmap.pre_per_elem {
            coeffs[dofmap.pre_index(0, j)] = 1.0;
            coeffs[dofmap.pre_index(1, j)] = 2.0;
        }
        // constant velocity u = (3, 0, 0)
        for e in 0..2 {
            for i in 0..dofmap.vel_per_comp {
                coeffs[dofmap.vel_index(e, 0, i)] = 3.0;
            }
        }
        let r = ReferenceSolution::new(mesh, dofmap, 1, coeffs).unwrap();
        let (u, _, p) = r.evaluate([0.25, 0.5, 0.5]).unwrap();
        assert!((u[0] - 3.0).abs() < 1e-13);
        assert!((p - 1.0).abs() < 1e-13);
        let (_, _, p) = r.evaluate([0.75, 0.5, 0.5]).unwrap();
        assert!((p - 2.0).abs() < 1e-13);
        // tie-break on the shared plane x = 0.5: lower element wins
        let (_, _, p) = r.evaluate([0.5, 0.5, 0.5]).unwrap();
        assert!((p - 1.0).abs() < 1e-13);
        assert!(r.evaluate([2.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn galerkin_exactness_on_hanging_node_mesh() {
        // the polynomial case lies in the discrete space for k = 2, so the
        // solve must reproduce it exactly also across hanging faces, where
        // the coarse owner's basis is traced on a sub-rectangle
        let case = case_by_name("poly-exact").unwrap();
        let mesh = build_patch_mesh(PatchKind::Edge, 0.5, 2).unwrap();
        let faces = extract_faces(&mesh).unwrap();
        assert!(faces.faces.iter().any(|f| {
            f.kind == crate::mesh::FaceKind::Interior
                && f.area
                    < 0.99
                        * mesh.elements[f.flat.unwrap()].extent((f.axis + 1) % 3)
                        * mesh.elements[f.flat.unwrap()].extent((f.axis + 2) % 3)
        }));
        let dofmap = build_dofmap(&mesh, 2).unwrap();
        let config = DGConfig::new(2, 0.25).unwrap();
        let (out, _) = solve_system(
            &mesh,
            &faces,
            &dofmap,
            &config,
            &case,
            &SolveConfig::default(),
            ExecMode::default(),
        )
        .unwrap();
        let err = dg_error(
            &out.solution,
            &CaseData { case, nu: 0.25 },
            &mesh,
            &faces,
            &dofmap,
            &config,
            ExecMode::default(),
        )
        .unwrap();
        assert!(err.dg_error <= 1e-8, "dg_error {} on hanging-node mesh", err.dg_error);
        assert!(out.r_tilde.abs() <= 1e-10);
    }

    #[test]
    fn nu_restrictions() {
        let edge = case_by_name("edge-sing").unwrap();
        assert!(edge.allows_nu(0.375));
        assert!(!edge.allows_nu(0.5));
        let smooth = case_by_name("smooth-div-free").unwrap();
        assert!(smooth.allows_nu(0.5));
        let poly = case_by_name("poly-exact").unwrap();
        assert!(!poly.allows_nu(0.5));
    }

    #[test]
    fn fit_recovers_synthetic_exponential() {
        // err = exp(3 - 0.7 N^(1/4))
        let rows: Vec<(usize, usize, f64)> = (0..6)
            .map(|l| {
                let n = (l + 1) * (l + 1) * 100;
                (l, n, (3.0 - 0.7 * (n as f64).powf(0.25)).exp())
            })
            .collect();
        let fit = fit_convergence(&rows, 4, 2).unwrap();
        assert!((fit.slope + 0.7).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.b - 1.4).abs() < 1e-10);
        assert_eq!(fit.n_points, 4);
        assert!(fit_convergence(&rows[..1], 4, 2).is_none());
    }

    #[test]
    fn convergence_study_smoke() {
        let case = case_by_name("poly-exact").unwrap();
        let base = DGConfig::new(1, 0.25).unwrap();
        let rows = convergence_study(
            &case,
            &[0.25],
            0,
            KRule::Ladder,
            &base,
            &SolveConfig::default(),
            None,
            0.5,
            ExecMode::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].k, 1);
        assert!(rows[0].converged);
        // empty nu list is an error
        assert!(convergence_study(
            &case,
            &[],
            0,
            KRule::Ladder,
            &base,
            &SolveConfig::default(),
            None,
            0.5,
            ExecMode::default(),
        )
        .is_err());
        // circular force without a reference is an error
        let circ = case_by_name("circular-force").unwrap();
        assert!(matches!(
            convergence_study(
                &circ,
                &[0.5],
                0,
                KRule::Ladder,
                &base,
                &SolveConfig::default(),
                None,
                0.5,
                ExecMode::default(),
            ),
            Err(Error::MissingExact(_))
        ));
    }
}
