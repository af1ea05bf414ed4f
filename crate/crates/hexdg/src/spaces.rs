//! Degree-of-freedom maps for the discontinuous velocity space [Q_k]^3 and
//! the full pressure space Q_{k-1} (no zero-mean constraint; that is
//! enforced by the augmented formulation), plus the scalar multiplier slot.

use crate::error::{Error, Result};
use crate::fem::gauss_rule;
use crate::mesh::GeometricMesh;

/// Global index layout: velocity block first (element-major, component-major
/// within the element, tensor node index within the component), then the
/// pressure block (element-major), then one multiplier slot.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub n_elements: usize,
    pub k: usize,
    /// velocity dofs per component per element, (k+1)^3
    pub vel_per_comp: usize,
    /// pressure dofs per element, k^3
    pub pre_per_elem: usize,
    /// dim V_h
    pub m: usize,
    /// dim of the full pressure space
    pub n: usize,
}

/// k >= 1; the inf-sup theory needs k >= 2, but k = 1 is allowed for
/// smoke tests and the convergence ladders start there.
pub fn build_dofmap(mesh: &GeometricMesh, k: usize) -> Result<DofMap> {
    if k < 1 {
        return Err(Error::DegreeTooSmall(k));
    }
    let e = mesh.n_elements();
    let vel_per_comp = (k + 1).pow(3);
    let pre_per_elem = k.pow(3);
    Ok(DofMap {
        n_elements: e,
        k,
        vel_per_comp,
        pre_per_elem,
        m: 3 * vel_per_comp * e,
        n: pre_per_elem * e,
    })
}

impl DofMap {
    #[inline]
    pub fn vel_index(&self, elem: usize, comp: usize, node: usize) -> usize {
        (elem * 3 + comp) * self.vel_per_comp + node
    }

    #[inline]
    pub fn pre_index(&self, elem: usize, node: usize) -> usize {
        self.m + elem * self.pre_per_elem + node
    }

    /// Dimension of the augmented system, M + N + 1.
    pub fn total(&self) -> usize {
        self.m + self.n + 1
    }

    pub fn multiplier_index(&self) -> usize {
        self.m + self.n
    }
}

fn nodal_points(mesh: &GeometricMesh, elem: usize, nodes_1d: &[f64]) -> Vec<[f64; 3]> {
    let b = &mesh.elements[elem];
    let m = nodes_1d.len();
    let mut out = Vec::with_capacity(m * m * m);
    let map = |t: f64, d: usize| b.lo[d] + 0.5 * b.extent(d) * (t + 1.0);
    for iz in 0..m {
        for iy in 0..m {
            for ix in 0..m {
                out.push([map(nodes_1d[ix], 0), map(nodes_1d[iy], 1), map(nodes_1d[iz], 2)]);
            }
        }
    }
    out
}

/// Nodal interpolation of a vector field into V_h coefficients, length M.
pub fn interpolate_velocity(
    mesh: &GeometricMesh,
    dofmap: &DofMap,
    f: impl Fn([f64; 3]) -> [f64; 3],
) -> Vec<f64> {
    let nodes = gauss_rule(dofmap.k + 1).expect("k validated").nodes;
    let mut out = vec![0.0; dofmap.m];
    for e in 0..dofmap.n_elements {
        for (i, x) in nodal_points(mesh, e, &nodes).into_iter().enumerate() {
            let v = f(x);
            for c in 0..3 {
                out[dofmap.vel_index(e, c, i)] = v[c];
            }
        }
    }
    out
}

/// Nodal interpolation of a scalar field into the full pressure space,
/// length N (block-local indices, no M offset).
pub fn interpolate_pressure(
    mesh: &GeometricMesh,
    dofmap: &DofMap,
    f: impl Fn([f64; 3]) -> f64,
) -> Vec<f64> {
    let nodes = gauss_rule(dofmap.k).expect("k validated").nodes;
    let mut out = vec![0.0; dofmap.n];
    for e in 0..dofmap.n_elements {
        for (i, x) in nodal_points(mesh, e, &nodes).into_iter().enumerate() {
            out[e * dofmap.pre_per_elem + i] = f(x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_patch_mesh, PatchKind};

    #[test]
    fn single_element_k2() {
        let mesh = build_patch_mesh(PatchKind::Uniform, 0.5, 0).unwrap();
        let dm = build_dofmap(&mesh, 2).unwrap();
        assert_eq!(dm.m, 81);
        assert_eq!(dm.n, 8);
        assert_eq!(dm.total(), 90);
        assert_eq!(dm.multiplier_index(), 89);
    }

    #[test]
    fn edge_patch_scaling() {
        let mesh = build_patch_mesh(PatchKind::Edge, 0.5, 3).unwrap();
        let dm = build_dofmap(&mesh, 2).unwrap();
        assert_eq!(dm.m, 810);
        assert_eq!(dm.n, 80);
    }

    #[test]
    fn dof_ratio_matches_counting_identity() {
        // M = 3 (k+1)^3 / k^3 N > 3N
        for k in 1..=4 {
            let mesh = build_patch_mesh(PatchKind::Corner, 0.5, 2).unwrap();
            let dm = build_dofmap(&mesh, k).unwrap();
            let expect = 3.0 * ((k + 1) as f64).powi(3) / (k as f64).powi(3);
            let ratio = dm.m as f64 / dm.n as f64;
            assert!((ratio - expect).abs() < 1e-12);
            assert!(dm.m > 3 * dm.n);
        }
        let mesh = build_patch_mesh(PatchKind::Uniform, 0.5, 0).unwrap();
        let dm = build_dofmap(&mesh, 3).unwrap();
        assert!((dm.m as f64 / dm.n as f64 - 3.0 * 64.0 / 27.0).abs() < 1e-12);
    }

    #[test]
    fn indices_are_contiguous_and_disjoint() {
        let mesh = build_patch_mesh(PatchKind::Edge, 0.5, 1).unwrap();
        let dm = build_dofmap(&mesh, 2).unwrap();
        let mut seen = vec![false; dm.total()];
        for e in 0..dm.n_elements {
            for c in 0..3 {
                for i in 0..dm.vel_per_comp {
                    let g = dm.vel_index(e, c, i);
                    assert!(!seen[g]);
                    seen[g] = true;
                }
            }
            for j in 0..dm.pre_per_elem {
                let g = dm.pre_index(e, j);
                assert!(!seen[g]);
                seen[g] = true;
            }
        }
        seen[dm.multiplier_index()] = true;
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn degree_zero_rejected() {
        let mesh = build_patch_mesh(PatchKind::Uniform, 0.5, 0).unwrap();
        assert!(build_dofmap(&mesh, 0).is_err());
    }
}
