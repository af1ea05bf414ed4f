//! 1-D Gauss-Legendre rules, tensorized Lagrange bases at Gauss points,
//! and evaluation tables on axi-parallel elements.
//!
//! Shape functions are nodal Lagrange polynomials on the Gauss points of
//! the matching count, tensorized per axis. Basis index layout is
//! `i = ix + m*(iy + m*iz)` with `m` nodes per axis (x fastest); quadrature
//! points use the same layout.

use crate::error::{Error, Result};
use crate::mesh::{Box3, Face};

/// Gauss-Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes and weights via Newton iteration on the Legendre
/// polynomial, nodes ascending and exactly antisymmetric.
pub fn gauss_rule(n: usize) -> Result<GaussRule> {
    if n == 0 || n > 64 {
        return Err(Error::QuadPointCount(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // root i counted from x = +1 downwards
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                let (p, d) = legendre(n, x);
                dp = d;
                x -= p / d;
                break;
            }
        }
        if 2 * i + 1 == n {
            x = 0.0;
            dp = legendre(n, 0.0).1;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    Ok(GaussRule { nodes, weights })
}

/// Tensor-product Lagrange basis of per-axis degree `degree`, nodal at the
/// Gauss points of count `degree + 1`.
#[derive(Clone, Debug)]
pub struct TensorBasis {
    pub degree: usize,
    pub nodes: Vec<f64>,
    denom: Vec<f64>,
}

impl TensorBasis {
    pub fn new(degree: usize) -> Result<Self> {
        let nodes = gauss_rule(degree + 1)?.nodes;
        let denom = (0..nodes.len())
            .map(|i| {
                (0..nodes.len())
                    .filter(|&j| j != i)
                    .map(|j| nodes[i] - nodes[j])
                    .product()
            })
            .collect();
        Ok(TensorBasis { degree, nodes, denom })
    }

    pub fn n_nodes_1d(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_basis(&self) -> usize {
        self.nodes.len().pow(3)
    }

    /// All 1-D Lagrange values at reference coordinate `x`.
    pub fn eval_1d(&self, x: f64, out: &mut [f64]) {
        let m = self.nodes.len();
        for i in 0..m {
            let mut p = 1.0;
            for j in 0..m {
                if j != i {
                    p *= x - self.nodes[j];
                }
            }
            out[i] = p / self.denom[i];
        }
    }

    /// All 1-D Lagrange derivatives at reference coordinate `x`.
    pub fn eval_1d_deriv(&self, x: f64, out: &mut [f64]) {
        let m = self.nodes.len();
        for i in 0..m {
            let mut sum = 0.0;
            for l in 0..m {
                if l == i {
                    continue;
                }
                let mut p = 1.0;
                for j in 0..m {
                    if j != i && j != l {
                        p *= x - self.nodes[j];
                    }
                }
                sum += p;
            }
            out[i] = sum / self.denom[i];
        }
    }
}

/// Values, gradients, physical points and scaled weights of all tensor
/// shape functions at a tensor set of quadrature points. Layout is
/// flattened `[basis * n_points + point]`.
#[derive(Clone, Debug)]
pub struct EvalTable {
    pub n_basis: usize,
    pub n_points: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<[f64; 3]>,
}

impl EvalTable {
    #[inline]
    pub fn value(&self, basis: usize, point: usize) -> f64 {
        self.values[basis * self.n_points + point]
    }

    #[inline]
    pub fn grad(&self, basis: usize, point: usize) -> [f64; 3] {
        self.grads[basis * self.n_points + point]
    }

    /// Row of values for one basis function.
    #[inline]
    pub fn values_of(&self, basis: usize) -> &[f64] {
        &self.values[basis * self.n_points..(basis + 1) * self.n_points]
    }

    #[inline]
    pub fn grads_of(&self, basis: usize) -> &[[f64; 3]] {
        &self.grads[basis * self.n_points..(basis + 1) * self.n_points]
    }

    /// u_h(x_q) for a coefficient slice over this table's basis.
    pub fn eval_scalar(&self, coeffs: &[f64], point: usize) -> f64 {
        (0..self.n_basis).map(|b| coeffs[b] * self.value(b, point)).sum()
    }

    pub fn eval_grad(&self, coeffs: &[f64], point: usize) -> [f64; 3] {
        let mut g = [0.0; 3];
        for b in 0..self.n_basis {
            let gb = self.grad(b, point);
            for d in 0..3 {
                g[d] += coeffs[b] * gb[d];
            }
        }
        g
    }
}

/// Per-axis evaluation data for the tensor assembly below.
struct Axis1d {
    coords: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

fn axis_from_rule(basis: &TensorBasis, lo: f64, hi: f64, rule: &GaussRule) -> Axis1d {
    let h = hi - lo;
    let m = basis.n_nodes_1d();
    let nq = rule.len();
    let mut values = vec![vec![0.0; nq]; m];
    let mut derivs = vec![vec![0.0; nq]; m];
    let mut buf = vec![0.0; m];
    for (q, &t) in rule.nodes.iter().enumerate() {
        basis.eval_1d(t, &mut buf);
        for i in 0..m {
            values[i][q] = buf[i];
        }
        basis.eval_1d_deriv(t, &mut buf);
        for i in 0..m {
            derivs[i][q] = buf[i] * 2.0 / h;
        }
    }
    Axis1d {
        coords: rule.nodes.iter().map(|&t| lo + 0.5 * h * (t + 1.0)).collect(),
        weights: rule.weights.iter().map(|&w| w * 0.5 * h).collect(),
        values,
        derivs,
    }
}

/// Single trace point at the reference coordinate `r` (= +-1), with unit
/// weight so the axis does not contribute to the quadrature measure.
fn axis_trace(basis: &TensorBasis, coord: f64, r: f64, h: f64) -> Axis1d {
    let m = basis.n_nodes_1d();
    let mut vals = vec![0.0; m];
    let mut ders = vec![0.0; m];
    basis.eval_1d(r, &mut vals);
    basis.eval_1d_deriv(r, &mut ders);
    Axis1d {
        coords: vec![coord],
        weights: vec![1.0],
        values: vals.iter().map(|&v| vec![v]).collect(),
        derivs: ders.iter().map(|&d| vec![d * 2.0 / h]).collect(),
    }
}

fn tensor_table(ax: [Axis1d; 3], m: usize) -> EvalTable {
    let nq: usize = ax.iter().map(|a| a.coords.len()).product();
    let n_basis = m.pow(3);
    let mut points = Vec::with_capacity(nq);
    let mut weights = Vec::with_capacity(nq);
    for qz in 0..ax[2].coords.len() {
        for qy in 0..ax[1].coords.len() {
            for qx in 0..ax[0].coords.len() {
                points.push([ax[0].coords[qx], ax[1].coords[qy], ax[2].coords[qz]]);
                weights.push(ax[0].weights[qx] * ax[1].weights[qy] * ax[2].weights[qz]);
            }
        }
    }
    // point index written in the same x-fastest layout as the loop above
    let mut values = vec![0.0; n_basis * nq];
    let mut grads = vec![[0.0; 3]; n_basis * nq];
    let (nx, ny) = (ax[0].coords.len(), ax[1].coords.len());
    for iz in 0..m {
        for iy in 0..m {
            for ix in 0..m {
                let b = ix + m * (iy + m * iz);
                let row = b * nq;
                for qz in 0..ax[2].coords.len() {
                    for qy in 0..ny {
                        for qx in 0..nx {
                            let q = qx + nx * (qy + ny * qz);
                            let (vx, vy, vz) =
                                (ax[0].values[ix][qx], ax[1].values[iy][qy], ax[2].values[iz][qz]);
                            values[row + q] = vx * vy * vz;
                            grads[row + q] = [
                                ax[0].derivs[ix][qx] * vy * vz,
                                vx * ax[1].derivs[iy][qy] * vz,
                                vx * vy * ax[2].derivs[iz][qz],
                            ];
                        }
                    }
                }
            }
        }
    }
    EvalTable { n_basis, n_points: nq, points, weights, values, grads }
}

/// Values and gradients at the tensor Gauss points of `rule` mapped to
/// `element`; gradients carry the diagonal Jacobian `2/h_d`, weights the
/// volume factor `prod(h_d)/8`.
pub fn eval_basis(basis: &TensorBasis, element: &Box3, rule: &GaussRule) -> Result<EvalTable> {
    if (0..3).any(|d| !(element.extent(d) > 0.0)) {
        return Err(Error::DegenerateElement);
    }
    let ax = [0, 1, 2].map(|d| axis_from_rule(basis, element.lo[d], element.hi[d], rule));
    Ok(tensor_table(ax, basis.n_nodes_1d()))
}

/// Values and full 3-D gradients at the tensor Gauss points of the face
/// rectangle, which may be a strict sub-rectangle of the element facet
/// (hanging-node case). Face weights are scaled by the rectangle area / 4.
pub fn trace_basis(
    basis: &TensorBasis,
    element: &Box3,
    face: &Face,
    rule: &GaussRule,
) -> Result<EvalTable> {
    let d = face.axis;
    let tol = 1e-12 * (1.0 + element.extent(d));
    let r = if (face.coord - element.lo[d]).abs() <= tol {
        -1.0
    } else if (face.coord - element.hi[d]).abs() <= tol {
        1.0
    } else {
        return Err(Error::FaceNotOnElement);
    };
    let t = Face::tangential_axes(d);
    for (i, &td) in t.iter().enumerate() {
        if face.span[i][0] < element.lo[td] - tol || face.span[i][1] > element.hi[td] + tol {
            return Err(Error::FaceNotOnElement);
        }
    }

    // tangential axes get the rule mapped to the face span, reparametrized
    // into the element's reference coordinates
    let make_tang = |i: usize| -> Axis1d {
        let td = t[i];
        let (lo, hi) = (face.span[i][0], face.span[i][1]);
        let h_el = element.extent(td);
        let m = basis.n_nodes_1d();
        let nq = rule.len();
        let mut values = vec![vec![0.0; nq]; m];
        let mut derivs = vec![vec![0.0; nq]; m];
        let mut buf = vec![0.0; m];
        let mut coords = Vec::with_capacity(nq);
        for (q, &s) in rule.nodes.iter().enumerate() {
            let x = lo + 0.5 * (hi - lo) * (s + 1.0);
            coords.push(x);
            let xi = 2.0 * (x - element.lo[td]) / h_el - 1.0;
            basis.eval_1d(xi, &mut buf);
            for b in 0..m {
                values[b][q] = buf[b];
            }
            basis.eval_1d_deriv(xi, &mut buf);
            for b in 0..m {
                derivs[b][q] = buf[b] * 2.0 / h_el;
            }
        }
        Axis1d {
            coords,
            weights: rule.weights.iter().map(|&w| w * 0.5 * (hi - lo)).collect(),
            values,
            derivs,
        }
    };

    let mut ax: [Option<Axis1d>; 3] = [None, None, None];
    ax[t[0]] = Some(make_tang(0));
    ax[t[1]] = Some(make_tang(1));
    ax[d] = Some(axis_trace(basis, face.coord, r, element.extent(d)));
    let ax = ax.map(Option::unwrap);
    Ok(tensor_table(ax, basis.n_nodes_1d()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{extract_faces, GeometricMesh};

    #[test]
    fn gauss_small_rules() {
        let r1 = gauss_rule(1).unwrap();
        assert!(r1.nodes[0].abs() < 1e-15);
        assert!((r1.weights[0] - 2.0).abs() < 1e-15);
        let r2 = gauss_rule(2).unwrap();
        let c = 1.0 / 3.0f64.sqrt();
        assert!((r2.nodes[0] + c).abs() < 1e-15);
        assert!((r2.nodes[1] - c).abs() < 1e-15);
        assert!((r2.weights[0] - 1.0).abs() < 1e-15);
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(65).is_err());
    }

    #[test]
    fn gauss_weight_sums_and_monomials() {
        for n in 1..=64 {
            let r = gauss_rule(n).unwrap();
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
            assert!(r.weights.iter().all(|&w| w > 0.0));
            // exact for degree <= 2n-1
            for k in 0..(2 * n).min(20) {
                let q: f64 =
                    r.nodes.iter().zip(&r.weights).map(|(&x, &w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert!((q - exact).abs() < 1e-13, "n={n} k={k}: {q} vs {exact}");
            }
        }
        // n=3 spot check: integral of x^4 is 2/5
        let r = gauss_rule(3).unwrap();
        let q: f64 = r.nodes.iter().zip(&r.weights).map(|(&x, &w)| w * x.powi(4)).sum();
        assert!((q - 0.4).abs() < 1e-14);
    }

    #[test]
    fn lagrange_cardinality_and_partition_of_unity() {
        for deg in 0..6 {
            let b = TensorBasis::new(deg).unwrap();
            let m = b.n_nodes_1d();
            let mut vals = vec![0.0; m];
            for (j, &t) in b.nodes.clone().iter().enumerate() {
                b.eval_1d(t, &mut vals);
                for i in 0..m {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((vals[i] - expect).abs() < 1e-12);
                }
            }
            for &x in &[-1.0, -0.3, 0.0, 0.7, 1.0] {
                b.eval_1d(x, &mut vals);
                let s: f64 = vals.iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "deg={deg} x={x}");
                let mut ders = vec![0.0; m];
                b.eval_1d_deriv(x, &mut ders);
                let ds: f64 = ders.iter().sum();
                assert!(ds.abs() < 1e-11, "deg={deg} x={x} dsum={ds}");
            }
        }
    }

    #[test]
    fn volume_table_reference_cube() {
        let b = TensorBasis::new(1).unwrap();
        let el = Box3::new([-1.0; 3], [1.0; 3]).unwrap();
        let t = eval_basis(&b, &el, &gauss_rule(2).unwrap()).unwrap();
        let w: f64 = t.weights.iter().sum();
        assert!((w - 8.0).abs() < 1e-13);
        // constants have zero gradient: sum of all basis gradients vanishes
        for q in 0..t.n_points {
            let mut g = [0.0; 3];
            for bi in 0..t.n_basis {
                let gb = t.grad(bi, q);
                for d in 0..3 {
                    g[d] += gb[d];
                }
            }
            assert!(g.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn interpolated_square_integrates_exactly() {
        // f(x) = x_1^2 on [0,1]^3 with k = 2 integrates to 1/3
        let b = TensorBasis::new(2).unwrap();
        let el = Box3::new([0.0; 3], [1.0; 3]).unwrap();
        let rule = gauss_rule(3).unwrap();
        let t = eval_basis(&b, &el, &rule).unwrap();
        // nodal interpolation at the basis points (which are the Gauss
        // points of the same rule, so values are delta there)
        let m = b.n_nodes_1d();
        let mut coeffs = vec![0.0; b.n_basis()];
        for iz in 0..m {
            for iy in 0..m {
                for ix in 0..m {
                    let x = 0.5 * (b.nodes[ix] + 1.0);
                    coeffs[ix + m * (iy + m * iz)] = x * x;
                }
            }
        }
        let integral: f64 =
            (0..t.n_points).map(|q| t.weights[q] * t.eval_scalar(&coeffs, q)).sum();
        assert!((integral - 1.0 / 3.0).abs() < 1e-14, "{integral}");
    }

    #[test]
    fn quadrature_exactness_two_rules_agree() {
        // integral of u_h^2 with n = k+1 matches n = k+3 for random u_h
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for k in 1..=4 {
            let b = TensorBasis::new(k).unwrap();
            let el = Box3::new([0.2, -0.5, 1.0], [0.9, 0.25, 3.0]).unwrap();
            let coeffs: Vec<f64> = (0..b.n_basis()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut vals = [0.0, 0.0];
            for (slot, n) in [(0, k + 1), (1, k + 3)] {
                let t = eval_basis(&b, &el, &gauss_rule(n).unwrap()).unwrap();
                vals[slot] = (0..t.n_points)
                    .map(|q| {
                        let u = t.eval_scalar(&coeffs, q);
                        t.weights[q] * u * u
                    })
                    .sum();
            }
            assert!((vals[0] - vals[1]).abs() <= 1e-13 * vals[1].abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn trace_tables() {
        let b = TensorBasis::new(2).unwrap();
        let el = Box3::new([0.0; 3], [1.0; 3]).unwrap();
        let m = GeometricMesh::from_elements(vec![el]);
        let faces = extract_faces(&m).unwrap();
        let rule = gauss_rule(3).unwrap();
        for f in &faces.faces {
            let t = trace_basis(&b, &el, f, &rule).unwrap();
            // constant 1 traces to 1
            for q in 0..t.n_points {
                let s: f64 = (0..t.n_basis).map(|bi| t.value(bi, q)).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
            // weights sum to the face area
            let w: f64 = t.weights.iter().sum();
            assert!((w - f.area).abs() < 1e-13);
        }
    }

    #[test]
    fn trace_on_sub_rectangle() {
        // coarse element [0,1]^3, sub-face x=0, y,z in [0,1/2]
        let b = TensorBasis::new(2).unwrap();
        let el = Box3::new([0.0; 3], [1.0; 3]).unwrap();
        let face = Face {
            axis: 0,
            coord: 0.0,
            span: [[0.0, 0.5], [0.0, 0.5]],
            sharp: 0,
            flat: None,
            kind: crate::mesh::FaceKind::Boundary,
            hperp: 1.0,
            area: 0.25,
            normal_sign: -1.0,
        };
        let t = trace_basis(&b, &el, &face, &gauss_rule(3).unwrap()).unwrap();
        let w: f64 = t.weights.iter().sum();
        assert!((w - 0.25).abs() < 1e-14);
        // a face off the element is rejected
        let outside = Face { coord: 0.25, ..face };
        assert!(trace_basis(&b, &el, &outside, &gauss_rule(3).unwrap()).is_err());
    }

    #[test]
    fn face_trace_consistency_across_conforming_face() {
        // a globally defined polynomial evaluated from either side of a
        // conforming face agrees at the shared quadrature points
        let b = TensorBasis::new(3).unwrap();
        let left = Box3::new([0.0, 0.0, 0.0], [0.5, 1.0, 1.0]).unwrap();
        let right = Box3::new([0.5, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap();
        let mesh = GeometricMesh::from_elements(vec![left, right]);
        let faces = extract_faces(&mesh).unwrap();
        let shared = faces
            .faces
            .iter()
            .find(|f| f.kind == crate::mesh::FaceKind::Interior)
            .unwrap();
        let poly = |x: [f64; 3]| x[0].powi(3) - 2.0 * x[1] * x[1] * x[2] + 0.5;
        let rule = gauss_rule(4).unwrap();
        let mut sides = Vec::new();
        for el in [&left, &right] {
            let m = b.n_nodes_1d();
            let mut coeffs = vec![0.0; b.n_basis()];
            for iz in 0..m {
                for iy in 0..m {
                    for ix in 0..m {
                        let map = |t: f64, lo: f64, hi: f64| lo + 0.5 * (hi - lo) * (t + 1.0);
                        let x = [
                            map(b.nodes[ix], el.lo[0], el.hi[0]),
                            map(b.nodes[iy], el.lo[1], el.hi[1]),
                            map(b.nodes[iz], el.lo[2], el.hi[2]),
                        ];
                        coeffs[ix + m * (iy + m * iz)] = poly(x);
                    }
                }
            }
            let t = trace_basis(&b, el, shared, &rule).unwrap();
            let vals: Vec<f64> = (0..t.n_points).map(|q| t.eval_scalar(&coeffs, q)).collect();
            sides.push(vals);
        }
        for (a, bb) in sides[0].iter().zip(sides[1].iter()) {
            assert!((a - bb).abs() < 1e-13);
        }
    }
}
