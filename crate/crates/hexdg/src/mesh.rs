//! Geometric hexahedral patch meshes and face extraction.
//!
//! Meshes are built from axi-parallel boxes by recursive geometric
//! refinement at ratio `sigma` toward a designated corner / edge set.
//! With `sigma = 1/2` every coordinate stays an exact dyadic rational, so
//! face matching needs no tolerances; general `sigma` falls back to a
//! relative tolerance of `1e-12 * domain diameter`.
//!
//! Faces are the *smallest* faces: maximal planar intersections of two
//! element facets (or of a facet with the domain boundary). Hanging nodes
//! of arbitrary index are resolved by pairwise facet intersection.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Axi-parallel box, `lo < hi` componentwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Box3 {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        if (0..3).any(|d| !(hi[d] - lo[d] > 0.0)) {
            return Err(Error::InvalidBox { lo, hi });
        }
        Ok(Box3 { lo, hi })
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|d| self.extent(d)).product()
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|d| 0.5 * (self.lo[d] + self.hi[d]))
    }

    pub fn contains(&self, x: [f64; 3], tol: f64) -> bool {
        (0..3).all(|d| x[d] >= self.lo[d] - tol && x[d] <= self.hi[d] + tol)
    }
}

/// Canonical refinement patterns. The singular support on the unit cube is
/// the edge `x = y = 0` (Edge), the corner at the origin (Corner), or both
/// (CornerEdge). CornerAllEdges refines the origin corner together with all
/// three incident edges; Fichera composes seven unit cubes around the
/// reentrant corner of `(-1,1)^3 \ [0,1)^3` and refines the corner and its
/// three reentrant edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchKind {
    Uniform,
    Edge,
    Corner,
    CornerEdge,
    CornerAllEdges,
    Fichera,
}

impl PatchKind {
    pub const ALL: [PatchKind; 6] = [
        PatchKind::Uniform,
        PatchKind::Edge,
        PatchKind::Corner,
        PatchKind::CornerEdge,
        PatchKind::CornerAllEdges,
        PatchKind::Fichera,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PatchKind::Uniform => "uniform",
            PatchKind::Edge => "edge",
            PatchKind::Corner => "corner",
            PatchKind::CornerEdge => "corner-edge",
            PatchKind::CornerAllEdges => "corner-all-edges",
            PatchKind::Fichera => "fichera",
        }
    }
}

impl std::fmt::Display for PatchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PatchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "uniform" => Ok(PatchKind::Uniform),
            "edge" => Ok(PatchKind::Edge),
            "corner" => Ok(PatchKind::Corner),
            "corner-edge" => Ok(PatchKind::CornerEdge),
            "corner-all-edges" => Ok(PatchKind::CornerAllEdges),
            "fichera" => Ok(PatchKind::Fichera),
            other => Err(Error::UnknownPatch(other.to_string())),
        }
    }
}

/// A sigma-geometric mesh: elements plus refinement provenance.
#[derive(Clone, Debug)]
pub struct GeometricMesh {
    pub elements: Vec<Box3>,
    pub sigma: f64,
    pub levels: usize,
    pub kind: PatchKind,
    /// Macro boxes whose union is the domain (one unit cube, or seven for
    /// the Fichera composition).
    pub domain: Vec<Box3>,
}

impl GeometricMesh {
    /// Wraps a hand-built element list; used by tests and the reference
    /// evaluator. The domain is taken to be the elements themselves.
    pub fn from_elements(elements: Vec<Box3>) -> Self {
        GeometricMesh {
            domain: elements.clone(),
            elements,
            sigma: 0.5,
            levels: 0,
            kind: PatchKind::Uniform,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn volume(&self) -> f64 {
        self.elements.iter().map(Box3::volume).sum()
    }

    pub fn domain_volume(&self) -> f64 {
        self.domain.iter().map(Box3::volume).sum()
    }

    /// Length scale for coordinate tolerances.
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for b in &self.domain {
            for d in 0..3 {
                lo[d] = lo[d].min(b.lo[d]);
                hi[d] = hi[d].max(b.hi[d]);
            }
        }
        (0..3).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "sigma": self.sigma,
            "levels": self.levels,
            "elements": self.elements,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct MeshFile {
            kind: PatchKind,
            sigma: f64,
            levels: usize,
            elements: Vec<Box3>,
        }
        let file: MeshFile = serde_json::from_value(v.clone())?;
        let domain = match file.kind {
            PatchKind::Fichera => fichera_macro_boxes(),
            _ => vec![Box3::new([0.0; 3], [1.0; 3])?],
        };
        Ok(GeometricMesh {
            elements: file.elements,
            sigma: file.sigma,
            levels: file.levels,
            kind: file.kind,
            domain,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    Boundary,
}

/// A smallest face of the mesh.
///
/// The plane normal is the coordinate axis `axis`; `span` holds the 2-D
/// extents along the two tangential axes in ascending axis order. For an
/// interior face, `sharp` is the element on the negative side of the
/// normal axis and `flat` the one on the positive side, so the fixed
/// convention is `n_sharp = +e_axis`. For a boundary face, `sharp` is the
/// single owner and `normal_sign * e_axis` the outward normal.
#[derive(Clone, Copy, Debug)]
pub struct Face {
    pub axis: usize,
    pub coord: f64,
    pub span: [[f64; 2]; 2],
    pub sharp: usize,
    pub flat: Option<usize>,
    pub kind: FaceKind,
    /// min perpendicular diameter of the owners (interior), or the single
    /// owner's extent along `axis` (boundary)
    pub hperp: f64,
    pub area: f64,
    pub normal_sign: f64,
}

impl Face {
    /// The two tangential axes of a plane with normal `axis`, ascending.
    pub fn tangential_axes(axis: usize) -> [usize; 2] {
        match axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }
}

#[derive(Clone, Debug)]
pub struct FaceSet {
    pub faces: Vec<Face>,
}

impl FaceSet {
    pub fn n_interior(&self) -> usize {
        self.faces.iter().filter(|f| f.kind == FaceKind::Interior).count()
    }

    pub fn n_boundary(&self) -> usize {
        self.faces.iter().filter(|f| f.kind == FaceKind::Boundary).count()
    }

    pub fn boundary_area(&self) -> f64 {
        self.faces
            .iter()
            .filter(|f| f.kind == FaceKind::Boundary)
            .map(|f| f.area)
            .sum()
    }
}

/// Builds the canonical patch mesh `kind` with ratio `sigma` and `levels`
/// recursive refinements. `levels = 0` returns the macro mesh.
pub fn build_patch_mesh(kind: PatchKind, sigma: f64, levels: usize) -> Result<GeometricMesh> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    let unit = Box3::new([0.0; 3], [1.0; 3])?;
    let mut elements = Vec::new();
    let domain = match kind {
        PatchKind::Uniform => {
            refine_uniform(unit, levels, &mut elements);
            vec![unit]
        }
        PatchKind::Edge => {
            refine_edge(unit, 2, [0, 0], sigma, levels, &mut elements);
            vec![unit]
        }
        PatchKind::Corner => {
            refine_corner_edges(unit, [0; 3], [false; 3], sigma, levels, &mut elements);
            vec![unit]
        }
        PatchKind::CornerEdge => {
            refine_corner_edges(unit, [0; 3], [false, false, true], sigma, levels, &mut elements);
            vec![unit]
        }
        PatchKind::CornerAllEdges => {
            refine_corner_edges(unit, [0; 3], [true; 3], sigma, levels, &mut elements);
            vec![unit]
        }
        PatchKind::Fichera => {
            let boxes = fichera_macro_boxes();
            for (bits, b) in fichera_bit_patterns().into_iter().zip(boxes.iter()) {
                // Refine toward the reentrant corner at the origin; the
                // reentrant edges are the positive coordinate half-axes, so
                // a macro cube carries the edge along axis d exactly when
                // its d-range is [0,1].
                let corner = [0, 1, 2].map(|d| 1 - bits[d]);
                let edges = [0, 1, 2].map(|d| bits[d] == 1);
                refine_corner_edges(*b, corner, edges, sigma, levels, &mut elements);
            }
            boxes
        }
    };
    Ok(GeometricMesh { elements, sigma, levels, kind, domain })
}

fn fichera_bit_patterns() -> Vec<[u8; 3]> {
    (0u8..7).map(|b| [b & 1, (b >> 1) & 1, (b >> 2) & 1]).collect()
}

fn fichera_macro_boxes() -> Vec<Box3> {
    fichera_bit_patterns()
        .into_iter()
        .map(|bits| {
            let lo = [0, 1, 2].map(|d| bits[d] as f64 - 1.0);
            let hi = [0, 1, 2].map(|d| bits[d] as f64);
            Box3 { lo, hi }
        })
        .collect()
}

fn refine_uniform(b: Box3, levels: usize, out: &mut Vec<Box3>) {
    if levels == 0 {
        out.push(b);
        return;
    }
    let mid = [0, 1, 2].map(|d| b.lo[d] + 0.5 * b.extent(d));
    for o in 0..8usize {
        let mut lo = b.lo;
        let mut hi = mid;
        for d in 0..3 {
            if o >> d & 1 == 1 {
                lo[d] = mid[d];
                hi[d] = b.hi[d];
            }
        }
        refine_uniform(Box3 { lo, hi }, levels - 1, out);
    }
}

/// Splits the axis interval at ratio `sigma` toward the selected corner
/// (`sel = 0`: lo end, `sel = 1`: hi end). Returns (near, far) intervals.
fn split_interval(lo: f64, hi: f64, sel: u8, sigma: f64) -> ((f64, f64), (f64, f64)) {
    if sel == 0 {
        let m = lo + sigma * (hi - lo);
        ((lo, m), (m, hi))
    } else {
        let m = hi - sigma * (hi - lo);
        ((m, hi), (lo, m))
    }
}

/// Geometric refinement of `b` toward the edge running along `axis` at the
/// transverse corner selected by `corner`: the 2-D cross-section cell
/// nearest the edge splits into 4 at ratio `sigma`, extruded along `axis`.
fn refine_edge(
    b: Box3,
    axis: usize,
    corner: [u8; 2],
    sigma: f64,
    levels: usize,
    out: &mut Vec<Box3>,
) {
    if levels == 0 {
        out.push(b);
        return;
    }
    let t = Face::tangential_axes(axis);
    let mut cells = [b; 4];
    for (q, cell) in cells.iter_mut().enumerate() {
        let mut lo = b.lo;
        let mut hi = b.hi;
        for (i, &d) in t.iter().enumerate() {
            let (near, far) = split_interval(b.lo[d], b.hi[d], corner[i], sigma);
            let (l, h) = if q >> i & 1 == 1 { far } else { near };
            lo[d] = l;
            hi[d] = h;
        }
        *cell = Box3 { lo, hi };
    }
    refine_edge(cells[0], axis, corner, sigma, levels - 1, out);
    out.extend_from_slice(&cells[1..]);
}

/// Geometric refinement of `b` toward the corner selected by `corner`
/// (per-axis: 0 = lo end, 1 = hi end) and toward the incident edges along
/// the axes flagged in `edges`. Splits into 8 at ratio `sigma`; the corner
/// octant recurses, each flagged edge octant gets an edge refinement, the
/// remaining octants stay.
fn refine_corner_edges(
    b: Box3,
    corner: [u8; 3],
    edges: [bool; 3],
    sigma: f64,
    levels: usize,
    out: &mut Vec<Box3>,
) {
    if levels == 0 {
        out.push(b);
        return;
    }
    for o in 0..8usize {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for d in 0..3 {
            let (near, far) = split_interval(b.lo[d], b.hi[d], corner[d], sigma);
            let (l, h) = if o >> d & 1 == 1 { far } else { near };
            lo[d] = l;
            hi[d] = h;
        }
        let obox = Box3 { lo, hi };
        if o == 0 {
            refine_corner_edges(obox, corner, edges, sigma, levels - 1, out);
        } else if o.count_ones() == 1 {
            let d = o.trailing_zeros() as usize;
            if edges[d] {
                let t = Face::tangential_axes(d);
                let tc = [corner[t[0]], corner[t[1]]];
                refine_edge(obox, d, tc, sigma, levels - 1, out);
            } else {
                out.push(obox);
            }
        } else {
            out.push(obox);
        }
    }
}

/// Extent of `element` in the direction perpendicular to `face`.
pub fn perp_diameter(element: &Box3, face: &Face) -> Result<f64> {
    let d = face.axis;
    let tol = 1e-12 * (1.0 + element.extent(d).abs());
    let on_lo = (face.coord - element.lo[d]).abs() <= tol;
    let on_hi = (face.coord - element.hi[d]).abs() <= tol;
    if !(on_lo || on_hi) {
        return Err(Error::FaceNotOnElement);
    }
    let t = Face::tangential_axes(d);
    for (i, &td) in t.iter().enumerate() {
        if face.span[i][0] < element.lo[td] - tol || face.span[i][1] > element.hi[td] + tol {
            return Err(Error::FaceNotOnElement);
        }
    }
    Ok(element.extent(d))
}

/// One facet of an element: plane `axis = coord`, tangential rectangle
/// `span`, with `outward > 0` iff the element lies on the negative side.
#[derive(Clone, Copy, Debug)]
struct Facet {
    elem: usize,
    axis: usize,
    coord: f64,
    span: [[f64; 2]; 2],
    outward_pos: bool,
}

fn element_facets(elements: &[Box3]) -> Vec<Facet> {
    let mut out = Vec::with_capacity(6 * elements.len());
    for (e, b) in elements.iter().enumerate() {
        for axis in 0..3 {
            let t = Face::tangential_axes(axis);
            let span = [[b.lo[t[0]], b.hi[t[0]]], [b.lo[t[1]], b.hi[t[1]]]];
            out.push(Facet { elem: e, axis, coord: b.lo[axis], span, outward_pos: false });
            out.push(Facet { elem: e, axis, coord: b.hi[axis], span, outward_pos: true });
        }
    }
    out
}

fn span_area(span: &[[f64; 2]; 2]) -> f64 {
    (span[0][1] - span[0][0]) * (span[1][1] - span[1][0])
}

fn span_intersection(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2], tol: f64) -> Option<[[f64; 2]; 2]> {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        let lo = a[i][0].max(b[i][0]);
        let hi = a[i][1].min(b[i][1]);
        if hi - lo <= tol {
            return None;
        }
        out[i] = [lo, hi];
    }
    Some(out)
}

/// Extracts the set of smallest faces with hanging-node resolution.
///
/// Facets are grouped by plane; within a plane every (hi-side, lo-side)
/// facet pair with positive-area intersection yields an interior face.
/// Facets with no coverage become boundary faces; partial coverage signals
/// a construction bug. Deterministic: planes are visited in ascending
/// (axis, coordinate) order and facets in element order.
pub fn extract_faces(mesh: &GeometricMesh) -> Result<FaceSet> {
    let tol = 1e-12 * mesh.diameter().max(1.0);
    let facets = element_facets(&mesh.elements);

    // Cluster plane coordinates per axis.
    let mut faces = Vec::new();
    let mut covered = vec![0.0f64; facets.len()];
    let mut interior_idx: Vec<Vec<usize>> = vec![Vec::new(); facets.len()];
    for axis in 0..3 {
        let mut idx: Vec<usize> = (0..facets.len()).filter(|&i| facets[i].axis == axis).collect();
        idx.sort_by(|&a, &b| {
            facets[a]
                .coord
                .partial_cmp(&facets[b].coord)
                .unwrap()
                .then(facets[a].elem.cmp(&facets[b].elem))
        });
        let mut start = 0;
        while start < idx.len() {
            let coord = facets[idx[start]].coord;
            let mut end = start;
            while end < idx.len() && facets[idx[end]].coord - coord <= tol {
                end += 1;
            }
            let plane = &idx[start..end];
            let pos: Vec<usize> = plane.iter().copied().filter(|&i| facets[i].outward_pos).collect();
            let neg: Vec<usize> =
                plane.iter().copied().filter(|&i| !facets[i].outward_pos).collect();
            for &p in &pos {
                for &q in &neg {
                    if let Some(span) = span_intersection(&facets[p].span, &facets[q].span, tol) {
                        let area = span_area(&span);
                        let hp = mesh.elements[facets[p].elem].extent(axis);
                        let hq = mesh.elements[facets[q].elem].extent(axis);
                        faces.push(Face {
                            axis,
                            coord,
                            span,
                            sharp: facets[p].elem,
                            flat: Some(facets[q].elem),
                            kind: FaceKind::Interior,
                            hperp: hp.min(hq),
                            area,
                            normal_sign: 1.0,
                        });
                        covered[p] += area;
                        covered[q] += area;
                        interior_idx[p].push(faces.len() - 1);
                        interior_idx[q].push(faces.len() - 1);
                    }
                }
            }
            start = end;
        }
    }

    // Uncovered facets are boundary faces; partial coverage is an error.
    for (i, f) in facets.iter().enumerate() {
        let area = span_area(&f.span);
        let area_tol = tol * (1.0 + area);
        if covered[i] <= area_tol {
            faces.push(Face {
                axis: f.axis,
                coord: f.coord,
                span: f.span,
                sharp: f.elem,
                flat: None,
                kind: FaceKind::Boundary,
                hperp: mesh.elements[f.elem].extent(f.axis),
                area,
                normal_sign: if f.outward_pos { 1.0 } else { -1.0 },
            });
        } else if (covered[i] - area).abs() > area_tol {
            return Err(Error::FacetCoverage {
                axis: f.axis,
                coord: f.coord,
                covered: covered[i],
                area,
            });
        }
    }

    // Canonical order: interior faces first (plane-sweep order), then
    // boundary faces in element order; stable under reruns.
    Ok(FaceSet { faces })
}
