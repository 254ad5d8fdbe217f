//! Classification of mesh entities against a polygonal interface, clipping of
//! cut triangles and the resulting cut topology.
//!
//! The interface is an oriented polyline: subdomain 1 lies on its left, the
//! unit normal `n_Gamma` points right (from subdomain 1 into subdomain 2).
//! Inside every cut triangle the interface must be a single straight chord;
//! cuts through (or within tolerance of) a mesh vertex are rejected rather
//! than perturbed.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};
use crate::geo;
use crate::mesh::Mesh;
use crate::quadrature::{polygon_rule, segment_rule, triangle_rule, QuadratureRule};

/// Relative geometric tolerance: a point is "on" the interface iff its
/// distance is below this factor times the domain diameter.
pub const GEOMETRIC_TOL: f64 = 1e-12;

/// One of the two subdomains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::One, Phase::Two];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Phase::One => 0,
            Phase::Two => 1,
        }
    }

    #[inline]
    pub fn other(self) -> Phase {
        match self {
            Phase::One => Phase::Two,
            Phase::Two => Phase::One,
        }
    }

    pub fn from_index(i: usize) -> Phase {
        match i {
            0 => Phase::One,
            1 => Phase::Two,
            _ => panic!("phase index {i} out of range"),
        }
    }
}

/// Weights and means attached to a diffusivity pair: `w1 = k2/(k1+k2)`,
/// `w2 = k1/(k1+k2)`, harmonic mean `k_gamma = k1 k2/(k1+k2)`.
#[derive(Clone, Copy, Debug)]
pub struct InterfaceWeights {
    pub w: [f64; 2],
    pub k_gamma: f64,
    pub k_max: f64,
}

pub fn interface_weights(k1: f64, k2: f64) -> Result<InterfaceWeights> {
    if k1 <= 0.0 || k2 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "diffusivities must be positive, got k1={k1}, k2={k2}"
        )));
    }
    let sum = k1 + k2;
    Ok(InterfaceWeights {
        w: [k2 / sum, k1 / sum],
        k_gamma: k1 * k2 / sum,
        k_max: k1.max(k2),
    })
}

/// Oriented interface polyline. Subdomain 1 is on the left of the directed
/// polyline; `n_Gamma` points right.
#[derive(Clone, Debug)]
pub struct InterfacePolyline {
    vertices: Vec<Point2<f64>>,
}

impl InterfacePolyline {
    pub fn new(vertices: Vec<Point2<f64>>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidArgument(
                "interface needs at least two vertices".into(),
            ));
        }
        for w in vertices.windows(2) {
            if (w[1] - w[0]).norm() == 0.0 {
                return Err(Error::InvalidArgument(
                    "interface has a zero-length segment".into(),
                ));
            }
        }
        let poly = InterfacePolyline { vertices };
        if !poly.is_simple() {
            return Err(Error::InvalidArgument(
                "interface polyline is self-intersecting".into(),
            ));
        }
        Ok(poly)
    }

    /// Straight interface through `a` and `b`.
    pub fn line(a: Point2<f64>, b: Point2<f64>) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn n_segments(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn segment(&self, s: usize) -> [Point2<f64>; 2] {
        [self.vertices[s], self.vertices[s + 1]]
    }

    fn is_simple(&self) -> bool {
        let n = self.n_segments();
        for i in 0..n {
            for j in (i + 2)..n {
                // Adjacent segments share a vertex by construction; a closed
                // polyline may also share first/last.
                if i == 0 && j == n - 1 && self.is_closed() {
                    continue;
                }
                let [a, b] = self.segment(i);
                let [c, d] = self.segment(j);
                if segments_properly_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_closed(&self) -> bool {
        (self.vertices[0] - self.vertices[self.vertices.len() - 1]).norm() == 0.0
    }

    /// Distance from a point to the polyline.
    pub fn distance(&self, p: Point2<f64>) -> f64 {
        (0..self.n_segments())
            .map(|s| {
                let [a, b] = self.segment(s);
                point_segment_distance(p, a, b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Signed distance: negative in subdomain 1 (left of the polyline),
    /// positive in subdomain 2.
    pub fn signed_distance(&self, p: Point2<f64>) -> f64 {
        let mut best = f64::INFINITY;
        let mut winner = 0usize;
        let mut at_vertex = false;
        for s in 0..self.n_segments() {
            let [a, b] = self.segment(s);
            let (d, interior) = point_segment_distance_classified(p, a, b);
            if d < best - 1e-300 || (d <= best * (1.0 + 1e-12) && interior && at_vertex) {
                best = d;
                winner = s;
                at_vertex = !interior;
            }
        }
        let [a, b] = self.segment(winner);
        let side = geo::cross(b - a, p - a);
        if side >= 0.0 {
            // Left of the directed segment: subdomain 1.
            -best
        } else {
            best
        }
    }

    pub fn side(&self, p: Point2<f64>) -> Phase {
        if self.signed_distance(p) < 0.0 {
            Phase::One
        } else {
            Phase::Two
        }
    }

    /// Parse the plain-text format: `interface <n>` followed by `n` lines `x y`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let kw = tokens
            .next()
            .ok_or_else(|| Error::Parse("empty interface file".into()))?;
        if kw != "interface" {
            return Err(Error::Parse(format!("expected 'interface', got '{kw}'")));
        }
        let n: usize = tokens
            .next()
            .ok_or_else(|| Error::Parse("missing vertex count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad vertex count: {e}")))?;
        let mut vertices = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = tokens
                .next()
                .ok_or_else(|| Error::Parse("missing coordinate".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad coordinate: {e}")))?;
            let y: f64 = tokens
                .next()
                .ok_or_else(|| Error::Parse("missing coordinate".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad coordinate: {e}")))?;
            vertices.push(Point2::new(x, y));
        }
        Self::new(vertices)
    }

    pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "interface {}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(out, "{:.17} {:.17}", p.x, p.y);
        }
        out
    }
}

fn point_segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    point_segment_distance_classified(p, a, b).0
}

/// Distance plus a flag telling whether the projection falls in the segment
/// interior (used to resolve sign ties at polyline kinks).
fn point_segment_distance_classified(
    p: Point2<f64>,
    a: Point2<f64>,
    b: Point2<f64>,
) -> (f64, bool) {
    let d = b - a;
    let t = (p - a).dot(&d) / d.norm_squared();
    if t <= 0.0 {
        ((p - a).norm(), false)
    } else if t >= 1.0 {
        ((p - b).norm(), false)
    } else {
        let proj = a + t * d;
        ((p - proj).norm(), true)
    }
}

fn segments_properly_intersect(
    a: Point2<f64>,
    b: Point2<f64>,
    c: Point2<f64>,
    d: Point2<f64>,
) -> bool {
    let d1 = geo::cross(d - c, a - c);
    let d2 = geo::cross(d - c, b - c);
    let d3 = geo::cross(b - a, c - a);
    let d4 = geo::cross(b - a, d - a);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Geometry of one cut triangle: the two clipped polygons, the interface
/// chord `Gamma_T` and the per-edge fragments.
#[derive(Clone, Debug)]
pub struct CutCell {
    /// Clipped polygons `T cap Omega^i`, counter-clockwise, indexed by phase.
    pub poly: [Vec<Point2<f64>>; 2],
    /// Endpoints of `Gamma_T`, ordered along the interface direction.
    pub segment: [Point2<f64>; 2],
    /// Unit normal of `Gamma_T` pointing from subdomain 1 into subdomain 2.
    pub normal: Vector2<f64>,
    /// Per local edge (edge opposite local vertex `j`): the piece of that edge
    /// in each phase. An uncut edge has one entry only.
    pub fragments: [[Option<[Point2<f64>; 2]>; 2]; 3],
}

impl CutCell {
    pub fn area(&self, phase: Phase) -> f64 {
        geo::polygon_signed_area(&self.poly[phase.index()]).abs()
    }

    pub fn segment_length(&self) -> f64 {
        (self.segment[1] - self.segment[0]).norm()
    }

    /// Complement region `T_C^i = T \ T^i`, i.e. the other phase's polygon.
    pub fn complement(&self, phase: Phase) -> &[Point2<f64>] {
        &self.poly[phase.other().index()]
    }

    pub fn fragment_length(&self, local_edge: usize, phase: Phase) -> f64 {
        self.fragments[local_edge][phase.index()]
            .map(|[a, b]| (b - a).norm())
            .unwrap_or(0.0)
    }
}

/// Cut a single triangle with the interface. The triangle must be crossed by
/// exactly one straight chord entering and leaving through two distinct edges.
pub fn clip_triangle(tri: &[Point2<f64>; 3], interface: &InterfacePolyline) -> Result<CutCell> {
    let tol = GEOMETRIC_TOL * geo::triangle_diameter(tri);
    for (v, p) in tri.iter().enumerate() {
        if interface.distance(*p) < tol {
            return Err(Error::DegenerateCut(format!(
                "triangle vertex {v} lies on the interface"
            )));
        }
    }
    // Collect boundary crossings per local edge.
    let mut crossings: Vec<(usize, Point2<f64>, usize)> = Vec::new(); // (local edge, point, segment id)
    for j in 0..3 {
        let p = tri[(j + 1) % 3];
        let q = tri[(j + 2) % 3];
        if let Some((point, seg)) = edge_polyline_crossing(p, q, interface, tol)? {
            crossings.push((j, point, seg));
        }
    }
    match crossings.len() {
        2 => {}
        0 => {
            return Err(Error::DegenerateCut(
                "triangle is not intersected by the interface".into(),
            ))
        }
        n => {
            return Err(Error::UnsupportedGeometry(format!(
                "interface crosses triangle boundary {n} times; Gamma_T is not a single segment"
            )))
        }
    }
    let (e1, x1, s1) = crossings[0];
    let (e2, x2, s2) = crossings[1];
    if e1 == e2 {
        return Err(Error::UnsupportedGeometry(
            "interface enters and leaves through the same edge".into(),
        ));
    }
    // A kink strictly inside the triangle would make Gamma_T a broken line.
    if s1 != s2 {
        let lo = s1.min(s2);
        let hi = s1.max(s2);
        for v in (lo + 1)..=hi {
            let kink = interface.vertices()[v];
            if point_strictly_inside_triangle(kink, tri, tol) {
                return Err(Error::UnsupportedGeometry(
                    "interface kink strictly inside a triangle".into(),
                ));
            }
        }
    }
    // Orient the chord along the interface direction.
    let [a, b] = interface.segment(s1);
    let dir = b - a;
    let (g0, g1) = if (x2 - x1).dot(&dir) >= 0.0 {
        (x1, x2)
    } else {
        (x2, x1)
    };
    let chord = g1 - g0;
    let normal = geo::rotate_cw(chord.normalize());

    // Side of each vertex relative to the chord: left = phase 1.
    let side = |p: Point2<f64>| -> usize {
        if geo::cross(chord, p - g0) > 0.0 {
            0
        } else {
            1
        }
    };

    // Walk the triangle boundary, splitting at the crossings.
    let mut poly: [Vec<Point2<f64>>; 2] = [Vec::new(), Vec::new()];
    let crossing_on = |local_edge: usize| -> Option<Point2<f64>> {
        if e1 == local_edge {
            Some(x1)
        } else if e2 == local_edge {
            Some(x2)
        } else {
            None
        }
    };
    for v in 0..3 {
        poly[side(tri[v])].push(tri[v]);
        // The edge leaving vertex v toward v+1 is the edge opposite vertex v+2.
        let departing = (v + 2) % 3;
        if let Some(x) = crossing_on(departing) {
            poly[0].push(x);
            poly[1].push(x);
        }
    }
    if poly[0].len() < 3 || poly[1].len() < 3 || poly[0].len() > 4 || poly[1].len() > 4 {
        return Err(Error::UnsupportedGeometry(format!(
            "clipped polygons have {} and {} vertices",
            poly[0].len(),
            poly[1].len()
        )));
    }

    // Edge fragments.
    let mut fragments: [[Option<[Point2<f64>; 2]>; 2]; 3] = Default::default();
    for j in 0..3 {
        let p = tri[(j + 1) % 3];
        let q = tri[(j + 2) % 3];
        if let Some(x) = crossing_on(j) {
            fragments[j][side(p)] = Some([p, x]);
            fragments[j][side(q)] = Some([x, q]);
        } else {
            fragments[j][side(p)] = Some([p, q]);
        }
    }

    let cell = CutCell {
        poly,
        segment: [g0, g1],
        normal,
        fragments,
    };
    let total = geo::triangle_signed_area(tri).abs();
    let sum = cell.area(Phase::One) + cell.area(Phase::Two);
    if (sum - total).abs() > 1e-10 * total {
        return Err(Error::UnsupportedGeometry(format!(
            "clipped areas {sum:.17} do not add up to the triangle area {total:.17}"
        )));
    }
    Ok(cell)
}

/// Crossing of a mesh edge `p -> q` with the polyline, if any. Errors when the
/// crossing is within tolerance of an edge endpoint or when the edge is
/// crossed more than once.
fn edge_polyline_crossing(
    p: Point2<f64>,
    q: Point2<f64>,
    interface: &InterfacePolyline,
    tol: f64,
) -> Result<Option<(Point2<f64>, usize)>> {
    let d1 = q - p;
    let len1 = d1.norm();
    let mut hit: Option<(Point2<f64>, usize)> = None;
    for s in 0..interface.n_segments() {
        let [a, b] = interface.segment(s);
        let d2 = b - a;
        let denom = geo::cross(d1, d2);
        if denom.abs() <= 1e-14 * len1 * d2.norm() {
            // Parallel. Collinear overlap means an edge sits on the interface.
            if point_segment_distance(p, a, b) < tol && point_segment_distance(q, a, b) < tol {
                return Err(Error::DegenerateCut(
                    "mesh edge is collinear with the interface".into(),
                ));
            }
            continue;
        }
        let t = geo::cross(a - p, d2) / denom;
        let u = geo::cross(a - p, d1) / denom;
        let tol_t = tol / len1;
        let tol_u = tol / d2.norm();
        if u < -tol_u || u > 1.0 + tol_u {
            continue; // The infinite line crosses, the segment does not.
        }
        if t < -tol_t || t > 1.0 + tol_t {
            continue;
        }
        if t < tol_t || t > 1.0 - tol_t {
            return Err(Error::DegenerateCut(
                "interface passes through a mesh vertex".into(),
            ));
        }
        let x = p + t * d1;
        match hit {
            None => hit = Some((x, s)),
            Some((prev, _)) => {
                if (prev - x).norm() > tol {
                    return Err(Error::UnsupportedGeometry(
                        "mesh edge crossed by the interface more than once".into(),
                    ));
                }
                // Same geometric crossing reported by two adjacent polyline
                // segments (kink exactly on the edge); keep the first.
            }
        }
    }
    Ok(hit)
}

fn point_strictly_inside_triangle(p: Point2<f64>, tri: &[Point2<f64>; 3], tol: f64) -> bool {
    for j in 0..3 {
        let a = tri[j];
        let b = tri[(j + 1) % 3];
        let e = b - a;
        // Signed distance of p to edge line (positive inside for CCW triangles).
        let s = geo::cross(e, p - a) / e.norm();
        if s <= tol {
            return false;
        }
    }
    true
}

/// Cut-edge bookkeeping: crossing point and the two pieces, indexed by phase.
#[derive(Clone, Debug)]
pub struct EdgeCut {
    pub point: Point2<f64>,
    /// Piece of the edge in each phase, following the global edge orientation.
    pub piece: [[Point2<f64>; 2]; 2],
    pub len: [f64; 2],
}

/// Classified mesh: subdomain membership of triangles, edges and nodes plus
/// clipped geometry for every cut cell. Owns the mesh and the interface and is
/// immutable after construction.
#[derive(Clone, Debug)]
pub struct CutTopology {
    mesh: Mesh,
    interface: InterfacePolyline,
    tol: f64,
    tri_in: [Vec<bool>; 2],
    edge_in: [Vec<bool>; 2],
    ghost: [Vec<bool>; 2],
    node_in: [Vec<bool>; 2],
    node_interior: [Vec<bool>; 2],
    cut_index: Vec<Option<usize>>,
    cut_cells: Vec<CutCell>,
    cut_tri_ids: Vec<usize>,
    edge_cuts: Vec<Option<EdgeCut>>,
    tris_of: [Vec<usize>; 2],
    edges_of: [Vec<usize>; 2],
    cut_edge_ids: Vec<usize>,
    ghost_edges_of: [Vec<usize>; 2],
}

impl CutTopology {
    /// Classify every mesh entity against the interface.
    pub fn classify(mesh: Mesh, interface: InterfacePolyline) -> Result<Self> {
        let tol = GEOMETRIC_TOL * mesh.domain_diameter();

        // Standing assumptions: no mesh node on the interface, no interface
        // vertex strictly inside a cell, endpoints not inside the domain.
        for n in 0..mesh.n_nodes() {
            if interface.distance(mesh.node(n)) < tol {
                return Err(Error::DegenerateCut(format!(
                    "mesh node {n} lies on the interface"
                )));
            }
        }
        let closed = interface.is_closed();
        for (v, p) in interface.vertices().iter().enumerate() {
            let endpoint = !closed && (v == 0 || v == interface.vertices().len() - 1);
            for t in 0..mesh.n_triangles() {
                if point_strictly_inside_triangle(*p, &mesh.triangle_points(t), tol) {
                    return Err(Error::UnsupportedGeometry(if endpoint {
                        format!("interface endpoint {v} terminates inside cell {t}")
                    } else {
                        format!("interface kink {v} strictly inside cell {t}")
                    }));
                }
            }
        }

        // Edge crossings, computed once per edge in global orientation.
        let mut edge_cuts: Vec<Option<EdgeCut>> = Vec::with_capacity(mesh.n_edges());
        for e in 0..mesh.n_edges() {
            let [na, nb] = mesh.edge(e).nodes;
            let (pa, pb) = (mesh.node(na), mesh.node(nb));
            match edge_polyline_crossing(pa, pb, &interface, tol)? {
                None => edge_cuts.push(None),
                Some((x, _)) => {
                    let side_a = interface.side(pa).index();
                    let mut piece = [[x, x]; 2];
                    piece[side_a] = [pa, x];
                    piece[1 - side_a] = [x, pb];
                    let mut len = [0.0; 2];
                    len[side_a] = (x - pa).norm();
                    len[1 - side_a] = (pb - x).norm();
                    edge_cuts.push(Some(EdgeCut { point: x, piece, len }));
                }
            }
        }

        // Triangle classification.
        let n_tris = mesh.n_triangles();
        let mut tri_in = [vec![false; n_tris], vec![false; n_tris]];
        let mut cut_index = vec![None; n_tris];
        let mut cut_cells = Vec::new();
        let mut cut_tri_ids = Vec::new();
        for t in 0..n_tris {
            let tri_edges = mesh.triangle_edges(t);
            let n_cut_edges = tri_edges
                .iter()
                .filter(|&&e| edge_cuts[e].is_some())
                .count();
            if n_cut_edges == 0 {
                let pts = mesh.triangle_points(t);
                let centroid = geo::polygon_centroid(&pts);
                tri_in[interface.side(centroid).index()][t] = true;
            } else {
                let cell = clip_triangle(&mesh.triangle_points(t), &interface)?;
                cut_index[t] = Some(cut_cells.len());
                cut_cells.push(cell);
                cut_tri_ids.push(t);
                tri_in[0][t] = true;
                tri_in[1][t] = true;
            }
        }

        // Edge classification by membership of its physical pieces.
        let n_edges = mesh.n_edges();
        let mut edge_in = [vec![false; n_edges], vec![false; n_edges]];
        let mut cut_edge_ids = Vec::new();
        for e in 0..n_edges {
            match &edge_cuts[e] {
                Some(_) => {
                    edge_in[0][e] = true;
                    edge_in[1][e] = true;
                    cut_edge_ids.push(e);
                }
                None => {
                    let [na, nb] = mesh.edge(e).nodes;
                    let mid = Point2::from((mesh.node(na).coords + mesh.node(nb).coords) / 2.0);
                    edge_in[interface.side(mid).index()][e] = true;
                }
            }
        }

        // Ghost-penalty edges: interior edges of F_h^i with a cut neighbour.
        let mut ghost = [vec![false; n_edges], vec![false; n_edges]];
        let mut ghost_edges_of = [Vec::new(), Vec::new()];
        for e in 0..n_edges {
            let edge = mesh.edge(e);
            let Some(tp) = edge.tri_plus else { continue };
            let near_cut = cut_index[edge.tri_minus].is_some() || cut_index[tp].is_some();
            if !near_cut {
                continue;
            }
            for i in 0..2 {
                if edge_in[i][e] {
                    ghost[i][e] = true;
                    ghost_edges_of[i].push(e);
                }
            }
        }

        // Node sets: N_h^i and the nodes interior to Omega_h^i.
        let n_nodes = mesh.n_nodes();
        let mut node_in = [vec![false; n_nodes], vec![false; n_nodes]];
        let mut node_interior = [vec![true; n_nodes], vec![true; n_nodes]];
        for i in 0..2 {
            for n in 0..n_nodes {
                let tris = mesh.node_triangles(n);
                let any = tris.iter().any(|&t| tri_in[i][t]);
                let all = tris.iter().all(|&t| tri_in[i][t]);
                node_in[i][n] = any;
                node_interior[i][n] = any && all && !mesh.is_boundary_node(n);
            }
        }

        let tris_of = [
            (0..n_tris).filter(|&t| tri_in[0][t]).collect(),
            (0..n_tris).filter(|&t| tri_in[1][t]).collect(),
        ];
        let edges_of = [
            (0..n_edges).filter(|&e| edge_in[0][e]).collect(),
            (0..n_edges).filter(|&e| edge_in[1][e]).collect(),
        ];

        Ok(CutTopology {
            mesh,
            interface,
            tol,
            tri_in,
            edge_in,
            ghost,
            node_in,
            node_interior,
            cut_index,
            cut_cells,
            cut_tri_ids,
            edge_cuts,
            tris_of,
            edges_of,
            cut_edge_ids,
            ghost_edges_of,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn interface(&self) -> &InterfacePolyline {
        &self.interface
    }

    pub fn geometric_tol(&self) -> f64 {
        self.tol
    }

    /// `T in T_h^i`.
    pub fn tri_in(&self, phase: Phase, t: usize) -> bool {
        self.tri_in[phase.index()][t]
    }

    /// `F in F_h^i`.
    pub fn edge_in(&self, phase: Phase, e: usize) -> bool {
        self.edge_in[phase.index()][e]
    }

    /// `F in F_g^i` (ghost-penalty set).
    pub fn is_ghost_edge(&self, phase: Phase, e: usize) -> bool {
        self.ghost[phase.index()][e]
    }

    /// `N in N_h^i`.
    pub fn node_in(&self, phase: Phase, n: usize) -> bool {
        self.node_in[phase.index()][n]
    }

    /// Whether node `n` is interior to the fictitious domain `Omega_h^i`.
    pub fn node_interior(&self, phase: Phase, n: usize) -> bool {
        self.node_interior[phase.index()][n]
    }

    pub fn is_cut_tri(&self, t: usize) -> bool {
        self.cut_index[t].is_some()
    }

    pub fn cut_cell(&self, t: usize) -> Option<&CutCell> {
        self.cut_index[t].map(|i| &self.cut_cells[i])
    }

    pub fn is_cut_edge(&self, e: usize) -> bool {
        self.edge_cuts[e].is_some()
    }

    pub fn edge_cut(&self, e: usize) -> Option<&EdgeCut> {
        self.edge_cuts[e].as_ref()
    }

    /// Triangles of `T_h^i`, ascending.
    pub fn tris(&self, phase: Phase) -> &[usize] {
        &self.tris_of[phase.index()]
    }

    /// Cut triangles `T_h^Gamma`, ascending.
    pub fn cut_tris(&self) -> &[usize] {
        &self.cut_tri_ids
    }

    /// Edges of `F_h^i`, ascending.
    pub fn edges(&self, phase: Phase) -> &[usize] {
        &self.edges_of[phase.index()]
    }

    /// Cut edges `F_h^Gamma`, ascending.
    pub fn cut_edges(&self) -> &[usize] {
        &self.cut_edge_ids
    }

    /// Ghost-penalty edges `F_g^i`, ascending.
    pub fn ghost_edges(&self, phase: Phase) -> &[usize] {
        &self.ghost_edges_of[phase.index()]
    }

    /// Area of `T cap Omega^i` (zero if the triangle has no part in the phase).
    pub fn phase_area(&self, phase: Phase, t: usize) -> f64 {
        match self.cut_cell(t) {
            Some(cell) => cell.area(phase),
            None => {
                if self.tri_in(phase, t) {
                    self.mesh.area(t)
                } else {
                    0.0
                }
            }
        }
    }

    /// Quadrature over `T cap Omega^i`, or `None` when the region is empty.
    pub fn phase_region_rule(
        &self,
        phase: Phase,
        t: usize,
        degree: usize,
    ) -> Result<Option<QuadratureRule>> {
        match self.cut_cell(t) {
            Some(cell) => Ok(Some(polygon_rule(&cell.poly[phase.index()], degree)?)),
            None => {
                if self.tri_in(phase, t) {
                    Ok(Some(triangle_rule(&self.mesh.triangle_points(t), degree)?))
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// Quadrature along the interface chord of a cut triangle.
    pub fn interface_rule(&self, t: usize, degree: usize) -> Result<Option<QuadratureRule>> {
        match self.cut_cell(t) {
            Some(cell) => Ok(Some(segment_rule(&cell.segment, degree)?)),
            None => Ok(None),
        }
    }

    /// The piece `F cap Omega^i` of an edge: the whole edge when uncut (and in
    /// the phase), the fragment when cut, `None` when empty.
    pub fn edge_phase_piece(&self, phase: Phase, e: usize) -> Option<[Point2<f64>; 2]> {
        match &self.edge_cuts[e] {
            Some(cut) => Some(cut.piece[phase.index()]),
            None => {
                if self.edge_in(phase, e) {
                    let [na, nb] = self.mesh.edge(e).nodes;
                    Some([self.mesh.node(na), self.mesh.node(nb)])
                } else {
                    None
                }
            }
        }
    }

    /// Length of `F cap Omega^i`.
    pub fn edge_phase_len(&self, phase: Phase, e: usize) -> f64 {
        match &self.edge_cuts[e] {
            Some(cut) => cut.len[phase.index()],
            None => {
                if self.edge_in(phase, e) {
                    self.mesh.h_f(e)
                } else {
                    0.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vertical_line(x: f64) -> InterfacePolyline {
        InterfacePolyline::line(Point2::new(x, -0.25), Point2::new(x, 1.25)).unwrap()
    }

    #[test]
    fn weights_match_formulas() {
        let w = interface_weights(1.0, 3.0).unwrap();
        assert_relative_eq!(w.w[0], 0.75);
        assert_relative_eq!(w.w[1], 0.25);
        assert_relative_eq!(w.k_gamma, 0.75);
        assert_relative_eq!(w.k_max, 3.0);

        let w = interface_weights(7.0, 7.0).unwrap();
        assert_relative_eq!(w.w[0], 0.5);
        assert_relative_eq!(w.w[1], 0.5);
        assert_relative_eq!(w.k_gamma, 3.5);

        let w = interface_weights(1.0, 1e6).unwrap();
        assert!(w.k_gamma < 1.0);
        assert!(w.w[0] > 0.999_99);

        assert!(interface_weights(-1.0, 2.0).is_err());
    }

    #[test]
    fn clip_reference_triangle_vertical() {
        let tri = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        let cell = clip_triangle(&tri, &vertical_line(0.4)).unwrap();
        // Left of the upward line is x < 0.4, i.e. phase 1.
        assert_relative_eq!(cell.area(Phase::One), 0.32, epsilon = 1e-14);
        assert_relative_eq!(cell.area(Phase::Two), 0.18, epsilon = 1e-14);
        assert_relative_eq!(cell.segment_length(), 0.6, epsilon = 1e-14);
        assert_relative_eq!(cell.normal.x, 1.0, epsilon = 1e-14);
        assert_relative_eq!(cell.normal.y, 0.0, epsilon = 1e-14);
        // Bottom edge is opposite vertex 2; it runs (0,1)->(0,0)... local edge
        // indexing: edge j is opposite vertex j, so the bottom edge (0,0)-(1,0)
        // is opposite vertex 2, index 2.
        assert_relative_eq!(cell.fragment_length(2, Phase::One), 0.4, epsilon = 1e-14);
        assert_relative_eq!(cell.fragment_length(2, Phase::Two), 0.6, epsilon = 1e-14);
    }

    #[test]
    fn clip_uncut_triangle_is_an_error() {
        let tri = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        let err = clip_triangle(&tri, &vertical_line(2.5)).unwrap_err();
        assert!(matches!(
            err,
            Error::DegenerateCut(_) | Error::UnsupportedGeometry(_)
        ));
    }

    #[test]
    fn clip_through_vertex_is_degenerate() {
        let tri = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        let err = clip_triangle(&tri, &vertical_line(0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateCut(_)));
    }

    #[test]
    fn classify_interface_outside_hull() {
        let mesh = Mesh::structured(3, 3, Rect::unit_square()).unwrap();
        let topo = CutTopology::classify(mesh, vertical_line(4.0)).unwrap();
        assert!(topo.cut_tris().is_empty());
        assert_eq!(topo.tris(Phase::One).len(), 18);
        assert!(topo.tris(Phase::Two).is_empty());
    }

    #[test]
    fn classify_vertical_sqrt2_over_2() {
        // x = sqrt(2)/2 ~ 0.7071 crosses the column 0.5 < x < 1 on a 2x2 grid:
        // 2 rows x 2 triangles per row.
        let mesh = Mesh::structured(2, 2, Rect::unit_square()).unwrap();
        let alpha = 2.0_f64.sqrt() / 2.0;
        let topo = CutTopology::classify(mesh, vertical_line(alpha)).unwrap();
        assert_eq!(topo.cut_tris().len(), 4);
        for &t in topo.cut_tris() {
            assert!(topo.tri_in(Phase::One, t) && topo.tri_in(Phase::Two, t));
            let cell = topo.cut_cell(t).unwrap();
            let total = topo.mesh().area(t);
            assert_relative_eq!(
                cell.area(Phase::One) + cell.area(Phase::Two),
                total,
                epsilon = 1e-12 * total
            );
        }
        // Every cut edge lies in both subdomain edge sets.
        for &e in topo.cut_edges() {
            assert!(topo.edge_in(Phase::One, e) && topo.edge_in(Phase::Two, e));
        }
    }

    #[test]
    fn classify_rejects_node_on_interface() {
        let mesh = Mesh::structured(2, 2, Rect::unit_square()).unwrap();
        let err = CutTopology::classify(mesh, vertical_line(0.5)).unwrap_err();
        assert!(matches!(err, Error::DegenerateCut(_)));
    }

    #[test]
    fn classify_is_relabel_invariant() {
        let mesh = Mesh::structured(3, 3, Rect::unit_square()).unwrap();
        let alpha = 2.0_f64.sqrt() / 2.0;
        let topo = CutTopology::classify(mesh.clone(), vertical_line(alpha)).unwrap();

        // Rebuild the mesh with the triangle list reversed.
        let nodes = mesh.nodes().to_vec();
        let mut tris: Vec<[usize; 3]> = (0..mesh.n_triangles()).map(|t| mesh.triangle(t)).collect();
        tris.reverse();
        let n = tris.len();
        let permuted = Mesh::new(nodes, tris).unwrap();
        let topo2 = CutTopology::classify(permuted, vertical_line(alpha)).unwrap();

        for phase in Phase::BOTH {
            let set1: std::collections::BTreeSet<usize> =
                topo.tris(phase).iter().copied().collect();
            let set2: std::collections::BTreeSet<usize> = topo2
                .tris(phase)
                .iter()
                .map(|&t| n - 1 - t) // undo the reversal
                .collect();
            assert_eq!(set1, set2);
        }
        assert_eq!(topo.cut_tris().len(), topo2.cut_tris().len());
    }

    #[test]
    fn tilted_interface_classifies() {
        let mesh = Mesh::structured(4, 4, Rect::unit_square()).unwrap();
        let alpha = 2.0_f64.sqrt() / 2.0;
        let s = 0.1;
        let line = InterfacePolyline::line(
            Point2::new(alpha + s * (-0.25 - 0.5), -0.25),
            Point2::new(alpha + s * (1.25 - 0.5), 1.25),
        )
        .unwrap();
        let topo = CutTopology::classify(mesh, line).unwrap();
        assert!(!topo.cut_tris().is_empty());
        for &t in topo.cut_tris() {
            let cell = topo.cut_cell(t).unwrap();
            let total = topo.mesh().area(t);
            assert_relative_eq!(
                cell.area(Phase::One) + cell.area(Phase::Two),
                total,
                epsilon = 1e-12 * total
            );
        }
    }

    #[test]
    fn ghost_edges_touch_cut_band() {
        let mesh = Mesh::structured(4, 4, Rect::unit_square()).unwrap();
        let alpha = 2.0_f64.sqrt() / 2.0;
        let topo = CutTopology::classify(mesh, vertical_line(alpha)).unwrap();
        for phase in Phase::BOTH {
            assert!(!topo.ghost_edges(phase).is_empty());
            for &e in topo.ghost_edges(phase) {
                let edge = topo.mesh().edge(e);
                assert!(!edge.is_boundary());
                let tp = edge.tri_plus.unwrap();
                assert!(topo.is_cut_tri(edge.tri_minus) || topo.is_cut_tri(tp));
                assert!(topo.edge_in(phase, e));
            }
        }
    }

    proptest! {
        // Sweeping a straight interface by small offsets from a mesh line must
        // neither crash nor lose area.
        #[test]
        fn offset_sweep_is_robust(exp in -8.0f64..-2.0) {
            let delta = 10.0_f64.powf(exp);
            let mesh = Mesh::structured(4, 4, Rect::unit_square()).unwrap();
            let topo = CutTopology::classify(mesh, vertical_line(0.5 + delta)).unwrap();
            prop_assert!(!topo.cut_tris().is_empty());
            for &t in topo.cut_tris() {
                let cell = topo.cut_cell(t).unwrap();
                let total = topo.mesh().area(t);
                let sum = cell.area(Phase::One) + cell.area(Phase::Two);
                prop_assert!((sum - total).abs() <= 1e-12 * total);
            }
        }
    }
}
