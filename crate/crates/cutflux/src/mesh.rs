//! Conforming triangular meshes with globally oriented edge normals and
//! node-patch connectivity.
//!
//! Every interior edge stores its two neighbours `T_F^-`, `T_F^+` and a unit
//! normal pointing from `T_F^-` into `T_F^+`; boundary edges carry the outward
//! normal of the domain. The mesh is immutable after construction and all
//! queries are read-only.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};
use crate::geo;

/// Default bound on the shape-regularity ratio `h_T / rho_T`.
pub const DEFAULT_SHAPE_BOUND: f64 = 100.0;

/// Axis-aligned rectangle, used as the domain of the structured generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn unit_square() -> Self {
        Rect::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Oriented mesh edge.
#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoint node ids, ordered so the edge runs counter-clockwise in
    /// `tri_minus`.
    pub nodes: [usize; 2],
    /// `T_F^-`, the triangle that first claimed this edge.
    pub tri_minus: usize,
    /// `T_F^+`; `None` for boundary edges.
    pub tri_plus: Option<usize>,
    /// Unit normal pointing from `T_F^-` into `T_F^+` (outward for boundary
    /// edges).
    pub normal: Vector2<f64>,
    /// Edge length `h_F`.
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.tri_plus.is_none()
    }

    /// The neighbour opposite to `tri`, if any.
    pub fn other_triangle(&self, tri: usize) -> Option<usize> {
        if tri == self.tri_minus {
            self.tri_plus
        } else {
            Some(self.tri_minus)
        }
    }
}

/// Connectivity around one node: the triangle fan `omega_N` and edge star `F_N`.
#[derive(Clone, Debug)]
pub struct NodePatch {
    pub node: usize,
    /// Triangles sharing the node (`omega_N`), ascending ids.
    pub triangles: Vec<usize>,
    /// Edges sharing the node (`F_N`), ascending ids.
    pub edges: Vec<usize>,
    /// Whether the node lies on the mesh boundary.
    pub on_boundary: bool,
}

impl NodePatch {
    pub fn is_interior(&self) -> bool {
        !self.on_boundary
    }
}

/// Immutable conforming triangulation.
#[derive(Clone, Debug)]
pub struct Mesh {
    nodes: Vec<Point2<f64>>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// `tri_edges[t][j]` is the edge opposite local vertex `j` of triangle `t`.
    tri_edges: Vec<[usize; 3]>,
    tri_area: Vec<f64>,
    tri_diameter: Vec<f64>,
    node_tris: Vec<Vec<usize>>,
    node_edges: Vec<Vec<usize>>,
    boundary_node: Vec<bool>,
}

impl Mesh {
    /// Build a mesh from raw node and triangle lists.
    ///
    /// Triangles must be counter-clockwise; interior edges must be shared by
    /// exactly two triangles.
    pub fn new(nodes: Vec<Point2<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_shape_bound(nodes, triangles, DEFAULT_SHAPE_BOUND)
    }

    /// Like [`Mesh::new`] with an explicit shape-regularity bound on
    /// `h_T / rho_T`.
    pub fn with_shape_bound(
        nodes: Vec<Point2<f64>>,
        triangles: Vec<[usize; 3]>,
        shape_bound: f64,
    ) -> Result<Self> {
        if nodes.is_empty() || triangles.is_empty() {
            return Err(Error::InvalidArgument(
                "mesh needs at least one node and one triangle".into(),
            ));
        }
        let n_nodes = nodes.len();
        let mut tri_area = Vec::with_capacity(triangles.len());
        let mut tri_diameter = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n_nodes {
                    return Err(Error::InvalidArgument(format!(
                        "triangle {t} references node {v} out of range"
                    )));
                }
            }
            let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let area = geo::triangle_signed_area(&p);
            if area <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "triangle {t} is degenerate or clockwise (signed area {area:.3e})"
                )));
            }
            let ratio = geo::triangle_diameter(&p) / geo::triangle_inradius(&p);
            if ratio > shape_bound {
                return Err(Error::InvalidArgument(format!(
                    "triangle {t} violates shape regularity: h_T/rho_T = {ratio:.3e}"
                )));
            }
            tri_area.push(area);
            tri_diameter.push(geo::triangle_diameter(&p));
        }

        // Edge extraction. The first triangle that visits an (unordered) node
        // pair becomes T_F^-; its CCW traversal order fixes the stored node
        // order and the normal.
        let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = vec![[usize::MAX; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for j in 0..3 {
                // Edge opposite local vertex j runs v[j+1] -> v[j+2] in CCW order.
                let a = tri[(j + 1) % 3];
                let b = tri[(j + 2) % 3];
                let key = (a.min(b), a.max(b));
                match edge_of.get(&key) {
                    None => {
                        let d = nodes[b] - nodes[a];
                        let length = d.norm();
                        let normal = geo::rotate_cw(d / length);
                        let id = edges.len();
                        edges.push(Edge {
                            nodes: [a, b],
                            tri_minus: t,
                            tri_plus: None,
                            normal,
                            length,
                        });
                        edge_of.insert(key, id);
                        tri_edges[t][j] = id;
                    }
                    Some(&id) => {
                        if edges[id].tri_plus.is_some() {
                            return Err(Error::InvalidArgument(format!(
                                "edge {:?} shared by more than two triangles",
                                edges[id].nodes
                            )));
                        }
                        edges[id].tri_plus = Some(t);
                        tri_edges[t][j] = id;
                    }
                }
            }
        }

        // Euler relation for a simply connected triangulation.
        let (v, e, f) = (n_nodes as i64, edges.len() as i64, triangles.len() as i64);
        if v - e + f != 1 {
            return Err(Error::InvalidArgument(format!(
                "mesh is not a simply connected triangulation: V - E + F = {}",
                v - e + f
            )));
        }

        let mut node_tris = vec![Vec::new(); n_nodes];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                node_tris[v].push(t);
            }
        }
        let mut node_edges = vec![Vec::new(); n_nodes];
        let mut boundary_node = vec![false; n_nodes];
        for (e, edge) in edges.iter().enumerate() {
            for &v in &edge.nodes {
                node_edges[v].push(e);
                if edge.is_boundary() {
                    boundary_node[v] = true;
                }
            }
        }

        Ok(Mesh {
            nodes,
            triangles,
            edges,
            tri_edges,
            tri_area,
            tri_diameter,
            node_tris,
            node_edges,
            boundary_node,
        })
    }

    /// Structured triangulation of a rectangle: `nx * ny` quads, each split by
    /// the lower-left to upper-right diagonal.
    pub fn structured(nx: usize, ny: usize, rect: Rect) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "cell counts must be positive, got {nx} x {ny}"
            )));
        }
        if rect.width() <= 0.0 || rect.height() <= 0.0 {
            return Err(Error::InvalidArgument("degenerate rectangle".into()));
        }
        let dx = rect.width() / nx as f64;
        let dy = rect.height() / ny as f64;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(Point2::new(rect.x0 + i as f64 * dx, rect.y0 + j as f64 * dy));
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (n00, n10) = (id(i, j), id(i + 1, j));
                let (n01, n11) = (id(i, j + 1), id(i + 1, j + 1));
                triangles.push([n00, n10, n11]);
                triangles.push([n00, n11, n01]);
            }
        }
        Self::new(nodes, triangles)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, n: usize) -> Point2<f64> {
        self.nodes[n]
    }

    pub fn nodes(&self) -> &[Point2<f64>] {
        &self.nodes
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangle_points(&self, t: usize) -> [Point2<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge ids of triangle `t`; entry `j` is the edge opposite local vertex `j`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    /// Triangle area.
    pub fn area(&self, t: usize) -> f64 {
        self.tri_area[t]
    }

    /// Triangle diameter `h_T`.
    pub fn h_t(&self, t: usize) -> f64 {
        self.tri_diameter[t]
    }

    /// Edge length `h_F`.
    pub fn h_f(&self, e: usize) -> f64 {
        self.edges[e].length
    }

    pub fn max_h_t(&self) -> f64 {
        self.tri_diameter.iter().cloned().fold(0.0, f64::max)
    }

    /// Diameter of the meshed domain (bounding-box diagonal).
    pub fn domain_diameter(&self) -> f64 {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.nodes {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (hi - lo).norm()
    }

    /// Orientation sign of edge `e` relative to triangle `t`: `+1` if the edge
    /// normal points out of `t` (i.e. `t == T_F^-`), `-1` otherwise.
    pub fn orientation(&self, t: usize, e: usize) -> f64 {
        if self.edges[e].tri_minus == t {
            1.0
        } else {
            -1.0
        }
    }

    /// Whether the node lies on the mesh boundary.
    pub fn is_boundary_node(&self, n: usize) -> bool {
        self.boundary_node[n]
    }

    /// Triangles sharing node `n` (`omega_N`).
    pub fn node_triangles(&self, n: usize) -> &[usize] {
        &self.node_tris[n]
    }

    /// Edges sharing node `n` (`F_N`).
    pub fn node_edges(&self, n: usize) -> &[usize] {
        &self.node_edges[n]
    }

    pub fn node_patch(&self, n: usize) -> NodePatch {
        NodePatch {
            node: n,
            triangles: self.node_tris[n].clone(),
            edges: self.node_edges[n].clone(),
            on_boundary: self.boundary_node[n],
        }
    }

    /// Sign `s_N^F` of edge `e` at its endpoint `n`: `+1` iff rotating the unit
    /// vector from `n` toward the other endpoint by -90 degrees (clockwise)
    /// gives the edge normal `n_F`.
    pub fn node_edge_sign(&self, n: usize, e: usize) -> Result<i32> {
        let edge = &self.edges[e];
        let other = if edge.nodes[0] == n {
            edge.nodes[1]
        } else if edge.nodes[1] == n {
            edge.nodes[0]
        } else {
            return Err(Error::InvalidArgument(format!(
                "node {n} is not an endpoint of edge {e}"
            )));
        };
        let d = (self.nodes[other] - self.nodes[n]).normalize();
        Ok(if geo::rotate_cw(d).dot(&edge.normal) > 0.0 {
            1
        } else {
            -1
        })
    }

    /// Parse the plain-text mesh format: a line `nodes <V>` followed by `V`
    /// lines `x y`, then `triangles <F>` followed by `F` lines `i j k`
    /// (0-based, counter-clockwise).
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut expect = |what: &str| {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of mesh file, wanted {what}")))
        };
        let kw = expect("'nodes'")?;
        if kw != "nodes" {
            return Err(Error::Parse(format!("expected 'nodes', got '{kw}'")));
        }
        let n_nodes: usize = expect("node count")?
            .parse()
            .map_err(|e| Error::Parse(format!("bad node count: {e}")))?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let x: f64 = expect("x")?
                .parse()
                .map_err(|e| Error::Parse(format!("bad coordinate: {e}")))?;
            let y: f64 = expect("y")?
                .parse()
                .map_err(|e| Error::Parse(format!("bad coordinate: {e}")))?;
            nodes.push(Point2::new(x, y));
        }
        let kw = expect("'triangles'")?;
        if kw != "triangles" {
            return Err(Error::Parse(format!("expected 'triangles', got '{kw}'")));
        }
        let n_tris: usize = expect("triangle count")?
            .parse()
            .map_err(|e| Error::Parse(format!("bad triangle count: {e}")))?;
        let mut triangles = Vec::with_capacity(n_tris);
        for _ in 0..n_tris {
            let mut ids = [0usize; 3];
            for v in &mut ids {
                *v = expect("node id")?
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad node id: {e}")))?;
            }
            triangles.push(ids);
        }
        Self::new(nodes, triangles)
    }

    pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serialize in the plain-text mesh format accepted by [`Mesh::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(out, "{:.17} {:.17}", p.x, p.y);
        }
        let _ = writeln!(out, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn structured_1x1_counts() {
        let mesh = Mesh::structured(1, 1, Rect::unit_square()).unwrap();
        assert_eq!(mesh.n_nodes(), 4);
        assert_eq!(mesh.n_triangles(), 2);
        assert_eq!(mesh.n_edges(), 5);
    }

    #[test]
    fn structured_2x2_euler() {
        let mesh = Mesh::structured(2, 2, Rect::unit_square()).unwrap();
        assert_eq!(mesh.n_nodes(), 9);
        assert_eq!(mesh.n_triangles(), 8);
        assert_eq!(mesh.n_edges(), 16);
        let euler =
            mesh.n_nodes() as i64 - mesh.n_edges() as i64 + mesh.n_triangles() as i64;
        assert_eq!(euler, 1);
    }

    #[test]
    fn structured_4x4_edge_lengths() {
        let mesh = Mesh::structured(4, 4, Rect::unit_square()).unwrap();
        for e in 0..mesh.n_edges() {
            let h = mesh.h_f(e);
            let axis = (h - 0.25).abs() < 1e-14;
            let diag = (h - 0.25 * 2.0_f64.sqrt()).abs() < 1e-14;
            assert!(axis || diag, "unexpected edge length {h}");
        }
    }

    #[test]
    fn zero_cell_count_rejected() {
        assert!(matches!(
            Mesh::structured(0, 3, Rect::unit_square()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn node_edge_sign_bottom_edge() {
        // In the 1x1 structured mesh the bottom edge runs (0,0) -> (1,0) inside
        // triangle 0, so its normal is (0,-1): clockwise rotation of +x.
        let mesh = Mesh::structured(1, 1, Rect::unit_square()).unwrap();
        let e = (0..mesh.n_edges())
            .find(|&e| {
                let mut nodes = mesh.edge(e).nodes;
                nodes.sort_unstable();
                nodes == [0, 1]
            })
            .unwrap();
        assert_relative_eq!(mesh.edge(e).normal.x, 0.0);
        assert_relative_eq!(mesh.edge(e).normal.y, -1.0);
        assert_eq!(mesh.node_edge_sign(0, e).unwrap(), 1);
        assert_eq!(mesh.node_edge_sign(1, e).unwrap(), -1);
        assert!(mesh.node_edge_sign(3, e).is_err());
    }

    #[test]
    fn node_edge_sign_antisymmetric_everywhere() {
        let mesh = Mesh::structured(3, 3, Rect::unit_square()).unwrap();
        for e in 0..mesh.n_edges() {
            let [a, b] = mesh.edge(e).nodes;
            let sa = mesh.node_edge_sign(a, e).unwrap();
            let sb = mesh.node_edge_sign(b, e).unwrap();
            assert_eq!(sa, -sb);
        }
    }

    #[test]
    fn interior_node_valence() {
        let mesh = Mesh::structured(2, 2, Rect::unit_square()).unwrap();
        // Node 4 is the centre of the 2x2 grid.
        let patch = mesh.node_patch(4);
        assert!(patch.is_interior());
        assert_eq!(patch.triangles.len(), 6);
        assert_eq!(patch.edges.len(), 6);
    }

    #[test]
    fn corner_node_valence_depends_on_diagonal() {
        let mesh = Mesh::structured(1, 1, Rect::unit_square()).unwrap();
        // The diagonal runs node 0 -> node 3, so corner 0 belongs to both
        // triangles while corner 1 belongs to one.
        let p0 = mesh.node_patch(0);
        assert_eq!(p0.triangles.len(), 2);
        assert_eq!(p0.edges.len(), 3);
        let p1 = mesh.node_patch(1);
        assert_eq!(p1.triangles.len(), 1);
        assert_eq!(p1.edges.len(), 2);
        assert!(p1.on_boundary);
    }

    #[test]
    fn patch_sizes_sum_to_three_per_triangle() {
        let mesh = Mesh::structured(3, 2, Rect::new(0.0, 0.0, 2.0, 1.0)).unwrap();
        let total: usize = (0..mesh.n_nodes())
            .map(|n| mesh.node_triangles(n).len())
            .sum();
        assert_eq!(total, 3 * mesh.n_triangles());
        for n in 0..mesh.n_nodes() {
            let patch = mesh.node_patch(n);
            if patch.is_interior() {
                assert_eq!(patch.edges.len(), patch.triangles.len());
            } else {
                assert_eq!(patch.edges.len(), patch.triangles.len() + 1);
            }
        }
    }

    #[test]
    fn refinement_halves_max_diameter() {
        let coarse = Mesh::structured(2, 2, Rect::unit_square()).unwrap();
        let fine = Mesh::structured(4, 4, Rect::unit_square()).unwrap();
        assert_relative_eq!(fine.max_h_t(), 0.5 * coarse.max_h_t(), epsilon = 1e-15);
    }

    #[test]
    fn boundary_edge_normals_point_outward() {
        let mesh = Mesh::structured(2, 2, Rect::unit_square()).unwrap();
        for edge in mesh.edges() {
            if edge.is_boundary() {
                let mid = Point2::from(
                    (mesh.node(edge.nodes[0]).coords + mesh.node(edge.nodes[1]).coords) / 2.0,
                );
                let outside = mid + 1e-3 * edge.normal;
                let inside_domain = outside.x >= 0.0
                    && outside.x <= 1.0
                    && outside.y >= 0.0
                    && outside.y <= 1.0;
                assert!(!inside_domain, "boundary normal points inward at {mid:?}");
            }
        }
    }

    #[test]
    fn text_roundtrip() {
        let mesh = Mesh::structured(2, 3, Rect::new(-1.0, 0.0, 1.0, 3.0)).unwrap();
        let text = mesh.to_text();
        let back = Mesh::parse(&text).unwrap();
        assert_eq!(back.n_nodes(), mesh.n_nodes());
        assert_eq!(back.n_triangles(), mesh.n_triangles());
        assert_eq!(back.n_edges(), mesh.n_edges());
        for n in 0..mesh.n_nodes() {
            assert_relative_eq!(back.node(n).x, mesh.node(n).x);
            assert_relative_eq!(back.node(n).y, mesh.node(n).y);
        }
    }
}
