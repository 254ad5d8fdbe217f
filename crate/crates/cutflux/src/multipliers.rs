//! Edge multipliers of the auxiliary mixed formulation, computed by
//! independent node-patch solves.
//!
//! The multiplier pair `theta_h = (theta_h^1, theta_h^2)` lives on the edge
//! sets `F_h^i` as edgewise-linear functions constrained by the signed nodal
//! relation `sum_F s_N^F h_F mu|_F(N) = 0`. The constraint is imposed at every
//! node whose patch carries a free circulation mode (see [`constrained_node`]),
//! a superset of the interior nodes: with interior nodes only, the nodal
//! coupling form `b_h` keeps a one-dimensional kernel per unconstrained
//! full-fan node, defeating both the uniqueness of the patch systems and the
//! inf-sup positivity.
//!
//! `theta_h` satisfies `b_h(theta_h, v) = r_h(v)` for every broken test
//! function `v`, where `r_h(.) = l_h(.) - a_h(u_h, .) + d_h(u_h, .)`; that
//! identity is what makes the reconstructed fluxes conservative, and it is
//! verified basis-by-basis after construction.

use nalgebra::{DMatrix, DVector};

use crate::cutfem::{PrimalField, ProblemData, QUAD_DEGREE};
use crate::cutgeom::{CutTopology, Phase};
use crate::error::{Error, Result};
use crate::geo;
use crate::linalg::{solve_dense, DenseSystem};
use crate::quadrature::segment_rule;

/// Patch equations must be satisfied to this relative residual.
pub const PATCH_TOL: f64 = 1e-9;
/// Global identity `b_h(theta_h, .) = r_h(.)` tolerance (relative).
pub const IDENTITY_TOL: f64 = 1e-8;
/// Sign-constraint residual tolerance at interior nodes (relative).
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Whether the sign constraint is imposed at a (node, subdomain) pair. That
/// is the case exactly when every patch triangle of `omega_N cap T_h^i` has
/// both of its node edges in `F_h^i`: the nodal cell equations then leave one
/// circulation mode free and the constraint pins it. In truncated cut-band
/// patches some triangle reaches the node through a single `F_h^i` edge,
/// which already pins the chain; adding the constraint there would
/// over-determine the local system.
pub fn constrained_node(topo: &CutTopology, phase: Phase, node: usize) -> bool {
    if !topo.node_in(phase, node) {
        return false;
    }
    let mesh = topo.mesh();
    let mut any = false;
    for &t in mesh.node_triangles(node) {
        if !topo.tri_in(phase, t) {
            continue;
        }
        any = true;
        let mut in_phase = 0;
        for &e in &mesh.triangle_edges(t) {
            if mesh.edge(e).nodes.contains(&node) && topo.edge_in(phase, e) {
                in_phase += 1;
            }
        }
        if in_phase < 2 {
            return false;
        }
    }
    any
}

/// Pair of edgewise-linear multipliers, stored as two endpoint values per
/// edge (in the global edge node order) for each subdomain.
#[derive(Clone, Debug)]
pub struct MultiplierField {
    values: [Vec<[f64; 2]>; 2],
}

impl MultiplierField {
    pub fn zero(n_edges: usize) -> Self {
        MultiplierField {
            values: [vec![[0.0; 2]; n_edges], vec![[0.0; 2]; n_edges]],
        }
    }

    pub fn edge_values(&self, phase: Phase, e: usize) -> [f64; 2] {
        self.values[phase.index()][e]
    }

    pub fn set_edge_values(&mut self, phase: Phase, e: usize, v: [f64; 2]) {
        self.values[phase.index()][e] = v;
    }

    /// Value at an endpoint node of the edge.
    pub fn value_at_node(&self, topo: &CutTopology, phase: Phase, e: usize, node: usize) -> f64 {
        let nodes = topo.mesh().edge(e).nodes;
        let v = self.values[phase.index()][e];
        if nodes[0] == node {
            v[0]
        } else {
            debug_assert_eq!(nodes[1], node);
            v[1]
        }
    }

    /// Linear interpolation along the edge.
    pub fn value_at(&self, topo: &CutTopology, phase: Phase, e: usize, p: nalgebra::Point2<f64>) -> f64 {
        let edge = topo.mesh().edge(e);
        let a = topo.mesh().node(edge.nodes[0]);
        let b = topo.mesh().node(edge.nodes[1]);
        let t = (p - a).dot(&(b - a)) / (b - a).norm_squared();
        let v = self.values[phase.index()][e];
        v[0] * (1.0 - t) + v[1] * t
    }

    /// Edge mean `pi_F^0 theta^i`, exact for the linear representation.
    pub fn edge_mean(&self, phase: Phase, e: usize) -> f64 {
        let v = self.values[phase.index()][e];
        0.5 * (v[0] + v[1])
    }

    /// Largest `h_F |theta|` endpoint magnitude, used as a scale for the
    /// relative constraint residuals.
    pub fn scale(&self, topo: &CutTopology) -> f64 {
        let mut s = 0.0f64;
        for phase in Phase::BOTH {
            for &e in topo.edges(phase) {
                let h = topo.mesh().h_f(e);
                let v = self.values[phase.index()][e];
                s = s.max(h * v[0].abs()).max(h * v[1].abs());
            }
        }
        s
    }
}

/// Pair of per-triangle linear (discontinuous) fields, one per subdomain.
#[derive(Clone, Debug)]
pub struct BrokenField {
    values: [Vec<[f64; 3]>; 2],
}

impl BrokenField {
    pub fn zero(n_tris: usize) -> Self {
        BrokenField {
            values: [vec![[0.0; 3]; n_tris], vec![[0.0; 3]; n_tris]],
        }
    }

    /// View a continuous primal field as a broken field.
    pub fn from_primal(field: &PrimalField, topo: &CutTopology) -> Self {
        let mesh = topo.mesh();
        let mut broken = BrokenField::zero(mesh.n_triangles());
        for phase in Phase::BOTH {
            for &t in topo.tris(phase) {
                let tri = mesh.triangle(t);
                for a in 0..3 {
                    broken.values[phase.index()][t][a] = field.nodal(phase)[tri[a]];
                }
            }
        }
        broken
    }

    /// Basis element `phi_a chi_T` of one subdomain.
    pub fn basis(n_tris: usize, phase: Phase, t: usize, a: usize) -> Self {
        let mut b = BrokenField::zero(n_tris);
        b.values[phase.index()][t][a] = 1.0;
        b
    }

    pub fn tri_values(&self, phase: Phase, t: usize) -> [f64; 3] {
        self.values[phase.index()][t]
    }

    pub fn set(&mut self, phase: Phase, t: usize, a: usize, v: f64) {
        self.values[phase.index()][t][a] = v;
    }

    pub fn value(&self, topo: &CutTopology, phase: Phase, t: usize, p: nalgebra::Point2<f64>) -> f64 {
        let pts = topo.mesh().triangle_points(t);
        let grads = geo::p1_gradients(&pts);
        let vals = self.values[phase.index()][t];
        (0..3)
            .map(|a| vals[a] * geo::p1_value(&pts, &grads, a, p))
            .sum()
    }

    pub fn gradient(&self, topo: &CutTopology, phase: Phase, t: usize) -> nalgebra::Vector2<f64> {
        let grads = geo::p1_gradients(&topo.mesh().triangle_points(t));
        let vals = self.values[phase.index()][t];
        (0..3).map(|a| grads[a] * vals[a]).sum()
    }

    /// Nodal jump `[[v^i]](N)` across edge `e` at one of its endpoint nodes:
    /// the value from `T_F^-` minus the value from `T_F^+` (one-sided on
    /// boundary edges).
    pub fn nodal_jump(&self, topo: &CutTopology, phase: Phase, e: usize, node: usize) -> f64 {
        let mesh = topo.mesh();
        let edge = mesh.edge(e);
        let local = |t: usize| -> usize {
            mesh.triangle(t)
                .iter()
                .position(|&v| v == node)
                .expect("node belongs to the adjacent triangle")
        };
        let minus = self.values[phase.index()][edge.tri_minus][local(edge.tri_minus)];
        match edge.tri_plus {
            Some(tp) => minus - self.values[phase.index()][tp][local(tp)],
            None => minus,
        }
    }
}

/// Nodal-quadrature coupling form
/// `b_h(mu, v) = sum_i sum_F (k_i h_F / 2) sum_N mu|_F(N) [[v^i]](N)`.
pub fn eval_b_h(
    mu: &MultiplierField,
    v: &BrokenField,
    topo: &CutTopology,
    data: &ProblemData,
) -> f64 {
    let mesh = topo.mesh();
    let mut acc = 0.0;
    for phase in Phase::BOTH {
        let k = data.k(phase);
        for &e in topo.edges(phase) {
            let h = mesh.h_f(e);
            let nodes = mesh.edge(e).nodes;
            let mv = mu.edge_values(phase, e);
            for (s, &n) in nodes.iter().enumerate() {
                acc += 0.5 * k * h * mv[s] * v.nodal_jump(topo, phase, e, n);
            }
        }
    }
    acc
}

/// Mean normal flux `<k_i grad v^i . n_F>` of a broken field on an edge, with
/// the one-sided convention on boundary edges.
fn mean_normal_flux(
    v: &BrokenField,
    topo: &CutTopology,
    phase: Phase,
    e: usize,
) -> f64 {
    let edge = topo.mesh().edge(e);
    let k = 1.0; // caller multiplies by k
    let gm = v.gradient(topo, phase, edge.tri_minus).dot(&edge.normal);
    let val = match edge.tri_plus {
        Some(tp) => 0.5 * (gm + v.gradient(topo, phase, tp).dot(&edge.normal)),
        None => gm,
    };
    k * val
}

/// Symmetrized consistency form
/// `d_h(u, v) = sum_i sum_F int_{F cap Omega^i} (<k grad u . n>[[v]] + <k grad v . n>[[u]]) ds`.
pub fn eval_d_h(
    u: &BrokenField,
    v: &BrokenField,
    topo: &CutTopology,
    data: &ProblemData,
) -> Result<f64> {
    let mesh = topo.mesh();
    let mut acc = 0.0;
    for phase in Phase::BOTH {
        let k = data.k(phase);
        for &e in topo.edges(phase) {
            let Some(piece) = topo.edge_phase_piece(phase, e) else {
                continue;
            };
            let mean_u = k * mean_normal_flux(u, topo, phase, e);
            let mean_v = k * mean_normal_flux(v, topo, phase, e);
            let edge = mesh.edge(e);
            let rule = segment_rule(&piece, 2)?;
            let jump = |w: &BrokenField, x: nalgebra::Point2<f64>| -> f64 {
                let minus = w.value(topo, phase, edge.tri_minus, x);
                match edge.tri_plus {
                    Some(tp) => minus - w.value(topo, phase, tp, x),
                    None => minus,
                }
            };
            acc += rule.integrate(|x| mean_u * jump(v, x) + mean_v * jump(u, x));
        }
    }
    Ok(acc)
}

/// Broken bilinear form `a_h(u, v)` (volume + ghost penalty + Nitsche terms)
/// for per-triangle linear fields.
pub fn eval_a_h(
    u: &BrokenField,
    v: &BrokenField,
    topo: &CutTopology,
    data: &ProblemData,
) -> Result<f64> {
    let mesh = topo.mesh();
    let mut acc = 0.0;
    for phase in Phase::BOTH {
        let k = data.k(phase);
        for &t in topo.tris(phase) {
            acc += k
                * topo.phase_area(phase, t)
                * u.gradient(topo, phase, t).dot(&v.gradient(topo, phase, t));
        }
        if data.beta > 0.0 {
            for &e in topo.ghost_edges(phase) {
                let edge = mesh.edge(e);
                let tp = edge.tri_plus.expect("interior");
                let n = edge.normal;
                let ju = n.dot(&(u.gradient(topo, phase, edge.tri_minus) - u.gradient(topo, phase, tp)));
                let jv = n.dot(&(v.gradient(topo, phase, edge.tri_minus) - v.gradient(topo, phase, tp)));
                acc += data.beta * k * edge.length * edge.length * ju * jv;
            }
        }
    }
    let w = data.weights();
    for &t in topo.cut_tris() {
        let cell = topo.cut_cell(t).expect("cut");
        let n_gamma = cell.normal;
        let h_t = mesh.h_t(t);
        let rule = topo.interface_rule(t, QUAD_DEGREE)?.expect("cut");
        let flux = |f: &BrokenField| -> f64 {
            w.w[0] * data.k(Phase::One) * f.gradient(topo, Phase::One, t).dot(&n_gamma)
                + w.w[1] * data.k(Phase::Two) * f.gradient(topo, Phase::Two, t).dot(&n_gamma)
        };
        let (fu, fv) = (flux(u), flux(v));
        let jump = |f: &BrokenField, x: nalgebra::Point2<f64>| {
            f.value(topo, Phase::One, t, x) - f.value(topo, Phase::Two, t, x)
        };
        acc += rule.integrate(|x| {
            data.gamma * w.k_gamma / h_t * jump(u, x) * jump(v, x)
                - fu * jump(v, x)
                - fv * jump(u, x)
        });
    }
    Ok(acc)
}

/// Load functional `l_h(v) = sum_i int_{Omega^i} f^i v^i`.
pub fn eval_l_h(v: &BrokenField, topo: &CutTopology, data: &ProblemData) -> Result<f64> {
    let mut acc = 0.0;
    for phase in Phase::BOTH {
        for &t in topo.tris(phase) {
            if let Some(rule) = topo.phase_region_rule(phase, t, QUAD_DEGREE)? {
                acc += rule.integrate(|x| data.f(phase, x) * v.value(topo, phase, t, x));
            }
        }
    }
    Ok(acc)
}

/// Mixed residual `r_h(v) = l_h(v) - a_h(u_h, v) + d_h(u_h, v)`.
pub fn eval_r_h(
    u_h: &PrimalField,
    v: &BrokenField,
    topo: &CutTopology,
    data: &ProblemData,
) -> Result<f64> {
    let u = BrokenField::from_primal(u_h, topo);
    Ok(eval_l_h(v, topo, data)? - eval_a_h(&u, v, topo, data)? + eval_d_h(&u, v, topo, data)?)
}

/// Localized evaluation of `r_h^i(phi_a chi_T)`: only integrals touching the
/// triangle contribute.
pub fn residual_basis(
    u_h: &PrimalField,
    phase: Phase,
    t: usize,
    a: usize,
    topo: &CutTopology,
    data: &ProblemData,
) -> Result<f64> {
    let mesh = topo.mesh();
    let tri = mesh.triangle(t);
    let pts = mesh.triangle_points(t);
    let grads = geo::p1_gradients(&pts);
    let k = data.k(phase);
    let mut r = 0.0;

    // l_h(v)
    if let Some(rule) = topo.phase_region_rule(phase, t, QUAD_DEGREE)? {
        r += rule.integrate(|x| data.f(phase, x) * geo::p1_value(&pts, &grads, a, x));
    }

    // - a_i volume term
    let gu = u_h.gradient(topo, phase, t);
    r -= k * topo.phase_area(phase, t) * gu.dot(&grads[a]);

    // - beta j_i over the ghost edges of dT
    if data.beta > 0.0 {
        for &e in &mesh.triangle_edges(t) {
            if !topo.is_ghost_edge(phase, e) {
                continue;
            }
            let edge = mesh.edge(e);
            let tp = edge.tri_plus.expect("interior");
            let n = edge.normal;
            let ju = n.dot(&(u_h.gradient(topo, phase, edge.tri_minus) - u_h.gradient(topo, phase, tp)));
            let jv = mesh.orientation(t, e) * n.dot(&grads[a]);
            r -= data.beta * k * edge.length * edge.length * ju * jv;
        }
    }

    // - a_Gamma on the chord
    if let Some(cell) = topo.cut_cell(t) {
        let w = data.weights();
        let n_gamma = cell.normal;
        let h_t = mesh.h_t(t);
        let rule = topo.interface_rule(t, QUAD_DEGREE)?.expect("cut");
        let sign_v = if phase == Phase::One { 1.0 } else { -1.0 };
        let flux_u = w.w[0] * data.k(Phase::One) * u_h.gradient(topo, Phase::One, t).dot(&n_gamma)
            + w.w[1] * data.k(Phase::Two) * u_h.gradient(topo, Phase::Two, t).dot(&n_gamma);
        let flux_v = w.w[phase.index()] * k * grads[a].dot(&n_gamma);
        r -= rule.integrate(|x| {
            let phi = geo::p1_value(&pts, &grads, a, x);
            let ju = u_h.jump(topo, t, x);
            data.gamma * w.k_gamma / h_t * ju * sign_v * phi - flux_u * sign_v * phi - flux_v * ju
        });
    }

    // + d_h(u_h, v): the [[u_h^i]] term vanishes for the continuous primal.
    for &e in &mesh.triangle_edges(t) {
        if !topo.edge_in(phase, e) {
            continue;
        }
        let Some(piece) = topo.edge_phase_piece(phase, e) else {
            continue;
        };
        let edge = mesh.edge(e);
        let gm = u_h.gradient(topo, phase, edge.tri_minus).dot(&edge.normal);
        let mean_flux = k * match edge.tri_plus {
            Some(tp) => 0.5 * (gm + u_h.gradient(topo, phase, tp).dot(&edge.normal)),
            None => gm,
        };
        let eps = mesh.orientation(t, e);
        let rule = segment_rule(&piece, 2)?;
        r += rule.integrate(|x| mean_flux * eps * geo::p1_value(&pts, &grads, a, x));
    }

    Ok(r)
}

/// Localized evaluation of `b_h^i(mu^i, phi_a chi_T)`: only the edges of `dT`
/// containing the vertex contribute.
pub fn b_h_basis(
    mu: &MultiplierField,
    phase: Phase,
    t: usize,
    a: usize,
    topo: &CutTopology,
    data: &ProblemData,
) -> f64 {
    let mesh = topo.mesh();
    let node = mesh.triangle(t)[a];
    let k = data.k(phase);
    let mut acc = 0.0;
    for &e in &mesh.triangle_edges(t) {
        if !topo.edge_in(phase, e) {
            continue;
        }
        let edge = mesh.edge(e);
        if !edge.nodes.contains(&node) {
            continue;
        }
        acc += 0.5
            * k
            * edge.length
            * mesh.orientation(t, e)
            * mu.value_at_node(topo, phase, e, node);
    }
    acc
}

/// All residuals `r_h^i(phi_a chi_T)`, precomputed once per primal solution.
pub struct ResidualTable {
    r: [Vec<[f64; 3]>; 2],
}

impl ResidualTable {
    pub fn build(u_h: &PrimalField, topo: &CutTopology, data: &ProblemData) -> Result<Self> {
        let n_tris = topo.mesh().n_triangles();
        let mut r = [vec![[0.0; 3]; n_tris], vec![[0.0; 3]; n_tris]];
        for phase in Phase::BOTH {
            for &t in topo.tris(phase) {
                for a in 0..3 {
                    r[phase.index()][t][a] = residual_basis(u_h, phase, t, a, topo, data)?;
                }
            }
        }
        Ok(ResidualTable { r })
    }

    pub fn get(&self, phase: Phase, t: usize, a: usize) -> f64 {
        self.r[phase.index()][t][a]
    }

    /// Largest residual magnitude, the natural scale for the identity check.
    pub fn scale(&self) -> f64 {
        let mut s = 0.0f64;
        for part in &self.r {
            for row in part {
                for &v in row {
                    s = s.max(v.abs());
                }
            }
        }
        s
    }
}

/// Local multiplier contribution of one node patch: values on `F_N cap F_h^i`.
pub struct PatchSolution {
    pub edges: Vec<usize>,
    /// Endpoint values per patch edge, global edge node order.
    pub values: Vec<[f64; 2]>,
    pub rows: usize,
    pub cols: usize,
    pub residual: f64,
}

/// Solve the low-order patch system of one (node, subdomain) pair:
/// `b_h^i(theta_N, phi_N chi_T) = r_h^i(phi_N chi_T)` and
/// `b_h^i(theta_N, phi_M chi_T) = 0` for the other vertices, over all
/// `T in omega_N cap T_h^i`, with the sign-constraint rows appended, in
/// least-squares minimum-norm form.
pub fn solve_node_patch(
    node: usize,
    phase: Phase,
    table: &ResidualTable,
    topo: &CutTopology,
    data: &ProblemData,
) -> Result<PatchSolution> {
    let mesh = topo.mesh();
    let k = data.k(phase);
    let edges: Vec<usize> = mesh
        .node_edges(node)
        .iter()
        .copied()
        .filter(|&e| topo.edge_in(phase, e))
        .collect();
    let tris: Vec<usize> = mesh
        .node_triangles(node)
        .iter()
        .copied()
        .filter(|&t| topo.tri_in(phase, t))
        .collect();
    if edges.is_empty() || tris.is_empty() {
        return Err(Error::InconsistentPatch {
            node,
            subdomain: phase.index() + 1,
            residual: f64::INFINITY,
        });
    }
    let n_unknowns = 2 * edges.len();
    let slot = |e: usize, endpoint: usize| -> usize {
        2 * edges.iter().position(|&pe| pe == e).expect("patch edge") + endpoint
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for &t in &tris {
        let tri = mesh.triangle(t);
        for a in 0..3 {
            let m = tri[a];
            let mut row = vec![0.0; n_unknowns];
            for &e in &mesh.triangle_edges(t) {
                if !edges.contains(&e) {
                    continue;
                }
                let edge = mesh.edge(e);
                for (s, &en) in edge.nodes.iter().enumerate() {
                    if en == m {
                        row[slot(e, s)] += 0.5 * k * edge.length * mesh.orientation(t, e);
                    }
                }
            }
            rows.push(row);
            rhs.push(if m == node { table.get(phase, t, a) } else { 0.0 });
        }
    }

    // Sign-constraint rows of M_h^i at the nodes touched by the patch,
    // restricted to the patch support; see `constrained_node` for which nodes
    // carry the constraint. Scaled by k/2 to match the equation rows.
    let mut constrained: Vec<usize> = vec![node];
    for &e in &edges {
        let [na, nb] = mesh.edge(e).nodes;
        constrained.push(if na == node { nb } else { na });
    }
    for &p in &constrained {
        if !constrained_node(topo, phase, p) {
            continue;
        }
        let mut row = vec![0.0; n_unknowns];
        let mut nonzero = false;
        for &e in &edges {
            let edge = mesh.edge(e);
            for (s, &en) in edge.nodes.iter().enumerate() {
                if en == p {
                    let sign = mesh.node_edge_sign(p, e)? as f64;
                    row[slot(e, s)] += 0.5 * k * sign * edge.length;
                    nonzero = true;
                }
            }
        }
        if nonzero {
            rows.push(row);
            rhs.push(0.0);
        }
    }

    let n_rows = rows.len();
    let a = DMatrix::from_fn(n_rows, n_unknowns, |r, c| rows[r][c]);
    let b = DVector::from_vec(rhs);
    let rhs_norm = b.norm();
    let sol = solve_dense(&DenseSystem::least_squares(a, b))?;
    let relative = if rhs_norm > 0.0 {
        sol.residual / rhs_norm
    } else {
        sol.residual
    };
    if relative > PATCH_TOL {
        return Err(Error::InconsistentPatch {
            node,
            subdomain: phase.index() + 1,
            residual: relative,
        });
    }
    let values = (0..edges.len())
        .map(|j| [sol.x[2 * j], sol.x[2 * j + 1]])
        .collect();
    Ok(PatchSolution {
        edges,
        values,
        rows: n_rows,
        cols: n_unknowns,
        residual: relative,
    })
}

/// Build the global multiplier `theta_h^i = sum_N theta_N^i` by summing the
/// independent patch solutions.
pub fn build_multiplier(
    u_h: &PrimalField,
    topo: &CutTopology,
    data: &ProblemData,
) -> Result<MultiplierField> {
    let table = ResidualTable::build(u_h, topo, data)?;
    let mut theta = MultiplierField::zero(topo.mesh().n_edges());
    for phase in Phase::BOTH {
        for node in 0..topo.mesh().n_nodes() {
            if !topo.node_in(phase, node) {
                continue;
            }
            let patch = solve_node_patch(node, phase, &table, topo, data)?;
            for (j, &e) in patch.edges.iter().enumerate() {
                let mut v = theta.edge_values(phase, e);
                v[0] += patch.values[j][0];
                v[1] += patch.values[j][1];
                theta.set_edge_values(phase, e, v);
            }
        }
    }
    Ok(theta)
}

/// Verification of the global identity `b_h(theta_h, v) = r_h(v)` over the
/// whole broken basis.
pub struct IdentityReport {
    pub max_abs: f64,
    pub scale: f64,
}

impl IdentityReport {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_abs / self.scale
        } else {
            self.max_abs
        }
    }
}

pub fn global_identity(
    theta: &MultiplierField,
    u_h: &PrimalField,
    topo: &CutTopology,
    data: &ProblemData,
) -> Result<IdentityReport> {
    let table = ResidualTable::build(u_h, topo, data)?;
    let mut max_abs = 0.0f64;
    for phase in Phase::BOTH {
        for &t in topo.tris(phase) {
            for a in 0..3 {
                let lhs = b_h_basis(theta, phase, t, a, topo, data);
                let rhs = table.get(phase, t, a);
                max_abs = max_abs.max((lhs - rhs).abs());
            }
        }
    }
    Ok(IdentityReport {
        max_abs,
        scale: table.scale(),
    })
}

/// Largest relative violation of the `M_h` sign constraint
/// `sum_F s_N^F h_F theta|_F(N) = 0`, checked at every constrained node
/// (a superset of the interior nodes the space definition names).
pub fn constraint_residual(theta: &MultiplierField, topo: &CutTopology) -> f64 {
    let mesh = topo.mesh();
    let scale = theta.scale(topo);
    let mut worst = 0.0f64;
    for phase in Phase::BOTH {
        for node in 0..mesh.n_nodes() {
            if !constrained_node(topo, phase, node) {
                continue;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for &e in mesh.node_edges(node) {
                if !topo.edge_in(phase, e) {
                    continue;
                }
                let sign = mesh.node_edge_sign(node, e).expect("endpoint") as f64;
                let term = sign * mesh.h_f(e) * theta.value_at_node(topo, phase, e, node);
                num += term;
                den += term.abs();
            }
            let local_scale = den.max(scale);
            if local_scale > 0.0 {
                worst = worst.max(num.abs() / local_scale);
            }
        }
    }
    worst
}

/// Largest nodal jump of the primal field across the edges of `F_h^i`. It is
/// identically zero for a continuous field, which makes `b_h(mu, u_h) = 0`
/// hold exactly for every multiplier (the kernel property).
pub fn max_kernel_violation(u_h: &PrimalField, topo: &CutTopology) -> f64 {
    let broken = BrokenField::from_primal(u_h, topo);
    let mut worst = 0.0f64;
    for phase in Phase::BOTH {
        for &e in topo.edges(phase) {
            // Boundary edges carry the one-sided value [[v]] = v, which is
            // zero for fields of C_h (Dirichlet trace).
            for &n in &topo.mesh().edge(e).nodes {
                worst = worst.max(broken.nodal_jump(topo, phase, e, n).abs());
            }
        }
    }
    worst
}

/// CSV dump of per-patch diagnostics: node, subdomain, rows, cols, residual.
pub fn patch_diagnostics(
    u_h: &PrimalField,
    topo: &CutTopology,
    data: &ProblemData,
) -> Result<String> {
    use std::fmt::Write as _;
    let table = ResidualTable::build(u_h, topo, data)?;
    let mut out = String::from("node,subdomain,rows,cols,residual\n");
    for phase in Phase::BOTH {
        for node in 0..topo.mesh().n_nodes() {
            if !topo.node_in(phase, node) {
                continue;
            }
            let patch = solve_node_patch(node, phase, &table, topo, data)?;
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3e}",
                node,
                phase.index() + 1,
                patch.rows,
                patch.cols,
                patch.residual
            );
        }
    }
    Ok(out)
}

/// Discrete inf-sup estimate of `b_h` in the `M_h`/`D_h` norm geometry,
/// computed by dense factorizations on small meshes.
pub fn verify_infsup_smoke(topo: &CutTopology, data: &ProblemData) -> Result<f64> {
    let mesh = topo.mesh();

    // Coordinate maps for the unconstrained multiplier space and for D_h.
    let mut mu_base: Vec<Vec<usize>> = vec![Vec::new(); 2];
    let mut dim_m = 0usize;
    for phase in Phase::BOTH {
        mu_base[phase.index()] = vec![usize::MAX; mesh.n_edges()];
        for &e in topo.edges(phase) {
            mu_base[phase.index()][e] = dim_m;
            dim_m += 2;
        }
    }
    let mut d_base: Vec<Vec<usize>> = vec![Vec::new(); 2];
    let mut dim_d = 0usize;
    for phase in Phase::BOTH {
        d_base[phase.index()] = vec![usize::MAX; mesh.n_triangles()];
        for &t in topo.tris(phase) {
            d_base[phase.index()][t] = dim_d;
            dim_d += 3;
        }
    }
    if dim_m > 2000 {
        return Err(Error::InvalidArgument(format!(
            "inf-sup smoke test skipped: {dim_m} multiplier coordinates exceed the dense budget"
        )));
    }

    // Coupling matrix B[mu, v].
    let mut b: DMatrix<f64> = DMatrix::zeros(dim_m, dim_d);
    for phase in Phase::BOTH {
        let k = data.k(phase);
        for &e in topo.edges(phase) {
            let edge = mesh.edge(e);
            let coeff = 0.5 * k * edge.length;
            let mut neighbours = vec![(edge.tri_minus, 1.0)];
            if let Some(tp) = edge.tri_plus {
                neighbours.push((tp, -1.0));
            }
            for (s, &n) in edge.nodes.iter().enumerate() {
                let row = mu_base[phase.index()][e] + s;
                for &(t, orient) in &neighbours {
                    debug_assert!(topo.tri_in(phase, t));
                    let a = mesh.triangle(t).iter().position(|&v| v == n).expect("vertex");
                    b[(row, d_base[phase.index()][t] + a)] += coeff * orient;
                }
            }
        }
    }

    // Multiplier norm Gram matrix: int_F k h (mu)^2 per edge (P1 edge mass).
    let mut n_m: DMatrix<f64> = DMatrix::zeros(dim_m, dim_m);
    for phase in Phase::BOTH {
        let k = data.k(phase);
        for &e in topo.edges(phase) {
            let h = mesh.h_f(e);
            let base = mu_base[phase.index()][e];
            let c = k * h * h / 6.0;
            n_m[(base, base)] += 2.0 * c;
            n_m[(base + 1, base + 1)] += 2.0 * c;
            n_m[(base, base + 1)] += c;
            n_m[(base + 1, base)] += c;
        }
    }

    // D_h norm Gram matrix via the broken forms on basis pairs.
    let mut n_d: DMatrix<f64> = DMatrix::zeros(dim_d, dim_d);
    // Volume: k |T cap Omega^i| grad_a . grad_b.
    for phase in Phase::BOTH {
        let k = data.k(phase);
        for &t in topo.tris(phase) {
            let grads = geo::p1_gradients(&mesh.triangle_points(t));
            let area = topo.phase_area(phase, t);
            let base = d_base[phase.index()][t];
            for a in 0..3 {
                for c in 0..3 {
                    n_d[(base + a, base + c)] += k * area * grads[a].dot(&grads[c]);
                }
            }
        }
        // Ghost penalty (unscaled by beta in the norm) + the h^-1 jump term.
        for &e in topo.edges(phase) {
            let edge = mesh.edge(e);
            let h = edge.length;
            let k_h_jump = data.k(phase) / h;
            // Jump entries: (triangle, vertex slot, trace coefficient at the
            // two endpoints).
            let mut tris = vec![(edge.tri_minus, 1.0)];
            if let Some(tp) = edge.tri_plus {
                tris.push((tp, -1.0));
            }
            // h^-1 jump term over the whole edge with exact P1 edge mass.
            let ends = [mesh.node(edge.nodes[0]), mesh.node(edge.nodes[1])];
            let mut entries: Vec<(usize, [f64; 2])> = Vec::new();
            for &(t, orient) in &tris {
                let pts = mesh.triangle_points(t);
                let grads = geo::p1_gradients(&pts);
                let base = d_base[phase.index()][t];
                for a in 0..3 {
                    let tr = [
                        orient * geo::p1_value(&pts, &grads, a, ends[0]),
                        orient * geo::p1_value(&pts, &grads, a, ends[1]),
                    ];
                    entries.push((base + a, tr));
                }
            }
            for &(i, ti) in &entries {
                for &(j, tj) in &entries {
                    let mass = h / 6.0
                        * (2.0 * ti[0] * tj[0] + ti[0] * tj[1] + ti[1] * tj[0] + 2.0 * ti[1] * tj[1]);
                    n_d[(i, j)] += k_h_jump * mass;
                }
            }
            if topo.is_ghost_edge(phase, e) {
                let mut gentries: Vec<(usize, f64)> = Vec::new();
                for &(t, orient) in &tris {
                    let grads = geo::p1_gradients(&mesh.triangle_points(t));
                    let base = d_base[phase.index()][t];
                    for a in 0..3 {
                        gentries.push((base + a, orient * grads[a].dot(&edge.normal)));
                    }
                }
                for &(i, gi) in &gentries {
                    for &(j, gj) in &gentries {
                        n_d[(i, j)] += data.k(phase) * h * h * gi * gj;
                    }
                }
            }
        }
    }
    // Interface penalty part of the energy norm.
    let w = data.weights();
    for &t in topo.cut_tris() {
        let rule = topo.interface_rule(t, QUAD_DEGREE)?.expect("cut");
        let h_t = mesh.h_t(t);
        let pts = mesh.triangle_points(t);
        let grads = geo::p1_gradients(&pts);
        for (q, &x) in rule.points.iter().enumerate() {
            let wq = rule.weights[q] * w.k_gamma / h_t;
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for phase in Phase::BOTH {
                let sign = if phase == Phase::One { 1.0 } else { -1.0 };
                let base = d_base[phase.index()][t];
                for a in 0..3 {
                    entries.push((base + a, sign * geo::p1_value(&pts, &grads, a, x)));
                }
            }
            for &(i, vi) in &entries {
                for &(j, vj) in &entries {
                    n_d[(i, j)] += wq * vi * vj;
                }
            }
        }
    }

    // Constraint matrix of M_h and its nullspace basis.
    let mut c_rows: Vec<Vec<f64>> = Vec::new();
    for phase in Phase::BOTH {
        for node in 0..mesh.n_nodes() {
            if !constrained_node(topo, phase, node) {
                continue;
            }
            let mut row = vec![0.0; dim_m];
            for &e in mesh.node_edges(node) {
                if !topo.edge_in(phase, e) {
                    continue;
                }
                let edge = mesh.edge(e);
                let s = if edge.nodes[0] == node { 0 } else { 1 };
                let sign = mesh.node_edge_sign(node, e)? as f64;
                row[mu_base[phase.index()][e] + s] += sign * edge.length;
            }
            c_rows.push(row);
        }
    }
    let n_c = c_rows.len();
    let z = if n_c == 0 {
        DMatrix::identity(dim_m, dim_m)
    } else {
        let c = DMatrix::from_fn(n_c, dim_m, |r, i| c_rows[r][i]);
        let ctc = c.transpose() * &c;
        let eig = ctc.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut cols: Vec<usize> = Vec::new();
        for (i, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev <= 1e-10 * lmax.max(f64::MIN_POSITIVE) {
                cols.push(i);
            }
        }
        let mut z: DMatrix<f64> = DMatrix::zeros(dim_m, cols.len());
        for (j, &i) in cols.iter().enumerate() {
            z.set_column(j, &eig.eigenvectors.column(i));
        }
        z
    };
    if z.ncols() == 0 {
        return Err(Error::InvalidArgument(
            "constraint nullspace is empty; no multiplier space".into(),
        ));
    }

    // S = B N_D^{-1} B^T restricted to the nullspace; generalized eigenproblem
    // against Z^T N_M Z.
    let chol_d = n_d
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("D_h norm matrix is not positive definite".into()))?;
    let bt = b.transpose();
    let x = chol_d.solve(&bt); // N_D^{-1} B^T
    let s = &b * x; // dim_m x dim_m
    let g = z.transpose() * &s * &z;
    let m_tilde = z.transpose() * &n_m * &z;
    let chol_m = m_tilde
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("multiplier norm lost definiteness".into()))?;
    // Solve the generalized problem G x = lambda M x via L^-1 G L^-T.
    let l = chol_m.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("Cholesky factor not invertible".into()))?;
    let reduced: DMatrix<f64> = &linv * g * linv.transpose();
    let eig = reduced.symmetric_eigen();
    let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if lmin < 0.0 && lmin.abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "inf-sup operator has a significantly negative eigenvalue {lmin:.3e}"
        )));
    }
    Ok(lmin.max(0.0).sqrt())
}
