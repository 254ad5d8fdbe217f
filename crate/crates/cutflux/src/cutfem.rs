//! Stabilized Nitsche/CutFEM discretization of the two-phase interface
//! problem and its mesh-dependent norms.
//!
//! The discrete space is a pair of P1 spaces, one per fictitious domain
//! `Omega_h^i`, with homogeneous Dirichlet values on the outer boundary.
//! Nodes in the cut band carry two degrees of freedom, one per subdomain. The
//! bilinear form combines the phase-wise stiffness on the physical parts, a
//! ghost-penalty term on edges near the interface and the symmetric Nitsche
//! coupling on the interface chords.

use std::sync::Arc;

use nalgebra::{Point2, Vector2};

use crate::cutgeom::{interface_weights, CutTopology, InterfaceWeights, Phase};
use crate::error::{Error, Result};
use crate::geo;
use crate::linalg::{assemble, solve_spd, CgSolution, SparseMatrix};

pub type ScalarFn = Arc<dyn Fn(Point2<f64>) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(Point2<f64>) -> Vector2<f64> + Send + Sync>;

/// Default Nitsche penalty.
pub const DEFAULT_GAMMA: f64 = 10.0;
/// Default ghost-penalty weight.
pub const DEFAULT_BETA: f64 = 0.1;
/// Default relative residual for the primal solve.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

/// Quadrature degree used for all assembled integrals.
pub(crate) const QUAD_DEGREE: usize = 4;

/// Coefficients, sources and stabilization parameters of the problem.
#[derive(Clone)]
pub struct ProblemData {
    pub k: [f64; 2],
    pub source: [ScalarFn; 2],
    /// Nitsche penalty `gamma`.
    pub gamma: f64,
    /// Ghost-penalty weight `beta`.
    pub beta: f64,
    /// Relative residual target for the sparse solve.
    pub solver_tol: f64,
}

impl ProblemData {
    pub fn new(k1: f64, k2: f64, f1: ScalarFn, f2: ScalarFn) -> Result<Self> {
        if k1 <= 0.0 || k2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "diffusivities must be positive, got {k1}, {k2}"
            )));
        }
        Ok(ProblemData {
            k: [k1, k2],
            source: [f1, f2],
            gamma: DEFAULT_GAMMA,
            beta: DEFAULT_BETA,
            solver_tol: DEFAULT_SOLVER_TOL,
        })
    }

    pub fn zero_source(k1: f64, k2: f64) -> Result<Self> {
        let zero: ScalarFn = Arc::new(|_| 0.0);
        Self::new(k1, k2, zero.clone(), zero)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        assert!(gamma > 0.0, "gamma must be positive");
        self.gamma = gamma;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        assert!(beta >= 0.0, "beta must be nonnegative");
        self.beta = beta;
        self
    }

    pub fn with_solver_tol(mut self, tol: f64) -> Self {
        self.solver_tol = tol;
        self
    }

    pub fn k(&self, phase: Phase) -> f64 {
        self.k[phase.index()]
    }

    pub fn f(&self, phase: Phase, p: Point2<f64>) -> f64 {
        (self.source[phase.index()])(p)
    }

    pub fn weights(&self) -> InterfaceWeights {
        interface_weights(self.k[0], self.k[1]).expect("validated at construction")
    }
}

/// Degree-of-freedom status of a (node, subdomain) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeDof {
    Free(usize),
    Dirichlet,
    Absent,
}

/// Map from (subdomain, node) pairs to global unknown ids. Boundary nodes are
/// eliminated; nodes shared by both fictitious domains carry two unknowns.
#[derive(Clone, Debug)]
pub struct DofMap {
    dofs: [Vec<NodeDof>; 2],
    owner: Vec<(Phase, usize)>,
}

/// Build the dof map of the pair of P1 spaces on the fictitious domains.
pub fn build_dofmap(topo: &CutTopology) -> DofMap {
    let n_nodes = topo.mesh().n_nodes();
    let mut dofs = [vec![NodeDof::Absent; n_nodes], vec![NodeDof::Absent; n_nodes]];
    let mut owner = Vec::new();
    for phase in Phase::BOTH {
        for n in 0..n_nodes {
            if !topo.node_in(phase, n) {
                continue;
            }
            dofs[phase.index()][n] = if topo.mesh().is_boundary_node(n) {
                NodeDof::Dirichlet
            } else {
                let id = owner.len();
                owner.push((phase, n));
                NodeDof::Free(id)
            };
        }
    }
    DofMap { dofs, owner }
}

impl DofMap {
    pub fn n_dofs(&self) -> usize {
        self.owner.len()
    }

    pub fn dof(&self, phase: Phase, node: usize) -> NodeDof {
        self.dofs[phase.index()][node]
    }

    /// The (subdomain, node) pair owning a global dof.
    pub fn owner(&self, dof: usize) -> (Phase, usize) {
        self.owner[dof]
    }
}

/// Piecewise-linear primal pair `(u_h^1, u_h^2)` stored as nodal values per
/// subdomain (zero at Dirichlet and absent nodes).
#[derive(Clone, Debug)]
pub struct PrimalField {
    values: [Vec<f64>; 2],
}

impl PrimalField {
    pub fn zero(n_nodes: usize) -> Self {
        PrimalField {
            values: [vec![0.0; n_nodes], vec![0.0; n_nodes]],
        }
    }

    pub fn from_coefficients(dofmap: &DofMap, n_nodes: usize, x: &[f64]) -> Self {
        let mut field = PrimalField::zero(n_nodes);
        for (dof, &(phase, node)) in dofmap.owner.iter().enumerate() {
            field.values[phase.index()][node] = x[dof];
        }
        field
    }

    pub fn nodal(&self, phase: Phase) -> &[f64] {
        &self.values[phase.index()]
    }

    pub fn nodal_mut(&mut self, phase: Phase) -> &mut [f64] {
        &mut self.values[phase.index()]
    }

    /// Value of `u_h^i` at a point of triangle `t` (valid for `t` in `T_h^i`).
    pub fn value(&self, topo: &CutTopology, phase: Phase, t: usize, p: Point2<f64>) -> f64 {
        let tri = topo.mesh().triangle(t);
        let pts = topo.mesh().triangle_points(t);
        let grads = geo::p1_gradients(&pts);
        (0..3)
            .map(|a| self.values[phase.index()][tri[a]] * geo::p1_value(&pts, &grads, a, p))
            .sum()
    }

    /// Constant gradient of `u_h^i` on triangle `t`.
    pub fn gradient(&self, topo: &CutTopology, phase: Phase, t: usize) -> Vector2<f64> {
        let tri = topo.mesh().triangle(t);
        let grads = geo::p1_gradients(&topo.mesh().triangle_points(t));
        (0..3)
            .map(|a| grads[a] * self.values[phase.index()][tri[a]])
            .sum()
    }

    /// Interface jump `[u_h] = u_h^1 - u_h^2` at a point of a cut triangle.
    pub fn jump(&self, topo: &CutTopology, t: usize, p: Point2<f64>) -> f64 {
        self.value(topo, Phase::One, t, p) - self.value(topo, Phase::Two, t, p)
    }
}

/// Assemble the CutFEM system: stiffness on the physical parts, ghost penalty
/// scaled by `beta`, symmetric Nitsche coupling on the interface chords and
/// the load vector on the physical parts.
pub fn assemble_system(
    topo: &CutTopology,
    dofmap: &DofMap,
    data: &ProblemData,
) -> Result<(SparseMatrix, Vec<f64>)> {
    let mesh = topo.mesh();
    let n = dofmap.n_dofs();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; n];

    let scatter = |rows: &[(NodeDof, f64)], local: &dyn Fn(usize, usize) -> f64,
                       triplets: &mut Vec<(usize, usize, f64)>| {
        for (a, &(da, _)) in rows.iter().enumerate() {
            let NodeDof::Free(ga) = da else { continue };
            for (b, &(db, _)) in rows.iter().enumerate() {
                let NodeDof::Free(gb) = db else { continue };
                let v = local(a, b);
                if v != 0.0 {
                    triplets.push((ga, gb, v));
                }
            }
        }
    };

    for phase in Phase::BOTH {
        let k = data.k(phase);
        // Volume terms and load on T cap Omega^i.
        for &t in topo.tris(phase) {
            let tri = mesh.triangle(t);
            let pts = mesh.triangle_points(t);
            let grads = geo::p1_gradients(&pts);
            let area = topo.phase_area(phase, t);
            let dofs: Vec<(NodeDof, f64)> =
                tri.iter().map(|&v| (dofmap.dof(phase, v), 0.0)).collect();
            scatter(
                &dofs,
                &|a, b| k * area * grads[a].dot(&grads[b]),
                &mut triplets,
            );
            if let Some(rule) = topo.phase_region_rule(phase, t, QUAD_DEGREE)? {
                for a in 0..3 {
                    let NodeDof::Free(ga) = dofmap.dof(phase, tri[a]) else {
                        continue;
                    };
                    rhs[ga] += rule.integrate(|x| data.f(phase, x) * geo::p1_value(&pts, &grads, a, x));
                }
            }
        }

        // Ghost penalty: beta * h_F * int_F k [[dn u]][[dn v]] with constant
        // jumps, i.e. beta * k * h_F^2 * jump_a * jump_b.
        if data.beta > 0.0 {
            for &e in topo.ghost_edges(phase) {
                let edge = mesh.edge(e);
                let (tm, tp) = (edge.tri_minus, edge.tri_plus.expect("interior"));
                let h = edge.length;
                let nf = edge.normal;
                // Union of the nodes of both triangles with their normal-gradient jump.
                let mut entries: Vec<(usize, f64)> = Vec::with_capacity(6);
                let add = |node: usize, val: f64, entries: &mut Vec<(usize, f64)>| {
                    if let Some(slot) = entries.iter_mut().find(|(n2, _)| *n2 == node) {
                        slot.1 += val;
                    } else {
                        entries.push((node, val));
                    }
                };
                let gm = geo::p1_gradients(&mesh.triangle_points(tm));
                for (a, &v) in mesh.triangle(tm).iter().enumerate() {
                    add(v, gm[a].dot(&nf), &mut entries);
                }
                let gp = geo::p1_gradients(&mesh.triangle_points(tp));
                for (a, &v) in mesh.triangle(tp).iter().enumerate() {
                    add(v, -gp[a].dot(&nf), &mut entries);
                }
                let dofs: Vec<(NodeDof, f64)> = entries
                    .iter()
                    .map(|&(node, jump)| (dofmap.dof(phase, node), jump))
                    .collect();
                let coeff = data.beta * k * h * h;
                scatter(
                    &dofs,
                    &|a, b| coeff * dofs[a].1 * dofs[b].1,
                    &mut triplets,
                );
            }
        }
    }

    // Nitsche coupling on the interface chords.
    let w = data.weights();
    for &t in topo.cut_tris() {
        let cell = topo.cut_cell(t).expect("cut");
        let tri = mesh.triangle(t);
        let pts = mesh.triangle_points(t);
        let grads = geo::p1_gradients(&pts);
        let n_gamma = cell.normal;
        let h_t = mesh.h_t(t);
        let rule = topo.interface_rule(t, QUAD_DEGREE)?.expect("cut");
        // Local index l = phase * 3 + a; jump sign +1 for phase 1, -1 for phase 2.
        let mut dofs: Vec<(NodeDof, f64)> = Vec::with_capacity(6);
        let mut flux = [0.0; 6]; // {K grad phi_l . n_Gamma}
        for phase in Phase::BOTH {
            for a in 0..3 {
                let l = phase.index() * 3 + a;
                flux[l] = w.w[phase.index()] * data.k(phase) * grads[a].dot(&n_gamma);
                dofs.push((dofmap.dof(phase, tri[a]), 0.0));
            }
        }
        let penalty = data.gamma * w.k_gamma / h_t;
        let mut local = [[0.0; 6]; 6];
        for (q, &x) in rule.points.iter().enumerate() {
            let wq = rule.weights[q];
            let mut jump = [0.0; 6];
            for a in 0..3 {
                let phi = geo::p1_value(&pts, &grads, a, x);
                jump[a] = phi;
                jump[3 + a] = -phi;
            }
            for l1 in 0..6 {
                for l2 in 0..6 {
                    local[l1][l2] += wq
                        * (penalty * jump[l1] * jump[l2]
                            - flux[l1] * jump[l2]
                            - flux[l2] * jump[l1]);
                }
            }
        }
        scatter(&dofs, &|a, b| local[a][b], &mut triplets);
    }

    let matrix = assemble(&triplets, n)?;
    Ok((matrix, rhs))
}

/// Primal solution bundle.
pub struct PrimalSolution {
    pub field: PrimalField,
    pub dofmap: DofMap,
    pub cg: CgSolution,
}

/// Assemble and solve the primal problem.
pub fn solve_primal(topo: &CutTopology, data: &ProblemData) -> Result<PrimalSolution> {
    let dofmap = build_dofmap(topo);
    let (matrix, rhs) = assemble_system(topo, &dofmap, data)?;
    let cg = solve_spd(&matrix, &rhs, data.solver_tol)?;
    let field = PrimalField::from_coefficients(&dofmap, topo.mesh().n_nodes(), &cg.x);
    Ok(PrimalSolution { field, dofmap, cg })
}

/// Ghost-penalty value `j_i(u^i, v^i)` for nodal fields of one subdomain.
fn ghost_penalty(
    topo: &CutTopology,
    phase: Phase,
    k: f64,
    u: &PrimalField,
    v: &PrimalField,
) -> f64 {
    let mesh = topo.mesh();
    let mut acc = 0.0;
    for &e in topo.ghost_edges(phase) {
        let edge = mesh.edge(e);
        let tp = edge.tri_plus.expect("interior");
        let nf = edge.normal;
        let ju = nf.dot(&(u.gradient(topo, phase, edge.tri_minus) - u.gradient(topo, phase, tp)));
        let jv = nf.dot(&(v.gradient(topo, phase, edge.tri_minus) - v.gradient(topo, phase, tp)));
        acc += edge.length * edge.length * k * ju * jv;
    }
    acc
}

/// Mesh-dependent energy norm:
/// `sum_i (k_i ||grad v^i||^2_{Omega^i} + j_i(v,v)) + sum_T int_{Gamma_T} (k_Gamma/h_T) [v]^2`.
pub fn energy_norm(field: &PrimalField, topo: &CutTopology, data: &ProblemData) -> f64 {
    let mut acc = 0.0;
    for phase in Phase::BOTH {
        let k = data.k(phase);
        for &t in topo.tris(phase) {
            let g = field.gradient(topo, phase, t);
            acc += k * topo.phase_area(phase, t) * g.norm_squared();
        }
        acc += ghost_penalty(topo, phase, k, field, field);
    }
    let w = data.weights();
    for &t in topo.cut_tris() {
        let rule = topo
            .interface_rule(t, QUAD_DEGREE)
            .expect("degree in range")
            .expect("cut");
        let h_t = topo.mesh().h_t(t);
        acc += w.k_gamma / h_t * rule.integrate(|x| field.jump(topo, t, x).powi(2));
    }
    acc.sqrt()
}

/// Broken energy seminorm of the error, `|u - u_h|_{1,K}` with
/// `|v|_{1,K}^2 = sum_i k_i ||grad v^i||^2_{Omega^i}`, by clipped quadrature.
pub fn energy_error(
    exact_grad: &[GradFn; 2],
    field: &PrimalField,
    topo: &CutTopology,
    data: &ProblemData,
) -> f64 {
    let mut acc = 0.0;
    for phase in Phase::BOTH {
        let k = data.k(phase);
        let grad = &exact_grad[phase.index()];
        for &t in topo.tris(phase) {
            let gh = field.gradient(topo, phase, t);
            if let Some(rule) = topo
                .phase_region_rule(phase, t, QUAD_DEGREE)
                .expect("degree in range")
            {
                acc += k * rule.integrate(|x| (grad(x) - gh).norm_squared());
            }
        }
    }
    acc.sqrt()
}

/// L2 norm of the error over the physical domain.
pub fn l2_error(
    exact: &[ScalarFn; 2],
    field: &PrimalField,
    topo: &CutTopology,
) -> f64 {
    let mut acc = 0.0;
    for phase in Phase::BOTH {
        let u = &exact[phase.index()];
        for &t in topo.tris(phase) {
            if let Some(rule) = topo
                .phase_region_rule(phase, t, QUAD_DEGREE)
                .expect("degree in range")
            {
                acc += rule.integrate(|x| (u(x) - field.value(topo, phase, t, x)).powi(2));
            }
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutgeom::InterfacePolyline;
    use crate::mesh::{Mesh, Rect};
    use approx::assert_relative_eq;

    fn vertical_topology(nx: usize, x: f64) -> CutTopology {
        let mesh = Mesh::structured(nx, nx, Rect::unit_square()).unwrap();
        let line =
            InterfacePolyline::line(Point2::new(x, -0.25), Point2::new(x, 1.25)).unwrap();
        CutTopology::classify(mesh, line).unwrap()
    }

    #[test]
    fn dofmap_counts_doubled_cut_band_nodes() {
        let topo = vertical_topology(4, 2.0_f64.sqrt() / 2.0);
        let dofmap = build_dofmap(&topo);
        // Interior nodes per fictitious domain, counted independently.
        let mut expected = 0;
        for phase in Phase::BOTH {
            for n in 0..topo.mesh().n_nodes() {
                if topo.node_in(phase, n) && !topo.mesh().is_boundary_node(n) {
                    expected += 1;
                }
            }
        }
        assert_eq!(dofmap.n_dofs(), expected);
        // Every dof maps back to exactly one (phase, node) pair.
        let mut seen = std::collections::HashSet::new();
        for dof in 0..dofmap.n_dofs() {
            let (phase, node) = dofmap.owner(dof);
            assert!(seen.insert((phase.index(), node)));
            assert_eq!(dofmap.dof(phase, node), NodeDof::Free(dof));
        }
    }

    #[test]
    fn zero_source_gives_zero_rhs_and_zero_solution() {
        let topo = vertical_topology(4, 2.0_f64.sqrt() / 2.0);
        let data = ProblemData::zero_source(1.0, 10.0).unwrap();
        let dofmap = build_dofmap(&topo);
        let (_, rhs) = assemble_system(&topo, &dofmap, &data).unwrap();
        assert!(rhs.iter().all(|&v| v == 0.0));
        let sol = solve_primal(&topo, &data).unwrap();
        assert!(sol.field.nodal(Phase::One).iter().all(|&v| v == 0.0));
        assert!(sol.field.nodal(Phase::Two).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        let topo = vertical_topology(4, 2.0_f64.sqrt() / 2.0);
        let data = ProblemData::zero_source(1.0, 10.0).unwrap();
        let dofmap = build_dofmap(&topo);
        let (a, _) = assemble_system(&topo, &dofmap, &data).unwrap();
        assert!(a.is_symmetric(1e-12));
    }

    #[test]
    fn small_system_is_positive_definite() {
        let topo = vertical_topology(2, 2.0_f64.sqrt() / 2.0);
        let data = ProblemData::zero_source(1.0, 10.0).unwrap();
        let dofmap = build_dofmap(&topo);
        let (a, _) = assemble_system(&topo, &dofmap, &data).unwrap();
        assert!(a.dim() <= 30);
        let dense = a.to_dense();
        let eig = dense.symmetric_eigen();
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        assert!(min > 0.0, "smallest eigenvalue {min}");
    }

    #[test]
    fn hat_function_energy_matches_element_sums() {
        // Interface far away: no ghost edges, no interface terms.
        let topo = vertical_topology(4, 4.0);
        let data = ProblemData::zero_source(1.0, 1.0).unwrap();
        let mut field = PrimalField::zero(topo.mesh().n_nodes());
        // Find an interior node.
        let n = (0..topo.mesh().n_nodes())
            .find(|&n| !topo.mesh().is_boundary_node(n))
            .unwrap();
        field.nodal_mut(Phase::One)[n] = 1.0;
        // Independent oracle: fit the linear function through the vertex values.
        let mut expected = 0.0;
        for &t in topo.mesh().node_triangles(n) {
            let pts = topo.mesh().triangle_points(t);
            let tri = topo.mesh().triangle(t);
            let vals: Vec<f64> = tri.iter().map(|&v| if v == n { 1.0 } else { 0.0 }).collect();
            // Solve [x y 1] c = vals for the affine coefficients.
            let m = nalgebra::Matrix3::new(
                pts[0].x, pts[0].y, 1.0, pts[1].x, pts[1].y, 1.0, pts[2].x, pts[2].y, 1.0,
            );
            let c = m.lu().solve(&nalgebra::Vector3::new(vals[0], vals[1], vals[2])).unwrap();
            let grad2 = c.x * c.x + c.y * c.y;
            expected += topo.mesh().area(t) * grad2;
        }
        assert_relative_eq!(
            energy_norm(&field, &topo, &data).powi(2),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn energy_norm_is_homogeneous() {
        let topo = vertical_topology(4, 2.0_f64.sqrt() / 2.0);
        let data = ProblemData::zero_source(1.0, 10.0).unwrap();
        let mut field = PrimalField::zero(topo.mesh().n_nodes());
        for (i, v) in field.nodal_mut(Phase::One).iter_mut().enumerate() {
            *v = (i as f64 * 0.61).sin();
        }
        for (i, v) in field.nodal_mut(Phase::Two).iter_mut().enumerate() {
            *v = (i as f64 * 0.37).cos();
        }
        let base = energy_norm(&field, &topo, &data);
        let mut scaled = field.clone();
        scaled.nodal_mut(Phase::One).iter_mut().for_each(|v| *v *= -2.5);
        scaled.nodal_mut(Phase::Two).iter_mut().for_each(|v| *v *= -2.5);
        assert_relative_eq!(
            energy_norm(&scaled, &topo, &data),
            2.5 * base,
            epsilon = 1e-12 * base
        );
        assert!(base > 0.0);
        let zero = PrimalField::zero(topo.mesh().n_nodes());
        assert_eq!(energy_norm(&zero, &topo, &data), 0.0);
    }

    #[test]
    fn energy_error_self_test_is_zero() {
        let topo = vertical_topology(4, 2.0_f64.sqrt() / 2.0);
        let data = ProblemData::zero_source(2.0, 5.0).unwrap();
        // A global linear field: u = x + 2y in both phases.
        let mut field = PrimalField::zero(topo.mesh().n_nodes());
        for phase in Phase::BOTH {
            for n in 0..topo.mesh().n_nodes() {
                let p = topo.mesh().node(n);
                field.nodal_mut(phase)[n] = p.x + 2.0 * p.y;
            }
        }
        let grad: GradFn = Arc::new(|_| Vector2::new(1.0, 2.0));
        let err = energy_error(&[grad.clone(), grad], &field, &topo, &data);
        assert!(err <= 1e-13, "self-test error {err}");
    }

    #[test]
    fn ghost_penalty_controls_coercivity_under_sliver_cuts() {
        // Dense spectra of the 4x4 system while the interface approaches a
        // mesh line. With the default beta the system stays SPD with a
        // delta-uniform condition number. Without ghost penalty the Nitsche
        // coercivity threshold for gamma blows up as delta -> 0: a gamma that
        // works for a moderate cut turns the matrix indefinite for a sliver.
        let deltas = [1e-2, 1e-4, 1e-6];
        let spectrum = |beta: f64, gamma: f64, delta: f64| -> (f64, f64) {
            let topo = vertical_topology(4, 0.5 + delta);
            let data = ProblemData::zero_source(1.0, 10.0)
                .unwrap()
                .with_beta(beta)
                .with_gamma(gamma);
            let dofmap = build_dofmap(&topo);
            let (a, _) = assemble_system(&topo, &dofmap, &data).unwrap();
            let eig = a.to_dense().symmetric_eigen();
            let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
            let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            (min, max)
        };
        let stabilized: Vec<(f64, f64)> = deltas
            .iter()
            .map(|&d| spectrum(DEFAULT_BETA, DEFAULT_GAMMA, d))
            .collect();
        for &(min, _) in &stabilized {
            assert!(min > 0.0, "stabilized system lost positivity: {stabilized:?}");
        }
        let conds: Vec<f64> = stabilized.iter().map(|&(min, max)| max / min).collect();
        let spread = conds.iter().cloned().fold(0.0, f64::max)
            / conds.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 10.0, "stabilized conditioning drifts: {conds:?}");

        let (coarse_min, _) = spectrum(0.0, 50.0, deltas[0]);
        let (sliver_min, _) = spectrum(0.0, 50.0, deltas[2]);
        assert!(
            coarse_min > 0.0,
            "gamma = 50 should be coercive for the moderate cut: {coarse_min}"
        );
        assert!(
            sliver_min < 0.0,
            "without ghost penalty the sliver cut should break coercivity: {sliver_min}"
        );
    }

    #[test]
    fn solution_stable_under_tiny_interface_perturbation() {
        let alpha = 2.0_f64.sqrt() / 2.0;
        let f1: ScalarFn = Arc::new(|p: Point2<f64>| (std::f64::consts::PI * p.y).sin());
        let f2 = f1.clone();
        let data = ProblemData::new(1.0, 10.0, f1, f2).unwrap();
        let solve_at = |a: f64| {
            let topo = vertical_topology(8, a);
            let sol = solve_primal(&topo, &data).unwrap();
            (topo, sol)
        };
        let (topo, sol) = solve_at(alpha);
        let (_, sol2) = solve_at(alpha + 1e-10);
        // Compare nodal values at uncut cells away from the interface.
        let mut max_diff = 0.0f64;
        for t in 0..topo.mesh().n_triangles() {
            if topo.is_cut_tri(t) {
                continue;
            }
            let phase = if topo.tri_in(Phase::One, t) {
                Phase::One
            } else {
                Phase::Two
            };
            for &n in &topo.mesh().triangle(t) {
                let d = (sol.field.nodal(phase)[n] - sol2.field.nodal(phase)[n]).abs();
                max_diff = max_diff.max(d);
            }
        }
        assert!(max_diff <= 1e-8, "interior drift {max_diff}");
    }
}
