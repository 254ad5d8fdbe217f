//! Per-subdomain Raviart-Thomas flux reconstruction from the primal solution
//! and the edge multipliers, with the cut-cell source extension and the
//! conservation and transmission audits.
//!
//! Each subdomain gets an H(div)-conforming field in `RT^m(Omega_h^i)`,
//! `m in {0, 1}`. Edge degrees of freedom follow the multiplier formula on
//! `F_h^i` (whole edges); edges of the fictitious domain outside `F_h^i` take
//! the one-sided trace of `k grad u_h^i`. On cut cells the cellwise
//! conservation holds with respect to an extension of the source to the
//! full triangle; the extension is defined by moments driven by the interface
//! and cut-edge jump terms of the discrete solution. The resulting global
//! field is conservative but its normal trace jumps across the interface,
//! which is what the immersed reconstruction repairs.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Point2, Vector2};

use crate::cutfem::{PrimalField, ProblemData, QUAD_DEGREE};
use crate::cutgeom::{CutTopology, Phase};
use crate::error::{Error, Result};
use crate::geo;
use crate::linalg::{solve_dense, DenseSystem};
use crate::multipliers::MultiplierField;
use crate::quadrature::{polygon_rule, segment_rule, triangle_rule};

/// Cut fragments with area ratio below this are rejected as degenerate. Kept
/// well below the 1e-6 h offsets of the robustness sweep, whose worst sliver
/// ratio is about 1e-12.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-14;

/// A flux representation queryable per cell: pointwise value, per-cell
/// divergence and edge normal traces.
pub trait FluxField {
    /// Value at a point of triangle `t`. On cut cells the `phase` selects the
    /// representation of the corresponding side; fields that are single-valued
    /// per cell ignore it.
    fn value(&self, topo: &CutTopology, phase: Phase, t: usize, p: Point2<f64>) -> Vector2<f64>;

    /// Divergence at a point of triangle `t` (a polynomial per cell).
    fn divergence(&self, topo: &CutTopology, phase: Phase, t: usize, p: Point2<f64>) -> f64;

    /// Normal trace on edge `e` seen from triangle `t`.
    fn normal_trace(
        &self,
        topo: &CutTopology,
        phase: Phase,
        t: usize,
        e: usize,
        p: Point2<f64>,
    ) -> f64 {
        self.value(topo, phase, t, p).dot(&topo.mesh().edge(e).normal)
    }
}

/// Local RT^m representation of one cell.
#[derive(Clone, Debug)]
enum RtCell {
    /// `sigma(x) = a + b x`.
    Rt0 { a: Vector2<f64>, b: f64 },
    /// Monomial coefficients `[a0,a1,a2,b0,b1,b2,g,h]` of
    /// `(a0 + a1 x + a2 y + g x^2 + h x y, b0 + b1 x + b2 y + g x y + h y^2)`.
    Rt1 { c: [f64; 8] },
}

impl RtCell {
    fn value(&self, p: Point2<f64>) -> Vector2<f64> {
        match self {
            RtCell::Rt0 { a, b } => a + *b * p.coords,
            RtCell::Rt1 { c } => Vector2::new(
                c[0] + c[1] * p.x + c[2] * p.y + c[6] * p.x * p.x + c[7] * p.x * p.y,
                c[3] + c[4] * p.x + c[5] * p.y + c[6] * p.x * p.y + c[7] * p.y * p.y,
            ),
        }
    }

    fn divergence(&self, p: Point2<f64>) -> f64 {
        match self {
            RtCell::Rt0 { b, .. } => 2.0 * b,
            RtCell::Rt1 { c } => c[1] + c[5] + 3.0 * (c[6] * p.x + c[7] * p.y),
        }
    }
}

/// H(div)-conforming flux on one fictitious domain `Omega_h^i`.
#[derive(Clone, Debug)]
pub struct SubdomainRtFlux {
    pub phase: Phase,
    pub degree: usize,
    /// Per edge: moments `int_F sigma.n_F w ds` for the Legendre weights
    /// `w in {1, s}` along the global edge orientation; `[1]` unused for m=0.
    edge_moments: Vec<[f64; 2]>,
    cells: HashMap<usize, RtCell>,
}

impl SubdomainRtFlux {
    pub fn edge_moment(&self, e: usize, moment: usize) -> f64 {
        self.edge_moments[e][moment]
    }

    fn cell(&self, t: usize) -> &RtCell {
        self.cells.get(&t).expect("triangle outside Omega_h^i")
    }
}

impl FluxField for SubdomainRtFlux {
    fn value(&self, _topo: &CutTopology, _phase: Phase, t: usize, p: Point2<f64>) -> Vector2<f64> {
        self.cell(t).value(p)
    }

    fn divergence(&self, _topo: &CutTopology, _phase: Phase, t: usize, p: Point2<f64>) -> f64 {
        self.cell(t).divergence(p)
    }
}

/// The pair of subdomain fluxes, seen as one (doubly-valued) field.
pub struct RtFluxPair(pub [SubdomainRtFlux; 2]);

impl FluxField for RtFluxPair {
    fn value(&self, topo: &CutTopology, phase: Phase, t: usize, p: Point2<f64>) -> Vector2<f64> {
        self.0[phase.index()].value(topo, phase, t, p)
    }

    fn divergence(&self, topo: &CutTopology, phase: Phase, t: usize, p: Point2<f64>) -> f64 {
        self.0[phase.index()].divergence(topo, phase, t, p)
    }
}

/// Polynomial extension of the source on the complement `T_C^i` of a cut
/// cell, in centered scaled monomials `{1, (x-c)/d, (y-c)/d}`.
#[derive(Clone, Debug)]
pub struct SourceExtension {
    pub coeffs: [f64; 3],
    center: Point2<f64>,
    scale: f64,
}

impl SourceExtension {
    pub fn eval(&self, p: Point2<f64>) -> f64 {
        self.coeffs[0]
            + self.coeffs[1] * (p.x - self.center.x) / self.scale
            + self.coeffs[2] * (p.y - self.center.y) / self.scale
    }
}

/// Source data extended to the whole triangle on every cut cell.
pub struct ExtendedSource {
    pub phase: Phase,
    pub degree: usize,
    entries: HashMap<usize, SourceExtension>,
}

impl ExtendedSource {
    pub fn get(&self, t: usize) -> Option<&SourceExtension> {
        self.entries.get(&t)
    }
}

fn polygon_diameter(poly: &[Point2<f64>]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..poly.len() {
        for j in (i + 1)..poly.len() {
            d = d.max((poly[j] - poly[i]).norm());
        }
    }
    d
}

/// Two-sided jump of the phase-`i` normal derivative `[[dn u_h^i]]` across an
/// interior edge. Zero on boundary edges: there is no second trace, and in the
/// extension identity the correction stems from `v|_T - <v>`, which vanishes
/// when the mean is one-sided.
fn normal_derivative_jump(
    u_h: &PrimalField,
    topo: &CutTopology,
    phase: Phase,
    e: usize,
) -> f64 {
    let edge = topo.mesh().edge(e);
    match edge.tri_plus {
        Some(tp) => {
            (u_h.gradient(topo, phase, edge.tri_minus) - u_h.gradient(topo, phase, tp))
                .dot(&edge.normal)
        }
        None => 0.0,
    }
}

/// Mean normal flux `<k_i grad u_h^i . n_F>` on an edge of `F_h^i`.
fn mean_flux(u_h: &PrimalField, topo: &CutTopology, phase: Phase, e: usize, k: f64) -> f64 {
    let edge = topo.mesh().edge(e);
    let gm = u_h.gradient(topo, phase, edge.tri_minus).dot(&edge.normal);
    k * match edge.tri_plus {
        Some(tp) => 0.5 * (gm + u_h.gradient(topo, phase, tp).dot(&edge.normal)),
        None => gm,
    }
}

/// Extend `f^i` from `T^i` to the complement `T_C^i` of one cut cell by the
/// moment problem driven by the interface and cut-edge terms of `u_h`.
pub fn extend_source(
    t: usize,
    phase: Phase,
    u_h: &PrimalField,
    topo: &CutTopology,
    data: &ProblemData,
    degree: usize,
) -> Result<SourceExtension> {
    let cell = topo
        .cut_cell(t)
        .ok_or_else(|| Error::InvalidArgument(format!("triangle {t} is not cut")))?;
    let complement = cell.complement(phase);
    let area = geo::polygon_signed_area(complement).abs();
    if area < DEGENERATE_AREA_RATIO * topo.mesh().area(t) {
        return Err(Error::DegenerateCut(format!(
            "complement of cut cell {t} has vanishing area {area:.3e}"
        )));
    }

    let center = geo::polygon_centroid(complement);
    let scale = polygon_diameter(complement);
    let basis = move |q: usize, p: Point2<f64>| -> f64 {
        match q {
            0 => 1.0,
            1 => (p.x - center.x) / scale,
            _ => (p.y - center.y) / scale,
        }
    };
    let n_basis = if degree == 0 { 1 } else { 3 };

    let w = data.weights();
    let n_gamma = cell.normal;
    let h_t = topo.mesh().h_t(t);
    // [k grad u_h . n_Gamma] across the interface and the sign factors.
    let flux_jump = data.k(Phase::One) * u_h.gradient(topo, Phase::One, t).dot(&n_gamma)
        - data.k(Phase::Two) * u_h.gradient(topo, Phase::Two, t).dot(&n_gamma);
    let weight = w.w[phase.index()] - 1.0;
    let sign = if phase == Phase::One { -1.0 } else { 1.0 };

    let gamma_rule = segment_rule(&cell.segment, QUAD_DEGREE)?;
    eprintln!(
        "DBG2 t={t} phase={phase:?} flux_jump={flux_jump:.3e} weight={weight} sign={sign} jump_mid={:.3e} gamma_len={:.3e}",
        u_h.jump(topo, t, Point2::from((cell.segment[0].coords + cell.segment[1].coords) / 2.0)),
        cell.segment_length()
    );
    let mut rhs = DVector::zeros(n_basis);
    for q in 0..n_basis {
        let mut v = gamma_rule.integrate(|x| {
            (flux_jump * weight + sign * data.gamma * w.k_gamma / h_t * u_h.jump(topo, t, x))
                * basis(q, x)
        });
        // Cut edges of dT: the complement fragments carry half the jump of
        // the phase normal derivative.
        for &e in &topo.mesh().triangle_edges(t) {
            if !topo.is_cut_edge(e) {
                continue;
            }
            let piece = topo
                .edge_phase_piece(phase.other(), e)
                .expect("cut edge has both pieces");
            let jump = data.k(phase) * normal_derivative_jump(u_h, topo, phase, e);
            let rule = segment_rule(&piece, 2)?;
            v += 0.5 * jump * rule.integrate(|x| basis(q, x));
        }
        rhs[q] = v;
    }

    // Mass-matrix solve on the clipped polygon.
    let rule = polygon_rule(complement, 2)?;
    let mut mass = DMatrix::zeros(n_basis, n_basis);
    for qa in 0..n_basis {
        for qb in 0..n_basis {
            mass[(qa, qb)] = rule.integrate(|x| basis(qa, x) * basis(qb, x));
        }
    }
    eprintln!("DBG extend_source t={t} phase={phase:?}: rhs={rhs:?} mass={mass:?}");
    let sol = solve_dense(&DenseSystem::square(mass, rhs))?;
    let mut coeffs = [0.0; 3];
    for q in 0..n_basis {
        coeffs[q] = sol.x[q];
    }
    Ok(SourceExtension {
        coeffs,
        center,
        scale,
    })
}

/// Build the extension table for all cut cells of one subdomain.
pub fn extend_source_all(
    phase: Phase,
    u_h: &PrimalField,
    topo: &CutTopology,
    data: &ProblemData,
    degree: usize,
) -> Result<ExtendedSource> {
    let mut entries = HashMap::new();
    for &t in topo.cut_tris() {
        entries.insert(t, extend_source(t, phase, u_h, topo, data, degree)?);
    }
    Ok(ExtendedSource {
        phase,
        degree,
        entries,
    })
}

/// Reconstruct the subdomain fluxes `sigma_h^i in RT^m(Omega_h^i)` for both
/// subdomains from the primal solution and the multiplier.
pub fn reconstruct_rt(
    u_h: &PrimalField,
    theta: &MultiplierField,
    topo: &CutTopology,
    data: &ProblemData,
    degree: usize,
) -> Result<RtFluxPair> {
    if degree > 1 {
        return Err(Error::InvalidArgument(format!(
            "RT^m supports m in {{0, 1}}, got {degree}"
        )));
    }
    let fields = [
        reconstruct_rt_phase(Phase::One, u_h, theta, topo, data, degree)?,
        reconstruct_rt_phase(Phase::Two, u_h, theta, topo, data, degree)?,
    ];
    Ok(RtFluxPair(fields))
}

fn reconstruct_rt_phase(
    phase: Phase,
    u_h: &PrimalField,
    theta: &MultiplierField,
    topo: &CutTopology,
    data: &ProblemData,
    degree: usize,
) -> Result<SubdomainRtFlux> {
    let mesh = topo.mesh();
    let k = data.k(phase);
    let mut edge_moments = vec![[0.0; 2]; mesh.n_edges()];

    // Collect the edges of Omega_h^i.
    let mut in_domain = vec![false; mesh.n_edges()];
    for &t in topo.tris(phase) {
        for &e in &mesh.triangle_edges(t) {
            in_domain[e] = true;
        }
    }
    for e in 0..mesh.n_edges() {
        if !in_domain[e] {
            continue;
        }
        let h = mesh.h_f(e);
        if topo.edge_in(phase, e) {
            // Multiplier formula on F_h^i, whole-edge moments.
            let mean = mean_flux(u_h, topo, phase, e, k);
            let tv = theta.edge_values(phase, e);
            edge_moments[e][0] = mean * h - 0.5 * k * h * (tv[0] + tv[1]);
            edge_moments[e][1] = -0.5 * k * h * (tv[1] - tv[0]);
        } else {
            // Fictitious-boundary edges: one-sided trace of k grad u_h^i.
            let edge = mesh.edge(e);
            let mut value = 0.0;
            let mut count = 0.0;
            for t in [Some(edge.tri_minus), edge.tri_plus].into_iter().flatten() {
                if topo.tri_in(phase, t) {
                    value += k * u_h.gradient(topo, phase, t).dot(&edge.normal);
                    count += 1.0;
                }
            }
            edge_moments[e][0] = value / count * h;
            edge_moments[e][1] = 0.0;
        }
    }

    // Per-cell local representations.
    let mut cells = HashMap::new();
    for &t in topo.tris(phase) {
        let cell = if degree == 0 {
            rt0_cell(mesh, t, &edge_moments)
        } else {
            rt1_cell(t, u_h, topo, data, phase, &edge_moments)?
        };
        cells.insert(t, cell);
    }
    Ok(SubdomainRtFlux {
        phase,
        degree,
        edge_moments,
        cells,
    })
}

fn rt0_cell(mesh: &crate::mesh::Mesh, t: usize, edge_moments: &[[f64; 2]]) -> RtCell {
    let pts = mesh.triangle_points(t);
    let inv_2a = 1.0 / (2.0 * mesh.area(t));
    let mut a = Vector2::zeros();
    let mut b = 0.0;
    for (j, &e) in mesh.triangle_edges(t).iter().enumerate() {
        let q = mesh.orientation(t, e) * edge_moments[e][0];
        // Basis (x - p_j) / (2A) carries unit outward flux through edge j.
        a -= q * inv_2a * pts[j].coords;
        b += q * inv_2a;
    }
    RtCell::Rt0 { a, b }
}

fn rt1_cell(
    t: usize,
    u_h: &PrimalField,
    topo: &CutTopology,
    data: &ProblemData,
    phase: Phase,
    edge_moments: &[[f64; 2]],
) -> Result<RtCell> {
    let mesh = topo.mesh();
    let k = data.k(phase);
    // Monomial coefficient layout: see `RtCell::Rt1`.
    let eval = |c: usize, p: Point2<f64>| -> Vector2<f64> {
        match c {
            0 => Vector2::new(1.0, 0.0),
            1 => Vector2::new(p.x, 0.0),
            2 => Vector2::new(p.y, 0.0),
            3 => Vector2::new(0.0, 1.0),
            4 => Vector2::new(0.0, p.x),
            5 => Vector2::new(0.0, p.y),
            6 => Vector2::new(p.x * p.x, p.x * p.y),
            _ => Vector2::new(p.x * p.y, p.y * p.y),
        }
    };

    let mut a = DMatrix::zeros(8, 8);
    let mut rhs = DVector::zeros(8);
    let mut row = 0;

    // Edge moments against {1, s} in the global edge orientation.
    for &e in &mesh.triangle_edges(t) {
        let edge = mesh.edge(e);
        let pa = mesh.node(edge.nodes[0]);
        let pb = mesh.node(edge.nodes[1]);
        let rule = segment_rule(&[pa, pb], QUAD_DEGREE)?;
        let mid = Point2::from((pa.coords + pb.coords) / 2.0);
        let dir = pb - pa;
        let legendre = move |p: Point2<f64>| 2.0 * (p - mid).dot(&dir) / dir.norm_squared();
        for m in 0..2 {
            for c in 0..8 {
                a[(row, c)] = rule.integrate(|p| {
                    let w = if m == 0 { 1.0 } else { legendre(p) };
                    eval(c, p).dot(&edge.normal) * w
                });
            }
            rhs[row] = edge_moments[e][m];
            row += 1;
        }
    }

    // Interior moments against constant vector fields.
    let pts = mesh.triangle_points(t);
    let tri_rule = triangle_rule(&pts, 2)?;
    let grad_u = u_h.gradient(topo, phase, t);
    for dir in [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)] {
        for c in 0..8 {
            a[(row, c)] = tri_rule.integrate(|p| eval(c, p).dot(&dir));
        }
        let mut v = k * mesh.area(t) * grad_u.dot(&dir);
        if let Some(cell) = topo.cut_cell(t) {
            let w = data.weights();
            let g_rule = segment_rule(&cell.segment, QUAD_DEGREE)?;
            v -= w.w[phase.index()] * k * dir.dot(&cell.normal)
                * g_rule.integrate(|x| u_h.jump(topo, t, x));
        }
        for &e in &mesh.triangle_edges(t) {
            if !topo.is_ghost_edge(phase, e) {
                continue;
            }
            let edge = mesh.edge(e);
            let jump_u = normal_derivative_jump(u_h, topo, phase, e);
            let jump_zeta = mesh.orientation(t, e) * dir.dot(&edge.normal);
            v += data.beta * edge.length * edge.length * k * jump_u * jump_zeta;
        }
        rhs[row] = v;
        row += 1;
    }

    let sol = solve_dense(&DenseSystem::square(a, rhs))?;
    let mut c = [0.0; 8];
    for i in 0..8 {
        c[i] = sol.x[i];
    }
    Ok(RtCell::Rt1 { c })
}

/// Per-cell conservation residuals `|| div sigma_h^i + pi_T^m f^i ||_T`
/// against the (extended) source.
pub struct ConservationAudit {
    pub per_cell: Vec<(usize, f64)>,
    pub max_residual: f64,
}

/// Audit `-(div sigma_h^i)|_T = pi_T^m f^i` over `T_h^i`, using the extended
/// source on cut cells.
pub fn conservation_audit_rt(
    flux: &SubdomainRtFlux,
    extension: &ExtendedSource,
    topo: &CutTopology,
    data: &ProblemData,
) -> Result<ConservationAudit> {
    let phase = flux.phase;
    let degree = flux.degree;
    let mesh = topo.mesh();
    let mut per_cell = Vec::new();
    let mut max_residual = 0.0f64;
    for &t in topo.tris(phase) {
        let pts = mesh.triangle_points(t);
        let center = geo::polygon_centroid(&pts);
        let scale = mesh.h_t(t);
        let basis = move |q: usize, p: Point2<f64>| -> f64 {
            match q {
                0 => 1.0,
                1 => (p.x - center.x) / scale,
                _ => (p.y - center.y) / scale,
            }
        };
        let n_basis = if degree == 0 { 1 } else { 3 };

        // Moments of the (extended) source against the cell basis.
        let mut moments = DVector::zeros(n_basis);
        for q in 0..n_basis {
            let mut v = match topo.phase_region_rule(phase, t, QUAD_DEGREE)? {
                Some(rule) => rule.integrate(|x| data.f(phase, x) * basis(q, x)),
                None => 0.0,
            };
            if let Some(cell) = topo.cut_cell(t) {
                let ext = extension
                    .get(t)
                    .ok_or_else(|| Error::InvalidArgument(format!("no extension on cell {t}")))?;
                let rule = polygon_rule(cell.complement(phase), 2)?;
                v += rule.integrate(|x| ext.eval(x) * basis(q, x));
            }
            moments[q] = v;
        }
        let tri_rule = triangle_rule(&pts, 2)?;
        let mut mass = DMatrix::zeros(n_basis, n_basis);
        for qa in 0..n_basis {
            for qb in 0..n_basis {
                mass[(qa, qb)] = tri_rule.integrate(|x| basis(qa, x) * basis(qb, x));
            }
        }
        let proj = solve_dense(&DenseSystem::square(mass, moments))?.x;
        let projected = move |p: Point2<f64>| -> f64 {
            (0..n_basis).map(|q| proj[q] * basis(q, p)).sum()
        };
        let residual = tri_rule
            .integrate(|p| {
                let v = flux.divergence(topo, phase, t, p) + projected(p);
                v * v
            })
            .sqrt();
        max_residual = max_residual.max(residual);
        per_cell.push((t, residual));
    }
    Ok(ConservationAudit {
        per_cell,
        max_residual,
    })
}

/// L2 norm over the interface of the normal-flux jump of the paired
/// subdomain reconstruction, `|| [sigma~ . n_Gamma] ||_Gamma`. Nonzero in
/// general: the paired field is not H(div)-conforming across the interface.
pub fn interface_jump_rt(fluxes: &RtFluxPair, topo: &CutTopology) -> Result<f64> {
    let mut acc = 0.0;
    for &t in topo.cut_tris() {
        let cell = topo.cut_cell(t).expect("cut");
        let n = cell.normal;
        let rule = segment_rule(&cell.segment, QUAD_DEGREE)?;
        acc += rule.integrate(|p| {
            let jump = fluxes.0[0].value(topo, Phase::One, t, p).dot(&n)
                - fluxes.0[1].value(topo, Phase::Two, t, p).dot(&n);
            jump * jump
        });
    }
    Ok(acc.sqrt())
}

/// Largest flux magnitude sampled at cell centroids, a scale for relative
/// audit thresholds.
pub fn flux_scale<F: FluxField>(flux: &F, topo: &CutTopology) -> f64 {
    let mesh = topo.mesh();
    let mut s = 0.0f64;
    for phase in Phase::BOTH {
        for &t in topo.tris(phase) {
            let c = geo::polygon_centroid(&mesh.triangle_points(t));
            s = s.max(flux.value(topo, phase, t, c).norm());
        }
    }
    s
}

/// CSV dump of the conservation audit: cell, subdomain, residual, cut flag.
pub fn audit_csv(audit: &ConservationAudit, phase: Phase, topo: &CutTopology) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("cell,subdomain,residual,cut\n");
    for &(t, r) in &audit.per_cell {
        let _ = writeln!(
            out,
            "{},{},{:.6e},{}",
            t,
            phase.index() + 1,
            r,
            topo.is_cut_tri(t) as u8
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutfem::{solve_primal, ScalarFn};
    use crate::cutgeom::InterfacePolyline;
    use crate::mesh::{Mesh, Rect};
    use crate::multipliers::build_multiplier;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn vertical_topology(nx: usize, x: f64) -> CutTopology {
        let mesh = Mesh::structured(nx, nx, Rect::unit_square()).unwrap();
        let line = InterfacePolyline::line(Point2::new(x, -0.25), Point2::new(x, 1.25)).unwrap();
        CutTopology::classify(mesh, line).unwrap()
    }

    fn sin_source() -> ScalarFn {
        Arc::new(|p: Point2<f64>| {
            (std::f64::consts::PI * p.x).sin() * (std::f64::consts::PI * p.y).sin()
        })
    }

    #[test]
    fn zero_data_gives_zero_flux_and_extension() {
        let topo = vertical_topology(4, 2.0_f64.sqrt() / 2.0);
        let data = ProblemData::zero_source(1.0, 10.0).unwrap();
        let sol = solve_primal(&topo, &data).unwrap();
        let theta = build_multiplier(&sol.field, &topo, &data).unwrap();
        let fluxes = reconstruct_rt(&sol.field, &theta, &topo, &data, 0).unwrap();
        assert!(flux_scale(&fluxes, &topo) <= 1e-14);
        for phase in Phase::BOTH {
            let ext = extend_source_all(phase, &sol.field, &topo, &data, 0).unwrap();
            for &t in topo.cut_tris() {
                assert!(ext.get(t).unwrap().coeffs.iter().all(|c| c.abs() <= 1e-14));
            }
            let audit =
                conservation_audit_rt(&fluxes.0[phase.index()], &ext, &topo, &data).unwrap();
            assert!(audit.max_residual <= 1e-14);
        }
    }

    #[test]
    fn extension_vanishes_for_matched_continuous_field() {
        // k1 = k2 and a globally linear u_h: every jump in the extension's
        // right-hand side vanishes.
        let topo = vertical_topology(4, 2.0_f64.sqrt() / 2.0);
        let data = ProblemData::zero_source(3.0, 3.0).unwrap();
        let mut field = PrimalField::zero(topo.mesh().n_nodes());
        for phase in Phase::BOTH {
            for n in 0..topo.mesh().n_nodes() {
                let p = topo.mesh().node(n);
                field.nodal_mut(phase)[n] = 2.0 * p.x - p.y;
            }
        }
        for phase in Phase::BOTH {
            for &t in topo.cut_tris() {
                let ext = extend_source(t, phase, &field, &topo, &data, 1).unwrap();
                for c in ext.coeffs {
                    assert!(c.abs() <= 1e-12, "extension coefficient {c}");
                }
            }
        }
    }

    #[test]
    fn extension_matches_direct_quadrature_oracle() {
        // m = 0: the constant extension equals the right-hand side integral
        // divided by the complement area, recomputed here independently.
        let topo = vertical_topology(8, 2.0_f64.sqrt() / 2.0);
        let f = sin_source();
        let data = ProblemData::new(1.0, 10.0, f.clone(), f).unwrap();
        let sol = solve_primal(&topo, &data).unwrap();
        let t = topo.cut_tris()[1];
        let phase = Phase::One;
        let ext = extend_source(t, phase, &sol.field, &topo, &data, 0).unwrap();

        let cell = topo.cut_cell(t).unwrap();
        let w = data.weights();
        let n_gamma = cell.normal;
        let h_t = topo.mesh().h_t(t);
        let flux_jump = data.k(Phase::One)
            * sol.field.gradient(&topo, Phase::One, t).dot(&n_gamma)
            - data.k(Phase::Two) * sol.field.gradient(&topo, Phase::Two, t).dot(&n_gamma);
        let rule = segment_rule(&cell.segment, 4).unwrap();
        let mut rhs = rule.integrate(|x| {
            flux_jump * (w.w[0] - 1.0)
                - data.gamma * w.k_gamma / h_t * sol.field.jump(&topo, t, x)
        });
        for &e in &topo.mesh().triangle_edges(t) {
            if !topo.is_cut_edge(e) {
                continue;
            }
            let piece = topo.edge_phase_piece(Phase::Two, e).unwrap();
            let jump = data.k(phase) * normal_derivative_jump(&sol.field, &topo, phase, e);
            rhs += 0.5 * jump * (piece[1] - piece[0]).norm();
        }
        let area = geo::polygon_signed_area(cell.complement(phase)).abs();
        assert_relative_eq!(ext.coeffs[0], rhs / area, epsilon = 1e-10 * (rhs / area).abs());
    }

    #[test]
    fn rt0_trace_matches_gradient_on_smooth_uncut_edges() {
        // theta = 0 and a globally linear field: the reconstruction returns
        // k grad u on every edge.
        let topo = vertical_topology(4, 4.0);
        let data = ProblemData::zero_source(2.0, 2.0).unwrap();
        let mut field = PrimalField::zero(topo.mesh().n_nodes());
        for phase in Phase::BOTH {
            for n in 0..topo.mesh().n_nodes() {
                let p = topo.mesh().node(n);
                field.nodal_mut(phase)[n] = 3.0 * p.x + p.y;
            }
        }
        let theta = MultiplierField::zero(topo.mesh().n_edges());
        let fluxes = reconstruct_rt(&field, &theta, &topo, &data, 0).unwrap();
        let flux = &fluxes.0[0];
        let expected: Vector2<f64> = 2.0 * Vector2::new(3.0, 1.0);
        for &t in topo.tris(Phase::One) {
            let c = geo::polygon_centroid(&topo.mesh().triangle_points(t));
            let v = flux.value(&topo, Phase::One, t, c);
            assert_relative_eq!(v.x, expected.x, epsilon = 1e-11);
            assert_relative_eq!(v.y, expected.y, epsilon = 1e-11);
        }
    }

    #[test]
    fn manufactured_conservation_m0_and_m1() {
        let topo = vertical_topology(8, 2.0_f64.sqrt() / 2.0);
        let f = sin_source();
        let data = ProblemData::new(1.0, 10.0, f.clone(), f).unwrap();
        let sol = solve_primal(&topo, &data).unwrap();
        let theta = build_multiplier(&sol.field, &topo, &data).unwrap();
        let f_norm = 0.5; // ||sin sin||_{L2} on the unit square
        for degree in [0, 1] {
            let fluxes = reconstruct_rt(&sol.field, &theta, &topo, &data, degree).unwrap();
            for phase in Phase::BOTH {
                let ext = extend_source_all(phase, &sol.field, &topo, &data, degree).unwrap();
                let audit =
                    conservation_audit_rt(&fluxes.0[phase.index()], &ext, &topo, &data).unwrap();
                assert!(
                    audit.max_residual <= 1e-8 * f_norm,
                    "m={degree} phase {} residual {:.3e}",
                    phase.index() + 1,
                    audit.max_residual
                );
            }
        }
    }

    #[test]
    fn rt1_edge_moments_refine_rt0() {
        let topo = vertical_topology(4, 2.0_f64.sqrt() / 2.0);
        let f = sin_source();
        let data = ProblemData::new(1.0, 10.0, f.clone(), f).unwrap();
        let sol = solve_primal(&topo, &data).unwrap();
        let theta = build_multiplier(&sol.field, &topo, &data).unwrap();
        let rt0 = reconstruct_rt(&sol.field, &theta, &topo, &data, 0).unwrap();
        let rt1 = reconstruct_rt(&sol.field, &theta, &topo, &data, 1).unwrap();
        for phase in Phase::BOTH {
            for &e in topo.edges(phase) {
                assert_relative_eq!(
                    rt0.0[phase.index()].edge_moment(e, 0),
                    rt1.0[phase.index()].edge_moment(e, 0),
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn interface_jump_positive_for_contrast() {
        let topo = vertical_topology(8, 2.0_f64.sqrt() / 2.0);
        let f = sin_source();
        let data = ProblemData::new(1.0, 10.0, f.clone(), f).unwrap();
        let sol = solve_primal(&topo, &data).unwrap();
        let theta = build_multiplier(&sol.field, &topo, &data).unwrap();
        let fluxes = reconstruct_rt(&sol.field, &theta, &topo, &data, 0).unwrap();
        let jump = interface_jump_rt(&fluxes, &topo).unwrap();
        assert!(jump > 1e-6, "expected a strictly positive interface jump, got {jump:.3e}");
    }

    #[test]
    fn hdiv_conformity_inside_each_subdomain() {
        // Shared edge moments mean identical normal traces from both sides.
        let topo = vertical_topology(4, 2.0_f64.sqrt() / 2.0);
        let f = sin_source();
        let data = ProblemData::new(1.0, 10.0, f.clone(), f).unwrap();
        let sol = solve_primal(&topo, &data).unwrap();
        let theta = build_multiplier(&sol.field, &topo, &data).unwrap();
        let fluxes = reconstruct_rt(&sol.field, &theta, &topo, &data, 1).unwrap();
        for phase in Phase::BOTH {
            let flux = &fluxes.0[phase.index()];
            for &e in topo.edges(phase) {
                let edge = topo.mesh().edge(e);
                let Some(tp) = edge.tri_plus else { continue };
                if !topo.tri_in(phase, edge.tri_minus) || !topo.tri_in(phase, tp) {
                    continue;
                }
                let pa = topo.mesh().node(edge.nodes[0]);
                let pb = topo.mesh().node(edge.nodes[1]);
                for s in [0.21, 0.5, 0.83] {
                    let p = Point2::from(pa.coords * (1.0 - s) + pb.coords * s);
                    let from_minus = flux.normal_trace(&topo, phase, edge.tri_minus, e, p);
                    let from_plus = flux.normal_trace(&topo, phase, tp, e, p);
                    assert_relative_eq!(from_minus, from_plus, epsilon = 1e-9, max_relative = 1e-9);
                }
            }
        }
    }
}
