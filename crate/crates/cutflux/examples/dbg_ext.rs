use cutflux::cutfem::{PrimalField, ProblemData};
use cutflux::cutgeom::{CutTopology, InterfacePolyline, Phase};
use cutflux::flux_rt::extend_source;
use cutflux::mesh::{Mesh, Rect};
use nalgebra::Point2;

fn main() {
    let mesh = Mesh::structured(4, 4, Rect::unit_square()).unwrap();
    let alpha = 2.0_f64.sqrt() / 2.0;
    let line = InterfacePolyline::line(Point2::new(alpha, -0.25), Point2::new(alpha, 1.25)).unwrap();
    let topo = CutTopology::classify(mesh, line).unwrap();
    let data = ProblemData::zero_source(3.0, 3.0).unwrap();
    let mut field = PrimalField::zero(topo.mesh().n_nodes());
    for phase in Phase::BOTH {
        for n in 0..topo.mesh().n_nodes() {
            let p = topo.mesh().node(n);
            field.nodal_mut(phase)[n] = 2.0 * p.x - p.y;
        }
    }
    let t = topo.cut_tris()[0];
    println!("cut tri {t}, pts {:?}", topo.mesh().triangle_points(t));
    println!("grad1 {:?}", field.gradient(&topo, Phase::One, t));
    println!("grad2 {:?}", field.gradient(&topo, Phase::Two, t));
    let cell = topo.cut_cell(t).unwrap();
    println!("segment {:?} normal {:?}", cell.segment, cell.normal);
    println!("jump at seg mid: {}", field.jump(&topo, t, Point2::from((cell.segment[0].coords + cell.segment[1].coords)/2.0)));
    for phase in Phase::BOTH {
        match extend_source(t, phase, &field, &topo, &data, 1) {
            Ok(ext) => println!("phase {:?}: coeffs {:?}", phase, ext.coeffs),
            Err(e) => println!("phase {:?}: error {e}", phase),
        }
    }
}
