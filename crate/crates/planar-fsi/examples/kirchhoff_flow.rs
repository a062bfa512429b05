//! The potential flow induced by a moving body: solve the Kirchhoff
//! problem for a translating, spinning ellipse and inspect the boundary
//! condition and the far-field decay.
//!
//! Run with: cargo run --release --example kirchhoff_flow

use planar_fsi::geometry::BodyShape;
use planar_fsi::panels::PanelSystem;
use planar_fsi::Vec2;

fn main() -> anyhow::Result<()> {
    let sys = PanelSystem::new(BodyShape::ellipse(1.5, 0.8)?, 128)?;
    let ell = Vec2::new(1.0, -0.3);
    let r = 0.7;
    let flow = sys.kirchhoff_flow(ell, r);

    // the defining Neumann condition: grad phi . n = (ell + r x^perp) . n
    let mut worst = 0.0f64;
    for (i, (&x, &n)) in sys.nodes().iter().zip(sys.normals()).enumerate() {
        let rigid = ell + r * planar_fsi::perp(x);
        let defect = (flow.boundary_gradient(i) - rigid).dot(&n).abs();
        worst = worst.max(defect);
    }
    println!("boundary normal-velocity defect (128 panels): {worst:.3e}");
    println!("circulation of the Kirchhoff flow:            {:.3e}", flow.circulation());

    println!();
    println!("far-field speed decay (dipole, so |u| ~ 1/|x|^2):");
    println!("{:>8} {:>14} {:>16}", "|x|", "|u|", "|u| * |x|^2");
    for rho in [3.0, 6.0, 12.0, 24.0, 48.0] {
        let x = rho * Vec2::new(0.6, 0.8);
        let u = flow.gradient(x)?;
        println!("{rho:>8.1} {:>14.6e} {:>16.8}", u.norm(), u.norm() * rho * rho);
    }

    // Green's identity pairing of two potentials equals the added-mass entry
    let m2 = sys.added_mass().matrix;
    let energy = (m2 * planar_fsi::Vec3::new(ell.x, ell.y, r))
        .dot(&planar_fsi::Vec3::new(ell.x, ell.y, r));
    println!();
    println!("kinetic energy of the fluid, 2E = v . M2 v = {:.8}", energy);
    Ok(())
}
