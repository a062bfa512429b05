//! Panel-count convergence of the added-mass tensor against closed forms:
//! disc -> diag(pi a^2, pi a^2, 0), ellipse -> diag(pi b^2, pi a^2, ...).
//!
//! Run with: cargo run --release --example added_mass

use planar_fsi::geometry::BodyShape;
use planar_fsi::panels::PanelSystem;

fn main() -> anyhow::Result<()> {
    let pi = std::f64::consts::PI;

    println!("unit disc, exact M2 = diag(pi, pi, 0)");
    println!("{:>7} {:>14} {:>14} {:>12}", "panels", "M2[0,0]", "M2[1,1]", "rel err");
    for n in [16, 32, 64, 128, 256] {
        let sys = PanelSystem::new(BodyShape::disc(1.0)?, n)?;
        let m = sys.added_mass().matrix;
        let err = ((m[(0, 0)] - pi) / pi).abs().max(((m[(1, 1)] - pi) / pi).abs());
        println!("{n:>7} {:>14.8} {:>14.8} {err:>12.3e}", m[(0, 0)], m[(1, 1)]);
    }

    let (a, b) = (2.0, 1.0);
    println!();
    println!("ellipse a={a}, b={b}, exact translational entries pi b^2 = {:.6}, pi a^2 = {:.6}",
        pi * b * b, pi * a * a);
    println!("{:>7} {:>14} {:>14} {:>14}", "panels", "M2[0,0]", "M2[1,1]", "M2[2,2]");
    for n in [32, 64, 128, 256] {
        let sys = PanelSystem::new(BodyShape::ellipse(a, b)?, n)?;
        let m = sys.added_mass().matrix;
        println!("{n:>7} {:>14.8} {:>14.8} {:>14.8}", m[(0, 0)], m[(1, 1)], m[(2, 2)]);
    }

    let sys = PanelSystem::new(BodyShape::ellipse(a, b)?, 256)?;
    let m2 = sys.added_mass();
    println!();
    println!("symmetry defect at 256 panels: {:.3e}", m2.symmetry_defect());
    println!("smallest eigenvalue:           {:.6e}", m2.min_eigenvalue());
    println!("pose-invariance defect:        {:.3e}", sys.added_mass_invariance_defect()?);
    Ok(())
}
