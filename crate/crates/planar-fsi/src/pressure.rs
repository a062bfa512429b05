//! Pressure potential and the quadratic fluid force on the body.
//!
//! The pressure of an ideal flow around a rigid body splits into a part
//! proportional to the body acceleration (absorbed into the added inertia)
//! and a potential `mu` driven by the squared velocity field:
//!
//! ```text
//!   -Delta mu = tr{grad u . grad u}   in the fluid,
//!    dmu/dn   = sigma                 on the boundary (n into the body),
//!    mu -> 0                          at infinity,
//! ```
//!
//! after which the body momenta obey `M(theta) [l; r]' = F` with `M` the
//! virtual inertia at the current pose and `F_a = int grad mu . grad Phi_a`.
//! Green's identity turns each `F_a` into a boundary pairing with `sigma`
//! plus a volume pairing with the source, so the force never needs `mu`
//! itself; the potential is still assembled (Newtonian part, a monopole that
//! restores decay, and a single-layer correction for the boundary data) for
//! diagnostics and field output.
//!
//! The volume source is integrated on a body-fitted mesh: radial rays from
//! the boundary out to a cut circle, geometrically growing Gauss bands along
//! each ray, a thin first band collapsed onto the boundary as a single layer
//! (direct quadrature of the flux kernel would diverge there), smooth
//! partition-of-unity patches around vortex cores, and an analytic monopole
//! tail beyond the cut. Particle self-fields are peeled off in closed form
//! before anything is quadratured.

use crate::geometry::RigidState;
use crate::panels::{greens_gradient, greens_value, HarmonicPotential, PanelSystem};
use crate::vortex::{CorrectedField, VortexField};
use crate::{perp, Error, Result, Vec2, Vec3};
use std::f64::consts::{PI, TAU};

/// Collapsed-layer thickness in units of the mean panel. Thick enough that
/// the first quadratured band sits outside the flux kernel's resolution
/// limit, thin enough that the collapse's lost moment stays at tolerance.
const LAYER_FRACTION: f64 = 0.5;
/// Gauss nodes across the collapsed layer.
const LAYER_NODES: usize = 6;
/// Rays are doubled while a band starts within this many mean panels of the
/// wall, where the integrand still varies on the panel scale.
const REFINED_WITHIN: f64 = 3.0;
/// Particle patches blend out between these multiples of the core radius.
const PATCH_INNER: f64 = 3.0;
const PATCH_OUTER: f64 = 6.0;
const PATCH_RADIAL: usize = 10;
const PATCH_ANGULAR: usize = 24;
/// Particles closer to the wall than this many core radii get no patch; the
/// background mesh alone integrates their neighborhood.
const PATCH_CLEARANCE: f64 = 8.0;

/// Volume-quadrature resolution knobs.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureConfig {
    /// Cut radius in units of the body radius; the source beyond it is
    /// modeled by its circulation monopole `c / rho^4`.
    pub outer_radius_factor: f64,
    /// Geometric growth of the radial bands.
    pub band_growth: f64,
    /// Gauss nodes per band.
    pub radial_nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            outer_radius_factor: 150.0,
            band_growth: 1.6,
            radial_nodes: 6,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// three-term recurrence.
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 2);
    let mut xs = vec![0.0; m];
    let mut ws = vec![0.0; m];
    for k in 0..m {
        let mut x = (PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=m {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        xs[k] = x;
        ws[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Quintic smoothstep: `0` below `0`, `1` above `1`, `C^2` in between.
fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (x * (6.0 * x - 15.0) + 10.0)
    }
}

fn cross(a: Vec2<f64>, b: Vec2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Closed forms for one isolated blob: the swirl balance integrates its
/// pressure to `-G^2 / (8 pi^2 (rho^2 + eps^2))`, whose negative Laplacian
/// is the blob's own `tr{grad u . grad u}`.
fn blob_self_value(r2: f64, g2: f64, e2: f64) -> f64 {
    -g2 / (8.0 * PI * PI * (r2 + e2))
}

fn blob_self_gradient(z: Vec2<f64>, g2: f64, e2: f64) -> Vec2<f64> {
    let q = z.norm_squared() + e2;
    z * (g2 / (4.0 * PI * PI * q * q))
}

fn blob_self_source(r2: f64, g2: f64, e2: f64) -> f64 {
    let q = r2 + e2;
    g2 * (r2 - e2) / (2.0 * PI * PI * q * q * q)
}

/// Neumann data for the pressure potential from the boundary velocity:
/// `sigma = -kappa (w . tau)^2 - n . (r (2u - u_S - l)^perp)` with
/// `w = u - u_S`. The first term is the distance Hessian applied to the
/// relative slip; the sign carries our convention that the signed distance
/// grows away from the body while `n` points into it.
pub fn sigma_boundary_data(
    panels: &PanelSystem,
    state: &RigidState,
    velocity: &[Vec2<f64>],
) -> Vec<f64> {
    let n = panels.n();
    assert_eq!(velocity.len(), n, "one velocity per boundary node");
    let nodes = panels.nodes();
    let tangents = panels.tangents();
    let normals = panels.normals();
    let curvatures = panels.curvatures();
    (0..n)
        .map(|i| {
            let u = velocity[i];
            let us = state.solid_velocity(nodes[i]);
            let wt = (u - us).dot(&tangents[i]);
            let v = u * 2.0 - us - state.ell;
            -curvatures[i] * wt * wt - normals[i].dot(&(perp(v) * state.r))
        })
        .collect()
}

/// The assembled pressure potential: boundary data, the quadratured volume
/// source, closed-form particle self-fields, a decay-restoring monopole, the
/// analytic far tail and the single-layer correction.
#[derive(Clone, Debug)]
pub struct PressureField {
    pub sigma: Vec<f64>,
    /// Volume-source quadrature (partition-of-unity weights folded in).
    pub source_points: Vec<Vec2<f64>>,
    pub source_weights: Vec<f64>,
    pub source_values: Vec<f64>,
    /// Force-side source values (full trace, patched cores removed).
    pub force_values: Vec<f64>,
    /// Line density of the wall band collapsed onto the boundary.
    pub layer_density: Vec<f64>,
    /// Force-side wall band density.
    pub layer_force: Vec<f64>,
    /// Center and mass of each removed core, restored as point terms.
    pub core_terms: Vec<(Vec2<f64>, f64)>,
    /// `|circulation of sigma + total source mass| / scale`; the solvability
    /// balance of the Neumann problem.
    pub compatibility_residual: f64,
    /// Mean-flux defect absorbed by the correction solve.
    pub correction_defect: f64,
    state: RigidState,
    particles: VortexField,
    layer: HarmonicPotential,
    correction: HarmonicPotential,
    monopole: f64,
    center: Vec2<f64>,
    tail_coefficient: f64,
    tail_radius: f64,
    tail_value: f64,
}

struct Ray {
    b: Vec2<f64>,
    e: Vec2<f64>,
    speed: f64,
    /// Area Jacobian `J(t) = j0 + t j1` of the ray coordinates.
    j0: f64,
    j1: f64,
    t_cut: f64,
}

fn make_rays(panels: &PanelSystem, count: usize, r_cut: f64) -> Result<Vec<Ray>> {
    let shape = panels.shape();
    let motion = panels.motion();
    let h = motion.h;
    (0..count)
        .map(|j| {
            let s = TAU * j as f64 / count as f64;
            let b = motion.body_map(shape.point(s));
            let d1 = motion.map_vector(shape.derivative(s, 1));
            let rv = b - h;
            let rdist = rv.norm();
            let e = rv / rdist;
            let j0 = cross(e, d1);
            if j0 <= 0.0 {
                return Err(Error::DegenerateShape(
                    "the body is not star shaped about its centroid; radial source rays cross"
                        .into(),
                ));
            }
            let de = (d1 - e * e.dot(&d1)) / rdist;
            Ok(Ray {
                b,
                e,
                speed: d1.norm(),
                j0,
                j1: cross(e, de),
                t_cut: r_cut - rdist,
            })
        })
        .collect()
}

/// Solve the pressure Neumann problem for the given corrected flow.
pub fn solve_mu(corrected: &CorrectedField, config: &QuadratureConfig) -> Result<PressureField> {
    let panels = corrected.panels();
    let state = corrected.state();
    let field = corrected.field();
    let motion = panels.motion();
    let n = panels.n();
    let mean_panel = panels.mean_panel();
    let r_cut = config.outer_radius_factor * panels.body_radius();
    if r_cut < 3.0 * panels.body_radius() {
        return Err(Error::Config(format!(
            "outer quadrature radius factor {} leaves no room for the source",
            config.outer_radius_factor
        )));
    }

    let boundary_velocity: Vec<Vec2<f64>> =
        (0..n).map(|i| corrected.boundary_velocity(i)).collect();
    let sigma = sigma_boundary_data(panels, &state, &boundary_velocity);

    // Patched particles and the partition of unity. Patches are skipped near
    // the wall, where they would poke into the body.
    let eps = field.core_radius;
    let e2 = eps * eps;
    let shape = panels.shape();
    let mut patched: Vec<usize> = Vec::new();
    let mut hole_range: Vec<(f64, f64)> = Vec::new();
    for (q, &y) in field.positions.iter().enumerate() {
        let (_, _, dist) = shape.project(motion.body_unmap(y));
        if dist >= PATCH_CLEARANCE * eps {
            patched.push(q);
            let reach = (PATCH_OUTER + 2.0) * eps;
            hole_range.push((dist - reach, dist + reach));
        }
    }
    let chi = |y: Vec2<f64>, q: usize| -> f64 {
        let rho = (y - field.positions[q]).norm();
        smooth_step((rho / eps - PATCH_INNER) / (PATCH_OUTER - PATCH_INNER))
    };
    // Shepard weight of the background mesh or of patch `own` at y.
    let pu = |y: Vec2<f64>, own: Option<usize>| -> f64 {
        if patched.is_empty() {
            return 1.0;
        }
        let mut bg = 1.0;
        let mut denom = 0.0;
        let mut num = f64::NAN;
        for &q in &patched {
            let c = chi(y, q);
            bg *= c;
            denom += 1.0 - c;
            if own == Some(q) {
                num = 1.0 - c;
            }
        }
        denom += bg;
        match own {
            None => bg / denom,
            Some(_) => num / denom,
        }
    };

    // Pointwise sources, two flavours. The representation side removes every
    // blob self-term (those travel as closed-form potentials). The force
    // side keeps the full trace except the patched cores: a patched core is
    // radially symmetric and pairs with a harmonic weight through its center
    // value alone, so it is restored later as a point term.
    let sources_at = |y: Vec2<f64>| -> Result<(f64, f64)> {
        let sample = corrected.sample(y)?;
        let g = sample.gradient.expect("sampled with gradients");
        let full = g[(0, 0)] * g[(0, 0)]
            + 2.0 * g[(0, 1)] * g[(1, 0)]
            + g[(1, 1)] * g[(1, 1)];
        let mut smooth = full;
        let mut force = full;
        for (q, (yq, gq)) in field.positions.iter().zip(&field.strengths).enumerate() {
            let fs = blob_self_source((y - yq).norm_squared(), gq * gq, e2);
            smooth -= fs;
            if patched.contains(&q) {
                force -= fs * (1.0 - chi(y, q));
            }
        }
        Ok((smooth, force))
    };

    // Wall band, collapsed onto the boundary as a line density per arclength.
    let delta = LAYER_FRACTION * mean_panel;
    let rays_coarse = make_rays(panels, n, r_cut)?;
    let (lx, lw) = gauss_legendre(LAYER_NODES);
    let mut layer_density = vec![0.0; n];
    let mut layer_force = vec![0.0; n];
    for (i, ray) in rays_coarse.iter().enumerate() {
        let mut acc = 0.0;
        let mut acc_force = 0.0;
        for k in 0..LAYER_NODES {
            let t = delta * 0.5 * (1.0 + lx[k]);
            let y = ray.b + ray.e * t;
            let (smooth, force) = sources_at(y)?;
            let w = lw[k] * 0.5 * delta * (ray.j0 + t * ray.j1) * pu(y, None);
            acc += w * smooth;
            acc_force += w * force;
        }
        layer_density[i] = acc / ray.speed;
        layer_force[i] = acc_force / ray.speed;
    }

    // Radial Gauss bands from the layer out to the cut circle. Band widths
    // grow with distance, so a band crossed by a patch hole is re-run on the
    // fine ray set and subdivided at the core scale where a ray passes the
    // blend annulus; otherwise the hole's rim would alias.
    let rays_fine = make_rays(panels, 2 * n, r_cut)?;
    let (gx, gw) = gauss_legendre(config.radial_nodes);
    let mut source_points = Vec::new();
    let mut source_weights = Vec::new();
    let refine_below = REFINED_WITHIN * mean_panel;
    let reach = (PATCH_OUTER + 1.0) * eps;
    let mut t0 = delta;
    while t0 < r_cut {
        let t1 = t0 * config.band_growth;
        let band_hot = hole_range.iter().any(|&(lo, hi)| t0 < hi && t1 > lo);
        let rays = if t0 < refine_below || band_hot {
            &rays_fine
        } else {
            &rays_coarse
        };
        let dparam = TAU / rays.len() as f64;
        for ray in rays {
            let hi = t1.min(ray.t_cut);
            if hi <= t0 {
                continue;
            }
            let near_core = band_hot
                && patched.iter().any(|&q| {
                    let yq = field.positions[q];
                    let s = (yq - ray.b).dot(&ray.e).clamp(t0, hi);
                    (yq - (ray.b + ray.e * s)).norm() < reach
                });
            let pieces = if near_core {
                (((hi - t0) / (1.5 * eps)).ceil() as usize).clamp(1, 32)
            } else {
                1
            };
            for piece in 0..pieces {
                let lo = t0 + (hi - t0) * piece as f64 / pieces as f64;
                let up = t0 + (hi - t0) * (piece + 1) as f64 / pieces as f64;
                let mid = 0.5 * (lo + up);
                let half = 0.5 * (up - lo);
                for k in 0..config.radial_nodes {
                    let t = mid + half * gx[k];
                    let y = ray.b + ray.e * t;
                    source_points.push(y);
                    source_weights.push(gw[k] * half * (ray.j0 + t * ray.j1) * dparam);
                }
            }
        }
        t0 = t1;
    }

    // Polar patches around the vortex cores resolve the cross-term spike
    // that the body-fitted bands cannot see.
    let (px, pw) = gauss_legendre(PATCH_RADIAL);
    let mut patch_of = vec![None; source_points.len()];
    for &q in &patched {
        let yq = field.positions[q];
        let rho_max = PATCH_OUTER * eps;
        for k in 0..PATCH_RADIAL {
            let rho = rho_max * 0.5 * (1.0 + px[k]);
            let wr = pw[k] * 0.5 * rho_max * rho * TAU / PATCH_ANGULAR as f64;
            for a in 0..PATCH_ANGULAR {
                let phi = TAU * (a as f64 + 0.5) / PATCH_ANGULAR as f64;
                source_points.push(yq + Vec2::new(phi.cos(), phi.sin()) * rho);
                source_weights.push(wr);
                patch_of.push(Some(q));
            }
        }
    }

    // Values and partition weights in one pass.
    let mut source_values = Vec::with_capacity(source_points.len());
    let mut force_values = Vec::with_capacity(source_points.len());
    for (idx, &y) in source_points.iter().enumerate() {
        source_weights[idx] *= pu(y, patch_of[idx]);
        let (smooth, force) = sources_at(y)?;
        source_values.push(smooth);
        force_values.push(force);
    }

    // The removed cores re-enter the force as center-value point terms. The
    // mass of a core, cut off smoothly where the patch blending ends:
    let core_cut = PATCH_INNER * eps;
    let mut core_unit =
        -core_cut * core_cut / (TAU * (core_cut * core_cut + e2) * (core_cut * core_cut + e2));
    let (cx, cw) = gauss_legendre(16);
    for k in 0..16 {
        let rho = core_cut + (PATCH_OUTER - PATCH_INNER) * eps * 0.5 * (1.0 + cx[k]);
        let ramp = 1.0 - smooth_step((rho / eps - PATCH_INNER) / (PATCH_OUTER - PATCH_INNER));
        core_unit += cw[k]
            * 0.5
            * (PATCH_OUTER - PATCH_INNER)
            * eps
            * TAU
            * rho
            * ramp
            * blob_self_source(rho * rho, 1.0, e2);
    }
    let core_terms: Vec<(Vec2<f64>, f64)> = patched
        .iter()
        .map(|&q| {
            let gq = field.strengths[q];
            (field.positions[q], gq * gq * core_unit)
        })
        .collect();

    // Far tail: beyond the cut the source is the circulation monopole
    // `c / rho^4` about the centroid; its potential is constant inside the
    // cut, so only the mass bookkeeping and far values see it.
    let gamma_inf = corrected.gamma0() + field.total_strength();
    let self_sq: f64 = field.strengths.iter().map(|g| g * g).sum();
    let tail_coefficient = (gamma_inf * gamma_inf - self_sq) / (2.0 * PI * PI);
    let tail_mass = PI * tail_coefficient / (r_cut * r_cut);
    let tail_value = -tail_coefficient * (2.0 * r_cut.ln() + 1.0) / (4.0 * r_cut * r_cut);

    let weights = panels.weights();
    let layer_mass: f64 = (0..n).map(|i| layer_density[i] * weights[i]).sum();
    let bulk_mass: f64 = source_weights
        .iter()
        .zip(&source_values)
        .map(|(w, f)| w * f)
        .sum();
    let monopole = -(layer_mass + bulk_mass + tail_mass);

    // Self-source mass the body encloses: the blob profiles extend under the
    // wall, and that mass re-enters the solvability balance through the flux
    // of the closed-form self-fields. Integrated on interior rays.
    let enclosed_self = if field.positions.is_empty() {
        0.0
    } else {
        let (bx, bw) = gauss_legendre(8);
        let mut acc = 0.0;
        for ray in &rays_coarse {
            let rdist = (ray.b - motion.h).norm();
            let dparam = TAU / n as f64;
            for k in 0..8 {
                let t = rdist * 0.5 * (1.0 + bx[k]);
                let y = ray.b - ray.e * t;
                let jac = (ray.j0 - t * ray.j1).abs();
                let f: f64 = field
                    .positions
                    .iter()
                    .zip(&field.strengths)
                    .map(|(yq, gq)| blob_self_source((y - yq).norm_squared(), gq * gq, e2))
                    .sum();
                acc += bw[k] * 0.5 * rdist * jac * dparam * f;
            }
        }
        acc
    };

    let sigma_sum: f64 = sigma.iter().zip(weights).map(|(s, w)| s * w).sum();
    let sigma_abs: f64 = sigma.iter().zip(weights).map(|(s, w)| s.abs() * w).sum();
    let mass_abs: f64 = source_weights
        .iter()
        .zip(&source_values)
        .map(|(w, f)| (w * f).abs())
        .sum();
    let scale = sigma_abs.max(mass_abs).max(1e-12);
    let compatibility_residual =
        (sigma_sum + layer_mass + bulk_mass + tail_mass - enclosed_self).abs() / scale;

    // Single-layer correction: whatever flux the assembled parts miss at the
    // nodes. The collapsed band physically sits on the fluid side of the
    // wall, so its flux there takes the interior branch of the jump relation
    // (`K' q - q/2`); the fluid-side branch would overcount the band mass.
    let layer = panels.single_layer(&layer_density);
    let nodes = panels.nodes();
    let normals = panels.normals();
    let h = state.h;
    let data: Vec<f64> = (0..n)
        .map(|i| {
            let x = nodes[i];
            let mut flux = layer.solution().data[i] - layer_density[i]
                + monopole * greens_gradient(x, h).dot(&normals[i]);
            for ((p, w), f) in source_points
                .iter()
                .zip(&source_weights)
                .zip(&source_values)
            {
                flux += w * f * greens_gradient(x, *p).dot(&normals[i]);
            }
            for (yq, gq) in field.positions.iter().zip(&field.strengths) {
                flux += blob_self_gradient(x - yq, gq * gq, e2).dot(&normals[i]);
            }
            sigma[i] - flux
        })
        .collect();
    let (correction, correction_defect) = panels.solve_exterior_neumann_with_defect(&data)?;

    Ok(PressureField {
        sigma,
        source_points,
        source_weights,
        source_values,
        force_values,
        layer_density,
        layer_force,
        core_terms,
        compatibility_residual,
        correction_defect,
        state,
        particles: field.clone(),
        layer,
        correction,
        monopole,
        center: h,
        tail_coefficient,
        tail_radius: r_cut,
        tail_value,
    })
}

impl PressureField {
    /// Potential value; defined up to the gauge constant fixed by decay.
    pub fn value(&self, x: Vec2<f64>) -> Result<f64> {
        let mut v = self.layer.value(x)? + self.correction.value(x)?;
        v += self.monopole * greens_value(x, self.center);
        for ((p, w), f) in self
            .source_points
            .iter()
            .zip(&self.source_weights)
            .zip(&self.source_values)
        {
            v += w * f * greens_value(x, *p);
        }
        let e2 = self.particles.core_radius * self.particles.core_radius;
        for (yq, gq) in self
            .particles
            .positions
            .iter()
            .zip(&self.particles.strengths)
        {
            v += blob_self_value((x - yq).norm_squared(), gq * gq, e2);
        }
        v += self.tail(x).0;
        Ok(v)
    }

    /// Potential gradient.
    pub fn gradient(&self, x: Vec2<f64>) -> Result<Vec2<f64>> {
        let mut g = self.layer.gradient(x)? + self.correction.gradient(x)?;
        g += greens_gradient(x, self.center) * self.monopole;
        for ((p, w), f) in self
            .source_points
            .iter()
            .zip(&self.source_weights)
            .zip(&self.source_values)
        {
            g += greens_gradient(x, *p) * (w * f);
        }
        let e2 = self.particles.core_radius * self.particles.core_radius;
        for (yq, gq) in self
            .particles
            .positions
            .iter()
            .zip(&self.particles.strengths)
        {
            g += blob_self_gradient(x - yq, gq * gq, e2);
        }
        g += self.tail(x).1;
        Ok(g)
    }

    /// Tail model value and gradient: constant inside the cut, the radial
    /// monopole closed form outside.
    fn tail(&self, x: Vec2<f64>) -> (f64, Vec2<f64>) {
        let rv = x - self.center;
        let rho = rv.norm();
        let r = self.tail_radius;
        if rho < r {
            (self.tail_value, Vec2::zeros())
        } else {
            let c = self.tail_coefficient;
            let mass_in = PI * c * (1.0 / (r * r) - 1.0 / (rho * rho));
            let v = -rho.ln() / (2.0 * PI) * mass_in - c * (2.0 * rho.ln() + 1.0) / (4.0 * rho * rho);
            (v, rv * (-mass_in / (2.0 * PI * rho * rho)))
        }
    }
}

/// Right-hand side of the body momentum equations: for each Kirchhoff mode,
/// the boundary pairing with `sigma` plus the volume pairing with the
/// source. The collapsed wall band pairs at the nodes, the removed cores
/// through their center values (radial profiles against a harmonic weight
/// reduce to a point known by the mean value property). The far tail drops
/// out exactly: every circle mean of a decaying exterior harmonic is zero.
pub fn body_force_rhs(panels: &PanelSystem, field: &PressureField) -> Result<Vec3<f64>> {
    let m = panels.motion();
    debug_assert!(
        (m.h - field.state.h).norm() < 1e-12 && (m.theta - field.state.theta).abs() < 1e-12,
        "panel pose disagrees with the pressure solve"
    );
    let weights = panels.weights();
    let kb = panels.kirchhoff_boundary_values();
    let mut rhs = Vec3::zeros();
    for i in 0..panels.n() {
        let pair = weights[i] * (field.sigma[i] + field.layer_force[i]);
        rhs += Vec3::new(kb[0][i], kb[1][i], kb[2][i]) * pair;
    }
    for ((p, w), f) in field
        .source_points
        .iter()
        .zip(&field.source_weights)
        .zip(&field.force_values)
    {
        rhs += panels.kirchhoff_values(*p)? * (w * f);
    }
    for &(yq, mass) in &field.core_terms {
        rhs += panels.kirchhoff_values(yq)? * mass;
    }
    Ok(rhs)
}

/// The same force through the other Green route, `F_a = boundary pairing of
/// mu with K_a`. Exercises the assembled potential (layer, correction,
/// monopole and Newtonian sum) instead of bypassing it; used to cross-check
/// `body_force_rhs`.
pub fn force_via_boundary_pairing(panels: &PanelSystem, field: &PressureField) -> Vec3<f64> {
    let n = panels.n();
    let nodes = panels.nodes();
    let weights = panels.weights();
    let kdata = panels.kirchhoff_data();
    let e2 = field.particles.core_radius * field.particles.core_radius;
    let mut rhs = Vec3::zeros();
    for i in 0..n {
        let x = nodes[i];
        let mut mu = field.layer.solution().values[i]
            + field.correction.solution().values[i]
            + field.monopole * greens_value(x, field.center)
            + field.tail_value;
        for ((p, w), f) in field
            .source_points
            .iter()
            .zip(&field.source_weights)
            .zip(&field.source_values)
        {
            mu += w * f * greens_value(x, *p);
        }
        for (yq, gq) in field
            .particles
            .positions
            .iter()
            .zip(&field.particles.strengths)
        {
            mu += blob_self_value((x - yq).norm_squared(), gq * gq, e2);
        }
        rhs += Vec3::new(kdata[0][i], kdata[1][i], kdata[2][i]) * (mu * weights[i]);
    }
    rhs
}
