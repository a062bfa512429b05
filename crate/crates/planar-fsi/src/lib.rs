//! Planar rigid body coupled to an ideal incompressible flow.
//!
//! The crate is organised around the pieces needed to simulate (and audit)
//! a single rigid body moving through a two-dimensional perfect fluid with
//! point-vortex-represented vorticity:
//!
//! * [`geometry`] — rigid kinematics and parametric body shapes with exact
//!   distance-function derivatives in a collar around the boundary.
//! * [`panels`] — single-layer panel method: exterior Neumann solves,
//!   velocity potentials for the three rigid modes, added mass.
//! * [`vortex`] — regularised point-vortex fields, boundary-corrected
//!   velocity, advection and conserved quantities.
//! * [`pressure`] — the gradient part of the acceleration split into a
//!   body-motion part and a Neumann field `mu`; boundary data and force
//!   pairings for the body equations of motion.
//! * [`dynamics`] — the coupled body/vorticity time stepper and trajectory
//!   diagnostics.
//! * [`calculus`] — exact integer/rational calculus of iterated material
//!   derivatives: commutator tables, normal-trace expansions, low-frequency
//!   divergence/curl forms, with coefficient bound checks and polynomial
//!   instance verification.
//! * [`gevrey`] — spectral estimation of time-derivative magnitudes along
//!   trajectories and Gevrey-class regression.
//! * [`scenario`] — TOML scenario configs, presets, CSV/JSON/SVG output.
//!
//! The runnable entry points live in `examples/`; the `planar-fsi` binary is
//! a thin wrapper over [`scenario`].
//!
//! Sign conventions (normal direction, circulation orientation, kernel
//! signs) are collected in `docs/conventions.md` and pinned by unit tests
//! against disc closed forms.

pub use nalgebra::{Matrix2 as Mat2, Matrix3 as Mat3, Vector2 as Vec2, Vector3 as Vec3};

pub mod calculus;
pub mod dynamics;
pub mod geometry;
pub mod gevrey;
pub mod panels;
pub mod pressure;
pub mod scenario;
pub mod vortex;

/// Crate-wide error type. Variants map one-to-one onto the failure modes the
/// numerical and symbolic layers can actually detect.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Distance derivatives of order >= 2 requested outside the collar
    /// neighbourhood where the foot-point projection is well defined.
    #[error("point ({x:.6}, {y:.6}) outside collar (distance {dist:.4e} > width {width:.4e}) for derivative order {order}")]
    CollarViolation {
        x: f64,
        y: f64,
        dist: f64,
        width: f64,
        order: usize,
    },
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),
    #[error("incompatible boundary data: {0}")]
    IncompatibleData(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("point ({x:.6}, {y:.6}) lies inside the body")]
    InsideBody { x: f64, y: f64 },
    #[error("singular evaluation point: {0}")]
    SingularPoint(String),
    #[error("trajectory entered the body: {0}")]
    BodyCollision(String),
    #[error("non-physical particle/boundary contact: {0}")]
    CollisionFlag(String),
    #[error("derivative magnitudes hit the noise floor: {0}")]
    NoiseFloor(String),
    #[error("ill-conditioned regression: {0}")]
    IllConditioned(String),
    #[error("scenario config: {0}")]
    Config(String),
    #[error("coefficient bound violated: {0}")]
    BoundViolation(String),
    #[error("recursion mismatch: {0}")]
    RecursionMismatch(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Rotate a vector by +90 degrees: `perp(v) = (-v.y, v.x)`.
///
/// This is complex multiplication by `i`, often written `v^⊥ = Jv`.
/// Everything downstream (Biot–Savart kernel, angular solid velocity,
/// torque data) uses this single definition.
#[inline]
pub fn perp(v: Vec2<f64>) -> Vec2<f64> {
    Vec2::new(-v.y, v.x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perp_is_quarter_turn() {
        let v = Vec2::new(3.0, -2.0);
        let p = perp(v);
        assert_eq!(p, Vec2::new(2.0, 3.0));
        assert_eq!(perp(p), -v);
        assert_eq!(v.dot(&p), 0.0);
    }
}
