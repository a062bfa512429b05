//! Rigid kinematics and body geometry.
//!
//! Conventions (see `docs/conventions.md`):
//! * body curves are counterclockwise; the boundary normal `n` points out of
//!   the fluid, i.e. into the body (`n = J tau`);
//! * [`distance_and_derivatives`] returns the jet of the *signed* distance,
//!   positive on the fluid side, so its gradient is the unit vector pointing
//!   away from the body (`grad rho = -n` on the boundary). On the fluid side
//!   this signed distance coincides with the unsigned distance to the curve.

pub mod shape;
pub mod taylor;

pub use shape::{BodyShape, BoundaryFrame};

use taylor::{Series1, Series2};

use crate::{perp, Error, Mat2, Result, Vec2};

/// Rotation by `theta` (counterclockwise).
pub fn rotation_matrix(theta: f64) -> Mat2<f64> {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// A rigid placement: the map `x0 -> h + Q(theta) x0` from body coordinates
/// (anchored at the shape centroid) to world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidMotion {
    pub h: Vec2<f64>,
    pub theta: f64,
}

impl RigidMotion {
    pub fn identity() -> Self {
        RigidMotion {
            h: Vec2::zeros(),
            theta: 0.0,
        }
    }

    pub fn rotation(&self) -> Mat2<f64> {
        rotation_matrix(self.theta)
    }

    /// Body point to world point.
    pub fn body_map(&self, x0: Vec2<f64>) -> Vec2<f64> {
        self.h + self.rotation() * x0
    }

    /// World point to body point.
    pub fn body_unmap(&self, x: Vec2<f64>) -> Vec2<f64> {
        self.rotation().transpose() * (x - self.h)
    }

    pub fn map_vector(&self, v: Vec2<f64>) -> Vec2<f64> {
        self.rotation() * v
    }

    pub fn unmap_vector(&self, v: Vec2<f64>) -> Vec2<f64> {
        self.rotation().transpose() * v
    }
}

/// Instantaneous rigid state: centroid position, attitude, linear and
/// angular velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidState {
    pub h: Vec2<f64>,
    pub theta: f64,
    pub ell: Vec2<f64>,
    pub r: f64,
}

impl RigidState {
    pub fn at_rest(h: Vec2<f64>) -> Self {
        RigidState {
            h,
            theta: 0.0,
            ell: Vec2::zeros(),
            r: 0.0,
        }
    }

    pub fn motion(&self) -> RigidMotion {
        RigidMotion {
            h: self.h,
            theta: self.theta,
        }
    }

    /// Velocity of the solid material point currently at world position `x`:
    /// `u_S(x) = ell + r * perp(x - h)`.
    pub fn solid_velocity(&self, x: Vec2<f64>) -> Vec2<f64> {
        self.ell + perp(x - self.h) * self.r
    }
}

/// Jet of the signed distance function at a point (body frame).
///
/// Tensors are symmetric; orders 3 and 4 are stored by the number of
/// `y`-derivatives: `d3[j] = d^3 rho / dx^(3-j) dy^j`.
#[derive(Clone, Copy, Debug)]
pub struct DistanceJet {
    /// Signed distance, positive on the fluid side.
    pub value: f64,
    /// Unit gradient, points away from the body.
    pub grad: Vec2<f64>,
    pub hessian: Option<Mat2<f64>>,
    pub d3: Option<[f64; 4]>,
    pub d4: Option<[f64; 5]>,
    /// Foot-point parameter on the curve.
    pub foot_param: f64,
}

impl DistanceJet {
    /// Third-derivative tensor applied to `(v, v, v)`.
    pub fn dir3(&self, v: Vec2<f64>) -> f64 {
        let t = self.d3.expect("order-3 tensor not computed");
        t[0] * v.x.powi(3) + 3.0 * t[1] * v.x * v.x * v.y + 3.0 * t[2] * v.x * v.y * v.y
            + t[3] * v.y.powi(3)
    }

    /// Fourth-derivative tensor applied to `(v, v, v, v)`.
    pub fn dir4(&self, v: Vec2<f64>) -> f64 {
        let t = self.d4.expect("order-4 tensor not computed");
        t[0] * v.x.powi(4)
            + 4.0 * t[1] * v.x.powi(3) * v.y
            + 6.0 * t[2] * v.x * v.x * v.y * v.y
            + 4.0 * t[3] * v.x * v.y.powi(3)
            + t[4] * v.y.powi(4)
    }
}

/// Exterior extent of the collar in which derivative tensors are served.
///
/// The interior extent is tighter (a fifth of the smallest curvature radius);
/// both are combined with a conditioning check on the foot-point equation, so
/// points close to the medial axis are rejected even inside these bounds.
pub fn outer_collar_width(shape: &BodyShape) -> f64 {
    let n = 128;
    let r_max = (0..n)
        .map(|i| shape.point(i as f64 * std::f64::consts::TAU / n as f64).norm())
        .fold(0.0, f64::max);
    2.0 * r_max
}

/// Jet of the signed distance at `x` up to `order` (0..=4).
///
/// Orders 0 and 1 are served everywhere (gradient taken at the nearest foot
/// point). Orders >= 2 require `x` to lie in the collar where the projection
/// is smooth and well conditioned; outside it the derivative tensors of the
/// distance do not exist or are unreliable, and `CollarViolation` is
/// returned.
pub fn distance_and_derivatives(
    shape: &BodyShape,
    x: Vec2<f64>,
    order: usize,
) -> Result<DistanceJet> {
    assert!(order <= 4, "distance jets are implemented up to order 4");
    let (s_star, foot, dist) = shape.project(x);
    let frame = shape.frame(s_star);
    let nu_out = -frame.normal;
    let sign = (x - foot).dot(&nu_out);
    let value = if sign >= 0.0 { dist } else { -dist };

    if order <= 1 {
        return Ok(DistanceJet {
            value,
            grad: nu_out,
            hessian: None,
            d3: None,
            d4: None,
            foot_param: s_star,
        });
    }

    // Collar extent check.
    let w_out = outer_collar_width(shape);
    let w_in = shape.collar_width();
    if value > w_out || value < -w_in {
        return Err(Error::CollarViolation {
            x: x.x,
            y: x.y,
            dist: value.abs(),
            width: if value > 0.0 { w_out } else { w_in },
            order,
        });
    }
    // Conditioning of the foot-point equation: g_s = -|c'|^2 + (x-c).c''
    // must stay away from zero or the projection is near the medial axis.
    let d1 = shape.derivative(s_star, 1);
    let d2 = shape.derivative(s_star, 2);
    let gs = -d1.norm_squared() + (x - foot).dot(&d2);
    if gs.abs() < 0.25 * d1.norm_squared() {
        return Err(Error::CollarViolation {
            x: x.x,
            y: x.y,
            dist: value.abs(),
            width: w_in,
            order,
        });
    }

    let psi = signed_distance_series(shape, x, s_star);
    let hessian = Mat2::new(
        psi.partial(2, 0),
        psi.partial(1, 1),
        psi.partial(1, 1),
        psi.partial(0, 2),
    );
    let d3 = (order >= 3).then(|| {
        [
            psi.partial(3, 0),
            psi.partial(2, 1),
            psi.partial(1, 2),
            psi.partial(0, 3),
        ]
    });
    let d4 = (order >= 4).then(|| {
        [
            psi.partial(4, 0),
            psi.partial(3, 1),
            psi.partial(2, 2),
            psi.partial(1, 3),
            psi.partial(0, 4),
        ]
    });

    debug_assert!(
        (psi.partial(0, 0) - value).abs() <= 1e-9 * (1.0 + value.abs()),
        "series value {} vs direct {}",
        psi.partial(0, 0),
        value
    );

    Ok(DistanceJet {
        value,
        grad: Vec2::new(psi.partial(1, 0), psi.partial(0, 1)),
        hessian: Some(hessian),
        d3,
        d4,
        foot_param: s_star,
    })
}

/// Bivariate jet of the signed distance around `x0`, exact to total degree 4.
///
/// Writes the signed distance as `psi(dx) = (x0 + dx - c(s*)) . nu(s*)` with
/// `s* = s*(x0 + dx)` the foot parameter, which is sqrt-free and smooth
/// across the curve. The foot series solves `(x - c(s)) . c'(s) = 0` by
/// Newton iteration in truncated series arithmetic.
fn signed_distance_series(shape: &BodyShape, x0: Vec2<f64>, s_star: f64) -> Series2 {
    let (cx, cy) = shape.component_series(s_star);
    let cx1 = cx.derivative_series();
    let cy1 = cy.derivative_series();
    let cx2 = cx1.derivative_series();
    let cy2 = cy1.derivative_series();

    let xx = Series2::constant(x0.x).add(&Series2::var(0));
    let xy = Series2::constant(x0.y).add(&Series2::var(1));

    // Newton for the foot-parameter series ds(dx).
    let mut ds = Series2::zero();
    for _ in 0..4 {
        let px = Series2::compose1(&cx, &ds);
        let py = Series2::compose1(&cy, &ds);
        let tx = Series2::compose1(&cx1, &ds);
        let ty = Series2::compose1(&cy1, &ds);
        let ax = Series2::compose1(&cx2, &ds);
        let ay = Series2::compose1(&cy2, &ds);
        let vx = xx.sub(&px);
        let vy = xy.sub(&py);
        let g = vx.mul(&tx).add(&vy.mul(&ty));
        let gs = vx
            .mul(&ax)
            .add(&vy.mul(&ay))
            .sub(&tx.mul(&tx))
            .sub(&ty.mul(&ty));
        ds = ds.sub(&g.mul(&gs.recip()));
    }

    let px = Series2::compose1(&cx, &ds);
    let py = Series2::compose1(&cy, &ds);
    let tx = Series2::compose1(&cx1, &ds);
    let ty = Series2::compose1(&cy1, &ds);
    let vx = xx.sub(&px);
    let vy = xy.sub(&py);
    // Outward unit normal series nu = (t_y, -t_x)/|t|.
    let inv_norm = tx.mul(&tx).add(&ty.mul(&ty)).inv_sqrt();
    let nx = ty.mul(&inv_norm);
    let ny = tx.mul(&inv_norm).scale(-1.0);
    vx.mul(&nx).add(&vy.mul(&ny))
}
