//! Parametric body shapes: closed curves given by trigonometric polynomials.
//!
//! A shape is the boundary curve of the body at rest (body frame). The
//! constructor validates that the sampled curve is simple, closed and
//! counterclockwise, and recentres it so the area centroid sits at the
//! origin; the rigid state's `h` is then the world position of the centroid.

use crate::geometry::taylor::Series1;
use crate::{perp, Error, Result, Vec2};

/// Closed curve `c(s) = center + sum_m (a_m cos((m+1)s) + b_m sin((m+1)s))`,
/// `s` in `[0, 2pi)`.
#[derive(Clone, Debug)]
pub struct BodyShape {
    center: Vec2<f64>,
    /// Mode `m+1` cosine/sine vector coefficients.
    modes: Vec<(Vec2<f64>, Vec2<f64>)>,
    collar: f64,
    area: f64,
    label: String,
}

/// Local boundary data at parameter `s` (body frame).
#[derive(Clone, Copy, Debug)]
pub struct BoundaryFrame {
    pub point: Vec2<f64>,
    /// Unit tangent along increasing `s` (counterclockwise).
    pub tangent: Vec2<f64>,
    /// Unit normal pointing out of the fluid, i.e. into the body.
    pub normal: Vec2<f64>,
    /// Parametric speed `|c'(s)|`.
    pub speed: f64,
    /// Signed curvature (positive for a convex counterclockwise curve).
    pub curvature: f64,
}

const VALIDATION_SAMPLES: usize = 256;

impl BodyShape {
    /// Circle of radius `radius`.
    pub fn disc(radius: f64) -> Result<Self> {
        Self::from_modes(
            Vec2::zeros(),
            vec![(Vec2::new(radius, 0.0), Vec2::new(0.0, radius))],
            format!("disc(r={radius})"),
        )
    }

    /// Axis-aligned ellipse with semi-axes `a` (x) and `b` (y).
    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        Self::from_modes(
            Vec2::zeros(),
            vec![(Vec2::new(a, 0.0), Vec2::new(0.0, b))],
            format!("ellipse(a={a}, b={b})"),
        )
    }

    /// General trigonometric-polynomial curve. `modes[m]` holds the vector
    /// coefficients of `cos((m+1)s)` and `sin((m+1)s)`.
    pub fn fourier(center: Vec2<f64>, modes: Vec<(Vec2<f64>, Vec2<f64>)>) -> Result<Self> {
        Self::from_modes(center, modes, "fourier".to_string())
    }

    fn from_modes(
        center: Vec2<f64>,
        modes: Vec<(Vec2<f64>, Vec2<f64>)>,
        label: String,
    ) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::DegenerateShape("no Fourier modes".into()));
        }
        let mut shape = BodyShape {
            center,
            modes,
            collar: 0.0,
            area: 0.0,
            label,
        };
        shape.validate()?;
        let (area, centroid) = shape.area_and_centroid();
        if area <= 0.0 {
            return Err(Error::DegenerateShape(
                "curve must be counterclockwise with positive area".into(),
            ));
        }
        shape.area = area;
        shape.center -= centroid;
        shape.collar = 0.2 * shape.min_curvature_radius();
        Ok(shape)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Enclosed area.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Width of the collar in which distance derivatives of order >= 2 are
    /// served: one fifth of the smallest radius of curvature.
    pub fn collar_width(&self) -> f64 {
        self.collar
    }

    pub fn point(&self, s: f64) -> Vec2<f64> {
        self.derivative(s, 0)
    }

    /// `k`-th derivative of the curve with respect to `s`.
    pub fn derivative(&self, s: f64, k: usize) -> Vec2<f64> {
        let mut acc = if k == 0 { self.center } else { Vec2::zeros() };
        for (i, (a, b)) in self.modes.iter().enumerate() {
            let m = (i + 1) as f64;
            let pow = m.powi(k as i32);
            // d^k cos(ms) and d^k sin(ms): cycle of length 4.
            let (ca, cb) = match k % 4 {
                0 => ((m * s).cos(), (m * s).sin()),
                1 => (-(m * s).sin(), (m * s).cos()),
                2 => (-(m * s).cos(), -(m * s).sin()),
                _ => ((m * s).sin(), -(m * s).cos()),
            };
            acc += a * (pow * ca) + b * (pow * cb);
        }
        acc
    }

    /// Univariate jets of both curve components around `s0` (degree 8).
    pub fn component_series(&self, s0: f64) -> (Series1, Series1) {
        let mut cx = Series1::zero();
        let mut cy = Series1::zero();
        let mut fact = 1.0;
        for k in 0..crate::geometry::taylor::LEN1 {
            if k > 0 {
                fact *= k as f64;
            }
            let d = self.derivative(s0, k);
            cx.c[k] = d.x / fact;
            cy.c[k] = d.y / fact;
        }
        (cx, cy)
    }

    pub fn frame(&self, s: f64) -> BoundaryFrame {
        let point = self.point(s);
        let d1 = self.derivative(s, 1);
        let d2 = self.derivative(s, 2);
        let speed = d1.norm();
        let tangent = d1 / speed;
        BoundaryFrame {
            point,
            tangent,
            // J * tangent points into the body for a counterclockwise curve.
            normal: perp(tangent),
            speed,
            curvature: (d1.x * d2.y - d1.y * d2.x) / speed.powi(3),
        }
    }

    /// Foot-point projection: parameter, foot and (unsigned) distance of the
    /// globally nearest curve point.
    pub fn project(&self, x: Vec2<f64>) -> (f64, Vec2<f64>, f64) {
        let n = VALIDATION_SAMPLES;
        let step = std::f64::consts::TAU / n as f64;
        let d2: Vec<f64> = (0..n)
            .map(|i| (x - self.point(i as f64 * step)).norm_squared())
            .collect();
        let mut best: Option<(f64, Vec2<f64>, f64)> = None;
        for i in 0..n {
            let prev = d2[(i + n - 1) % n];
            let next = d2[(i + 1) % n];
            if d2[i] <= prev && d2[i] <= next {
                let cand = self.newton_project(x, i as f64 * step, step);
                if best.is_none() || cand.2 < best.unwrap().2 {
                    best = Some(cand);
                }
            }
        }
        best.expect("sampled distance has at least one local minimum")
    }

    fn newton_project(&self, x: Vec2<f64>, s0: f64, step: f64) -> (f64, Vec2<f64>, f64) {
        let mut s = s0;
        for _ in 0..40 {
            let c = self.point(s);
            let d1 = self.derivative(s, 1);
            let d2 = self.derivative(s, 2);
            let g = (x - c).dot(&d1);
            let gs = -d1.norm_squared() + (x - c).dot(&d2);
            if gs == 0.0 {
                break;
            }
            let mut ds = -g / gs;
            if ds.abs() > 2.0 * step {
                ds = ds.signum() * 2.0 * step;
            }
            s += ds;
            if ds.abs() < 1e-15 {
                break;
            }
        }
        let foot = self.point(s);
        (s, foot, (x - foot).norm())
    }

    fn min_curvature_radius(&self) -> f64 {
        let n = 512;
        (0..n)
            .map(|i| {
                let s = i as f64 * std::f64::consts::TAU / n as f64;
                1.0 / self.frame(s).curvature.abs().max(1e-300)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn area_and_centroid(&self) -> (f64, Vec2<f64>) {
        // A = 1/2 oint cross(c, c') ds, C = 1/(6A) * shoelace moments;
        // trapezoid on a periodic analytic integrand.
        let n = 2048;
        let step = std::f64::consts::TAU / n as f64;
        let mut area = 0.0;
        let mut mx = 0.0;
        let mut my = 0.0;
        for i in 0..n {
            let s = i as f64 * step;
            let c = self.point(s);
            let d = self.derivative(s, 1);
            let cross = c.x * d.y - c.y * d.x;
            area += 0.5 * cross * step;
            // centroid moments: Cx A = oint x^2/2 dy, Cy A = -oint y^2/2 dx
            mx += 0.5 * c.x * c.x * d.y * step;
            my += -0.5 * c.y * c.y * d.x * step;
        }
        (area, Vec2::new(mx / area, my / area))
    }

    fn validate(&self) -> Result<()> {
        let n = VALIDATION_SAMPLES;
        let step = std::f64::consts::TAU / n as f64;
        let pts: Vec<Vec2<f64>> = (0..n).map(|i| self.point(i as f64 * step)).collect();
        let mut min_speed = f64::INFINITY;
        for i in 0..n {
            min_speed = min_speed.min(self.derivative(i as f64 * step, 1).norm());
        }
        let scale = pts.iter().map(|p| p.norm()).fold(0.0, f64::max);
        if !(min_speed > 1e-9 * scale) {
            return Err(Error::DegenerateShape(format!(
                "parametric speed vanishes (min |c'| = {min_speed:.3e})"
            )));
        }
        // Simplicity: no intersection between non-adjacent polygon segments.
        for i in 0..n {
            let (a1, a2) = (pts[i], pts[(i + 1) % n]);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (b1, b2) = (pts[j], pts[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return Err(Error::DegenerateShape(format!(
                        "sampled curve self-intersects (segments {i} and {j})"
                    )));
                }
            }
        }
        // Winding of the sample centroid must be exactly one turn.
        let centroid = pts.iter().sum::<Vec2<f64>>() / n as f64;
        let mut winding = 0.0;
        for i in 0..n {
            let u = pts[i] - centroid;
            let v = pts[(i + 1) % n] - centroid;
            winding += (u.x * v.y - u.y * v.x).atan2(u.dot(&v));
        }
        let turns = winding / std::f64::consts::TAU;
        if (turns - 1.0).abs() > 1e-6 {
            return Err(Error::DegenerateShape(format!(
                "winding number about centroid is {turns:.4}, expected 1 (counterclockwise simple curve)"
            )));
        }
        Ok(())
    }
}

fn segments_intersect(a1: Vec2<f64>, a2: Vec2<f64>, b1: Vec2<f64>, b2: Vec2<f64>) -> bool {
    let d = |p: Vec2<f64>, q: Vec2<f64>, r: Vec2<f64>| (q - p).x * (r - p).y - (q - p).y * (r - p).x;
    let d1 = d(b1, b2, a1);
    let d2 = d(b1, b2, a2);
    let d3 = d(a1, a2, b1);
    let d4 = d(a1, a2, b2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}
