//! Exterior Laplace solver on the body boundary.
//!
//! Nystrom discretization on the uniform parameter grid: the Neumann problem
//! is solved with the curvature-corrected adjoint double-layer kernel and a
//! bordered zero-mean row (which enforces decay at infinity and exposes the
//! data incompatibility as the multiplier `lambda`), and boundary values of
//! the single-layer potential come from the Kussmaul-Martensen log
//! quadrature.
//!
//! Off-boundary fields are evaluated in three zones. Beyond a few panel
//! lengths the plain quadrature is spectrally accurate. In an intermediate
//! band the density is upsampled through its trigonometric interpolant, which
//! pushes the nearly-singular quadrature error below roundoff. Inside roughly
//! one panel length the field is reconstructed along the outward normal ray:
//! the boundary trace supplies the exact on-curve jet (value, normal
//! derivative, Hessian), and the remainder after subtracting that jet is
//! interpolated through samples taken in the safe band.
//!
//! Every influence matrix is built from rigid-invariant quantities (mutual
//! distances, normal components of chords), so the factorization is done once
//! in the body frame and reused at every pose. A solve with world-frame data
//! yields the world potential composed with the placement map; gradients and
//! Hessians are rotated back by the wrappers.

pub mod trig;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::geometry::{BodyShape, RigidMotion};
use crate::{perp, Error, Mat2, Mat3, Result, Vec2, Vec3};
use trig::TrigSeries;

use std::f64::consts::TAU;

/// Density upsampling factor for the intermediate evaluation band.
const UPSAMPLE: usize = 4;
/// Plain quadrature beyond this many mean panel lengths from the curve.
const FAR_BAND: f64 = 3.0;
/// Upsampled quadrature beyond this distance; ray reconstruction below it.
const NEAR_BAND: f64 = 1.2;
/// Ray sample offsets in mean panel lengths, all inside the safe band.
const RAY_NODES: [f64; 4] = [1.2, 1.7, 2.3, 3.0];
/// Relative tolerance on the bordered multiplier before boundary data is
/// declared incompatible with a decaying exterior potential.
const COMPATIBILITY_TOL: f64 = 1e-6;

/// Weights `R_k` of the periodic log quadrature:
/// `int_0^{2pi} ln(4 sin^2((s_i - t)/2)) f(t) dt ~= sum_j R_{(j-i) mod n} f(t_j)`,
/// exact for trigonometric polynomials through the Nyquist mode because
/// `ln(4 sin^2(t/2))` has the cosine coefficients `-2pi/m`.
pub fn log_quadrature_weights(n: usize) -> Vec<f64> {
    assert!(n % 2 == 0 && n >= 4, "log quadrature needs an even grid");
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let mut acc = 0.0;
            for m in 1..n / 2 {
                acc += (TAU * (m * k) as f64 / nf).cos() / m as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * TAU * acc / nf - 2.0 * TAU * sign / (nf * nf)
        })
        .collect()
}

/// `G(x, y) = -ln|x - y| / 2pi`.
#[inline]
pub fn greens_value(x: Vec2<f64>, y: Vec2<f64>) -> f64 {
    -(x - y).norm().ln() / TAU
}

/// `grad_x G(x, y)`.
#[inline]
pub fn greens_gradient(x: Vec2<f64>, y: Vec2<f64>) -> Vec2<f64> {
    let d = x - y;
    -d / (TAU * d.norm_squared())
}

/// Adjoint double-layer kernel `dG(x, y)/dn_x` for `x != y`.
#[inline]
fn adjoint_kernel(x: Vec2<f64>, nx: Vec2<f64>, y: Vec2<f64>) -> f64 {
    let d = x - y;
    -nx.dot(&d) / (TAU * d.norm_squared())
}

/// Bordered Neumann collocation matrix: `sigma/2 + K' sigma + lambda = g` at
/// the nodes, weighted zero mean in the last row.
fn bordered_matrix(
    nodes: &[Vec2<f64>],
    normals: &[Vec2<f64>],
    curvatures: &[f64],
    weights: &[f64],
) -> DMatrix<f64> {
    let n = nodes.len();
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            let k = if i == j {
                curvatures[i] / (2.0 * TAU)
            } else {
                adjoint_kernel(nodes[i], normals[i], nodes[j])
            };
            a[(i, j)] = k * weights[j] + if i == j { 0.5 } else { 0.0 };
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = weights[i];
    }
    a
}

/// Cubic interpolation through four abscissae (Neville's scheme).
fn neville4(ts: &[f64; 4], vs: &[f64; 4], t: f64) -> f64 {
    let mut v = *vs;
    for level in 1..4 {
        for i in 0..4 - level {
            v[i] = ((t - ts[i + level]) * v[i] + (ts[i] - t) * v[i + 1]) / (ts[i] - ts[i + level]);
        }
    }
    v[0]
}

/// Trace of an exterior harmonic potential on the boundary: values,
/// Frenet-frame first derivatives and Hessian components at the nodes, with
/// trigonometric interpolants for off-node parameters.
///
/// With `nu` the outward unit normal and `tau` the unit tangent (so
/// `tau' = -kappa nu`, `nu' = kappa tau` along arclength), the tangential
/// derivative is the spectral derivative of the boundary values, and
/// differentiating the first-order traces once more plus harmonicity gives
/// the full Hessian: `H_tt = kappa a + b'`, `H_nt = a' - kappa b`,
/// `H_nn = -H_tt`, where `a = dPhi/dnu`, `b = dPhi/dtau` and primes are
/// arclength derivatives.
#[derive(Clone, Debug)]
pub struct PotentialTrace {
    pub value: Vec<f64>,
    pub d_nu: Vec<f64>,
    pub d_tau: Vec<f64>,
    pub h_tt: Vec<f64>,
    pub h_nt: Vec<f64>,
    value_s: TrigSeries,
    d_nu_s: TrigSeries,
    d_tau_s: TrigSeries,
    h_tt_s: TrigSeries,
    h_nt_s: TrigSeries,
}

/// Trace quantities at one boundary parameter.
#[derive(Clone, Copy, Debug)]
pub struct TraceJet {
    pub value: f64,
    pub d_nu: f64,
    pub d_tau: f64,
    pub h_tt: f64,
    pub h_nt: f64,
}

impl PotentialTrace {
    fn build(speeds: &[f64], curvatures: &[f64], values: &[f64], data: &[f64]) -> PotentialTrace {
        let n = values.len();
        let value_s = TrigSeries::from_samples(values);
        let d_nu: Vec<f64> = data.iter().map(|g| -g).collect();
        let dv = value_s.derivative_at_nodes();
        let d_tau: Vec<f64> = (0..n).map(|i| dv[i] / speeds[i]).collect();
        let d_nu_s = TrigSeries::from_samples(&d_nu);
        let d_tau_s = TrigSeries::from_samples(&d_tau);
        let da = d_nu_s.derivative_at_nodes();
        let db = d_tau_s.derivative_at_nodes();
        let h_tt: Vec<f64> = (0..n)
            .map(|i| curvatures[i] * d_nu[i] + db[i] / speeds[i])
            .collect();
        let h_nt: Vec<f64> = (0..n)
            .map(|i| da[i] / speeds[i] - curvatures[i] * d_tau[i])
            .collect();
        let h_tt_s = TrigSeries::from_samples(&h_tt);
        let h_nt_s = TrigSeries::from_samples(&h_nt);
        PotentialTrace {
            value: values.to_vec(),
            d_nu,
            d_tau,
            h_tt,
            h_nt,
            value_s,
            d_nu_s,
            d_tau_s,
            h_tt_s,
            h_nt_s,
        }
    }

    pub fn at(&self, s: f64) -> TraceJet {
        TraceJet {
            value: self.value_s.eval(s),
            d_nu: self.d_nu_s.eval(s),
            d_tau: self.d_tau_s.eval(s),
            h_tt: self.h_tt_s.eval(s),
            h_nt: self.h_nt_s.eval(s),
        }
    }
}

/// One solved exterior Neumann problem, attached to node indices: density,
/// the data it matches, boundary values, the boundary trace and the
/// upsampled density for near-field quadrature. The scalars are frame
/// independent; direction information is reconstructed from the pose.
#[derive(Clone, Debug)]
pub struct BoundarySolution {
    pub density: Vec<f64>,
    pub data: Vec<f64>,
    pub values: Vec<f64>,
    /// Bordered multiplier; approximately the mean flux defect of the data.
    pub lambda: f64,
    pub trace: PotentialTrace,
    fine_density: Vec<f64>,
}

impl BoundarySolution {
    fn combine(parts: &[(f64, &BoundarySolution)], base: &PanelBase) -> Self {
        let n = parts[0].1.density.len();
        let nf = parts[0].1.fine_density.len();
        let mut density = vec![0.0; n];
        let mut data = vec![0.0; n];
        let mut values = vec![0.0; n];
        let mut fine_density = vec![0.0; nf];
        let mut lambda = 0.0;
        for &(c, sol) in parts {
            for i in 0..n {
                density[i] += c * sol.density[i];
                data[i] += c * sol.data[i];
                values[i] += c * sol.values[i];
            }
            for i in 0..nf {
                fine_density[i] += c * sol.fine_density[i];
            }
            lambda += c * sol.lambda;
        }
        let trace = PotentialTrace::build(&base.speeds, &base.curvatures, &values, &data);
        BoundarySolution {
            density,
            data,
            values,
            lambda,
            trace,
            fine_density,
        }
    }
}

/// Pose-independent part of the discretization: grid geometry, factored
/// influence matrices and the cached Kirchhoff solves in the body frame.
#[derive(Debug)]
pub struct PanelBase {
    pub shape: BodyShape,
    pub n: usize,
    pub params: Vec<f64>,
    pub nodes: Vec<Vec2<f64>>,
    pub tangents: Vec<Vec2<f64>>,
    /// Unit normals pointing out of the fluid (into the body).
    pub normals: Vec<Vec2<f64>>,
    pub speeds: Vec<f64>,
    pub curvatures: Vec<f64>,
    /// Arclength quadrature weights `speed_j * 2pi/n`.
    pub weights: Vec<f64>,
    pub mean_panel: f64,
    r_max: f64,
    fine_params: Vec<f64>,
    fine_nodes: Vec<Vec2<f64>>,
    fine_weights: Vec<f64>,
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    value_matrix: DMatrix<f64>,
    kirchhoff: Vec<BoundarySolution>,
    m2_body: Mat3<f64>,
}

impl PanelBase {
    fn build(shape: BodyShape, n: usize) -> Result<PanelBase> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "panel count must be an even number >= 8, got {n}"
            )));
        }
        let step = TAU / n as f64;
        let params: Vec<f64> = (0..n).map(|j| j as f64 * step).collect();
        let frames: Vec<_> = params.iter().map(|&s| shape.frame(s)).collect();
        let nodes: Vec<Vec2<f64>> = frames.iter().map(|f| f.point).collect();
        let tangents: Vec<Vec2<f64>> = frames.iter().map(|f| f.tangent).collect();
        let normals: Vec<Vec2<f64>> = frames.iter().map(|f| f.normal).collect();
        let speeds: Vec<f64> = frames.iter().map(|f| f.speed).collect();
        let curvatures: Vec<f64> = frames.iter().map(|f| f.curvature).collect();
        let weights: Vec<f64> = speeds.iter().map(|sp| sp * step).collect();

        let (smin, smax) = speeds
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| {
                (lo.min(s), hi.max(s))
            });
        if smax > 100.0 * smin {
            return Err(Error::DegenerateShape(format!(
                "panel lengths vary by a factor {:.1}; refine the parameterization",
                smax / smin
            )));
        }
        let perimeter: f64 = weights.iter().sum();
        let mean_panel = perimeter / n as f64;
        let r_max = nodes.iter().map(|p| p.norm()).fold(0.0, f64::max);

        let nf = UPSAMPLE * n;
        let fine_step = TAU / nf as f64;
        let fine_params: Vec<f64> = (0..nf).map(|j| j as f64 * fine_step).collect();
        let fine_nodes: Vec<Vec2<f64>> = fine_params.iter().map(|&s| shape.point(s)).collect();
        let fine_weights: Vec<f64> = fine_params
            .iter()
            .map(|&s| shape.derivative(s, 1).norm() * fine_step)
            .collect();

        let a = bordered_matrix(&nodes, &normals, &curvatures, &weights);
        let lu = a.lu();

        // Kussmaul-Martensen boundary values: split the log kernel into the
        // periodic singular part (quadrature weights R_k) and the smooth
        // remainder with diagonal ln(speed^2).
        let r = log_quadrature_weights(n);
        let mut v = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let smooth = if i == j {
                    (speeds[i] * speeds[i]).ln()
                } else {
                    let q = (nodes[i] - nodes[j]).norm_squared();
                    let sine = ((params[i] - params[j]) / 2.0).sin();
                    (q / (4.0 * sine * sine)).ln()
                };
                v[(i, j)] = -(r[(j + n - i) % n] + step * smooth) * speeds[j] / (2.0 * TAU);
            }
        }

        let mut base = PanelBase {
            shape,
            n,
            params,
            nodes,
            tangents,
            normals,
            speeds,
            curvatures,
            weights,
            mean_panel,
            r_max,
            fine_params,
            fine_nodes,
            fine_weights,
            lu,
            value_matrix: v,
            kirchhoff: Vec::new(),
            m2_body: Mat3::zeros(),
        };
        let data = base.kirchhoff_body_data();
        for item in &data {
            let sol = base.solve_body(item)?;
            base.kirchhoff.push(sol);
        }
        let mut m = Mat3::zeros();
        for a_idx in 0..3 {
            for b_idx in 0..3 {
                m[(a_idx, b_idx)] = (0..n)
                    .map(|i| base.kirchhoff[a_idx].values[i] * data[b_idx][i] * base.weights[i])
                    .sum();
            }
        }
        base.m2_body = m;
        Ok(base)
    }

    /// Body-frame Kirchhoff data `K_1 = n_1`, `K_2 = n_2`, `K_3 = perp(x) . n`
    /// (normal into the body, centroid at the origin).
    fn kirchhoff_body_data(&self) -> [Vec<f64>; 3] {
        let k1 = self.normals.iter().map(|nm| nm.x).collect();
        let k2 = self.normals.iter().map(|nm| nm.y).collect();
        let k3 = self
            .nodes
            .iter()
            .zip(&self.normals)
            .map(|(x, nm)| perp(*x).dot(nm))
            .collect();
        [k1, k2, k3]
    }

    /// Reassembled bordered influence matrix (body frame), for audit dumps.
    pub fn influence_matrix(&self) -> DMatrix<f64> {
        bordered_matrix(&self.nodes, &self.normals, &self.curvatures, &self.weights)
    }

    /// Body-frame single-layer densities of the three Kirchhoff solves.
    pub fn kirchhoff_densities(&self) -> [&[f64]; 3] {
        [
            &self.kirchhoff[0].density,
            &self.kirchhoff[1].density,
            &self.kirchhoff[2].density,
        ]
    }

    /// Solve the bordered Neumann system for data given at the nodes
    /// (`dPhi/dn` on the fluid side, normal into the body).
    fn solve_body(&self, data: &[f64]) -> Result<BoundarySolution> {
        let sol = self.solve_body_unchecked(data)?;
        // The floor keeps roundoff-level data (for a disc the rotational
        // datum is identically zero) from tripping the relative check.
        let scale = data.iter().fold(1e-8f64, |m, g| m.max(g.abs()));
        if sol.lambda.abs() > COMPATIBILITY_TOL * scale {
            return Err(Error::IncompatibleData(format!(
                "boundary data has net flux: lambda = {:.3e} at data scale {scale:.3e}",
                sol.lambda
            )));
        }
        Ok(sol)
    }

    /// Same solve without the compatibility threshold: the bordered system
    /// absorbs any mean flux into lambda and returns the nearest compatible
    /// solution. Callers that assemble data from volume quadratures own the
    /// residual bookkeeping.
    fn solve_body_unchecked(&self, data: &[f64]) -> Result<BoundarySolution> {
        assert_eq!(data.len(), self.n);
        let mut rhs = DVector::<f64>::zeros(self.n + 1);
        for (i, g) in data.iter().enumerate() {
            rhs[i] = *g;
        }
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("bordered Neumann system".into()))?;
        let lambda = sol[self.n];
        let density: Vec<f64> = (0..self.n).map(|i| sol[i]).collect();
        let values_v = &self.value_matrix * DVector::from_column_slice(&density);
        let values: Vec<f64> = values_v.iter().copied().collect();
        let trace = PotentialTrace::build(&self.speeds, &self.curvatures, &values, data);
        let fine_density = self.upsample(&density);
        Ok(BoundarySolution {
            density,
            data: data.to_vec(),
            values,
            lambda,
            trace,
            fine_density,
        })
    }

    /// Single layer with a prescribed density, no solve: the flux it induces
    /// follows from the fluid-side jump relation, boundary values from the
    /// log quadrature. Used to collapse thin volume-source bands onto the
    /// boundary.
    fn layer_from_density(&self, density: &[f64]) -> BoundarySolution {
        assert_eq!(density.len(), self.n);
        let mut data = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..self.n {
                let k = if i == j {
                    self.curvatures[i] / (2.0 * TAU)
                } else {
                    adjoint_kernel(self.nodes[i], self.normals[i], self.nodes[j])
                };
                acc += k * self.weights[j] * density[j];
            }
            data[i] = acc + 0.5 * density[i];
        }
        let values_v = &self.value_matrix * DVector::from_column_slice(density);
        let values: Vec<f64> = values_v.iter().copied().collect();
        let trace = PotentialTrace::build(&self.speeds, &self.curvatures, &values, &data);
        let fine_density = self.upsample(density);
        BoundarySolution {
            density: density.to_vec(),
            data,
            values,
            lambda: 0.0,
            trace,
            fine_density,
        }
    }

    fn upsample(&self, density: &[f64]) -> Vec<f64> {
        let series = TrigSeries::from_samples(density);
        self.fine_params.iter().map(|&s| series.eval(s)).collect()
    }

    /// Foot parameter and signed distance (positive on the fluid side) of a
    /// body-frame point: coarse scan over the nodes plus Newton refinement,
    /// falling back to the global projection when Newton is inconclusive.
    fn locate(&self, xi: Vec2<f64>) -> (f64, f64) {
        let mut jb = 0;
        let mut best = f64::INFINITY;
        for (j, p) in self.nodes.iter().enumerate() {
            let d2 = (xi - p).norm_squared();
            if d2 < best {
                best = d2;
                jb = j;
            }
        }
        let dmin = best.sqrt();
        if dmin >= 4.5 * self.mean_panel {
            // Far from the curve the nearest node decides the side, and the
            // distance is only needed as a lower bound.
            let side = (xi - self.nodes[jb]).dot(&(-self.normals[jb]));
            let d = dmin - 0.5 * self.mean_panel;
            return (self.params[jb], if side >= 0.0 { d } else { -d });
        }
        let mut s = self.params[jb];
        let mut converged = false;
        for _ in 0..10 {
            let c = self.shape.point(s);
            let c1 = self.shape.derivative(s, 1);
            let c2 = self.shape.derivative(s, 2);
            let v = xi - c;
            let g = v.dot(&c1);
            let gs = v.dot(&c2) - c1.norm_squared();
            if gs.abs() < 1e-300 {
                break;
            }
            let ds = g / gs;
            s -= ds;
            if ds.abs() < 1e-12 {
                converged = true;
                break;
            }
        }
        if converged {
            let c = self.shape.point(s);
            let c1 = self.shape.derivative(s, 1);
            let v = xi - c;
            if v.dot(&c1).abs() <= 1e-8 * c1.norm() * (v.norm() + self.mean_panel) {
                let nu_out = -perp(c1 / c1.norm());
                return (s.rem_euclid(TAU), v.dot(&nu_out));
            }
        }
        let (s2, foot, _) = self.shape.project(xi);
        let f = self.shape.frame(s2);
        (s2, (xi - foot).dot(&(-f.normal)))
    }

    fn direct_sum<const M: usize>(
        nodes: &[Vec2<f64>],
        weights: &[f64],
        density: &[f64],
        xi: Vec2<f64>,
        kernel: impl Fn(Vec2<f64>) -> [f64; M],
    ) -> [f64; M] {
        let mut acc = [0.0; M];
        for (j, y) in nodes.iter().enumerate() {
            let k = kernel(xi - y);
            let c = density[j] * weights[j];
            for m in 0..M {
                acc[m] += c * k[m];
            }
        }
        acc
    }

    fn value_kernel(d: Vec2<f64>) -> [f64; 1] {
        [-d.norm().ln() / TAU]
    }

    fn gradient_kernel(d: Vec2<f64>) -> [f64; 2] {
        let q = TAU * d.norm_squared();
        [-d.x / q, -d.y / q]
    }

    /// Hessian components `[h_xx, h_xy, h_yy]` of the log kernel.
    fn hessian_kernel(d: Vec2<f64>) -> [f64; 3] {
        let q = d.norm_squared();
        let c = -1.0 / (TAU * q);
        [
            c * (1.0 - 2.0 * d.x * d.x / q),
            c * (-2.0 * d.x * d.y / q),
            c * (1.0 - 2.0 * d.y * d.y / q),
        ]
    }

    fn sum_coarse<const M: usize>(
        &self,
        sol: &BoundarySolution,
        xi: Vec2<f64>,
        kernel: impl Fn(Vec2<f64>) -> [f64; M],
    ) -> [f64; M] {
        Self::direct_sum(&self.nodes, &self.weights, &sol.density, xi, kernel)
    }

    fn sum_fine<const M: usize>(
        &self,
        sol: &BoundarySolution,
        xi: Vec2<f64>,
        kernel: impl Fn(Vec2<f64>) -> [f64; M],
    ) -> [f64; M] {
        Self::direct_sum(
            &self.fine_nodes,
            &self.fine_weights,
            &sol.fine_density,
            xi,
            kernel,
        )
    }

    /// Ray samples at the safe offsets, through the upsampled quadrature.
    fn ray_samples<const M: usize>(
        &self,
        sol: &BoundarySolution,
        origin: Vec2<f64>,
        nu: Vec2<f64>,
        kernel: impl Fn(Vec2<f64>) -> [f64; M] + Copy,
    ) -> ([f64; 4], [[f64; 4]; M]) {
        let h = self.mean_panel;
        let ts = RAY_NODES.map(|c| c * h);
        let mut samples = [[0.0; 4]; M];
        for (k, &t) in ts.iter().enumerate() {
            let vals = self.sum_fine(sol, origin + nu * t, kernel);
            for m in 0..M {
                samples[m][k] = vals[m];
            }
        }
        (ts, samples)
    }

    fn check_outside(&self, xi: Vec2<f64>, d: f64) -> Result<()> {
        if d < -1e-9 * self.r_max {
            return Err(Error::InsideBody { x: xi.x, y: xi.y });
        }
        Ok(())
    }

    fn eval_value(&self, sol: &BoundarySolution, xi: Vec2<f64>) -> Result<f64> {
        let (s, d) = self.locate(xi);
        self.check_outside(xi, d)?;
        let h = self.mean_panel;
        if d >= FAR_BAND * h {
            return Ok(self.sum_coarse(sol, xi, Self::value_kernel)[0]);
        }
        if d >= NEAR_BAND * h {
            return Ok(self.sum_fine(sol, xi, Self::value_kernel)[0]);
        }
        // Jet-corrected ray reconstruction: subtract the exact second-order
        // normal Taylor from the samples and interpolate the remainder.
        let f = self.shape.frame(s);
        let nu = -f.normal;
        let jet = sol.trace.at(s);
        let (v0, a0, c0) = (jet.value, jet.d_nu, -jet.h_tt);
        let (ts, samples) = self.ray_samples(sol, f.point, nu, Self::value_kernel);
        let mut rem = [0.0; 4];
        for k in 0..4 {
            let t = ts[k];
            rem[k] = (samples[0][k] - v0 - a0 * t - 0.5 * c0 * t * t) / (t * t * t);
        }
        let t = d.max(0.0);
        Ok(v0 + a0 * t + 0.5 * c0 * t * t + t * t * t * neville4(&ts, &rem, t))
    }

    /// Body-frame gradient.
    fn eval_gradient(&self, sol: &BoundarySolution, xi: Vec2<f64>) -> Result<Vec2<f64>> {
        let (s, d) = self.locate(xi);
        self.check_outside(xi, d)?;
        let h = self.mean_panel;
        if d >= FAR_BAND * h {
            let g = self.sum_coarse(sol, xi, Self::gradient_kernel);
            return Ok(Vec2::new(g[0], g[1]));
        }
        if d >= NEAR_BAND * h {
            let g = self.sum_fine(sol, xi, Self::gradient_kernel);
            return Ok(Vec2::new(g[0], g[1]));
        }
        let f = self.shape.frame(s);
        let nu = -f.normal;
        let tau = f.tangent;
        let jet = sol.trace.at(s);
        let g0 = nu * jet.d_nu + tau * jet.d_tau;
        // Normal derivative of the gradient: H nu = -h_tt nu + h_nt tau.
        let g1 = nu * (-jet.h_tt) + tau * jet.h_nt;
        let (ts, samples) = self.ray_samples(sol, f.point, nu, Self::gradient_kernel);
        let t = d.max(0.0);
        let mut out = [0.0; 2];
        for m in 0..2 {
            let mut rem = [0.0; 4];
            for k in 0..4 {
                let tk = ts[k];
                rem[k] = (samples[m][k] - g0[m] - g1[m] * tk) / (tk * tk);
            }
            out[m] = g0[m] + g1[m] * t + t * t * neville4(&ts, &rem, t);
        }
        Ok(Vec2::new(out[0], out[1]))
    }

    /// Body-frame Hessian.
    fn eval_hessian(&self, sol: &BoundarySolution, xi: Vec2<f64>) -> Result<Mat2<f64>> {
        let (s, d) = self.locate(xi);
        self.check_outside(xi, d)?;
        let h = self.mean_panel;
        if d >= FAR_BAND * h {
            let v = self.sum_coarse(sol, xi, Self::hessian_kernel);
            return Ok(Mat2::new(v[0], v[1], v[1], v[2]));
        }
        if d >= NEAR_BAND * h {
            let v = self.sum_fine(sol, xi, Self::hessian_kernel);
            return Ok(Mat2::new(v[0], v[1], v[1], v[2]));
        }
        let f = self.shape.frame(s);
        let nu = -f.normal;
        let tau = f.tangent;
        let jet = sol.trace.at(s);
        // H0 = -h_tt nu nu^T + h_nt (nu tau^T + tau nu^T) + h_tt tau tau^T
        let h0m = (tau * tau.transpose() - nu * nu.transpose()) * jet.h_tt
            + (nu * tau.transpose() + tau * nu.transpose()) * jet.h_nt;
        let h0 = [h0m[(0, 0)], h0m[(0, 1)], h0m[(1, 1)]];
        let (ts, samples) = self.ray_samples(sol, f.point, nu, Self::hessian_kernel);
        let t = d.max(0.0);
        let mut out = [0.0; 3];
        for m in 0..3 {
            let mut rem = [0.0; 4];
            for k in 0..4 {
                rem[k] = (samples[m][k] - h0[m]) / ts[k];
            }
            out[m] = h0[m] + t * neville4(&ts, &rem, t);
        }
        Ok(Mat2::new(out[0], out[1], out[1], out[2]))
    }

    pub fn kirchhoff_solutions(&self) -> &[BoundarySolution] {
        &self.kirchhoff
    }

    /// Body-frame added mass `m2[a][b] = int grad Phi_a . grad Phi_b dx`.
    pub fn m2_body(&self) -> Mat3<f64> {
        self.m2_body
    }
}

fn world_err(e: Error, x: Vec2<f64>) -> Error {
    match e {
        Error::InsideBody { .. } => Error::InsideBody { x: x.x, y: x.y },
        other => other,
    }
}

/// An exterior harmonic potential tied to a pose: evaluation anywhere in the
/// fluid, with automatic near-boundary handling.
#[derive(Clone, Debug)]
pub struct HarmonicPotential {
    base: Arc<PanelBase>,
    motion: RigidMotion,
    sol: BoundarySolution,
}

impl HarmonicPotential {
    pub fn solution(&self) -> &BoundarySolution {
        &self.sol
    }

    pub fn lambda(&self) -> f64 {
        self.sol.lambda
    }

    pub fn value(&self, x: Vec2<f64>) -> Result<f64> {
        self.base
            .eval_value(&self.sol, self.motion.body_unmap(x))
            .map_err(|e| world_err(e, x))
    }

    pub fn gradient(&self, x: Vec2<f64>) -> Result<Vec2<f64>> {
        let g = self
            .base
            .eval_gradient(&self.sol, self.motion.body_unmap(x))
            .map_err(|e| world_err(e, x))?;
        Ok(self.motion.map_vector(g))
    }

    pub fn hessian(&self, x: Vec2<f64>) -> Result<Mat2<f64>> {
        let h = self
            .base
            .eval_hessian(&self.sol, self.motion.body_unmap(x))
            .map_err(|e| world_err(e, x))?;
        let q = self.motion.rotation();
        Ok(q * h * q.transpose())
    }

    /// Boundary value at node `i` (frame scalar).
    pub fn boundary_value(&self, i: usize) -> f64 {
        self.sol.values[i]
    }

    /// World-frame gradient at node `i`, reconstructed from the trace.
    pub fn boundary_gradient(&self, i: usize) -> Vec2<f64> {
        let nu = -self.base.normals[i];
        let t = self.base.tangents[i];
        let g = nu * self.sol.trace.d_nu[i] + t * self.sol.trace.d_tau[i];
        self.motion.map_vector(g)
    }

    /// World-frame gradient at boundary parameter `s`.
    pub fn boundary_gradient_at(&self, s: f64) -> Vec2<f64> {
        let f = self.base.shape.frame(s);
        let jet = self.sol.trace.at(s);
        let g = -f.normal * jet.d_nu + f.tangent * jet.d_tau;
        self.motion.map_vector(g)
    }

    /// Circulation of the gradient around the body, `oint dPhi/dtau ds`.
    /// Zero for single-layer potentials up to quadrature error; exposed as a
    /// diagnostic because the circulation bookkeeping relies on it.
    pub fn circulation(&self) -> f64 {
        let step = TAU / self.base.n as f64;
        (0..self.base.n)
            .map(|i| self.sol.trace.d_tau[i] * self.base.speeds[i] * step)
            .sum()
    }
}

/// Added-mass tensor (a 3x3 Gram matrix of the Kirchhoff potentials).
#[derive(Clone, Copy, Debug)]
pub struct AddedMassTensor {
    pub matrix: Mat3<f64>,
}

impl AddedMassTensor {
    pub fn symmetry_defect(&self) -> f64 {
        let m = &self.matrix;
        let mut worst = 0.0f64;
        for a in 0..3 {
            for b in a + 1..3 {
                worst = worst.max((m[(a, b)] - m[(b, a)]).abs());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.matrix + self.matrix.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

/// The discretized body boundary at a pose.
#[derive(Clone, Debug)]
pub struct PanelSystem {
    base: Arc<PanelBase>,
    motion: RigidMotion,
    nodes: Vec<Vec2<f64>>,
    tangents: Vec<Vec2<f64>>,
    normals: Vec<Vec2<f64>>,
}

impl PanelSystem {
    pub fn new(shape: BodyShape, n: usize) -> Result<PanelSystem> {
        let base = Arc::new(PanelBase::build(shape, n)?);
        Ok(PanelSystem::from_base(base, RigidMotion::identity()))
    }

    fn from_base(base: Arc<PanelBase>, motion: RigidMotion) -> PanelSystem {
        let nodes = base.nodes.iter().map(|&p| motion.body_map(p)).collect();
        let tangents = base
            .tangents
            .iter()
            .map(|&t| motion.map_vector(t))
            .collect();
        let normals = base
            .normals
            .iter()
            .map(|&nm| motion.map_vector(nm))
            .collect();
        PanelSystem {
            base,
            motion,
            nodes,
            tangents,
            normals,
        }
    }

    /// Same discretization at another pose; the factorization is shared.
    pub fn with_motion(&self, motion: RigidMotion) -> PanelSystem {
        PanelSystem::from_base(self.base.clone(), motion)
    }

    pub fn base(&self) -> &PanelBase {
        &self.base
    }

    pub fn shape(&self) -> &BodyShape {
        &self.base.shape
    }

    pub fn motion(&self) -> RigidMotion {
        self.motion
    }

    pub fn n(&self) -> usize {
        self.base.n
    }

    pub fn params(&self) -> &[f64] {
        &self.base.params
    }

    /// World node positions.
    pub fn nodes(&self) -> &[Vec2<f64>] {
        &self.nodes
    }

    pub fn tangents(&self) -> &[Vec2<f64>] {
        &self.tangents
    }

    /// World normals, pointing out of the fluid.
    pub fn normals(&self) -> &[Vec2<f64>] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.base.weights
    }

    pub fn speeds(&self) -> &[f64] {
        &self.base.speeds
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.base.curvatures
    }

    pub fn perimeter(&self) -> f64 {
        self.base.weights.iter().sum()
    }

    pub fn mean_panel(&self) -> f64 {
        self.base.mean_panel
    }

    /// Largest distance from the centroid to the boundary.
    pub fn body_radius(&self) -> f64 {
        self.base.r_max
    }

    /// Solve an exterior Neumann problem with world data at the nodes
    /// (`dPhi/dn`, normal into the body). Fails with `IncompatibleData` when
    /// the data carries net flux.
    pub fn solve_exterior_neumann(&self, data: &[f64]) -> Result<HarmonicPotential> {
        let sol = self.base.solve_body(data)?;
        Ok(HarmonicPotential {
            base: self.base.clone(),
            motion: self.motion,
            sol,
        })
    }

    /// Like `solve_exterior_neumann`, but instead of rejecting data with net
    /// flux it returns the bordered multiplier alongside the potential. The
    /// multiplier is the weighted mean flux the solve removed; callers doing
    /// their own compatibility bookkeeping (volume-source corrections) check
    /// it against the budget they expect.
    pub fn solve_exterior_neumann_with_defect(
        &self,
        data: &[f64],
    ) -> Result<(HarmonicPotential, f64)> {
        let sol = self.base.solve_body_unchecked(data)?;
        let lambda = sol.lambda;
        Ok((
            HarmonicPotential {
                base: self.base.clone(),
                motion: self.motion,
                sol,
            },
            lambda,
        ))
    }

    /// Single-layer potential with a prescribed nodal density (no solve).
    pub fn single_layer(&self, density: &[f64]) -> HarmonicPotential {
        HarmonicPotential {
            base: self.base.clone(),
            motion: self.motion,
            sol: self.base.layer_from_density(density),
        }
    }

    /// World Kirchhoff data at the nodes: `(n_1, n_2, perp(x - h) . n)`.
    pub fn kirchhoff_data(&self) -> [Vec<f64>; 3] {
        let h = self.motion.h;
        let k1 = self.normals.iter().map(|nm| nm.x).collect();
        let k2 = self.normals.iter().map(|nm| nm.y).collect();
        let k3 = self
            .nodes
            .iter()
            .zip(&self.normals)
            .map(|(x, nm)| perp(x - h).dot(nm))
            .collect();
        [k1, k2, k3]
    }

    /// World values of the three Kirchhoff potentials at `x`; the in-plane
    /// pair rotates as a vector: `Phi_a = sum_b Q_ab Phi0_b(Q^T (x - h))`.
    pub fn kirchhoff_values(&self, x: Vec2<f64>) -> Result<Vec3<f64>> {
        let xi = self.motion.body_unmap(x);
        let k = &self.base.kirchhoff;
        let f1 = self
            .base
            .eval_value(&k[0], xi)
            .map_err(|e| world_err(e, x))?;
        let f2 = self
            .base
            .eval_value(&k[1], xi)
            .map_err(|e| world_err(e, x))?;
        let f3 = self
            .base
            .eval_value(&k[2], xi)
            .map_err(|e| world_err(e, x))?;
        let planar = self.motion.rotation() * Vec2::new(f1, f2);
        Ok(Vec3::new(planar.x, planar.y, f3))
    }

    /// World gradients of the three Kirchhoff potentials at `x`.
    pub fn kirchhoff_gradients(&self, x: Vec2<f64>) -> Result<[Vec2<f64>; 3]> {
        let xi = self.motion.body_unmap(x);
        let k = &self.base.kirchhoff;
        let g = [
            self.base
                .eval_gradient(&k[0], xi)
                .map_err(|e| world_err(e, x))?,
            self.base
                .eval_gradient(&k[1], xi)
                .map_err(|e| world_err(e, x))?,
            self.base
                .eval_gradient(&k[2], xi)
                .map_err(|e| world_err(e, x))?,
        ];
        let q = self.motion.rotation();
        Ok([
            q * (g[0] * q[(0, 0)] + g[1] * q[(0, 1)]),
            q * (g[0] * q[(1, 0)] + g[1] * q[(1, 1)]),
            q * g[2],
        ])
    }

    /// World boundary values of the Kirchhoff potentials at the nodes.
    pub fn kirchhoff_boundary_values(&self) -> [Vec<f64>; 3] {
        let n = self.base.n;
        let k = &self.base.kirchhoff;
        let q = self.motion.rotation();
        let mut v1 = Vec::with_capacity(n);
        let mut v2 = Vec::with_capacity(n);
        for i in 0..n {
            let p = q * Vec2::new(k[0].values[i], k[1].values[i]);
            v1.push(p.x);
            v2.push(p.y);
        }
        [v1, v2, k[2].values.clone()]
    }

    /// The Kirchhoff flow for body velocities `(ell, r)`: the potential
    /// `sum_a ell_a Phi_a + r Phi_3` as one combined solution (a single
    /// density), evaluated like any other exterior potential.
    pub fn kirchhoff_flow(&self, ell: Vec2<f64>, r: f64) -> HarmonicPotential {
        let c = self.motion.unmap_vector(ell);
        let k = &self.base.kirchhoff;
        let sol =
            BoundarySolution::combine(&[(c.x, &k[0]), (c.y, &k[1]), (r, &k[2])], &self.base);
        HarmonicPotential {
            base: self.base.clone(),
            motion: self.motion,
            sol,
        }
    }

    /// World added mass from the cached body-frame solves:
    /// `M2 = B M2_body B^T` with `B = blockdiag(Q, 1)`.
    pub fn added_mass(&self) -> AddedMassTensor {
        let q = self.motion.rotation();
        let mut b = Mat3::identity();
        for i in 0..2 {
            for j in 0..2 {
                b[(i, j)] = q[(i, j)];
            }
        }
        AddedMassTensor {
            matrix: b * self.base.m2_body * b.transpose(),
        }
    }

    /// World added mass recomputed from fresh Neumann solves with world data
    /// at the current pose; used to check pose invariance of the cached
    /// route.
    pub fn added_mass_direct(&self) -> Result<AddedMassTensor> {
        let data = self.kirchhoff_data();
        let sols = [
            self.base.solve_body(&data[0])?,
            self.base.solve_body(&data[1])?,
            self.base.solve_body(&data[2])?,
        ];
        let mut m = Mat3::zeros();
        for a in 0..3 {
            for b in 0..3 {
                m[(a, b)] = (0..self.base.n)
                    .map(|i| sols[a].values[i] * data[b][i] * self.base.weights[i])
                    .sum();
            }
        }
        Ok(AddedMassTensor { matrix: m })
    }

    /// Largest entry difference between the cached-rotation route and fresh
    /// world-frame solves.
    pub fn added_mass_invariance_defect(&self) -> Result<f64> {
        let a = self.added_mass().matrix;
        let b = self.added_mass_direct()?.matrix;
        Ok((a - b).abs().max())
    }

    /// Max Neumann residual at panel midpoints: the jump relation with the
    /// solved density against `data(s)` (the body-frame Neumann datum as a
    /// function of the parameter). The midpoint kernel sum is a plain
    /// trapezoid rule of a smooth periodic integrand, so this is an
    /// independent consistency check of the collocation solve.
    pub fn boundary_residual_midpoint(
        &self,
        pot: &HarmonicPotential,
        data: impl Fn(f64) -> f64,
    ) -> f64 {
        let base = &self.base;
        let step = TAU / base.n as f64;
        let density_s = TrigSeries::from_samples(&pot.sol.density);
        let mut worst = 0.0f64;
        for i in 0..base.n {
            let s = base.params[i] + 0.5 * step;
            let f = base.shape.frame(s);
            let mut lhs = 0.5 * density_s.eval(s) + pot.sol.lambda;
            for j in 0..base.n {
                lhs += adjoint_kernel(f.point, f.normal, base.nodes[j])
                    * pot.sol.density[j]
                    * base.weights[j];
            }
            worst = worst.max((lhs - data(s)).abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn disc_system(n: usize) -> PanelSystem {
        PanelSystem::new(BodyShape::disc(1.0).unwrap(), n).unwrap()
    }

    /// `Phi_1 = -x_1/|x|^2` data for the unit disc.
    fn disc_dipole(x: Vec2<f64>) -> (f64, Vec2<f64>, Mat2<f64>) {
        let q = x.norm_squared();
        let v = -x.x / q;
        let g = Vec2::new((x.x * x.x - x.y * x.y) / (q * q), 2.0 * x.x * x.y / (q * q));
        let hxx = 2.0 * x.x / (q * q) - 4.0 * x.x * (x.x * x.x - x.y * x.y) / (q * q * q);
        let hxy = -2.0 * x.y / (q * q) - 4.0 * x.y * (x.x * x.x - x.y * x.y) / (q * q * q);
        (v, g, Mat2::new(hxx, hxy, hxy, -hxx))
    }

    #[test]
    fn log_weights_reproduce_cosine_integrals() {
        // int ln(4 sin^2((s_i - t)/2)) cos(mt) dt = -(2pi/m) cos(m s_i)
        let n = 32;
        let r = log_quadrature_weights(n);
        let step = TAU / n as f64;
        for &i in &[0usize, 5] {
            for m in 1..=n / 2 {
                let quad: f64 = (0..n)
                    .map(|j| r[(j + n - i) % n] * ((m * j) as f64 * step).cos())
                    .sum();
                let exact = -TAU / m as f64 * ((m * i) as f64 * step).cos();
                assert_relative_eq!(quad, exact, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn kress_values_match_disc_eigenfunction() {
        // On the unit disc the single layer maps cos(ms) to cos(ms)/(2m),
        // so density -2 cos s has boundary values -cos s.
        let sys = disc_system(64);
        let base = sys.base();
        let sigma: Vec<f64> = base.params.iter().map(|&s| -2.0 * s.cos()).collect();
        let v = &base.value_matrix * DVector::from_column_slice(&sigma);
        for (i, &s) in base.params.iter().enumerate() {
            assert_relative_eq!(v[i], -s.cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn disc_kirchhoff_solution_closed_form() {
        let sys = disc_system(64);
        let sol = &sys.base().kirchhoff_solutions()[0];
        for (i, &s) in sys.params().iter().enumerate() {
            assert_relative_eq!(sol.density[i], -2.0 * s.cos(), epsilon = 1e-10);
            assert_relative_eq!(sol.values[i], -s.cos(), epsilon = 1e-10);
            assert_relative_eq!(sol.trace.d_tau[i], s.sin(), epsilon = 1e-10);
            assert_relative_eq!(sol.trace.d_nu[i], s.cos(), epsilon = 1e-12);
        }
        assert!(sol.lambda.abs() < 1e-12);

        let pot = HarmonicPotential {
            base: sys.base.clone(),
            motion: RigidMotion::identity(),
            sol: sol.clone(),
        };
        let x = Vec2::new(2.0, 0.0);
        let (v, g, hm) = disc_dipole(x);
        assert_relative_eq!(pot.value(x).unwrap(), v, epsilon = 1e-12);
        let pg = pot.gradient(x).unwrap();
        assert_relative_eq!(pg.x, g.x, epsilon = 1e-12);
        assert_relative_eq!(pg.y, g.y, epsilon = 1e-12);
        let ph = pot.hessian(x).unwrap();
        assert_relative_eq!((ph - hm).norm(), 0.0, epsilon = 1e-11);
        // Trace Hessian at the node s = 0, where d^2 Phi_1 = diag(-2, 2).
        assert_relative_eq!(sol.trace.h_tt[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(sol.trace.h_nt[0], 0.0, epsilon = 1e-8);
        // Single-layer gradients carry no circulation.
        assert!(pot.circulation().abs() < 1e-12);
    }

    #[test]
    fn near_boundary_evaluation_is_accurate() {
        let sys = disc_system(64);
        let sol = sys.base().kirchhoff_solutions()[0].clone();
        let pot = HarmonicPotential {
            base: sys.base.clone(),
            motion: RigidMotion::identity(),
            sol,
        };
        let h = sys.mean_panel();
        // Ray-reconstruction zone (d < 1.2 h) and upsampled zone (d < 3 h).
        for &frac in &[0.0, 0.07, 0.3, 0.8, 1.1, 1.5, 2.0, 2.6] {
            let rad: f64 = 1.0 + frac * h;
            for &ang in &[0.0f64, 1.234, 4.0] {
                let x = Vec2::new(rad * ang.cos(), rad * ang.sin());
                let (v, g, hm) = disc_dipole(x);
                assert_relative_eq!(pot.value(x).unwrap(), v, epsilon = 2e-7);
                let pg = pot.gradient(x).unwrap();
                assert_relative_eq!((pg - g).norm(), 0.0, epsilon = 2e-6);
                let ph = pot.hessian(x).unwrap();
                // The Hessian ray reconstruction has one Hermite condition
                // fewer, and the dipole Hessian has large high derivatives.
                assert_relative_eq!((ph - hm).norm(), 0.0, epsilon = 5e-4);
            }
        }
        // The safe band itself is near roundoff.
        for &frac in &[1.3, 2.0, 2.9] {
            let x = Vec2::new(0.3f64.cos(), 0.3f64.sin()) * (1.0 + frac * h);
            let (v, g, _) = disc_dipole(x);
            assert_relative_eq!(pot.value(x).unwrap(), v, epsilon = 1e-11);
            assert_relative_eq!((pot.gradient(x).unwrap() - g).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn disc_added_mass_is_diag_pi_pi_zero() {
        let sys = disc_system(128);
        let m = sys.added_mass();
        assert_relative_eq!(m.matrix[(0, 0)], std::f64::consts::PI, epsilon = 1e-10);
        assert_relative_eq!(m.matrix[(1, 1)], std::f64::consts::PI, epsilon = 1e-10);
        assert!(m.matrix[(2, 2)].abs() < 1e-10);
        assert!(m.symmetry_defect() < 1e-12);
        assert!(m.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn ellipse_added_mass_matches_closed_forms() {
        // Semi-axes a, b: pi b^2 (motion along a), pi a^2 (along b),
        // pi (a^2 - b^2)^2 / 8 for rotation.
        let (a, b) = (2.0, 1.0);
        let sys = PanelSystem::new(BodyShape::ellipse(a, b).unwrap(), 256).unwrap();
        let m = sys.added_mass().matrix;
        let pi = std::f64::consts::PI;
        assert_relative_eq!(m[(0, 0)], pi * b * b, max_relative = 1e-8);
        assert_relative_eq!(m[(1, 1)], pi * a * a, max_relative = 1e-8);
        assert_relative_eq!(
            m[(2, 2)],
            pi * (a * a - b * b).powi(2) / 8.0,
            max_relative = 1e-6
        );
        assert!(m[(0, 1)].abs() < 1e-10);
        assert!(m[(0, 2)].abs() < 1e-9);
    }

    #[test]
    fn added_mass_is_pose_invariant() {
        let sys = PanelSystem::new(BodyShape::ellipse(1.7, 0.8).unwrap(), 128).unwrap();
        let moved = sys.with_motion(RigidMotion {
            h: Vec2::new(0.3, -0.7),
            theta: 0.9,
        });
        assert!(moved.added_mass_invariance_defect().unwrap() < 1e-9);
        // The rotation-rotation entry and the planar trace never change.
        assert_relative_eq!(
            moved.added_mass().matrix[(2, 2)],
            sys.added_mass().matrix[(2, 2)],
            epsilon = 1e-13
        );
        assert_relative_eq!(
            moved.added_mass().matrix.trace(),
            sys.added_mass().matrix.trace(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn perimeter_oracles() {
        let disc = disc_system(64);
        assert_relative_eq!(disc.perimeter(), TAU, epsilon = 1e-12);
        // Dense trapezoid oracle for the ellipse arclength.
        let shape = BodyShape::ellipse(2.0, 1.0).unwrap();
        let dense = 1 << 16;
        let oracle: f64 = (0..dense)
            .map(|i| shape.frame(i as f64 * TAU / dense as f64).speed * TAU / dense as f64)
            .sum();
        let sys = PanelSystem::new(shape, 128).unwrap();
        assert_relative_eq!(sys.perimeter(), oracle, epsilon = 1e-10);
    }

    #[test]
    fn far_field_decays_like_a_dipole() {
        let sys = PanelSystem::new(BodyShape::ellipse(1.5, 0.9).unwrap(), 96).unwrap();
        let data = sys.kirchhoff_data();
        let pot = sys.solve_exterior_neumann(&data[0]).unwrap();
        let v50 = pot.value(Vec2::new(50.0, 37.0)).unwrap();
        let v100 = pot.value(Vec2::new(100.0, 74.0)).unwrap();
        let r50 = Vec2::new(50.0, 37.0).norm();
        assert!(v50.abs() * r50 < 5.0);
        // |Phi| ~ C/r: doubling the radius halves the value.
        assert_relative_eq!(v50 / v100, 2.0, max_relative = 0.02);
    }

    #[test]
    fn midpoint_residual_converges_spectrally() {
        let shape = BodyShape::ellipse(1.4, 0.9).unwrap();
        let res = |n: usize| {
            let sys = PanelSystem::new(shape.clone(), n).unwrap();
            let data = sys.kirchhoff_data();
            let pot = sys.solve_exterior_neumann(&data[0]).unwrap();
            sys.boundary_residual_midpoint(&pot, |s| sys.shape().frame(s).normal.x)
        };
        let (r64, r128, r256) = (res(64), res(128), res(256));
        assert!(r128 < r64, "{r64} -> {r128}");
        // 128 panels already sit at the roundoff plateau for this shape.
        assert!(r256 < 1e-12, "residual at 256 panels: {r256}");
    }

    #[test]
    fn net_flux_data_is_rejected() {
        let sys = disc_system(32);
        let data = vec![1.0; 32];
        match sys.solve_exterior_neumann(&data) {
            Err(Error::IncompatibleData(_)) => {}
            other => panic!("expected IncompatibleData, got {other:?}"),
        }
    }

    #[test]
    fn interior_points_are_rejected() {
        let sys = disc_system(32);
        let data = sys.kirchhoff_data();
        let pot = sys.solve_exterior_neumann(&data[0]).unwrap();
        match pot.value(Vec2::new(0.1, 0.0)) {
            Err(Error::InsideBody { .. }) => {}
            other => panic!("expected InsideBody, got {other:?}"),
        }
    }

    #[test]
    fn kirchhoff_flow_matches_translating_disc() {
        // Disc moving with ell = (1, 0): the flow potential is Phi_1 and the
        // velocity field is the dipole gradient.
        let sys = disc_system(64);
        let flow = sys.kirchhoff_flow(Vec2::new(1.0, 0.0), 0.0);
        let x = Vec2::new(0.3, 2.0);
        let (_, g, _) = disc_dipole(x);
        let pg = flow.gradient(x).unwrap();
        assert_relative_eq!((pg - g).norm(), 0.0, epsilon = 1e-10);
        // Normal flow at the nodes matches the body datum exactly.
        for i in 0..sys.n() {
            let un = flow.boundary_gradient(i).dot(&sys.normals()[i]);
            assert_relative_eq!(un, sys.normals()[i].x, epsilon = 1e-12);
        }
    }

    #[test]
    fn cached_and_fresh_world_solves_agree_at_a_pose() {
        // The cached route (body solves + rotation algebra) must reproduce a
        // fresh solve with world data; by linearity of the solve the two
        // paths agree to roundoff, which pins down the transformation law.
        let shape = BodyShape::ellipse(1.6, 1.0).unwrap();
        let sys = PanelSystem::new(shape, 128).unwrap();
        let motion = RigidMotion {
            h: Vec2::new(0.4, -0.2),
            theta: 0.7,
        };
        let moved = sys.with_motion(motion);
        let data = moved.kirchhoff_data();
        let x = Vec2::new(2.5, 1.1);
        for a in 0..3 {
            let fresh = moved.solve_exterior_neumann(&data[a]).unwrap();
            let gf = fresh.gradient(x).unwrap();
            let gc = moved.kirchhoff_gradients(x).unwrap()[a];
            assert_relative_eq!((gf - gc).norm(), 0.0, epsilon = 1e-11);
            let vf = fresh.value(x).unwrap();
            let vc = moved.kirchhoff_values(x).unwrap()[a];
            assert_relative_eq!(vf, vc, epsilon = 1e-11);
        }
    }
}
