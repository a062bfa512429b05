//! Coupled time integration of the body and the vortex field.
//!
//! One derivative evaluation poses the panels at the current body position,
//! assembles the corrected velocity field, solves the pressure problem and
//! reads the body acceleration from `M(theta) [l; r]' = F`, with `M` the
//! rigid inertia plus the added mass at the pose. Particles move with the
//! corrected velocity. The step is classic RK4 over the whole state at once;
//! body and fluid see each other inside every stage, so the discrete
//! trajectory inherits the smoothness of the coupled vector field rather
//! than a splitting error.

use crate::geometry::{BodyShape, RigidMotion, RigidState};
use crate::panels::PanelSystem;
use crate::pressure::{body_force_rhs, solve_mu, QuadratureConfig};
use crate::vortex::{conserved_quantities, ConservedQuantities, CorrectedField, VortexField};
use crate::{Error, Mat3, Result, Vec2, Vec3};

/// Rigid-body mass and moment of inertia about the center.
#[derive(Clone, Copy, Debug)]
pub struct BodyInertia {
    pub mass: f64,
    pub inertia: f64,
}

/// Everything the coupled integrator owns between calls: the reference
/// discretization (re-posed per stage; factorizations are shared), the body
/// inertia and the pressure quadrature.
#[derive(Clone, Debug)]
pub struct System {
    panels: PanelSystem,
    pub body: BodyInertia,
    pub quadrature: QuadratureConfig,
}

/// Integration state at one instant.
#[derive(Clone, Debug)]
pub struct SimState {
    pub time: f64,
    pub rigid: RigidState,
    pub field: VortexField,
    /// Latest per-step record (conserved quantities, solver residuals).
    pub diagnostics: StepRecord,
}

/// Diagnostics of one derivative evaluation plus step bookkeeping.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    pub conserved: ConservedQuantities,
    /// Body force and torque at the sample time.
    pub force: Vec3<f64>,
    pub gamma_measured: f64,
    pub normal_flow_defect: f64,
    pub compatibility_residual: f64,
    pub correction_defect: f64,
    /// Reflections in the step that produced this state (0 for the initial).
    pub reflections: usize,
}

/// Recorded run: one row per sample, strictly increasing times.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<RigidState>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, time: f64, state: RigidState, record: StepRecord) {
        if let Some(&last) = self.times.last() {
            assert!(time > last, "trajectory times must increase");
        }
        self.times.push(time);
        self.states.push(state);
        self.records.push(record);
    }

    /// A named scalar channel, for fitting and output.
    pub fn channel(&self, name: &str) -> Option<Vec<f64>> {
        let pick: fn(&RigidState) -> f64 = match name {
            "hx" => |s| s.h.x,
            "hy" => |s| s.h.y,
            "theta" => |s| s.theta,
            "lx" => |s| s.ell.x,
            "ly" => |s| s.ell.y,
            "r" => |s| s.r,
            _ => return None,
        };
        Some(self.states.iter().map(pick).collect())
    }
}

/// Maximum relative drifts over a trajectory, each against the initial
/// sample and scaled by `max(1, |initial|)`.
#[derive(Clone, Copy, Debug)]
pub struct ConservationReport {
    pub gamma_drift: f64,
    pub strength_drift: f64,
    pub lp_drift: f64,
    pub normal_flow_max: f64,
    pub compatibility_max: f64,
    pub reflections: usize,
}

/// Fraction of particle-steps allowed to reflect before the run is flagged
/// as non-physical.
const REFLECTION_TOLERANCE: f64 = 1e-3;

struct Derivative {
    dh: Vec2<f64>,
    dtheta: f64,
    dell: Vec2<f64>,
    dr: f64,
    dpositions: Vec<Vec2<f64>>,
}

impl System {
    pub fn new(shape: BodyShape, panels: usize, body: BodyInertia) -> Result<System> {
        if !(body.mass > 0.0) || !(body.inertia > 0.0) {
            return Err(Error::Config(format!(
                "body mass and inertia must be positive, got {} and {}",
                body.mass, body.inertia
            )));
        }
        Ok(System {
            panels: PanelSystem::new(shape, panels)?,
            body,
            quadrature: QuadratureConfig::default(),
        })
    }

    /// The body discretization at the reference pose.
    pub fn panel_system(&self) -> &PanelSystem {
        &self.panels
    }

    /// Initial state; rejects particles inside the body.
    pub fn initial_state(&self, rigid: RigidState, field: VortexField) -> Result<SimState> {
        let shape = self.panels.shape();
        let motion = RigidMotion {
            h: rigid.h,
            theta: rigid.theta,
        };
        for &y in &field.positions {
            let xi = motion.body_unmap(y);
            let (s, foot, _) = shape.project(xi);
            if (xi - foot).dot(&shape.frame(s).normal) > 0.0 {
                return Err(Error::Config(format!(
                    "particle at ({}, {}) starts inside the body",
                    y.x, y.y
                )));
            }
        }
        let diagnostics = StepRecord {
            conserved: conserved_quantities(&field),
            force: Vec3::zeros(),
            gamma_measured: field.gamma,
            normal_flow_defect: 0.0,
            compatibility_residual: 0.0,
            correction_defect: 0.0,
            reflections: 0,
        };
        Ok(SimState {
            time: 0.0,
            rigid,
            field,
            diagnostics,
        })
    }

    /// Virtual inertia at a pose: rigid masses plus the added-mass tensor.
    pub fn virtual_inertia(&self, rigid: &RigidState) -> Mat3<f64> {
        let posed = self.panels.with_motion(RigidMotion {
            h: rigid.h,
            theta: rigid.theta,
        });
        let mut m = posed.added_mass().matrix;
        m[(0, 0)] += self.body.mass;
        m[(1, 1)] += self.body.mass;
        m[(2, 2)] += self.body.inertia;
        m
    }

    /// One coupled derivative evaluation at the given (possibly virtual)
    /// state. Also returns the diagnostics record of the evaluation.
    fn derivative(
        &self,
        rigid: RigidState,
        positions: &[Vec2<f64>],
        template: &VortexField,
    ) -> Result<(Derivative, StepRecord)> {
        let posed = self.panels.with_motion(RigidMotion {
            h: rigid.h,
            theta: rigid.theta,
        });
        let mut field = template.clone();
        field.positions = positions.to_vec();
        sanitize_positions(&posed, &mut field.positions);
        let corrected = CorrectedField::assemble(&posed, rigid, &field)?;
        let mu = solve_mu(&corrected, &self.quadrature)?;
        let force = body_force_rhs(&posed, &mu)?;

        let mut inertia = posed.added_mass().matrix;
        inertia[(0, 0)] += self.body.mass;
        inertia[(1, 1)] += self.body.mass;
        inertia[(2, 2)] += self.body.inertia;
        let chol = inertia.cholesky().ok_or_else(|| {
            Error::SolverFailure("virtual inertia is not positive definite".into())
        })?;
        let acc = chol.solve(&force);

        let dpositions = field
            .positions
            .iter()
            .map(|&y| Ok(corrected.velocity(y)?))
            .collect::<Result<Vec<_>>>()?;

        let record = StepRecord {
            conserved: conserved_quantities(&field),
            force,
            gamma_measured: corrected.measured_circulation(),
            normal_flow_defect: corrected.normal_flow_defect(),
            compatibility_residual: mu.compatibility_residual,
            correction_defect: mu.correction_defect,
            reflections: 0,
        };
        let derivative = Derivative {
            dh: rigid.ell,
            dtheta: rigid.r,
            dell: Vec2::new(acc.x, acc.y),
            dr: acc.z,
            dpositions,
        };
        Ok((derivative, record))
    }

    /// One RK4 step. Every stage re-solves the coupled system at the staged
    /// state; at the end, particles that penetrated the body are reflected
    /// and the step is flagged if more than a tolerance fraction did.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        assert!(dt > 0.0, "step needs dt > 0");
        let (k1, record) = self.derivative(state.rigid, &state.field.positions, &state.field)?;
        self.step_from(state, dt, k1, record)
    }

    fn step_from(
        &self,
        state: &SimState,
        dt: f64,
        k1: Derivative,
        record: StepRecord,
    ) -> Result<SimState> {
        let stage = |k: &Derivative, c: f64| -> (RigidState, Vec<Vec2<f64>>) {
            let rigid = RigidState {
                h: state.rigid.h + k.dh * (c * dt),
                theta: state.rigid.theta + k.dtheta * (c * dt),
                ell: state.rigid.ell + k.dell * (c * dt),
                r: state.rigid.r + k.dr * (c * dt),
            };
            let positions = state
                .field
                .positions
                .iter()
                .zip(&k.dpositions)
                .map(|(&y, &v)| y + v * (c * dt))
                .collect();
            (rigid, positions)
        };

        let (r2, p2) = stage(&k1, 0.5);
        let (k2, _) = self.derivative(r2, &p2, &state.field)?;
        let (r3, p3) = stage(&k2, 0.5);
        let (k3, _) = self.derivative(r3, &p3, &state.field)?;
        let (r4, p4) = stage(&k3, 1.0);
        let (k4, _) = self.derivative(r4, &p4, &state.field)?;

        let sixth = dt / 6.0;
        let mut next = state.clone();
        next.time = state.time + dt;
        next.rigid.h += (k1.dh + k2.dh * 2.0 + k3.dh * 2.0 + k4.dh) * sixth;
        next.rigid.theta += (k1.dtheta + k2.dtheta * 2.0 + k3.dtheta * 2.0 + k4.dtheta) * sixth;
        next.rigid.ell += (k1.dell + k2.dell * 2.0 + k3.dell * 2.0 + k4.dell) * sixth;
        next.rigid.r += (k1.dr + k2.dr * 2.0 + k3.dr * 2.0 + k4.dr) * sixth;
        for (i, y) in next.field.positions.iter_mut().enumerate() {
            *y += (k1.dpositions[i]
                + k2.dpositions[i] * 2.0
                + k3.dpositions[i] * 2.0
                + k4.dpositions[i])
                * sixth;
        }

        let posed = self.panels.with_motion(RigidMotion {
            h: next.rigid.h,
            theta: next.rigid.theta,
        });
        let reflections = sanitize_positions(&posed, &mut next.field.positions);
        let particles = next.field.positions.len().max(1);
        if reflections as f64 > REFLECTION_TOLERANCE * particles as f64 {
            return Err(Error::CollisionFlag(format!(
                "{reflections} of {particles} particles reflected off the body in one step"
            )));
        }

        next.diagnostics = StepRecord {
            reflections,
            ..record
        };
        Ok(next)
    }

    /// Fixed-step run: `steps` RK4 steps of size `dt`, one trajectory sample
    /// per state including the initial one. Each sample's force and solver
    /// residuals are evaluated at the sample's own time.
    pub fn run(&self, initial: SimState, dt: f64, steps: usize) -> Result<Trajectory> {
        let mut trajectory = Trajectory::default();
        let mut state = initial;
        let mut reflections_total = 0usize;
        let mut particle_steps = 0usize;
        for _ in 0..steps {
            let (k1, mut record) =
                self.derivative(state.rigid, &state.field.positions, &state.field)?;
            record.reflections = state.diagnostics.reflections;
            trajectory.push(state.time, state.rigid, record);
            state = self.step_from(&state, dt, k1, record)?;

            reflections_total += state.diagnostics.reflections;
            particle_steps += state.field.positions.len();
            if reflections_total as f64 > REFLECTION_TOLERANCE * particle_steps.max(1) as f64 {
                return Err(Error::CollisionFlag(format!(
                    "{reflections_total} reflections over {particle_steps} particle-steps"
                )));
            }
        }
        let (_, mut record) =
            self.derivative(state.rigid, &state.field.positions, &state.field)?;
        record.reflections = state.diagnostics.reflections;
        trajectory.push(state.time, state.rigid, record);
        Ok(trajectory)
    }
}

/// Mirror any penetrating position back across the wall; returns how many
/// needed it. Also used on stage states, whose virtual positions may poke
/// through even when the accepted step stays outside.
fn sanitize_positions(panels: &PanelSystem, positions: &mut [Vec2<f64>]) -> usize {
    let shape = panels.shape();
    let motion = panels.motion();
    let mut count = 0;
    for y in positions.iter_mut() {
        let xi = motion.body_unmap(*y);
        let (s, foot, dist) = shape.project(xi);
        let frame = shape.frame(s);
        if (xi - foot).dot(&frame.normal) > 0.0 {
            *y = motion.body_map(foot - frame.normal * dist);
            count += 1;
        }
    }
    count
}

/// Worst-case relative drifts over a recorded run.
pub fn conservation_report(trajectory: &Trajectory) -> ConservationReport {
    assert!(!trajectory.is_empty(), "conservation needs samples");
    let first = &trajectory.records[0];
    let scale = |x: f64| x.abs().max(1.0);
    let mut report = ConservationReport {
        gamma_drift: 0.0,
        strength_drift: 0.0,
        lp_drift: 0.0,
        normal_flow_max: 0.0,
        compatibility_max: 0.0,
        reflections: 0,
    };
    for rec in &trajectory.records {
        report.gamma_drift = report.gamma_drift.max(
            (rec.gamma_measured - first.gamma_measured).abs() / scale(first.gamma_measured),
        );
        report.strength_drift = report.strength_drift.max(
            (rec.conserved.total_vorticity - first.conserved.total_vorticity).abs()
                / scale(first.conserved.total_vorticity),
        );
        for (now, init) in [
            (rec.conserved.l1, first.conserved.l1),
            (rec.conserved.l2, first.conserved.l2),
            (rec.conserved.l4, first.conserved.l4),
            (rec.conserved.linf, first.conserved.linf),
        ] {
            report.lp_drift = report.lp_drift.max((now - init).abs() / scale(init));
        }
        report.normal_flow_max = report.normal_flow_max.max(rec.normal_flow_defect);
        report.compatibility_max = report.compatibility_max.max(rec.compatibility_residual);
        report.reflections += rec.reflections;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perp;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    fn disc_system(n: usize, mass: f64, inertia: f64) -> System {
        System::new(BodyShape::disc(1.0).unwrap(), n, BodyInertia { mass, inertia }).unwrap()
    }

    fn rotate(v: Vec2<f64>, beta: f64) -> Vec2<f64> {
        let (s, c) = beta.sin_cos();
        Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    #[test]
    fn rest_state_is_an_exact_fixed_point() {
        let system = disc_system(32, 1.0, 0.5);
        let rigid = RigidState::at_rest(Vec2::new(0.3, -0.2));
        let mut state = system
            .initial_state(rigid, VortexField::empty(0.0))
            .unwrap();
        for _ in 0..5 {
            state = system.step(&state, 0.05).unwrap();
        }
        // every solve sees identically zero data, so nothing may move at all
        assert_eq!(state.rigid.h, rigid.h);
        assert_eq!(state.rigid.theta, rigid.theta);
        assert_eq!(state.rigid.ell, rigid.ell);
        assert_eq!(state.rigid.r, rigid.r);
        assert_eq!(state.diagnostics.force, Vec3::zeros());
    }

    #[test]
    fn translating_disc_keeps_its_velocity() {
        let system = disc_system(64, 1.0, 1.0);
        let ell0 = Vec2::new(0.6, 0.0);
        let rigid = RigidState {
            h: Vec2::zeros(),
            theta: 0.0,
            ell: ell0,
            r: 0.0,
        };
        let state = system
            .initial_state(rigid, VortexField::empty(0.0))
            .unwrap();
        let trajectory = system.run(state, 0.01, 20).unwrap();
        let last = trajectory.states.last().unwrap();
        assert!(
            (last.ell - ell0).norm() < 1e-4 * ell0.norm(),
            "spurious acceleration: ell drifted to ({}, {})",
            last.ell.x,
            last.ell.y
        );
        assert!(last.r.abs() < 1e-5);
    }

    #[test]
    fn circulation_orbit_matches_the_reduced_dynamics() {
        // A circulating disc with no particles reduces to
        //   (m + pi a^2) ell' = gamma perp(ell),
        // so ell rotates at Omega = gamma / (m + pi a^2) and the center
        // traces a circle of radius |ell0| / Omega.
        let mass = 1.0;
        let gamma = TAU;
        let system = disc_system(64, mass, 0.4);
        let ell0 = Vec2::new(0.5, 0.0);
        let rigid = RigidState {
            h: Vec2::zeros(),
            theta: 0.0,
            ell: ell0,
            r: 0.0,
        };
        let state = system
            .initial_state(rigid, VortexField::empty(gamma))
            .unwrap();
        let omega = gamma / (mass + PI);
        let dt = 0.025;
        let steps = (0.25 * TAU / omega / dt).round() as usize;
        let trajectory = system.run(state, dt, steps).unwrap();

        let t_end = trajectory.times.last().unwrap();
        let last = trajectory.states.last().unwrap();
        let ell_pred = rotate(ell0, omega * t_end);
        let center = rigid.h + perp(ell0) / omega;
        let h_pred = center - perp(ell_pred) / omega;
        assert!(
            (last.ell - ell_pred).norm() < 0.02 * ell0.norm(),
            "momentum off: got ({}, {}), predicted ({}, {})",
            last.ell.x,
            last.ell.y,
            ell_pred.x,
            ell_pred.y
        );
        assert!(
            (last.h - h_pred).norm() < 0.02 * ell0.norm() / omega,
            "center off: got ({}, {}), predicted ({}, {})",
            last.h.x,
            last.h.y,
            h_pred.x,
            h_pred.y
        );
        // speed is conserved along the orbit
        assert_relative_eq!(last.ell.norm(), ell0.norm(), max_relative = 0.01);
    }

    #[test]
    fn step_converges_at_fourth_order() {
        // Self-convergence under dt halving; the quadrature noise perturbs
        // the vector field smoothly, so Richardson ratios see clean RK4.
        let system = disc_system(32, 1.0, 0.4);
        let rigid = RigidState {
            h: Vec2::zeros(),
            theta: 0.0,
            ell: Vec2::new(0.5, 0.0),
            r: 0.0,
        };
        let horizon = 0.4;
        let run = |steps: usize| {
            let state = system
                .initial_state(rigid, VortexField::empty(TAU))
                .unwrap();
            let trajectory = system.run(state, horizon / steps as f64, steps).unwrap();
            *trajectory.states.last().unwrap()
        };
        let coarse = run(4);
        let medium = run(8);
        let fine = run(16);
        let err = |a: &RigidState, b: &RigidState| {
            ((a.h - b.h).norm_squared()
                + (a.ell - b.ell).norm_squared()
                + (a.theta - b.theta).powi(2)
                + (a.r - b.r).powi(2))
            .sqrt()
        };
        let order = (err(&coarse, &medium) / err(&medium, &fine)).log2();
        assert!(order > 3.5, "observed order {order}");
    }

    #[test]
    fn transported_quantities_hold_bitwise() {
        let system = disc_system(32, 1.0, 0.5);
        let field = VortexField::new(
            vec![Vec2::new(2.4, 0.3), Vec2::new(-0.4, 2.6)],
            vec![0.5, -0.3],
            0.1,
            0.7,
        )
        .unwrap();
        let state = system
            .initial_state(RigidState::at_rest(Vec2::zeros()), field)
            .unwrap();
        let trajectory = system.run(state, 0.02, 8).unwrap();
        let report = conservation_report(&trajectory);
        assert_eq!(report.strength_drift, 0.0);
        assert_eq!(report.lp_drift, 0.0);
        assert!(report.gamma_drift < 1e-9, "gamma {}", report.gamma_drift);
        assert!(
            report.normal_flow_max < 1e-6,
            "normal flow {}",
            report.normal_flow_max
        );
        assert_eq!(report.reflections, 0);
    }

    #[test]
    fn ellipse_run_is_frame_equivariant() {
        let body = BodyInertia {
            mass: 1.3,
            inertia: 0.6,
        };
        let system = System::new(BodyShape::ellipse(1.0, 0.6).unwrap(), 32, body).unwrap();
        let beta = 0.9;
        let h0 = Vec2::new(0.2, -0.1);
        let ell0 = Vec2::new(0.4, 0.15);
        let y0 = h0 + Vec2::new(1.9 * 0.5f64.cos(), 1.9 * 0.5f64.sin());

        let run = |h: Vec2<f64>, theta: f64, ell: Vec2<f64>, y: Vec2<f64>| {
            let rigid = RigidState {
                h,
                theta,
                ell,
                r: 0.2,
            };
            let field = VortexField::new(vec![y], vec![0.3], 0.1, 1.2).unwrap();
            let state = system.initial_state(rigid, field).unwrap();
            let trajectory = system.run(state, 0.04, 4).unwrap();
            *trajectory.states.last().unwrap()
        };
        let base = run(h0, 0.1, ell0, y0);
        let turned = run(rotate(h0, beta), 0.1 + beta, rotate(ell0, beta), rotate(y0, beta));

        assert!((turned.h - rotate(base.h, beta)).norm() < 1e-6);
        assert!((turned.ell - rotate(base.ell, beta)).norm() < 1e-6);
        assert!((turned.theta - (base.theta + beta)).abs() < 1e-6);
        assert!((turned.r - base.r).abs() < 1e-6);
    }

    #[test]
    fn collision_flags_the_run() {
        let system = disc_system(32, 1.0, 0.5);
        let rigid = RigidState {
            h: Vec2::zeros(),
            theta: 0.0,
            ell: Vec2::new(6.0, 0.0),
            r: 0.0,
        };
        let field = VortexField::new(vec![Vec2::new(2.2, 0.0)], vec![0.1], 0.1, 0.0).unwrap();
        let state = system.initial_state(rigid, field).unwrap();
        match system.run(state, 0.5, 2) {
            Err(Error::CollisionFlag(_)) => {}
            other => panic!("expected a collision flag, got {other:?}"),
        }
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let go = || {
            let system = disc_system(32, 1.1, 0.5);
            let rigid = RigidState {
                h: Vec2::new(0.1, 0.0),
                theta: 0.2,
                ell: Vec2::new(0.3, -0.1),
                r: 0.15,
            };
            let field =
                VortexField::new(vec![Vec2::new(2.0, 1.0)], vec![0.4], 0.12, 0.9).unwrap();
            let state = system.initial_state(rigid, field).unwrap();
            system.run(state, 0.03, 4).unwrap()
        };
        let a = go();
        let b = go();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa.h.x.to_bits(), sb.h.x.to_bits());
            assert_eq!(sa.h.y.to_bits(), sb.h.y.to_bits());
            assert_eq!(sa.ell.x.to_bits(), sb.ell.x.to_bits());
            assert_eq!(sa.r.to_bits(), sb.r.to_bits());
        }
        assert_eq!(a.channel("hx").unwrap().len(), a.len());
        assert!(a.channel("bogus").is_none());
    }

    #[test]
    fn zero_step_run_keeps_the_initial_sample() {
        let system = disc_system(32, 1.0, 0.5);
        let state = system
            .initial_state(RigidState::at_rest(Vec2::zeros()), VortexField::empty(1.0))
            .unwrap();
        let trajectory = system.run(state, 0.1, 0).unwrap();
        assert_eq!(trajectory.len(), 1);
        assert_eq!(trajectory.times[0], 0.0);
    }

    #[test]
    fn bad_initial_data_is_rejected() {
        let system = disc_system(32, 1.0, 0.5);
        let inside = VortexField::new(vec![Vec2::new(0.3, 0.0)], vec![0.2], 0.1, 0.0).unwrap();
        assert!(matches!(
            system.initial_state(RigidState::at_rest(Vec2::zeros()), inside),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            System::new(
                BodyShape::disc(1.0).unwrap(),
                32,
                BodyInertia {
                    mass: -1.0,
                    inertia: 1.0
                }
            ),
            Err(Error::Config(_))
        ));
    }
}
