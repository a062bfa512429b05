//! Scenario configuration, run orchestration and file outputs.
//!
//! A scenario is a TOML file describing body, initial state, vorticity and
//! run controls; everything is in the nondimensional units of the rest of
//! the crate (fluid density 1). The body starts at angle zero by
//! convention, so the config has no angle field at all. Outputs are
//! deterministic byte-for-byte: a trajectory CSV, a metadata JSON sidecar,
//! optional BEM audit dumps and SVG plots.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ConservationReport, StepRecord, System, Trajectory};
use crate::geometry::{BodyShape, RigidMotion, RigidState};
use crate::gevrey::TrajectoryGevreyReport;
use crate::panels::PanelSystem;
use crate::vortex::{conserved_quantities, CorrectedField, VortexField};
use crate::{Error, Result, Vec2};

/// Body boundary curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeSpec {
    Disc {
        radius: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    /// Truncated Fourier curve; `cosines[m]` and `sines[m]` are the vector
    /// coefficients of mode `m + 1`.
    Fourier {
        #[serde(default)]
        center: [f64; 2],
        cosines: Vec<[f64; 2]>,
        sines: Vec<[f64; 2]>,
    },
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec::Disc { radius: 1.0 }
    }
}

impl ShapeSpec {
    pub fn build(&self) -> Result<BodyShape> {
        match self {
            ShapeSpec::Disc { radius } => BodyShape::disc(*radius),
            ShapeSpec::Ellipse { a, b } => BodyShape::ellipse(*a, *b),
            ShapeSpec::Fourier {
                center,
                cosines,
                sines,
            } => {
                if cosines.len() != sines.len() {
                    return Err(Error::Config(format!(
                        "shape: {} cosine modes but {} sine modes",
                        cosines.len(),
                        sines.len()
                    )));
                }
                let modes = cosines
                    .iter()
                    .zip(sines)
                    .map(|(c, s)| (Vec2::new(c[0], c[1]), Vec2::new(s[0], s[1])))
                    .collect();
                BodyShape::fourier(Vec2::new(center[0], center[1]), modes)
            }
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    #[serde(default)]
    pub shape: ShapeSpec,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub inertia: f64,
}

impl Default for BodySpec {
    fn default() -> Self {
        BodySpec {
            shape: ShapeSpec::default(),
            mass: 1.0,
            inertia: 1.0,
        }
    }
}

/// Initial rigid state; the angle is pinned to zero by convention.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub h: [f64; 2],
    #[serde(default)]
    pub ell: [f64; 2],
    #[serde(default)]
    pub r: f64,
}

impl InitialSpec {
    pub fn rigid_state(&self) -> RigidState {
        RigidState {
            h: Vec2::new(self.h[0], self.h[1]),
            theta: 0.0,
            ell: Vec2::new(self.ell[0], self.ell[1]),
            r: self.r,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VorticityPreset {
    #[default]
    None,
    VortexPair,
    Patch,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VorticitySpec {
    #[serde(default)]
    pub preset: VorticityPreset,
    /// Explicit particles as `[x, y, strength]` rows.
    #[serde(default)]
    pub particles: Vec<[f64; 3]>,
    /// Blob core radius; defaults per preset or from particle spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_radius: Option<f64>,
    /// Bound circulation around the body.
    #[serde(default)]
    pub gamma: f64,
}

impl VorticitySpec {
    pub fn build(&self) -> Result<VortexField> {
        let (positions, strengths, preset_core) = match self.preset {
            VorticityPreset::None => {
                let positions = self
                    .particles
                    .iter()
                    .map(|p| Vec2::new(p[0], p[1]))
                    .collect::<Vec<_>>();
                let strengths = self.particles.iter().map(|p| p[2]).collect();
                let core = crate::vortex::default_core_radius(&positions);
                (positions, strengths, core)
            }
            VorticityPreset::VortexPair => {
                if !self.particles.is_empty() {
                    return Err(Error::Config(
                        "vorticity: give either a preset or explicit particles, not both".into(),
                    ));
                }
                (
                    vec![Vec2::new(3.0, 0.75), Vec2::new(3.0, -0.75)],
                    vec![-1.0, 1.0],
                    0.1,
                )
            }
            VorticityPreset::Patch => {
                if !self.particles.is_empty() {
                    return Err(Error::Config(
                        "vorticity: give either a preset or explicit particles, not both".into(),
                    ));
                }
                let (positions, strengths) = patch_particles(Vec2::new(2.5, 0.0), 0.5, 1.0);
                (positions, strengths, 0.17)
            }
        };
        if positions.is_empty() && self.core_radius.is_none() {
            // An empty field still needs some positive core radius.
            return VortexField::new(positions, strengths, 1.0, self.gamma);
        }
        let core = self.core_radius.unwrap_or(preset_core);
        VortexField::new(positions, strengths, core, self.gamma)
    }
}

/// Concentric-ring discretization of a uniform circular patch with the given
/// total strength.
fn patch_particles(center: Vec2<f64>, radius: f64, total: f64) -> (Vec<Vec2<f64>>, Vec<f64>) {
    let counts = [1usize, 6, 12, 18];
    let n: usize = counts.iter().sum();
    let mut positions = Vec::with_capacity(n);
    for (ring, &count) in counts.iter().enumerate() {
        let rho = radius * ring as f64 / (counts.len() - 1) as f64;
        for i in 0..count {
            let phi = std::f64::consts::TAU * i as f64 / count as f64;
            positions.push(center + rho * Vec2::new(phi.cos(), phi.sin()));
        }
    }
    (positions, vec![total / n as f64; n])
}

fn default_dt() -> f64 {
    0.01
}

fn default_duration() -> f64 {
    1.0
}

fn default_panels() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the CLI `--out` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            dt: default_dt(),
            duration: default_duration(),
            panels: default_panels(),
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub body: BodySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub vorticity: VorticitySpec,
    #[serde(default)]
    pub run: RunSpec,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.body.mass > 0.0) || !(self.body.inertia > 0.0) {
            return Err(Error::Config(format!(
                "body: mass and inertia must be positive, got {} and {}",
                self.body.mass, self.body.inertia
            )));
        }
        if !(self.run.dt > 0.0) {
            return Err(Error::Config(format!(
                "run: dt must be positive, got {}",
                self.run.dt
            )));
        }
        if !(self.run.duration >= 0.0) {
            return Err(Error::Config(format!(
                "run: duration must be nonnegative, got {}",
                self.run.duration
            )));
        }
        if self.run.panels < 8 {
            return Err(Error::Config(format!(
                "run: need at least 8 panels, got {}",
                self.run.panels
            )));
        }
        if let Some(eps) = self.vorticity.core_radius {
            if !(eps > 0.0) {
                return Err(Error::Config(format!(
                    "vorticity: core_radius must be positive, got {eps}"
                )));
            }
        }
        if !self.vorticity.gamma.is_finite() {
            return Err(Error::Config("vorticity: gamma must be finite".into()));
        }
        self.body.shape.build()?;
        self.vorticity.build()?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.run.duration / self.run.dt).round() as usize
    }
}

/// Read and validate a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text)
}

/// A scenario made concrete: solver, initial state and the initial-data
/// compatibility residual `max |(u0 - u_S) . n|` at the panel nodes.
pub struct Prepared {
    pub system: System,
    pub initial: crate::dynamics::SimState,
    pub compatibility: f64,
}

pub fn prepare(scenario: &Scenario) -> Result<Prepared> {
    let shape = scenario.body.shape.build()?;
    let system = System::new(
        shape,
        scenario.run.panels,
        crate::dynamics::BodyInertia {
            mass: scenario.body.mass,
            inertia: scenario.body.inertia,
        },
    )?;
    let rigid = scenario.initial.rigid_state();
    let field = scenario.vorticity.build()?;
    let initial = system.initial_state(rigid, field)?;
    let posed = system.panel_system().with_motion(RigidMotion {
        h: rigid.h,
        theta: rigid.theta,
    });
    let corrected = CorrectedField::assemble(&posed, rigid, &initial.field)?;
    let compatibility = corrected.normal_flow_defect();
    Ok(Prepared {
        system,
        initial,
        compatibility,
    })
}

/// Everything a `run` produces, ready for serialization.
pub struct RunArtifacts {
    pub scenario: Scenario,
    pub trajectory: Trajectory,
    pub conservation: ConservationReport,
    pub compatibility: f64,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunArtifacts> {
    let prepared = prepare(scenario)?;
    let trajectory = prepared
        .system
        .run(prepared.initial, scenario.run.dt, scenario.steps())?;
    let conservation = crate::dynamics::conservation_report(&trajectory);
    Ok(RunArtifacts {
        scenario: scenario.clone(),
        trajectory,
        conservation,
        compatibility: prepared.compatibility,
    })
}

pub const TRAJECTORY_HEADER: &str = "t,hx,hy,theta,lx,ly,r,Fx,Fy,T,gamma_drift,sumG_drift";

/// Render a trajectory as CSV. Drift columns are measured against the
/// prescribed circulation and the initial total strength; both are scaled
/// like the conservation report (relative above 1, absolute below).
pub fn trajectory_csv(trajectory: &Trajectory, gamma_ref: f64) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    let gamma_scale = gamma_ref.abs().max(1.0);
    let sum0 = trajectory
        .records
        .first()
        .map_or(0.0, |r| r.conserved.total_vorticity);
    for i in 0..trajectory.len() {
        let s = &trajectory.states[i];
        let r = &trajectory.records[i];
        let gamma_drift = (r.gamma_measured - gamma_ref) / gamma_scale;
        let sum_drift = r.conserved.total_vorticity - sum0;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            trajectory.times[i],
            s.h.x,
            s.h.y,
            s.theta,
            s.ell.x,
            s.ell.y,
            s.r,
            r.force.x,
            r.force.y,
            r.force.z,
            gamma_drift,
            sum_drift,
        ));
    }
    out
}

/// Parse a trajectory CSV back into a trajectory. Force columns land in the
/// records; drift columns and vortex diagnostics are not reconstructed.
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty trajectory CSV".into()))?;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(Error::Config(format!(
            "unexpected trajectory CSV header: {header}"
        )));
    }
    let mut trajectory = Trajectory::default();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 2)))?;
        if fields.len() != 12 {
            return Err(Error::Config(format!(
                "line {}: expected 12 columns, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        trajectory.times.push(fields[0]);
        trajectory.states.push(RigidState {
            h: Vec2::new(fields[1], fields[2]),
            theta: fields[3],
            ell: Vec2::new(fields[4], fields[5]),
            r: fields[6],
        });
        trajectory.records.push(StepRecord {
            conserved: conserved_quantities(&VortexField::empty(0.0)),
            force: crate::Vec3::new(fields[7], fields[8], fields[9]),
            gamma_measured: 0.0,
            normal_flow_defect: 0.0,
            compatibility_residual: 0.0,
            correction_defect: 0.0,
            reflections: 0,
        });
    }
    if trajectory.is_empty() {
        return Err(Error::Config("trajectory CSV has no data rows".into()));
    }
    Ok(trajectory)
}

impl RunArtifacts {
    pub fn trajectory_csv(&self) -> String {
        trajectory_csv(&self.trajectory, self.scenario.vorticity.gamma)
    }

    pub fn metadata_json(&self) -> String {
        let c = &self.conservation;
        let value = serde_json::json!({
            "scenario": self.scenario,
            "samples": self.trajectory.len(),
            "final_time": self.trajectory.times.last().copied().unwrap_or(0.0),
            "initial_compatibility": self.compatibility,
            "conservation": {
                "gamma_drift": c.gamma_drift,
                "strength_drift": c.strength_drift,
                "lp_drift": c.lp_drift,
                "normal_flow_max": c.normal_flow_max,
                "compatibility_max": c.compatibility_max,
                "reflections": c.reflections,
            },
        });
        serde_json::to_string_pretty(&value).expect("metadata serializes")
    }

    /// Write `trajectory.csv` and `metadata.json` into a directory.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trajectory.csv"), self.trajectory_csv())?;
        std::fs::write(dir.join("metadata.json"), self.metadata_json())?;
        Ok(())
    }
}

/// Dump the bordered influence matrix and the Kirchhoff densities as CSV.
pub fn dump_bem(dir: impl AsRef<Path>, panels: &PanelSystem) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let a = panels.base().influence_matrix();
    let mut text = String::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if j > 0 {
                text.push(',');
            }
            text.push_str(&format!("{}", a[(i, j)]));
        }
        text.push('\n');
    }
    std::fs::write(dir.join("influence.csv"), text)?;

    let densities = panels.base().kirchhoff_densities();
    let params = panels.params();
    let nodes = panels.base().nodes.clone();
    let mut text = String::from("s,x,y,sigma1,sigma2,sigma3\n");
    for i in 0..panels.n() {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            params[i], nodes[i].x, nodes[i].y, densities[0][i], densities[1][i], densities[2][i],
        ));
    }
    std::fs::write(dir.join("kirchhoff-densities.csv"), text)?;
    Ok(())
}

fn svg_open(width: u32, height: u32) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n<rect width=\"{width}\" height=\"{height}\" \
         fill=\"white\"/>\n"
    )
}

struct PlotFrame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    width: f64,
    height: f64,
    margin: f64,
}

impl PlotFrame {
    fn new(xs: &[f64], ys: &[f64], width: f64, height: f64) -> PlotFrame {
        let (mut x0, mut x1) = span(xs);
        let (mut y0, mut y1) = span(ys);
        pad(&mut x0, &mut x1);
        pad(&mut y0, &mut y1);
        PlotFrame {
            x0,
            x1,
            y0,
            y1,
            width,
            height,
            margin: 40.0,
        }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (self.width - 2.0 * self.margin) / (self.x1 - self.x0);
        let sy = (self.height - 2.0 * self.margin) / (self.y1 - self.y0);
        (
            self.margin + (x - self.x0) * sx,
            self.height - self.margin - (y - self.y0) * sy,
        )
    }

    fn polyline(&self, xs: &[f64], ys: &[f64], color: &str) -> String {
        let mut points = String::new();
        for (x, y) in xs.iter().zip(ys) {
            let (px, py) = self.map(*x, *y);
            points.push_str(&format!("{px:.2},{py:.2} "));
        }
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.trim_end()
        )
    }

    fn frame_box(&self) -> String {
        format!(
            "<rect x=\"{m}\" y=\"{m}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"none\" \
             stroke=\"#444444\"/>\n",
            m = self.margin,
            w = self.width - 2.0 * self.margin,
            h = self.height - 2.0 * self.margin
        )
    }
}

fn span(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn pad(lo: &mut f64, hi: &mut f64) {
    let d = (*hi - *lo).max(1e-9);
    *lo -= 0.05 * d;
    *hi += 0.05 * d;
}

/// Plot the body-center path `(hx, hy)` with a start marker.
pub fn trajectory_svg(trajectory: &Trajectory) -> String {
    let hx: Vec<f64> = trajectory.states.iter().map(|s| s.h.x).collect();
    let hy: Vec<f64> = trajectory.states.iter().map(|s| s.h.y).collect();
    let frame = PlotFrame::new(&hx, &hy, 600.0, 600.0);
    let mut svg = svg_open(600, 600);
    svg.push_str(&frame.frame_box());
    svg.push_str(&frame.polyline(&hx, &hy, "#1f6fb2"));
    if let (Some(&x), Some(&y)) = (hx.first(), hy.first()) {
        let (px, py) = frame.map(x, y);
        svg.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"#b23a1f\"/>\n"
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.0}\" y=\"20\" font-family=\"monospace\" font-size=\"12\">body center \
         path, t in [{:.3}, {:.3}]</text>\n",
        40.0,
        trajectory.times.first().copied().unwrap_or(0.0),
        trajectory.times.last().copied().unwrap_or(0.0),
    ));
    svg.push_str("</svg>\n");
    svg
}

const CHANNEL_COLORS: [&str; 3] = ["#1f6fb2", "#b23a1f", "#3a8f3a"];

/// Log-plot of `log(||f^(k)|| / k!)` against `k` per channel, with the
/// fitted growth curve.
pub fn gevrey_svg(report: &TrajectoryGevreyReport) -> String {
    let mut ks: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut series = Vec::new();
    for (idx, channel) in report.channels.iter().enumerate() {
        if channel.magnitudes.is_empty() {
            continue;
        }
        let mut log_fact = 0.0;
        let pts: Vec<(f64, f64)> = channel
            .magnitudes
            .iter()
            .enumerate()
            .map(|(k, m)| {
                if k > 0 {
                    log_fact += (k as f64).ln();
                }
                (k as f64, m.ln() - log_fact)
            })
            .collect();
        for &(k, y) in &pts {
            ks.push(k);
            ys.push(y);
        }
        series.push((idx, channel, pts));
    }
    if ks.is_empty() {
        let mut svg = svg_open(600, 400);
        svg.push_str(
            "<text x=\"40\" y=\"40\" font-family=\"monospace\" font-size=\"12\">all channels \
             degenerate</text>\n</svg>\n",
        );
        return svg;
    }
    let frame = PlotFrame::new(&ks, &ys, 600.0, 400.0);
    let mut svg = svg_open(600, 400);
    svg.push_str(&frame.frame_box());
    for (slot, (idx, channel, pts)) in series.iter().enumerate() {
        let color = CHANNEL_COLORS[idx % CHANNEL_COLORS.len()];
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let data: Vec<f64> = pts.iter().map(|p| p.1).collect();
        for (x, y) in xs.iter().zip(&data) {
            let (px, py) = frame.map(*x, *y);
            svg.push_str(&format!(
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" fill=\"{color}\"/>\n"
            ));
        }
        let label = if let Some(fit) = &channel.fit {
            // fitted curve log C + k log L + (M - 1) log k!
            let mut log_fact = 0.0;
            let fitted: Vec<f64> = xs
                .iter()
                .enumerate()
                .map(|(k, _)| {
                    if k > 0 {
                        log_fact += (k as f64).ln();
                    }
                    fit.scale.ln() + k as f64 * fit.rate.ln() + (fit.order - 1.0) * log_fact
                })
                .collect();
            svg.push_str(&frame.polyline(&xs, &fitted, color));
            format!(
                "{}: M = {:.2}, L = {:.3}, orders <= {}",
                channel.channel, fit.order, fit.rate, fit.usable_orders
            )
        } else {
            format!("{}: degenerate", channel.channel)
        };
        svg.push_str(&format!(
            "<text x=\"45\" y=\"{:.0}\" font-family=\"monospace\" font-size=\"12\" \
             fill=\"{color}\">{label}</text>\n",
            20.0 + 15.0 * slot as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORBIT: &str = r#"
        [body]
        mass = 1.0
        inertia = 0.5

        [body.shape]
        kind = "disc"
        radius = 1.0

        [initial]
        ell = [0.5, 0.0]

        [vorticity]
        gamma = 6.283185307179586

        [run]
        dt = 0.01
        duration = 4.15
        panels = 64
        seed = 7
    "#;

    #[test]
    fn minimal_config_fills_defaults_and_is_compatible() {
        let scenario = Scenario::from_toml("[body.shape]\nkind = \"disc\"\nradius = 1.0\n").unwrap();
        assert_eq!(scenario, Scenario::default());
        let prepared = prepare(&scenario).unwrap();
        // at rest with no vorticity the initial data is exactly compatible
        assert!(prepared.compatibility < 1e-12);
        assert_eq!(prepared.initial.rigid.theta, 0.0);
    }

    #[test]
    fn invalid_configs_are_rejected_with_field_diagnostics() {
        let bad = Scenario::from_toml("[run]\ndt = -0.5\n");
        match bad {
            Err(Error::Config(msg)) => assert!(msg.contains("dt"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        let unknown = Scenario::from_toml("[run]\ndtt = 0.5\n");
        match unknown {
            Err(Error::Config(msg)) => assert!(msg.contains("dtt"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        let both = Scenario::from_toml(
            "[vorticity]\npreset = \"patch\"\nparticles = [[3.0, 0.0, 1.0]]\n",
        );
        assert!(both.is_err());
    }

    #[test]
    fn scenario_round_trips_through_toml() {
        let scenario = Scenario::from_toml(ORBIT).unwrap();
        let text = scenario.to_toml();
        let again = Scenario::from_toml(&text).unwrap();
        assert_eq!(scenario, again);
        assert_eq!(scenario.steps(), 415);
        assert_eq!(scenario.vorticity.gamma, std::f64::consts::TAU);
    }

    #[test]
    fn presets_build_fields_outside_the_body() {
        for preset in [VorticityPreset::VortexPair, VorticityPreset::Patch] {
            let spec = VorticitySpec {
                preset,
                ..VorticitySpec::default()
            };
            let field = spec.build().unwrap();
            assert!(!field.is_empty());
            assert!(field.core_radius > 0.0);
            for p in &field.positions {
                assert!(p.norm() > 1.5, "preset particle at {p:?} too close");
            }
        }
        let pair = VorticitySpec {
            preset: VorticityPreset::VortexPair,
            ..VorticitySpec::default()
        }
        .build()
        .unwrap();
        assert_eq!(pair.total_strength(), 0.0);
        let patch = VorticitySpec {
            preset: VorticityPreset::Patch,
            ..VorticitySpec::default()
        }
        .build()
        .unwrap();
        assert!((patch.total_strength() - 1.0).abs() < 1e-12);
        assert_eq!(patch.len(), 37);
    }

    #[test]
    fn trajectory_csv_round_trips_states_and_forces() {
        let scenario = Scenario {
            run: RunSpec {
                duration: 0.05,
                ..RunSpec::default()
            },
            initial: InitialSpec {
                ell: [0.3, 0.1],
                ..InitialSpec::default()
            },
            ..Scenario::default()
        };
        let artifacts = run_scenario(&scenario).unwrap();
        let csv = artifacts.trajectory_csv();
        assert!(csv.starts_with(TRAJECTORY_HEADER));
        let back = parse_trajectory_csv(&csv).unwrap();
        assert_eq!(back.len(), artifacts.trajectory.len());
        for i in 0..back.len() {
            assert_eq!(back.times[i], artifacts.trajectory.times[i]);
            assert_eq!(back.states[i].h, artifacts.trajectory.states[i].h);
            assert_eq!(back.states[i].ell, artifacts.trajectory.states[i].ell);
            assert_eq!(
                back.records[i].force,
                artifacts.trajectory.records[i].force
            );
        }
        // the sum drift column is zero by construction
        for line in csv.lines().skip(1) {
            assert!(line.ends_with(",0"), "{line}");
        }
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let scenario = Scenario::from_toml(ORBIT).unwrap();
        let short = Scenario {
            run: RunSpec {
                duration: 0.1,
                ..scenario.run.clone()
            },
            ..scenario
        };
        let a = run_scenario(&short).unwrap();
        let b = run_scenario(&short).unwrap();
        assert_eq!(a.trajectory_csv(), b.trajectory_csv());
        assert_eq!(a.metadata_json(), b.metadata_json());
    }

    #[test]
    fn bem_dump_and_svg_writers_produce_wellformed_output() {
        let scenario = Scenario::default();
        let prepared = prepare(&scenario).unwrap();
        let dir = tempfile::tempdir().unwrap();
        dump_bem(dir.path(), prepared.system.panel_system()).unwrap();
        let influence = std::fs::read_to_string(dir.path().join("influence.csv")).unwrap();
        // bordered system: n + 1 rows
        assert_eq!(influence.lines().count(), 65);
        let densities =
            std::fs::read_to_string(dir.path().join("kirchhoff-densities.csv")).unwrap();
        assert_eq!(densities.lines().count(), 65);
        assert!(densities.starts_with("s,x,y,"));

        let artifacts = run_scenario(&Scenario {
            run: RunSpec {
                duration: 0.05,
                ..RunSpec::default()
            },
            initial: InitialSpec {
                ell: [0.2, 0.0],
                ..InitialSpec::default()
            },
            ..Scenario::default()
        })
        .unwrap();
        let svg = trajectory_svg(&artifacts.trajectory);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("polyline"));
    }
}
