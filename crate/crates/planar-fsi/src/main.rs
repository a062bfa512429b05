//! Command-line front end: scenario runs, added-mass queries, the symbolic
//! identity suite, Gevrey reports and SVG plots. All heavy lifting lives in
//! the library; this file only parses flags and moves bytes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use planar_fsi::calculus;
use planar_fsi::dynamics::BodyInertia;
use planar_fsi::geometry::BodyShape;
use planar_fsi::gevrey::trajectory_gevrey_report;
use planar_fsi::panels::PanelSystem;
use planar_fsi::scenario::{
    self, dump_bem, gevrey_svg, parse_scenario, parse_trajectory_csv, trajectory_svg,
};
use planar_fsi::Mat3;

#[derive(Parser)]
#[command(name = "planar-fsi", version, about = "Planar rigid body in ideal flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write trajectory CSV plus metadata JSON.
    Run {
        /// Scenario TOML file.
        config: Option<PathBuf>,
        /// Scenario TOML file (alternative to the positional form).
        #[arg(long = "config", conflicts_with = "config")]
        config_flag: Option<PathBuf>,
        /// Output directory (overrides the scenario's own setting).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the influence matrix and Kirchhoff densities here.
        #[arg(long, value_name = "DIR")]
        dump_bem: Option<PathBuf>,
        /// Override the scenario time step.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the scenario panel count.
        #[arg(long)]
        panels: Option<usize>,
    },
    /// Print rigid, added and total mass matrices for a shape.
    AddedMass {
        #[arg(long, value_enum, default_value_t = ShapeArg::Disc)]
        shape: ShapeArg,
        /// Disc radius.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Ellipse semi-axis along x.
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        /// Ellipse semi-axis along y.
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 256)]
        panels: usize,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = 1.0)]
        inertia: f64,
    },
    /// Run the exact identity and coefficient-bound suite.
    VerifyIdentities {
        /// Highest derivative order for the exact identities.
        #[arg(long, default_value_t = 4)]
        max_k: u32,
        /// Random polynomial instances per identity family.
        #[arg(long, default_value_t = 20)]
        instances: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the coefficient table as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit per-channel derivative growth of a trajectory CSV.
    GevreyReport {
        /// Trajectory CSV produced by `run`.
        csv: PathBuf,
        /// Highest derivative order to estimate.
        #[arg(long, default_value_t = 12)]
        max_k: usize,
        /// Write the report JSON here (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a growth plot here.
        #[arg(long, value_name = "SVG")]
        svg: Option<PathBuf>,
    },
    /// Plot the body-center path of a trajectory CSV as SVG.
    Plot {
        csv: PathBuf,
        /// Output SVG path (default: CSV path with .svg extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Disc,
    Ellipse,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            config_flag,
            out,
            dump_bem: dump,
            dt,
            panels,
        } => run(config.or(config_flag), out, dump, dt, panels),
        Command::AddedMass {
            shape,
            radius,
            a,
            b,
            panels,
            mass,
            inertia,
        } => added_mass(shape, radius, a, b, panels, mass, inertia),
        Command::VerifyIdentities {
            max_k,
            instances,
            seed,
            out,
        } => verify_identities(max_k, instances, seed, out),
        Command::GevreyReport {
            csv,
            max_k,
            out,
            svg,
        } => gevrey_report(&csv, max_k, out, svg),
        Command::Plot { csv, out } => plot(&csv, out),
    }
}

fn run(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    dump: Option<PathBuf>,
    dt: Option<f64>,
    panels: Option<usize>,
) -> Result<()> {
    let path = config.context("no scenario file given (positional or --config)")?;
    let mut scenario =
        parse_scenario(&path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(dt) = dt {
        scenario.run.dt = dt;
    }
    if let Some(panels) = panels {
        scenario.run.panels = panels;
    }
    scenario.validate()?;

    let artifacts = scenario::run_scenario(&scenario)?;
    let out_dir = out
        .or_else(|| scenario.run.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    artifacts.write(&out_dir)?;
    if let Some(dir) = dump {
        let prepared = scenario::prepare(&scenario)?;
        dump_bem(&dir, prepared.system.panel_system())?;
        println!("bem dump     {}", dir.display());
    }

    let c = &artifacts.conservation;
    println!("samples      {}", artifacts.trajectory.len());
    println!("final time   {}", artifacts.trajectory.times.last().unwrap());
    println!("compat resid {:.3e}", artifacts.compatibility);
    println!("gamma drift  {:.3e}", c.gamma_drift);
    println!("sumG drift   {:.3e}", c.strength_drift);
    println!("Lp drift     {:.3e}", c.lp_drift);
    println!("normal flow  {:.3e}", c.normal_flow_max);
    println!("reflections  {}", c.reflections);
    println!("wrote        {}", out_dir.join("trajectory.csv").display());
    println!("wrote        {}", out_dir.join("metadata.json").display());
    Ok(())
}

fn print_matrix(m: &Mat3<f64>) {
    for i in 0..3 {
        println!(
            "  {:>14.8} {:>14.8} {:>14.8}",
            m[(i, 0)],
            m[(i, 1)],
            m[(i, 2)]
        );
    }
}

fn added_mass(
    shape: ShapeArg,
    radius: f64,
    a: f64,
    b: f64,
    panels: usize,
    mass: f64,
    inertia: f64,
) -> Result<()> {
    let shape = match shape {
        ShapeArg::Disc => BodyShape::disc(radius)?,
        ShapeArg::Ellipse => BodyShape::ellipse(a, b)?,
    };
    println!("{} with {panels} panels", shape.label());
    let system = PanelSystem::new(shape, panels)?;
    let m2 = system.added_mass();
    let body = BodyInertia { mass, inertia };
    let m1 = Mat3::from_diagonal(&planar_fsi::Vec3::new(mass, mass, body.inertia));
    println!("M1 (rigid)");
    print_matrix(&m1);
    println!("M2 (added)");
    print_matrix(&m2.matrix);
    println!("M = M1 + M2");
    print_matrix(&(m1 + m2.matrix));
    println!("symmetry defect {:.3e}", m2.symmetry_defect());
    let min_eig = m2.min_eigenvalue();
    println!("min eigenvalue  {:.6}", min_eig);
    if m2.symmetry_defect() > 1e-8 || min_eig < -1e-10 {
        bail!("added-mass tensor failed symmetry or positivity checks");
    }
    Ok(())
}

fn verify_identities(max_k: u32, instances: u32, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let report = calculus::run_identity_battery(max_k, instances, seed)?;
    println!("interior identities  {}", report.interior);
    println!("boundary identities  {}", report.boundary);
    println!("chain identities     {}", report.chains);
    println!("coefficient bounds   {}", report.bounded_terms);

    // composition-weight budget, exact
    let mut checked = 0;
    for s in 1..=5u32 {
        for m in s..=30 {
            let lhs = calculus::upsilon_sum(s, m);
            let rhs = calculus::upsilon_budget(s, m);
            if lhs > rhs {
                bail!("composition weight budget violated at s={s}, m={m}");
            }
            checked += 1;
        }
    }
    println!("weight budgets       {checked}");

    if let Some(path) = out {
        let csv = calculus::coefficient_csv(max_k.min(6));
        std::fs::write(&path, csv)?;
        println!("wrote                {}", path.display());
    }
    println!("ok");
    Ok(())
}

fn gevrey_report(
    csv: &Path,
    max_k: usize,
    out: Option<PathBuf>,
    svg: Option<PathBuf>,
) -> Result<()> {
    let text = std::fs::read_to_string(csv)?;
    let trajectory = parse_trajectory_csv(&text)?;
    let report = trajectory_gevrey_report(&trajectory, max_k)?;
    let json = serde_json::to_string_pretty(&report)?;
    match out {
        Some(path) => {
            std::fs::write(&path, &json)?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    if let Some(path) = svg {
        std::fs::write(&path, gevrey_svg(&report))?;
        println!("wrote {}", path.display());
    }
    if report.channels.iter().all(|c| c.fit.is_none()) {
        bail!("no channel admitted a growth fit");
    }
    Ok(())
}

fn plot(csv: &Path, out: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(csv)?;
    let trajectory = parse_trajectory_csv(&text)?;
    let out = out.unwrap_or_else(|| csv.with_extension("svg"));
    std::fs::write(&out, trajectory_svg(&trajectory))?;
    println!("wrote {}", out.display());
    Ok(())
}
