use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use impactforge::explorer::sea;
use impactforge::fesolver::{run_simulation_with, Integration, Loading, SolverConfig};
use impactforge::geometry::{
    build_design, mesh_design, DesignFile, DesignParams, RasterMesh, DEFAULT_EDGE,
};
use impactforge::io;
use impactforge::pipeline::{self, PipelineConfig};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "impactforge",
    version,
    about = "Tubule structure simulation, surrogate training and design sweeps"
)]
struct Cli {
    /// Pipeline config, TOML or JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true, env = "IMPACTFORGE_WORKERS")]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Work directory (pipeline stages) or output file (geom, simulate).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DesignArgs {
    #[arg(long)]
    sides: usize,
    #[arg(long)]
    nx: usize,
    #[arg(long)]
    ny: usize,
    /// Offset of the first vertex from +x, degrees.
    #[arg(long, default_value_t = 0.0)]
    angle_deg: f64,
    /// Tubule area as a fraction of its cell.
    #[arg(long)]
    vf: f64,
}

impl DesignArgs {
    fn params(&self) -> Result<DesignParams> {
        Ok(DesignParams::try_from(DesignFile {
            sides: self.sides,
            nx: self.nx,
            ny: self.ny,
            angle_deg: self.angle_deg.rem_euclid(360.0),
            vf: self.vf,
        })?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build and rasterize one design.
    Geom {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = DEFAULT_EDGE)]
        edge: f64,
        /// Also print the element mask.
        #[arg(long)]
        ascii: bool,
    },
    /// Run one FE compression simulation.
    Simulate {
        #[command(flatten)]
        design: Option<DesignArgs>,
        /// Simulate the dense specimen instead of a design.
        #[arg(long, conflicts_with_all = ["sides", "nx", "ny", "vf"])]
        solid: bool,
        /// Nominal strain rate, 1/s.
        #[arg(long, default_value_t = 9.1)]
        rate: f64,
        #[arg(long, default_value_t = 0.25)]
        final_strain: f64,
        #[arg(long, default_value_t = 101)]
        record_points: usize,
        #[arg(long, default_value_t = DEFAULT_EDGE)]
        edge: f64,
        /// full or reduced.
        #[arg(long, default_value = "full")]
        integration: Integration,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Run (or resume) the FE campaign.
    Campaign,
    /// Build the dataset and train the surrogate.
    Train,
    /// Sweep the design grid with the trained surrogate.
    Sweep,
    /// Error-versus-input analysis on the test partition.
    Analyze,
    /// Re-simulate the sweep extremes with the FE solver.
    Validate,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.workdir = o.clone();
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn geom(cli: &Cli, design: &DesignArgs, edge: f64, ascii: bool) -> Result<Value> {
    let p = design.params()?;
    if let Err(r) = build_design(&p)? {
        bail!("invalid design ({p}): {r}");
    }
    let mesh = mesh_design(&p, edge)?.expect("validity checked above");
    let file = DesignFile::from(p);
    if let Some(out) = &cli.out {
        io::write_json(out, &file)?;
    }
    if ascii {
        eprint!("{}", mesh.to_ascii());
    }
    Ok(json!({
        "command": "geom",
        "design": file,
        "solid_area_mm2": p.solid_area(),
        "mesh": mesh.summary(),
        "raster_porosity": mesh.porosity(),
    }))
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    cli: &Cli,
    design: Option<&DesignArgs>,
    solid: bool,
    loading: Loading,
    edge: f64,
    integration: Integration,
    max_steps: Option<usize>,
) -> Result<Value> {
    let cfg = load_config(cli)?;
    let (mesh, params) = match (design, solid) {
        (_, true) => (RasterMesh::solid(edge)?, None),
        (Some(d), false) => {
            let p = d.params()?;
            let mesh =
                mesh_design(&p, edge)?.map_err(|r| anyhow::anyhow!("invalid design ({p}): {r}"))?;
            (mesh, Some(p))
        }
        (None, false) => bail!("give a design (--sides --nx --ny --vf) or --solid"),
    };
    let solver = SolverConfig {
        integration,
        max_steps: max_steps.or(cfg.solver.max_steps),
        ..cfg.solver.clone()
    };
    let rec = run_simulation_with(&mesh, &cfg.material, &loading, &solver)?;
    if let Some(out) = &cli.out {
        io::write_json(out, &rec)?;
    }
    let sea_v = match &params {
        Some(p) => Some(sea(
            &rec.nominal_strain,
            &rec.nominal_stress,
            p,
            cfg.material.rho,
        )?),
        None => None,
    };
    let max_residual = rec.energy_residuals().into_iter().fold(0.0, f64::max);
    Ok(json!({
        "command": "simulate",
        "design": params.map(DesignFile::from),
        "rate_per_s": loading.strain_rate,
        "final_strain": rec.final_strain(),
        "final_stress_Pa": rec.nominal_stress.last(),
        "steps": rec.steps,
        "mass_scale": rec.mass_scale,
        "max_energy_residual": max_residual,
        "sea_J_per_kg": sea_v,
    }))
}

fn run(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Geom {
            design,
            edge,
            ascii,
        } => geom(cli, design, *edge, *ascii),
        Command::Simulate {
            design,
            solid,
            rate,
            final_strain,
            record_points,
            edge,
            integration,
            max_steps,
        } => {
            let loading = Loading {
                strain_rate: *rate,
                final_strain: *final_strain,
                record_points: *record_points,
            };
            simulate(
                cli,
                design.as_ref(),
                *solid,
                loading,
                *edge,
                *integration,
                *max_steps,
            )
        }
        Command::Campaign => {
            let cfg = load_config(cli)?;
            pipeline::init_workers(cfg.workers);
            let s = pipeline::run_campaign(&cfg)?;
            Ok(
                json!({"command": "campaign", "workdir": cfg.workdir, "summary": serde_json::to_value(&s)?}),
            )
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            pipeline::init_workers(cfg.workers);
            let s = pipeline::train_stage(&cfg, |e| {
                log::info!(
                    "epoch {:>4}  train {:.4e}  val {:.4e}  {:.0} s",
                    e.epoch,
                    e.train_mae,
                    e.val_mae,
                    e.wall_s
                )
            })?;
            Ok(
                json!({"command": "train", "checkpoint": cfg.checkpoint_path(), "summary": serde_json::to_value(&s)?}),
            )
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            pipeline::init_workers(cfg.workers);
            // extremes and correlations are in the summary file
            let (s, _) = pipeline::sweep_stage(&cfg)?;
            Ok(json!({
                "command": "sweep",
                "dir": cfg.sweep_dir(),
                "n_records": s.n_records,
                "n_valid": s.n_valid,
                "predictions_per_s": s.predictions_per_s,
                "config_hash": s.config_hash,
            }))
        }
        Command::Analyze => {
            let cfg = load_config(cli)?;
            pipeline::init_workers(cfg.workers);
            let s = pipeline::analyze(&cfg)?;
            Ok(
                json!({"command": "analyze", "dir": cfg.analysis_dir(), "summary": serde_json::to_value(&s)?}),
            )
        }
        Command::Validate => {
            let cfg = load_config(cli)?;
            pipeline::init_workers(cfg.workers);
            let s = pipeline::validate_stage(&cfg)?;
            Ok(
                json!({"command": "validate", "report": cfg.validation_dir().join("report.json"), "summary": serde_json::to_value(&s)?}),
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli).and_then(|v| serde_json::to_string(&v).context("encoding summary")) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
