//! `tandem bench`: motion-field reproduction from perturbed starts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use tandem::reproduction::{integrate_field, is_planar, perturbed_starts, streamline_grid, FieldRun, FieldSettings};
use tandem::{mean_trajectory, DemoSet, MotionParams, TransformedDemo};

use crate::{write_err, CliError, CliResult};

#[derive(Args)]
pub struct BenchArgs {
    /// Directory holding one sub-directory of demonstrations per shape.
    #[arg(long, env = "TANDEM_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "leaf")]
    shape: String,
    /// Number of perturbed start points.
    #[arg(long, default_value_t = 20)]
    starts: usize,
    /// Largest start offset as a fraction of the bounding-box diagonal.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Integration step, s.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Streamline grid resolution per axis; 0 skips the grid.
    #[arg(long, default_value_t = 30)]
    grid: usize,
    /// Output directory for metrics.csv, grid.csv and trajectory.csv.
    #[arg(short, long)]
    output: PathBuf,
}

pub fn bench(args: BenchArgs) -> CliResult {
    if !(args.fraction >= 0.0 && args.fraction.is_finite()) {
        return Err(CliError::Config("--fraction must be non-negative".into()));
    }
    if !(args.dt > 0.0 && args.dt <= 1e-2) {
        return Err(CliError::Config("--dt must lie in (0, 0.01] s".into()));
    }
    let shape_dir = args.data_dir.join(&args.shape);
    if !shape_dir.is_dir() {
        return Err(tandem::Error::MissingDataset(format!("no shape `{}` under {}", args.shape, args.data_dir.display())).into());
    }
    let set = DemoSet::load_dir(&shape_dir)?;
    let demo = mean_trajectory(&set);
    let td = TransformedDemo::build(&demo, demo.first_position(), demo.last_position())?;
    let params = MotionParams::default();
    let diag = td.bbox_diagonal();
    let settings = FieldSettings {
        dt: args.dt,
        ..Default::default()
    };
    let starts = perturbed_starts(td.start(), diag, args.fraction, args.starts, is_planar(&demo), args.seed);
    let runs: Vec<FieldRun> = starts
        .par_iter()
        .map(|s| integrate_field(&td, &params, &[], *s, &settings))
        .collect::<tandem::Result<_>>()?;

    std::fs::create_dir_all(&args.output).map_err(|e| write_err(&args.output, e))?;
    write(&args.output.join("metrics.csv"), &metrics_csv(&runs, diag))?;
    let mut traj = String::from("x,y,z\n");
    for p in td.positions() {
        let _ = writeln!(traj, "{},{},{}", p.x, p.y, p.z);
    }
    write(&args.output.join("trajectory.csv"), &traj)?;
    if args.grid > 0 {
        let mut grid = String::from("x,y,z,vx,vy,vz\n");
        for g in streamline_grid(&td, &params, args.grid, 0.1)? {
            let (p, v) = (g.position, g.velocity);
            let _ = writeln!(grid, "{},{},{},{},{},{}", p.x, p.y, p.z, v.x, v.y, v.z);
        }
        write(&args.output.join("grid.csv"), &grid)?;
    }

    let reached = runs.iter().filter(|r| r.goal_reached).count();
    let worst = runs.iter().filter_map(|r| r.mean_deviation).fold(0.0, f64::max);
    println!(
        "{}: {} demos, diagonal {diag:.4} m, {reached}/{} runs reached the goal, worst mean deviation {:.3}% of diagonal",
        set.label(),
        set.len(),
        runs.len(),
        100.0 * worst / diag
    );
    Ok(())
}

fn metrics_csv(runs: &[FieldRun], diag: f64) -> String {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut out = String::from(
        "run,start_x,start_y,start_z,goal_reached,steps,final_error,contact_step,mean_deviation,max_deviation,mean_deviation_rel\n",
    );
    for (i, r) in runs.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{},{}",
            r.start.x,
            r.start.y,
            r.start.z,
            r.goal_reached,
            r.steps,
            r.final_error,
            r.contact_step.map_or_else(String::new, |s| s.to_string()),
            opt(r.mean_deviation),
            opt(r.max_deviation),
            opt(r.mean_deviation.map(|d| d / diag)),
        );
    }
    out
}

fn write(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| write_err(path, e))
}
