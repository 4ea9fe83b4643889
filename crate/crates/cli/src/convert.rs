//! `tandem convert`: demonstration format conversion and averaging.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use tandem::{mean_trajectory, DemoFormat, DemoSet, Demonstration};

use crate::{write_err, CliError, CliResult};

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for DemoFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => DemoFormat::Csv,
            Format::Json => DemoFormat::Json,
        }
    }
}

#[derive(Args)]
pub struct ConvertArgs {
    /// A demonstration file, or a directory of them.
    input: PathBuf,
    /// Output file, or output directory when converting a directory file by file.
    #[arg(short, long)]
    output: PathBuf,
    /// Output format; defaults to the output file extension.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Average a directory of demonstrations into a single mean trajectory.
    #[arg(long)]
    mean: bool,
}

fn format_for(path: &Path, explicit: Option<Format>) -> CliResult<DemoFormat> {
    explicit.map(DemoFormat::from).or_else(|| DemoFormat::from_path(path)).ok_or_else(|| {
        CliError::Config(format!("cannot tell the format of {}; pass --format", path.display()))
    })
}

fn same_file(a: &Path, b: &Path) -> bool {
    matches!((a.canonicalize(), b.canonicalize()), (Ok(x), Ok(y)) if x == y)
}

fn save(demo: &Demonstration, path: &Path, format: DemoFormat) -> CliResult {
    demo.save(path, format).map_err(|e| write_err(path, e))
}

pub fn convert(args: ConvertArgs) -> CliResult {
    if !args.input.exists() {
        return Err(CliError::Config(format!("{} not found", args.input.display())));
    }
    if same_file(&args.input, &args.output) {
        return Err(CliError::Config("output would overwrite the input".into()));
    }
    if args.input.is_dir() {
        let set = DemoSet::load_dir(&args.input)?;
        if args.mean {
            let format = format_for(&args.output, args.format)?;
            save(&mean_trajectory(&set), &args.output, format)?;
            println!("{}: mean of {} demos written to {}", set.label(), set.len(), args.output.display());
            return Ok(());
        }
        let format: DemoFormat = args.format.unwrap_or(Format::Csv).into();
        let ext = match format {
            DemoFormat::Csv => "csv",
            DemoFormat::Json => "json",
        };
        std::fs::create_dir_all(&args.output).map_err(|e| write_err(&args.output, e))?;
        let mut names: Vec<PathBuf> = std::fs::read_dir(&args.input)
            .map_err(|e| CliError::Config(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && DemoFormat::from_path(p).is_some())
            .collect();
        names.sort();
        for (src, demo) in names.iter().zip(set.demos()) {
            let dst = args.output.join(src.with_extension(ext).file_name().expect("file has a name"));
            if same_file(src, &dst) {
                return Err(CliError::Config(format!("{} would overwrite its input", dst.display())));
            }
            save(demo, &dst, format)?;
        }
        println!("{} demos converted into {}", set.len(), args.output.display());
        return Ok(());
    }
    if args.mean {
        return Err(CliError::Config("--mean needs a directory input".into()));
    }
    let demo = Demonstration::load_auto(&args.input)?;
    save(&demo, &args.output, format_for(&args.output, args.format)?)?;
    println!("{} samples written to {}", demo.len(), args.output.display());
    Ok(())
}
