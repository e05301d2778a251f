use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kmpigment::cube::crop_stitch;
use kmpigment::io::{read_envi, write_envi};
use kmpigment::pipeline::{self, PipelineConfig};
use kmpigment::synth::{synth_scene_with, SynthOptions};
use kmpigment::{Exec, Rect};

#[derive(Parser)]
#[command(name = "kmpigment", version, about = "Kubelka-Munk pigment unmixing for hyperspectral cubes")]
struct Cli {
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scene with ground truth and a ready-to-run config.
    Synth {
        #[arg(long, default_value_t = 4)]
        pigments: usize,
        #[arg(long, default_value_t = 100)]
        width: usize,
        #[arg(long, default_value_t = 100)]
        height: usize,
        #[arg(long, default_value_t = 0.002)]
        noise: f64,
        /// Seed for the scene generator.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run seed written into the generated config.
        #[arg(long, default_value_t = 0)]
        run_seed: u64,
        /// Fraction of pigment pixels that are mixtures.
        #[arg(long)]
        mixed_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Crop a rectangle from each of two cubes and join them side by side.
    CropStitch {
        #[arg(long)]
        left: PathBuf,
        /// row,col,height,width
        #[arg(long, value_parser = parse_rect)]
        left_rect: Rect,
        #[arg(long)]
        right: PathBuf,
        #[arg(long, value_parser = parse_rect)]
        right_rect: Rect,
        /// Output header; the data file gets the `.img` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the pigment mask.
    Segment(RunArgs),
    /// Extract endmembers and estimate dimensionality.
    Endmembers(RunArgs),
    /// Per-pixel abundances.
    Unmix(RunArgs),
    /// Final classes and RMSE maps.
    Classify(RunArgs),
    /// All stages in order, plus the run manifest.
    Pipeline(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's run seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_rect(s: &str) -> Result<Rect, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [row, col, height, width] if height > 0 && width > 0 => Ok(Rect::new(row, col, height, width)),
        _ => Err("expected row,col,height,width with nonzero height and width".into()),
    }
}

fn exec_for(threads: Option<usize>) -> Result<Exec> {
    match threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the thread pool")?;
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::Parallel),
    }
}

fn load_config(args: &RunArgs) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.paths.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn data_path(header: &Path) -> PathBuf {
    header.with_extension("img")
}

fn run(cli: Cli) -> Result<()> {
    let exec = exec_for(cli.threads)?;
    match cli.command {
        Command::Synth {
            pigments,
            width,
            height,
            noise,
            seed,
            run_seed,
            mixed_fraction,
            out,
        } => {
            let mut opts = SynthOptions::new(pigments, width, height, noise, seed);
            if let Some(f) = mixed_fraction {
                opts.mixed_fraction = f;
            }
            let scene = synth_scene_with(&opts)?;
            let cfg = pipeline::write_scene_bundle(&scene, &out, run_seed)?;
            println!(
                "wrote {width}x{height} scene with {pigments} pigments to {}",
                out.display()
            );
            println!("config: {}", out.join("config.toml").display());
            log::debug!("paper pixel {:?}", cfg.paper_pixel());
        }
        Command::CropStitch {
            left,
            left_rect,
            right,
            right_rect,
            out,
        } => {
            let a = read_envi(&left, data_path(&left))?;
            let b = read_envi(&right, data_path(&right))?;
            let joined = crop_stitch(&a, left_rect, &b, right_rect)?;
            write_envi(&joined, &out, data_path(&out))?;
            println!(
                "wrote {}x{} cube with {} bands to {}",
                joined.height(),
                joined.width(),
                joined.bands(),
                out.display()
            );
        }
        Command::Segment(args) => {
            let cfg = load_config(&args)?;
            let r = pipeline::run_segment(&cfg, exec)?;
            println!(
                "mask: {} pixels from pigment clusters {:?}",
                r.mask.count(),
                r.pigment_clusters
            );
        }
        Command::Endmembers(args) => {
            let cfg = load_config(&args)?;
            let r = pipeline::run_endmembers(&cfg, exec)?;
            println!(
                "endmembers: {} extracted, dimensionality {}, {} used",
                r.extracted.len(),
                r.volume.estimated_dimensionality,
                r.used
            );
        }
        Command::Unmix(args) => {
            let cfg = load_config(&args)?;
            let a = pipeline::run_unmix(&cfg, exec)?;
            println!("abundances: {} pixels x {} endmembers", a.n_pixels(), a.m());
        }
        Command::Classify(args) => {
            let cfg = load_config(&args)?;
            let r = pipeline::run_classify(&cfg, exec)?;
            println!("classes: {:?} pixels per class", r.map.populations());
        }
        Command::Pipeline(args) => {
            let cfg = load_config(&args)?;
            let r = pipeline::run_pipeline(&cfg, exec)?;
            println!(
                "mask {} px, {} endmembers used, {} classes; outputs in {}",
                r.segment.mask.count(),
                r.endmembers.used,
                r.classify.map.k,
                cfg.paths.out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
