use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use dipp_cli::*;

#[derive(Parser)]
#[command(name = "dipp", about = "LiDAR/camera fusion detector on synthetic scenes")]
struct Cli {
    /// Run configuration (JSON); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate scenes into the output directory.
    GenScene,
    /// Train, writing the checkpoint and per-epoch metrics.
    Train {
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "heldout")]
        split: Split,
    },
    /// Compare grouped and single-width padding of attention keys.
    BenchAttn {
        /// Neighbor counts as `<pillars>x<count>` terms, e.g. 900x4,100x64.
        #[arg(long, default_value = "900x4,100x64")]
        dist: String,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Write the BEV heatmap of one scene as a PGM image.
    DumpHeatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        scene: usize,
        /// Defaults to <out>/heatmap_<scene>.pgm.
        #[arg(long)]
        path: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    match cli.cmd {
        Cmd::GenScene => {
            for p in cmd_gen_scene(&cfg)? {
                println!("{}", p.display());
            }
        }
        Cmd::Train { resume } => {
            let ck = cmd_train(&cfg, resume.as_deref())?;
            for m in &ck.trace {
                println!("{}", metrics_line(m));
            }
        }
        Cmd::Eval { checkpoint, split } => print!("{}", cmd_eval(&cfg, &checkpoint, split)?.to_text()),
        Cmd::BenchAttn { dist, trials } => print!("{}", cmd_bench_attn(&cfg, &dist, trials)?.to_text()),
        Cmd::DumpHeatmap { checkpoint, scene, path } => {
            let path = path.unwrap_or_else(|| cfg.out.join(format!("heatmap_{scene}.pgm")));
            cmd_dump_heatmap(&cfg, &checkpoint, scene, &path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error category={} message={msg:?}", error_category(&e));
            ExitCode::FAILURE
        }
    }
}
