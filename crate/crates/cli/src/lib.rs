//! Command implementations behind the `dipp` binary. Every command is a
//! function of the run configuration (and the files it names) alone.

mod files;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dipp_core::evalbench::{self, ap_center_distance, map_lite, BenchReport, Detection, GroundTruth, THRESHOLDS};
use dipp_core::geometry::BevGrid;
use dipp_core::rng::Rng;
use dipp_core::scenesim::{gen_scene, Scene, SceneConfig};
use dipp_core::training::{self, init_model, predict, prepare_scene, Checkpoint, EpochMetrics, ModelConfig, PreparedScene, TrainConfig};

pub use files::{read_checkpoint, read_scene, scene_paths, write_checkpoint, write_scene};

/// Everything a run depends on. `grid` is the one BEV range used by both
/// the scene generator and the model; the copies inside `scene` and
/// `model` are overwritten by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: BevGrid,
    pub scene: SceneConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Output directory.
    pub out: PathBuf,
    /// Scenes made by `gen-scene` and, when `scene_dir` is unset, used by
    /// `train` and `eval`.
    pub n_scenes: usize,
    /// The last `heldout` scenes are held out from training.
    pub heldout: usize,
    /// Read scenes from here (as written by `gen-scene`) instead of
    /// generating them.
    pub scene_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            grid: BevGrid::default(),
            scene: SceneConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            out: PathBuf::from("out"),
            n_scenes: 10,
            heldout: 2,
            scene_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).context("config")?;
        cfg.sync_grid();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sync_grid(&mut self) {
        self.scene.range = self.grid;
        self.model.grid = self.grid;
    }

    fn synced(&self) -> RunConfig {
        let mut c = self.clone();
        c.sync_grid();
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.scene.num_classes != self.model.num_classes {
            bail!(dipp_core::Error::InvalidArgument(format!(
                "scene has {} classes, model {}",
                self.scene.num_classes, self.model.num_classes
            )));
        }
        Ok(())
    }

    /// Seed of the `i`-th scene of this run.
    pub fn scene_seed(&self, i: usize) -> u64 {
        Rng::new(self.seed).split(i as u64).next_u64()
    }
}

/// Worker count from `DIPP_THREADS`; 0 (or unset) is the serial reference.
pub fn threads() -> usize {
    std::env::var("DIPP_THREADS").ok().and_then(|s| s.parse().ok()).unwrap_or(0)
}

/// `f` over `items`, in order, on `threads()` workers.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    let n = threads();
    if n == 0 {
        return Ok(items.iter().map(f).collect());
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

/// The run's scenes: from `scene_dir` if set, else generated.
pub fn load_scenes(cfg: &RunConfig) -> Result<Vec<Scene>> {
    match &cfg.scene_dir {
        Some(dir) => scene_paths(dir)?.iter().map(|p| read_scene(p).map_err(Into::into)).collect(),
        None => {
            let idx: Vec<usize> = (0..cfg.n_scenes).collect();
            par_map(&idx, |&i| gen_scene(&cfg.scene, cfg.scene_seed(i)))?
                .into_iter()
                .map(|r| r.map_err(Into::into))
                .collect()
        }
    }
}

fn split(cfg: &RunConfig, scenes: &[Scene]) -> Result<usize> {
    if cfg.heldout > scenes.len() {
        bail!(dipp_core::Error::InvalidArgument(format!(
            "{} held-out scenes requested from {}",
            cfg.heldout,
            scenes.len()
        )));
    }
    Ok(scenes.len() - cfg.heldout)
}

/// Writes `n_scenes` scenes to `out`; returns the envelope paths.
pub fn cmd_gen_scene(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let cfg = &cfg.synced();
    fs::create_dir_all(&cfg.out)?;
    let idx: Vec<usize> = (0..cfg.n_scenes).collect();
    let scenes = par_map(&idx, |&i| gen_scene(&cfg.scene, cfg.scene_seed(i)))?;
    let mut paths = Vec::with_capacity(scenes.len());
    for (i, s) in scenes.into_iter().enumerate() {
        paths.push(write_scene(&cfg.out, &format!("scene_{i:04}"), &s?)?);
    }
    Ok(paths)
}

pub const CHECKPOINT_FILE: &str = "checkpoint.dipp";
pub const METRICS_FILE: &str = "metrics.txt";

/// Per-epoch checkpoint name, `epoch_0003.dipp` after the third epoch.
pub fn epoch_checkpoint_file(epoch: usize) -> String {
    format!("epoch_{epoch:04}.dipp")
}

/// One `key=value` line per epoch.
pub fn metrics_line(m: &EpochMetrics) -> String {
    format!("epoch={} loss={} map_lite={}", m.epoch, m.loss, m.map_lite)
}

/// Inverse of [`metrics_line`] over a whole file.
pub fn parse_metrics(text: &str) -> Result<Vec<EpochMetrics>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut epoch = None;
            let (mut loss, mut map) = (None, None);
            for kv in line.split_whitespace() {
                match kv.split_once('=') {
                    Some(("epoch", v)) => epoch = v.parse().ok(),
                    Some(("loss", v)) => loss = v.parse().ok(),
                    Some(("map_lite", v)) => map = v.parse().ok(),
                    _ => {}
                }
            }
            match (epoch, loss, map) {
                (Some(epoch), Some(loss), Some(map_lite)) => Ok(EpochMetrics { epoch, loss, map_lite }),
                _ => bail!(dipp_core::Error::Format(format!("bad metrics line {line:?}"))),
            }
        })
        .collect()
}

/// Trains from fresh parameters or from `resume`, writing the latest
/// checkpoint, a per-epoch copy and the metrics trace to `out` after every
/// epoch.
pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<Checkpoint> {
    let cfg = &cfg.synced();
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.json"), cfg.to_json())?;
    let scenes = load_scenes(cfg)?;
    let n_train = split(cfg, &scenes)?;
    let start = match resume {
        Some(p) => read_checkpoint(p)?,
        None => Checkpoint::fresh(init_model(&cfg.model, cfg.seed)?),
    };
    let save = |ck: &Checkpoint| -> dipp_core::Result<()> {
        write_checkpoint(&cfg.out.join(CHECKPOINT_FILE), ck)?;
        if ck.epoch > 0 {
            write_checkpoint(&cfg.out.join(epoch_checkpoint_file(ck.epoch)), ck)?;
        }
        let text: String = ck.trace.iter().map(|m| metrics_line(m) + "\n").collect();
        fs::write(cfg.out.join(METRICS_FILE), text)?;
        Ok(())
    };
    save(&start)?;
    let ck = training::train_loop(&cfg.model, &cfg.train, cfg.seed, &scenes[..n_train], &scenes[n_train..], start, save)?;
    Ok(ck)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Heldout,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scenes: usize,
    pub ground_truths: usize,
    pub predictions: usize,
    pub map_lite: f64,
    /// AP over all classes pooled, per threshold of [`THRESHOLDS`].
    pub ap: Vec<f64>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "scenes={}\nground_truths={}\npredictions={}\nmap_lite={}\n",
            self.scenes, self.ground_truths, self.predictions, self.map_lite
        );
        for (t, ap) in THRESHOLDS.iter().zip(&self.ap) {
            s += &format!("ap_class_agnostic@{t}={ap}\n");
        }
        s
    }
}

fn prepare_all(cfg: &RunConfig, scenes: &[Scene]) -> Result<Vec<PreparedScene>> {
    par_map(scenes, |s| prepare_scene(s, &cfg.model))?
        .into_iter()
        .map(|r| r.map_err(Into::into))
        .collect()
}

/// Scores the checkpoint on a split of the run's scenes.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, which: Split) -> Result<EvalReport> {
    let cfg = &cfg.synced();
    cfg.validate()?;
    let ck = read_checkpoint(checkpoint)?;
    let scenes = load_scenes(cfg)?;
    let n_train = split(cfg, &scenes)?;
    let chosen = match which {
        Split::Train => &scenes[..n_train],
        Split::Heldout => &scenes[n_train..],
        Split::All => &scenes[..],
    };
    let prepared = prepare_all(cfg, chosen)?;
    let outputs = par_map(&prepared, |p| predict(&ck.params, p, &cfg.model))?;
    let (mut preds, mut gts) = (Vec::new(), Vec::new());
    for (i, (p, out)) in prepared.iter().zip(outputs).enumerate() {
        preds.extend(out?.iter().map(|(b, s)| Detection::from_box(i, b, *s)));
        gts.extend(p.scene.boxes.iter().map(|b| GroundTruth::from_box(i, b)));
    }
    let agn_p: Vec<Detection> = preds.iter().map(|d| Detection { class: 0, ..*d }).collect();
    let agn_g: Vec<GroundTruth> = gts.iter().map(|g| GroundTruth { class: 0, ..*g }).collect();
    let report = EvalReport {
        scenes: chosen.len(),
        ground_truths: gts.len(),
        predictions: preds.len(),
        map_lite: map_lite(&preds, &gts),
        ap: THRESHOLDS.iter().map(|&t| ap_center_distance(&agn_p, &agn_g, t)).collect(),
    };
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("eval.txt"), report.to_text())?;
    Ok(report)
}

/// Padding benchmark of `dist` (e.g. `"900x4,100x64"`) under the encoder's
/// intervals.
pub fn cmd_bench_attn(cfg: &RunConfig, dist: &str, trials: usize) -> Result<BenchReport> {
    let counts = evalbench::parse_distribution(dist)?;
    let enc = &cfg.model.encoder;
    let report = evalbench::bench_grouped(&counts, &enc.intervals, trials, enc.channels, enc.heads)?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("bench.txt"), report.to_text())?;
    Ok(report)
}

/// Writes the model's BEV heatmap of scene `index` as a PGM image.
pub fn cmd_dump_heatmap(cfg: &RunConfig, checkpoint: &Path, index: usize, path: &Path) -> Result<()> {
    let cfg = &cfg.synced();
    cfg.validate()?;
    let ck = read_checkpoint(checkpoint)?;
    let scenes = load_scenes(cfg)?;
    let Some(scene) = scenes.get(index) else {
        bail!(dipp_core::Error::OutOfRange(format!("scene {index} of {}", scenes.len())));
    };
    let prep = prepare_scene(scene, &cfg.model)?;
    let scores = training::heatmap_scores(&ck.params, &prep, &cfg.model)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    evalbench::dump_heatmap(&scores, cfg.grid.h, cfg.grid.w, path)?;
    Ok(())
}

/// Category of a failure for the one-line error report.
pub fn error_category(e: &anyhow::Error) -> &'static str {
    if let Some(core) = e.downcast_ref::<dipp_core::Error>() {
        return core.category();
    }
    if e.downcast_ref::<serde_json::Error>().is_some() {
        return "config";
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    "other"
}
