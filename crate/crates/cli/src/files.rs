//! Scene and checkpoint files.
//!
//! A scene is a JSON envelope `<stem>.json` holding the rig, the boxes and
//! metadata, plus a DIPT sidecar `<stem>.dipt` with the `N x 4` points (no
//! sidecar when the cloud is empty).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dipp_core::geometry::CameraModel;
use dipp_core::numerics::Tensor;
use dipp_core::scenesim::{Box3D, Scene};
use dipp_core::training::Checkpoint;
use dipp_core::{Error, Result};

const SCENE_FORMAT: &str = "dipp-scene";
const SCENE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    seed: u64,
    num_points: usize,
    points_file: Option<String>,
    boxes: Vec<Box3D>,
    rig: Vec<CameraModel>,
}

/// Writes `dir/<stem>.json` (and its sidecar); returns the envelope path.
pub fn write_scene(dir: &Path, stem: &str, scene: &Scene) -> Result<PathBuf> {
    let n = scene.num_points();
    let points_file = (n > 0).then(|| format!("{stem}.dipt"));
    if let Some(f) = &points_file {
        let t = Tensor::new(&[n, Scene::POINT_STRIDE], scene.points.clone())?;
        fs::write(dir.join(f), t.to_dipt_bytes())?;
    }
    let env = Envelope {
        format: SCENE_FORMAT.into(),
        version: SCENE_VERSION,
        seed: scene.seed,
        num_points: n,
        points_file,
        boxes: scene.boxes.clone(),
        rig: scene.rig.clone(),
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&env).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path)?;
    let env: Envelope = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if env.format != SCENE_FORMAT || env.version != SCENE_VERSION {
        return Err(Error::Format(format!("{}: not a version {SCENE_VERSION} scene", path.display())));
    }
    let points = match &env.points_file {
        Some(f) => {
            let side = path.parent().unwrap_or(Path::new(".")).join(f);
            let t = Tensor::read_dipt(&mut fs::read(&side)?.as_slice())?;
            if t.shape() != [env.num_points, Scene::POINT_STRIDE] {
                return Err(Error::Format(format!("{}: points shape {:?}", side.display(), t.shape())));
            }
            t.data().to_vec()
        }
        None if env.num_points == 0 => Vec::new(),
        None => return Err(Error::Format(format!("{}: points file missing", path.display()))),
    };
    Ok(Scene {
        points,
        boxes: env.boxes,
        rig: env.rig,
        seed: env.seed,
    })
}

/// Scene envelopes in `dir`, sorted by name.
pub fn scene_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("scene_")))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::Empty("scene directory"));
    }
    Ok(out)
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    // write then rename, so an interrupted run never leaves a torn file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ck.to_bytes())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
