//! On-disk dataset container.
//!
//! A dataset is a directory holding `manifest.json` plus one
//! `traj_<index>.bin` blob per trajectory. Blob layout, all little-endian:
//!
//! ```text
//! magic      5 bytes  "CTFJ1"
//! frames     u32
//! height     u32
//! width      u32
//! proprio    u32      proprio dimension
//! action     u32      action dimension
//! frames × { image: H·W·3 u8, proprio: f64 × P, action: f64 × A }
//! ```
//!
//! Trajectory metadata (task, success, seed, ...) lives in the manifest's
//! `trajectories` index so blobs stay pure frame data.

use super::{
    Action, CompositionManifest, Dataset, Generator, Image, ObjectTag, ObservationFrame,
    SourceTag, Step, Trajectory,
};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"CTFJ1";
pub const SCHEMA_VERSION: u32 = 1;
const HEADER_LEN: usize = 5 + 4 * 5;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("unsupported schema_version {0}")]
    UnsupportedSchema(u32),
    #[error("missing trajectory file {0}")]
    MissingTrajectory(PathBuf),
    #[error("corrupt trajectory {path}: {reason}")]
    CorruptTrajectory { path: PathBuf, reason: String },
    #[error("dimension mismatch in {path}: {detail}")]
    DimensionMismatch { path: PathBuf, detail: String },
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    schema_version: u32,
    name: String,
    source: SourceTag,
    composition: CompositionManifest,
    trajectories: Vec<TrajectoryEntry>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryEntry {
    file: String,
    frames: u32,
    task_id: String,
    success: f64,
    source: SourceTag,
    seed: u64,
    generator: Generator,
    objects: Vec<ObjectTag>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_dataset(d: &Dataset, dir: impl AsRef<Path>) -> Result<(), StorageError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(d.trajectories.len());
    for (i, t) in d.trajectories.iter().enumerate() {
        let file = format!("traj_{i}.bin");
        let path = dir.join(&file);
        let blob = encode_trajectory(t, &d.manifest);
        fs::write(&path, blob).map_err(io_err(&path))?;
        entries.push(TrajectoryEntry {
            file,
            frames: t.steps.len() as u32,
            task_id: t.task_id.clone(),
            success: t.success,
            source: t.source,
            seed: t.seed,
            generator: t.generator,
            objects: t.objects.clone(),
        });
    }
    let mf = ManifestFile {
        schema_version: SCHEMA_VERSION,
        name: d.name.clone(),
        source: d.source,
        composition: d.manifest.clone(),
        trajectories: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&mf).expect("manifest serializes");
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(text.as_bytes()).map_err(io_err(&path))?;
    f.write_all(b"\n").map_err(io_err(&path))?;
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, StorageError> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mf: ManifestFile =
        serde_json::from_str(&text).map_err(|e| StorageError::CorruptManifest(e.to_string()))?;
    if mf.schema_version != SCHEMA_VERSION {
        return Err(StorageError::UnsupportedSchema(mf.schema_version));
    }
    if let Some(v) = mf.composition.violations().first() {
        return Err(StorageError::CorruptManifest(v.to_string()));
    }
    let mut trajectories = Vec::with_capacity(mf.trajectories.len());
    for e in mf.trajectories {
        let path = dir.join(&e.file);
        let blob = match fs::read(&path) {
            Ok(b) => b,
            Err(err) if err.kind() == io::ErrorKind::NotFound => {
                return Err(StorageError::MissingTrajectory(path))
            }
            Err(err) => return Err(io_err(&path)(err)),
        };
        let steps = decode_trajectory(&blob, &mf.composition, e.frames, &path)?;
        trajectories.push(Trajectory {
            steps,
            task_id: e.task_id,
            success: e.success,
            source: e.source,
            seed: e.seed,
            generator: e.generator,
            objects: e.objects,
        });
    }
    Ok(Dataset {
        name: mf.name,
        source: mf.source,
        manifest: mf.composition,
        trajectories,
    })
}

fn encode_trajectory(t: &Trajectory, m: &CompositionManifest) -> Vec<u8> {
    let (h, w) = m.camera.resolution;
    let pd = m.proprio_dim;
    let ad = m.action_dim();
    let frame_len = (h * w * 3) as usize + 8 * (pd + ad);
    let mut out = Vec::with_capacity(HEADER_LEN + frame_len * t.steps.len());
    out.extend_from_slice(MAGIC);
    for v in [t.steps.len() as u32, h, w, pd as u32, ad as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in &t.steps {
        out.extend_from_slice(&s.obs.image.data);
        for v in s.obs.proprio.iter().chain(&s.action.delta) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_trajectory(
    blob: &[u8],
    m: &CompositionManifest,
    expected_frames: u32,
    path: &Path,
) -> Result<Vec<Step>, StorageError> {
    let corrupt = |reason: String| StorageError::CorruptTrajectory {
        path: path.to_path_buf(),
        reason,
    };
    if blob.len() < HEADER_LEN {
        return Err(corrupt(format!("header truncated ({} bytes)", blob.len())));
    }
    if &blob[..5] != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(blob[5 + 4 * i..9 + 4 * i].try_into().unwrap());
    let (frames, h, w, pd, ad) = (u32_at(0), u32_at(1), u32_at(2), u32_at(3), u32_at(4));
    let mismatch = |detail: String| StorageError::DimensionMismatch {
        path: path.to_path_buf(),
        detail,
    };
    if (h, w) != m.camera.resolution {
        return Err(mismatch(format!(
            "image {h}x{w}, manifest declares {:?}",
            m.camera.resolution
        )));
    }
    if pd as usize != m.proprio_dim || ad as usize != m.action_dim() {
        return Err(mismatch(format!(
            "proprio/action {pd}/{ad}, manifest declares {}/{}",
            m.proprio_dim,
            m.action_dim()
        )));
    }
    if frames != expected_frames {
        return Err(corrupt(format!(
            "header frame count {frames} disagrees with manifest {expected_frames}"
        )));
    }
    let img_len = (h * w * 3) as usize;
    let (pd, ad) = (pd as usize, ad as usize);
    let frame_len = img_len + 8 * (pd + ad);
    let want = HEADER_LEN + frame_len * frames as usize;
    if blob.len() != want {
        return Err(corrupt(format!("expected {want} bytes, found {}", blob.len())));
    }
    let read_f64s = |buf: &[u8]| -> Vec<f64> {
        buf.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let steps = blob[HEADER_LEN..]
        .chunks_exact(frame_len)
        .map(|f| {
            let (img, rest) = f.split_at(img_len);
            let (p, a) = rest.split_at(8 * pd);
            Step {
                obs: ObservationFrame {
                    image: Image {
                        height: h,
                        width: w,
                        data: img.to_vec(),
                    },
                    proprio: read_f64s(p),
                },
                action: Action::new(read_f64s(a)),
            }
        })
        .collect();
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::dataset;
    use super::*;

    #[test]
    fn round_trip_three_trajectories() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = dataset(3, &["cup", "can"]);
        d.trajectories[1].seed = u64::MAX - 3;
        d.trajectories[2].steps[0].obs.proprio[0] = 1.0 / 3.0;
        save_dataset(&d, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), d);
    }

    #[test]
    fn truncated_blob_is_corrupt_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(2, &["cup"]), dir.path()).unwrap();
        let p = dir.path().join("traj_1.bin");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 7]).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, StorageError::CorruptTrajectory { .. }), "{err}");
        assert!(err.to_string().starts_with("corrupt trajectory"));
    }

    #[test]
    fn missing_blob_is_named() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(2, &["cup"]), dir.path()).unwrap();
        fs::remove_file(dir.path().join("traj_0.bin")).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(StorageError::MissingTrajectory(_))
        ));
    }

    #[test]
    fn garbage_manifest_is_corrupt_manifest() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(1, &["cup"]), dir.path()).unwrap();
        fs::write(dir.path().join("manifest.json"), "{\"schema_version\": 1, ").unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(StorageError::CorruptManifest(_))
        ));
    }

    #[test]
    fn header_dims_disagreeing_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset(1, &["cup"]), dir.path()).unwrap();
        let p = dir.path().join("traj_0.bin");
        let mut bytes = fs::read(&p).unwrap();
        bytes[9..13].copy_from_slice(&31u32.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(StorageError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn header_layout_is_documented_layout() {
        let d = dataset(1, &["cup"]);
        let blob = encode_trajectory(&d.trajectories[0], &d.manifest);
        assert_eq!(&blob[..5], b"CTFJ1");
        assert_eq!(u32::from_le_bytes(blob[5..9].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(blob[9..13].try_into().unwrap()), 32);
        assert_eq!(u32::from_le_bytes(blob[13..17].try_into().unwrap()), 32);
        assert_eq!(u32::from_le_bytes(blob[17..21].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(blob[21..25].try_into().unwrap()), 4);
        assert_eq!(blob.len(), 25 + 3 * (3072 + 64));
    }
}
