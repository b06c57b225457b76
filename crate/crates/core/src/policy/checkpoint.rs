//! Checkpoint files: a short text header, an `end` line, then every
//! parameter as little-endian f64 (layer weights row-major, then biases,
//! layer by layer, then input mean and input std).

use super::{Checkpoint, Layer, Mlp, PolicyParams};
use crate::trajectory::Bound;
use ndarray::{Array1, Array2};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &str = "CTCKPT1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint header: {0}")]
    Header(String),
    #[error("corrupt checkpoint body: expected {expected} bytes, found {found}")]
    Body { expected: usize, found: usize },
}

fn join<T: std::fmt::Debug>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint, seed: u64) -> Result<(), CheckpointError> {
    let p = &ckpt.params;
    let mut out = Vec::new();
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "sizes {}", join(p.net.sizes()))?;
    writeln!(out, "image_side {}", p.image_side)?;
    writeln!(out, "step {}", ckpt.step)?;
    writeln!(out, "seed {seed}")?;
    writeln!(out, "train_loss {:?}", ckpt.train_loss)?;
    writeln!(out, "bounds {}", join(p.action_bounds.iter().flat_map(|b| [b.lo, b.hi])))?;
    writeln!(out, "end")?;
    let body = p
        .net
        .flatten()
        .into_iter()
        .chain(p.input_mean.iter().copied())
        .chain(p.input_std.iter().copied());
    for v in body {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CheckpointError> {
    s.parse()
        .map_err(|_| CheckpointError::Header(format!("bad {what}: {s:?}")))
}

/// Loads a checkpoint and the training seed recorded with it.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, u64), CheckpointError> {
    let bytes = std::fs::read(path)?;
    let mut fields = std::collections::HashMap::new();
    let mut pos = 0;
    let mut first = true;
    loop {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| CheckpointError::Header("missing end line".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + nl])
            .map_err(|_| CheckpointError::Header("non-utf8 header".into()))?;
        pos += nl + 1;
        if first {
            if line != CHECKPOINT_MAGIC {
                return Err(CheckpointError::Header(format!("bad magic {line:?}")));
            }
            first = false;
            continue;
        }
        if line == "end" {
            break;
        }
        let (k, v) = line.split_once(' ').unwrap_or((line, ""));
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::Header(format!("missing {k}")))
    };
    let sizes: Vec<usize> = get("sizes")?
        .split_whitespace()
        .map(|s| parse(s, "size"))
        .collect::<Result<_, _>>()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(CheckpointError::Header(format!("bad sizes {sizes:?}")));
    }
    let image_side: usize = parse(get("image_side")?, "image_side")?;
    let step: usize = parse(get("step")?, "step")?;
    let seed: u64 = parse(get("seed")?, "seed")?;
    let train_loss: f64 = parse(get("train_loss")?, "train_loss")?;
    let flat_bounds: Vec<f64> = get("bounds")?
        .split_whitespace()
        .map(|s| parse(s, "bound"))
        .collect::<Result<_, _>>()?;
    let out_dim = *sizes.last().unwrap();
    if flat_bounds.len() != 2 * out_dim {
        return Err(CheckpointError::Header("bounds do not match output size".into()));
    }
    let action_bounds = flat_bounds.chunks(2).map(|c| Bound::new(c[0], c[1])).collect();

    let body = &bytes[pos..];
    let params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() + 2 * sizes[0];
    if body.len() != 8 * params {
        return Err(CheckpointError::Body {
            expected: 8 * params,
            found: body.len(),
        });
    }
    let mut vals = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |n: usize| vals.by_ref().take(n).collect::<Vec<f64>>();
    let layers = sizes
        .windows(2)
        .map(|w| Layer {
            w: Array2::from_shape_vec((w[1], w[0]), take(w[0] * w[1])).expect("sized"),
            b: Array1::from(take(w[1])),
        })
        .collect();
    let input_mean = take(sizes[0]);
    let input_std = take(sizes[0]);
    let params = PolicyParams {
        net: Mlp { layers },
        image_side,
        input_mean,
        input_std,
        action_bounds,
    };
    params
        .check()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    Ok((
        Checkpoint {
            params,
            step,
            train_loss,
        },
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn ckpt() -> Checkpoint {
        let mut p = PolicyParams::new(
            Mlp::random(&[68, 7, 4], &mut rng_from(1)),
            8,
            vec![
                Bound::new(-0.02, 0.02),
                Bound::new(-0.02, 0.02),
                Bound::new(-0.2, 0.2),
                Bound::new(0.0, 1.0),
            ],
        );
        p.input_mean[3] = 0.1 + 0.2;
        p.input_std[5] = 1.0 / 3.0;
        Checkpoint {
            params: p,
            step: 6667,
            train_loss: 0.012345678901234567,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt_1.bin");
        save_checkpoint(&path, &ckpt(), 42).unwrap();
        let (back, seed) = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt());
        assert_eq!(seed, 42);
        let text = std::fs::read(&path).unwrap();
        assert!(text.starts_with(b"CTCKPT1\nsizes 68 7 4\n"));
    }

    #[test]
    fn truncated_body_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save_checkpoint(&path, &ckpt(), 0).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Body { .. })));
    }

    #[test]
    fn wrong_magic_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        std::fs::write(&path, b"NOPE\nend\n").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Header(_))));
    }
}
