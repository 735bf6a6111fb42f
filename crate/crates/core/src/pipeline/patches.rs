use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::container::Container;
use super::images::GrayImage;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side length of a training patch.
pub const PATCH_SIZE: usize = 33;

/// Fraction of patches held out for evaluation.
pub const HOLDOUT_FRACTION: f64 = 0.1;

/// Where a patch came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchRecord {
    pub source: String,
    pub x: usize,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDataset {
    pub size: usize,
    /// Each `[1, size, size]`, values in `[0, 1]`.
    pub patches: Vec<Tensor>,
    pub manifest: Vec<PatchRecord>,
    pub seed: u64,
}

/// Crops `count` patches at uniformly random positions.
///
/// Patches are dealt round-robin over the usable images. Image `i` draws its
/// corners from stream `i` of the seed, so each image's crops do not depend on
/// how many other images are present before it in order.
pub fn extract_patches(
    images: &[GrayImage],
    count: usize,
    size: usize,
    seed: u64,
) -> Result<PatchDataset> {
    let usable: Vec<&GrayImage> = images
        .iter()
        .filter(|img| {
            let ok = img.width >= size && img.height >= size;
            if !ok {
                log::warn!(
                    "skipping {} ({}x{}): smaller than {size}x{size}",
                    img.name,
                    img.width,
                    img.height
                );
            }
            ok
        })
        .collect();
    if usable.is_empty() && count > 0 {
        return Err(Error::InvalidArgument(format!(
            "no image is at least {size}x{size}"
        )));
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..usable.len())
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64);
            r
        })
        .collect();

    let mut patches = Vec::with_capacity(count);
    let mut manifest = Vec::with_capacity(count);
    for p in 0..count {
        let which = p % usable.len();
        let img = usable[which];
        let rng = &mut rngs[which];
        let x = rng.random_range(0..=img.width - size);
        let y = rng.random_range(0..=img.height - size);
        patches.push(Tensor::new([1, size, size], img.crop(x, y, size))?);
        manifest.push(PatchRecord {
            source: img.name.clone(),
            x,
            y,
        });
    }
    Ok(PatchDataset {
        size,
        patches,
        manifest,
        seed,
    })
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// One `source x y` line per patch.
    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        for r in &self.manifest {
            writeln!(out, "{} {} {}", r.source, r.x, r.y).expect("write to String");
        }
        out
    }

    /// SHA-256 of the manifest text, lowercase hex.
    pub fn manifest_checksum(&self) -> String {
        hex::encode(Sha256::digest(self.manifest_text().as_bytes()))
    }

    /// Subset by index.
    pub fn select(&self, indices: &[usize]) -> PatchDataset {
        PatchDataset {
            size: self.size,
            patches: indices.iter().map(|&i| self.patches[i].clone()).collect(),
            manifest: indices.iter().map(|&i| self.manifest[i].clone()).collect(),
            seed: self.seed,
        }
    }

    /// Patches as columns of an `[size², P]` matrix.
    pub fn as_columns(&self) -> Tensor {
        let n = self.size * self.size;
        let p = self.len();
        let mut data = vec![0.0; n * p];
        for (j, patch) in self.patches.iter().enumerate() {
            for (i, v) in patch.data().iter().enumerate() {
                data[i * p + j] = *v;
            }
        }
        Tensor::new([n, p], data).expect("shape built from lengths")
    }

    pub fn to_container(&self) -> Container {
        let values = self.patches.iter().flat_map(|t| t.data().iter().copied()).collect();
        Container::new("patches", values)
            .with("count", self.len())
            .with("size", self.size)
            .with("seed", self.seed)
    }

    /// Rebuilds from a container plus the matching manifest text.
    pub fn from_parts(c: &Container, manifest: &str, origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: origin.to_path_buf(),
            reason,
        };
        let count: usize = c.parse("count", origin)?;
        let size: usize = c.parse("size", origin)?;
        let seed: u64 = c.parse("seed", origin)?;
        if c.values.len() != count * size * size {
            return Err(bad(format!(
                "{count} patches of {size}x{size} need {} values, found {}",
                count * size * size,
                c.values.len()
            )));
        }
        let records = parse_manifest(manifest).map_err(bad)?;
        if records.len() != count {
            return Err(bad(format!(
                "manifest lists {} patches, container holds {count}",
                records.len()
            )));
        }
        let patches = c
            .values
            .chunks_exact(size * size)
            .map(|chunk| Tensor::new([1, size, size], chunk.to_vec()))
            .collect::<Result<_>>()?;
        Ok(Self {
            size,
            patches,
            manifest: records,
            seed,
        })
    }
}

fn parse_manifest(text: &str) -> std::result::Result<Vec<PatchRecord>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let mut parts = line.rsplitn(3, ' ');
            let y = parts.next().and_then(|v| v.parse().ok());
            let x = parts.next().and_then(|v| v.parse().ok());
            let source = parts.next();
            match (source, x, y) {
                (Some(s), Some(x), Some(y)) => Ok(PatchRecord {
                    source: s.to_string(),
                    x,
                    y,
                }),
                _ => Err(format!("manifest line {} is not `name x y`", i + 1)),
            }
        })
        .collect()
}

/// Seeded shuffle of `0..count` split into (train, holdout); the holdout holds
/// `round(0.1 · count)` indices, and at least one when `count ≥ 2`.
pub fn split_holdout(count: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x686f_6c64);
    idx.shuffle(&mut rng);
    let mut k = (count as f64 * HOLDOUT_FRACTION).round() as usize;
    if count >= 2 {
        k = k.max(1);
    } else {
        k = 0;
    }
    let holdout = idx.split_off(count - k);
    (idx, holdout)
}
