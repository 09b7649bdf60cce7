//! Seeded procedural art as binary PPM (P6) images.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hashing::{derive_seed, fnv1a64, sha256_hex};

pub const DEFAULT_WIDTH: u32 = 64;
pub const DEFAULT_HEIGHT: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtBlob {
    pub width: u32,
    pub height: u32,
    /// Complete PPM file bytes, header included.
    pub bytes: Vec<u8>,
}

impl ArtBlob {
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.bytes)
    }

    /// Write `<content hash>.ppm` into `dir` and return the path.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> io::Result<PathBuf> {
        let path = dir.as_ref().join(format!("{}.ppm", self.content_hash()));
        fs::write(&path, &self.bytes)?;
        Ok(path)
    }
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
}

/// Interference of three plane waves per channel plus a low-amplitude dither,
/// all drawn from a stream seeded by `(seed, theme)`.
pub fn generate_art(seed: u64, theme: &str, width: u32, height: u32) -> ArtBlob {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, fnv1a64(0, theme.as_bytes())));
    let waves: Vec<[Wave; 3]> = (0..3)
        .map(|_| {
            std::array::from_fn(|_| Wave {
                fx: rng.random_range(-0.4..0.4),
                fy: rng.random_range(-0.4..0.4),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            })
        })
        .collect();
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.reserve((width * height * 3) as usize);
    for y in 0..height {
        for x in 0..width {
            for channel in &waves {
                let v: f64 = channel
                    .iter()
                    .map(|w| (w.fx * f64::from(x) + w.fy * f64::from(y) + w.phase).sin())
                    .sum::<f64>()
                    / 3.0;
                let dither: f64 = rng.random_range(-8.0..8.0);
                bytes.push((127.5 + 119.0 * v + dither).clamp(0.0, 255.0) as u8);
            }
        }
    }
    ArtBlob { width, height, bytes }
}
