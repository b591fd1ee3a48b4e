//! Synthetic benchmark generation.
//!
//! Builds a small PCQA-style database without any licensed data: a set of
//! reference shapes, each distorted by additive Gaussian geometry noise at
//! several levels, with synthetic MOS values decreasing in noise level.
//! Everything is seeded, so repeated generation is byte-identical. Useful
//! for smoke-testing the full pipeline and for the acceptance suite.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::manifest::{save_manifest, Manifest, ManifestEntry, ManifestError};
use crate::pointcloud::{write_ply, PlyFormat, PointCloud};
use crate::rating::MosRange;

#[derive(Debug, Clone)]
pub struct SynthOptions {
    /// Number of reference shapes (groups); cycles through ten families.
    pub groups: usize,
    /// Distortion levels per reference.
    pub levels: usize,
    /// Points per reference cloud.
    pub points: usize,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            groups: 10,
            levels: 5,
            points: 1400,
            seed: 7,
        }
    }
}

const SHAPE_NAMES: [&str; 10] = [
    "orb", "pebble", "knurl", "dune", "blossom", "ridge", "bead", "coral", "swell", "spire",
];

/// Base noise standard deviation per level, as a fraction of the bounding
/// diagonal. Level 1 is the clean reference; the top levels visibly smear
/// the surface so the eigen statistics respond across all shape families.
fn noise_fraction(level: usize) -> f64 {
    match level {
        1 => 0.0,
        2 => 0.01,
        3 => 0.025,
        4 => 0.06,
        _ => 0.15 + 0.05 * (level as f64 - 5.0),
    }
}

/// Per-(group, level) severity wobble in [-1, 1]. The same factor scales the
/// injected noise and shifts the MOS, so scores vary continuously inside a
/// level the way real subjective data does, and that within-level ordering
/// is visible to the geometry features but not to the coarse rating levels.
fn severity_wobble(group: usize, level: usize) -> f64 {
    let h = (group * 31 + level).wrapping_mul(2654435761) % 1000;
    h as f64 / 499.5 - 1.0
}

/// Synthetic MOS, decreasing in noise level. Levels sit at 90, 70, 50, 30,
/// 10, the centers of the five rating bins of a (0, 100) range, so adjacent
/// levels carry distinct adjectives; the severity wobble moves scores inside
/// their bin.
fn synthetic_mos(level: usize, group: usize) -> f64 {
    let center = 90.0 - 20.0 * (level as f64 - 1.0);
    let offset = if level == 1 {
        ((group * 2654435761) % 17) as f64 / 10.0 - 0.8
    } else {
        -6.0 * severity_wobble(group, level)
    };
    (center + offset).clamp(1.0, 99.0)
}

/// Reference surfaces: sinusoidally displaced spheres. Each family entry
/// picks its own bump amplitude, frequencies, and squash so the references
/// differ visibly while sharing a geometric character, the way one
/// database's contents do.
fn sample_shape(family: usize, rng: &mut ChaCha20Rng, n: usize) -> Vec<[f64; 3]> {
    let f = family % 10;
    let amp = 0.04 + 0.03 * f as f64;
    let freq_a = 2.0 + (f % 4) as f64;
    let freq_b = 3.0 + (f % 3) as f64;
    let squash = 0.75 + 0.05 * (f % 6) as f64;
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        let theta = 2.0 * PI * u;
        let z = 2.0 * v - 1.0;
        let phi = z.asin();
        let r = 1.0 + amp * (freq_a * theta).sin() * (freq_b * phi).cos();
        let ring = (1.0 - z * z).sqrt();
        pts.push([r * ring * theta.cos(), r * ring * theta.sin(), squash * r * z]);
    }
    pts
}

fn colorize(points: &[[f64; 3]], family: usize) -> Vec<[u8; 3]> {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in points {
        for d in 0..3 {
            min[d] = min[d].min(p[d]);
            max[d] = max[d].max(p[d]);
        }
    }
    let tint = [(family * 37 % 128) as f64, (family * 67 % 128) as f64, (family * 97 % 128) as f64];
    points
        .iter()
        .map(|p| {
            let mut c = [0u8; 3];
            for d in 0..3 {
                let span = (max[d] - min[d]).max(1e-12);
                let g = (p[d] - min[d]) / span;
                c[d] = (tint[d] + g * 127.0).clamp(0.0, 255.0) as u8;
            }
            c
        })
        .collect()
}

fn diagonal(points: &[[f64; 3]]) -> f64 {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in points {
        for d in 0..3 {
            min[d] = min[d].min(p[d]);
            max[d] = max[d].max(p[d]);
        }
    }
    (0..3).map(|d| (max[d] - min[d]).powi(2)).sum::<f64>().sqrt()
}

/// Generates the benchmark under `dir`: one binary PLY per distorted cloud,
/// a manifest CSV, and its metadata sidecar. Returns the manifest path.
pub fn generate_benchmark(dir: &Path, options: &SynthOptions) -> Result<PathBuf, ManifestError> {
    std::fs::create_dir_all(dir)?;
    let ply_dir = dir.join("clouds");
    std::fs::create_dir_all(&ply_dir)?;

    let mut entries = Vec::new();
    for group in 0..options.groups {
        let family = group % 10;
        let group_id = format!("{}{:02}", SHAPE_NAMES[family], group);
        let mut rng = ChaCha20Rng::seed_from_u64(options.seed ^ (group as u64).wrapping_mul(0x9e37_79b9));
        let reference = sample_shape(family, &mut rng, options.points);
        let colors = colorize(&reference, family);
        let diag = diagonal(&reference);

        for level in 1..=options.levels {
            let sigma =
                noise_fraction(level) * (1.0 + 0.35 * severity_wobble(group, level)) * diag;
            let mut noisy = reference.clone();
            if sigma > 0.0 {
                for p in &mut noisy {
                    for c in p.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *c += sigma * z;
                    }
                }
            }
            let cloud_name = format!("{group_id}_l{level}");
            let pc = PointCloud::new(&cloud_name, noisy, colors.clone())
                .expect("synthetic cloud is always valid");
            let ply_path = ply_dir.join(format!("{cloud_name}.ply"));
            write_ply(&pc, &ply_path, PlyFormat::BinaryLittleEndian)?;
            entries.push(ManifestEntry {
                cloud_name,
                ply_path,
                mos: synthetic_mos(level, group),
                group_id: group_id.clone(),
            });
        }
    }

    let manifest = Manifest::new(
        entries,
        MosRange::new(0.0, 100.0).expect("static range"),
        "synthetic-benchmark",
    )?;
    let manifest_path = dir.join("manifest.csv");
    save_manifest(&manifest, &manifest_path)?;
    Ok(manifest_path)
}
