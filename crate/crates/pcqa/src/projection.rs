//! Six-face orthographic cube projections of a point cloud.
//!
//! All faces share one cubic frame: side = largest axis extent times
//! (1 + 2 * margin), centered on the bounding-box center, so no face
//! stretches the cloud anisotropically. Points are depth-tested per pixel
//! (nearest to the viewpoint wins, ties go to the lower point index) and the
//! surviving points paint filled square splats. No anti-aliasing: identical
//! inputs produce bit-identical PNG bytes.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pointcloud::{bounding_box, PointCloud};

/// Rasterizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Pixels per image side.
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    /// Half-width of the square splat; a point paints (2r+1)^2 pixels.
    #[serde(default = "default_splat_radius")]
    pub splat_radius: u32,
    /// Color of unpainted pixels.
    #[serde(default = "default_background")]
    pub background: [u8; 3],
    /// Extra framing space as a fraction of the box extent, per side.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_resolution() -> u32 {
    1024
}

fn default_splat_radius() -> u32 {
    2
}

fn default_background() -> [u8; 3] {
    [255, 255, 255]
}

fn default_margin() -> f64 {
    0.05
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
            splat_radius: default_splat_radius(),
            background: default_background(),
            margin: default_margin(),
        }
    }
}

impl RenderConfig {
    /// Checks the documented invariants (resolution >= 64, margin >= 0).
    pub fn validate(&self) -> Result<(), String> {
        if self.resolution < 64 {
            return Err(format!(
                "resolution must be at least 64, got {}",
                self.resolution
            ));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(format!("margin must be finite and >= 0, got {}", self.margin));
        }
        Ok(())
    }
}

/// The six cube faces in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

/// Face order of [`ProjectionSet::images`]: [+X, -X, +Y, -Y, +Z, -Z].
pub const FACES: [Face; 6] = [
    Face::PosX,
    Face::NegX,
    Face::PosY,
    Face::NegY,
    Face::PosZ,
    Face::NegZ,
];

impl Face {
    /// Viewing axis; the viewer sits on the positive side of this vector and
    /// the point with the largest projection onto it wins the depth test.
    fn axis(self) -> [f64; 3] {
        match self {
            Face::PosX => [1.0, 0.0, 0.0],
            Face::NegX => [-1.0, 0.0, 0.0],
            Face::PosY => [0.0, 1.0, 0.0],
            Face::NegY => [0.0, -1.0, 0.0],
            Face::PosZ => [0.0, 0.0, 1.0],
            Face::NegZ => [0.0, 0.0, -1.0],
        }
    }

    /// Image-plane basis (right, up) forming a right-handed frame with the
    /// inward view direction.
    fn basis(self) -> ([f64; 3], [f64; 3]) {
        match self {
            Face::PosX => ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
            Face::NegX => ([0.0, -1.0, 0.0], [0.0, 0.0, 1.0]),
            Face::PosY => ([-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            Face::NegY => ([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            Face::PosZ => ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            Face::NegZ => ([-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
        }
    }

    /// 1-based index used in output file names.
    pub fn number(self) -> usize {
        FACES.iter().position(|f| *f == self).unwrap() + 1
    }
}

/// The six rendered cube-face images plus render metadata.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    images: Vec<RgbImage>,
    pub config: RenderConfig,
    pub source_name: String,
}

impl ProjectionSet {
    /// Always exactly six square images, ordered per [`FACES`].
    pub fn images(&self) -> &[RgbImage] {
        &self.images
    }

    pub fn image(&self, face: Face) -> &RgbImage {
        &self.images[face.number() - 1]
    }

    /// Writes `<source>_face<k>.png` for k in 1..=6 into `dir`, returning
    /// the paths in face order.
    pub fn save_pngs(&self, dir: impl AsRef<Path>) -> std::io::Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(6);
        for (i, img) in self.images.iter().enumerate() {
            let path = dir.join(format!("{}_face{}.png", self.source_name, i + 1));
            img.save_with_format(&path, ImageFormat::Png)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// PNG bytes for each face, for callers that avoid the filesystem.
    pub fn encode_pngs(&self) -> Vec<Vec<u8>> {
        self.images
            .iter()
            .map(|img| {
                let mut bytes = Vec::new();
                img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
                    .expect("in-memory png encoding cannot fail");
                bytes
            })
            .collect()
    }
}

/// File name of one face image, matching [`ProjectionSet::save_pngs`].
pub fn face_file_name(cloud_name: &str, face_number: usize) -> String {
    format!("{cloud_name}_face{face_number}.png")
}

#[inline]
fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn render_face(pc: &PointCloud, cfg: &RenderConfig, face: Face, center: [f64; 3], side: f64) -> RgbImage {
    let res = cfg.resolution.max(1) as usize;
    let axis = face.axis();
    let (right, up) = face.basis();
    let positions = pc.positions();
    let n = positions.len();

    // Center-pixel coordinates and view depth for every point.
    let mut px = vec![0u32; n];
    let mut py = vec![0u32; n];
    let mut depth = vec![0.0f64; n];
    for (i, p) in positions.iter().enumerate() {
        let rel = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
        let (uf, vf) = if side > 0.0 {
            (
                dot(&rel, &right) / side * res as f64 + res as f64 / 2.0,
                dot(&rel, &up) / side * res as f64 + res as f64 / 2.0,
            )
        } else {
            // Zero-extent cloud: everything lands on the image center.
            (res as f64 / 2.0, res as f64 / 2.0)
        };
        let x = (uf.floor() as i64).clamp(0, res as i64 - 1) as u32;
        let y_up = (vf.floor() as i64).clamp(0, res as i64 - 1) as u32;
        px[i] = x;
        py[i] = res as u32 - 1 - y_up;
        depth[i] = dot(p, &axis);
    }

    // Pass 1: depth test at each point's center pixel; the nearest point
    // wins, ties keep the lower index.
    const NO_POINT: u32 = u32::MAX;
    let mut win_depth = vec![f64::NEG_INFINITY; res * res];
    let mut win_idx = vec![NO_POINT; res * res];
    for i in 0..n {
        let pix = py[i] as usize * res + px[i] as usize;
        if depth[i] > win_depth[pix] {
            win_depth[pix] = depth[i];
            win_idx[pix] = i as u32;
        }
    }

    // Pass 2: surviving points paint square splats, again depth-tested so
    // overlapping splats resolve deterministically.
    let r = cfg.splat_radius as i64;
    let mut splat_depth = vec![f64::NEG_INFINITY; res * res];
    let mut splat_idx = vec![NO_POINT; res * res];
    for i in 0..n {
        let center_pix = py[i] as usize * res + px[i] as usize;
        if win_idx[center_pix] != i as u32 {
            continue;
        }
        let d = depth[i];
        for dy in -r..=r {
            let y = py[i] as i64 + dy;
            if y < 0 || y >= res as i64 {
                continue;
            }
            for dx in -r..=r {
                let x = px[i] as i64 + dx;
                if x < 0 || x >= res as i64 {
                    continue;
                }
                let pix = y as usize * res + x as usize;
                if d > splat_depth[pix]
                    || (d == splat_depth[pix] && (i as u32) < splat_idx[pix])
                {
                    splat_depth[pix] = d;
                    splat_idx[pix] = i as u32;
                }
            }
        }
    }

    let colors = pc.colors();
    let bg = Rgb(cfg.background);
    let mut img = RgbImage::from_pixel(res as u32, res as u32, bg);
    for y in 0..res {
        for x in 0..res {
            let idx = splat_idx[y * res + x];
            if idx != NO_POINT {
                img.put_pixel(x as u32, y as u32, Rgb(colors[idx as usize]));
            }
        }
    }
    img
}

/// Renders the six orthographic cube-face projections.
pub fn render_cube_projections(pc: &PointCloud, cfg: &RenderConfig) -> ProjectionSet {
    let bb = bounding_box(pc);
    let center = bb.center();
    let extent = bb.extent();
    let max_extent = extent[0].max(extent[1]).max(extent[2]);
    let side = max_extent * (1.0 + 2.0 * cfg.margin);

    let images: Vec<RgbImage> = FACES
        .par_iter()
        .map(|face| render_face(pc, cfg, *face, center, side))
        .collect();

    ProjectionSet {
        images,
        config: cfg.clone(),
        source_name: pc.name().to_string(),
    }
}

/// Pads a raster to a centered square with `background`, then resamples it to
/// `target x target` with bilinear interpolation. Square inputs skip the
/// padding step; a square input already at `target` is returned unchanged.
#[allow(clippy::needless_range_loop)]
pub fn pad_and_resize(image: &RgbImage, target: u32, background: [u8; 3]) -> RgbImage {
    assert!(target >= 1 && image.width() >= 1 && image.height() >= 1);
    let (w, h) = image.dimensions();

    let square: RgbImage = if w == h {
        if w == target {
            return image.clone();
        }
        image.clone()
    } else {
        let side = w.max(h);
        let left = (side - w) / 2;
        let top = (side - h) / 2;
        let mut canvas = RgbImage::from_pixel(side, side, Rgb(background));
        for (x, y, pixel) in image.enumerate_pixels() {
            canvas.put_pixel(x + left, y + top, *pixel);
        }
        canvas
    };

    let side = square.width();
    if side == target {
        return square;
    }

    let mut out = RgbImage::new(target, target);
    let scale = side as f64 / target as f64;
    let max_src = (side - 1) as f64;
    for dy in 0..target {
        let sy = ((dy as f64 + 0.5) * scale - 0.5).clamp(0.0, max_src);
        let y0 = sy.floor() as u32;
        let y1 = (y0 + 1).min(side - 1);
        let fy = sy - y0 as f64;
        for dx in 0..target {
            let sx = ((dx as f64 + 0.5) * scale - 0.5).clamp(0.0, max_src);
            let x0 = sx.floor() as u32;
            let x1 = (x0 + 1).min(side - 1);
            let fx = sx - x0 as f64;
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                let c00 = square.get_pixel(x0, y0)[c] as f64;
                let c10 = square.get_pixel(x1, y0)[c] as f64;
                let c01 = square.get_pixel(x0, y1)[c] as f64;
                let c11 = square.get_pixel(x1, y1)[c] as f64;
                let v = (1.0 - fy) * ((1.0 - fx) * c00 + fx * c10)
                    + fy * ((1.0 - fx) * c01 + fx * c11);
                rgb[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(dx, dy, Rgb(rgb));
        }
    }
    out
}
