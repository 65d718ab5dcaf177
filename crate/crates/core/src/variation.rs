//! Intra-class variation: posture-like image augmentation and
//! distance-constrained latent noise.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::image::{PatternImage, BACKGROUND};
use crate::render::uniform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Isotropic scale factor range.
    pub scale: [f64; 2],
    /// In-plane rotation range, degrees, counter-clockwise as displayed.
    pub rotate: [f64; 2],
    /// Peak elastic displacement, px; the amplitude is drawn from `[0, distort_amplitude]`.
    pub distort_amplitude: f64,
    /// Gaussian sigma of the displacement field, px.
    pub distort_smoothing: f64,
    /// Per-edge crop range, px; the crop is resized back to full frame.
    pub crop_jitter: [f64; 2],
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams { scale: [0.95, 1.05], rotate: [-4.0, 4.0], distort_amplitude: 2.5, distort_smoothing: 8.0, crop_jitter: [0.0, 4.0] }
    }
}

impl AugmentParams {
    /// Parameters that leave the image unchanged.
    pub fn identity() -> Self {
        AugmentParams { scale: [1.0, 1.0], rotate: [0.0, 0.0], distort_amplitude: 0.0, distort_smoothing: 8.0, crop_jitter: [0.0, 0.0] }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        let ok = range_ok(self.scale)
            && self.scale[0] > 0.0
            && range_ok(self.rotate)
            && range_ok(self.crop_jitter)
            && self.crop_jitter[0] >= 0.0
            && self.distort_amplitude.is_finite()
            && self.distort_amplitude >= 0.0
            && self.distort_smoothing.is_finite()
            && self.distort_smoothing > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid augmentation parameters: {self:?}")))
        }
    }
}

/// A concrete draw of augmentation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentDraw {
    pub scale: f64,
    pub rotate_deg: f64,
    /// Backward displacement field (dx, dy) per output pixel of the distortion stage.
    pub displacement: Option<(Vec<f64>, Vec<f64>)>,
    /// Crop in px: left, top, right, bottom.
    pub crop: [f64; 4],
}

impl AugmentDraw {
    pub fn sample<R: Rng + ?Sized>(params: &AugmentParams, width: usize, height: usize, rng: &mut R) -> Self {
        let scale = uniform(rng, params.scale);
        let rotate_deg = uniform(rng, params.rotate);
        let amplitude = uniform(rng, [0.0, params.distort_amplitude]);
        let displacement = (amplitude > 0.0).then(|| elastic_field(width, height, amplitude, params.distort_smoothing, rng));
        let crop = [0; 4].map(|_: i32| uniform(rng, params.crop_jitter));
        AugmentDraw { scale, rotate_deg, displacement, crop }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with clamped borders.
fn blur(field: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * field[y * w + (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[(y as isize + k as isize - r).clamp(0, h as isize - 1) as usize * w + x])
                .sum();
        }
    }
    out
}

/// Smooth random displacement field whose largest vector has length `amplitude`.
fn elastic_field<R: Rng + ?Sized>(w: usize, h: usize, amplitude: f64, sigma: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let kernel = gaussian_kernel(sigma);
    let mut noise = || (0..w * h).map(|_| rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>();
    let (nx, ny) = (noise(), noise());
    let (mut dx, mut dy) = (blur(&nx, w, h, &kernel), blur(&ny, w, h, &kernel));
    let peak = dx.iter().zip(&dy).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
    if peak > 0.0 {
        let k = amplitude / peak;
        dx.iter_mut().chain(dy.iter_mut()).for_each(|v| *v *= k);
    }
    (dx, dy)
}

fn bilinear(img: &PatternImage, x: f64, y: f64) -> f64 {
    // Pixel centers sit at integer + 0.5; outside samples read as background.
    let (fx, fy) = (x - 0.5, y - 0.5);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - x0, fy - y0);
    let at = |xi: f64, yi: f64| {
        if xi < 0.0 || yi < 0.0 || xi >= img.width() as f64 || yi >= img.height() as f64 {
            BACKGROUND as f64
        } else {
            img.get(xi as usize, yi as usize) as f64
        }
    };
    let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1.0, y0) * tx;
    let bottom = at(x0, y0 + 1.0) * (1.0 - tx) + at(x0 + 1.0, y0 + 1.0) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Applies a drawn augmentation. The stages act in the order scale, rotate,
/// elastic distortion, crop-and-resize; they are composed into one backward
/// map so the source is resampled once.
pub fn apply_augment(image: &PatternImage, draw: &AugmentDraw) -> PatternImage {
    let (w, h) = (image.width(), image.height());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (s, c) = draw.rotate_deg.to_radians().sin_cos();
    let [left, top, right, bottom] = draw.crop;
    let sx = (w as f64 - left - right).max(1.0) / w as f64;
    let sy = (h as f64 - top - bottom).max(1.0) / h as f64;
    let mut out = PatternImage::blank(w, h);
    for v in 0..h {
        for u in 0..w {
            // Crop-and-resize, inverted.
            let mut x = left + (u as f64 + 0.5) * sx;
            let mut y = top + (v as f64 + 0.5) * sy;
            // Elastic distortion, inverted as a backward warp.
            if let Some((dx, dy)) = &draw.displacement {
                let xi = (x.floor() as isize).clamp(0, w as isize - 1) as usize;
                let yi = (y.floor() as isize).clamp(0, h as isize - 1) as usize;
                x += dx[yi * w + xi];
                y += dy[yi * w + xi];
            }
            // Rotation (counter-clockwise on screen, y pointing down), inverted.
            let (ex, ey) = (x - cx, y - cy);
            let (rx, ry) = (c * ex - s * ey, s * ex + c * ey);
            // Scale about the center, inverted.
            let (px, py) = (cx + rx / draw.scale, cy + ry / draw.scale);
            out.set(u, v, bilinear(image, px, py).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Draws augmentation parameters from `rng` and applies them.
pub fn augment<R: Rng + ?Sized>(image: &PatternImage, params: &AugmentParams, rng: &mut R) -> PatternImage {
    let draw = AugmentDraw::sample(params, image.width(), image.height(), rng);
    apply_augment(image, &draw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub dim: usize,
    pub n_samples: usize,
    /// Exact l2 distance of every sample from the shared anchor.
    pub l2_dist: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { dim: 512, n_samples: 7, l2_dist: 0.5 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim >= 1 && self.l2_dist.is_finite() && self.l2_dist >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid noise spec: {self:?}")))
        }
    }
}

/// An anchor and the samples placed on the sphere of radius `l2_dist` around it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSet {
    pub anchor: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

/// Draws a standard-normal anchor and `n_samples` points at exactly
/// `l2_dist` from it in uniformly random directions.
pub fn sample_constrained_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> NoiseSet {
    let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };
    let anchor = gauss(spec.dim);
    let samples = (0..spec.n_samples)
        .map(|_| {
            let dir = loop {
                let g = gauss(spec.dim);
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break g.into_iter().map(|v| v / n).collect::<Vec<_>>();
                }
            };
            anchor.iter().zip(dir).map(|(a, d)| a + spec.l2_dist * d).collect()
        })
        .collect();
    NoiseSet { anchor, samples }
}

pub const NOISE_MAGIC: &[u8; 4] = b"PVNZ";
pub const NOISE_FORMAT_VERSION: u32 = 1;

/// Serializes samples: 16-byte header (`PVNZ`, u32 dim, u32 count, u32
/// format version) then `count * dim` little-endian f32 values.
pub fn encode_noise(set: &NoiseSet) -> Vec<u8> {
    let dim = set.anchor.len();
    let mut out = Vec::with_capacity(16 + 4 * dim * set.samples.len());
    out.extend_from_slice(NOISE_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(set.samples.len() as u32).to_le_bytes());
    out.extend_from_slice(&NOISE_FORMAT_VERSION.to_le_bytes());
    for s in &set.samples {
        for v in s {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Parses a noise file back into `(dim, samples)`.
pub fn decode_noise(bytes: &[u8]) -> Result<(usize, Vec<Vec<f32>>)> {
    let bad = |m: &str| Error::parse("noise file", m);
    if bytes.len() < 16 || &bytes[0..4] != NOISE_MAGIC {
        return Err(bad("missing PVNZ header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (dim, count) = (word(4), word(8));
    if bytes.len() != 16 + 4 * dim * count {
        return Err(bad("length does not match header"));
    }
    let floats: Vec<f32> = bytes[16..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((dim, floats.chunks(dim.max(1)).map(<[f32]>::to_vec).collect()))
}

#[derive(Debug, Serialize)]
struct NoiseSidecar<'a> {
    spec: &'a NoiseSpec,
    format: &'static str,
    header_bytes: usize,
    anchor: &'a [f64],
}

/// Writes `path` (binary samples) and `path` with a `.json` extension (spec and anchor).
pub fn write_noise(path: &Path, spec: &NoiseSpec, set: &NoiseSet) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_noise(set)).map_err(|e| Error::io(path, e))?;
    let side = path.with_extension("json");
    let sidecar = NoiseSidecar { spec, format: "PVNZ v1, little-endian f32", header_bytes: 16, anchor: &set.anchor };
    std::fs::write(&side, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))
}
