//! Gray-level co-occurrence texture statistics and covariance confidence
//! ellipses for comparing pattern datasets.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::PatternImage;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlcmSpec {
    /// Gray levels after uniform quantization of `[0, 255]`.
    pub levels: usize,
    /// Pixel displacements `(dx, dy)`.
    pub offsets: Vec<(i32, i32)>,
    pub symmetric: bool,
    pub normalized: bool,
}

impl Default for GlcmSpec {
    fn default() -> Self {
        GlcmSpec { levels: 16, offsets: vec![(1, 0), (0, 1)], symmetric: true, normalized: true }
    }
}

impl GlcmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 || self.levels > 256 {
            return Err(Error::InvalidParam(format!("GLCM levels must be in 2..=256, got {}", self.levels)));
        }
        if self.offsets.is_empty() || self.offsets.contains(&(0, 0)) {
            return Err(Error::InvalidParam("GLCM offsets must be non-empty and non-zero".into()));
        }
        Ok(())
    }

    pub fn quantize(&self, v: u8) -> usize {
        v as usize * self.levels / 256
    }
}

/// Square `levels x levels` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub levels: usize,
    pub data: Vec<f64>,
}

impl Glcm {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.levels + j]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// One co-occurrence matrix per offset.
pub fn glcm(image: &PatternImage, spec: &GlcmSpec) -> Result<Vec<Glcm>> {
    spec.validate()?;
    let (w, h) = (image.width() as i64, image.height() as i64);
    let l = spec.levels;
    let q: Vec<usize> = image.pixels().iter().map(|&v| spec.quantize(v)).collect();
    spec.offsets
        .iter()
        .map(|&(dx, dy)| {
            if dx.unsigned_abs() as i64 >= w || dy.unsigned_abs() as i64 >= h {
                return Err(Error::ImageTooSmall { width: w as usize, height: h as usize, dx, dy });
            }
            let mut m = vec![0.0; l * l];
            let (dx, dy) = (dx as i64, dy as i64);
            for y in 0.max(-dy)..h.min(h - dy) {
                for x in 0.max(-dx)..w.min(w - dx) {
                    let a = q[(y * w + x) as usize];
                    let b = q[((y + dy) * w + x + dx) as usize];
                    m[a * l + b] += 1.0;
                }
            }
            if spec.symmetric {
                for i in 0..l {
                    for j in i..l {
                        let s = m[i * l + j] + m[j * l + i];
                        m[i * l + j] = s;
                        m[j * l + i] = s;
                    }
                }
            }
            if spec.normalized {
                let total: f64 = m.iter().sum();
                if total > 0.0 {
                    m.iter_mut().for_each(|v| *v /= total);
                }
            }
            Ok(Glcm { levels: l, data: m })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlcmFeatures {
    pub contrast: f64,
    pub correlation: f64,
    pub energy: f64,
    pub homogeneity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Contrast,
    Correlation,
    Energy,
    Homogeneity,
}

impl GlcmFeatures {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::Contrast => self.contrast,
            Feature::Correlation => self.correlation,
            Feature::Energy => self.energy,
            Feature::Homogeneity => self.homogeneity,
        }
    }
}

/// Haralick contrast, correlation, energy (angular second moment) and
/// homogeneity, averaged over the given normalized matrices.
pub fn glcm_features(mats: &[Glcm]) -> GlcmFeatures {
    let mut acc = GlcmFeatures { contrast: 0.0, correlation: 0.0, energy: 0.0, homogeneity: 0.0 };
    for m in mats {
        let l = m.levels;
        let (mut mu_i, mut mu_j) = (0.0, 0.0);
        for i in 0..l {
            for j in 0..l {
                let p = m.at(i, j);
                mu_i += i as f64 * p;
                mu_j += j as f64 * p;
            }
        }
        let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
        for i in 0..l {
            for j in 0..l {
                let p = m.at(i, j);
                let (di, dj) = (i as f64 - mu_i, j as f64 - mu_j);
                let d = i as f64 - j as f64;
                acc.contrast += p * d * d;
                acc.energy += p * p;
                acc.homogeneity += p / (1.0 + d * d);
                var_i += p * di * di;
                var_j += p * dj * dj;
                cov += p * di * dj;
            }
        }
        let denom = (var_i * var_j).sqrt();
        if denom > 1e-15 {
            acc.correlation += (cov / denom).clamp(-1.0, 1.0);
        } else {
            log::debug!("GLCM with zero variance; correlation taken as 0");
        }
    }
    let n = mats.len().max(1) as f64;
    GlcmFeatures { contrast: acc.contrast / n, correlation: acc.correlation / n, energy: acc.energy / n, homogeneity: acc.homogeneity / n }
}

pub fn image_features(image: &PatternImage, spec: &GlcmSpec) -> Result<GlcmFeatures> {
    Ok(glcm_features(&glcm(image, spec)?))
}

/// Quantile of the chi-square distribution with two degrees of freedom.
pub fn chi2_2dof_quantile(level: f64) -> f64 {
    -2.0 * (1.0 - level).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEllipse {
    pub center: [f64; 2],
    /// Major then minor semi-axis.
    pub semi_axes: [f64; 2],
    /// Direction of the major axis, radians in `[0, pi)`.
    pub angle: f64,
    pub level: f64,
    /// Sample covariance `[[sxx, sxy], [sxy, syy]]`.
    pub covariance: [[f64; 2]; 2],
}

impl ConfidenceEllipse {
    /// Squared Mahalanobis distance of `p` from the center.
    pub fn mahalanobis2(&self, p: [f64; 2]) -> f64 {
        let [[a, b], [_, c]] = self.covariance;
        let det = a * c - b * b;
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.mahalanobis2(p) <= chi2_2dof_quantile(self.level)
    }
}

pub fn mean_and_covariance(points: &[[f64; 2]]) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let d = (n - 1.0).max(1.0);
    ([mx, my], [[sxx / d, sxy / d], [sxy / d, syy / d]])
}

/// Confidence ellipse of a 2D point cloud at `level`.
pub fn confidence_ellipse(points: &[[f64; 2]], level: f64) -> Result<ConfidenceEllipse> {
    if points.len() < 3 {
        return Err(Error::DegenerateCovariance(format!("need at least 3 points, got {}", points.len())));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParam(format!("confidence level must be in (0, 1), got {level}")));
    }
    let (center, cov) = mean_and_covariance(points);
    let [[a, b], [_, c]] = cov;
    let half_tr = (a + c) / 2.0;
    let disc = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    let (l1, l2) = (half_tr + disc, half_tr - disc);
    if l1.is_nan() || l1 <= 0.0 || l2 <= l1 * 1e-12 {
        return Err(Error::DegenerateCovariance(format!("eigenvalues {l1:.3e}, {l2:.3e}")));
    }
    let angle = (0.5 * (2.0 * b).atan2(a - c)).rem_euclid(std::f64::consts::PI);
    let k = chi2_2dof_quantile(level);
    Ok(ConfidenceEllipse { center, semi_axes: [(k * l1).sqrt(), (k * l2).sqrt()], angle, level, covariance: cov })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub glcm: GlcmSpec,
    pub features: [Feature; 2],
    pub level: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { glcm: GlcmSpec::default(), features: [Feature::Contrast, Feature::Correlation], level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirStats {
    pub path: PathBuf,
    pub n: usize,
    pub skipped: usize,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub ellipse: Option<ConfidenceEllipse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub a_in_b: f64,
    pub b_in_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub spec: StatsConfig,
    pub dirs: Vec<DirStats>,
    pub overlap: Overlap,
    /// Metrics that need external networks and are not computed here.
    pub not_computed: Vec<String>,
}

/// PNG files under `dir`, sorted by path.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
    }
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .map(|e| e.into_path())
        .collect();
    files.sort();
    Ok(files)
}

/// Feature points for each readable image; the second value counts skipped files.
pub fn feature_cloud(files: &[PathBuf], config: &StatsConfig) -> (Vec<[f64; 2]>, usize) {
    let results: Vec<Option<[f64; 2]>> = files
        .par_iter()
        .map(|f| match PatternImage::load(f).and_then(|img| image_features(&img, &config.glcm)) {
            Ok(feat) => Some([feat.get(config.features[0]), feat.get(config.features[1])]),
            Err(e) => {
                log::warn!("skipping {}: {e}", f.display());
                None
            }
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    (results.into_iter().flatten().collect(), skipped)
}

fn fraction_inside(points: &[[f64; 2]], ellipse: Option<&ConfidenceEllipse>) -> f64 {
    match ellipse {
        Some(e) if !points.is_empty() => points.iter().filter(|p| e.contains(**p)).count() as f64 / points.len() as f64,
        _ => 0.0,
    }
}

fn dir_stats(path: &Path, points: &[[f64; 2]], skipped: usize, level: f64) -> DirStats {
    let (mean, cov) = if points.is_empty() { ([0.0; 2], [[0.0; 2]; 2]) } else { mean_and_covariance(points) };
    let ellipse = match confidence_ellipse(points, level) {
        Ok(e) => Some(e),
        Err(e) => {
            log::warn!("{}: no confidence ellipse ({e})", path.display());
            None
        }
    };
    DirStats { path: path.to_path_buf(), n: points.len(), skipped, mean, cov, ellipse }
}

/// Compares two sets of feature points.
pub fn compare_clouds(a: (&Path, &[[f64; 2]], usize), b: (&Path, &[[f64; 2]], usize), config: &StatsConfig) -> StatsReport {
    let da = dir_stats(a.0, a.1, a.2, config.level);
    let db = dir_stats(b.0, b.1, b.2, config.level);
    let overlap = Overlap { a_in_b: fraction_inside(a.1, db.ellipse.as_ref()), b_in_a: fraction_inside(b.1, da.ellipse.as_ref()) };
    StatsReport { spec: config.clone(), dirs: vec![da, db], overlap, not_computed: vec!["FID".into(), "Wang17".into()] }
}

/// Feature clouds, ellipses and mutual containment for two PNG directories.
pub fn directory_stats(dir_a: &Path, dir_b: &Path, config: &StatsConfig) -> Result<StatsReport> {
    config.glcm.validate()?;
    let (fa, fb) = (list_pngs(dir_a)?, list_pngs(dir_b)?);
    for (d, f) in [(dir_a, &fa), (dir_b, &fb)] {
        if f.len() < 3 {
            return Err(Error::InvalidParam(format!("{} holds {} PNG files; at least 3 are needed", d.display(), f.len())));
        }
    }
    let (pa, sa) = feature_cloud(&fa, config);
    let (pb, sb) = feature_cloud(&fb, config);
    Ok(compare_clouds((dir_a, &pa, sa), (dir_b, &pb, sb), config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    // Gray 0 and 255 quantize to levels 0 and L-1.
    fn checkerboard() -> PatternImage {
        PatternImage::from_pixels(2, 2, vec![0, 255, 255, 0]).unwrap()
    }

    #[test]
    fn constant_image_features() {
        let img = PatternImage::filled(16, 16, 77);
        let mats = glcm(&img, &GlcmSpec::default()).unwrap();
        for m in &mats {
            assert_eq!(m.data.iter().filter(|v| **v != 0.0).count(), 1);
            assert_eq!(m.at(GlcmSpec::default().quantize(77), GlcmSpec::default().quantize(77)), 1.0);
        }
        let f = glcm_features(&mats);
        assert_eq!((f.contrast, f.energy, f.homogeneity, f.correlation), (0.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn checkerboard_matches_hand_enumeration() {
        let spec = GlcmSpec { offsets: vec![(1, 0)], ..Default::default() };
        let l = spec.levels;
        let m = &glcm(&checkerboard(), &spec).unwrap()[0];
        // Pairs along rows: (0, L-1) and (L-1, 0); symmetrized -> 2 each of 4.
        assert_eq!(m.at(0, l - 1), 0.5);
        assert_eq!(m.at(l - 1, 0), 0.5);
        assert_eq!(m.sum(), 1.0);
        let f = glcm_features(std::slice::from_ref(m));
        let lm1 = (l - 1) as f64;
        assert_eq!(f.contrast, lm1 * lm1);
        assert_eq!(f.energy, 0.5);
        assert!((f.homogeneity - 1.0 / (1.0 + lm1 * lm1)).abs() < 1e-15);
        assert!((f.correlation + 1.0).abs() < 1e-12);
    }

    fn random_image(seed: u64, w: usize, h: usize) -> PatternImage {
        let mut rng = stream(seed, 0, "img", 0);
        PatternImage::from_pixels(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn normalization_symmetry_and_transpose() {
        for seed in 0..10 {
            let img = random_image(seed, 23, 17);
            let spec = GlcmSpec { offsets: vec![(1, 0), (0, 1), (2, -1)], ..Default::default() };
            for m in glcm(&img, &spec).unwrap() {
                assert!((m.sum() - 1.0).abs() < 1e-12);
                for i in 0..m.levels {
                    for j in 0..m.levels {
                        assert_eq!(m.at(i, j), m.at(j, i));
                    }
                }
            }
            let t = img.transpose();
            let s1 = GlcmSpec { offsets: vec![(2, 1)], symmetric: false, ..Default::default() };
            let s2 = GlcmSpec { offsets: vec![(1, 2)], symmetric: false, ..Default::default() };
            assert_eq!(glcm(&t, &s1).unwrap(), glcm(&img, &s2).unwrap());
            let f = image_features(&img, &GlcmSpec::default()).unwrap();
            assert!(f.energy > 0.0 && f.energy <= 1.0);
            assert!(f.homogeneity > 0.0 && f.homogeneity <= 1.0);
            assert!(f.contrast >= 0.0 && (-1.0..=1.0).contains(&f.correlation));
        }
    }

    #[test]
    fn inversion_keeps_contrast_and_homogeneity() {
        let ramp = PatternImage::from_pixels(64, 4, (0..256).map(|i| ((i * 7) % 256) as u8).collect()).unwrap();
        let inverted = PatternImage::from_pixels(64, 4, ramp.pixels().iter().map(|v| 255 - v).collect()).unwrap();
        let (a, b) = (image_features(&ramp, &GlcmSpec::default()).unwrap(), image_features(&inverted, &GlcmSpec::default()).unwrap());
        assert!((a.contrast - b.contrast).abs() < 1e-12);
        assert!((a.homogeneity - b.homogeneity).abs() < 1e-12);
    }

    #[test]
    fn offset_larger_than_image_is_an_error() {
        let spec = GlcmSpec { offsets: vec![(4, 0)], ..Default::default() };
        assert!(matches!(glcm(&PatternImage::blank(4, 4), &spec), Err(Error::ImageTooSmall { .. })));
    }

    fn gaussian_cloud(seed: u64, n: usize, sx: f64, sy: f64) -> Vec<[f64; 2]> {
        let mut rng = stream(seed, 0, "cloud", 0);
        (0..n)
            .map(|_| {
                let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                [a * sx, b * sy]
            })
            .collect()
    }

    /// Eigenvalues of a symmetric 2x2 matrix by Jacobi rotation.
    fn jacobi_eigen(m: [[f64; 2]; 2]) -> (f64, f64, f64) {
        let [[a, b], [_, c]] = m;
        let theta = if b == 0.0 { 0.0 } else { 0.5 * (2.0 * b).atan2(a - c) };
        let (s, co) = theta.sin_cos();
        let l1 = co * co * a + 2.0 * s * co * b + s * s * c;
        let l2 = s * s * a - 2.0 * s * co * b + co * co * c;
        (l1, l2, theta)
    }

    #[test]
    fn axis_aligned_cloud_matches_eigen_oracle() {
        let mut rng = stream(1, 0, "circle", 0);
        let pts: Vec<[f64; 2]> = (0..400)
            .map(|k| {
                let t = k as f64 / 400.0 * std::f64::consts::TAU;
                [2.0 * t.cos() + rng.random_range(-0.1..0.1), t.sin() + rng.random_range(-0.1..0.1)]
            })
            .collect();
        let e = confidence_ellipse(&pts, 0.95).unwrap();
        let (l1, l2, _) = jacobi_eigen(e.covariance);
        let (big, small) = (l1.max(l2), l1.min(l2));
        assert!((e.semi_axes[0] / (5.991 * big).sqrt() - 1.0).abs() < 0.1);
        assert!((e.semi_axes[1] / (5.991 * small).sqrt() - 1.0).abs() < 0.1);
        let near_axis = e.angle.min((e.angle - std::f64::consts::FRAC_PI_2).abs()).min(std::f64::consts::PI - e.angle);
        assert!(near_axis < 0.1, "angle {}", e.angle);
        assert!((chi2_2dof_quantile(0.95) - 5.991).abs() < 1e-3);
    }

    #[test]
    fn isotropic_cloud_is_round() {
        let e = confidence_ellipse(&gaussian_cloud(2, 10_000, 1.0, 1.0), 0.95).unwrap();
        let ratio = e.semi_axes[0] / e.semi_axes[1];
        assert!((0.9..=1.1).contains(&ratio));
    }

    #[test]
    fn translation_and_rotation_equivariance() {
        let pts = gaussian_cloud(3, 500, 3.0, 1.0);
        let e = confidence_ellipse(&pts, 0.95).unwrap();
        let moved: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + 5.5, p[1] - 2.25]).collect();
        let m = confidence_ellipse(&moved, 0.95).unwrap();
        assert!((m.center[0] - e.center[0] - 5.5).abs() < 1e-9 && (m.center[1] - e.center[1] + 2.25).abs() < 1e-9);
        assert!((m.semi_axes[0] - e.semi_axes[0]).abs() < 1e-9 && (m.angle - e.angle).abs() < 1e-9);

        let phi: f64 = 0.7;
        let (s, c) = phi.sin_cos();
        let turned: Vec<[f64; 2]> = pts.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
        let r = confidence_ellipse(&turned, 0.95).unwrap();
        let d = (r.angle - e.angle - phi).rem_euclid(std::f64::consts::PI);
        assert!(d.min(std::f64::consts::PI - d) < 1e-9);
        assert!((r.semi_axes[0] - e.semi_axes[0]).abs() < 1e-9 && (r.semi_axes[1] - e.semi_axes[1]).abs() < 1e-9);
    }

    #[test]
    fn collinear_points_are_rejected() {
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(confidence_ellipse(&pts, 0.95), Err(Error::DegenerateCovariance(_))));
        assert!(confidence_ellipse(&pts[..2], 0.95).is_err());
    }

    #[test]
    fn self_comparison_contains_about_level() {
        let pts = gaussian_cloud(4, 2000, 2.0, 0.5);
        let report = compare_clouds((Path::new("a"), &pts, 0), (Path::new("a"), &pts, 0), &StatsConfig::default());
        assert!((report.overlap.a_in_b - 0.95).abs() < 0.02);
        assert_eq!(report.overlap.a_in_b, report.overlap.b_in_a);
    }
}
