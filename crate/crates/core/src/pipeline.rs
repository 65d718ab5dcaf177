//! End-to-end dataset generation.
//!
//! One identity is one grown vascular tree. Every sample of an identity
//! renders that same tree under its own view, creases and augmentation.
//! All randomness comes from streams keyed by `(seed, identity, stage,
//! sample)`, so outputs do not depend on thread count or on which other
//! identities are built.

use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cco::{grow, GrowthParams};
use crate::geometry::DomainBox;
use crate::image::PatternImage;
use crate::render::{blend_creases, generate_creases, project_and_rasterize, CreaseParams, RasterSpec, ViewParams, ViewRanges};
use crate::rng::{self, StreamRng};
use crate::trajectory::{tree_to_polylines, TsmParams};
use crate::tree::{RadiusPolicy, VascularTree};
use crate::trunk::{default_templates, load_templates, sample_trunk, TrunkFamily, TrunkTemplate};
use crate::variation::{augment, sample_constrained_noise, write_noise, AugmentParams, NoiseSet, NoiseSpec};
use crate::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub seed: u64,
    pub n_identities: usize,
    pub samples_per_identity: usize,
    /// Relative frequency of trunk families A, B, C, D.
    pub family_weights: [f64; 4],
    /// Template file; the bundled templates are used when absent.
    pub templates: Option<PathBuf>,
    pub domain: DomainBox,
    pub radius: RadiusPolicy,
    pub growth: GrowthParams,
    pub trajectory: TsmParams,
    pub view: ViewRanges,
    pub raster: RasterSpec,
    pub creases: CreaseParams,
    pub augment: AugmentParams,
    pub noise: NoiseSpec,
    pub output_dir: PathBuf,
    pub emit_noise: bool,
    pub emit_debug_trees: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            seed: 0,
            n_identities: 4000,
            samples_per_identity: 7,
            family_weights: [1.0; 4],
            templates: None,
            domain: DomainBox::default(),
            radius: RadiusPolicy::default(),
            growth: GrowthParams::default(),
            trajectory: TsmParams::default(),
            view: ViewRanges::default(),
            raster: RasterSpec::default(),
            creases: CreaseParams::default(),
            augment: AugmentParams::default(),
            noise: NoiseSpec::default(),
            output_dir: PathBuf::from("dataset"),
            emit_noise: false,
            emit_debug_trees: false,
        }
    }
}

impl GenerationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("config", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_identities < 1 {
            return bad("n_identities must be at least 1".into());
        }
        if self.samples_per_identity < 1 {
            return bad("samples_per_identity must be at least 1".into());
        }
        if self.family_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.family_weights.iter().sum::<f64>() <= 0.0 {
            return bad(format!("family weights must be non-negative with a positive sum: {:?}", self.family_weights));
        }
        if self.raster.width == 0 || self.raster.height == 0 {
            return bad("raster must be non-empty".into());
        }
        self.domain.validate()?;
        self.radius.validate()?;
        self.growth.validate()?;
        self.trajectory.validate()?;
        self.view.validate()?;
        self.creases.validate(&self.raster)?;
        self.augment.validate()?;
        self.noise.validate()?;
        Ok(())
    }

    /// Templates named by the config, validated against its domain.
    pub fn load_templates(&self) -> Result<Vec<TrunkTemplate>> {
        let templates = match &self.templates {
            Some(p) => load_templates(p, &self.domain)?,
            None => default_templates(),
        };
        for (fam, w) in TrunkFamily::ALL.iter().zip(self.family_weights) {
            if w > 0.0 && !templates.iter().any(|t| t.family == *fam) {
                return Err(Error::InvalidConfig(format!("family {fam} has weight {w} but no template")));
            }
        }
        templates.iter().try_for_each(|t| t.validate(&self.domain))?;
        Ok(templates)
    }
}

/// Seed reported in the manifest for a sample's augmentation stream.
pub fn augment_seed(seed: u64, identity: u64, sample: u64) -> u64 {
    let s = rng::stream_seed(seed, identity, "augment", sample);
    u64::from_le_bytes(s[..8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub index: usize,
    pub view: ViewParams,
    pub augment_seed: u64,
    pub image: PatternImage,
}

#[derive(Debug, Clone)]
pub struct IdentityOutput {
    pub identity_id: u64,
    pub family: TrunkFamily,
    pub template_id: String,
    pub tree: VascularTree,
    pub samples: Vec<SampleOutput>,
    pub noise: Option<NoiseSet>,
}

/// Samples a family and template, then a trunk, and grows the full tree.
pub fn grow_identity_tree(
    identity: u64,
    config: &GenerationConfig,
    templates: &[TrunkTemplate],
) -> Result<(TrunkFamily, String, VascularTree)> {
    let mut pick = rng::stream(config.seed, identity, "family", 0);
    let fam_dist = WeightedIndex::new(config.family_weights).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let family = TrunkFamily::ALL[fam_dist.sample(&mut pick)];
    let candidates: Vec<&TrunkTemplate> = templates.iter().filter(|t| t.family == family).collect();
    if candidates.is_empty() {
        return Err(Error::InvalidConfig(format!("no template for family {family}")));
    }
    let template = candidates[pick.random_range(0..candidates.len())];
    let trunk = sample_trunk(template, &config.domain, &config.radius, &mut rng::stream(config.seed, identity, "trunk", 0))?;
    let tree = grow(&trunk, &config.domain, &config.growth, &config.radius, &mut rng::stream(config.seed, identity, "growth", 0))?;
    Ok((family, template.id.clone(), tree))
}

/// Renders `config.samples_per_identity` views of `tree`: curve the
/// segments once, then per sample project, blend creases and augment.
pub fn render_samples(tree: &VascularTree, identity: u64, config: &GenerationConfig) -> Vec<SampleOutput> {
    let polys = tree_to_polylines(tree, &config.trajectory, &config.domain, &mut rng::stream(config.seed, identity, "trajectory", 0));
    (0..config.samples_per_identity)
        .map(|k| {
            let view = config.view.sample(&mut rng::stream(config.seed, identity, "view", k as u64));
            let pattern = project_and_rasterize(&polys, &view, &config.domain, &config.raster);
            let creases = generate_creases(&config.creases, &mut rng::stream(config.seed, identity, "crease", k as u64));
            let blended = blend_creases(&pattern, &creases);
            let aug_seed = augment_seed(config.seed, identity, k as u64);
            let image = augment(&blended, &config.augment, &mut StreamRng::seed_from_u64(aug_seed));
            SampleOutput { index: k, view, augment_seed: aug_seed, image }
        })
        .collect()
}

/// Generates every sample of one identity.
pub fn generate_identity(identity: u64, config: &GenerationConfig, templates: &[TrunkTemplate]) -> Result<IdentityOutput> {
    let (family, template_id, tree) = grow_identity_tree(identity, config, templates)?;
    let samples = render_samples(&tree, identity, config);
    let noise = config.emit_noise.then(|| {
        let spec = NoiseSpec { n_samples: config.samples_per_identity, ..config.noise };
        sample_constrained_noise(&spec, &mut rng::stream(config.seed, identity, "noise", 0))
    });
    Ok(IdentityOutput { identity_id: identity, family, template_id, tree, samples, noise })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub identity_id: u64,
    pub trunk_family: TrunkFamily,
    pub sample_index: usize,
    pub theta_z: f64,
    pub w_random: f64,
    pub augment_seed: u64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: GenerationConfig,
    pub records: Vec<ManifestRecord>,
    pub version: String,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// An identity that could not be generated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbortedIdentity {
    pub identity_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub manifest: DatasetManifest,
    pub aborted: Vec<AbortedIdentity>,
}

pub fn identity_dir_name(identity: u64) -> String {
    format!("{identity:05}")
}

pub fn sample_file_name(sample: usize) -> String {
    format!("{sample:02}.png")
}

fn write_identity(out: &Path, ident: &IdentityOutput) -> Result<Vec<ManifestRecord>> {
    let dir_name = identity_dir_name(ident.identity_id);
    let dir = out.join(&dir_name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut records = Vec::with_capacity(ident.samples.len());
    for s in &ident.samples {
        let file = sample_file_name(s.index);
        s.image.save_png(&dir.join(&file))?;
        records.push(ManifestRecord {
            identity_id: ident.identity_id,
            trunk_family: ident.family,
            sample_index: s.index,
            theta_z: s.view.theta_z,
            w_random: s.view.w_random,
            augment_seed: s.augment_seed,
            path: format!("{dir_name}/{file}"),
        });
    }
    Ok(records)
}

fn write_extras(out: &Path, ident: &IdentityOutput, config: &GenerationConfig) -> Result<()> {
    let name = identity_dir_name(ident.identity_id);
    if let Some(noise) = &ident.noise {
        let dir = out.join("noise");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let spec = NoiseSpec { n_samples: config.samples_per_identity, ..config.noise };
        write_noise(&dir.join(format!("{name}.pvnz")), &spec, noise)?;
    }
    if config.emit_debug_trees {
        let dir = out.join("trees");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        ident.tree.save_edge_list(&dir.join(format!("{name}.edges.txt")))?;
    }
    Ok(())
}

/// Builds the whole dataset under `config.output_dir`. The manifest is
/// written last, only when every file was written.
pub fn build_dataset(config: &GenerationConfig) -> Result<BuildReport> {
    config.validate()?;
    let templates = config.load_templates()?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    enum Outcome {
        Done(Vec<ManifestRecord>),
        Aborted(AbortedIdentity),
    }
    let results: Vec<Result<Outcome>> = (0..config.n_identities as u64)
        .into_par_iter()
        .map(|id| match generate_identity(id, config, &templates) {
            Ok(ident) => {
                let records = write_identity(out, &ident)?;
                write_extras(out, &ident, config)?;
                Ok(Outcome::Done(records))
            }
            Err(e) => {
                log::warn!("identity {id} aborted: {e}");
                Ok(Outcome::Aborted(AbortedIdentity { identity_id: id, reason: e.to_string() }))
            }
        })
        .collect();

    let total = results.len();
    let completed = results.iter().filter(|r| r.is_ok()).count();
    let mut records = Vec::with_capacity(config.n_identities * config.samples_per_identity);
    let mut aborted = Vec::new();
    for r in results {
        match r {
            Ok(Outcome::Done(rs)) => records.extend(rs),
            Ok(Outcome::Aborted(a)) => aborted.push(a),
            Err(e) => return Err(Error::PartialBuild { completed, total, source: Box::new(e) }),
        }
    }
    let manifest = DatasetManifest { config: config.clone(), records, version: TOOL_VERSION.to_string() };
    let path = out.join("manifest.json");
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    if !aborted.is_empty() {
        log::warn!("{} of {} identities aborted", aborted.len(), config.n_identities);
    }
    Ok(BuildReport { manifest, aborted })
}
