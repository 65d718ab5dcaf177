//! Synthetic palm-vein pattern generation.
//!
//! The pipeline grows a 3D vascular tree inside a palm-shaped box (trunk
//! template, then constrained constructive optimization), bends each segment
//! into a random-walk trajectory, projects it to a depth-shaded grayscale
//! image, blends palm creases and applies posture augmentation. Texture
//! statistics over GLCM features compare generated sets with real ones.

pub mod cco;
pub mod error;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod pipeline;
mod raster;
pub mod render;
pub mod rng;
pub mod trajectory;
pub mod tree;
pub mod trunk;
pub mod variation;

pub use cco::{grow, insert_point, GrowthParams};
pub use error::{Error, Result};
pub use geometry::{DomainBox, Point3};
pub use image::PatternImage;
pub use metrics::{directory_stats, glcm, image_features, GlcmFeatures, GlcmSpec, StatsConfig, StatsReport};
pub use pipeline::{build_dataset, generate_identity, DatasetManifest, GenerationConfig, ManifestRecord};
pub use render::{project_and_rasterize, RasterSpec, ViewParams};
pub use trajectory::{simulate_trajectory, tree_to_polylines, Polyline3, TsmParams};
pub use tree::{NodeId, RadiusPolicy, SegmentId, VascularTree};
pub use trunk::{default_templates, sample_trunk, TrunkFamily, TrunkTemplate};
pub use variation::{augment, sample_constrained_noise, AugmentParams, NoiseSpec};
