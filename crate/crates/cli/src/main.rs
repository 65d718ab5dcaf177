use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use palmvein_core::metrics::{directory_stats, StatsConfig};
use palmvein_core::pipeline::{build_dataset, grow_identity_tree, render_samples, sample_file_name, GenerationConfig};
use palmvein_core::variation::{sample_constrained_noise, write_noise, NoiseSpec};
use palmvein_core::{rng, Error, VascularTree};

/// Synthetic palm-vein pattern dataset generator.
#[derive(Debug, Parser)]
#[command(name = "palmvein", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a full dataset: images, manifest and optional extras.
    Build {
        #[command(flatten)]
        common: Common,
        /// Number of identities.
        #[arg(long)]
        ids: Option<usize>,
        /// Samples per identity.
        #[arg(long)]
        samples: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-identity noise files.
        #[arg(long)]
        emit_noise: bool,
        /// Also write per-identity tree edge lists.
        #[arg(long)]
        emit_trees: bool,
    },
    /// Grow one identity's tree and write it as an edge list.
    Tree {
        #[command(flatten)]
        common: Common,
        /// Identity whose tree is grown.
        #[arg(long, default_value_t = 0)]
        id: u64,
        /// Edge-list output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an edge-list tree into pattern images.
    Render {
        #[command(flatten)]
        common: Common,
        /// Edge-list file produced by `tree` or `build --emit-trees`.
        tree: PathBuf,
        /// Identity id keying the per-sample randomness.
        #[arg(long, default_value_t = 0)]
        id: u64,
        /// Number of images.
        #[arg(long)]
        samples: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a set of distance-constrained noise vectors.
    Noise {
        #[command(flatten)]
        common: Common,
        /// Identity id keying the draw.
        #[arg(long, default_value_t = 0)]
        id: u64,
        /// Number of vectors.
        #[arg(long)]
        samples: Option<usize>,
        /// Vector dimension.
        #[arg(long)]
        dim: Option<usize>,
        /// Distance of every vector to the anchor.
        #[arg(long)]
        l2: Option<f64>,
        /// Output `.pvnz` file; a `.json` sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// GLCM texture statistics of one directory, or of two compared.
    Stats {
        dir: PathBuf,
        /// Reference directory; defaults to `dir` itself.
        dir_b: Option<PathBuf>,
        /// Confidence level of the ellipses.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// JSON report file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<GenerationConfig, Error> {
        let mut config = match &self.config {
            Some(p) => GenerationConfig::load(p)?,
            None => GenerationConfig::default(),
        };
        if let Some(s) = self.seed {
            config.seed = s;
        }
        Ok(config)
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Build { common, ids, samples, out, emit_noise, emit_trees } => {
            let mut config = common.resolve()?;
            if let Some(n) = ids {
                config.n_identities = n;
            }
            if let Some(n) = samples {
                config.samples_per_identity = n;
            }
            if let Some(o) = out {
                config.output_dir = o;
            }
            config.emit_noise |= emit_noise;
            config.emit_debug_trees |= emit_trees;
            let report = build_dataset(&config)?;
            info!("wrote {} images to {}", report.manifest.records.len(), config.output_dir.display());
            for a in &report.aborted {
                warn!("identity {} skipped: {}", a.identity_id, a.reason);
            }
        }
        Command::Tree { common, id, out } => {
            let config = common.resolve()?;
            config.validate()?;
            let templates = config.load_templates()?;
            let (family, template, tree) = grow_identity_tree(id, &config, &templates)?;
            tree.save_edge_list(&out)?;
            info!("identity {id}: family {family} ({template}), {} segments", tree.segment_count());
        }
        Command::Render { common, tree, id, samples, out } => {
            let mut config = common.resolve()?;
            if let Some(n) = samples {
                config.samples_per_identity = n;
            }
            config.validate()?;
            let tree = VascularTree::load_edge_list(&tree)?;
            tree.validate(Some(&config.domain))?;
            create_dir(&out)?;
            for s in render_samples(&tree, id, &config) {
                s.image.save_png(&out.join(sample_file_name(s.index)))?;
            }
            info!("wrote {} images to {}", config.samples_per_identity, out.display());
        }
        Command::Noise { common, id, samples, dim, l2, out } => {
            let config = common.resolve()?;
            let spec = NoiseSpec {
                n_samples: samples.unwrap_or(config.noise.n_samples),
                dim: dim.unwrap_or(config.noise.dim),
                l2_dist: l2.unwrap_or(config.noise.l2_dist),
            };
            spec.validate()?;
            let set = sample_constrained_noise(&spec, &mut rng::stream(config.seed, id, "noise", 0));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            write_noise(&out, &spec, &set)?;
        }
        Command::Stats { dir, dir_b, level, out } => {
            let config = StatsConfig { level, ..StatsConfig::default() };
            let report = directory_stats(&dir, dir_b.as_deref().unwrap_or(&dir), &config)?;
            let mut json = serde_json::to_vec_pretty(&report)?;
            json.push(b'\n');
            std::fs::write(&out, json).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            info!("overlap a_in_b {:.3}, b_in_a {:.3}", report.overlap.a_in_b, report.overlap.b_in_a);
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}
