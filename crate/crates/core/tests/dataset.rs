use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use palmvein_core::{build_dataset, GenerationConfig};

fn pngs(dir: &Path) -> BTreeSet<PathBuf> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .map(|e| e.path().strip_prefix(dir).unwrap().to_path_buf())
        .collect()
}

#[test]
fn identities_do_not_depend_on_each_other() {
    let tmp = tempfile::tempdir().unwrap();
    let small =
        GenerationConfig { seed: 11, n_identities: 2, samples_per_identity: 3, output_dir: tmp.path().join("small"), ..Default::default() };
    let large = GenerationConfig { n_identities: 4, output_dir: tmp.path().join("large"), ..small.clone() };
    build_dataset(&small).unwrap();
    build_dataset(&large).unwrap();
    for rel in pngs(&small.output_dir) {
        assert_eq!(
            std::fs::read(small.output_dir.join(&rel)).unwrap(),
            std::fs::read(large.output_dir.join(&rel)).unwrap(),
            "{}",
            rel.display()
        );
    }
}

#[test]
fn manifest_matches_files_on_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let config =
        GenerationConfig { seed: 12, n_identities: 4, samples_per_identity: 2, output_dir: tmp.path().to_path_buf(), ..Default::default() };
    let report = build_dataset(&config).unwrap();
    let listed: BTreeSet<PathBuf> = report.manifest.records.iter().map(|r| PathBuf::from(&r.path)).collect();
    assert_eq!(listed.len(), report.manifest.records.len());
    assert_eq!(listed, pngs(tmp.path()));
    let pairs: BTreeSet<(u64, usize)> = report.manifest.records.iter().map(|r| (r.identity_id, r.sample_index)).collect();
    assert_eq!(pairs.len(), 8);
}
