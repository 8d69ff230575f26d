//! Output-directory manifest: checksums of every artifact a stage produced.
//!
//! Every stage rewrites the manifest after touching the directory, so two
//! runs of the same config and seed can be compared by comparing manifests.
//! The manifest never lists itself.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub master_seed: u64,
    /// Artifacts present in the output directory, sorted by name.
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Artifact names the pipeline owns. Anything else in the directory is left
/// out of the manifest.
fn is_artifact(name: &str) -> bool {
    matches!(
        name,
        "transmissions.csv" | "deliveries.csv" | "merged.csv" | "pairs.json" | "report.json"
            | "series.csv"
    ) || (name.starts_with("sniffer_") && name.ends_with(".csv"))
        || (name.starts_with("obs_") && (name.ends_with(".csv") || name.ends_with(".json")))
        || (name.starts_with("model_") && name.ends_with(".json"))
}

/// Scan the output directory and write `manifest.json`.
pub fn write_manifest(
    out_dir: &Path,
    config_sha256: &str,
    master_seed: u64,
) -> Result<Manifest, std::io::Error> {
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(out_dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        if let Some(name) = entry.file_name().to_str() {
            if is_artifact(name) {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    let mut files = Vec::with_capacity(names.len());
    for name in names {
        let bytes = std::fs::read(out_dir.join(&name))?;
        files.push(ManifestFile {
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
            name,
        });
    }
    let manifest = Manifest {
        config_sha256: config_sha256.to_string(),
        master_seed,
        files,
    };
    std::fs::write(out_dir.join("manifest.json"), manifest.to_json())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(sha256_hex(b"").len(), 64);
    }

    #[test]
    fn only_pipeline_artifacts_are_listed() {
        for name in [
            "transmissions.csv",
            "deliveries.csv",
            "merged.csv",
            "pairs.json",
            "report.json",
            "series.csv",
            "sniffer_s1.csv",
            "obs_X_Y.csv",
            "obs_X_Y.json",
            "model_X_Y.json",
        ] {
            assert!(is_artifact(name), "{name} should be listed");
        }
        for name in ["manifest.json", "notes.txt", "sniffer_s1.json", "model_X_Y.csv"] {
            assert!(!is_artifact(name), "{name} should not be listed");
        }
    }

    #[test]
    fn manifest_scan_sorts_and_skips_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("report.json"), "{}\n").unwrap();
        std::fs::write(dir.path().join("merged.csv"), "node_id\n").unwrap();
        std::fs::write(dir.path().join("scratch.txt"), "x").unwrap();
        let manifest = write_manifest(dir.path(), "cfg-hash", 42).unwrap();
        let names: Vec<&str> = manifest.files.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["merged.csv", "report.json"]);
        assert_eq!(manifest.master_seed, 42);
        assert_eq!(manifest.files[0].bytes, 8);

        // A rescan picks up manifest.json's presence nowhere: it never lists
        // itself, so rewriting is idempotent.
        let again = write_manifest(dir.path(), "cfg-hash", 42).unwrap();
        assert_eq!(again, manifest);

        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert_eq!(Manifest::from_json(&text).unwrap(), manifest);
    }
}
