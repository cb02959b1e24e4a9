//! Run manifests: every command writes one `manifest.json` into its output
//! directory recording what ran, the fully resolved configuration, the seed,
//! sha-256 digests of the inputs, the tool version, and the wall-clock
//! duration. A result can then always be tied back to the exact inputs that
//! produced it.
//!
//! The manifest is the one output that is allowed to differ between byte-
//! identical reruns (it carries the duration); determinism checks compare
//! every other artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest i/o: {0}")]
    Io(#[from] io::Error),
    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("digest mismatch for {path}: manifest has {recorded}, file hashes to {actual}")]
    DigestMismatch {
        path: String,
        recorded: String,
        actual: String,
    },
}

/// Hex sha-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// Digest of a file, or of a directory tree: for directories, the sha-256 of
/// one `relative/path\0file-digest\n` line per file, sorted by path, so the
/// digest is independent of traversal and creation order.
pub fn sha256_path(path: &Path) -> io::Result<String> {
    if !path.is_dir() {
        return sha256_file(path);
    }
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        h.update(rel.as_bytes());
        h.update([0u8]);
        h.update(sha256_file(&path.join(&rel))?.as_bytes());
        h.update([b'\n']);
    }
    Ok(format!("{:x}", h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p
                .strip_prefix(root)
                .expect("walked path under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.push(rel);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand name, e.g. "uq".
    pub command: String,
    /// Fully resolved configuration: every flag after defaults were applied.
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub tool_version: String,
    pub duration_seconds: f64,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Digest a list of input files or directories in the given order.
pub fn digest_inputs(paths: &[PathBuf]) -> io::Result<Vec<InputDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(InputDigest {
                path: p.display().to_string(),
                sha256: sha256_path(p)?,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, ManifestError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<RunManifest, ManifestError> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_NAME))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Recompute every recorded input digest; the first mismatch is the
    /// error. Relative paths resolve against the current directory, as they
    /// did when the manifest was written.
    pub fn verify_digests(&self) -> Result<(), ManifestError> {
        for d in &self.inputs {
            let actual = sha256_path(Path::new(&d.path))?;
            if actual != d.sha256 {
                return Err(ManifestError::DigestMismatch {
                    path: d.path.clone(),
                    recorded: d.sha256.clone(),
                    actual,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample(inputs: Vec<InputDigest>) -> RunManifest {
        RunManifest {
            command: "uq".into(),
            config: serde_json::json!({"eps": 0.01, "dr": 0.01, "n_est": 32}),
            seed: 7,
            inputs,
            tool_version: "0.1.0".into(),
            duration_seconds: 1.25,
        }
    }

    #[test]
    fn sha256_known_vectors() {
        let dir = tempdir().unwrap();
        let empty = dir.path().join("empty");
        std::fs::write(&empty, b"").unwrap();
        assert_eq!(
            sha256_file(&empty).unwrap(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        let abc = dir.path().join("abc");
        std::fs::write(&abc, b"abc").unwrap();
        assert_eq!(
            sha256_file(&abc).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn directory_digest_tracks_content_not_creation_order() {
        let mk = |names: &[(&str, &[u8])]| {
            let dir = tempdir().unwrap();
            std::fs::create_dir(dir.path().join("sub")).unwrap();
            for (name, bytes) in names {
                std::fs::write(dir.path().join(name), bytes).unwrap();
            }
            (sha256_path(dir.path()).unwrap(), dir)
        };
        let (d1, _g1) = mk(&[("a.txt", b"one"), ("sub/b.txt", b"two")]);
        let (d2, _g2) = mk(&[("sub/b.txt", b"two"), ("a.txt", b"one")]);
        let (d3, _g3) = mk(&[("a.txt", b"one"), ("sub/b.txt", b"TWO")]);
        assert_eq!(d1, d2);
        assert_ne!(d1, d3);
    }

    #[test]
    fn directory_inputs_verify_and_catch_edits() {
        let dir = tempdir().unwrap();
        let data = dir.path().join("data");
        std::fs::create_dir(&data).unwrap();
        std::fs::write(data.join("cameras.json"), b"{}").unwrap();
        let m = sample(digest_inputs(std::slice::from_ref(&data)).unwrap());
        m.verify_digests().unwrap();

        std::fs::write(data.join("cameras.json"), b"{ }").unwrap();
        assert!(m.verify_digests().is_err());
    }

    #[test]
    fn manifest_round_trips_exactly() {
        let dir = tempdir().unwrap();
        let input = dir.path().join("ckpt.bin");
        std::fs::write(&input, b"weights").unwrap();
        let m = sample(digest_inputs(&[input]).unwrap());
        let path = m.write(dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), MANIFEST_NAME);
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
    }

    #[test]
    fn rewrite_leaves_a_single_manifest() {
        let dir = tempdir().unwrap();
        let m = sample(Vec::new());
        m.write(dir.path()).unwrap();
        m.write(dir.path()).unwrap();
        let n = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(n, 1);
    }

    #[test]
    fn digest_verification_catches_edits() {
        let dir = tempdir().unwrap();
        let input = dir.path().join("data.json");
        std::fs::write(&input, b"one").unwrap();
        let m = sample(digest_inputs(std::slice::from_ref(&input)).unwrap());
        m.verify_digests().unwrap();

        std::fs::write(&input, b"two").unwrap();
        let err = m.verify_digests().unwrap_err();
        assert!(matches!(err, ManifestError::DigestMismatch { .. }));
        assert!(err.to_string().contains("data.json"));
    }

    #[test]
    fn manifest_json_lists_the_documented_fields() {
        let m = sample(Vec::new());
        let v = serde_json::to_value(&m).unwrap();
        for key in [
            "command",
            "config",
            "seed",
            "inputs",
            "tool_version",
            "duration_seconds",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
