//! Output directory with a manifest of every file written and its SHA-256.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bathyfer::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub rng: String,
    /// File name → SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug)]
pub struct OutputBundle {
    dir: PathBuf,
    manifest: Manifest,
}

impl OutputBundle {
    pub fn create(dir: &Path, command: &str, config_bytes: &[u8], seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                config_sha256: sha256_hex(config_bytes),
                seed,
                rng: bathyfer::mcmc::RNG_ALGORITHM.to_string(),
                files: BTreeMap::new(),
            },
        })
    }

    /// Reopens an existing bundle after checking every listed file against
    /// its checksum.
    pub fn open(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| Error::Input(format!("no manifest in {}: {e}", dir.display())))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Input(format!("bad manifest: {e}")))?;
        for (name, sum) in &manifest.files {
            let bytes = std::fs::read(dir.join(name))
                .map_err(|e| Error::Input(format!("bundle file {name} missing: {e}")))?;
            if &sha256_hex(&bytes) != sum {
                return Err(Error::Input(format!("bundle file {name} does not match its checksum")));
            }
        }
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.manifest.files.insert(name.to_string(), sha256_hex(contents));
        Ok(())
    }

    pub fn read(&self, name: &str) -> Result<String> {
        if !self.manifest.files.contains_key(name) {
            return Err(Error::Input(format!("bundle has no {name}")));
        }
        Ok(std::fs::read_to_string(self.dir.join(name))?)
    }

    pub fn finish(self) -> Result<Manifest> {
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Io(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(self.dir.join(MANIFEST), text + "\n")?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = OutputBundle::create(dir.path(), "simulate", b"{}", 3).unwrap();
        b.write("a.csv", b"x\n1\n").unwrap();
        let m = b.finish().unwrap();
        assert_eq!(m.files["a.csv"], sha256_hex(b"x\n1\n"));
        assert_eq!(m.config_sha256, sha256_hex(b"{}"));

        let reopened = OutputBundle::open(dir.path()).unwrap();
        assert_eq!(reopened.read("a.csv").unwrap(), "x\n1\n");

        std::fs::write(dir.path().join("a.csv"), "x\n2\n").unwrap();
        assert!(OutputBundle::open(dir.path()).is_err());
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
