//! Local on-disk function store.
//!
//! Layout, one directory per committed version:
//!
//! ```text
//! <root>/<name>/<version>/image      executable, mode 0755 (absent for simulated functions)
//! <root>/<name>/<version>/spec.json  FunctionSpec
//! <root>/<name>/<version>/meta.json  version, deploy time, image digest
//! ```
//!
//! A version is written into a `.staging-*` directory and renamed into place,
//! so readers only ever see complete versions. Old versions are kept.

use std::fs;
use std::io::{self, Write};
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use chrono::{DateTime, Utc};
use dashmap::DashMap;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{DriverKind, FunctionSpec, SpecError};

pub const DIGEST_ALGORITHM: &str = "sha256";
const STAGING_PREFIX: &str = ".staging-";
const RACY_WINDOW: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("function {0:?} is not deployed")]
    NotFound(String),
    #[error("function {0:?} already exists")]
    Exists(String),
    #[error(transparent)]
    InvalidSpec(#[from] SpecError),
    #[error(
        "image of {name:?} v{version} failed verification: expected {expected}, found {found}"
    )]
    ChecksumMismatch {
        name: String,
        version: u64,
        expected: String,
        found: String,
    },
    #[error("unsupported digest algorithm {0:?}")]
    UnsupportedDigest(String),
    #[error("registry I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt registry document {path}: {source}")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T, RegistryError>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: &Path) -> Result<T, RegistryError> {
        self.map_err(|source| RegistryError::Io {
            path: path.to_owned(),
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessImage {
    pub executable_path: PathBuf,
    pub checksum: String,
    #[serde(default = "default_algorithm")]
    pub digest_algorithm: String,
    pub size_bytes: u64,
}

fn default_algorithm() -> String {
    DIGEST_ALGORITHM.to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub spec: FunctionSpec,
    pub image: Option<ProcessImage>,
    pub deployed_at: DateTime<Utc>,
    pub version: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct VersionMeta {
    version: u64,
    deployed_at: DateTime<Utc>,
    image: Option<ImageMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ImageMeta {
    checksum: String,
    digest_algorithm: String,
    size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeEntry {
    pub name: String,
    pub version: u64,
    pub size_bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String, RegistryError> {
    let mut file = fs::File::open(path).at(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 256 * 1024];
    loop {
        let n = io::Read::read(&mut file, &mut buf).at(path)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Which image kinds a driver accepts at deploy time.
pub fn check_image_presence(driver: DriverKind, has_image: bool) -> Result<(), SpecError> {
    match (driver, has_image) {
        (DriverKind::Process, false) => Err(SpecError::MissingImage(driver)),
        (DriverKind::Simulated, true) => Err(SpecError::UnexpectedImage(driver)),
        _ => Ok(()),
    }
}

#[derive(Debug)]
pub struct Registry {
    root: PathBuf,
    latest: DashMap<String, Arc<RegistryEntry>>,
    name_locks: DashMap<String, Arc<Mutex<()>>>,
    /// Images whose digest was checked, keyed by path, with the (len, mtime) seen then.
    verified: DashMap<PathBuf, (u64, SystemTime)>,
    staging_seq: AtomicU64,
}

impl Registry {
    /// Opens (or creates) a registry rooted at `root` and indexes the latest
    /// committed version of every function. Leftover staging directories
    /// from interrupted writes are removed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let root = root.into();
        fs::create_dir_all(&root).at(&root)?;
        let registry = Registry {
            root,
            latest: DashMap::new(),
            name_locks: DashMap::new(),
            verified: DashMap::new(),
            staging_seq: AtomicU64::new(0),
        };
        for dir in fs::read_dir(&registry.root).at(&registry.root)? {
            let dir = dir.at(&registry.root)?;
            let name = dir.file_name().to_string_lossy().into_owned();
            if !crate::types::is_valid_name(&name) || !dir.path().is_dir() {
                continue;
            }
            registry.clear_staging(&dir.path())?;
            if let Some(version) = registry.latest_version_on_disk(&name)? {
                let entry = registry.load_version(&name, version)?;
                registry.latest.insert(name, Arc::new(entry));
            }
        }
        Ok(registry)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn function_dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn clear_staging(&self, function_dir: &Path) -> Result<(), RegistryError> {
        for item in fs::read_dir(function_dir).at(function_dir)? {
            let item = item.at(function_dir)?;
            if item
                .file_name()
                .to_string_lossy()
                .starts_with(STAGING_PREFIX)
            {
                fs::remove_dir_all(item.path()).at(&item.path())?;
            }
        }
        Ok(())
    }

    fn latest_version_on_disk(&self, name: &str) -> Result<Option<u64>, RegistryError> {
        let dir = self.function_dir(name);
        if !dir.exists() {
            return Ok(None);
        }
        let mut best = None;
        for item in fs::read_dir(&dir).at(&dir)? {
            let item = item.at(&dir)?;
            if let Ok(v) = item.file_name().to_string_lossy().parse::<u64>() {
                best = best.max(Some(v));
            }
        }
        Ok(best)
    }

    fn load_version(&self, name: &str, version: u64) -> Result<RegistryEntry, RegistryError> {
        let dir = self.function_dir(name).join(version.to_string());
        let spec_path = dir.join("spec.json");
        let meta_path = dir.join("meta.json");
        let spec: FunctionSpec = read_json(&spec_path)?;
        let meta: VersionMeta = read_json(&meta_path)?;
        Ok(RegistryEntry {
            spec,
            image: meta.image.map(|m| ProcessImage {
                executable_path: dir.join("image"),
                checksum: m.checksum,
                digest_algorithm: m.digest_algorithm,
                size_bytes: m.size_bytes,
            }),
            deployed_at: meta.deployed_at,
            version: meta.version,
        })
    }

    /// Stores a new version of `spec.name`. Fails with [`RegistryError::Exists`]
    /// when the name is taken and `overwrite` is false.
    pub fn put(
        &self,
        spec: FunctionSpec,
        image: Option<&[u8]>,
        overwrite: bool,
    ) -> Result<RegistryEntry, RegistryError> {
        let spec = spec.validate()?;
        check_image_presence(spec.driver, image.is_some())?;

        let lock = self
            .name_locks
            .entry(spec.name.clone())
            .or_default()
            .clone();
        let _guard = lock.lock();

        let current = self.latest_version_on_disk(&spec.name)?;
        if current.is_some() && !overwrite {
            return Err(RegistryError::Exists(spec.name));
        }
        let version = current.unwrap_or(0) + 1;

        let function_dir = self.function_dir(&spec.name);
        fs::create_dir_all(&function_dir).at(&function_dir)?;
        let staging = function_dir.join(format!(
            "{STAGING_PREFIX}{version}-{}-{}",
            std::process::id(),
            self.staging_seq.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir(&staging).at(&staging)?;

        let result = self.write_version(&staging, &spec, image, version);
        let meta = match result {
            Ok(meta) => meta,
            Err(e) => {
                let _ = fs::remove_dir_all(&staging);
                return Err(e);
            }
        };
        let final_dir = function_dir.join(version.to_string());
        fs::rename(&staging, &final_dir).at(&final_dir)?;
        sync_dir(&function_dir);

        let entry = RegistryEntry {
            image: meta.image.map(|m| ProcessImage {
                executable_path: final_dir.join("image"),
                checksum: m.checksum,
                digest_algorithm: m.digest_algorithm,
                size_bytes: m.size_bytes,
            }),
            spec,
            deployed_at: meta.deployed_at,
            version,
        };
        self.latest
            .insert(entry.spec.name.clone(), Arc::new(entry.clone()));
        tracing::debug!(name = %entry.spec.name, version, "deployed");
        Ok(entry)
    }

    fn write_version(
        &self,
        staging: &Path,
        spec: &FunctionSpec,
        image: Option<&[u8]>,
        version: u64,
    ) -> Result<VersionMeta, RegistryError> {
        let image_meta = match image {
            Some(bytes) => {
                let path = staging.join("image");
                write_synced(&path, bytes)?;
                fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).at(&path)?;
                Some(ImageMeta {
                    checksum: sha256_hex(bytes),
                    digest_algorithm: DIGEST_ALGORITHM.to_owned(),
                    size_bytes: bytes.len() as u64,
                })
            }
            None => None,
        };
        let meta = VersionMeta {
            version,
            deployed_at: Utc::now(),
            image: image_meta,
        };
        write_synced(
            &staging.join("spec.json"),
            &serde_json::to_vec_pretty(spec).expect("spec serializes"),
        )?;
        write_synced(
            &staging.join("meta.json"),
            &serde_json::to_vec_pretty(&meta).expect("meta serializes"),
        )?;
        Ok(meta)
    }

    /// Latest committed version of `name`, with its image digest verified.
    pub fn resolve(&self, name: &str) -> Result<Arc<RegistryEntry>, RegistryError> {
        let entry = self
            .latest
            .get(name)
            .map(|e| Arc::clone(e.value()))
            .ok_or_else(|| RegistryError::NotFound(name.to_owned()))?;
        if let Some(image) = &entry.image {
            self.verify(&entry, image)?;
        }
        Ok(entry)
    }

    fn verify(&self, entry: &RegistryEntry, image: &ProcessImage) -> Result<(), RegistryError> {
        if image.digest_algorithm != DIGEST_ALGORITHM {
            return Err(RegistryError::UnsupportedDigest(
                image.digest_algorithm.clone(),
            ));
        }
        let path = &image.executable_path;
        let stat = fs::metadata(path).at(path)?;
        let key = (stat.len(), stat.modified().at(path)?);
        if self.verified.get(path).is_some_and(|seen| *seen == key) {
            return Ok(());
        }
        let started = SystemTime::now();
        let found = hash_file(path)?;
        if found != image.checksum {
            self.verified.remove(path);
            return Err(RegistryError::ChecksumMismatch {
                name: entry.spec.name.clone(),
                version: entry.version,
                expected: image.checksum.clone(),
                found,
            });
        }
        // Timestamps are coarse: a rewrite within the same tick keeps the
        // mtime, so only remember files that were already settled.
        if started
            .duration_since(key.1)
            .is_ok_and(|age| age >= RACY_WINDOW)
        {
            self.verified.insert(path.clone(), key);
        }
        Ok(())
    }

    pub fn list(&self) -> Vec<Arc<RegistryEntry>> {
        let mut all: Vec<_> = self.latest.iter().map(|e| Arc::clone(e.value())).collect();
        all.sort_by(|a, b| a.spec.name.cmp(&b.spec.name));
        all
    }

    /// Image sizes of the latest versions, largest first.
    pub fn report_sizes(&self) -> Vec<SizeEntry> {
        let mut sizes: Vec<SizeEntry> = self
            .latest
            .iter()
            .map(|e| SizeEntry {
                name: e.spec.name.clone(),
                version: e.version,
                size_bytes: e.image.as_ref().map_or(0, |i| i.size_bytes),
            })
            .collect();
        sizes.sort_by(|a, b| b.size_bytes.cmp(&a.size_bytes).then(a.name.cmp(&b.name)));
        sizes
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, RegistryError> {
    let bytes = fs::read(path).at(path)?;
    serde_json::from_slice(&bytes).map_err(|source| RegistryError::Corrupt {
        path: path.to_owned(),
        source,
    })
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), RegistryError> {
    let mut file = fs::File::create(path).at(path)?;
    file.write_all(bytes).at(path)?;
    file.sync_all().at(path)
}

fn sync_dir(dir: &Path) {
    if let Ok(d) = fs::File::open(dir) {
        let _ = d.sync_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_image() -> Vec<u8> {
        b"#!/bin/sh\ncat\n".to_vec()
    }

    #[test]
    fn versions_increase_and_old_ones_stay() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        let v1 = reg
            .put(FunctionSpec::process("echo"), Some(&fake_image()), false)
            .unwrap();
        assert_eq!(v1.version, 1);
        let v2 = reg
            .put(FunctionSpec::process("echo"), Some(b"other"), true)
            .unwrap();
        assert_eq!(v2.version, 2);
        assert!(dir.path().join("echo/1/image").exists());
        assert_eq!(reg.resolve("echo").unwrap().version, 2);
    }

    #[test]
    fn duplicate_without_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        reg.put(FunctionSpec::process("echo"), Some(&fake_image()), false)
            .unwrap();
        assert!(matches!(
            reg.put(FunctionSpec::process("echo"), Some(&fake_image()), false),
            Err(RegistryError::Exists(_))
        ));
    }

    #[test]
    fn process_spec_needs_image() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        assert!(matches!(
            reg.put(FunctionSpec::process("echo"), None, false),
            Err(RegistryError::InvalidSpec(SpecError::MissingImage(_)))
        ));
        assert!(matches!(
            reg.put(FunctionSpec::simulated("s", "kata"), Some(b"x"), false),
            Err(RegistryError::InvalidSpec(SpecError::UnexpectedImage(_)))
        ));
    }

    #[test]
    fn unknown_name() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        assert!(matches!(
            reg.resolve("nope"),
            Err(RegistryError::NotFound(_))
        ));
    }

    #[test]
    fn tampered_image_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        let entry = reg
            .put(FunctionSpec::process("echo"), Some(&fake_image()), false)
            .unwrap();
        reg.resolve("echo").unwrap();
        let path = entry.image.unwrap().executable_path;
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] ^= 0x01;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            reg.resolve("echo"),
            Err(RegistryError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn image_is_executable_and_identical() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        reg.put(FunctionSpec::process("echo"), Some(&fake_image()), false)
            .unwrap();
        let image = reg.resolve("echo").unwrap().image.clone().unwrap();
        let mode = fs::metadata(&image.executable_path)
            .unwrap()
            .permissions()
            .mode();
        assert_eq!(mode & 0o111, 0o111);
        assert_eq!(fs::read(&image.executable_path).unwrap(), fake_image());
        assert_eq!(image.size_bytes, fake_image().len() as u64);
        assert_eq!(image.checksum, sha256_hex(&fake_image()));
    }

    #[test]
    fn reopen_sees_latest_and_drops_interrupted_write() {
        let dir = tempfile::tempdir().unwrap();
        {
            let reg = Registry::open(dir.path()).unwrap();
            reg.put(FunctionSpec::process("echo"), Some(&fake_image()), false)
                .unwrap();
        }
        // a put that died before its rename
        let staging = dir.path().join("echo/.staging-2-1-0");
        fs::create_dir_all(&staging).unwrap();
        fs::write(staging.join("image"), b"half").unwrap();

        let reg = Registry::open(dir.path()).unwrap();
        let entry = reg.resolve("echo").unwrap();
        assert_eq!(entry.version, 1);
        assert!(!staging.exists());
        assert_eq!(
            fs::read(&entry.image.as_ref().unwrap().executable_path).unwrap(),
            fake_image()
        );
    }

    #[test]
    fn sizes_sorted_descending() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        assert!(reg.report_sizes().is_empty());
        reg.put(FunctionSpec::process("small"), Some(b"ab"), false)
            .unwrap();
        reg.put(FunctionSpec::process("big"), Some(&[0u8; 100]), false)
            .unwrap();
        let sizes = reg.report_sizes();
        assert_eq!(
            sizes
                .iter()
                .map(|s| (s.name.as_str(), s.size_bytes))
                .collect::<Vec<_>>(),
            [("big", 100), ("small", 2)]
        );
    }
}
