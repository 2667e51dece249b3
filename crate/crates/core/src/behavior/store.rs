//! File-backed store for profiles, the robot definition and assets.
//!
//! ```text
//! <root>/robot.json              active robot definition
//! <root>/profiles/<id>.json      one file per behavior profile
//! <root>/assets/manifest.json    {"<id>": {"size": n, "sha256": "<hex>"}}
//! <root>/assets/blobs/<id>       asset bytes
//! ```
//!
//! Every file is replaced by writing a sibling temp file and renaming it.
//! The dump produced by [`Store::export`] is canonical: profiles and
//! assets sorted by id, pretty JSON, trailing newline.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::types::{valid_id, BehaviorProfile, RobotDefinition, ValidationError};

pub const DUMP_FORMAT: &str = "socialbot-behavior-dump";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("{kind} {id:?} already exists")]
    Conflict { kind: &'static str, id: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("{path}: asset {asset:?} does not exist")]
    AssetMissing { path: String, asset: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetInfo {
    pub size: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpAsset {
    id: String,
    size: u64,
    sha256: String,
    data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Dump {
    format: String,
    version: u32,
    robot: Option<RobotDefinition>,
    profiles: Vec<BehaviorProfile>,
    assets: Vec<DumpAsset>,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    write: Mutex<()>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().expect("store paths have a parent");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(".{}.tmp", path.file_name().unwrap_or_default().to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn to_json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("store types serialize");
    out.push(b'\n');
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Store {
    /// Opens or creates a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = root.into();
        for dir in [root.join("profiles"), root.join("assets/blobs")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let store = Store { root, write: Mutex::new(()) };
        store.manifest()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ()> {
        self.write.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<Option<T>, StoreError> {
        match fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), reason: e.to_string() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StoreError::Io { path: path.to_path_buf(), source: e }),
        }
    }

    fn profile_path(&self, id: &str) -> PathBuf {
        self.root.join("profiles").join(format!("{id}.json"))
    }

    fn manifest_path(&self) -> PathBuf {
        self.root.join("assets/manifest.json")
    }

    fn blob_path(&self, id: &str) -> PathBuf {
        self.root.join("assets/blobs").join(id)
    }

    pub fn manifest(&self) -> Result<BTreeMap<String, AssetInfo>, StoreError> {
        Ok(self.read_json(&self.manifest_path())?.unwrap_or_default())
    }

    pub fn asset_exists(&self, id: &str) -> Result<bool, StoreError> {
        Ok(self.manifest()?.contains_key(id))
    }

    pub fn put_asset(&self, id: &str, bytes: &[u8]) -> Result<AssetInfo, StoreError> {
        if !valid_id(id) {
            return Err(ValidationError::new("id", format!("invalid id {id:?}")).into());
        }
        let _g = self.lock();
        let info = AssetInfo { size: bytes.len() as u64, sha256: hex(&Sha256::digest(bytes)) };
        write_atomic(&self.blob_path(id), bytes)?;
        let mut manifest = self.manifest()?;
        manifest.insert(id.to_string(), info.clone());
        write_atomic(&self.manifest_path(), &to_json_bytes(&manifest))?;
        Ok(info)
    }

    pub fn get_asset(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        if !valid_id(id) || !self.asset_exists(id)? {
            return Err(StoreError::NotFound { kind: "asset", id: id.to_string() });
        }
        let path = self.blob_path(id);
        fs::read(&path).map_err(io_err(&path))
    }

    fn check_profile(&self, p: &BehaviorProfile) -> Result<(), StoreError> {
        p.validate()?;
        let manifest = self.manifest()?;
        for (path, asset) in [("face_asset", &p.face_asset), ("sound_asset", &p.sound_asset)] {
            if !manifest.contains_key(asset) {
                return Err(StoreError::AssetMissing { path: path.into(), asset: asset.clone() });
            }
        }
        Ok(())
    }

    pub fn create_profile(&self, p: &BehaviorProfile) -> Result<(), StoreError> {
        self.check_profile(p)?;
        let _g = self.lock();
        let path = self.profile_path(&p.id);
        if path.exists() {
            return Err(StoreError::Conflict { kind: "profile", id: p.id.clone() });
        }
        write_atomic(&path, &to_json_bytes(p))
    }

    pub fn update_profile(&self, p: &BehaviorProfile) -> Result<(), StoreError> {
        self.check_profile(p)?;
        let _g = self.lock();
        let path = self.profile_path(&p.id);
        if !path.exists() {
            return Err(StoreError::NotFound { kind: "profile", id: p.id.clone() });
        }
        write_atomic(&path, &to_json_bytes(p))
    }

    pub fn get_profile(&self, id: &str) -> Result<BehaviorProfile, StoreError> {
        let not_found = || StoreError::NotFound { kind: "profile", id: id.to_string() };
        if !valid_id(id) {
            return Err(not_found());
        }
        self.read_json(&self.profile_path(id))?.ok_or_else(not_found)
    }

    pub fn delete_profile(&self, id: &str) -> Result<(), StoreError> {
        let not_found = || StoreError::NotFound { kind: "profile", id: id.to_string() };
        if !valid_id(id) {
            return Err(not_found());
        }
        let _g = self.lock();
        let path = self.profile_path(id);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(not_found()),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }

    /// All profiles, ordered by id.
    pub fn list_profiles(&self) -> Result<Vec<BehaviorProfile>, StoreError> {
        let dir = self.root.join("profiles");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry.map_err(io_err(&dir))?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json").filter(|id| valid_id(id)) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        ids.iter().map(|id| self.get_profile(id)).collect()
    }

    pub fn robot(&self) -> Result<Option<RobotDefinition>, StoreError> {
        self.read_json(&self.root.join("robot.json"))
    }

    /// Replaces the active definition.
    pub fn put_robot(&self, r: &RobotDefinition) -> Result<(), StoreError> {
        r.validate()?;
        let _g = self.lock();
        write_atomic(&self.root.join("robot.json"), &to_json_bytes(r))
    }

    /// Canonical dump of the whole store.
    pub fn export(&self) -> Result<String, StoreError> {
        let mut assets = Vec::new();
        for (id, info) in self.manifest()? {
            let data = self.get_asset(&id)?;
            assets.push(DumpAsset { id, size: info.size, sha256: info.sha256, data: B64.encode(data) });
        }
        let dump = Dump {
            format: DUMP_FORMAT.into(),
            version: DUMP_VERSION,
            robot: self.robot()?,
            profiles: self.list_profiles()?,
            assets,
        };
        Ok(String::from_utf8(to_json_bytes(&dump)).expect("JSON is UTF-8"))
    }

    /// Loads a dump into this store, overwriting records with the same id.
    pub fn import(&self, dump: &str) -> Result<(), StoreError> {
        let corrupt = |reason: String| StoreError::Corrupt { path: PathBuf::from("<dump>"), reason };
        let dump: Dump = serde_json::from_str(dump).map_err(|e| corrupt(e.to_string()))?;
        if dump.format != DUMP_FORMAT || dump.version != DUMP_VERSION {
            return Err(corrupt(format!("unsupported dump {} v{}", dump.format, dump.version)));
        }
        for a in &dump.assets {
            let bytes = B64.decode(&a.data).map_err(|e| corrupt(format!("asset {}: {e}", a.id)))?;
            if hex(&Sha256::digest(&bytes)) != a.sha256 {
                return Err(corrupt(format!("asset {}: checksum mismatch", a.id)));
            }
            self.put_asset(&a.id, &bytes)?;
        }
        if let Some(r) = &dump.robot {
            self.put_robot(r)?;
        }
        for p in &dump.profiles {
            self.check_profile(p)?;
            let _g = self.lock();
            write_atomic(&self.profile_path(&p.id), &to_json_bytes(p))?;
        }
        Ok(())
    }
}
