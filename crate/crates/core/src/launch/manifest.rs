use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::LaunchError;
use crate::bus::Tier;

const BUILTIN_MANIFESTS: &[(&str, &str)] = &[
    ("vision.toml", include_str!("../../packages/vision.toml")),
    ("audio.toml", include_str!("../../packages/audio.toml")),
    ("behavior.toml", include_str!("../../packages/behavior.toml")),
    ("bridge.toml", include_str!("../../packages/bridge.toml")),
];

/// How a node is hosted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entry {
    /// A factory compiled into this crate.
    Builtin(String),
    /// A child process that attaches over TCP. Paths are resolved against
    /// the manifest directory.
    Exec { command: Vec<String>, dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub name: String,
    pub tier: Tier,
    pub entry: Entry,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Package {
    pub name: String,
    pub nodes: BTreeMap<String, NodeSpec>,
    pub source: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    name: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(default, rename = "node")]
    nodes: Vec<RawNode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
    tier: Tier,
    entry: String,
    #[serde(default)]
    command: Vec<String>,
}

impl Package {
    /// Manifest grammar: `name`, then `[[node]]` tables with `name`, `tier`
    /// and `entry = "builtin:<id>"` or `entry = "exec"` plus `command`.
    pub fn parse(text: &str, dir: &Path, source: Option<PathBuf>) -> Result<Package, LaunchError> {
        let where_ = || source.clone().unwrap_or_else(|| PathBuf::from("<builtin>"));
        let raw: RawManifest = toml::from_str(text)
            .map_err(|e| LaunchError::Manifest { path: where_(), message: e.to_string() })?;
        let _ = raw.description;
        if raw.name.is_empty() {
            return Err(LaunchError::Manifest { path: where_(), message: "empty package name".into() });
        }
        let mut nodes = BTreeMap::new();
        for n in raw.nodes {
            let entry = if let Some(id) = n.entry.strip_prefix("builtin:") {
                Entry::Builtin(id.to_string())
            } else if n.entry == "exec" {
                if n.command.is_empty() {
                    return Err(LaunchError::Manifest {
                        path: where_(),
                        message: format!("node {} has an empty command", n.name),
                    });
                }
                Entry::Exec { command: n.command, dir: dir.to_path_buf() }
            } else {
                return Err(LaunchError::Manifest {
                    path: where_(),
                    message: format!("node {} has unknown entry {:?}", n.name, n.entry),
                });
            };
            let spec = NodeSpec { name: n.name.clone(), tier: n.tier, entry };
            if nodes.insert(n.name.clone(), spec).is_some() {
                return Err(LaunchError::Manifest {
                    path: where_(),
                    message: format!("node {} declared twice", n.name),
                });
            }
        }
        Ok(Package { name: raw.name, nodes, source })
    }
}

/// Known packages by name.
#[derive(Debug, Clone, Default)]
pub struct PackageRegistry {
    packages: BTreeMap<String, Package>,
}

impl PackageRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The packages shipped with this crate.
    pub fn builtin() -> Self {
        let mut reg = Self::new();
        for (file, text) in BUILTIN_MANIFESTS {
            let pkg = Package::parse(text, Path::new("."), None)
                .unwrap_or_else(|e| panic!("bundled manifest {file}: {e}"));
            reg.add(pkg).expect("bundled package names are unique");
        }
        reg
    }

    pub fn add(&mut self, pkg: Package) -> Result<(), LaunchError> {
        if self.packages.contains_key(&pkg.name) {
            return Err(LaunchError::DuplicatePackage(pkg.name));
        }
        self.packages.insert(pkg.name.clone(), pkg);
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), LaunchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LaunchError::Io { path: path.to_path_buf(), source })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        self.add(Package::parse(&text, dir, Some(path.to_path_buf()))?)
    }

    /// Loads every `*.toml` manifest in `dir` and one level of
    /// subdirectories, in name order.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, LaunchError> {
        let mut found = Vec::new();
        let read = |d: &Path| {
            std::fs::read_dir(d)
                .map_err(|source| LaunchError::Io { path: d.to_path_buf(), source })
                .map(|rd| rd.filter_map(Result::ok).map(|e| e.path()).collect::<Vec<_>>())
        };
        for p in read(dir)? {
            if p.is_dir() {
                found.extend(read(&p)?.into_iter().filter(|q| q.extension().is_some_and(|e| e == "toml")));
            } else if p.extension().is_some_and(|e| e == "toml") {
                found.push(p);
            }
        }
        found.sort();
        for p in &found {
            self.load_file(p)?;
        }
        Ok(found.len())
    }

    pub fn get(&self, name: &str) -> Option<&Package> {
        self.packages.get(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.packages.keys().map(String::as_str).collect()
    }

    pub fn resolve(&self, package: &str, node: &str) -> Result<&NodeSpec, LaunchError> {
        let pkg = self.get(package).ok_or_else(|| LaunchError::UnknownPackage(package.to_string()))?;
        pkg.nodes.get(node).ok_or_else(|| LaunchError::UnknownNode {
            package: package.to_string(),
            node: node.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_manifests_load() {
        let reg = PackageRegistry::builtin();
        assert_eq!(reg.names(), ["audio", "behavior", "bridge", "vision"]);
        let spec = reg.resolve("vision", "video_stream").unwrap();
        assert_eq!(spec.tier, Tier::Basic);
        assert_eq!(spec.entry, Entry::Builtin("video_stream".into()));
        assert!(matches!(reg.resolve("nope", "x"), Err(LaunchError::UnknownPackage(p)) if p == "nope"));
        assert!(matches!(reg.resolve("vision", "x"), Err(LaunchError::UnknownNode { .. })));
    }

    #[test]
    fn exec_entries_need_a_command() {
        let bad = "name='p'\n[[node]]\nname='n'\ntier='external'\nentry='exec'\n";
        assert!(Package::parse(bad, Path::new("/tmp"), None).is_err());
        let ok = "name='p'\n[[node]]\nname='n'\ntier='external'\nentry='exec'\ncommand=['python3','n.py']\n";
        let pkg = Package::parse(ok, Path::new("/tmp/p"), None).unwrap();
        assert_eq!(
            pkg.nodes["n"].entry,
            Entry::Exec { command: vec!["python3".into(), "n.py".into()], dir: PathBuf::from("/tmp/p") }
        );
    }
}
