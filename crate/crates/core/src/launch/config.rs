use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LaunchError;
use crate::bus::Params;

/// One `[[node]]` table of a launch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub package: String,
    pub node: String,
    /// Graph name; defaults to the node id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub remap: BTreeMap<String, String>,
}

fn enabled_default() -> bool {
    true
}

impl NodeEntry {
    pub fn new(package: &str, node: &str) -> Self {
        NodeEntry {
            package: package.to_string(),
            node: node.to_string(),
            name: None,
            enabled: true,
            params: Params::new(),
            remap: BTreeMap::new(),
        }
    }

    pub fn graph_name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.node)
    }

    /// `package/node` label used in error messages.
    pub fn label(&self) -> String {
        format!("{}/{}", self.package, self.node)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchConfig {
    #[serde(default, rename = "node")]
    pub nodes: Vec<NodeEntry>,
    /// Extra manifest directories, relative to the launch file.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub package_paths: Vec<PathBuf>,
}

impl LaunchConfig {
    pub fn parse(text: &str) -> Result<LaunchConfig, LaunchError> {
        toml::from_str(text).map_err(|e| LaunchError::Parse { path: None, message: e.to_string() })
    }

    pub fn from_file(path: &Path) -> Result<LaunchConfig, LaunchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LaunchError::Io { path: path.to_path_buf(), source })?;
        let mut cfg: LaunchConfig = toml::from_str(&text).map_err(|e| LaunchError::Parse {
            path: Some(path.to_path_buf()),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut cfg.package_paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("launch config serializes")
    }

    pub fn enabled(&self) -> impl Iterator<Item = &NodeEntry> {
        self.nodes.iter().filter(|n| n.enabled)
    }

    /// Sets `enabled` on every entry whose graph name is `name`.
    pub fn set_enabled(&mut self, name: &str, enabled: bool) -> usize {
        let mut hits = 0;
        for n in self.nodes.iter_mut().filter(|n| n.graph_name().trim_start_matches('/') == name.trim_start_matches('/')) {
            n.enabled = enabled;
            hits += 1;
        }
        hits
    }
}
