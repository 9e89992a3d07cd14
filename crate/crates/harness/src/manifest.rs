// SPDX-License-Identifier: MIT OR Apache-2.0

//! `manifest.json`: every artifact under an output directory with its digest.

use std::fs;
use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig, Scale};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub scale: Scale,
    pub version: String,
    pub artifacts: Vec<Artifact>,
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<Artifact>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if e.file_type()?.is_dir() {
            walk(root, &p, out)?;
            continue;
        }
        let rel = p.strip_prefix(root)?;
        let rel: Vec<String> = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect();
        let rel = rel.join("/");
        if rel == MANIFEST {
            continue;
        }
        let bytes = fs::read(&p)?;
        out.push(Artifact {
            path: rel,
            sha256: hex(&Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
    }
    Ok(())
}

/// Scan `out` and write its manifest; no timestamps, so reruns reproduce it.
pub fn write_manifest(out: &Path, cfg: &ExperimentConfig) -> Result<Manifest> {
    let mut artifacts = Vec::new();
    walk(out, out, &mut artifacts)?;
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let m = Manifest {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        scale: cfg.scale,
        version: env!("CARGO_PKG_VERSION").into(),
        artifacts,
    };
    fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(m)
}
