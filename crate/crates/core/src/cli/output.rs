use std::path::{Path, PathBuf};

use anyhow::Context;

use rxnemb::io::{sha256_file, sha256_hex, FileDigest, Manifest};

/// Collects a command's outputs and finishes with `manifest.json`.
pub struct OutputDir {
    root: PathBuf,
    outputs: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), outputs: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(FileDigest { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes the manifest; outputs are listed by name in sorted order.
    pub fn finish(mut self, command: &str, inputs: &[&Path], config: serde_json::Value) -> anyhow::Result<()> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p).with_context(|| format!("hashing {}", p.display()))?,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs,
            outputs: std::mem::take(&mut self.outputs),
            config,
        };
        self.write_json("manifest.json", &manifest)
    }
}
