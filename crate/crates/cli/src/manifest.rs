use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use octwin::hash::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::jobs::{Artifacts, Job};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: the resolved job plus the hashes of
/// what it read and wrote. Output paths are relative to the output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub job: Job,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Files written alongside the outputs whose content is not reproducible.
    pub volatile: Vec<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Fails unless every recorded input still has its recorded hash.
    pub fn verify_inputs(&self) -> Result<()> {
        for f in &self.inputs {
            let now = hash_file(Path::new(&f.path))?;
            if now.sha256 != f.sha256 {
                bail!("input {} changed since the manifest was written", f.path);
            }
        }
        Ok(())
    }
}

pub fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Runs `job` and writes its artifacts and manifest into `out`. Nothing is
/// written when the job fails.
pub fn run(job: Job, out: &Path, echo: bool) -> Result<Manifest> {
    let inputs = job
        .input_paths()
        .iter()
        .map(|p| hash_file(p))
        .collect::<Result<Vec<_>>>()?;
    let artifacts = job.execute()?;
    let manifest = Manifest {
        tool: format!("octwin {}", env!("CARGO_PKG_VERSION")),
        job,
        inputs,
        outputs: artifacts
            .files
            .iter()
            .map(|(name, bytes)| FileHash {
                path: name.clone(),
                sha256: sha256_hex(bytes),
            })
            .collect(),
        volatile: artifacts.volatile.iter().map(|(n, _)| n.clone()).collect(),
    };
    write_all(out, &artifacts, &manifest)?;
    if echo {
        print!("{}", artifacts.stdout);
    }
    Ok(manifest)
}

fn write_all(out: &Path, artifacts: &Artifacts, manifest: &Manifest) -> Result<()> {
    let files = artifacts.files.iter().chain(&artifacts.volatile);
    for (name, bytes) in files {
        let path = out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    fs::create_dir_all(out)?;
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}

/// Reruns a manifest into `out` and checks that every output hash matches.
pub fn replay(manifest_path: &Path, out: Option<PathBuf>, echo: bool) -> Result<()> {
    let recorded = Manifest::read(manifest_path)?;
    recorded.verify_inputs()?;
    let out = match out {
        Some(o) => o,
        None => manifest_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let fresh = run(recorded.job.clone(), &out, echo)?;
    if fresh.outputs != recorded.outputs {
        let diverged: Vec<&str> = recorded
            .outputs
            .iter()
            .filter(|f| !fresh.outputs.contains(f))
            .map(|f| f.path.as_str())
            .collect();
        bail!("replay produced different artifacts: {}", diverged.join(", "));
    }
    if echo {
        eprintln!("replay matched {} artifacts", fresh.outputs.len());
    }
    Ok(())
}
