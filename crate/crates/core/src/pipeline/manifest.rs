use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_file;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A file this stage consumed, addressed relative to the manifest's
/// directory, with its digest at the time of the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpstreamRef {
    pub name: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// What one stage run produced and from what. Contains no timestamps or
/// absolute paths, so identical runs write identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    /// `--set` overrides applied on top of the config file, in order.
    pub overrides: Vec<String>,
    pub upstream: Vec<UpstreamRef>,
    /// Output path (relative to the stage directory) -> SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Stage-specific summary.
    pub details: serde_json::Value,
}

impl StageManifest {
    pub fn new(stage: &str, seed: u64, config_hash: String, overrides: &[String]) -> Self {
        Self {
            stage: stage.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_hash,
            overrides: overrides.to_vec(),
            upstream: Vec::new(),
            outputs: BTreeMap::new(),
            details: serde_json::Value::Null,
        }
    }

    /// Records `file` as an input of a manifest that will live in `dir`.
    pub fn add_upstream(&mut self, name: &str, dir: &Path, file: &Path) -> Result<()> {
        if !file.exists() {
            return Err(Error::MissingFile(file.to_path_buf()));
        }
        self.upstream.push(UpstreamRef {
            name: name.into(),
            path: relative_path(dir, file)?,
            sha256: sha256_file(file)?,
        });
        Ok(())
    }

    /// Hashes `dir/rel` into the output table.
    pub fn add_output(&mut self, dir: &Path, rel: impl AsRef<Path>) -> Result<()> {
        let rel = rel.as_ref();
        self.outputs.insert(slash_path(rel), sha256_file(dir.join(rel))?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json())?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Problems that make the stage in `dir` stale: an upstream file whose
    /// digest changed since the run, or an output that was modified.
    pub fn staleness(&self, dir: &Path) -> Vec<String> {
        let mut problems = Vec::new();
        for u in &self.upstream {
            let path = dir.join(&u.path);
            match sha256_file(&path) {
                Ok(h) if h == u.sha256 => {}
                Ok(_) => problems.push(format!("{} ({}) changed since `{}` ran", u.name, path.display(), self.stage)),
                Err(_) => problems.push(format!("{} ({}) is missing", u.name, path.display())),
            }
        }
        for (rel, hash) in &self.outputs {
            let path = dir.join(rel);
            match sha256_file(&path) {
                Ok(h) if &h == hash => {}
                _ => problems.push(format!("output {} does not match its manifest", path.display())),
            }
        }
        problems
    }
}

/// Loads the manifest of the stage in `dir`, refusing a stale stage unless
/// `force` is set (the problems are then logged).
pub fn check_stage(dir: &Path, expected_stage: &str, force: bool) -> Result<StageManifest> {
    let m = StageManifest::read(dir)?;
    if m.stage != expected_stage {
        return Err(Error::Format(format!(
            "{} holds a `{}` stage, expected `{expected_stage}`",
            dir.display(),
            m.stage
        )));
    }
    let problems = m.staleness(dir);
    if !problems.is_empty() {
        if !force {
            return Err(Error::Stale(format!("{}; rerun upstream stages or pass --force", problems.join("; "))));
        }
        for p in &problems {
            log::warn!("ignoring stale input: {p}");
        }
    }
    Ok(m)
}

fn slash_path(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Path of `target` relative to directory `from`. Both must exist.
pub fn relative_path(from: &Path, target: &Path) -> Result<PathBuf> {
    let from = std::fs::canonicalize(from)?;
    let target = std::fs::canonicalize(target)?;
    let a: Vec<Component> = from.components().collect();
    let b: Vec<Component> = target.components().collect();
    let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..a.len() {
        out.push("..");
    }
    for c in &b[common..] {
        out.push(c.as_os_str());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths() {
        let d = tempfile::tempdir().unwrap();
        let a = d.path().join("x/y");
        let b = d.path().join("z");
        std::fs::create_dir_all(&a).unwrap();
        std::fs::create_dir_all(&b).unwrap();
        std::fs::write(b.join("f.txt"), "1").unwrap();
        assert_eq!(relative_path(&a, &b.join("f.txt")).unwrap(), PathBuf::from("../../z/f.txt"));
        assert_eq!(relative_path(&b, &b.join("f.txt")).unwrap(), PathBuf::from("f.txt"));
    }

    #[test]
    fn stale_upstream_is_refused_unless_forced() {
        let d = tempfile::tempdir().unwrap();
        let up = d.path().join("up");
        let down = d.path().join("down");
        std::fs::create_dir_all(&up).unwrap();
        std::fs::create_dir_all(&down).unwrap();
        std::fs::write(up.join("data.txt"), "v1").unwrap();
        std::fs::write(down.join("out.txt"), "result").unwrap();
        let mut m = StageManifest::new("demo", 1, "h".into(), &[]);
        m.add_upstream("data", &down, &up.join("data.txt")).unwrap();
        m.add_output(&down, "out.txt").unwrap();
        m.write(&down).unwrap();

        assert!(check_stage(&down, "demo", false).is_ok());
        assert!(matches!(check_stage(&down, "other", false), Err(Error::Format(_))));
        std::fs::write(up.join("data.txt"), "v2").unwrap();
        assert!(matches!(check_stage(&down, "demo", false), Err(Error::Stale(_))));
        assert!(check_stage(&down, "demo", true).is_ok());

        std::fs::write(up.join("data.txt"), "v1").unwrap();
        std::fs::write(down.join("out.txt"), "edited").unwrap();
        assert!(matches!(check_stage(&down, "demo", false), Err(Error::Stale(_))));
    }

    #[test]
    fn manifest_json_round_trip() {
        let mut m = StageManifest::new("train", 3, "abc".into(), &["seed=3".into()]);
        m.details = serde_json::json!({"fold": 1});
        let back: StageManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
