//! Run manifests: resolved configuration plus SHA-256 digests of every input
//! and output, written next to the outputs. A stage whose manifest matches
//! the current configuration and inputs, and whose outputs still hash to the
//! recorded digests, is skipped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config: Value,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digests(files: &[(&str, &Path)]) -> Result<BTreeMap<String, FileDigest>, CliError> {
    files
        .iter()
        .map(|(role, path)| {
            Ok((
                role.to_string(),
                FileDigest {
                    path: display_name(path),
                    sha256: sha256_file(path)?,
                },
            ))
        })
        .collect()
}

/// Paths are recorded by file name only, so a manifest does not depend on
/// where the run directory lives.
fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// A stage about to run: its identity, resolved config and input files.
pub struct Stage<'a> {
    pub name: &'a str,
    pub config: Value,
    pub inputs: Vec<(&'a str, PathBuf)>,
    pub outputs: Vec<(&'a str, PathBuf)>,
    pub manifest_path: PathBuf,
}

impl Stage<'_> {
    fn input_digests(&self) -> Result<BTreeMap<String, FileDigest>, CliError> {
        let files: Vec<(&str, &Path)> = self.inputs.iter().map(|(r, p)| (*r, p.as_path())).collect();
        digests(&files)
    }

    /// True when a previous run of this stage with identical configuration
    /// and inputs left intact outputs behind.
    pub fn up_to_date(&self) -> Result<bool, CliError> {
        let Ok(text) = fs::read_to_string(&self.manifest_path) else {
            return Ok(false);
        };
        let Ok(old) = serde_json::from_str::<Manifest>(&text) else {
            return Ok(false);
        };
        if old.stage != self.name || old.config != self.config || old.inputs != self.input_digests()? {
            return Ok(false);
        }
        for (role, path) in &self.outputs {
            let Some(recorded) = old.outputs.get(*role) else {
                return Ok(false);
            };
            if !path.exists() || sha256_file(path)? != recorded.sha256 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn write_manifest(&self) -> Result<(), CliError> {
        let outputs: Vec<(&str, &Path)> = self.outputs.iter().map(|(r, p)| (*r, p.as_path())).collect();
        let m = Manifest {
            stage: self.name.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: self.config.clone(),
            inputs: self.input_digests()?,
            outputs: digests(&outputs)?,
        };
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        fs::write(&self.manifest_path, text).map_err(|e| CliError::io(&self.manifest_path, e))
    }
}

/// `<dir>/<file>.manifest.json` for a standalone command's primary output.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn up_to_date_tracks_config_inputs_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        let output = dir.path().join("out.txt");
        fs::write(&input, "a").unwrap();
        fs::write(&output, "b").unwrap();
        let stage = |seed: u64| Stage {
            name: "s",
            config: json!({ "seed": seed }),
            inputs: vec![("in", input.clone())],
            outputs: vec![("out", output.clone())],
            manifest_path: dir.path().join("s.manifest.json"),
        };
        assert!(!stage(0).up_to_date().unwrap());
        stage(0).write_manifest().unwrap();
        assert!(stage(0).up_to_date().unwrap());
        assert!(!stage(1).up_to_date().unwrap());

        fs::write(&output, "tampered").unwrap();
        assert!(!stage(0).up_to_date().unwrap());
        stage(0).write_manifest().unwrap();
        fs::write(&input, "changed").unwrap();
        assert!(!stage(0).up_to_date().unwrap());

        let text = fs::read_to_string(dir.path().join("s.manifest.json")).unwrap();
        assert!(text.contains("\"path\": \"in.txt\""));
        assert!(!text.contains(&dir.path().display().to_string()));
    }

    #[test]
    fn manifest_names() {
        assert_eq!(
            manifest_path_for(Path::new("a/b/model.json")),
            PathBuf::from("a/b/model.json.manifest.json")
        );
    }
}
