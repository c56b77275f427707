use std::fs;
use std::path::{Path, PathBuf};

use super::registry::{ModelBundle, SpeakerRegistry};
use crate::error::{Error, Result};

/// File name of one bundle inside a model store directory.
pub fn bundle_file_name(speaker_id: u32, sentence_id: u32) -> String {
    format!("spk{speaker_id:02}_s{sentence_id}.json")
}

/// Writes one JSON file per bundle and returns the paths in key order.
pub fn save_registry(dir: &Path, registry: &SpeakerRegistry) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    registry
        .bundles()
        .map(|b| {
            let path = dir.join(bundle_file_name(b.speaker_id, b.sentence_id));
            let mut bytes = serde_json::to_vec(b)?;
            bytes.push(b'\n');
            fs::write(&path, bytes)?;
            Ok(path)
        })
        .collect()
}

/// Reads every `*.json` bundle in `dir`.
pub fn load_registry(dir: &Path) -> Result<SpeakerRegistry> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    let mut registry = SpeakerRegistry::new();
    for path in paths {
        let text = fs::read_to_string(&path)?;
        let bundle: ModelBundle = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        registry
            .insert(bundle)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    if registry.is_empty() {
        return Err(Error::Empty("model store"));
    }
    Ok(registry)
}
