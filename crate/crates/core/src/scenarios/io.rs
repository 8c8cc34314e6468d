//! Scenario sets on disk: a CSV with one row per `(scenario, t)` and a JSON
//! manifest next to it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Role, Scenario, ScenarioSet};
use crate::error::{EmsError, Result};
use crate::model::NoiseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub role: Role,
    pub seed: u64,
    pub profile_id: String,
    pub count: usize,
    pub horizon_steps: usize,
    pub config_hash: String,
    /// SHA-256 of the CSV bytes.
    pub data_sha256: String,
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn artifact_err(path: &Path, reason: impl Into<String>) -> EmsError {
    EmsError::Artifact {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_scenario_set(set: &ScenarioSet, csv_path: &Path, config_hash: &str) -> Result<ScenarioManifest> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["scenario", "t", "d", "b", "n", "c_o"])?;
    for (i, s) in set.scenarios().iter().enumerate() {
        for (t, w) in s.noise.iter().enumerate() {
            wtr.write_record(&[
                i.to_string(),
                t.to_string(),
                w.d.to_string(),
                w.b.to_string(),
                w.n.to_string(),
                w.c_o.to_string(),
            ])?;
        }
    }
    let bytes = wtr.into_inner().map_err(|e| artifact_err(csv_path, e.to_string()))?;
    if let Some(dir) = csv_path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(csv_path, &bytes)?;
    let manifest = ScenarioManifest {
        role: set.role(),
        seed: set.seed(),
        profile_id: set.profile_id().to_string(),
        count: set.len(),
        horizon_steps: set.horizon(),
        config_hash: config_hash.to_string(),
        data_sha256: hex::encode(Sha256::digest(&bytes)),
    };
    fs::write(manifest_path(csv_path), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_scenario_set(csv_path: &Path) -> Result<(ScenarioSet, ScenarioManifest)> {
    let mpath = manifest_path(csv_path);
    let manifest: ScenarioManifest = serde_json::from_slice(
        &fs::read(&mpath).map_err(|e| artifact_err(&mpath, format!("cannot read manifest: {e}")))?,
    )?;
    let bytes = fs::read(csv_path).map_err(|e| artifact_err(csv_path, format!("cannot read: {e}")))?;
    if hex::encode(Sha256::digest(&bytes)) != manifest.data_sha256 {
        return Err(artifact_err(csv_path, "content does not match its manifest hash"));
    }
    let mut scenarios: Vec<Scenario> = Vec::with_capacity(manifest.count);
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| artifact_err(csv_path, format!("bad field {i} in row {:?}", rec.position())))
        };
        let idx = field(0)? as usize;
        let t = field(1)? as usize;
        if idx == scenarios.len() {
            scenarios.push(Scenario { noise: Vec::new() });
        }
        let s = scenarios
            .get_mut(idx)
            .filter(|s| s.noise.len() == t)
            .ok_or_else(|| artifact_err(csv_path, "rows out of order"))?;
        s.noise.push(NoiseVector::new(field(2)?, field(3)?, field(4)?, field(5)?));
    }
    if scenarios.len() != manifest.count {
        return Err(artifact_err(csv_path, "scenario count differs from manifest"));
    }
    let set = ScenarioSet::new(manifest.role, manifest.seed, manifest.profile_id.clone(), scenarios)?;
    Ok((set, manifest))
}
