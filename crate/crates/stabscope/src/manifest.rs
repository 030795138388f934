//! Per-stage manifests and the fingerprint chain between stages.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Scenarios,
    Simulate,
    BuildDb,
    Train,
    Explain,
    Trends,
    Intervene,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Scenarios,
        Stage::Simulate,
        Stage::BuildDb,
        Stage::Train,
        Stage::Explain,
        Stage::Trends,
        Stage::Intervene,
        Stage::Report,
    ];

    /// Command name.
    pub fn name(self) -> &'static str {
        match self {
            Stage::Scenarios => "scenarios",
            Stage::Simulate => "simulate",
            Stage::BuildDb => "build-db",
            Stage::Train => "train",
            Stage::Explain => "explain",
            Stage::Trends => "trends",
            Stage::Intervene => "intervene",
            Stage::Report => "report",
        }
    }

    /// Directory holding the stage manifest.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Scenarios => "scenarios",
            Stage::Simulate => "cct",
            Stage::BuildDb => "tsdb",
            Stage::Train => "models",
            Stage::Explain => "shap_cube",
            Stage::Trends => "trends",
            Stage::Intervene => "interventions",
            Stage::Report => "report",
        }
    }

    /// Every directory the stage writes; they are cleared before a run.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Scenarios => &["scenarios"],
            Stage::Simulate => &["operating_points", "cct"],
            Stage::BuildDb => &["tsdb"],
            Stage::Train => &["models"],
            Stage::Explain => &["shap_cube"],
            Stage::Trends => &["trends"],
            Stage::Intervene => &["interventions"],
            Stage::Report => &["report"],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    /// Hash of this stage's configuration and of its inputs' fingerprints.
    pub fingerprint: String,
    /// Hash of the whole configuration and case file.
    pub config_hash: String,
    /// Fingerprints of the stages read, by stage name.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every written file, by path relative to the output root.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn path(out: &Path, stage: Stage) -> std::path::PathBuf {
        out.join(stage.dir()).join(MANIFEST)
    }

    /// Reads the manifest of `upstream` on behalf of `stage` and checks that it
    /// is current: the fingerprint matches `expected` and no file changed.
    pub fn require(out: &Path, stage: Stage, upstream: Stage, expected: &str) -> Result<Manifest> {
        let path = Self::path(out, upstream);
        if !path.exists() {
            return Err(Error::MissingPrerequisite { stage: stage.name(), needed: upstream.name() });
        }
        let m: Manifest = io::read_json(&path)?;
        if m.fingerprint != expected {
            return Err(Error::HashMismatch {
                stage: stage.name(),
                artifact: format!("{} output", upstream.name()),
                expected: expected.into(),
                found: m.fingerprint,
            });
        }
        for (rel, hash) in &m.files {
            let found = match std::fs::read(out.join(rel)) {
                Ok(bytes) => io::sha256_hex(&bytes),
                Err(_) => return Err(Error::MissingPrerequisite { stage: stage.name(), needed: upstream.name() }),
            };
            if &found != hash {
                return Err(Error::HashMismatch {
                    stage: stage.name(),
                    artifact: rel.clone(),
                    expected: hash.clone(),
                    found,
                });
            }
        }
        Ok(m)
    }
}

/// Files a stage produces, committed together with the manifest.
pub struct StageOutput {
    stage: Stage,
    files: Vec<(String, Vec<u8>)>,
}

impl StageOutput {
    pub fn new(stage: Stage) -> Self {
        Self { stage, files: Vec::new() }
    }

    /// `rel` is relative to the output root, with `/` separators.
    pub fn add(&mut self, rel: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((rel.into(), bytes));
    }

    /// Clears the stage directories, writes every file atomically and the
    /// manifest last, so an interrupted run never looks complete.
    pub fn commit(self, out: &Path, fingerprint: &str, config_hash: &str, inputs: BTreeMap<String, String>) -> Result<Manifest> {
        for dir in self.stage.outputs() {
            let d = out.join(dir);
            if d.exists() {
                std::fs::remove_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            }
        }
        let mut files = BTreeMap::new();
        for (rel, bytes) in &self.files {
            io::write_atomic(&out.join(rel), bytes)?;
            files.insert(rel.clone(), io::sha256_hex(bytes));
        }
        let m = Manifest {
            stage: self.stage.name().into(),
            fingerprint: fingerprint.into(),
            config_hash: config_hash.into(),
            inputs,
            files,
        };
        io::write_atomic(&Manifest::path(out, self.stage), &io::to_json(&m))?;
        Ok(m)
    }
}
