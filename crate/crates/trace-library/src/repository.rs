use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use measurement_core::{read_records, DescriptorQuery, TraceDescriptor};
use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::prng::SplitMix64;
use crate::trace::NetworkTrace;

/// Name of the manifest file inside a trace repository.
pub const MANIFEST_FILE: &str = "manifest.json";

/// One manifest entry: a trace file and the setup it was collected under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub run_id: String,
    pub records: u64,
    pub descriptor: TraceDescriptor,
}

/// The repository manifest: maps every trace file to its descriptor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json_pretty(&self) -> Result<String, TraceError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, dir: &Path) -> Result<(), TraceError> {
        fs::write(dir.join(MANIFEST_FILE), self.to_json_pretty()? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Manifest, TraceError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| TraceError::BadManifest(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A directory of trace files indexed by a manifest.
pub struct TraceRepository {
    root: PathBuf,
    manifest: Manifest,
    cache: Mutex<HashMap<(String, bool), Arc<NetworkTrace>>>,
}

impl TraceRepository {
    /// Opens a repository, reading the manifest and checking that every
    /// listed file exists. Files are parsed lazily on selection.
    pub fn open(root: impl Into<PathBuf>) -> Result<TraceRepository, TraceError> {
        let root = root.into();
        let manifest = Manifest::read(&root)?;
        for entry in &manifest.entries {
            let path = root.join(&entry.file);
            if !path.is_file() {
                return Err(TraceError::BadManifest(format!(
                    "manifest entry `{}` does not exist under {}",
                    entry.file,
                    root.display()
                )));
            }
            entry.descriptor.validate()?;
        }
        Ok(TraceRepository {
            root,
            manifest,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Manifest entries matching `query`, in manifest order.
    pub fn candidates(&self, query: &DescriptorQuery) -> Vec<&ManifestEntry> {
        self.manifest
            .entries
            .iter()
            .filter(|entry| query.matches(&entry.descriptor))
            .collect()
    }

    /// Selects one matching entry: `candidates[SplitMix64(seed) mod n]`.
    /// Identical (repository, query, seed) always picks the same file.
    pub fn select(
        &self,
        query: &DescriptorQuery,
        seed: u64,
    ) -> Result<&ManifestEntry, TraceError> {
        let candidates = self.candidates(query);
        if candidates.is_empty() {
            let mut ranked: Vec<&ManifestEntry> = self.manifest.entries.iter().collect();
            ranked.sort_by_key(|entry| std::cmp::Reverse(query.agreement(&entry.descriptor)));
            let nearest = ranked
                .iter()
                .take(3)
                .map(|entry| {
                    format!(
                        "{} ({} {} {} {} {} cross={})",
                        entry.file,
                        entry.descriptor.method,
                        entry.descriptor.metric,
                        entry.descriptor.segment,
                        entry.descriptor.direction,
                        entry.descriptor.access_technology,
                        entry.descriptor.cross_traffic_mbps,
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            return Err(TraceError::NoMatch {
                nearest: if nearest.is_empty() {
                    "(repository is empty)".into()
                } else {
                    nearest
                },
            });
        }
        let idx = SplitMix64::new(seed).next_index(candidates.len());
        Ok(candidates[idx])
    }

    /// Loads a manifest entry into a replayable trace.
    pub fn load_entry(
        &self,
        entry: &ManifestEntry,
        circular: bool,
    ) -> Result<Arc<NetworkTrace>, TraceError> {
        let key = (entry.file.clone(), circular);
        if let Some(trace) = self.cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(trace));
        }
        let path = self.root.join(&entry.file);
        let records = read_records(&path).map_err(|e| TraceError::BadTraceFile {
            file: entry.file.clone(),
            reason: e.to_string(),
        })?;
        let trace = NetworkTrace::from_records(entry.descriptor.clone(), &records, circular)
            .map_err(|e| TraceError::BadTraceFile {
                file: entry.file.clone(),
                reason: e.to_string(),
            })?;
        let trace = Arc::new(trace);
        self.cache.lock().unwrap().insert(key, Arc::clone(&trace));
        Ok(trace)
    }

    /// Seeded selection plus load: the library's main entry point.
    pub fn open_trace(
        &self,
        query: &DescriptorQuery,
        seed: u64,
        circular: bool,
    ) -> Result<Arc<NetworkTrace>, TraceError> {
        let entry = self.select(query, seed)?;
        self.load_entry(entry, circular)
    }
}
