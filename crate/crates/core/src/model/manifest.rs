//! Line-delimited JSON dataset manifests.
//!
//! Line 1 is a header record
//! `{"format_version":1,"world_config_hash":…,"seed":…,"sample_count":…}`;
//! every following line is one [`DatasetSample`]. Reals are rounded to 9
//! significant digits when a sample enters a [`Manifest`], which makes
//! `read(write(m)) == m` exact.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sample::DatasetSample;
use super::ModelError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Invalid(#[from] ModelError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate sample id {id:?} on lines {first_line} and {second_line}")]
    DuplicateLine {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    world_config_hash: String,
    seed: u64,
    sample_count: usize,
}

/// An ordered collection of samples with unique ids.
#[derive(Debug, Clone)]
pub struct Manifest {
    world_config_hash: String,
    seed: u64,
    samples: Vec<DatasetSample>,
    index: HashMap<String, usize>,
}

impl PartialEq for Manifest {
    fn eq(&self, other: &Self) -> bool {
        self.world_config_hash == other.world_config_hash
            && self.seed == other.seed
            && self.samples == other.samples
    }
}

impl Manifest {
    pub fn new(world_config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            world_config_hash: world_config_hash.into(),
            seed,
            samples: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// An empty manifest carrying the same world hash and seed.
    pub fn empty_like(&self) -> Self {
        Self::new(self.world_config_hash.clone(), self.seed)
    }

    pub fn world_config_hash(&self) -> &str {
        &self.world_config_hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples(&self) -> &[DatasetSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetSample> {
        self.index.get(id).map(|&i| &self.samples[i])
    }

    pub fn originals(&self) -> impl Iterator<Item = &DatasetSample> {
        self.samples.iter().filter(|s| !s.is_augmented())
    }

    pub fn augmented(&self) -> impl Iterator<Item = &DatasetSample> {
        self.samples.iter().filter(|s| s.is_augmented())
    }

    /// Appends a sample, canonicalizing its reals. Fails on a duplicate id.
    pub fn push(&mut self, mut sample: DatasetSample) -> Result<(), ManifestError> {
        if self.index.contains_key(&sample.id) {
            return Err(ManifestError::DuplicateId(sample.id));
        }
        sample.canonicalize();
        self.index.insert(sample.id.clone(), self.samples.len());
        self.samples.push(sample);
        Ok(())
    }

    /// Sets `quality_error` on an existing sample.
    pub fn set_quality_error(&mut self, id: &str, error: f64) -> bool {
        match self.index.get(id) {
            Some(&i) => {
                self.samples[i].quality_error = Some(super::numfmt::sig9(error));
                true
            }
            None => false,
        }
    }

    /// Checks every sample's own invariants plus label reuse for augmented
    /// samples whose parent is present.
    pub fn validate(&self) -> Result<(), ModelError> {
        for s in &self.samples {
            s.validate()?;
            if let Some(parent) = s.parent_id.as_deref().and_then(|p| self.get(p)) {
                if s.is_augmented() && parent.label != s.label {
                    return Err(ModelError::InvalidSample {
                        id: s.id.clone(),
                        reason: format!("label differs from parent {}", parent.id),
                    });
                }
            }
        }
        Ok(())
    }

    /// Serialized bytes, exactly as [`write_manifest`] stores them.
    pub fn to_bytes(&self) -> Result<Vec<u8>, ManifestError> {
        self.validate()?;
        let header = Header {
            format_version: FORMAT_VERSION,
            world_config_hash: self.world_config_hash.clone(),
            seed: self.seed,
            sample_count: self.samples.len(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for s in &self.samples {
            serde_json::to_writer(&mut out, s).expect("sample serializes");
            out.push(b'\n');
        }
        Ok(out)
    }

    /// Hex SHA-256 of [`Manifest::to_bytes`].
    pub fn content_hash(&self) -> Result<String, ManifestError> {
        Ok(crate::hash::sha256_hex(&self.to_bytes()?))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ManifestError> {
        let text = std::str::from_utf8(bytes).map_err(|e| ManifestError::Parse {
            line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
            message: "invalid UTF-8".into(),
        })?;
        let mut lines = text.split_inclusive('\n').enumerate();
        let (_, head) = lines.next().ok_or(ManifestError::Parse {
            line: 1,
            message: "missing header record".into(),
        })?;
        let header: Header = parse_line(head, 1)?;
        if header.format_version != FORMAT_VERSION {
            return Err(ManifestError::Parse {
                line: 1,
                message: format!("unsupported format_version {}", header.format_version),
            });
        }
        let mut manifest = Manifest::new(header.world_config_hash, header.seed);
        let mut first_seen: HashMap<String, usize> = HashMap::new();
        for (i, raw) in lines {
            let line = i + 1;
            let sample: DatasetSample = parse_line(raw, line)?;
            if let Some(&first_line) = first_seen.get(&sample.id) {
                return Err(ManifestError::DuplicateLine {
                    id: sample.id,
                    first_line,
                    second_line: line,
                });
            }
            first_seen.insert(sample.id.clone(), line);
            manifest.push(sample)?;
        }
        if manifest.len() != header.sample_count {
            return Err(ManifestError::Parse {
                line: manifest.len() + 1,
                message: format!(
                    "header declares {} samples, found {}",
                    header.sample_count,
                    manifest.len()
                ),
            });
        }
        manifest.validate()?;
        Ok(manifest)
    }
}

fn parse_line<T: for<'de> Deserialize<'de>>(raw: &str, line: usize) -> Result<T, ManifestError> {
    let Some(body) = raw.strip_suffix('\n') else {
        return Err(ManifestError::Parse {
            line,
            message: "truncated record (no trailing newline)".into(),
        });
    };
    serde_json::from_str(body).map_err(|e| ManifestError::Parse {
        line,
        message: e.to_string(),
    })
}

pub fn write_manifest(manifest: &Manifest, destination: &Path) -> Result<(), ManifestError> {
    let bytes = manifest.to_bytes()?;
    let io = |source| ManifestError::Io {
        path: destination.display().to_string(),
        source,
    };
    if let Some(dir) = destination.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(destination).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    Ok(())
}

pub fn read_manifest(source: &Path) -> Result<Manifest, ManifestError> {
    let bytes = fs::read(source).map_err(|e| ManifestError::Io {
        path: source.display().to_string(),
        source: e,
    })?;
    Manifest::from_bytes(&bytes)
}
