use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AdapterError, Encoder, Generator, Landmarker};
use crate::model::{ImageGrid, LandmarkSet, LatentCode};
use crate::rng::stream;
use crate::world::{decode_latent, encode, landmarks_true, render, FactoredLatent, WorldConfig};

#[derive(Serialize, Deserialize)]
struct StoreLine {
    key: String,
    z: Vec<f64>,
}

#[derive(Default)]
struct Registry {
    by_key: HashMap<String, FactoredLatent>,
    loaded_bytes: u64,
}

/// Generator, encoder and landmark detector for the synthetic world.
///
/// The world can only "see" faces it rendered, so every rendered image is
/// recorded by content hash together with its factored latent. With a store
/// path the record is an append-only JSON-lines file that several instances,
/// possibly in different processes, share.
pub struct SyntheticBackend {
    cfg: WorldConfig,
    registry: RwLock<Registry>,
    store: Option<(PathBuf, Mutex<()>)>,
}

/// Content key of an image: SHA-256 over its size and 8-bit pixels.
pub(crate) fn image_key(image: &ImageGrid) -> String {
    let mut h = Sha256::new();
    h.update((image.height() as u64).to_le_bytes());
    h.update((image.width() as u64).to_le_bytes());
    h.update(image.to_rgb8());
    hex::encode(h.finalize())
}

impl SyntheticBackend {
    pub fn new(cfg: WorldConfig) -> Self {
        Self {
            cfg,
            registry: RwLock::new(Registry::default()),
            store: None,
        }
    }

    /// Backs the registry with `path`, loading whatever it already holds.
    pub fn with_store(cfg: WorldConfig, path: impl Into<PathBuf>) -> Result<Self, AdapterError> {
        let path = path.into();
        let backend = Self {
            cfg,
            registry: RwLock::new(Registry::default()),
            store: Some((path, Mutex::new(()))),
        };
        backend.refresh()?;
        Ok(backend)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn store_path(&self) -> Option<&Path> {
        self.store.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn known_images(&self) -> usize {
        self.registry.read().expect("registry lock").by_key.len()
    }

    /// Reads store lines appended since the last refresh.
    fn refresh(&self) -> Result<(), AdapterError> {
        let Some((path, _)) = &self.store else {
            return Ok(());
        };
        let mut reg = self.registry.write().expect("registry lock");
        let mut file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(AdapterError::io(path, e)),
        };
        let len = file.metadata().map_err(|e| AdapterError::io(path, e))?.len();
        if len < reg.loaded_bytes {
            // file was truncated or replaced
            reg.loaded_bytes = 0;
        }
        if len <= reg.loaded_bytes {
            return Ok(());
        }
        file.seek(SeekFrom::Start(reg.loaded_bytes))
            .map_err(|e| AdapterError::io(path, e))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)
            .map_err(|e| AdapterError::io(path, e))?;
        // a concurrent writer may have a line in flight
        let complete = buf.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        for line in buf[..complete].split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
            let rec: StoreLine = serde_json::from_slice(line)
                .map_err(|e| AdapterError::Malformed(format!("{}: {e}", path.display())))?;
            let z = FactoredLatent::from_vec(&rec.z, &self.cfg)
                .map_err(|e| AdapterError::Malformed(format!("{}: {e}", path.display())))?;
            reg.by_key.entry(rec.key).or_insert(z);
        }
        reg.loaded_bytes += complete as u64;
        Ok(())
    }

    /// Records `(image, z)` pairs in order.
    pub fn register(&self, items: &[(&ImageGrid, &FactoredLatent)]) -> Result<(), AdapterError> {
        let mut fresh = Vec::new();
        {
            let mut reg = self.registry.write().expect("registry lock");
            for (img, z) in items {
                let key = image_key(img);
                if !reg.by_key.contains_key(&key) {
                    reg.by_key.insert(key.clone(), (*z).clone());
                    fresh.push(StoreLine { key, z: z.to_vec() });
                }
            }
        }
        if let (Some((path, lock)), false) = (&self.store, fresh.is_empty()) {
            let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| AdapterError::io(dir, e))?;
            }
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| AdapterError::io(path, e))?;
            for rec in fresh {
                let mut line = serde_json::to_vec(&rec).expect("store line serializes");
                line.push(b'\n');
                file.write_all(&line).map_err(|e| AdapterError::io(path, e))?;
            }
        }
        Ok(())
    }

    /// Renders faces straight from factored latents and records them. This
    /// is how the world produces its dataset, as opposed to [`Generator`],
    /// which starts from codes.
    pub fn render_faces(&self, zs: &[FactoredLatent]) -> Result<Vec<ImageGrid>, AdapterError> {
        let images = crate::par::map(zs, |z| render(z, &self.cfg))
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| AdapterError::BadRequest {
                    index: i,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pairs: Vec<_> = images.iter().zip(zs).collect();
        self.register(&pairs)?;
        Ok(images)
    }

    /// Factored latent behind a rendered image, if this world drew it.
    pub fn lookup(&self, image: &ImageGrid) -> Option<FactoredLatent> {
        let key = image_key(image);
        if let Some(z) = self.registry.read().expect("registry lock").by_key.get(&key) {
            return Some(z.clone());
        }
        if self.refresh().is_err() {
            return None;
        }
        self.registry
            .read()
            .expect("registry lock")
            .by_key
            .get(&key)
            .cloned()
    }

    fn lookup_all(&self, images: &[ImageGrid]) -> Vec<Option<FactoredLatent>> {
        let keys: Vec<String> = crate::par::map(images, image_key);
        let mut out: Vec<Option<FactoredLatent>> = {
            let reg = self.registry.read().expect("registry lock");
            keys.iter().map(|k| reg.by_key.get(k).cloned()).collect()
        };
        if out.iter().any(Option::is_none) && self.refresh().is_ok() {
            let reg = self.registry.read().expect("registry lock");
            for (slot, k) in out.iter_mut().zip(&keys) {
                if slot.is_none() {
                    *slot = reg.by_key.get(k).cloned();
                }
            }
        }
        out
    }
}

impl Generator for SyntheticBackend {
    fn latent_dim(&self) -> usize {
        self.cfg.dim()
    }

    fn decode(&self, codes: &[LatentCode]) -> Result<Vec<ImageGrid>, AdapterError> {
        let zs = codes
            .iter()
            .enumerate()
            .map(|(i, w)| {
                decode_latent(&w.to_backend_precision(), &self.cfg).map_err(|e| {
                    AdapterError::BadRequest {
                        index: i,
                        message: e.to_string(),
                    }
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.render_faces(&zs)
    }
}

impl Encoder for SyntheticBackend {
    fn encode(&self, images: &[ImageGrid]) -> Result<Vec<LatentCode>, AdapterError> {
        let zs = self.lookup_all(images);
        let seed = self.cfg.params().seed;
        let keyed: Vec<(usize, &ImageGrid, Option<FactoredLatent>)> = images
            .iter()
            .zip(zs)
            .enumerate()
            .map(|(i, (img, z))| (i, img, z))
            .collect();
        crate::par::map(&keyed, |(i, img, z)| {
            let z = z.as_ref().ok_or_else(|| AdapterError::BadRequest {
                index: *i,
                message: "image was not rendered by this world".into(),
            })?;
            let key = image_key(img);
            let tag = u64::from_str_radix(&key[..16], 16).expect("hex digest");
            let w = encode(z, &self.cfg, &mut stream(seed, "encoder", tag)).map_err(|e| {
                AdapterError::BadRequest {
                    index: *i,
                    message: e.to_string(),
                }
            })?;
            Ok(w.to_backend_precision())
        })
        .into_iter()
        .collect()
    }
}

impl Landmarker for SyntheticBackend {
    fn landmark_count(&self) -> usize {
        self.cfg.landmark_count()
    }

    fn landmarks(&self, images: &[ImageGrid]) -> Result<Vec<Option<LandmarkSet>>, AdapterError> {
        let zs = self.lookup_all(images);
        Ok(crate::par::map(&zs, |z| {
            z.as_ref()
                .map(|z| landmarks_true(z, &self.cfg).to_backend_precision())
        }))
    }
}
