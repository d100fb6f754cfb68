use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    codes_to_tensor, images_to_tensor, tensor_to_codes, tensor_to_images, tensor_to_landmarks,
    AdapterError, BackendDescriptor, BackendKind, Encoder, Generator, Landmarker, Tensor,
};
use crate::model::{ImageGrid, LandmarkSet, LatentCode};

pub const LEASE_FILE: &str = "exchange.lease";
const POLL: Duration = Duration::from_millis(1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestMeta {
    pub request_id: String,
    pub kind: BackendKind,
    pub count: usize,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseMeta {
    pub request_id: String,
    pub kind: BackendKind,
    pub count: usize,
    pub dims: Vec<usize>,
    /// Request index of each response row; absent means `0..count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub(crate) fn request_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("req-{id}.json")),
        dir.join(format!("req-{id}.laxb")),
    )
}

pub(crate) fn response_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("resp-{id}.json")),
        dir.join(format!("resp-{id}.laxb")),
    )
}

/// Writes via a dot-prefixed temporary and a rename, so readers never see a
/// partial file under the final name.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AdapterError> {
    let name = path.file_name().expect("file path").to_string_lossy();
    let tmp = path.with_file_name(format!(".tmp-{name}"));
    std::fs::write(&tmp, bytes).map_err(|e| AdapterError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| AdapterError::io(path, e))
}

fn remove_quiet(paths: &[&Path]) {
    for p in paths {
        let _ = std::fs::remove_file(p);
    }
}

/// Client side of the file exchange protocol. Requests to one directory are
/// serialized; use distinct directories for backends that should run
/// concurrently.
pub struct ExchangeBackend {
    desc: BackendDescriptor,
    lock: Mutex<()>,
    counter: AtomicU64,
}

impl ExchangeBackend {
    pub fn new(desc: BackendDescriptor) -> Result<Self, AdapterError> {
        desc.validate()?;
        Ok(Self {
            desc,
            lock: Mutex::new(()),
            counter: AtomicU64::new(0),
        })
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    /// Whether a lease from an earlier, unfinished exchange is present.
    pub fn has_stale_lease(&self) -> bool {
        self.desc.exchange_dir.join(LEASE_FILE).exists()
    }

    fn next_id(&self) -> String {
        format!(
            "{}-{:08}",
            std::process::id(),
            self.counter.fetch_add(1, Ordering::Relaxed)
        )
    }

    /// One full round trip. Returns the response tensor reordered by request
    /// index, with every index present exactly once.
    fn round_trip(&self, kind: BackendKind, request: Tensor) -> Result<Tensor, AdapterError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let dir = &self.desc.exchange_dir;
        std::fs::create_dir_all(dir).map_err(|e| AdapterError::io(dir, e))?;
        let lease = dir.join(LEASE_FILE);
        if lease.exists() {
            return Err(AdapterError::StaleLease(dir.display().to_string()));
        }
        let id = self.next_id();
        let count = request.rows();
        let meta = RequestMeta {
            request_id: id.clone(),
            kind,
            count,
            dims: request.dims.clone(),
        };
        write_atomic(&lease, id.as_bytes())?;
        let (req_json, req_bin) = request_paths(dir, &id);
        let (resp_json, resp_bin) = response_paths(dir, &id);
        let cleanup = |extra: &[&Path]| {
            remove_quiet(extra);
            remove_quiet(&[&lease]);
        };
        let sent = write_atomic(&req_bin, &request.to_bytes()).and_then(|()| {
            write_atomic(
                &req_json,
                &serde_json::to_vec(&meta).expect("request meta serializes"),
            )
        });
        if let Err(e) = sent {
            cleanup(&[&req_json, &req_bin]);
            return Err(e);
        }

        let start = Instant::now();
        while !resp_json.exists() {
            if start.elapsed() >= self.desc.timeout {
                cleanup(&[&req_json, &req_bin, &resp_json, &resp_bin]);
                return Err(AdapterError::Timeout {
                    kind,
                    request_id: id,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
            std::thread::sleep(POLL);
        }
        let result = read_response(&resp_json, &resp_bin, &id, kind, count);
        cleanup(&[&req_json, &req_bin, &resp_json, &resp_bin]);
        result
    }
}

fn read_response(
    json: &Path,
    bin: &Path,
    id: &str,
    kind: BackendKind,
    count: usize,
) -> Result<Tensor, AdapterError> {
    let text = std::fs::read(json).map_err(|e| AdapterError::io(json, e))?;
    let meta: ResponseMeta = serde_json::from_slice(&text)
        .map_err(|e| AdapterError::Malformed(format!("{}: {e}", json.display())))?;
    if meta.request_id != id || meta.kind != kind {
        return Err(AdapterError::Malformed(format!(
            "response echoes {} {}, expected {kind} {id}",
            meta.kind, meta.request_id
        )));
    }
    if let Some(err) = meta.error {
        return Err(AdapterError::Backend(err));
    }
    let bytes = std::fs::read(bin).map_err(|e| AdapterError::io(bin, e))?;
    let tensor = Tensor::from_bytes(&bytes)?;
    if tensor.dims != meta.dims || tensor.rows() != meta.count {
        return Err(AdapterError::Malformed(format!(
            "metadata says {} rows with dims {:?}, tensor has dims {:?}",
            meta.count, meta.dims, tensor.dims
        )));
    }
    let indices = meta.indices.unwrap_or_else(|| (0..meta.count).collect());
    if indices.len() != tensor.rows() {
        return Err(AdapterError::Malformed(format!(
            "{} indices for {} rows",
            indices.len(),
            tensor.rows()
        )));
    }
    let mut slot = vec![usize::MAX; count];
    for (row, &idx) in indices.iter().enumerate() {
        if idx >= count || slot[idx] != usize::MAX {
            return Err(AdapterError::Malformed(format!(
                "response index {idx} out of range or repeated"
            )));
        }
        slot[idx] = row;
    }
    let missing: Vec<usize> = (0..count).filter(|&i| slot[i] == usize::MAX).collect();
    if !missing.is_empty() {
        return Err(AdapterError::CountMismatch {
            expected: count,
            got: tensor.rows(),
            missing,
        });
    }
    let mut dims = tensor.dims.clone();
    dims[0] = count;
    let mut data = Vec::with_capacity(tensor.data.len());
    for &row in &slot {
        data.extend_from_slice(tensor.row(row));
    }
    Tensor::new(dims, data)
}

impl Generator for ExchangeBackend {
    fn latent_dim(&self) -> usize {
        self.desc.latent_dim
    }

    fn decode(&self, codes: &[LatentCode]) -> Result<Vec<ImageGrid>, AdapterError> {
        if codes.is_empty() {
            return Ok(Vec::new());
        }
        let req = codes_to_tensor(codes, self.desc.latent_dim)?;
        let resp = self.round_trip(BackendKind::Generator, req)?;
        tensor_to_images(&resp, self.desc.image_height, self.desc.image_width)
    }
}

impl Encoder for ExchangeBackend {
    fn encode(&self, images: &[ImageGrid]) -> Result<Vec<LatentCode>, AdapterError> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self.round_trip(BackendKind::Encoder, images_to_tensor(images)?)?;
        tensor_to_codes(&resp, self.desc.latent_dim)
    }
}

impl Landmarker for ExchangeBackend {
    fn landmark_count(&self) -> usize {
        self.desc.landmark_count
    }

    fn landmarks(&self, images: &[ImageGrid]) -> Result<Vec<Option<LandmarkSet>>, AdapterError> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self.round_trip(BackendKind::Landmarker, images_to_tensor(images)?)?;
        tensor_to_landmarks(&resp, self.desc.landmark_count)
    }
}
