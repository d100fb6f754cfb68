use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::exchange::{request_paths, response_paths, write_atomic};
use super::{
    images_to_tensor, landmarks_to_tensor, tensor_to_codes, tensor_to_images, AdapterError,
    BackendKind, Encoder, Generator, Landmarker, RequestMeta, ResponseMeta, SyntheticBackend,
    Tensor,
};

/// What a server sends back for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub tensor: Tensor,
    pub indices: Option<Vec<usize>>,
    pub error: Option<String>,
}

impl Reply {
    pub fn ok(tensor: Tensor) -> Self {
        Self {
            tensor,
            indices: None,
            error: None,
        }
    }

    pub fn failed(message: impl Into<String>) -> Self {
        Self {
            tensor: Tensor {
                dims: vec![0],
                data: Vec::new(),
            },
            indices: None,
            error: Some(message.into()),
        }
    }
}

pub type Handler = dyn Fn(&RequestMeta, &Tensor) -> Reply + Send + Sync;

/// Answers requests with a synthetic world, exactly as the in-process
/// backend would.
pub fn synthetic_handler(backend: Arc<SyntheticBackend>) -> Arc<Handler> {
    Arc::new(move |meta: &RequestMeta, t: &Tensor| {
        let cfg = backend.config();
        let n = cfg.image_size();
        let result: Result<Tensor, AdapterError> = match meta.kind {
            BackendKind::Generator => tensor_to_codes(t, cfg.dim())
                .and_then(|codes| backend.decode(&codes))
                .and_then(|imgs| {
                    if imgs.is_empty() {
                        Tensor::new(vec![0, n, n, 3], Vec::new())
                    } else {
                        images_to_tensor(&imgs)
                    }
                }),
            BackendKind::Encoder => tensor_to_images(t, n, n)
                .and_then(|imgs| backend.encode(&imgs))
                .and_then(|codes| super::codes_to_tensor(&codes, cfg.dim())),
            BackendKind::Landmarker => tensor_to_images(t, n, n)
                .and_then(|imgs| backend.landmarks(&imgs))
                .map(|sets| landmarks_to_tensor(&sets, cfg.landmark_count())),
        };
        match result {
            Ok(t) => Reply::ok(t),
            Err(e) => Reply::failed(e.to_string()),
        }
    })
}

/// A server thread polling an exchange directory.
pub struct LoopbackServer {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    dir: PathBuf,
}

impl LoopbackServer {
    pub fn spawn(dir: impl Into<PathBuf>, handler: Arc<Handler>) -> Result<Self, AdapterError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| AdapterError::io(&dir, e))?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let d = dir.clone();
        let handle = std::thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                match serve_pending(&d, handler.as_ref()) {
                    Ok(0) => std::thread::sleep(Duration::from_millis(1)),
                    Ok(_) => {}
                    Err(e) => {
                        log::error!("loopback server: {e}");
                        std::thread::sleep(Duration::from_millis(10));
                    }
                }
            }
        });
        Ok(Self {
            stop,
            handle: Some(handle),
            dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Answers every complete request currently in `dir`; returns how many.
fn serve_pending(dir: &Path, handler: &Handler) -> Result<usize, AdapterError> {
    let mut ids: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| AdapterError::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_prefix("req-")
                .and_then(|s| s.strip_suffix(".json"))
                .map(str::to_owned)
        })
        .collect();
    ids.sort();
    for id in &ids {
        let (req_json, req_bin) = request_paths(dir, id);
        let meta: RequestMeta = match std::fs::read(&req_json)
            .map_err(|e| e.to_string())
            .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
        {
            Ok(m) => m,
            Err(e) => {
                log::warn!("skipping request {id}: {e}");
                continue;
            }
        };
        let reply = match std::fs::read(&req_bin) {
            Ok(bytes) => match Tensor::from_bytes(&bytes) {
                Ok(t) => handler(&meta, &t),
                Err(e) => Reply::failed(e.to_string()),
            },
            Err(e) => Reply::failed(format!("reading request tensor: {e}")),
        };
        let _ = std::fs::remove_file(&req_json);
        let _ = std::fs::remove_file(&req_bin);
        let resp = ResponseMeta {
            request_id: meta.request_id.clone(),
            kind: meta.kind,
            count: reply.tensor.rows(),
            dims: reply.tensor.dims.clone(),
            indices: reply.indices,
            error: reply.error,
        };
        let (resp_json, resp_bin) = response_paths(dir, &meta.request_id);
        write_atomic(&resp_bin, &reply.tensor.to_bytes())?;
        write_atomic(
            &resp_json,
            &serde_json::to_vec(&resp).expect("response meta serializes"),
        )?;
    }
    Ok(ids.len())
}
