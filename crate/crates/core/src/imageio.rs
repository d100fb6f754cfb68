//! PNG storage for [`ImageGrid`]s and contact-sheet composition.
//!
//! Images are 8-bit RGB PNG. Renders are already snapped to the 8-bit grid,
//! so a write/read cycle returns the identical grid.

use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use crate::model::{ImageGrid, ImageRef, ModelError};

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {message}")]
    Codec { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn write_png(image: &ImageGrid, path: &Path) -> Result<(), ImageIoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ImageIoError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    let buf = RgbImage::from_raw(image.width() as u32, image.height() as u32, image.to_rgb8())
        .expect("buffer matches dimensions");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| ImageIoError::Codec {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

pub fn read_png(path: &Path) -> Result<ImageGrid, ImageIoError> {
    let img = image::open(path).map_err(|e| ImageIoError::Codec {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    Ok(ImageGrid::from_rgb8(
        rgb.height() as usize,
        rgb.width() as usize,
        rgb.as_raw(),
    )?)
}

/// Loads and stores sample images. Path references are relative to `root`;
/// without a root, new images are kept inline in the manifest.
#[derive(Debug, Clone)]
pub struct ImageStore {
    root: Option<PathBuf>,
    prefix: String,
}

impl ImageStore {
    pub fn inline() -> Self {
        Self {
            root: None,
            prefix: String::new(),
        }
    }

    /// New images go to `root/prefix/<id>.png`.
    pub fn at(root: impl Into<PathBuf>, prefix: impl Into<String>) -> Self {
        Self {
            root: Some(root.into()),
            prefix: prefix.into(),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn load(&self, r: &ImageRef) -> Result<ImageGrid, ImageIoError> {
        match r {
            ImageRef::Inline(img) => Ok(img.clone()),
            ImageRef::Path(p) => {
                let root = self.root.as_deref().unwrap_or(Path::new("."));
                read_png(&root.join(p))
            }
        }
    }

    pub fn store(&self, id: &str, image: &ImageGrid) -> Result<ImageRef, ImageIoError> {
        match &self.root {
            None => Ok(ImageRef::Inline(image.clone())),
            Some(root) => {
                let rel = if self.prefix.is_empty() {
                    format!("{id}.png")
                } else {
                    format!("{}/{id}.png", self.prefix)
                };
                write_png(image, &root.join(&rel))?;
                Ok(ImageRef::Path(rel))
            }
        }
    }
}

/// One tile of a contact sheet, optionally outlined.
pub struct Tile<'a> {
    pub image: &'a ImageGrid,
    pub border: Option<[u8; 3]>,
}

/// Lays tiles out row by row on a light background with a 2-pixel gutter.
/// All tiles must share one size.
pub fn contact_sheet(rows: &[Vec<Tile<'_>>]) -> Option<RgbImage> {
    let first = rows.iter().flatten().next()?.image;
    let (th, tw) = (first.height() as u32, first.width() as u32);
    let gutter = 2u32;
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let width = cols * (tw + gutter) + gutter;
    let height = rows.len() as u32 * (th + gutter) + gutter;
    let mut sheet = RgbImage::from_pixel(width, height, image::Rgb([240, 240, 240]));
    for (r, row) in rows.iter().enumerate() {
        for (c, tile) in row.iter().enumerate() {
            let ox = gutter + c as u32 * (tw + gutter);
            let oy = gutter + r as u32 * (th + gutter);
            let bytes = tile.image.to_rgb8();
            for y in 0..th.min(tile.image.height() as u32) {
                for x in 0..tw.min(tile.image.width() as u32) {
                    let o = ((y * tile.image.width() as u32 + x) * 3) as usize;
                    let edge = x == 0 || y == 0 || x + 1 == tw || y + 1 == th;
                    let px = match tile.border {
                        Some(color) if edge => color,
                        _ => [bytes[o], bytes[o + 1], bytes[o + 2]],
                    };
                    sheet.put_pixel(ox + x, oy + y, image::Rgb(px));
                }
            }
        }
    }
    Some(sheet)
}

pub fn save_sheet(sheet: &RgbImage, path: &Path) -> Result<(), ImageIoError> {
    sheet
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| ImageIoError::Codec {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}
