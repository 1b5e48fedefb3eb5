//! Manifests and 8-bit PNG reading and writing.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};
use ntc_core::{ChannelSpan, Image, TextureSet};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// One manifest entry; `file` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub file: PathBuf,
}

pub fn read_manifest(path: &Path) -> CliResult<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> CliResult<()> {
    let text = serde_json::to_string_pretty(entries).expect("manifest serializes");
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Reads an 8-bit grayscale (1 channel) or RGB (3 channel) PNG as `v / 255`.
pub fn read_png(path: &Path) -> CliResult<Image> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, bytes) = match decoded {
        DynamicImage::ImageLuma8(img) => (1, img.into_raw()),
        DynamicImage::ImageRgb8(img) => (3, img.into_raw()),
        other => {
            return Err(CliError::Data(format!(
                "{}: unsupported pixel format {:?}; expected 8-bit grayscale or RGB",
                path.display(),
                other.color()
            )))
        }
    };
    let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(Image::new(w, h, channels, data)?)
}

/// Loads every texture named in the manifest, in order, into one set.
pub fn load_texture_set(manifest: &Path) -> CliResult<TextureSet> {
    let entries = read_manifest(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let textures = entries
        .iter()
        .map(|e| Ok((e.name.clone(), read_png(&dir.join(&e.file))?)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(TextureSet::from_textures(textures)?)
}

/// `[0, 1]` to a byte: clamp, scale by 255, round half away from zero.
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes channels `start..start + len` of `img`; `len` must be 1 or 3.
pub fn write_png(path: &Path, img: &Image, start: usize, len: usize) -> CliResult<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img
        .data()
        .chunks_exact(img.channels())
        .flat_map(|px| px[start..start + len].iter().map(|&v| to_u8(v)))
        .collect();
    let result = match len {
        1 => GrayImage::from_raw(w, h, bytes).expect("sized buffer").save(path),
        3 => RgbImage::from_raw(w, h, bytes).expect("sized buffer").save(path),
        _ => return Err(CliError::Usage(format!("cannot write a {len}-channel PNG"))),
    };
    result.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// File-name-safe form of a texture name.
pub fn file_stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "texture".into()
    } else {
        s
    }
}

/// Writes one PNG per texture span (or per channel, for spans that are not
/// 1 or 3 wide) of a decoded mip. Returns the paths written.
pub fn write_mip_pngs(dir: &Path, names: &[ChannelSpan], mip: usize, img: &Image) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for span in names {
        let stem = file_stem(&span.name);
        if span.len == 1 || span.len == 3 {
            let path = dir.join(format!("{stem}_mip{mip}.png"));
            write_png(&path, img, span.start, span.len)?;
            out.push(path);
        } else {
            for c in 0..span.len {
                let path = dir.join(format!("{stem}_c{c}_mip{mip}.png"));
                write_png(&path, img, span.start + c, 1)?;
                out.push(path);
            }
        }
    }
    Ok(out)
}

/// Writes each texture of `ts` as a PNG in `dir` plus a `manifest.json`
/// listing them. Returns the manifest path.
pub fn write_texture_set(dir: &Path, ts: &TextureSet) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut entries = Vec::new();
    for span in ts.names() {
        if span.len != 1 && span.len != 3 {
            return Err(CliError::Usage(format!(
                "texture '{}' has {} channels; manifests hold 1 or 3",
                span.name, span.len
            )));
        }
        let file = PathBuf::from(format!("{}.png", file_stem(&span.name)));
        write_png(&dir.join(&file), ts.image(), span.start, span.len)?;
        entries.push(ManifestEntry {
            name: span.name.clone(),
            file,
        });
    }
    let manifest = dir.join("manifest.json");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
