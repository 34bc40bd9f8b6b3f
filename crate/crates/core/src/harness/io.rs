//! Atomic file writes and PGM frame export.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::latent::VideoLatent;

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Binary (P5) 8-bit PGM bytes for a `height x width` image.
pub fn encode_pgm(pixels: &[u8], height: usize, width: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Writes one PGM per frame as `frame_NNN.pgm`. Values are min-max
/// normalized over the whole video and upscaled by nearest neighbour.
pub fn export_frames(video: &VideoLatent, out_dir: impl AsRef<Path>, scale: usize) -> Result<Vec<PathBuf>> {
    let dims = video.dims();
    if dims.channels != 1 {
        return Err(Error::Shape(format!(
            "PGM export supports single-channel latents, got {} channels",
            dims.channels
        )));
    }
    if scale == 0 {
        return Err(Error::InvalidParameter("export scale must be at least 1".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (lo, hi) = video.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let range = hi - lo;
    let (h, w) = (dims.height, dims.width);
    let mut paths = Vec::with_capacity(video.frames());
    for (i, frame) in video.iter_frames().enumerate() {
        let mut pixels = Vec::with_capacity(h * w * scale * scale);
        for r in 0..h * scale {
            for c in 0..w * scale {
                let v = frame[(r / scale) * w + c / scale];
                let p = if range > 0.0 { ((v - lo) / range * 255.0).round() } else { 0.0 };
                pixels.push(p as u8);
            }
        }
        let path = out_dir.join(format!("frame_{i:03}.pgm"));
        write_atomic(&path, &encode_pgm(&pixels, h * scale, w * scale))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Parses a P5 PGM into `(height, width, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Parse("not a binary PGM".into()));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM field {s:?}")));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let pixels = bytes.get(pos + 1..).unwrap_or_default().to_vec();
    if pixels.len() != w * h {
        return Err(Error::Parse(format!("PGM has {} pixels, header says {}", pixels.len(), w * h)));
    }
    Ok((h, w, pixels))
}
