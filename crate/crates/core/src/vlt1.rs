//! `VLT1` raw latent files.
//!
//! Layout: one ASCII header line `VLT1 L D C H W\n`, followed by `L * D`
//! little-endian `f32` values, frame-major.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::latent::{Dims, VideoLatent};

const MAGIC: &str = "VLT1";
const MAX_HEADER: usize = 256;

pub fn encode(video: &VideoLatent) -> Vec<u8> {
    let dims = video.dims();
    let header =
        format!("{MAGIC} {} {} {} {} {}\n", video.frames(), video.frame_len(), dims.channels, dims.height, dims.width);
    let mut out = Vec::with_capacity(header.len() + 4 * video.data().len());
    out.extend_from_slice(header.as_bytes());
    for v in video.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<VideoLatent> {
    let newline = bytes
        .iter()
        .take(MAX_HEADER)
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Parse("VLT1 header line not found".into()))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::Parse("VLT1 header is not ASCII".into()))?;
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(Error::Parse(format!("bad VLT1 magic in header {header:?}")));
    }
    let nums = fields
        .map(|f| f.parse::<usize>().map_err(|_| Error::Parse(format!("bad VLT1 header field {f:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let [frames, d, c, h, w] = nums[..] else {
        return Err(Error::Parse(format!("VLT1 header needs 5 integers, got {}", nums.len())));
    };
    let dims = Dims::new(c, h, w);
    if dims.len() != d {
        return Err(Error::Shape(format!("VLT1 header D = {d} but C*H*W = {}", dims.len())));
    }
    let body = &bytes[newline + 1..];
    let expected = frames
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Parse("VLT1 header sizes overflow".into()))?;
    if body.len() != expected {
        return Err(Error::Parse(format!("VLT1 body has {} bytes, header implies {expected}", body.len())));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    VideoLatent::new(data, frames, dims)
}

pub fn write(video: &VideoLatent, mut w: impl Write) -> Result<()> {
    w.write_all(&encode(video)).map_err(|e| Error::io("<writer>", e))
}

pub fn read(mut r: impl Read) -> Result<VideoLatent> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io("<reader>", e))?;
    decode(&bytes)
}

pub fn write_file(video: &VideoLatent, path: impl AsRef<Path>) -> Result<()> {
    crate::harness::io::write_atomic(path, &encode(video))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<VideoLatent> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let v = VideoLatent::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, Dims::new(1, 1, 2)).unwrap();
        let bytes = encode(&v);
        assert!(bytes.starts_with(b"VLT1 3 2 1 1 2\n"));
        assert_eq!(bytes.len(), "VLT1 3 2 1 1 2\n".len() + 24);
        assert_eq!(&bytes[15..19], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode(b"VLT2 1 1 1 1 1\n\0\0\0\0").is_err());
        assert!(decode(b"VLT1 1 2 1 1 1\n\0\0\0\0").is_err());
        assert!(decode(b"VLT1 1 1 1 1 1\n\0\0\0").is_err());
        assert!(decode(b"VLT1 1 1 1 1\n\0\0\0\0").is_err());
        assert!(decode(b"no newline").is_err());
    }

    proptest! {
        #[test]
        fn f32_values_round_trip(
            frames in 1usize..4,
            d in 1usize..9,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::rng::SeededRng::new(seed);
            let v = crate::latent::sample_gaussian(frames, Dims::flat(d), &mut rng).unwrap();
            let once = decode(&encode(&v)).unwrap();
            let bytes = encode(&once);
            let twice = decode(&bytes).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(bytes, encode(&twice));
            for (a, b) in v.data().iter().zip(once.data()) {
                prop_assert_eq!(*a as f32, *b as f32);
            }
        }
    }
}
