//! Raw clip files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PCB1"
//! 4       4     depth   (u32 LE)
//! 8       4     height  (u32 LE)
//! 12      4     width   (u32 LE)
//! 16      1     dtype   (0 = f32)
//! 17      4·n   f32 LE payload, (d, h, w) row-major
//! ```

use std::fs;
use std::path::Path;

use crate::tensor::Tensor;

use super::DatasetError;

pub const CLIP_MAGIC: [u8; 4] = *b"PCB1";
pub const CLIP_HEADER_LEN: usize = 17;
const DTYPE_F32: u8 = 0;

pub fn encode_clip(frames: &Tensor<f32>) -> Result<Vec<u8>, DatasetError> {
    let d = frames.dims();
    if d.len() != 3 {
        return Err(DatasetError::Validation(format!("clip files hold [D, H, W] volumes, got {d:?}")));
    }
    let mut out = Vec::with_capacity(CLIP_HEADER_LEN + 4 * frames.len());
    out.extend_from_slice(&CLIP_MAGIC);
    for &extent in d {
        let extent = u32::try_from(extent)
            .map_err(|_| DatasetError::Validation(format!("extent {extent} does not fit in u32")))?;
        out.extend_from_slice(&extent.to_le_bytes());
    }
    out.push(DTYPE_F32);
    for v in frames.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_clip(bytes: &[u8]) -> Result<Tensor<f32>, DatasetError> {
    let fail = |offset: usize, detail: String| DatasetError::Format { offset: offset as u64, detail };
    if bytes.len() < CLIP_HEADER_LEN {
        return Err(fail(bytes.len(), format!("header needs {CLIP_HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    if bytes[..4] != CLIP_MAGIC {
        return Err(fail(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let mut dims = Vec::with_capacity(3);
    for (i, at) in [4, 8, 12].into_iter().enumerate() {
        let v = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice")) as usize;
        if v == 0 {
            return Err(fail(at, format!("dimension {i} is zero")));
        }
        dims.push(v);
    }
    if bytes[16] != DTYPE_F32 {
        return Err(fail(16, format!("unsupported dtype {}", bytes[16])));
    }
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let expected = count.and_then(|n| n.checked_mul(4)).and_then(|n| n.checked_add(CLIP_HEADER_LEN));
    match expected {
        Some(len) if len == bytes.len() => {}
        Some(len) if len > bytes.len() => {
            return Err(fail(bytes.len(), format!("payload truncated: header {dims:?} needs {len} bytes")))
        }
        Some(len) => return Err(fail(len, format!("{} trailing bytes after payload", bytes.len() - len))),
        None => return Err(fail(4, format!("dimensions {dims:?} overflow"))),
    }
    let data = bytes[CLIP_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Ok(Tensor::new(dims, data)?)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_clip(path: &Path, frames: &Tensor<f32>) -> Result<(), DatasetError> {
    let bytes = encode_clip(frames)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_clip(path: &Path) -> Result<Tensor<f32>, DatasetError> {
    decode_clip(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f32> {
        Tensor::from_fn(vec![2, 3, 4], |i| i as f32 / 24.0).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let t = sample();
        let bytes = encode_clip(&t).unwrap();
        assert_eq!(bytes.len(), CLIP_HEADER_LEN + 4 * 24);
        assert_eq!(&bytes[..4], b"PCB1");
        let back = decode_clip(&bytes).unwrap();
        assert_eq!(back.dims(), t.dims());
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corruptions_report_offsets() {
        let bytes = encode_clip(&sample()).unwrap();
        let offset = |b: &[u8]| match decode_clip(b) {
            Err(DatasetError::Format { offset, .. }) => offset,
            other => panic!("{other:?}"),
        };
        let mut magic = bytes.clone();
        magic[1] = b'X';
        assert_eq!(offset(&magic), 0);
        assert_eq!(offset(&bytes[..10]), 10);
        assert_eq!(offset(&bytes[..bytes.len() - 3]), bytes.len() as u64 - 3);
        let mut dtype = bytes.clone();
        dtype[16] = 1;
        assert_eq!(offset(&dtype), 16);
        let mut depth = bytes.clone();
        depth[4] = 3;
        assert_eq!(offset(&depth), bytes.len() as u64);
        let mut longer = bytes.clone();
        longer.push(0);
        assert_eq!(offset(&longer), bytes.len() as u64);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("SB_1.pcb");
        write_clip(&path, &sample()).unwrap();
        assert_eq!(read_clip(&path).unwrap(), sample());
        assert!(!dir.path().join("SB_1.pcb.tmp").exists());
    }
}
