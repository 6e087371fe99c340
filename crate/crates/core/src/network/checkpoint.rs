//! Checkpoint files, little-endian throughout.
//!
//! ```text
//! "PCBW" | u32 version | u32 n | n bytes of JSON {config, step_count}
//! u32 tensor count
//! per tensor: u16 name length | name | u8 rank | u32 dims[rank] | f32 payload
//! ```
//!
//! The parameters come first in network order, followed by each parameter's
//! Adam moments as `<name>.adam_m` and `<name>.adam_v`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkConfig, NetworkError};
use crate::tensor::{AdamState, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PCBW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    step_count: u64,
}

pub fn encode_checkpoint(net: &Network<f32>) -> Result<Vec<u8>, NetworkError> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let header = serde_json::to_vec(&Header { config: net.config.clone(), step_count: net.step_count() })
        .map_err(|e| NetworkError::Config(format!("cannot serialize config: {e}")))?;
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);

    let mut tensors: Vec<(String, &[usize], &[f32])> = Vec::new();
    for (name, p) in net.parameters() {
        tensors.push((name.to_string(), p.dims(), p.data()));
    }
    for ((name, p), state) in net.parameters().zip(net.optimizer_states()) {
        tensors.push((format!("{name}.adam_m"), p.dims(), state.first_moment()));
        tensors.push((format!("{name}.adam_v"), p.dims(), state.second_moment()));
    }
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, dims, data) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dims.len() as u8);
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn fail(&self, detail: impl Into<String>) -> NetworkError {
        NetworkError::Format { offset: self.at as u64, detail: detail.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NetworkError> {
        if self.bytes.len() - self.at < n {
            return Err(self.fail(format!("truncated while reading {what}: need {n} bytes")));
        }
        let slice = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8, NetworkError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, NetworkError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32, NetworkError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network<f32>, NetworkError> {
    let mut cur = Cursor { bytes, at: 0 };
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(NetworkError::Format { offset: 0, detail: "bad magic, not a checkpoint".into() });
    }
    let version_at = cur.at;
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(NetworkError::Format {
            offset: version_at as u64,
            detail: format!("version {version}, this build reads {CHECKPOINT_VERSION}"),
        });
    }
    let header_len = cur.u32("config length")? as usize;
    let header_at = cur.at;
    let header: Header = serde_json::from_slice(cur.take(header_len, "config")?)
        .map_err(|e| NetworkError::Format { offset: header_at as u64, detail: format!("config: {e}") })?;
    header.config.validate()?;

    let shapes = header.config.parameter_shapes();
    let mut expected: Vec<(String, Vec<usize>)> = shapes.clone();
    for (name, dims) in &shapes {
        expected.push((format!("{name}.adam_m"), dims.clone()));
        expected.push((format!("{name}.adam_v"), dims.clone()));
    }
    let count = cur.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(cur.fail(format!("{count} tensors, config implies {}", expected.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for (want_name, want_dims) in &expected {
        let name_at = cur.at;
        let len = cur.u16("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| NetworkError::Format { offset: name_at as u64, detail: "tensor name is not UTF-8".into() })?;
        if name != want_name {
            return Err(NetworkError::Format {
                offset: name_at as u64,
                detail: format!("found {name}, expected {want_name}"),
            });
        }
        let dims_at = cur.at;
        let rank = cur.u8("rank")? as usize;
        let dims = (0..rank).map(|_| cur.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if &dims != want_dims {
            return Err(NetworkError::Format {
                offset: dims_at as u64,
                detail: format!("{name} is {dims:?}, expected {want_dims:?}"),
            });
        }
        let n: usize = dims.iter().product();
        let payload = cur.take(4 * n, name)?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        tensors.push(Tensor::new(dims, data)?);
    }
    if cur.at != bytes.len() {
        return Err(cur.fail(format!("{} trailing bytes", bytes.len() - cur.at)));
    }

    let n_params = shapes.len();
    let mut moments = tensors.split_off(n_params).into_iter();
    let mut optimizer = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let m = moments.next().expect("counted").into_data();
        let v = moments.next().expect("counted").into_data();
        optimizer.push(AdamState::from_parts(header.config.adam, header.step_count, m, v)?);
    }
    Network::from_parts(header.config, tensors, optimizer)
}

pub fn save_checkpoint(net: &Network<f32>, path: &Path) -> Result<(), NetworkError> {
    let bytes = encode_checkpoint(net)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Network<f32>, NetworkError> {
    decode_checkpoint(&fs::read(path)?)
}

impl Network<f32> {
    /// Fails with the names of architecture fields that differ from
    /// `expected`.
    pub fn ensure_architecture(&self, expected: &NetworkConfig) -> Result<(), NetworkError> {
        let fields = self.config.architecture_differences(expected);
        if fields.is_empty() {
            Ok(())
        } else {
            Err(NetworkError::ConfigMismatch { fields })
        }
    }
}
