//! Versioned binary model container: magic, JSON header (architecture and
//! training metadata), then little-endian parameter and optimizer tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::model::{ArchSpec, Model};
use super::params::ModelParams;
use super::tensor::Tensor;
use crate::error::{Error, Location, Result};

const MAGIC: &[u8; 8] = b"TDNCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
    pub seed: u64,
    /// Free-form training state (report rows, resolved config, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    arch: ArchSpec,
    meta: CheckpointMeta,
    adam: Option<(AdamConfig, u64)>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
    pub adam: Option<AdamState>,
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend((name.len() as u32).to_le_bytes());
    out.extend(name.as_bytes());
    out.extend((t.rows as u32).to_le_bytes());
    out.extend((t.cols as u32).to_le_bytes());
    for v in &t.data {
        out.extend(v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    label: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.label.to_string(),
            location: Location::Byte(self.pos),
            message: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<(String, Tensor)> {
        let n = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(n)?)
            .map_err(|_| self.err("tensor name is not UTF-8"))?
            .to_string();
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let len = rows.checked_mul(cols).filter(|l| l.checked_mul(8).is_some()).ok_or_else(|| self.err("tensor too large"))?;
        let raw = self.take(len * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok((name, Tensor::from_vec(rows, cols, data)?))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: FORMAT_VERSION,
            arch: self.model.arch.clone(),
            meta: self.meta.clone(),
            adam: self.adam.as_ref().map(|a| (a.config, a.step)),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidData(format!("checkpoint header: {e}")))?;
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend((json.len() as u64).to_le_bytes());
        out.extend(&json);
        let params = &self.model.params;
        out.extend((params.len() as u32).to_le_bytes());
        for (name, t) in params.iter() {
            put_tensor(&mut out, name, t);
        }
        if let Some(a) = &self.adam {
            for (name, t) in params.names().iter().zip(&a.m) {
                put_tensor(&mut out, &format!("adam.m.{name}"), t);
            }
            for (name, t) in params.names().iter().zip(&a.v) {
                put_tensor(&mut out, &format!("adam.v.{name}"), t);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], label: &str) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, label };
        if r.take(8)? != MAGIC {
            return Err(r.err("not a model checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.err(format!("unsupported checkpoint version {version}")));
        }
        let hlen = r.u64()?;
        let hlen = usize::try_from(hlen).map_err(|_| r.err("header too large"))?;
        let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| r.err(format!("bad header: {e}")))?;
        header.arch.validate()?;
        let n = r.u32()? as usize;
        let mut params = ModelParams::new();
        for _ in 0..n {
            let (name, t) = r.tensor()?;
            params.push(name, t);
        }
        let model = Model::from_params(header.arch, params).map_err(|e| match e {
            Error::ArchitectureMismatch { expected, .. } => Error::ArchitectureMismatch {
                expected: format!("tensors matching the header ({expected})"),
                found: "tensors that do not match the header".into(),
            },
            other => other,
        })?;
        let adam = match header.adam {
            None => None,
            Some((config, step)) => {
                let mut read = |prefix: &str| -> Result<Vec<Tensor>> {
                    model
                        .params
                        .iter()
                        .map(|(pname, p)| {
                            let (name, t) = r.tensor()?;
                            if name != format!("{prefix}{pname}") || t.shape() != p.shape() {
                                return Err(r.err(format!("unexpected optimizer tensor `{name}`")));
                            }
                            Ok(t)
                        })
                        .collect()
                };
                let m = read("adam.m.")?;
                let v = read("adam.v.")?;
                Some(AdamState { config, step, m, v })
            }
        };
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes after checkpoint"));
        }
        Ok(Checkpoint {
            model,
            meta: header.meta,
            adam,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    /// Loads and checks that the stored architecture equals `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &ArchSpec) -> Result<Self> {
        let ck = Self::load(path)?;
        if &ck.model.arch != expected {
            return Err(Error::ArchitectureMismatch {
                expected: expected.to_string(),
                found: ck.model.arch.to_string(),
            });
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut model = Model::new(ArchSpec::default(), 3).unwrap();
        model.params.get_mut(0).data[0] = 0.1 + 0.2;
        let mut adam = AdamState::new(AdamConfig::default(), &model.params);
        adam.step = 17;
        adam.m[1].data[0] = -1e-300;
        adam.v[2].data[0] = f64::MIN_POSITIVE;
        Checkpoint {
            model,
            meta: CheckpointMeta {
                step: 17,
                epoch: 4,
                seed: 99,
                extra: serde_json::json!({"losses": [1.5, 0.25]}),
            },
            adam: Some(adam),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap(), "mem").unwrap();
        assert_eq!(back.model.params, ck.model.params);
        assert_eq!(back.model.arch, ck.model.arch);
        assert_eq!(back.meta, ck.meta);
        assert_eq!(back.adam, ck.adam);
    }

    #[test]
    fn file_round_trip_and_arch_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert!(Checkpoint::load_expecting(&path, &ArchSpec::default()).is_ok());
        let other = ArchSpec {
            width_c: 64,
            ..ArchSpec::default()
        };
        let err = Checkpoint::load_expecting(&path, &other).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("64") && msg.contains("96"), "{msg}");
    }

    #[test]
    fn corrupted_bytes_give_errors() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], "t").is_err());
        assert!(Checkpoint::from_bytes(b"garbage", "t").is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad, "t").is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, "t").is_err());
    }
}
