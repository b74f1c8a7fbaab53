use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::gaussian::{GaussianPrimitive, GaussianSet, SetTag};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RFGS";
pub const VERSION: u32 = 1;

const KIND_SET: u8 = 0;
const KIND_TENSOR: u8 = 1;

/// A named block of numbers, e.g. one network layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub sets: Vec<(String, GaussianSet)>,
    pub tensors: Vec<Tensor>,
    /// Free-form metadata carried in the sidecar only.
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub kind: String,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<SetTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub sections: Vec<SectionInfo>,
    pub extra: serde_json::Value,
}

fn put_f32s(out: &mut Vec<u8>, vals: impl Iterator<Item = f64>) {
    for v in vals {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn set_payload(set: &GaussianSet) -> Vec<u8> {
    let g = &set.gaussians;
    let mut out = Vec::with_capacity(g.len() * 12 * 4);
    for k in 0..3 {
        put_f32s(&mut out, g.iter().map(|p| p.position[k]));
    }
    for k in 0..3 {
        put_f32s(&mut out, g.iter().map(|p| p.log_scale[k]));
    }
    for k in 0..4 {
        put_f32s(&mut out, g.iter().map(|p| p.rotation[k]));
    }
    put_f32s(&mut out, g.iter().map(|p| p.delta_logit));
    put_f32s(&mut out, g.iter().map(|p| p.radiance_base));
    out
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Config("checkpoint is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Config("checkpoint name is not UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint {
            sets: Vec::new(),
            tensors: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn set(&self, name: &str) -> Option<&GaussianSet> {
        self.sets.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// SHA-256 of the stored bytes of a Gaussian set section.
    pub fn set_hash(&self, name: &str) -> Option<String> {
        self.set(name).map(|s| hex(&set_payload(s)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&((self.sets.len() + self.tensors.len()) as u32).to_le_bytes());
        let header = |out: &mut Vec<u8>, kind: u8, name: &str| {
            out.push(kind);
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        };
        for (name, s) in &self.sets {
            header(&mut out, KIND_SET, name);
            out.push(match s.tag {
                SetTag::Background => 0,
                SetTag::Human => 1,
            });
            out.push(s.frozen as u8);
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(&set_payload(s));
        }
        for t in &self.tensors {
            header(&mut out, KIND_TENSOR, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            put_f32s(&mut out, t.data.iter().copied());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Config("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {version}")));
        }
        let n = r.u32()?;
        let mut ck = Checkpoint::new();
        for _ in 0..n {
            let kind = r.u8()?;
            let name = r.string()?;
            match kind {
                KIND_SET => {
                    let tag = match r.u8()? {
                        0 => SetTag::Background,
                        1 => SetTag::Human,
                        t => return Err(Error::Config(format!("unknown set tag {t}"))),
                    };
                    let frozen = r.u8()? != 0;
                    let count = r.u32()? as usize;
                    let v = r.f32s(count * 12)?;
                    let col = |k: usize, i: usize| v[k * count + i];
                    let gaussians = (0..count)
                        .map(|i| GaussianPrimitive {
                            position: [col(0, i), col(1, i), col(2, i)],
                            log_scale: [col(3, i), col(4, i), col(5, i)],
                            rotation: [col(6, i), col(7, i), col(8, i), col(9, i)],
                            delta_logit: col(10, i),
                            radiance_base: col(11, i),
                        })
                        .collect();
                    ck.sets.push((name, GaussianSet { tag, frozen, gaussians }));
                }
                KIND_TENSOR => {
                    let rank = r.u32()? as usize;
                    let shape = (0..rank)
                        .map(|_| r.u32().map(|d| d as usize))
                        .collect::<Result<Vec<_>>>()?;
                    let data = r.f32s(shape.iter().product())?;
                    ck.tensors.push(Tensor { name, shape, data });
                }
                k => return Err(Error::Config(format!("unknown section kind {k}"))),
            }
        }
        if r.pos != buf.len() {
            return Err(Error::Config("trailing bytes after checkpoint sections".into()));
        }
        Ok(ck)
    }

    pub fn sidecar(&self) -> Sidecar {
        let mut sections = Vec::new();
        for (name, s) in &self.sets {
            sections.push(SectionInfo {
                name: name.clone(),
                kind: "gaussians".into(),
                count: s.len(),
                tag: Some(s.tag),
                frozen: Some(s.frozen),
                shape: Vec::new(),
                sha256: hex(&set_payload(s)),
            });
        }
        for t in &self.tensors {
            let mut bytes = Vec::with_capacity(t.data.len() * 4);
            put_f32s(&mut bytes, t.data.iter().copied());
            sections.push(SectionInfo {
                name: t.name.clone(),
                kind: "tensor".into(),
                count: t.data.len(),
                tag: None,
                frozen: None,
                shape: t.shape.clone(),
                sha256: hex(&bytes),
            });
        }
        Sidecar {
            version: VERSION,
            sections,
            extra: self.extra.clone(),
        }
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        let text = serde_json::to_string_pretty(&self.sidecar()).map_err(|e| Error::json("checkpoint sidecar", e))?;
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut ck = Checkpoint::from_bytes(&bytes)?;
        let side = Self::sidecar_path(path);
        if let Ok(text) = std::fs::read_to_string(&side) {
            let sc: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(side.display().to_string(), e))?;
            let fresh = ck.sidecar();
            for (a, b) in sc.sections.iter().zip(&fresh.sections) {
                if a.sha256 != b.sha256 {
                    return Err(Error::Config(format!(
                        "section '{}' does not match its sidecar hash",
                        a.name
                    )));
                }
            }
            ck.extra = sc.extra;
        }
        Ok(ck)
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Checkpoint::new()
    }
}
