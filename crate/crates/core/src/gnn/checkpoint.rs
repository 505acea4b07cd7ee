use std::path::Path;

use crate::autodiff::Tensor;

use super::{GnnError, Model, ModelConfig};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"MGNNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with the SHA-256 of the dataset manifest it was
/// trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub manifest_sha256: [u8; 32],
}

impl Checkpoint {
    /// Layout: magic, version (u32), config JSON length (u64) and bytes, the
    /// 32-byte manifest hash, parameter count (u64), then per parameter its
    /// name (u64 length + UTF-8), rank (u64), dims (u64 each) and values.
    /// Everything is little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config = serde_json::to_vec(self.model.config()).expect("config serializes");
        put_u64(&mut out, config.len());
        out.extend_from_slice(&config);
        out.extend_from_slice(&self.manifest_sha256);
        put_u64(&mut out, self.model.params().len());
        for (name, p) in self.model.names().iter().zip(self.model.params()) {
            put_u64(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u64(&mut out, p.shape().len());
            for &d in p.shape() {
                put_u64(&mut out, d);
            }
            for x in p.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GnnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(GnnError::Checkpoint("not a model checkpoint".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(GnnError::Checkpoint(format!("unsupported version {version}")));
        }
        let len = r.u64()?;
        let config: ModelConfig =
            serde_json::from_slice(r.take(len)?).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        let manifest_sha256: [u8; 32] = r.take(32)?.try_into().unwrap();
        let count = r.u64()?;
        let mut params = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u64()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| GnnError::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.u64()?;
            if rank > 3 {
                return Err(GnnError::Checkpoint(format!("{name}: rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| GnnError::Checkpoint("size overflow".into()))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| GnnError::Checkpoint("size overflow".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            params.push(Tensor::new(&shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(GnnError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            model: Model::from_params(config, params)?,
            manifest_sha256,
        })
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), GnnError> {
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| GnnError::Io(format!("{}: {e}", path.display())))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, GnnError> {
    let bytes = std::fs::read(path).map_err(|e| GnnError::Io(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GnnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| GnnError::Checkpoint("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize, GnnError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| GnnError::Checkpoint("size overflow".into()))
    }
}
