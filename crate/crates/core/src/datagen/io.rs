use std::io::{Read, Write};

use super::{DatagenError, GraphSample, FEATURE_COUNT};

/// First eight bytes of every dataset container.
pub const CONTAINER_MAGIC: [u8; 8] = *b"MGNNDATA";
pub const CONTAINER_VERSION: u32 = 1;

/// Writes samples as: magic, version (u32), node count, feature count and
/// sample count (u64 each), then per sample its global index (u64), the
/// `nodes × features` block and the `nodes × 3` label block. Integers and
/// floats are little-endian; floats are IEEE-754 binary64.
pub fn write_container<W: Write>(
    w: &mut W,
    node_count: usize,
    samples: &[(usize, &GraphSample)],
) -> Result<(), DatagenError> {
    let io = |e: std::io::Error| DatagenError::Io(e.to_string());
    w.write_all(&CONTAINER_MAGIC).map_err(io)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes()).map_err(io)?;
    for v in [node_count, FEATURE_COUNT, samples.len()] {
        w.write_all(&(v as u64).to_le_bytes()).map_err(io)?;
    }
    for &(index, s) in samples {
        if s.features.len() != node_count * FEATURE_COUNT || s.labels.len() != node_count * 3 {
            return Err(DatagenError::RowMismatch {
                expected: node_count,
                found: s.labels.len() / 3,
            });
        }
        w.write_all(&(index as u64).to_le_bytes()).map_err(io)?;
        let mut buf = Vec::with_capacity(8 * (s.features.len() + s.labels.len()));
        for x in s.features.iter().chain(&s.labels) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

/// One decoded sample: global index, features and labels.
pub type RawSample = (usize, Vec<f64>, Vec<f64>);

pub fn read_container<R: Read>(r: &mut R) -> Result<(usize, Vec<RawSample>), DatagenError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| DatagenError::Io(e.to_string()))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != CONTAINER_MAGIC {
        return Err(DatagenError::Format("not a dataset container".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(DatagenError::Format(format!("unsupported container version {version}")));
    }
    let nodes = cur.u64()? as usize;
    let features = cur.u64()? as usize;
    let count = cur.u64()? as usize;
    if features != FEATURE_COUNT {
        return Err(DatagenError::Format(format!("expected {FEATURE_COUNT} features, found {features}")));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let index = cur.u64()? as usize;
        let f = cur.f64s(nodes * FEATURE_COUNT)?;
        let l = cur.f64s(nodes * 3)?;
        out.push((index, f, l));
    }
    if cur.pos != bytes.len() {
        return Err(DatagenError::Format("trailing bytes after last sample".into()));
    }
    Ok((nodes, out))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatagenError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DatagenError::Format("container is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, DatagenError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, DatagenError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| DatagenError::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
