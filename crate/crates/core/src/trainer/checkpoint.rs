use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{HeadMode, Model};
use crate::tensor::{ParamSet, Tensor};

const MAGIC: &[u8; 8] = b"LGPNMT01";

/// Named `f32` tensors plus the head mode and the vocabulary hashes they were trained against.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamSet<f32>,
    pub mode: HeadMode,
    pub source_hash: u64,
    /// Zero for a parser-only checkpoint.
    pub target_hash: u64,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>) -> Self {
        Checkpoint {
            params: model.params.clone(),
            mode: model.mode(),
            source_hash: model.source_hash,
            target_hash: model.target_hash,
        }
    }

    pub fn into_model(self) -> Result<Model<f32>> {
        Model::from_params(self.params, self.mode, self.source_hash, self.target_hash)
    }

    pub fn is_parser_only(&self) -> bool {
        self.params.iter().all(|(n, _)| n.starts_with("parser."))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 4 * self.params.num_values());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.push(self.mode.code());
        out.extend_from_slice(&self.source_hash.to_le_bytes());
        out.extend_from_slice(&self.target_hash.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let count = r.u32()? as usize;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank == 0 {
                return Err(Error::Checkpoint(format!("{name}: rank 0")));
            }
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let n = n.filter(|&n| n <= (bytes.len() - r.pos) / 4).ok_or_else(|| {
                Error::Checkpoint(format!("{name}: dims {dims:?} exceed the file"))
            })?;
            let data = r.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(dims, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            if params.id(&name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
            }
            params.insert(name, t);
        }
        let mode = HeadMode::from_code(r.take(1)?[0])?;
        let source_hash = r.u64()?;
        let target_hash = r.u64()?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { params, mode, source_hash, target_hash })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Element-wise mean of checkpoints with identical layout.
///
/// Each element's values are sorted before summation in `f64`, so the result
/// does not depend on the order of `checkpoints`.
pub fn average_checkpoints(checkpoints: &[Checkpoint]) -> Result<Checkpoint> {
    let first = checkpoints.first().ok_or_else(|| Error::Invalid("nothing to average".into()))?;
    for (k, c) in checkpoints.iter().enumerate().skip(1) {
        if c.mode != first.mode || c.source_hash != first.source_hash || c.target_hash != first.target_hash {
            return Err(Error::Checkpoint(format!("checkpoint {k} has a different mode or vocabularies")));
        }
        if c.params.len() != first.params.len() {
            return Err(Error::Shape(format!("checkpoint {k} has {} tensors, expected {}", c.params.len(), first.params.len())));
        }
        for (name, t) in first.params.iter() {
            match c.params.by_name(name) {
                Some(u) if u.dims() == t.dims() => {}
                _ => return Err(Error::Shape(format!("checkpoint {k}: tensor {name} missing or reshaped"))),
            }
        }
    }
    let k = checkpoints.len() as f64;
    let mut params = ParamSet::new();
    let mut column = Vec::with_capacity(checkpoints.len());
    for (name, t) in first.params.iter() {
        let sources: Vec<&[f32]> = checkpoints.iter().map(|c| c.params.by_name(name).unwrap().data()).collect();
        let data = (0..t.len())
            .map(|i| {
                column.clear();
                column.extend(sources.iter().map(|s| s[i] as f64));
                column.sort_by(f64::total_cmp);
                (column.iter().copied().reduce(|a, b| a + b).unwrap_or(0.0) / k) as f32
            })
            .collect();
        params.insert(name, Tensor::new(t.dims().to_vec(), data)?);
    }
    Ok(Checkpoint { params, mode: first.mode, source_hash: first.source_hash, target_hash: first.target_hash })
}
