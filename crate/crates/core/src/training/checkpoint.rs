//! Training state and its "DIPP" serialization: magic, u32 version, u32
//! entry count, then per entry a u32-length UTF-8 name and a DIPT tensor.
//! Readers look entries up by name and ignore the ones they do not know.

use std::collections::BTreeMap;
use std::io::Read;

use crate::numerics::{Adam, AdamState, ParamStore, Tensor};
use crate::{Error, Result};

pub const DIPP_MAGIC: &[u8; 4] = b"DIPP";
pub const DIPP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub map_lite: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub trace: Vec<EpochMetrics>,
}

impl Checkpoint {
    pub fn fresh(params: ParamStore) -> Self {
        Checkpoint {
            params,
            adam: Adam::default(),
            epoch: 0,
            step: 0,
            trace: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, t) in self.params.iter() {
            let mut t = t.clone();
            t.grad = None;
            entries.insert(format!("param/{name}"), t);
        }
        for (name, s) in &self.adam.states {
            let n = s.m.len();
            entries.insert(format!("adam/m/{name}"), Tensor::new(&[n], s.m.clone()).unwrap());
            entries.insert(format!("adam/v/{name}"), Tensor::new(&[n], s.v.clone()).unwrap());
            let meta = vec![s.beta1_prod, s.beta2_prod, s.steps as f64];
            entries.insert(format!("adam/s/{name}"), Tensor::new(&[3], meta).unwrap());
        }
        entries.insert("meta/epoch".into(), Tensor::scalar(self.epoch as f64));
        entries.insert("meta/step".into(), Tensor::scalar(self.step as f64));
        let trace: Vec<f64> = self
            .trace
            .iter()
            .flat_map(|m| [m.epoch as f64, m.loss, m.map_lite])
            .collect();
        // tensors cannot be empty, so a fresh run simply has no trace entry
        if !self.trace.is_empty() {
            entries.insert("meta/trace".into(), Tensor::new(&[self.trace.len(), 3], trace).unwrap());
        }

        let mut out = Vec::new();
        out.extend_from_slice(DIPP_MAGIC);
        out.extend_from_slice(&DIPP_VERSION.to_le_bytes());
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for (name, t) in &entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&t.to_dipt_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        if &magic != DIPP_MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
        }
        let version = read_u32(r)?;
        if version != DIPP_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(r)?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(|_| Error::Format("truncated entry name".into()))?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
            entries.insert(name, Tensor::read_dipt(r)?);
        }

        let mut params = ParamStore::new();
        let mut adam = Adam::default();
        for (name, t) in &entries {
            if let Some(p) = name.strip_prefix("param/") {
                params.insert(p, t.clone());
            } else if let Some(p) = name.strip_prefix("adam/s/") {
                let get = |kind: &str| {
                    entries
                        .get(&format!("adam/{kind}/{p}"))
                        .map(|t| t.data().to_vec())
                        .ok_or_else(|| Error::Format(format!("missing adam/{kind}/{p}")))
                };
                let s = t.data();
                if s.len() != 3 {
                    return Err(Error::Format(format!("adam/s/{p} has {} values", s.len())));
                }
                adam.states.insert(
                    p.to_string(),
                    AdamState {
                        m: get("m")?,
                        v: get("v")?,
                        beta1_prod: s[0],
                        beta2_prod: s[1],
                        steps: s[2] as u64,
                    },
                );
            }
        }
        let scalar = |name: &str| -> Result<f64> {
            entries
                .get(name)
                .map(Tensor::item)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))
        };
        let trace = match entries.get("meta/trace") {
            Some(t) => t
                .data()
                .chunks_exact(3)
                .map(|c| EpochMetrics {
                    epoch: c[0] as usize,
                    loss: c[1],
                    map_lite: c[2],
                })
                .collect(),
            None => Vec::new(),
        };
        Ok(Checkpoint {
            params,
            adam,
            epoch: scalar("meta/epoch")? as usize,
            step: scalar("meta/step")? as u64,
            trace,
        })
    }
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated checkpoint".into()))?;
    Ok(u32::from_le_bytes(b))
}
