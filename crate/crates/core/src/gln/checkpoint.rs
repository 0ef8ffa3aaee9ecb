//! Checkpoint container.
//!
//! ```text
//! bytes 0..8    magic "GLNCKPT1"
//! bytes 8..16   header length L, u64 little-endian
//! next L bytes  JSON header: format version, config, skeleton CSV, assignment state,
//!               and the name and length of every stored array, in storage order
//! rest          the arrays back to back as f64 little-endian
//! ```
//!
//! Each parameter `p` stores `p`, `p#adam_m`, `p#adam_v` (its Adam step count lives in
//! the header); each batch norm `s` stores `s#mean`, `s#var`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::GlnConfig;
use super::model::{GlnModel, SgtState};
use crate::error::{Error, Result};
use crate::sgt::{init_autogrids, AssignmentMatrix, SkeletonTopology};
use crate::tensor_engine::rng::seeded;

const MAGIC: &[u8; 8] = b"GLNCKPT1";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum AssignmentHeader {
    Fixed {
        entries: Vec<u8>,
    },
    Learnable {
        temperature: f64,
        noise_enabled: bool,
        noise_cutoff_epoch: usize,
        last_covering: Option<Vec<u8>>,
    },
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: GlnConfig,
    skeleton: String,
    assignment: AssignmentHeader,
    adam_steps: Vec<(String, u64)>,
    arrays: Vec<ArrayEntry>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Incompatible(format!("checkpoint: {}", msg.into()))
}

pub fn save_model(model: &GlnModel, path: &Path) -> Result<()> {
    let mut model = model.clone();
    let assignment = match &model.sgt {
        SgtState::Fixed(s) => AssignmentHeader::Fixed {
            entries: s.entries().to_vec(),
        },
        SgtState::Learnable(st) => AssignmentHeader::Learnable {
            temperature: st.temperature,
            noise_enabled: st.noise_enabled,
            noise_cutoff_epoch: st.noise_cutoff_epoch,
            last_covering: st.last_covering.as_ref().map(|s| s.entries().to_vec()),
        },
    };
    let mut arrays = Vec::new();
    let mut blob: Vec<f64> = Vec::new();
    let mut adam_steps = Vec::new();
    for (name, p) in model.named_params() {
        for (suffix, values) in [("", p.data()), ("#adam_m", &p.adam_m[..]), ("#adam_v", &p.adam_v[..])] {
            arrays.push(ArrayEntry {
                name: format!("{name}{suffix}"),
                len: values.len(),
            });
            blob.extend_from_slice(values);
        }
        adam_steps.push((name, p.step_count));
    }
    for (name, s) in model.named_stats_mut() {
        for (suffix, values) in [("#mean", &s.mean), ("#var", &s.var)] {
            arrays.push(ArrayEntry {
                name: format!("{name}{suffix}"),
                len: values.len(),
            });
            blob.extend_from_slice(values);
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        skeleton: model.topology.to_csv(),
        assignment,
        adam_steps,
        arrays,
    };
    let json = serde_json::to_vec(&header)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    for v in blob {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<GlnModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a model checkpoint"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
    if header.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "format version {} is not supported",
            header.format_version
        )));
    }
    let mut values = bytes[header_end..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    if (bytes.len() - header_end) % 8 != 0 {
        return Err(corrupt("array section is not a whole number of values"));
    }

    let topology = SkeletonTopology::parse(&header.skeleton)?;
    let config = header.config;
    config.validate()?;
    let j = topology.num_joints();
    let mut model = GlnModel::build_layers(&config, &topology, &mut seeded(config.seed))?;
    model.sgt = match header.assignment {
        AssignmentHeader::Fixed { entries } => {
            SgtState::Fixed(AssignmentMatrix::from_entries(config.grid, j, entries)?)
        }
        AssignmentHeader::Learnable {
            temperature,
            noise_enabled,
            noise_cutoff_epoch,
            last_covering,
        } => {
            let mut st = init_autogrids(None, config.grid, j, &mut seeded(0))?;
            st.temperature = temperature;
            st.noise_enabled = noise_enabled;
            st.noise_cutoff_epoch = noise_cutoff_epoch;
            st.last_covering = last_covering
                .map(|e| AssignmentMatrix::from_entries(config.grid, j, e))
                .transpose()?;
            SgtState::Learnable(st)
        }
    };

    let mut entries = header.arrays.into_iter();
    let mut next = |expected: String, len: usize| -> Result<Vec<f64>> {
        let e = entries
            .next()
            .ok_or_else(|| corrupt(format!("missing array {expected}")))?;
        if e.name != expected || e.len != len {
            return Err(corrupt(format!(
                "expected {expected} ({len} values), found {} ({})",
                e.name, e.len
            )));
        }
        let v: Vec<f64> = values.by_ref().take(len).collect();
        if v.len() != len {
            return Err(corrupt(format!("array {expected} is truncated")));
        }
        Ok(v)
    };
    let steps = header.adam_steps;
    for (i, (name, p)) in model.named_params_mut().into_iter().enumerate() {
        let n = p.len();
        let shape = p.shape().to_vec();
        p.value = crate::tensor_engine::Tensor::new(&shape, next(name.clone(), n)?)?;
        p.adam_m = next(format!("{name}#adam_m"), n)?;
        p.adam_v = next(format!("{name}#adam_v"), n)?;
        match steps.get(i) {
            Some((s_name, count)) if *s_name == name => p.step_count = *count,
            _ => return Err(corrupt(format!("missing step count for {name}"))),
        }
    }
    for (name, s) in model.named_stats_mut() {
        let n = s.mean.len();
        s.mean = next(format!("{name}#mean"), n)?;
        s.var = next(format!("{name}#var"), n)?;
    }
    if entries.next().is_some() {
        return Err(corrupt("unexpected trailing arrays"));
    }
    if let SgtState::Learnable(st) = &model.sgt {
        st.check_invariants()?;
    }
    Ok(model)
}

/// Loads and checks the skeleton against `topology`.
pub fn load_model_for(path: &Path, topology: &SkeletonTopology) -> Result<GlnModel> {
    let model = load_model(path)?;
    model.check_topology(topology)?;
    Ok(model)
}
