//! Single-file checkpoint container.
//!
//! ```text
//! magic "VTOKCKPT" | u32 version | u64 header length | JSON header
//! | sha256(header) | array blocks (f64, little-endian)
//! ```
//!
//! The header records every array's name, shape, byte offset into the block
//! region and sha256, so a flipped byte anywhere is reported on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::DiffusionBackend;
use crate::encoding::{EncoderConfig, FourierEncoder, InputRole};
use crate::error::{Error, Result};
use crate::geometry::PoseNormalizer;
use crate::mapper::{MapperConfig, MapperRole, TokenMapper};
use crate::training::config::TrainConfig;
use crate::training::engine::{MapperState, Models};

pub const MAGIC: &[u8; 8] = b"VTOKCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    SingleScene,
    Pretrain,
    Nvs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub regime: Regime,
    pub config: TrainConfig,
    pub models: Models,
    pub descriptor_digest: String,
    pub step: u64,
}

impl Checkpoint {
    /// Fails unless the checkpoint was produced against `backend`.
    pub fn check_backend(&self, backend: &dyn DiffusionBackend) -> Result<()> {
        let got = backend.descriptor().digest();
        if got != self.descriptor_digest {
            return Err(Error::DescriptorMismatch {
                expected: self.descriptor_digest.clone(),
                got,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MapperEntry {
    slot: String,
    role: MapperRole,
    mapper: MapperConfig,
    encoder: EncoderConfig,
    encoder_roles: Vec<InputRole>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    regime: Regime,
    config: TrainConfig,
    seed: u64,
    step: u64,
    descriptor_digest: String,
    normalizer: PoseNormalizer,
    reference_norm: f64,
    mappers: Vec<MapperEntry>,
    arrays: Vec<ArrayEntry>,
}

fn scene_slot(id: &str) -> String {
    format!("scene:{id}")
}

fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut slots: Vec<(String, &MapperState)> = vec![("view".into(), &ckpt.models.view)];
    slots.extend(ckpt.models.scenes.iter().map(|(id, s)| (scene_slot(id), s)));

    let mut mappers = Vec::new();
    let mut arrays = Vec::new();
    let mut blocks = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, values: &[f64]| {
        let bytes = f64_bytes(values);
        arrays.push(ArrayEntry {
            name,
            shape,
            offset: blocks.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        blocks.extend_from_slice(&bytes);
    };
    for (slot, state) in &slots {
        let freq = state.encoder.frequencies();
        let freq_flat: Vec<f64> = freq.iter().copied().collect();
        push(format!("{slot}/encoder.frequencies"), vec![freq.nrows(), freq.ncols()], &freq_flat);
        for t in &state.mapper.layout().tensors {
            push(format!("{slot}/{}", t.name), t.shape.clone(), &state.mapper.params()[t.range()]);
        }
        mappers.push(MapperEntry {
            slot: slot.clone(),
            role: state.mapper.role(),
            mapper: state.mapper.config().clone(),
            encoder: state.encoder.config().clone(),
            encoder_roles: state.encoder.roles().to_vec(),
        });
    }

    let header = Header {
        regime: ckpt.regime,
        config: ckpt.config.clone(),
        seed: ckpt.config.seed,
        step: ckpt.step,
        descriptor_digest: ckpt.descriptor_digest.clone(),
        normalizer: ckpt.models.normalizer.clone(),
        reference_norm: ckpt.models.reference_norm,
        mappers,
        arrays,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(blocks.len() + json.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&Sha256::digest(&json));
    out.extend_from_slice(&blocks);
    out
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt(format!("truncated checkpoint while reading {what}")))?;
    let out = &bytes[*at..end];
    *at = end;
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut at = 0;
    if take(bytes, &mut at, 8, "magic")? != MAGIC {
        return Err(corrupt("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let len = u64::from_le_bytes(take(bytes, &mut at, 8, "header length")?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| corrupt("header length overflows"))?;
    let json = take(bytes, &mut at, len, "header")?;
    let sum = take(bytes, &mut at, 32, "header checksum")?;
    if Sha256::digest(json).as_slice() != sum {
        return Err(corrupt("header checksum mismatch"));
    }
    let header: Header =
        serde_json::from_slice(json).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let blocks = &bytes[at..];

    let mut arrays = BTreeMap::new();
    let mut expected_end = 0u64;
    for a in &header.arrays {
        let count: usize = a.shape.iter().product();
        let start = usize::try_from(a.offset).map_err(|_| corrupt("array offset overflows"))?;
        let end = start
            .checked_add(count * 8)
            .filter(|&e| e <= blocks.len())
            .ok_or_else(|| corrupt(format!("truncated checkpoint in array {:?}", a.name)))?;
        let raw = &blocks[start..end];
        if hex::encode(Sha256::digest(raw)) != a.sha256 {
            return Err(corrupt(format!("checksum mismatch in array {:?}", a.name)));
        }
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.insert(a.name.clone(), (a.shape.clone(), values));
        expected_end = expected_end.max(end as u64);
    }
    if expected_end != blocks.len() as u64 {
        return Err(corrupt("trailing bytes after the last array"));
    }

    let mut view = None;
    let mut scenes = BTreeMap::new();
    for m in &header.mappers {
        let (fshape, freq) = arrays
            .remove(&format!("{}/encoder.frequencies", m.slot))
            .ok_or_else(|| corrupt(format!("missing encoder for {}", m.slot)))?;
        if fshape.len() != 2 {
            return Err(corrupt(format!("encoder array for {} is not 2-d", m.slot)));
        }
        let freq = Array2::from_shape_vec((fshape[0], fshape[1]), freq)
            .map_err(|e| corrupt(e.to_string()))?;
        let encoder = FourierEncoder::from_parts(m.encoder.clone(), m.encoder_roles.clone(), freq)?;
        let mut mapper = TokenMapper::init(m.mapper.clone(), m.role, 0)?;
        let specs = mapper.layout().tensors.clone();
        let params = mapper.params_mut();
        for t in specs {
            let (shape, values) = arrays
                .remove(&format!("{}/{}", m.slot, t.name))
                .ok_or_else(|| corrupt(format!("missing tensor {}/{}", m.slot, t.name)))?;
            if shape != t.shape {
                return Err(corrupt(format!("shape mismatch for {}/{}", m.slot, t.name)));
            }
            params[t.range()].copy_from_slice(&values);
        }
        let state = MapperState { mapper, encoder };
        match m.slot.strip_prefix("scene:") {
            Some(id) => {
                scenes.insert(id.to_string(), state);
            }
            None if m.slot == "view" => view = Some(state),
            None => return Err(corrupt(format!("unknown mapper slot {:?}", m.slot))),
        }
    }
    if let Some(name) = arrays.keys().next() {
        return Err(corrupt(format!("unreferenced array {name:?}")));
    }
    let view = view.ok_or_else(|| corrupt("no view mapper"))?;

    Ok(Checkpoint {
        regime: header.regime,
        config: header.config,
        models: Models {
            view,
            scenes,
            normalizer: header.normalizer,
            reference_norm: header.reference_norm,
        },
        descriptor_digest: header.descriptor_digest,
        step: header.step,
    })
}

/// Writes atomically: a temporary sibling file is renamed over `path`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = to_bytes(ckpt);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, additionally checking the descriptor digest when a
/// backend is given.
pub fn load_checkpoint(path: &Path, backend: Option<&dyn DiffusionBackend>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(b) = backend {
        ckpt.check_backend(b)?;
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::MockBackend;
    use crate::geometry::{CameraPose, PoseKind};

    fn sample(backend: &MockBackend) -> Checkpoint {
        let d = backend.descriptor().embed_dim;
        let enc = EncoderConfig::default();
        let view = MapperState {
            mapper: TokenMapper::init(MapperConfig::view(d), MapperRole::View, 1).unwrap(),
            encoder: FourierEncoder::view(enc.clone(), 2).unwrap(),
        };
        let scene = MapperState {
            mapper: TokenMapper::init(MapperConfig::scene(d), MapperRole::Scene, 2).unwrap(),
            encoder: FourierEncoder::scene(enc).unwrap(),
        };
        let poses = [CameraPose::spherical(1.2, 0.3, 3.0).unwrap()];
        Checkpoint {
            regime: Regime::Pretrain,
            config: TrainConfig::default(),
            models: Models {
                view,
                scenes: [("a b".to_string(), scene)].into(),
                normalizer: PoseNormalizer::fit(PoseKind::Spherical, &poses, "t").unwrap(),
                reference_norm: 1.0 / 3.0,
            },
            descriptor_digest: backend.descriptor().digest(),
            step: 7,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let b = MockBackend::new(0);
        let c = sample(&b);
        let bytes = to_bytes(&c);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn every_flipped_block_byte_is_detected() {
        let b = MockBackend::new(0);
        let bytes = to_bytes(&sample(&b));
        let len = bytes.len();
        for pos in (0..len).step_by(97).chain([len - 1]) {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x01;
            assert!(from_bytes(&bad).is_err(), "byte {pos} not detected");
        }
        assert!(from_bytes(&bytes[..len - 3]).is_err());
    }

    #[test]
    fn version_and_descriptor_checks() {
        let b = MockBackend::new(0);
        let mut bytes = to_bytes(&sample(&b));
        bytes[8] = 9;
        assert!(matches!(from_bytes(&bytes), Err(Error::Checkpoint(m)) if m.contains("version")));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&sample(&b), &path).unwrap();
        assert!(load_checkpoint(&path, Some(&b)).is_ok());
        let other = MockBackend::with_config(crate::backend::mock::MockConfig {
            timesteps: 50,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            load_checkpoint(&path, Some(&other)),
            Err(Error::DescriptorMismatch { .. })
        ));
    }
}
