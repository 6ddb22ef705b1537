//! Binary checkpoint container. Embeds a format-version tag, the RNG seed,
//! the epoch, a JSON snapshot of the generator config, and every parameter
//! tensor of both networks in visit order. Loading rebuilds the skeleton
//! from the config and validates tensor names and lengths against it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::ParamTensors;

use super::{DiscriminatorParams, GeneratorConfig, GeneratorParams};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MSCK";

#[derive(Debug)]
pub struct Checkpoint {
    pub seed: u64,
    pub epoch: u32,
    pub config: GeneratorConfig,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
}

fn collect_tensors(
    generator: &GeneratorParams,
    discriminator: &DiscriminatorParams,
) -> Vec<(String, Vec<f64>)> {
    let mut tensors = Vec::new();
    generator.for_each_tensor(&mut |name, t| tensors.push((format!("g.{name}"), t.to_vec())));
    discriminator.for_each_tensor(&mut |name, t| tensors.push((format!("d.{name}"), t.to_vec())));
    tensors
}

pub fn save_checkpoint(
    path: &Path,
    seed: u64,
    epoch: u32,
    generator: &GeneratorParams,
    discriminator: &DiscriminatorParams,
) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION).map_err(io_err)?;
    w.write_u64::<LittleEndian>(seed).map_err(io_err)?;
    w.write_u32::<LittleEndian>(epoch).map_err(io_err)?;
    let config_json = serde_json::to_vec(&generator.config)
        .map_err(|e| Error::Checkpoint(format!("config serialization: {e}")))?;
    w.write_u32::<LittleEndian>(config_json.len() as u32).map_err(io_err)?;
    w.write_all(&config_json).map_err(io_err)?;

    let tensors = collect_tensors(generator, discriminator);
    w.write_u32::<LittleEndian>(tensors.len() as u32).map_err(io_err)?;
    for (name, data) in &tensors {
        w.write_u16::<LittleEndian>(name.len() as u16).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_u64::<LittleEndian>(data.len() as u64).map_err(io_err)?;
        for &v in data {
            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let io_err = |e| Error::io(path, e);
    let file = File::open(path).map_err(io_err)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let seed = r.read_u64::<LittleEndian>().map_err(io_err)?;
    let epoch = r.read_u32::<LittleEndian>().map_err(io_err)?;
    let config_len = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut config_json = vec![0u8; config_len];
    r.read_exact(&mut config_json).map_err(io_err)?;
    let config: GeneratorConfig = serde_json::from_slice(&config_json)
        .map_err(|e| Error::Checkpoint(format!("config snapshot: {e}")))?;
    config.validate()?;

    // Skeletons carry the right shapes; every tensor is overwritten below.
    let mut scaffold_rng = ChaCha8Rng::seed_from_u64(0);
    let mut generator = GeneratorParams::init(&config, &mut scaffold_rng)?;
    let mut discriminator = DiscriminatorParams::init(&config, &mut scaffold_rng);

    let count = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.read_u16::<LittleEndian>().map_err(io_err)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        let len = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let mut data = vec![0f64; len];
        r.read_f64_into::<LittleEndian>(&mut data).map_err(io_err)?;
        tensors.push((name, data));
    }

    let mut idx = 0usize;
    let mut apply = |prefix: &str, name: &str, slot: &mut [f64]| -> Result<()> {
        let full = format!("{prefix}.{name}");
        let (got_name, data) = tensors
            .get(idx)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {full}")))?;
        if got_name != &full {
            return Err(Error::Checkpoint(format!(
                "tensor order mismatch: expected {full}, found {got_name}"
            )));
        }
        if data.len() != slot.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {full}: {} values, expected {}",
                data.len(),
                slot.len()
            )));
        }
        slot.copy_from_slice(data);
        idx += 1;
        Ok(())
    };

    let mut failure = None;
    generator.for_each_tensor_mut(&mut |name, slot| {
        if failure.is_none() {
            if let Err(e) = apply("g", name, slot) {
                failure = Some(e);
            }
        }
    });
    discriminator.for_each_tensor_mut(&mut |name, slot| {
        if failure.is_none() {
            if let Err(e) = apply("d", name, slot) {
                failure = Some(e);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if idx != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} tensors, networks consumed {idx}",
            tensors.len()
        )));
    }
    Ok(Checkpoint {
        seed,
        epoch,
        config,
        generator,
        discriminator,
    })
}
