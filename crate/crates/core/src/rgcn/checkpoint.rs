//! Binary model checkpoint: magic, format version, config as JSON, then each
//! tensor as `rows:u32 cols:u32` followed by little-endian f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::model::{Params, RgcnConfig, RgcnModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn tensor_shapes(params: &Params) -> Vec<(usize, usize)> {
    let mut shapes = Vec::new();
    for layer in &params.layers {
        shapes.push(layer.self_weight.dim());
        shapes.extend(layer.relation_weights.iter().map(|w| w.dim()));
    }
    for head in &params.heads {
        shapes.push(head.weight.dim());
        shapes.push((1, head.bias.len()));
    }
    shapes
}

pub fn write_checkpoint<W: Write>(model: &RgcnModel, mut out: W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    let config = serde_json::to_vec(&model.config)?;
    out.write_u32::<LittleEndian>(config.len() as u32)?;
    out.write_all(&config)?;
    let shapes = tensor_shapes(&model.params);
    out.write_u32::<LittleEndian>(shapes.len() as u32)?;
    for ((rows, cols), values) in shapes.into_iter().zip(model.params.slices()) {
        out.write_u32::<LittleEndian>(rows as u32)?;
        out.write_u32::<LittleEndian>(cols as u32)?;
        for &v in values {
            out.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<RgcnModel> {
    let bad = |m: &str| Error::parse("checkpoint", 0, m);
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| bad("missing header"))?;
    if &magic != MAGIC {
        return Err(bad("not a model checkpoint"));
    }
    let version = input
        .read_u32::<LittleEndian>()
        .map_err(|_| bad("missing version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let len = input
        .read_u32::<LittleEndian>()
        .map_err(|_| bad("missing config"))? as usize;
    let mut config = vec![0u8; len];
    input
        .read_exact(&mut config)
        .map_err(|_| bad("truncated config"))?;
    let config: RgcnConfig = serde_json::from_slice(&config)?;
    config.validate()?;
    let mut params = Params::zeros(&config);
    let expected = tensor_shapes(&params);
    let count = input
        .read_u32::<LittleEndian>()
        .map_err(|_| bad("missing tensor count"))? as usize;
    if count != expected.len() {
        return Err(bad("tensor count does not match config"));
    }
    for ((rows, cols), dst) in expected.into_iter().zip(params.slices_mut()) {
        let r = input.read_u32::<LittleEndian>().map_err(|_| bad("truncated"))? as usize;
        let c = input.read_u32::<LittleEndian>().map_err(|_| bad("truncated"))? as usize;
        if (r, c) != (rows, cols) {
            return Err(bad("tensor shape does not match config"));
        }
        input
            .read_f64_into::<LittleEndian>(dst)
            .map_err(|_| bad("truncated tensor data"))?;
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint weights".into()));
    }
    Ok(RgcnModel { config, params })
}

pub fn save_checkpoint(model: &RgcnModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(model, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<RgcnModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let model = RgcnModel::new(RgcnConfig {
            input_dim: 5,
            hidden: 4,
            layers: 2,
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), model);
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn wrong_version_is_explicit() {
        let model = RgcnModel::new(RgcnConfig {
            input_dim: 2,
            hidden: 2,
            layers: 1,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        buf[4] = 9;
        assert!(matches!(
            read_checkpoint(buf.as_slice()),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }
}
