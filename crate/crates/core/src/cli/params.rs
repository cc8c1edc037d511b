//! Binary parameter file for a trained denoiser.
//!
//! Layout, all little-endian:
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 0..9  | magic `DEDPO-NET`                        |
//! | 9     | format version (1)                       |
//! | 10..12| data dimension `d` as u16                |
//! | 12..16| number of diffusion steps `T` as u32     |
//! | 16..  | flat parameter vector as f64             |
//!
//! The hidden width, embedding size and condition count are not stored; the
//! reader takes the expected shape and checks the parameter count against it.

use std::io::{Read, Write};

use crate::diffusion::{DenoiserShape, ToyDenoiser};
use crate::error::{invalid, Error, Result};

pub const MAGIC: &[u8; 9] = b"DEDPO-NET";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;

pub fn write_params<W: Write>(mut w: W, model: &ToyDenoiser, schedule_steps: usize) -> Result<()> {
    let dim = u16::try_from(model.shape().dim).map_err(|_| invalid("data dimension does not fit in 16 bits"))?;
    let steps = u32::try_from(schedule_steps).map_err(|_| invalid("step count does not fit in 32 bits"))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * model.num_params());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&steps.to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read a parameter file written for `shape`. Returns the model and the
/// stored step count.
pub fn read_params<R: Read>(mut r: R, shape: DenoiserShape) -> Result<(ToyDenoiser, usize)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[..9] != MAGIC {
        return Err(invalid("not a DEDPO-NET parameter file"));
    }
    if bytes[9] != VERSION {
        return Err(invalid(format!("unsupported parameter file version {}", bytes[9])));
    }
    let dim = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    let steps = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    if dim != shape.dim {
        return Err(Error::DimensionMismatch {
            expected: shape.dim,
            got: dim,
        });
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() % 8 != 0 {
        return Err(invalid("parameter payload is not a whole number of f64 values"));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((ToyDenoiser::from_params(shape, params)?, steps))
}
