//! Binary checkpoints.
//!
//! Layout (little-endian): the magic `CLIC1`, the config as JSON, the
//! config hash, step, seed, freeze mode, vocabulary, the two weight
//! matrices, both sets of optimizer moments, and a trailing SHA-256 of
//! everything before it. Strings and lists are prefixed with a `u64`
//! length; matrices with `u64` rows and columns.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::config::{Freeze, TrainConfig};
use super::encoder::{ImageEncoder, TextEncoder, Vocab};
use super::optim::Moments;
use super::trainer::TrainState;

pub const MAGIC: &[u8; 5] = b"CLIC1";

/// Header fields readable without restoring the state.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub step: u64,
    pub seed: u64,
    pub freeze: Freeze,
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.write_u64::<LE>(b.len() as u64).unwrap();
    out.extend_from_slice(b);
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    out.write_u64::<LE>(m.rows() as u64).unwrap();
    out.write_u64::<LE>(m.cols() as u64).unwrap();
    for x in m.as_slice() {
        out.write_f64::<LE>(*x).unwrap();
    }
}

fn put_moments(out: &mut Vec<u8>, m: &Moments) {
    put_matrix(out, &m.m);
    put_matrix(out, &m.v);
    out.write_u64::<LE>(m.t).unwrap();
}

fn freeze_code(f: Freeze) -> u8 {
    match f {
        Freeze::None => 0,
        Freeze::Vision => 1,
        Freeze::Text => 2,
    }
}

pub fn encode(state: &TrainState) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    put_bytes(&mut out, serde_json::to_string(&state.config).expect("config serializes").as_bytes());
    put_bytes(&mut out, state.config.hash().as_bytes());
    out.write_u64::<LE>(state.step).unwrap();
    out.write_u64::<LE>(state.config.seed).unwrap();
    out.write_u8(freeze_code(state.config.freeze)).unwrap();
    out.write_u64::<LE>(state.text.vocab.len() as u64).unwrap();
    for t in state.text.vocab.tokens() {
        put_bytes(&mut out, t.as_bytes());
    }
    put_matrix(&mut out, &state.text.w);
    put_matrix(&mut out, &state.image.v);
    put_moments(&mut out, &state.text_moments);
    put_moments(&mut out, &state.image_moments);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a>(Cursor<&'a [u8]>);

fn bad(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

impl Reader<'_> {
    fn u64(&mut self) -> Result<u64> {
        self.0.read_u64::<LE>().map_err(bad)
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        let left = self.0.get_ref().len() as u64 - self.0.position();
        if n > left {
            return Err(bad("length exceeds file size"));
        }
        Ok(n as usize)
    }

    fn bytes(&mut self) -> Result<Vec<u8>> {
        let mut b = vec![0; self.len()?];
        self.0.read_exact(&mut b).map_err(bad)?;
        Ok(b)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?).map_err(bad)
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let r = self.u64()? as usize;
        let c = self.u64()? as usize;
        let n = r.checked_mul(c).ok_or_else(|| bad("matrix too large"))?;
        if n.saturating_mul(8) as u64 > self.0.get_ref().len() as u64 - self.0.position() {
            return Err(bad("matrix exceeds file size"));
        }
        let mut data = vec![0.0; n];
        self.0.read_f64_into::<LE>(&mut data).map_err(bad)?;
        Matrix::from_vec(r, c, data)
    }

    fn moments(&mut self) -> Result<Moments> {
        Ok(Moments {
            m: self.matrix()?,
            v: self.matrix()?,
            t: self.u64()?,
        })
    }
}

fn split_checked(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("not a CLIC1 checkpoint"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    Ok(&body[MAGIC.len()..])
}

fn read_head(r: &mut Reader) -> Result<(TrainConfig, CheckpointMeta)> {
    let config: TrainConfig = serde_json::from_str(&r.string()?)?;
    let config_hash = r.string()?;
    let step = r.u64()?;
    let seed = r.u64()?;
    let freeze = match r.0.read_u8().map_err(bad)? {
        0 => Freeze::None,
        1 => Freeze::Vision,
        2 => Freeze::Text,
        k => return Err(bad(format!("unknown freeze code {k}"))),
    };
    Ok((
        config,
        CheckpointMeta {
            config_hash,
            step,
            seed,
            freeze,
        },
    ))
}

pub fn decode(bytes: &[u8]) -> Result<TrainState> {
    let mut r = Reader(Cursor::new(split_checked(bytes)?));
    let (config, meta) = read_head(&mut r)?;
    if config.hash() != meta.config_hash || config.seed != meta.seed || config.freeze != meta.freeze {
        return Err(bad("header disagrees with stored config"));
    }
    let n = r.len()?;
    let tokens = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let vocab = Vocab::from_tokens(tokens)?;
    let w = r.matrix()?;
    let v = r.matrix()?;
    let text_moments = r.moments()?;
    let image_moments = r.moments()?;
    if r.0.position() as usize != r.0.get_ref().len() {
        return Err(bad("trailing bytes"));
    }
    if w.rows() != vocab.len() || w.cols() != v.cols() || text_moments.m.shape() != w.shape() || image_moments.m.shape() != v.shape() {
        return Err(bad("inconsistent shapes"));
    }
    Ok(TrainState {
        config,
        text: TextEncoder { vocab, w },
        image: ImageEncoder { v },
        text_moments,
        image_moments,
        step: meta.step,
    })
}

pub fn read_meta(bytes: &[u8]) -> Result<CheckpointMeta> {
    let mut r = Reader(Cursor::new(split_checked(bytes)?));
    Ok(read_head(&mut r)?.1)
}

pub fn save(path: &Path, state: &TrainState) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(state)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<TrainState> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
