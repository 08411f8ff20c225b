//! Network checkpoints.
//!
//! A text header, one `key value` pair per line and terminated by `end`,
//! followed by the parameters as little-endian IEEE-754 doubles in layer
//! order (row-major weights, then bias, per layer; extras last):
//!
//! ```text
//! mfgan-checkpoint
//! version 1
//! input_dim 1
//! widths 2 50 50 1
//! activation tanh
//! embedding torus
//! extras 1
//! params 2752
//! end
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::mlp::{Activation, Embedding, Mlp, ParamVector};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "mfgan-checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub params: ParamVector,
}

impl Checkpoint {
    pub fn new(net: Mlp, params: ParamVector) -> Result<Self> {
        net.check_params(&params)?;
        Ok(Checkpoint { net, params })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.net;
        let widths: Vec<String> = net.widths().iter().map(|w| w.to_string()).collect();
        let header = format!(
            "{MAGIC}\nversion {CHECKPOINT_VERSION}\ninput_dim {}\nwidths {}\nactivation {}\nembedding {}\nextras {}\nparams {}\nend\n",
            net.input_dim(),
            widths.join(" "),
            net.activation().name(),
            net.embedding().name(),
            net.extras(),
            self.params.len(),
        );
        let mut out = header.into_bytes();
        for v in self.params.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = HeaderReader { bytes, offset: 0 };
        let magic_at = reader.offset;
        let magic = reader.line("magic")?;
        if magic != MAGIC {
            return Err(perr(magic_at, format!("expected `{MAGIC}`, found `{magic}`")));
        }
        let version: u32 = reader.field("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(perr(magic_at, format!("unsupported checkpoint version {version}")));
        }
        let input_dim: usize = reader.field("input_dim")?;
        let (widths_at, widths) = reader.keyed("widths")?;
        let widths = widths
            .split_whitespace()
            .map(|w| w.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| perr(widths_at, format!("bad widths: {e}")))?;
        let (act_at, act) = reader.keyed("activation")?;
        let activation: Activation = act.parse().map_err(|e: Error| perr(act_at, e.to_string()))?;
        let (emb_at, emb) = reader.keyed("embedding")?;
        let embedding: Embedding = emb.parse().map_err(|e: Error| perr(emb_at, e.to_string()))?;
        let extras: usize = reader.field("extras")?;
        let params_at = reader.offset;
        let count: usize = reader.field("params")?;
        let end_at = reader.offset;
        if reader.line("end")? != "end" {
            return Err(perr(end_at, "missing header terminator `end`"));
        }
        let net = Mlp::from_widths(input_dim, widths, activation, embedding, extras)
            .map_err(|e| perr(widths_at, e.to_string()))?;
        if count != net.param_count() {
            return Err(perr(
                params_at,
                format!("header declares {count} parameters but the architecture has {}", net.param_count()),
            ));
        }
        let body = &bytes[reader.offset..];
        let need = count * 8;
        if body.len() < need {
            return Err(perr(
                reader.offset + body.len(),
                format!("parameters section truncated: expected {need} bytes, found {}", body.len()),
            ));
        }
        if body.len() > need {
            return Err(perr(reader.offset + need, "trailing bytes after parameters section"));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Checkpoint { net, params: ParamVector(params) })
    }
}

fn perr(offset: usize, message: impl Into<String>) -> Error {
    Error::Checkpoint { offset, message: message.into() }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> HeaderReader<'a> {
    fn line(&mut self, section: &str) -> Result<&'a str> {
        let rest = &self.bytes[self.offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(perr(self.offset, format!("missing `{section}` section")));
        };
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| perr(self.offset, "header is not UTF-8"))?;
        self.offset += nl + 1;
        Ok(line)
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let at = self.offset;
        let line = self.line(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((at, v)),
            _ => Err(perr(at, format!("expected `{key}` line, found `{line}`"))),
        }
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (at, v) = self.keyed(key)?;
        v.trim().parse().map_err(|e| perr(at, format!("bad `{key}`: {e}")))
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, net: &Mlp, params: &ParamVector) -> Result<()> {
    net.check_params(params)?;
    let ck = Checkpoint { net: net.clone(), params: params.clone() };
    fs::write(path, ck.to_bytes())?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_parameter_vector_round_trips() {
        let net = Mlp::from_widths(2, vec![2], Activation::Identity, Embedding::None, 0).unwrap();
        let ck = Checkpoint::new(net, ParamVector::default()).unwrap();
        let bytes = ck.to_bytes();
        assert!(bytes.ends_with(b"params 0\nend\n"));
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn large_vector_is_bit_exact() {
        let net = Mlp::from_widths(1, vec![1, 9999], Activation::Identity, Embedding::None, 1).unwrap();
        assert_eq!(net.param_count(), 10_000 + 9999);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params: Vec<f64> = (0..net.param_count()).map(|_| rng.random::<f64>() * 1e3 - 5e2).collect();
        let ck = Checkpoint::new(net, ParamVector(params)).unwrap();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        for (a, b) in back.params.iter().zip(ck.params.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncation_names_the_missing_section() {
        let net = Mlp::new(1, &[3], 1, Activation::Tanh, Embedding::Torus).unwrap();
        let p = net.init(&mut ChaCha8Rng::seed_from_u64(0));
        let bytes = Checkpoint::new(net, p).unwrap().to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("parameters section truncated"), "{err}");

        let header_end = bytes.windows(4).position(|w| w == b"end\n").unwrap();
        let err = Checkpoint::from_bytes(&bytes[..header_end - 10]).unwrap_err();
        assert!(err.to_string().contains("section"), "{err}");
    }

    #[test]
    fn corrupt_header_reports_offset() {
        let text = b"mfgan-checkpoint\nversion 1\ninput_dim x\n";
        match Checkpoint::from_bytes(text) {
            Err(Error::Checkpoint { offset, message }) => {
                assert_eq!(offset, 27);
                assert!(message.contains("input_dim"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
