//! Binary checkpoint: magic, format version, a text metadata block holding
//! the architecture, then named little-endian `f32` tensors.
//!
//! ```text
//! "BFXCKPT\0" | u32 version | u32 meta_len | meta (UTF-8 key=value lines)
//! u32 tensor_count | per tensor: u16 name_len | name | u8 ndim | u32 dims… | f32 data…
//! ```

use std::fs;
use std::path::Path;

use super::net::{BnStats, Encoder, EncoderConfig};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BFXCKPT\0";
pub const VERSION: u32 = 1;

struct Tensor {
    name: String,
    dims: Vec<u32>,
    data: Vec<f64>,
}

fn manifest(enc: &Encoder) -> Vec<Tensor> {
    let cfg = enc.config();
    let l = enc.layout();
    let w = enc.weights();
    let t = |name: &str, dims: Vec<usize>, data: &[f64]| Tensor {
        name: name.to_string(),
        dims: dims.into_iter().map(|d| d as u32).collect(),
        data: data.to_vec(),
    };
    let mut out = vec![
        t("bn.gamma", vec![cfg.bands], &w[l.gamma.clone()]),
        t("bn.beta", vec![cfg.bands], &w[l.beta.clone()]),
        t("bn.running_mean", vec![cfg.bands], &enc.running_stats().mean),
        t("bn.running_var", vec![cfg.bands], &enc.running_stats().var),
    ];
    let mut ci = 1;
    for (i, (co, (wr, br))) in cfg.channels.iter().zip(&l.conv).enumerate() {
        out.push(t(&format!("conv{}.weight", i + 1), vec![*co, ci, 3, 3], &w[wr.clone()]));
        out.push(t(&format!("conv{}.bias", i + 1), vec![*co], &w[br.clone()]));
        ci = *co;
    }
    out.push(t("dense.weight", vec![cfg.params, ci], &w[l.dense_w.clone()]));
    out.push(t("dense.bias", vec![cfg.params], &w[l.dense_b.clone()]));
    out
}

fn meta_text(cfg: &EncoderConfig) -> String {
    let channels: Vec<String> = cfg.channels.iter().map(|c| c.to_string()).collect();
    format!(
        "frames={}\nbands={}\nchannels={}\nparams={}\nbn_momentum={}\nbn_eps={}\n",
        cfg.frames,
        cfg.bands,
        channels.join(","),
        cfg.params,
        cfg.bn_momentum,
        cfg.bn_eps
    )
}

pub fn to_bytes(enc: &Encoder) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let meta = meta_text(enc.config());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    let tensors = manifest(enc);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated checkpoint while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

fn parse_meta(text: &str, r: &Reader) -> Result<EncoderConfig> {
    let mut cfg = EncoderConfig::new(0, 0, 0);
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| r.err(format!("malformed metadata line `{line}`")))?;
        let bad = || r.err(format!("bad metadata value `{line}`"));
        match k {
            "frames" => cfg.frames = v.parse().map_err(|_| bad())?,
            "bands" => cfg.bands = v.parse().map_err(|_| bad())?,
            "params" => cfg.params = v.parse().map_err(|_| bad())?,
            "bn_momentum" => cfg.bn_momentum = v.parse().map_err(|_| bad())?,
            "bn_eps" => cfg.bn_eps = v.parse().map_err(|_| bad())?,
            "channels" => {
                cfg.channels = v
                    .split(',')
                    .map(|c| c.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad())?
            }
            _ => return Err(r.err(format!("unknown metadata key `{k}`"))),
        }
    }
    Ok(cfg)
}

pub fn from_bytes(buf: &[u8]) -> Result<Encoder> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.err("not an encoder checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = r.u32("metadata length")? as usize;
    let meta = std::str::from_utf8(r.take(meta_len, "metadata")?)
        .map_err(|_| r.err("metadata is not UTF-8"))?;
    let cfg = parse_meta(meta, &r)?;
    cfg.validate().map_err(|e| r.err(e.to_string()))?;

    // an encoder of the stored shape tells us what the tensors must be
    let template = Encoder::new(cfg.clone(), 0)?;
    let expected = manifest(&template);
    let count = r.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(r.err(format!("expected {} tensors, found {count}", expected.len())));
    }
    let mut weights = Vec::with_capacity(template.num_weights());
    let mut running = BnStats {
        mean: Vec::new(),
        var: Vec::new(),
        count: 0,
    };
    for want in &expected {
        let name_len = r.u16("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| r.err("tensor name is not UTF-8"))?;
        if name != want.name {
            return Err(r.err(format!("expected tensor `{}`, found `{name}`", want.name)));
        }
        let ndim = r.u8("tensor rank")? as usize;
        let dims = (0..ndim).map(|_| r.u32("tensor dims")).collect::<Result<Vec<_>>>()?;
        if dims != want.dims {
            return Err(r.err(format!("tensor `{name}` has shape {dims:?}, expected {:?}", want.dims)));
        }
        let n: usize = dims.iter().map(|&d| d as usize).product();
        let bytes = r.take(4 * n, &format!("tensor `{name}` data"))?;
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        match name {
            "bn.running_mean" => running.mean = data,
            "bn.running_var" => running.var = data,
            _ => weights.extend(data),
        }
    }
    if r.pos != buf.len() {
        return Err(r.err("trailing bytes after the last tensor"));
    }
    Encoder::from_parts(cfg, weights, running)
}

pub fn save(enc: &Encoder, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(enc)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Encoder> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}
