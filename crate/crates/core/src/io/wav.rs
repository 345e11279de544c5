//! RIFF/WAVE reading and writing for 16-bit PCM and 32-bit float audio.

use std::fs;
use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset: offset as u64,
        message: message.into(),
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Fmt {
    format: SampleFormat,
    channels: usize,
    sample_rate: u32,
}

fn parse_fmt(body: &[u8], at: usize) -> Result<Fmt> {
    if body.len() < 16 {
        return Err(parse_err(at, "`fmt ` chunk shorter than 16 bytes"));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2) as usize;
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(parse_err(at, "extensible `fmt ` chunk missing its sub-format"));
        }
        tag = u16_at(body, 24);
    }
    let format = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (FORMAT_FLOAT, 32) => SampleFormat::Float32,
        _ => {
            return Err(parse_err(
                at,
                format!("unsupported codec (format tag {tag}, {bits} bits)"),
            ))
        }
    };
    if !(1..=2).contains(&channels) {
        return Err(parse_err(at + 2, format!("unsupported channel count {channels}")));
    }
    if sample_rate == 0 {
        return Err(parse_err(at + 4, "sample rate is zero"));
    }
    Ok(Fmt {
        format,
        channels,
        sample_rate,
    })
}

/// Decodes a WAV byte stream; stereo is averaged to mono.
pub fn decode(bytes: &[u8], id: &str) -> Result<AudioClip> {
    if bytes.len() < 12 {
        return Err(parse_err(bytes.len(), "truncated RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(parse_err(0, "missing `RIFF` chunk id"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(parse_err(8, "RIFF form type is not `WAVE`"));
    }
    let mut pos = 12;
    let mut fmt: Option<Fmt> = None;
    while pos < bytes.len() {
        if bytes.len() - pos < 8 {
            return Err(parse_err(pos, "truncated chunk header"));
        }
        let id_bytes = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_at = pos + 8;
        let available = bytes.len() - body_at;
        match id_bytes {
            b"fmt " => {
                if size > available {
                    return Err(parse_err(bytes.len(), "truncated `fmt ` chunk"));
                }
                fmt = Some(parse_fmt(&bytes[body_at..body_at + size], body_at)?);
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| parse_err(pos, "missing `fmt ` chunk before `data`"))?;
                if size > available {
                    return Err(parse_err(bytes.len(), "truncated `data` chunk"));
                }
                return Ok(decode_samples(&bytes[body_at..body_at + size], &fmt, id));
            }
            _ => {}
        }
        // chunks are word-aligned
        pos = body_at.saturating_add(size).saturating_add(size & 1);
    }
    Err(match fmt {
        None => parse_err(bytes.len(), "missing `fmt ` chunk"),
        Some(_) => parse_err(bytes.len(), "missing `data` chunk"),
    })
}

fn decode_samples(data: &[u8], fmt: &Fmt, id: &str) -> AudioClip {
    let width = match fmt.format {
        SampleFormat::Pcm16 => 2,
        SampleFormat::Float32 => 4,
    };
    let frame = width * fmt.channels;
    let samples = data
        .chunks_exact(frame)
        .map(|f| {
            let sum: f64 = f
                .chunks_exact(width)
                .map(|s| match fmt.format {
                    SampleFormat::Pcm16 => i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0,
                    SampleFormat::Float32 => f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64,
                })
                .sum();
            sum / fmt.channels as f64
        })
        .collect();
    AudioClip {
        id: id.to_string(),
        samples,
        sample_rate: fmt.sample_rate as f64,
    }
}

/// Encodes a mono clip. The sample rate must be a positive integer.
pub fn encode(clip: &AudioClip, format: SampleFormat) -> Result<Vec<u8>> {
    let sr = clip.sample_rate;
    if !(sr > 0.0 && sr.fract() == 0.0 && sr <= u32::MAX as f64) {
        return Err(Error::Domain(format!("sample rate {sr} cannot be stored in a WAV header")));
    }
    let (tag, width) = match format {
        SampleFormat::Pcm16 => (FORMAT_PCM, 2u16),
        SampleFormat::Float32 => (FORMAT_FLOAT, 4u16),
    };
    let data_len = clip.samples.len() * width as usize;
    let riff_len = 4 + 8 + 16 + 8 + data_len + (data_len & 1);
    if riff_len > u32::MAX as usize {
        return Err(Error::Domain("clip too long for a WAV file".into()));
    }
    let mut out = Vec::with_capacity(riff_len + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(riff_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(sr as u32).to_le_bytes());
    out.extend_from_slice(&(sr as u32 * width as u32).to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&(width * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        match format {
            SampleFormat::Pcm16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            SampleFormat::Float32 => out.extend_from_slice(&(s as f32).to_le_bytes()),
        }
    }
    if data_len & 1 == 1 {
        out.push(0);
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode(&bytes, &id).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn write(path: &Path, clip: &AudioClip, format: SampleFormat) -> Result<()> {
    let bytes = encode(clip, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
