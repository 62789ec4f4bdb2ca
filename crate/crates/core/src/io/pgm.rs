//! 16-bit binary PGM (P5, maxval 65535, big-endian samples).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{ContainerError, Result};
use crate::piv::{ImagePair, ParticleImage};

pub fn encode_pgm(img: &ParticleImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    out.reserve(img.pixels.len() * 2);
    for p in &img.pixels {
        out.extend_from_slice(&p.to_be_bytes());
    }
    out
}

pub fn decode_pgm(buf: &[u8], t: f64) -> Result<ParticleImage> {
    let corrupt = |m: &str| ContainerError::Corrupt(format!("pgm: {m}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < buf.len() && (buf[pos].is_ascii_whitespace() || buf[pos] == b'#') {
            if buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("truncated header").into());
        }
        fields.push(std::str::from_utf8(&buf[start..pos]).map_err(|_| corrupt("header is not ascii"))?);
    }
    if fields[0] != "P5" {
        return Err(ContainerError::BadMagic {
            expected: "P5".into(),
            found: fields[0].into(),
        }
        .into());
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| corrupt("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 65535 {
        return Err(ContainerError::Version(maxval as u32).into());
    }
    pos += 1;
    let n = w * h;
    let body = buf.get(pos..).unwrap_or(&[]);
    if body.len() != 2 * n {
        return Err(ContainerError::Dimension(format!("pgm: {w}x{h} needs {} bytes, found {}", 2 * n, body.len())).into());
    }
    let pixels = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok(ParticleImage {
        width: w,
        height: h,
        pixels,
        t,
    })
}

pub fn write_pgm(path: impl AsRef<Path>, img: &ParticleImage) -> Result<()> {
    Ok(fs::write(path, encode_pgm(img))?)
}

pub fn read_pgm(path: impl AsRef<Path>, t: f64) -> Result<ParticleImage> {
    decode_pgm(&fs::read(path)?, t)
}

/// Paths `frame_%06d_a.pgm` and `frame_%06d_b.pgm` in `dir`.
pub fn pair_paths(dir: &Path, index: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("frame_{index:06}_a.pgm")),
        dir.join(format!("frame_{index:06}_b.pgm")),
    )
}

pub fn write_pair(dir: &Path, index: usize, pair: &ImagePair) -> Result<()> {
    let (a, b) = pair_paths(dir, index);
    write_pgm(a, &pair.a)?;
    write_pgm(b, &pair.b)
}

pub fn read_pair(dir: &Path, index: usize, t: f64, dt_pair: f64) -> Result<ImagePair> {
    let (a, b) = pair_paths(dir, index);
    ImagePair::new(read_pgm(a, t)?, read_pgm(b, t + dt_pair)?, dt_pair)
}
