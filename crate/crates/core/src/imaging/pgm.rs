//! 8-bit PGM (P5 binary, P2 ASCII).

use std::fs;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<(usize, &'a str)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() && self.buf[self.pos] != b'#' {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, "unexpected end of header"));
        }
        let s = std::str::from_utf8(&self.buf[start..self.pos]).map_err(|_| Error::parse(start, "non-ASCII token"))?;
        Ok((start, s))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let (at, tok) = self.token()?;
        tok.parse::<usize>()
            .map_err(|_| Error::parse(at, format!("invalid {what} '{tok}'")))
    }
}

/// Parses a PGM byte buffer; intensities are scaled to `[0, 1]` by the file's maxval.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let (at, magic) = cur.token()?;
    let binary = match magic {
        "P5" => true,
        "P2" => false,
        other => return Err(Error::parse(at, format!("unsupported magic '{other}'"))),
    };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(maxval_at, "zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(maxval_at, format!("maxval {maxval} is not 8-bit")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let mut pixels = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the payload
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::parse(cur.pos, "missing separator after maxval"));
        }
        let start = cur.pos + 1;
        if bytes.len() < start + n {
            return Err(Error::parse(
                bytes.len(),
                format!("truncated payload: expected {n} bytes, found {}", bytes.len().saturating_sub(start)),
            ));
        }
        for &b in &bytes[start..start + n] {
            if b as usize > maxval {
                return Err(Error::parse(start, format!("sample {b} exceeds maxval {maxval}")));
            }
            pixels.push(b as f64 / scale);
        }
    } else {
        for _ in 0..n {
            cur.skip_space_and_comments();
            if cur.pos >= bytes.len() {
                return Err(Error::parse(cur.pos, format!("truncated payload: expected {n} samples")));
            }
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(Error::parse(at, format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as f64 / scale);
        }
    }
    Image::from_vec(width, height, pixels)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    parse_pgm(&fs::read(path)?)
}

/// Quantizes to 8 bits with round-half-up after clamping to `[0, 1]`.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&v| {
        let q = (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor();
        q.min(255.0) as u8
    }));
    out
}

pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}
