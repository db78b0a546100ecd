//! 8-bit RGB images and the binary PPM (P6) / 16-bit PGM (P5) codecs.

use std::fs;
use std::io;
use std::path::Path;

use crate::geometry::Rgb;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples, `width * height * 3` bytes.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        RgbImage {
            width,
            height,
            data: color.repeat(width * height),
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[Rgb]) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count mismatch");
        RgbImage {
            width,
            height,
            data: pixels.concat(),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Pixel at linear index `p`.
    pub fn at(&self, p: usize) -> Rgb {
        [self.data[3 * p], self.data[3 * p + 1], self.data[3 * p + 2]]
    }
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// 16-bit grayscale PGM with big-endian samples.
pub fn encode_pgm16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height, "sample count mismatch");
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(samples.len() * 2);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> io::Result<Header> {
    if bytes.len() < 2 {
        return Err(invalid("truncated header"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(invalid("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| invalid("bad header number"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(invalid("missing whitespace after maxval"));
    }
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_offset: pos + 1,
    })
}

pub fn decode_ppm(bytes: &[u8]) -> io::Result<RgbImage> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P6" || h.maxval != 255 {
        return Err(invalid("expected P6 with maxval 255"));
    }
    let n = h.width * h.height * 3;
    let data = bytes
        .get(h.data_offset..h.data_offset + n)
        .ok_or_else(|| invalid("truncated pixel data"))?;
    Ok(RgbImage {
        width: h.width,
        height: h.height,
        data: data.to_vec(),
    })
}

/// Returns `(width, height, samples)`.
pub fn decode_pgm16(bytes: &[u8]) -> io::Result<(usize, usize, Vec<u16>)> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P5" || h.maxval != 65535 {
        return Err(invalid("expected P5 with maxval 65535"));
    }
    let n = h.width * h.height * 2;
    let data = bytes
        .get(h.data_offset..h.data_offset + n)
        .ok_or_else(|| invalid("truncated sample data"))?;
    let samples = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((h.width, h.height, samples))
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> io::Result<()> {
    fs::write(path, encode_ppm(img))
}

pub fn read_ppm(path: &Path) -> io::Result<RgbImage> {
    decode_ppm(&fs::read(path)?)
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, samples: &[u16]) -> io::Result<()> {
    fs::write(path, encode_pgm16(width, height, samples))
}

pub fn read_pgm16(path: &Path) -> io::Result<(usize, usize, Vec<u16>)> {
    decode_pgm16(&fs::read(path)?)
}
