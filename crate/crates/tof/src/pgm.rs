//! Binary 16-bit PGM (P5, maxval 65535) for depth and measurement images.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::{Result, ToFError};

/// Grayscale image with 16-bit samples, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray16 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
}

impl Gray16 {
    /// Maps `[lo, hi]` linearly onto `[0, 65535]`, clamping outside.
    pub fn from_values(values: &[f64], width: usize, height: usize, lo: f64, hi: f64) -> Self {
        let pixels = values
            .iter()
            .map(|&v| (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        Self { width, height, pixels }
    }

    /// Inverse of [`Gray16::from_values`] up to quantization.
    pub fn to_values(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.pixels
            .iter()
            .map(|&p| lo + (hi - lo) * p as f64 / 65535.0)
            .collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().flat_map(|p| p.to_be_bytes()).collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut fields = Vec::with_capacity(4);
        let mut line = String::new();
        while fields.len() < 4 {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(ToFError::Format("truncated header".into()));
            }
            let content = line.split('#').next().unwrap_or("");
            fields.extend(content.split_whitespace().map(str::to_owned));
        }
        if fields.len() != 4 || fields[0] != "P5" {
            return Err(ToFError::Format("expected a P5 header on its own lines".into()));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| ToFError::Format(format!("bad header field '{s}'")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 65535 {
            return Err(ToFError::Format(format!("expected maxval 65535, got {maxval}")));
        }
        let mut bytes = vec![0u8; 2 * width * height];
        r.read_exact(&mut bytes)
            .map_err(|_| ToFError::Format("pixel data ends early".into()))?;
        let pixels = bytes
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        Ok(Self { width, height, pixels })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let img = Gray16 {
            width: 3,
            height: 2,
            pixels: vec![0, 1, 256, 65535, 4242, 7],
        };
        let mut buf = Vec::new();
        img.write(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n65535\n"));
        assert_eq!(Gray16::read(&buf[..]).unwrap(), img);
    }

    #[test]
    fn values_quantize_within_half_step() {
        let v = [0.5, 1.234, 6.0];
        let img = Gray16::from_values(&v, 3, 1, 0.5, 6.0);
        for (a, b) in img.to_values(0.5, 6.0).iter().zip(v) {
            assert!((a - b).abs() <= 5.5 / 65535.0);
        }
    }

    #[test]
    fn rejects_8_bit() {
        assert!(Gray16::read(&b"P5\n1 1\n255\n\x00"[..]).is_err());
    }
}
