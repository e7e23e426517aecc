//! Plain pixel buffers and their on-disk encodings (binary PPM for color,
//! PFM for depth).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub type Rgb = [f32; 3];

/// Depth written to PFM in place of +∞.
pub const PFM_INFINITY: f32 = 3.4e38;

/// Row-major RGB image, pixel `(x, y)` at `y * width + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Image { width, height, data: vec![fill; width * height] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.data[y * self.width + x] = c;
    }

    /// Bilinear resample to a new size using pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Image {
        let mut out = Image::new(width, height, [0.0; 3]);
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f32;
                let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
                let mut px = [0.0; 3];
                for k in 0..3 {
                    let top = a[k] + tx * (b[k] - a[k]);
                    let bot = c[k] + tx * (d[k] - c[k]);
                    px[k] = top + ty * (bot - top);
                }
                out.set(x, y, px);
            }
        }
        out
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 3);
        for px in &self.data {
            for &v in px {
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_ppm(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_ppm_bytes(&bytes)
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Image> {
        let (tokens, body) = header_tokens(bytes, 4)?;
        if tokens[0] != "P6" {
            return Err(Error::format("not a binary PPM (P6)"));
        }
        let width = parse_dim(&tokens[1])?;
        let height = parse_dim(&tokens[2])?;
        if tokens[3] != "255" {
            return Err(Error::format("only 8-bit PPM is supported"));
        }
        if body.len() != width * height * 3 {
            return Err(Error::format("PPM payload size mismatch"));
        }
        let data = body.chunks_exact(3).map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0]).collect();
        Ok(Image { width, height, data })
    }
}

/// Single-channel float map; used for depth (+∞ = no surface).
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, fill: f32) -> Self {
        DepthMap { width, height, data: vec![fill; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, d: f32) {
        self.data[y * self.width + x] = d;
    }

    /// Grayscale PFM ("Pf"), little-endian, rows stored bottom to top.
    pub fn to_pfm_bytes(&self) -> Vec<u8> {
        let mut out = format!("Pf\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 4);
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                let d = self.get(x, y);
                let v = if d.is_infinite() { PFM_INFINITY } else { d };
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pfm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_pfm_bytes(bytes: &[u8]) -> Result<DepthMap> {
        let (tokens, body) = header_tokens(bytes, 4)?;
        if tokens[0] != "Pf" {
            return Err(Error::format("not a grayscale PFM (Pf)"));
        }
        let width = parse_dim(&tokens[1])?;
        let height = parse_dim(&tokens[2])?;
        let scale: f32 = tokens[3].parse().map_err(|_| Error::format("bad PFM scale"))?;
        if body.len() != width * height * 4 {
            return Err(Error::format("PFM payload size mismatch"));
        }
        let mut map = DepthMap::new(width, height, 0.0);
        for (i, c) in body.chunks_exact(4).enumerate() {
            let raw = [c[0], c[1], c[2], c[3]];
            let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
            let (x, y) = (i % width, height - 1 - i / width);
            map.set(x, y, if v >= PFM_INFINITY { f32::INFINITY } else { v });
        }
        Ok(map)
    }
}

/// Splits a netpbm-style header into `n` whitespace tokens and returns the
/// payload that follows the single separator after the last token.
fn header_tokens(bytes: &[u8], n: usize) -> Result<(Vec<String>, &[u8])> {
    let mut tokens = Vec::with_capacity(n);
    let mut i = 0;
    while tokens.len() < n {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::format("truncated image header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(Error::format("missing image payload"));
    }
    Ok((tokens, &bytes[i + 1..]))
}

fn parse_dim(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::format(format!("bad image dimension {s:?}")))
}

/// Peak signal-to-noise ratio over RGB in `[0, 1]`; +∞ for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::input(format!("PSNR of {}x{} and {}x{} images", a.width, a.height, b.width, b.height)));
    }
    if a.data.is_empty() {
        return Err(Error::input("PSNR of empty images"));
    }
    let sse: f64 = a.data.iter().zip(&b.data).flat_map(|(p, q)| (0..3).map(move |k| (p[k] as f64 - q[k] as f64).powi(2))).sum();
    let mse = sse / (3 * a.data.len()) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_encodes_infinity_sentinel() {
        let mut d = DepthMap::new(3, 2, 1.5);
        d.set(1, 0, f32::INFINITY);
        let bytes = d.to_pfm_bytes();
        let back = DepthMap::from_pfm_bytes(&bytes).unwrap();
        assert_eq!(back, d);
        let body = &bytes[bytes.len() - 24..];
        // top row is written last
        let v = f32::from_le_bytes(body[16..20].try_into().unwrap());
        assert_eq!(v, PFM_INFINITY);
    }

    #[test]
    fn ppm_header_and_quantization() {
        let mut img = Image::new(2, 1, [0.0, 0.5, 1.0]);
        img.set(1, 0, [2.0, -1.0, 0.25]);
        let bytes = img.to_ppm_bytes();
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(&bytes[bytes.len() - 6..], &[0, 128, 255, 255, 0, 64]);
        let back = Image::from_ppm_bytes(&bytes).unwrap();
        assert_eq!(back.width, 2);
    }

    #[test]
    fn psnr_closed_forms() {
        let a = Image::new(4, 3, [0.0; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Image::new(4, 3, [0.1; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&a, &Image::new(3, 4, [0.0; 3])).is_err());
    }

    #[test]
    fn psnr_matches_direct_mse() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut a = Image::new(9, 7, [0.0; 3]);
        let mut b = a.clone();
        for p in a.data.iter_mut().chain(b.data.iter_mut()) {
            *p = [rng.random(), rng.random(), rng.random()];
        }
        let mut sum = 0.0f64;
        for i in 0..63 {
            for k in 0..3 {
                let d = a.data[i][k] as f64 - b.data[i][k] as f64;
                sum += d * d;
            }
        }
        let want = 10.0 * (1.0 / (sum / 189.0)).log10();
        assert!((psnr(&a, &b).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn bilinear_of_constant_is_constant() {
        let img = Image::new(4, 4, [0.25, 0.5, 0.75]);
        let up = img.resize_bilinear(8, 8);
        assert!(up.data.iter().all(|p| *p == [0.25, 0.5, 0.75]));
    }
}
