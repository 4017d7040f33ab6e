//! Row-major pixel grids and their on-disk formats.
//!
//! - color: 8-bit RGB PNG, or binary PPM (`P6`) when no codec is wanted
//! - masks: 8-bit grayscale PNG with 0 / 255
//! - integer maps: 16-bit grayscale PNG
//! - depth: 8-byte header (width, height as little-endian `u32`) followed by
//!   `width * height` little-endian `f32` values in row-major order

use std::io::{BufWriter, Write};
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

pub type Rgb8 = [u8; 3];
pub type RgbImage = Grid<Rgb8>;
/// Camera-space depth in scene units, 0 where nothing was hit.
pub type DepthMap = Grid<f32>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: u32, height: u32, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: u32, height: u32, data: Vec<T>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::mismatch("grid data length", expected, data.len()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> T) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, col: u32, row: u32) -> usize {
        row as usize * self.width as usize + col as usize
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> &T {
        &self.data[self.index(col, row)]
    }

    #[inline]
    pub fn set(&mut self, col: u32, row: u32, value: T) {
        let i = self.index(col, row);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Iterates `(col, row, value)` in row-major order.
    pub fn iter_pixels(&self) -> impl Iterator<Item = (u32, u32, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| ((i % w as usize) as u32, (i / w as usize) as u32, v))
    }
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

pub fn write_png_rgb(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = img.as_slice().iter().flatten().copied().collect();
    let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(img.width(), img.height(), raw)
        .expect("buffer length matches dimensions");
    let mut out = create(path)?;
    buf.write_to(&mut out, image::ImageFormat::Png)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_png_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::parse(path.display().to_string(), e))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Grid::from_vec(w, h, data)
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    write!(out, "P6\n{} {}\n255\n", img.width(), img.height()).map_err(io)?;
    for px in img.as_slice() {
        out.write_all(px).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ctx = || path.display().to_string();
    // Header: magic, width, height, maxval separated by whitespace, then one
    // whitespace byte before the raster.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(ctx(), "truncated PPM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(Error::parse(ctx(), "only 8-bit P6 PPM is supported"));
    }
    let w: u32 = fields[1].parse().map_err(|e| Error::parse(ctx(), e))?;
    let h: u32 = fields[2].parse().map_err(|e| Error::parse(ctx(), e))?;
    let raster = bytes.get(pos..).unwrap_or_default();
    let n = w as usize * h as usize;
    if raster.len() < n * 3 {
        return Err(Error::parse(ctx(), "truncated PPM raster"));
    }
    let data = raster[..n * 3]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Grid::from_vec(w, h, data)
}

/// Reads a color image, dispatching on the `.ppm` extension.
pub fn read_color(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
        read_ppm(path)
    } else {
        read_png_rgb(path)
    }
}

pub fn write_color(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
        write_ppm(path, img)
    } else {
        write_png_rgb(path, img)
    }
}

pub fn write_mask_png(path: impl AsRef<Path>, mask: &Grid<bool>) -> Result<()> {
    let raw: Vec<u8> = mask.as_slice().iter().map(|&m| if m { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(mask.width(), mask.height(), raw).expect("dimensions match");
    let path = path.as_ref();
    let mut out = create(path)?;
    buf.write_to(&mut out, image::ImageFormat::Png)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_u16_png(path: impl AsRef<Path>, map: &Grid<u16>) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(map.width(), map.height(), map.as_slice().to_vec())
            .expect("dimensions match");
    let path = path.as_ref();
    let mut out = create(path)?;
    buf.write_to(&mut out, image::ImageFormat::Png)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_u16_png(path: impl AsRef<Path>) -> Result<Grid<u16>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::parse(path.display().to_string(), e))?
        .to_luma16();
    let (w, h) = img.dimensions();
    Grid::from_vec(w, h, img.into_raw())
}

pub fn encode_depth(depth: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + depth.len() * 4);
    out.extend_from_slice(&depth.width().to_le_bytes());
    out.extend_from_slice(&depth.height().to_le_bytes());
    for d in depth.as_slice() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

pub fn decode_depth(bytes: &[u8]) -> std::result::Result<DepthMap, String> {
    if bytes.len() < 8 {
        return Err("depth file shorter than its 8-byte header".into());
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let n = w as usize * h as usize;
    let body = &bytes[8..];
    if body.len() != n * 4 {
        return Err(format!(
            "depth body has {} bytes, expected {} for {w}x{h}",
            body.len(),
            n * 4
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Grid { width: w, height: h, data })
}

pub fn write_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_depth(depth)).map_err(|e| Error::io(path, e))
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_depth(&bytes).map_err(|m| Error::parse(path.display().to_string(), m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> RgbImage {
        Grid::from_fn(w, h, |c, r| [(c * 7) as u8, (r * 13) as u8, ((c + r) * 3) as u8])
    }

    #[test]
    fn grid_indexing_is_row_major() {
        let g = Grid::from_fn(3, 2, |c, r| (c, r));
        assert_eq!(g.as_slice()[4], (1, 1));
        assert_eq!(*g.get(2, 1), (2, 1));
        assert!(Grid::from_vec(2, 2, vec![0u8; 3]).is_err());
    }

    #[test]
    fn color_round_trips_through_png_and_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient(17, 9);
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            write_color(&p, &img).unwrap();
            assert_eq!(read_color(&p).unwrap(), img);
        }
    }

    #[test]
    fn depth_format_has_header_and_little_endian_body() {
        let d = Grid::from_vec(2, 1, vec![1.5f32, 0.0]).unwrap();
        let bytes = encode_depth(&d);
        assert_eq!(&bytes[..8], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &1.5f32.to_le_bytes());
        assert_eq!(decode_depth(&bytes).unwrap(), d);
        assert!(decode_depth(&bytes[..10]).is_err());
    }

    #[test]
    fn u16_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ids.png");
        let g = Grid::from_fn(5, 4, |c, r| (c * 1000 + r) as u16);
        write_u16_png(&p, &g).unwrap();
        assert_eq!(read_u16_png(&p).unwrap(), g);
    }
}
