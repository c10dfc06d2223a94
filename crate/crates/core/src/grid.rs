//! Row-major pixel grids and their file formats.

use std::io::{Read, Write};
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb as ImgRgb};

use crate::error::{Error, Result};
use crate::geometry::{Label, Rgb};

/// Depth value for pixels with no geometry behind them.
pub const MISSING_DEPTH: f64 = f64::INFINITY;

pub fn is_missing(depth: f64) -> bool {
    depth == MISSING_DEPTH
}

/// A `width × height` image stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Metric depth along the camera axis; [`MISSING_DEPTH`] where unknown.
pub type DepthImage = Grid<f64>;
pub type ColorImage = Grid<Rgb>;
pub type LabelImage = Grid<Label>;
pub type MaskImage = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{} pixels for a {width}×{height} grid",
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    pub fn pixels(&self) -> &[T] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, T> {
        self.data.chunks(self.width.max(1))
    }
}

impl MaskImage {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }

    /// Grow the mask by a Euclidean disk of `radius` pixels.
    pub fn dilate(&self, radius: usize) -> MaskImage {
        let r = radius as isize;
        let offsets: Vec<(isize, isize)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = Grid::filled(self.width, self.height, false);
        for y in 0..h {
            for x in 0..w {
                if !*self.get(x as usize, y as usize) {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        out.set(nx as usize, ny as usize, true);
                    }
                }
            }
        }
        out
    }
}

fn to_u8(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn to_u16(c: f32) -> u16 {
    (c.clamp(0.0, 1.0) * 65535.0).round() as u16
}

impl ColorImage {
    /// Decode a PNG or JPEG file. sRGB values are kept as stored.
    pub fn load(path: impl AsRef<Path>) -> Result<ColorImage> {
        let img = image::open(path)?.to_rgb32f();
        Self::from_rgb32f(&img)
    }

    pub fn from_rgb32f(img: &image::Rgb32FImage) -> Result<ColorImage> {
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| p.0).collect();
        Grid::from_vec(w as usize, h as usize, data)
    }

    pub fn to_rgb32f(&self) -> image::Rgb32FImage {
        ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            ImgRgb(*self.get(x as usize, y as usize))
        })
    }

    /// 8-bit PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: ImageBuffer<ImgRgb<u8>, Vec<u8>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                let c = self.get(x as usize, y as usize);
                ImgRgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])])
            });
        buf.save(path)?;
        Ok(())
    }

    /// 16-bit PNG, for inputs whose shading must survive a file round trip.
    pub fn save_png16(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: ImageBuffer<ImgRgb<u16>, Vec<u16>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                let c = self.get(x as usize, y as usize);
                ImgRgb([to_u16(c[0]), to_u16(c[1]), to_u16(c[2])])
            });
        buf.save(path)?;
        Ok(())
    }

    /// PNG bytes, as sent over the wire to remote backends.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf: ImageBuffer<ImgRgb<u8>, Vec<u8>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                let c = self.get(x as usize, y as usize);
                ImgRgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])])
            });
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<ColorImage> {
        let img = image::load_from_memory(bytes)?.to_rgb32f();
        Self::from_rgb32f(&img)
    }
}

impl MaskImage {
    /// White where set, black elsewhere.
    pub fn to_color(&self) -> ColorImage {
        self.map(|&b| if b { [1.0; 3] } else { [0.0; 3] })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                Luma([if *self.get(x as usize, y as usize) { 255 } else { 0 }])
            });
        buf.save(path)?;
        Ok(())
    }
}

impl DepthImage {
    /// Flat float dump: width and height as little-endian `u32`, then one
    /// little-endian `f32` per pixel in row-major order. Missing pixels are
    /// written as `+inf`.
    pub fn write_raw(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for &d in &self.data {
            bytes.extend_from_slice(&(d as f32).to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_raw(mut r: impl Read) -> Result<DepthImage> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let width = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let mut bytes = vec![0u8; width * height * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Grid::from_vec(width, height, data)
    }

    pub fn save_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_raw(std::io::BufWriter::new(file))
    }

    pub fn missing_mask(&self) -> MaskImage {
        self.map(|&d| is_missing(d))
    }
}
