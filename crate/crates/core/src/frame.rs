//! 8-bit grayscale images and their binary PGM (P5) encoding.

use std::io::{self, Write};

use crate::error::{contract, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

/// Axis-aligned pixel rectangle, half-open on both axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.is_empty()
            || (other.x >= self.x
                && other.y >= self.y
                && other.x + other.width <= self.x + self.width
                && other.y + other.height <= self.y + self.height)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        !self.is_empty()
            && !other.is_empty()
            && self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }

    /// Pixel coordinates `(x, y)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y..self.y + self.height)
            .flat_map(move |y| (self.x..self.x + self.width).map(move |x| (x, y)))
    }
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(contract(format!(
                "{width}x{height} frame needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    /// Fills `rect`, clipped to the frame.
    pub fn fill(&mut self, rect: Rect, value: u8) {
        let x1 = (rect.x + rect.width).min(self.width);
        let y1 = (rect.y + rect.height).min(self.height);
        for y in rect.y.min(y1)..y1 {
            self.pixels[y * self.width + rect.x.min(x1)..y * self.width + x1].fill(value);
        }
    }

    /// Copies the pixels inside `rect` into a new frame.
    pub fn crop(&self, rect: Rect) -> Result<Frame> {
        if !self.bounds().contains_rect(&rect) {
            return Err(contract(format!(
                "crop {rect:?} exceeds {}x{} frame",
                self.width, self.height
            )));
        }
        let mut out = Vec::with_capacity(rect.area());
        for y in rect.y..rect.y + rect.height {
            out.extend_from_slice(&self.pixels[y * self.width + rect.x..][..rect.width]);
        }
        Frame::from_pixels(rect.width, rect.height, out)
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }

    pub fn read_pgm(bytes: &[u8]) -> Result<Frame> {
        let bad = |m: &str| contract(format!("invalid P5 image: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(bad("expected P5 with maxval 255"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let body = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
        Frame::from_pixels(width, height, body.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let mut f = Frame::new(5, 3);
        f.set(4, 2, 255);
        f.set(0, 1, 7);
        let mut buf = Vec::new();
        f.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(Frame::read_pgm(&buf).unwrap(), f);
    }

    #[test]
    fn rect_geometry() {
        let a = Rect::new(0, 0, 4, 4);
        let b = Rect::new(3, 3, 2, 2);
        let c = Rect::new(4, 0, 2, 2);
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
        assert!(Rect::new(0, 0, 10, 10).contains_rect(&b));
        assert_eq!(b.pixels().count(), 4);
    }

    #[test]
    fn crop_copies_region() {
        let mut f = Frame::new(4, 4);
        f.fill(Rect::new(1, 1, 2, 2), 9);
        let c = f.crop(Rect::new(1, 1, 2, 2)).unwrap();
        assert!(c.pixels().iter().all(|&p| p == 9));
        assert!(f.crop(Rect::new(3, 3, 2, 2)).is_err());
    }
}
