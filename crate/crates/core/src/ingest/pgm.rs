// Binary PGM ("P5") codec restricted to 8-bit rasters (maxval 255).
//
// Header: magic, whitespace, width, whitespace, height, whitespace, maxval,
// exactly one whitespace byte, then width*height raw bytes row-major.
// '#' comments may appear between header tokens and run to end of line.

use super::{CropRect, IngestError};

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Mask {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, IngestError> {
        if width == 0 || height == 0 {
            return Err(IngestError::MalformedHeader(format!("zero-area mask {width}x{height}")));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(IngestError::Truncated { expected, found: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, IngestError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.pixels[y as usize * self.width as usize + x as usize] = value;
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64, IngestError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(IngestError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| IngestError::MalformedHeader(format!("{what} out of range")))
    }
}

/// Decodes a binary PGM. Pixel values are kept exactly; trailing bytes
/// after the raster are ignored.
pub fn read_mask(bytes: &[u8]) -> Result<Mask, IngestError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(IngestError::UnsupportedFormat("not a PNM file".into()));
    }
    if bytes[1] != b'5' {
        return Err(IngestError::UnsupportedFormat(format!(
            "magic P{} (only binary P5 is supported)",
            bytes[1] as char
        )));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(IngestError::UnsupportedFormat(format!("maxval {maxval} (only 255 is supported)")));
    }
    if width == 0 || height == 0 || width > u32::MAX as u64 || height > u32::MAX as u64 {
        return Err(IngestError::MalformedHeader(format!("bad dimensions {width}x{height}")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(IngestError::MalformedHeader("expected whitespace after maxval".into())),
        None => {}
    }
    let expected = (width * height) as usize;
    let raster = &bytes[cur.pos.min(bytes.len())..];
    if raster.len() < expected {
        return Err(IngestError::Truncated { expected, found: raster.len() });
    }
    Mask::new(width as u32, height as u32, raster[..expected].to_vec())
}

/// Encodes a mask in canonical form: `P5\n<w> <h>\n255\n` followed by the raster.
pub fn write_mask(mask: &Mask) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", mask.width, mask.height);
    let mut out = Vec::with_capacity(header.len() + mask.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&mask.pixels);
    out
}

/// Extracts the pixel window under `rect`.
pub fn apply_crop(mask: &Mask, rect: &CropRect) -> Result<Mask, IngestError> {
    if !rect.fits_within(mask.width, mask.height) {
        return Err(IngestError::CropOutOfBounds { rect: *rect, width: mask.width, height: mask.height });
    }
    let w = mask.width as usize;
    let mut pixels = Vec::with_capacity(rect.w as usize * rect.h as usize);
    for row in rect.y..rect.y + rect.h {
        let start = row as usize * w + rect.x as usize;
        pixels.extend_from_slice(&mask.pixels[start..start + rect.w as usize]);
    }
    Mask::new(rect.w, rect.h, pixels)
}
