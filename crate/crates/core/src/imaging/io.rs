//! Raster I/O: binary PGM (P5) and 8-bit grayscale PNG.
//!
//! Images map `[0, 255]` linearly onto `[0, 1]`. Masks use the same
//! containers with the payload restricted to `{0, 255}`; anything else is
//! rejected rather than thresholded, so a corrupted annotation fails loudly.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use super::{BinaryMask, GrayImage, ImagingError};

fn io_err(path: &Path, source: std::io::Error) -> ImagingError {
    if source.kind() == ErrorKind::NotFound {
        ImagingError::FileNotFound(path.display().to_string())
    } else {
        ImagingError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

enum RasterFormat {
    Pgm,
    Png,
}

fn sniff_format(bytes: &[u8], path: &Path) -> Result<RasterFormat, ImagingError> {
    if bytes.starts_with(b"P5") {
        Ok(RasterFormat::Pgm)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        Ok(RasterFormat::Png)
    } else {
        Err(ImagingError::UnsupportedFormat(path.display().to_string()))
    }
}

/// Raw 8-bit grayscale payload plus dimensions.
struct RawGray {
    width: usize,
    height: usize,
    bytes: Vec<u8>,
}

fn decode_raw(path: &Path) -> Result<RawGray, ImagingError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    match sniff_format(&bytes, path)? {
        RasterFormat::Pgm => decode_pgm(&bytes, path),
        RasterFormat::Png => decode_png(&bytes, path),
    }
}

/// P5 header: magic, whitespace-separated width/height/maxval with `#`
/// comments, one whitespace byte, then the binary payload.
fn decode_pgm(bytes: &[u8], path: &Path) -> Result<RawGray, ImagingError> {
    let malformed = |detail: String| ImagingError::Malformed {
        format: "PGM",
        detail,
    };
    let mut pos = 2; // past "P5"
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed("truncated header".into())),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(malformed(format!("expected integer at byte {start}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ascii");
        *field = text
            .parse::<u64>()
            .map_err(|_| malformed(format!("integer out of range at byte {start}")))?;
    }
    if bytes.get(pos).map(|b| b.is_ascii_whitespace()) != Some(true) {
        return Err(malformed("missing whitespace after maxval".into()));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if maxval > 255 {
        return Err(ImagingError::UnsupportedBitDepth(path.display().to_string()));
    }
    if maxval == 0 {
        return Err(malformed("maxval is zero".into()));
    }
    let pixel_count = width
        .checked_mul(height)
        .filter(|&n| n <= isize::MAX as u64)
        .ok_or(ImagingError::DimensionOverflow { width, height })?;
    let payload = &bytes[pos..];
    if payload.len() as u64 != pixel_count {
        return Err(malformed(format!(
            "payload length {} != {width}x{height}",
            payload.len()
        )));
    }
    let bytes = if maxval == 255 {
        payload.to_vec()
    } else {
        // Rescale smaller maxvals so loaded intensities still span [0, 1].
        payload
            .iter()
            .map(|&v| ((u32::from(v) * 255 + u32::from(maxval as u8) / 2) / u32::from(maxval as u8)) as u8)
            .collect()
    };
    Ok(RawGray {
        width: width as usize,
        height: height as usize,
        bytes,
    })
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<RawGray, ImagingError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| {
        ImagingError::Malformed {
            format: "PNG",
            detail: e.to_string(),
        }
    })?;
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            Ok(RawGray {
                width: w,
                height: h,
                bytes: buf.into_raw(),
            })
        }
        image::DynamicImage::ImageLuma16(_) => {
            Err(ImagingError::UnsupportedBitDepth(path.display().to_string()))
        }
        _ => Err(ImagingError::UnsupportedColorType(
            path.display().to_string(),
        )),
    }
}

/// Load an 8-bit grayscale PGM or PNG, mapping `[0, 255]` onto `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImagingError> {
    let raw = decode_raw(path.as_ref())?;
    let data = raw.bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
    GrayImage::new(raw.width, raw.height, data)
}

/// Load a binary mask; every payload byte must be 0 or 255.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask, ImagingError> {
    let raw = decode_raw(path.as_ref())?;
    let mut bits = Vec::with_capacity(raw.bytes.len());
    for (index, &value) in raw.bytes.iter().enumerate() {
        match value {
            0 => bits.push(false),
            255 => bits.push(true),
            _ => return Err(ImagingError::MaskPixelNotBinary { value, index }),
        }
    }
    BinaryMask::new(raw.width, raw.height, bits)
}

fn encode_to(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<(), ImagingError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") => {
            let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
            out.extend_from_slice(bytes);
            fs::write(path, out).map_err(|e| io_err(path, e))
        }
        Some("png") => {
            let buf =
                image::ImageBuffer::<image::Luma<u8>, _>::from_raw(width as u32, height as u32, bytes.to_vec())
                    .expect("buffer sized from dimensions");
            buf.save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| ImagingError::Io {
                    path: path.display().to_string(),
                    source: std::io::Error::other(e.to_string()),
                })
        }
        _ => Err(ImagingError::UnsupportedFormat(path.display().to_string())),
    }
}

/// Save an image as 8-bit PGM or PNG (by extension); intensities quantize to
/// `round(v * 255)`.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (f64::from(v) * 255.0).round() as u8)
        .collect();
    encode_to(path.as_ref(), img.width(), img.height(), &bytes)
}

/// Save a mask as 8-bit PGM or PNG; set bits become 255, clear bits 0.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let bytes: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_to(path.as_ref(), mask.width(), mask.height(), &bytes)
}
