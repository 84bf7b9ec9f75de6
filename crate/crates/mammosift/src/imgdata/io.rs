//! Image file I/O: 16-bit grayscale PGM (hand-rolled P5 codec) and PNG
//! (via the `image` crate), plus 8-bit RGB PNG output for pseudo-color
//! composites. The codec is chosen by file extension.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imgdata::{BinaryMask, GrayImage16, GrayImage32, PseudoColorImage};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Codec {
    Pgm,
    Png,
}

fn codec_for(path: &Path) -> Result<Codec> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => Ok(Codec::Pgm),
        "png" => Ok(Codec::Png),
        _ => Err(Error::CorruptHeader {
            path: path.to_path_buf(),
            detail: format!("cannot infer image codec from extension {ext:?} (expected pgm or png)"),
        }),
    }
}

/// Loads a 16-bit grayscale image from a PGM or PNG file.
///
/// The stated `pixel_size_mm` is attached to the result; neither format
/// carries physical calibration. 8-bit or colour content is rejected with
/// an unsupported-bit-depth error rather than silently widened.
pub fn load_gray16(path: &Path, pixel_size_mm: f64) -> Result<GrayImage16> {
    match codec_for(path)? {
        Codec::Pgm => load_pgm16(path, pixel_size_mm),
        Codec::Png => load_png16(path, pixel_size_mm),
    }
}

/// Saves a 16-bit grayscale image as PGM or PNG depending on extension.
pub fn save_gray16(path: &Path, img: &GrayImage16) -> Result<()> {
    match codec_for(path)? {
        Codec::Pgm => save_pgm16(path, img),
        Codec::Png => {
            let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(
                img.width as u32,
                img.height as u32,
                img.pixels.clone(),
            )
            .ok_or_else(|| Error::Invariant("pixel buffer does not match dimensions".into()))?;
            buf.save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| encode_error(path, e))
        }
    }
}

/// Saves a pseudo-color composite as an 8-bit RGB PNG.
pub fn save_rgb8(path: &Path, img: &PseudoColorImage) -> Result<()> {
    let n = img.width * img.height;
    let mut interleaved = Vec::with_capacity(n * 3);
    for i in 0..n {
        interleaved.push(img.r[i]);
        interleaved.push(img.g[i]);
        interleaved.push(img.b[i]);
    }
    let buf = image::ImageBuffer::<image::Rgb<u8>, _>::from_raw(
        img.width as u32,
        img.height as u32,
        interleaved,
    )
    .ok_or_else(|| Error::Invariant("channel buffers do not match dimensions".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| encode_error(path, e))
}

/// Saves a binary mask as an 8-bit grayscale PNG (set = 255, clear = 0).
pub fn save_mask8(path: &Path, mask: &BinaryMask) -> Result<()> {
    let pixels: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::ImageBuffer::<image::Luma<u8>, _>::from_raw(
        mask.width as u32,
        mask.height as u32,
        pixels,
    )
    .ok_or_else(|| Error::Invariant("mask buffer does not match dimensions".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| encode_error(path, e))
}

/// Loads a binary mask from an 8-bit grayscale PNG; any nonzero pixel is set.
pub fn load_mask8(path: &Path) -> Result<BinaryMask> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::CorruptHeader { path: path.to_path_buf(), detail: e.to_string() })?;
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let bits = buf.into_raw().iter().map(|&v| v != 0).collect();
            BinaryMask::new(w, h, bits)
        }
        _ => Err(Error::UnsupportedBitDepth { path: path.to_path_buf() }),
    }
}

/// Saves a response band as headered little-endian raw: `width` and
/// `height` as `u32`, then `width * height` row-major `u32` samples.
/// Unlike the 16-bit PNG export this is lossless.
pub fn save_band_raw(path: &Path, band: &GrayImage32) -> Result<()> {
    let mut out = Vec::with_capacity(8 + band.pixels.len() * 4);
    out.extend_from_slice(&(band.width as u32).to_le_bytes());
    out.extend_from_slice(&(band.height as u32).to_le_bytes());
    for &v in &band.pixels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a response band written by [`save_band_raw`].
pub fn load_band_raw(path: &Path) -> Result<GrayImage32> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |detail: String| Error::CorruptHeader { path: path.to_path_buf(), detail };
    if bytes.len() < 8 {
        return Err(corrupt(format!("file has {} bytes, need an 8-byte header", bytes.len())));
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(corrupt(format!("invalid raw band dimensions {width}x{height}")));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| corrupt(format!("raw band dimensions {width}x{height} overflow")))?;
    let raster = &bytes[8..];
    if raster.len() != expected {
        return Err(corrupt(format!(
            "raster has {} bytes, expected {expected} for {width}x{height}x32",
            raster.len()
        )));
    }
    let pixels = raster
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    GrayImage32::new(width, height, pixels)
}

fn encode_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::CorruptHeader { path: path.to_path_buf(), detail: other.to_string() },
    }
}

// ---------------------------------------------------------------- PGM (P5)

/// Pulls the next whitespace-delimited ASCII token out of a PGM header,
/// skipping `#` comments through end of line.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<Vec<u8>> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(bytes[start..*pos].to_vec())
}

fn parse_dim(path: &Path, token: Option<Vec<u8>>, what: &str) -> Result<usize> {
    let corrupt = |detail: String| Error::CorruptHeader { path: path.to_path_buf(), detail };
    let tok = token.ok_or_else(|| corrupt(format!("missing {what} in PGM header")))?;
    std::str::from_utf8(&tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| {
            corrupt(format!("invalid {what} {:?} in PGM header", String::from_utf8_lossy(&tok)))
        })
}

fn load_pgm16(path: &Path, pixel_size_mm: f64) -> Result<GrayImage16> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |detail: String| Error::CorruptHeader { path: path.to_path_buf(), detail };

    let mut pos = 0usize;
    match next_token(&bytes, &mut pos) {
        Some(magic) if magic == b"P5" => {}
        Some(magic) => {
            return Err(corrupt(format!(
                "expected magic P5, found {:?}",
                String::from_utf8_lossy(&magic)
            )))
        }
        None => return Err(corrupt("empty file".into())),
    }
    let width = parse_dim(path, next_token(&bytes, &mut pos), "width")?;
    let height = parse_dim(path, next_token(&bytes, &mut pos), "height")?;
    let maxval = parse_dim(path, next_token(&bytes, &mut pos), "maxval")?;
    if maxval != 65535 {
        return Err(Error::UnsupportedBitDepth { path: path.to_path_buf() });
    }
    // Exactly one whitespace byte separates the maxval token from the
    // raster; `next_token` left `pos` on it.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(corrupt("missing whitespace before raster data".into()));
    }
    pos += 1;

    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(2))
        .ok_or_else(|| corrupt(format!("dimensions {width}x{height} overflow")))?;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(corrupt(format!(
            "raster has {} bytes, expected {expected} for {width}x{height}x16",
            raster.len()
        )));
    }
    let pixels = raster[..expected]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    GrayImage16::new(width, height, pixels, pixel_size_mm)
}

fn save_pgm16(path: &Path, img: &GrayImage16) -> Result<()> {
    let mut out = Vec::with_capacity(32 + img.pixels.len() * 2);
    out.extend_from_slice(format!("P5\n{} {}\n65535\n", img.width, img.height).as_bytes());
    for &v in &img.pixels {
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// --------------------------------------------------------------------- PNG

fn load_png16(path: &Path, pixel_size_mm: f64) -> Result<GrayImage16> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::CorruptHeader { path: path.to_path_buf(), detail: e.to_string() })?;
    match decoded {
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            GrayImage16::new(w, h, buf.into_raw(), pixel_size_mm)
        }
        _ => Err(Error::UnsupportedBitDepth { path: path.to_path_buf() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;

    fn ramp(width: usize, height: usize) -> GrayImage16 {
        let pixels = (0..width * height).map(|i| (i * 257 % 65536) as u16).collect();
        GrayImage16::new(width, height, pixels, 0.07).unwrap()
    }

    #[test]
    fn pgm_roundtrip_preserves_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = ramp(7, 5);
        save_gray16(&path, &img).unwrap();
        let back = load_gray16(&path, 0.07).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn png_roundtrip_preserves_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = ramp(5, 9);
        save_gray16(&path, &img).unwrap();
        let back = load_gray16(&path, 0.07).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_header_allows_comments_and_mixed_whitespace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut bytes = b"P5 # magic\n# a comment line\n 2\t1 # dims\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x12, 0x34, 0xAB, 0xCD]);
        fs::write(&path, bytes).unwrap();
        let img = load_gray16(&path, 1.0).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixels, vec![0x1234, 0xABCD]);
    }

    #[test]
    fn missing_file_reports_not_found() {
        let err = load_gray16(Path::new("/nonexistent/x.pgm"), 0.07).unwrap_err();
        assert!(matches!(err, Error::NotFound { .. }), "got {err:?}");
        assert_eq!(err.kind(), ErrorKind::Io);
    }

    #[test]
    fn eight_bit_pgm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("8bit.pgm");
        fs::write(&path, b"P5\n2 2\n255\n\x00\x01\x02\x03").unwrap();
        let err = load_gray16(&path, 0.07).unwrap_err();
        assert!(matches!(err, Error::UnsupportedBitDepth { .. }), "got {err:?}");
    }

    #[test]
    fn eight_bit_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("8bit.png");
        let buf = image::ImageBuffer::<image::Luma<u8>, _>::from_raw(2, 2, vec![0u8; 4]).unwrap();
        buf.save_with_format(&path, image::ImageFormat::Png).unwrap();
        let err = load_gray16(&path, 0.07).unwrap_err();
        assert!(matches!(err, Error::UnsupportedBitDepth { .. }), "got {err:?}");
    }

    #[test]
    fn corrupt_headers_are_distinguished_from_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        for (name, bytes) in [
            ("bad_magic.pgm", b"P2\n2 2\n65535\n".to_vec()),
            ("bad_dim.pgm", b"P5\n0 2\n65535\n".to_vec()),
            ("empty.pgm", Vec::new()),
            ("not_png.png", b"definitely not a png".to_vec()),
        ] {
            let path = dir.path().join(name);
            fs::write(&path, bytes).unwrap();
            let err = load_gray16(&path, 0.07).unwrap_err();
            assert!(matches!(err, Error::CorruptHeader { .. }), "{name}: got {err:?}");
            assert_eq!(err.kind(), ErrorKind::Validation, "{name}");
        }
    }

    #[test]
    fn truncated_pgm_raster_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.pgm");
        fs::write(&path, b"P5\n4 4\n65535\n\x00\x01").unwrap();
        let err = load_gray16(&path, 0.07).unwrap_err();
        assert!(matches!(err, Error::CorruptHeader { .. }), "got {err:?}");
    }

    #[test]
    fn unknown_extension_is_rejected() {
        let err = load_gray16(Path::new("/tmp/img.tiff"), 0.07).unwrap_err();
        assert!(matches!(err, Error::CorruptHeader { .. }), "got {err:?}");
    }

    #[test]
    fn mask_png_roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let bits = (0..35).map(|i| i % 3 == 0).collect();
        let mask = BinaryMask::new(7, 5, bits).unwrap();
        save_mask8(&path, &mask).unwrap();
        assert_eq!(load_mask8(&path).unwrap(), mask);
    }

    #[test]
    fn sixteen_bit_mask_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        save_gray16(&path, &ramp(3, 3)).unwrap();
        let err = load_mask8(&path).unwrap_err();
        assert!(matches!(err, Error::UnsupportedBitDepth { .. }), "got {err:?}");
    }

    #[test]
    fn raw_band_roundtrip_preserves_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("band.raw");
        let pixels = (0..12u32).map(|i| i * 300_000 + 7).collect();
        let band = GrayImage32::new(4, 3, pixels).unwrap();
        save_band_raw(&path, &band).unwrap();
        assert_eq!(load_band_raw(&path).unwrap(), band);
    }

    #[test]
    fn raw_band_header_is_little_endian_width_then_height() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("band.raw");
        let band = GrayImage32::new(2, 1, vec![0x01020304, 5]).unwrap();
        save_band_raw(&path, &band).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], &2u32.to_le_bytes(), "width first");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes(), "then height");
        assert_eq!(&bytes[8..12], &[0x04, 0x03, 0x02, 0x01], "LE samples");
        assert_eq!(bytes.len(), 16);
    }

    #[test]
    fn malformed_raw_bands_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        for (name, bytes) in [
            ("tiny.raw", vec![1, 0, 0]),
            ("zerodim.raw", [0u32.to_le_bytes(), 4u32.to_le_bytes()].concat()),
            (
                "short.raw",
                [3u32.to_le_bytes(), 3u32.to_le_bytes(), 9u32.to_le_bytes()].concat(),
            ),
        ] {
            let path = dir.path().join(name);
            fs::write(&path, bytes).unwrap();
            let err = load_band_raw(&path).unwrap_err();
            assert!(matches!(err, Error::CorruptHeader { .. }), "{name}: got {err:?}");
        }
    }

    #[test]
    fn rgb8_png_writes_interleaved_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pcm.png");
        let pcm = PseudoColorImage::new(2, 1, vec![10, 20], vec![30, 40], vec![50, 60]).unwrap();
        save_rgb8(&path, &pcm).unwrap();
        let back = image::open(&path).unwrap().into_rgb8();
        assert_eq!(back.get_pixel(0, 0).0, [10, 30, 50]);
        assert_eq!(back.get_pixel(1, 0).0, [20, 40, 60]);
    }
}
