//! Atomic file writes and 8-bit grayscale PNG conversion.

use crate::error::CliError;
use forcemosaic_core::Image;
use std::io::Write;
use std::path::Path;

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// PNG bytes of `img`; pixels outside its mask are written as 0.
pub fn encode_png(img: &Image) -> Result<Vec<u8>, image::ImageError> {
    let mut data = img.data().to_vec();
    if let Some(mask) = img.mask() {
        data.iter_mut().zip(mask).filter(|(_, m)| !**m).for_each(|(v, _)| *v = 0);
    }
    let gray = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, data).expect("buffer sized from dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    gray.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_png(path: &Path, img: &Image) -> Result<(), CliError> {
    let bytes = encode_png(img).map_err(|source| CliError::Image { path: path.into(), source })?;
    write_atomic(path, &bytes)
}

pub fn write_rgb_png(path: &Path, img: &image::RgbImage) -> Result<(), CliError> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|source| CliError::Image { path: path.into(), source })?;
    write_atomic(path, &out.into_inner())
}

/// Loads any supported image as 8-bit luminance, without a mask.
pub fn read_gray(path: &Path) -> Result<Image, CliError> {
    if !path.exists() {
        return Err(CliError::MissingFile { path: path.into() });
    }
    let dynimg = image::open(path).map_err(|source| CliError::Image { path: path.into(), source })?;
    let g = dynimg.to_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok(Image::new(w, h, g.into_raw())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_zeroes_masked_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let mut img = Image::from_fn(8, 6, |x, y| (x * 30 + y) as u8 + 1);
        img.apply_circular_mask(3.5, 2.5, 2.0);
        write_png(&p, &img).unwrap();
        let back = read_gray(&p).unwrap();
        assert_eq!(back.get(3, 2), img.get(3, 2));
        assert_eq!(back.get(0, 0), 0);
        assert!(back.mask().is_none());
        assert!(matches!(read_gray(&dir.path().join("none.png")), Err(CliError::MissingFile { .. })));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
