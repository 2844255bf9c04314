//! Image files: a JSON header next to a little-endian float32 voxel file
//! (x-fastest), and binary/ASCII PGM for 2D images.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LorError, Result};
use crate::image::{ImageGrid, Shape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageHeader {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub intensity_range: [f64; 2],
    pub dtype: String,
    /// Voxel file, relative to the header's directory.
    pub data_file: String,
}

/// Writes `<path>` (JSON header) and `<path with .raw extension>`.
pub fn write_image(path: &Path, image: &ImageGrid) -> Result<()> {
    let raw_path = path.with_extension("raw");
    let data_file = raw_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| LorError::Malformed(format!("bad image path {}", path.display())))?
        .to_string();
    let (lo, hi) = image.intensity_range();
    let header = ImageHeader {
        dims: image.dims().to_vec(),
        spacing: image.spacing().to_vec(),
        intensity_range: [lo, hi],
        dtype: "float32".into(),
        data_file,
    };
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    let mut bytes = Vec::with_capacity(image.values().len() * 4);
    for &v in image.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::File::create(&raw_path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<ImageGrid> {
    let header: ImageHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
    if header.dtype != "float32" {
        return Err(LorError::Malformed(format!("unsupported dtype {}", header.dtype)));
    }
    let shape = Shape::new(&header.dims)?;
    let raw_path: PathBuf = path
        .parent()
        .map(|d| d.join(&header.data_file))
        .unwrap_or_else(|| PathBuf::from(&header.data_file));
    let bytes = fs::read(&raw_path)?;
    if bytes.len() != shape.len() * 4 {
        return Err(LorError::Malformed(format!(
            "{} holds {} bytes, expected {}",
            raw_path.display(),
            bytes.len(),
            shape.len() * 4
        )));
    }
    let [lo, hi] = header.intensity_range;
    // float32 rounding can step just outside the stored range
    let values = bytes
        .chunks_exact(4)
        .map(|c| (f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).clamp(lo, hi))
        .collect();
    ImageGrid::with_range(shape, values, (lo, hi))?.with_spacing(&header.spacing)
}

/// Writes a 2D image as binary 8-bit PGM, mapping the intensity range onto
/// 0..=255.
pub fn write_pgm(path: &Path, image: &ImageGrid) -> Result<()> {
    if image.ndim() != 2 {
        return Err(LorError::InvalidImage("PGM export needs a 2D image".into()));
    }
    let dims = image.dims();
    let mut out = format!("P5\n{} {}\n255\n", dims[0], dims[1]).into_bytes();
    out.extend(
        image
            .values()
            .iter()
            .map(|&v| (image.unit_value(v) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    fs::write(path, out)?;
    Ok(())
}

/// Reads binary (P5, 8 or 16 bit) or ASCII (P2) PGM into `[0, 1]`
/// intensities.
pub fn read_pgm(path: &Path) -> Result<ImageGrid> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(LorError::Malformed("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let parse = |s: String| -> Result<usize> {
        s.parse()
            .map_err(|_| LorError::Malformed(format!("bad PGM number {s:?}")))
    };
    let w = parse(token()?)?;
    let h = parse(token()?)?;
    let maxval = parse(token()?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(LorError::Malformed(format!("bad PGM maxval {maxval}")));
    }
    let n = w * h;
    let scale = 1.0 / maxval as f64;
    let values: Vec<f64> = match magic.as_str() {
        "P5" => {
            let data = &bytes[pos + 1..];
            if maxval < 256 {
                if data.len() < n {
                    return Err(LorError::Malformed("truncated PGM data".into()));
                }
                data[..n].iter().map(|&b| b as f64 * scale).collect()
            } else {
                if data.len() < 2 * n {
                    return Err(LorError::Malformed("truncated PGM data".into()));
                }
                data.chunks_exact(2)
                    .take(n)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
                    .collect()
            }
        }
        "P2" => {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(parse(token()?)? as f64 * scale);
            }
            v
        }
        other => return Err(LorError::Malformed(format!("unsupported PGM magic {other:?}"))),
    };
    let shape = Shape::new(&[w, h])?;
    ImageGrid::with_range(shape, values.into_iter().map(|v| v.min(1.0)).collect(), (0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip_keeps_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageGrid::from_fn(&[5, 4, 6], |p| p.0[0] * 0.25 - p.0[2])
            .unwrap()
            .with_spacing(&[1.0, 0.5, 2.0])
            .unwrap();
        let path = dir.path().join("vol.json");
        write_image(&path, &img).unwrap();
        assert_eq!(fs::metadata(dir.path().join("vol.raw")).unwrap().len(), 5 * 4 * 6 * 4);
        let back = read_image(&path).unwrap();
        assert_eq!(back.dims(), img.dims());
        assert_eq!(back.spacing(), img.spacing());
        assert_eq!(back.intensity_range(), img.intensity_range());
        for (a, b) in back.values().iter().zip(img.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn raw_is_little_endian_x_fastest() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageGrid::from_fn(&[4, 4], |p| p.0[0] + 10.0 * p.0[1]).unwrap();
        let path = dir.path().join("a.json");
        write_image(&path, &img).unwrap();
        let bytes = fs::read(dir.path().join("a.raw")).unwrap();
        assert_eq!(f32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1.0);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 10.0);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageGrid::from_fn(&[6, 5], |p| (p.0[0] + p.0[1]) / 9.0).unwrap();
        let path = dir.path().join("a.pgm");
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.dims(), &[6, 5]);
        for (a, b) in back.values().iter().zip(img.normalized().values()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn ascii_pgm_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.pgm");
        let mut s = String::from("P2\n# comment\n4 4\n15\n");
        for k in 0..16 {
            s.push_str(&format!("{} ", k % 16));
        }
        fs::write(&path, s).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.get(3, 0, 0), 3.0 / 15.0);
        assert!(read_pgm(&dir.path().join("missing.pgm")).is_err());
    }
}
