//! PNG decode/encode and the tensor <-> image conversions used across the
//! pipeline. PNG is the only supported codec; 8-bit RGB or RGBA input
//! (alpha dropped), 8-bit RGB output.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageReader, Rgb};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decodes a PNG into a (3, H, W) tensor with values in [0, 1].
pub fn load_png(path: &Path) -> Result<Tensor<f64>> {
    let img = ImageReader::open(path)?.decode()?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f64; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        let (x, y) = (x as usize, y as usize);
        for c in 0..3 {
            data[c * h * w + y * w + x] = px.0[c] as f64 / 255.0;
        }
    }
    Tensor::from_vec(data, &[3, h, w])
}

/// Encodes a (3, H, W) tensor with values in [0, 1] (clamped) as PNG.
pub fn save_png(image: &Tensor<f64>, path: &Path) -> Result<()> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::shape(format!("save_png wants (3, H, W), got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let data = image.data();
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let px = |c: usize| {
            let v = data[c * h * w + y * w + x].clamp(0.0, 1.0);
            (v * 255.0).round() as u8
        };
        Rgb([px(0), px(1), px(2)])
    });
    buf.save(path)?;
    Ok(())
}

/// Sorted list of the .png files in a directory.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

/// [0,1] f64 image -> [-1,1] f32 training tensor.
pub fn to_signed_f32(image: &Tensor<f64>) -> Tensor<f32> {
    let data: Vec<f32> = image.data().iter().map(|&v| (2.0 * v - 1.0) as f32).collect();
    Tensor::from_vec(data, image.shape()).expect("same shape")
}

/// [-1,1] f32 tensor -> [0,1] f64 image (clamped).
pub fn to_unit_f64(t: &Tensor<f32>) -> Tensor<f64> {
    let data: Vec<f64> = t
        .data()
        .iter()
        .map(|&v| ((v as f64 + 1.0) * 0.5).clamp(0.0, 1.0))
        .collect();
    Tensor::from_vec(data, t.shape()).expect("same shape")
}

/// f64 [0,1] -> f32 tensor of the same range.
pub fn to_f32(image: &Tensor<f64>) -> Tensor<f32> {
    let data: Vec<f32> = image.data().iter().map(|&v| v as f32).collect();
    Tensor::from_vec(data, image.shape()).expect("same shape")
}

/// f32 -> f64 tensor, unchanged values.
pub fn to_f64(t: &Tensor<f32>) -> Tensor<f64> {
    let data: Vec<f64> = t.data().iter().map(|&v| v as f64).collect();
    Tensor::from_vec(data, t.shape()).expect("same shape")
}

/// One (B, 3, R, R) batch in [-1,1] -> single grid image (rows x cols).
pub fn batch_to_grid(batch: &Tensor<f32>, cols: usize) -> Result<Tensor<f64>> {
    let s = batch.shape();
    if s.len() != 4 || s[1] != 3 {
        return Err(Error::shape(format!("grid wants (B, 3, R, R), got {s:?}")));
    }
    let (b, r) = (s[0], s[2]);
    let cols = cols.max(1).min(b);
    let rows = b.div_ceil(cols);
    let (gh, gw) = (rows * r, cols * r);
    let mut data = vec![0.0f64; 3 * gh * gw];
    let src = batch.data();
    for i in 0..b {
        let (gy, gx) = (i / cols, i % cols);
        for c in 0..3 {
            for y in 0..r {
                for x in 0..r {
                    let v = src[((i * 3 + c) * r + y) * r + x] as f64;
                    data[c * gh * gw + (gy * r + y) * gw + (gx * r + x)] =
                        ((v + 1.0) * 0.5).clamp(0.0, 1.0);
                }
            }
        }
    }
    Tensor::from_vec(data, &[3, gh, gw])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_preserves_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let data: Vec<f64> = (0..3 * 4 * 4).map(|i| (i % 256) as f64 / 255.0).collect();
        let img = Tensor::from_vec(data, &[3, 4, 4]).unwrap();
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.shape(), &[3, 4, 4]);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn signed_unit_roundtrip() {
        let img = Tensor::from_vec(vec![0.0, 0.25, 0.5, 1.0], &[1, 2, 2]).unwrap();
        let signed = to_signed_f32(&img);
        assert_eq!(signed.data(), &[-1.0f32, -0.5, 0.0, 1.0]);
        let back = to_unit_f64(&signed);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}
