//! Image ingestion: lossless formats in, `[1, 3, H, W]` tensors in [0, 1]
//! out, plus a procedural dataset generator for desk-scale runs.

use std::path::Path;

use image::imageops::FilterType;
use rand::Rng;

use crate::nn::Tensor;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Loads one image as `[1, 3, H, W]`, optionally resizing to a square side.
pub fn load_image(path: &Path, resize_to: Option<usize>) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let img = match resize_to {
        Some(s) => img.resize_exact(s as u32, s as u32, FilterType::Triangle),
        None => img,
    };
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, p) in rgb.enumerate_pixels() {
        let (x, y) = (x as usize, y as usize);
        for c in 0..3 {
            data[c * h * w + y * w + x] = f64::from(p.0[c]) / 255.0;
        }
    }
    Ok(Tensor::new(vec![1, 3, h, w], data))
}

/// Saves a `[1, 3, H, W]` (or `[3, H, W]`) tensor in [0, 1] as PNG.
pub fn save_image(path: &Path, tensor: &Tensor) -> Result<()> {
    let (c, h, w) = match tensor.shape() {
        [1, c, h, w] | [c, h, w] => (*c, *h, *w),
        other => {
            return Err(Error::DimensionMismatch(format!(
                "expected an image tensor, got {other:?}"
            )))
        }
    };
    if c != 3 {
        return Err(Error::DimensionMismatch(format!("expected 3 channels, got {c}")));
    }
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px: [u8; 3] = std::array::from_fn(|ci| {
                (tensor.data()[ci * h * w + y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8
            });
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img.save(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
}

/// Loads every readable image in a directory, sorted by filename so batches
/// are deterministic.
pub fn load_dir(dir: &Path, resize_to: Option<usize>) -> Result<Vec<Tensor>> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!(
            "{} is not a readable directory",
            dir.display()
        )));
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::Dataset(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("png" | "jpg" | "jpeg" | "bmp" | "PNG" | "JPG" | "JPEG")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Dataset(format!(
            "no images found in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| load_image(p, resize_to)).collect()
}

/// Stacks `[1, 3, H, W]` images into one `[N, 3, H, W]` batch.
pub fn stack_images(images: &[&Tensor]) -> Tensor {
    assert!(!images.is_empty());
    let (_, c, h, w) = images[0].dims4();
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        assert_eq!(img.shape(), images[0].shape(), "batch shapes must match");
        data.extend_from_slice(img.data());
    }
    Tensor::new(vec![images.len(), c, h, w], data)
}

/// Procedural images with enough structure to be worth compressing:
/// smooth color gradients, a few random rectangles and disks, light noise.
pub fn synthetic_dataset(count: usize, height: usize, width: usize, seed: u64) -> Vec<Tensor> {
    (0..count)
        .map(|i| synthetic_image(height, width, seed.wrapping_add(i as u64)))
        .collect()
}

pub fn synthetic_image(height: usize, width: usize, seed: u64) -> Tensor {
    let mut rng = rng_from_seed(crate::rng::derive_seed(seed, "synthetic-image"));
    let mut data = vec![0.0; 3 * height * width];
    // Base gradient with random orientation per channel.
    for c in 0..3 {
        let gx: f64 = rng.random_range(-1.0..1.0);
        let gy: f64 = rng.random_range(-1.0..1.0);
        let bias: f64 = rng.random_range(0.2..0.8);
        for y in 0..height {
            for x in 0..width {
                let v = bias + 0.3 * (gx * x as f64 / width as f64 + gy * y as f64 / height as f64);
                data[c * height * width + y * width + x] = v;
            }
        }
    }
    // Random solid shapes shared across channels with per-channel colors.
    for _ in 0..rng.random_range(3..7) {
        let cx = rng.random_range(0..width) as f64;
        let cy = rng.random_range(0..height) as f64;
        let r = rng.random_range(width as f64 / 12.0..width as f64 / 3.0);
        let color: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let rect = rng.random_range(0..2) == 0;
        for y in 0..height {
            for x in 0..width {
                let inside = if rect {
                    (x as f64 - cx).abs() < r * 0.8 && (y as f64 - cy).abs() < r * 0.5
                } else {
                    let dx = x as f64 - cx;
                    let dy = y as f64 - cy;
                    dx * dx + dy * dy < r * r
                };
                if inside {
                    for c in 0..3 {
                        data[c * height * width + y * width + x] =
                            0.7 * color[c] + 0.3 * data[c * height * width + y * width + x];
                    }
                }
            }
        }
    }
    for v in &mut data {
        *v = (*v + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0);
    }
    Tensor::new(vec![1, 3, height, width], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_images_are_valid_and_deterministic() {
        let a = synthetic_image(32, 32, 5);
        let b = synthetic_image(32, 32, 5);
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let c = synthetic_image(32, 32, 6);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn png_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = synthetic_image(24, 16, 9);
        save_image(&path, &img).unwrap();
        let loaded = load_image(&path, None).unwrap();
        assert_eq!(loaded.shape(), &[1, 3, 24, 16]);
        let max_err = img.max_abs_diff(&loaded);
        assert!(max_err <= 0.5 / 255.0 + 1e-9, "max err {max_err}");
    }

    #[test]
    fn directory_loading_is_sorted_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dir(dir.path(), None).is_err());
        for (i, name) in ["b.png", "a.png"].iter().enumerate() {
            save_image(&dir.path().join(name), &synthetic_image(16, 16, i as u64)).unwrap();
        }
        let imgs = load_dir(dir.path(), None).unwrap();
        assert_eq!(imgs.len(), 2);
        // a.png sorts first.
        let a = load_image(&dir.path().join("a.png"), None).unwrap();
        assert_eq!(imgs[0].data(), a.data());
    }

    #[test]
    fn stacking_builds_batches() {
        let a = synthetic_image(16, 16, 1);
        let b = synthetic_image(16, 16, 2);
        let batch = stack_images(&[&a, &b]);
        assert_eq!(batch.shape(), &[2, 3, 16, 16]);
        assert_eq!(&batch.data()[..a.numel()], a.data());
    }

    #[test]
    fn resize_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        save_image(&path, &synthetic_image(33, 41, 3)).unwrap();
        let t = load_image(&path, Some(16)).unwrap();
        assert_eq!(t.shape(), &[1, 3, 16, 16]);
    }
}
