//! RGBA ingestion: alpha-composite onto white, aspect-preserving resize.

use std::path::Path;

use crate::error::{DdError, Result};
use crate::image_plane::ImagePlane;

/// Load a 4-channel PNG, composite onto white, and fit into a
/// `render_size²` canvas (aspect preserved, white padding).
pub fn ingest_rgba(path: &Path, render_size: usize) -> Result<ImagePlane<f32>> {
    let img = image::open(path).map_err(|e| DdError::Format(format!("{}: {e}", path.display())))?;
    if !img.color().has_alpha() {
        return Err(DdError::Invariant(format!(
            "{}: missing alpha channel (RGBA input required)",
            path.display()
        )));
    }
    let rgba = img.to_rgba8();
    ingest_rgba_buffer(&rgba, render_size)
}

pub(crate) fn ingest_rgba_buffer(
    rgba: &image::RgbaImage,
    render_size: usize,
) -> Result<ImagePlane<f32>> {
    let (w, h) = rgba.dimensions();
    if w == 0 || h == 0 {
        return Err(DdError::Invariant("empty image".into()));
    }
    // composite onto white at source resolution
    let mut composited = image::RgbImage::new(w, h);
    for (x, y, px) in rgba.enumerate_pixels() {
        let a = px[3] as f32 / 255.0;
        let blend = |c: u8| ((c as f32 / 255.0) * a + (1.0 - a)) * 255.0;
        composited.put_pixel(x, y, image::Rgb([blend(px[0]) as u8, blend(px[1]) as u8, blend(px[2]) as u8]));
    }
    // aspect-preserving resize onto a white canvas
    let scale = render_size as f32 / w.max(h) as f32;
    let nw = ((w as f32 * scale).round() as u32).max(1).min(render_size as u32);
    let nh = ((h as f32 * scale).round() as u32).max(1).min(render_size as u32);
    let resized = image::imageops::resize(&composited, nw, nh, image::imageops::FilterType::Triangle);
    let mut pixels = vec![1.0f32; render_size * render_size * 3];
    let x0 = (render_size as u32 - nw) / 2;
    let y0 = (render_size as u32 - nh) / 2;
    for (x, y, px) in resized.enumerate_pixels() {
        let p = (((y + y0) as usize) * render_size + (x + x0) as usize) * 3;
        for c in 0..3 {
            pixels[p + c] = px[c] as f32 / 255.0;
        }
    }
    ImagePlane::new(render_size, render_size, pixels, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opaque_input_keeps_rgb() {
        let mut img = image::RgbaImage::new(16, 16);
        for px in img.pixels_mut() {
            *px = image::Rgba([51, 102, 204, 255]);
        }
        let plane = ingest_rgba_buffer(&img, 16).unwrap();
        let px = plane.pixel(8, 8);
        assert!((px[0] - 0.2).abs() < 0.01);
        assert!((px[1] - 0.4).abs() < 0.01);
        assert!((px[2] - 0.8).abs() < 0.01);
    }

    #[test]
    fn transparent_input_is_white() {
        let img = image::RgbaImage::new(16, 16); // zero alpha everywhere
        let plane = ingest_rgba_buffer(&img, 16).unwrap();
        for v in plane.pixels() {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn half_alpha_gray_over_white() {
        // α=0.5, gray 0.2 → 0.5·0.2 + 0.5·1.0 = 0.6
        let mut img = image::RgbaImage::new(16, 16);
        for px in img.pixels_mut() {
            *px = image::Rgba([51, 51, 51, 128]);
        }
        let plane = ingest_rgba_buffer(&img, 16).unwrap();
        let px = plane.pixel(8, 8);
        for c in 0..3 {
            assert!((px[c] - 0.6).abs() < 0.01, "channel {c}: {}", px[c]);
        }
    }

    #[test]
    fn aspect_is_preserved_with_padding() {
        // a wide black opaque image: top/bottom bands stay white
        let mut img = image::RgbaImage::new(32, 8);
        for px in img.pixels_mut() {
            *px = image::Rgba([0, 0, 0, 255]);
        }
        let plane = ingest_rgba_buffer(&img, 16).unwrap();
        assert!(plane.pixel(8, 0)[0] > 0.99); // padding row
        assert!(plane.pixel(8, 8)[0] < 0.01); // content row
    }

    #[test]
    fn missing_alpha_is_rejected() {
        let dir = std::env::temp_dir().join("dd3g-rgba-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rgb.png");
        let img = image::RgbImage::new(8, 8);
        img.save(&path).unwrap();
        let err = ingest_rgba(&path, 16).unwrap_err();
        assert!(err.to_string().contains("alpha"));
    }
}
