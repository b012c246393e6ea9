//! Image preprocessing: bilinear resize to 224×224 and [−1, 1] scaling.

use std::path::Path;

use ndarray::Array3;

use crate::error::{PadError, Result};

/// Square input resolution expected by the backbone.
pub const INPUT_HW: usize = 224;

/// Half-pixel-centered bilinear sampling with edge clamping, channel by
/// channel. Exact identity when sizes match.
fn bilinear_resize(src: &Array3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    let (ch, h, w) = (src.shape()[0], src.shape()[1], src.shape()[2]);
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;
    let mut out = Array3::zeros((ch, out_h, out_w));
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for c in 0..ch {
                let top = src[[c, y0, x0]] * (1.0 - fx) + src[[c, y0, x1]] * fx;
                let bottom = src[[c, y1, x0]] * (1.0 - fx) + src[[c, y1, x1]] * fx;
                out[[c, oy, ox]] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

/// Decoded RGB image → (3, 224, 224) array scaled to [−1, 1].
pub fn preprocess_rgb(img: &image::RgbImage) -> Result<Array3<f64>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(PadError::Domain("cannot preprocess an empty image".into()));
    }
    let mut src = Array3::zeros((3, h, w));
    for (x, y, pixel) in img.enumerate_pixels() {
        for c in 0..3 {
            src[[c, y as usize, x as usize]] = pixel.0[c] as f64;
        }
    }
    let resized = bilinear_resize(&src, INPUT_HW, INPUT_HW);
    Ok(resized.mapv(|v| v / 127.5 - 1.0))
}

/// Rejects non-RGB inputs per the model contract (exactly 3 channels).
pub fn preprocess(img: &image::DynamicImage) -> Result<Array3<f64>> {
    match img {
        image::DynamicImage::ImageRgb8(rgb) => preprocess_rgb(rgb),
        image::DynamicImage::ImageLuma8(_) | image::DynamicImage::ImageLumaA8(_) => Err(
            PadError::Domain("grayscale input: the model expects 3-channel RGB".into()),
        ),
        other => Err(PadError::Domain(format!(
            "unsupported color type {:?}: the model expects 3-channel RGB",
            other.color()
        ))),
    }
}

/// Opens and preprocesses an image file, naming the path on I/O failure.
pub fn load_and_preprocess(path: &Path) -> Result<Array3<f64>> {
    let img = image::open(path)
        .map_err(|e| PadError::io(path, std::io::Error::other(e.to_string())))?;
    preprocess(&img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(w: u32, h: u32, rgb: [u8; 3]) -> image::RgbImage {
        image::RgbImage::from_pixel(w, h, image::Rgb(rgb))
    }

    #[test]
    fn solid_color_stays_solid() {
        let out = preprocess_rgb(&solid(448, 448, [100, 150, 200])).unwrap();
        assert_eq!(out.shape(), &[3, 224, 224]);
        let expect = [100.0 / 127.5 - 1.0, 150.0 / 127.5 - 1.0, 200.0 / 127.5 - 1.0];
        for (c, want) in expect.iter().enumerate() {
            for v in out.index_axis(ndarray::Axis(0), c).iter() {
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_resize_only_normalizes() {
        let mut img = solid(224, 224, [0, 0, 0]);
        for (x, y, p) in img.enumerate_pixels_mut() {
            p.0 = [(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8];
        }
        let out = preprocess_rgb(&img).unwrap();
        for y in 0..224usize {
            for x in 0..224usize {
                let p = img.get_pixel(x as u32, y as u32).0;
                for c in 0..3 {
                    let expected = p[c] as f64 / 127.5 - 1.0;
                    assert!((out[[c, y, x]] - expected).abs() < 1e-12, "({x},{y},{c})");
                }
            }
        }
    }

    // Independent reference: direct per-pixel 4-neighbor interpolation,
    // written as a plain double loop with no shared helpers.
    fn reference_bilinear(img: &image::RgbImage, out_hw: usize) -> Vec<f64> {
        let (w, h) = (img.width() as f64, img.height() as f64);
        let mut out = vec![0.0; 3 * out_hw * out_hw];
        for oy in 0..out_hw {
            for ox in 0..out_hw {
                let sy = ((oy as f64 + 0.5) * h / out_hw as f64 - 0.5).clamp(0.0, h - 1.0);
                let sx = ((ox as f64 + 0.5) * w / out_hw as f64 - 0.5).clamp(0.0, w - 1.0);
                let (y0, x0) = (sy.floor() as u32, sx.floor() as u32);
                let y1 = (y0 + 1).min(img.height() - 1);
                let x1 = (x0 + 1).min(img.width() - 1);
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                for c in 0..3 {
                    let v00 = img.get_pixel(x0, y0).0[c] as f64;
                    let v01 = img.get_pixel(x1, y0).0[c] as f64;
                    let v10 = img.get_pixel(x0, y1).0[c] as f64;
                    let v11 = img.get_pixel(x1, y1).0[c] as f64;
                    let v = (v00 * (1.0 - fx) + v01 * fx) * (1.0 - fy)
                        + (v10 * (1.0 - fx) + v11 * fx) * fy;
                    out[(c * out_hw + oy) * out_hw + ox] = v;
                }
            }
        }
        out
    }

    #[test]
    fn aspect_distortion_matches_reference_resizer() {
        let mut img = solid(100, 300, [0, 0, 0]);
        for (x, y, p) in img.enumerate_pixels_mut() {
            let v = ((x as f64 * 0.37).sin() * 90.0 + (y as f64 * 0.11).cos() * 80.0 + 128.0)
                .clamp(0.0, 255.0) as u8;
            p.0 = [v, v.wrapping_add(40), v.wrapping_mul(3)];
        }
        let out = preprocess_rgb(&img).unwrap();
        let reference = reference_bilinear(&img, INPUT_HW);
        for c in 0..3usize {
            for y in 0..INPUT_HW {
                for x in 0..INPUT_HW {
                    let got = (out[[c, y, x]] + 1.0) * 127.5;
                    let want = reference[(c * INPUT_HW + y) * INPUT_HW + x];
                    assert!(
                        (got - want).abs() <= 1.0,
                        "({x},{y},{c}): {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn grayscale_and_empty_rejected() {
        let gray = image::DynamicImage::ImageLuma8(image::GrayImage::new(10, 10));
        assert!(matches!(preprocess(&gray), Err(PadError::Domain(_))));
        let rgba = image::DynamicImage::ImageRgba8(image::RgbaImage::new(10, 10));
        assert!(matches!(preprocess(&rgba), Err(PadError::Domain(_))));
        let empty = solid(1, 1, [5, 5, 5]);
        assert!(preprocess_rgb(&empty).is_ok());
    }

    #[test]
    fn missing_file_error_names_path() {
        let err = load_and_preprocess(Path::new("/no/such/image.png")).unwrap_err();
        assert!(err.to_string().contains("/no/such/image.png"));
    }
}
