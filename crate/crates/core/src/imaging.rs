//! Small 2-D sampling helpers shared by resampling, warping and the network's
//! condition-map resize. Pixel centres sit at integer coordinates.

use ndarray::{Array2, ArrayView2};

/// Bilinear sample at fractional `(y, x)` with coordinates clamped to the image.
pub fn sample_bilinear(img: ArrayView2<'_, f32>, y: f64, x: f64) -> f64 {
    let (h, w) = img.dim();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let v00 = img[[y0, x0]] as f64;
    let v01 = img[[y0, x1]] as f64;
    let v10 = img[[y1, x0]] as f64;
    let v11 = img[[y1, x1]] as f64;
    let top = v00 + (v01 - v00) * fx;
    let bottom = v10 + (v11 - v10) * fx;
    top + (bottom - top) * fy
}

/// Half-pixel-centred bilinear resize with edge clamping.
pub fn resize_bilinear(img: ArrayView2<'_, f32>, out_h: usize, out_w: usize) -> Array2<f32> {
    let (h, w) = img.dim();
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    Array2::from_shape_fn((out_h, out_w), |(i, j)| {
        let y = (i as f64 + 0.5) * sy - 0.5;
        let x = (j as f64 + 0.5) * sx - 0.5;
        sample_bilinear(img, y, x) as f32
    })
}

/// Nearest-neighbour resize using the same half-pixel convention.
pub fn resize_nearest(img: ArrayView2<'_, f32>, out_h: usize, out_w: usize) -> Array2<f32> {
    let (h, w) = img.dim();
    Array2::from_shape_fn((out_h, out_w), |(i, j)| {
        let y = ((i * h) / out_h).min(h - 1);
        let x = ((j * w) / out_w).min(w - 1);
        img[[y, x]]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_at_pixel_centres_is_exact() {
        let img = Array2::from_shape_fn((3, 4), |(y, x)| (y * 4 + x) as f32);
        assert_eq!(sample_bilinear(img.view(), 1.0, 2.0), 6.0);
        assert_eq!(sample_bilinear(img.view(), 0.5, 0.5), 2.5);
        assert_eq!(sample_bilinear(img.view(), -3.0, 10.0), 3.0);
    }

    #[test]
    fn nearest_replicates_pixels() {
        let img = Array2::from_shape_fn((2, 2), |(y, x)| (y * 2 + x) as f32);
        let up = resize_nearest(img.view(), 4, 4);
        assert_eq!(up[[1, 1]], 0.0);
        assert_eq!(up[[3, 2]], 3.0);
    }
}
