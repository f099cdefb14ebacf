//! Structural similarity index with a uniform window.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

const K1: f64 = 0.01;
const K2: f64 = 0.03;
const DYNAMIC_RANGE: f64 = 1.0;

/// Mean local SSIM over all fully interior `window x window` patches, with
/// the standard stabilization constants `C1 = (0.01 R)^2`, `C2 = (0.03 R)^2`
/// for dynamic range `R = 1`. The result lies in `[-1, 1]` and equals 1 only
/// for identical images.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, window: usize) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Dimension {
            context: "ssim images",
            expected: a.len(),
            got: b.len(),
        });
    }
    if window < 3 || window % 2 == 0 {
        return Err(Error::Config(format!(
            "ssim window must be odd and >= 3, got {window}"
        )));
    }
    if window > a.height() || window > a.width() {
        return Err(Error::Config(format!(
            "ssim window {window} exceeds image size {}x{}",
            a.height(),
            a.width()
        )));
    }

    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    let count = (window * window) as f64;

    let mut total = 0.0;
    let mut patches = 0usize;
    for top in 0..=a.height() - window {
        for left in 0..=a.width() - window {
            let mut sa = 0.0;
            let mut sb = 0.0;
            let mut saa = 0.0;
            let mut sbb = 0.0;
            let mut sab = 0.0;
            for i in top..top + window {
                for j in left..left + window {
                    let x = a.pixel(i, j);
                    let y = b.pixel(i, j);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let mu_a = sa / count;
            let mu_b = sb / count;
            let var_a = saa / count - mu_a * mu_a;
            let var_b = sbb / count - mu_b * mu_b;
            let cov = sab / count - mu_a * mu_b;
            let local = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += local;
            patches += 1;
        }
    }
    Ok(total / patches as f64)
}
