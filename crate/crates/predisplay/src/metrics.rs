//! Image-quality and depth-accuracy metrics.
//!
//! All metrics are pure `f64` functions. PSNR assumes a unit dynamic range
//! (images live in `[0, 1]`); MS-SSIM uses the standard five-scale weights
//! and an 11-tap Gaussian window. Depth metrics are evaluated over pixels
//! valid in *both* maps.

use thiserror::Error;

use crate::geometry::{DepthMap, ImageBuffer, PixelMask};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {got_width}x{got_height} vs expected {expected_width}x{expected_height}")]
    DimensionMismatch {
        expected_width: u32,
        expected_height: u32,
        got_width: u32,
        got_height: u32,
    },
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("no jointly valid depth pixels")]
    EmptyJointMask,
    #[error(
        "image {width}x{height} too small for 5-scale MS-SSIM; \
         both dimensions must be >= {min} px"
    )]
    TooSmall { width: u32, height: u32, min: u32 },
}

/// PSNR is reported as this cap instead of infinity for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Per-frame metric bundle; depth metrics are `None` for methods that do not
/// produce a depth prediction.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ms_ssim: f64,
    pub abs_rel: Option<f64>,
    pub delta1: Option<f64>,
    pub si_loss: Option<f64>,
    /// Pixels the image metrics were evaluated over.
    pub valid_pixel_count: usize,
}

fn check_dims(
    (ew, eh): (u32, u32),
    (gw, gh): (u32, u32),
) -> Result<(), MetricsError> {
    if (ew, eh) != (gw, gh) {
        return Err(MetricsError::DimensionMismatch {
            expected_width: ew,
            expected_height: eh,
            got_width: gw,
            got_height: gh,
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over the pixels where `mask` is true
/// (all pixels when `mask` is `None`). The three channels are averaged into
/// one MSE. Capped at [`PSNR_CAP_DB`].
pub fn psnr(
    pred: &ImageBuffer,
    truth: &ImageBuffer,
    mask: Option<&PixelMask>,
) -> Result<f64, MetricsError> {
    check_dims(
        (truth.width(), truth.height()),
        (pred.width(), pred.height()),
    )?;
    if let Some(m) = mask {
        check_dims((truth.width(), truth.height()), (m.width(), m.height()))?;
    }
    let mut se = 0.0f64;
    let mut count = 0usize;
    let pd = pred.data();
    let td = truth.data();
    for i in 0..pd.len() / 3 {
        if let Some(m) = mask {
            if !m.data()[i] {
                continue;
            }
        }
        for ch in 0..3 {
            let d = pd[i * 3 + ch] as f64 - td[i * 3 + ch] as f64;
            se += d * d;
        }
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::EmptyMask);
    }
    let mse = se / (count * 3) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
/// 5 dyadic scales with an 11-tap window need dim/16 >= 11.
const MS_SSIM_MIN_DIM: u32 = 176;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// One grayscale plane, f64, used by the MS-SSIM pyramid.
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_channel(img: &ImageBuffer, ch: usize) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = (0..w * h).map(|i| img.data()[i * 3 + ch] as f64).collect();
        Self { w, h, data }
    }

    /// Separable valid-region convolution with the Gaussian window: output
    /// shrinks by (window - 1) in each dimension, no padding invented.
    fn blur_valid(&self, win: &[f64; SSIM_WINDOW]) -> Plane {
        let ow = self.w - (SSIM_WINDOW - 1);
        let oh = self.h - (SSIM_WINDOW - 1);
        // Horizontal pass.
        let mut tmp = vec![0.0f64; ow * self.h];
        for row in 0..self.h {
            for col in 0..ow {
                let mut acc = 0.0;
                for (k, wk) in win.iter().enumerate() {
                    acc += wk * self.data[row * self.w + col + k];
                }
                tmp[row * ow + col] = acc;
            }
        }
        // Vertical pass.
        let mut out = vec![0.0f64; ow * oh];
        for row in 0..oh {
            for col in 0..ow {
                let mut acc = 0.0;
                for (k, wk) in win.iter().enumerate() {
                    acc += wk * tmp[(row + k) * ow + col];
                }
                out[row * ow + col] = acc;
            }
        }
        Plane {
            w: ow,
            h: oh,
            data: out,
        }
    }

    /// 2x2 average pooling; a dangling last row/column is dropped.
    fn downsample2(&self) -> Plane {
        let ow = self.w / 2;
        let oh = self.h / 2;
        let mut out = vec![0.0f64; ow * oh];
        for row in 0..oh {
            for col in 0..ow {
                let i = 2 * row * self.w + 2 * col;
                out[row * ow + col] =
                    0.25 * (self.data[i] + self.data[i + 1] + self.data[i + self.w] + self.data[i + self.w + 1]);
            }
        }
        Plane {
            w: ow,
            h: oh,
            data: out,
        }
    }

    fn map2(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }
}

/// Mean luminance and contrast-structure terms of SSIM at one scale.
fn ssim_terms(x: &Plane, y: &Plane, win: &[f64; SSIM_WINDOW]) -> (f64, f64) {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mu_x = x.blur_valid(win);
    let mu_y = y.blur_valid(win);
    let xx = x.map2(x, |a, b| a * b).blur_valid(win);
    let yy = y.map2(y, |a, b| a * b).blur_valid(win);
    let xy = x.map2(y, |a, b| a * b).blur_valid(win);
    let n = mu_x.data.len();
    let mut l_sum = 0.0;
    let mut cs_sum = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x.data[i], mu_y.data[i]);
        let sx = xx.data[i] - mx * mx;
        let sy = yy.data[i] - my * my;
        let sxy = xy.data[i] - mx * my;
        l_sum += (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        cs_sum += (2.0 * sxy + c2) / (sx + sy + c2);
    }
    (l_sum / n as f64, cs_sum / n as f64)
}

/// Five-scale MS-SSIM with Gaussian window sigma 1.5, standard scale weights
/// and stabilizers k1=0.01, k2=0.03 on unit dynamic range. Computed per RGB
/// channel and averaged. Anticorrelated contrast terms are clamped at zero
/// so the weighted geometric product stays defined.
pub fn ms_ssim(pred: &ImageBuffer, truth: &ImageBuffer) -> Result<f64, MetricsError> {
    check_dims(
        (truth.width(), truth.height()),
        (pred.width(), pred.height()),
    )?;
    if pred.width() < MS_SSIM_MIN_DIM || pred.height() < MS_SSIM_MIN_DIM {
        return Err(MetricsError::TooSmall {
            width: pred.width(),
            height: pred.height(),
            min: MS_SSIM_MIN_DIM,
        });
    }
    let win = gaussian_window();
    let mut channel_sum = 0.0;
    for ch in 0..3 {
        let mut x = Plane::from_channel(pred, ch);
        let mut y = Plane::from_channel(truth, ch);
        let mut value = 1.0f64;
        for (scale, weight) in MS_SSIM_WEIGHTS.iter().enumerate() {
            let (l, cs) = ssim_terms(&x, &y, &win);
            value *= cs.max(0.0).powf(*weight);
            if scale == MS_SSIM_WEIGHTS.len() - 1 {
                // Luminance enters only at the coarsest scale.
                value *= l.max(0.0).powf(*weight);
            } else {
                x = x.downsample2();
                y = y.downsample2();
            }
        }
        channel_sum += value;
    }
    Ok(channel_sum / 3.0)
}

/// Absolute relative depth error and the delta < 1.25 inlier ratio over
/// jointly valid pixels.
pub fn depth_metrics(pred: &DepthMap, truth: &DepthMap) -> Result<(f64, f64), MetricsError> {
    check_dims(
        (truth.width(), truth.height()),
        (pred.width(), pred.height()),
    )?;
    let mut rel_sum = 0.0f64;
    let mut inliers = 0usize;
    let mut count = 0usize;
    for (p, t) in pred.values().iter().zip(truth.values()) {
        if !(p.is_finite() && *p > 0.0 && t.is_finite() && *t > 0.0) {
            continue;
        }
        rel_sum += (p - t).abs() / t;
        let ratio = (p / t).max(t / p);
        if ratio < 1.25 {
            inliers += 1;
        }
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::EmptyJointMask);
    }
    Ok((rel_sum / count as f64, inliers as f64 / count as f64))
}

/// Exact pairwise (tree) summation. Besides the usual accuracy benefit, a
/// power-of-two count of identical values sums with *no* rounding at all,
/// which lets the scale-invariant loss cancel exactly for constant ratios.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Root scale-invariant log loss over jointly valid pixels:
/// `sqrt( mean(d²) − λ·mean(d)² )` with `d = log(pred/truth)`.
///
/// Evaluated in the algebraically equivalent two-pass form
/// `sqrt( mean((d − mean d)²) + (1−λ)·(mean d)² )`, which is numerically
/// stable and yields exactly zero when `pred` is a constant multiple of
/// `truth` and λ=1 (the log ratio is then bitwise constant). Pixels that are
/// invalid in either map (including any non-positive values, which the depth
/// type stores as invalid) are excluded.
pub fn si_loss(pred: &DepthMap, truth: &DepthMap, lambda: f64) -> Result<f64, MetricsError> {
    assert!((0.0..=1.0).contains(&lambda), "lambda must be in [0, 1]");
    check_dims(
        (truth.width(), truth.height()),
        (pred.width(), pred.height()),
    )?;
    let d_log: Vec<f64> = pred
        .values()
        .iter()
        .zip(truth.values())
        .filter(|(p, t)| p.is_finite() && **p > 0.0 && t.is_finite() && **t > 0.0)
        .map(|(p, t)| (p / t).ln())
        .collect();
    if d_log.is_empty() {
        return Err(MetricsError::EmptyJointMask);
    }
    let n = d_log.len() as f64;
    let mean = pairwise_sum(&d_log) / n;
    let centered: Vec<f64> = d_log.iter().map(|d| (d - mean) * (d - mean)).collect();
    let variance = pairwise_sum(&centered) / n;
    Ok((variance + (1.0 - lambda) * mean * mean).max(0.0).sqrt())
}

/// Default scale-invariant loss weighting (community convention).
pub const SI_LOSS_DEFAULT_LAMBDA: f64 = 0.85;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: u32, h: u32, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(w, h, |_, _| {
            [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()]
        })
    }

    fn random_depth(w: u32, h: u32, seed: u64) -> DepthMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = DepthMap::new_invalid(w, h);
        for row in 0..h {
            for col in 0..w {
                d.set(col, row, rng.random_range(0.2..20.0));
            }
        }
        d
    }

    #[test]
    fn psnr_identical_hits_cap() {
        let img = random_image(32, 24, 1);
        assert_eq!(psnr(&img, &img, None).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_uniform_error_closed_form() {
        let truth = ImageBuffer::filled(16, 16, [0.3, 0.3, 0.3]);
        let pred = ImageBuffer::filled(16, 16, [0.4, 0.4, 0.4]);
        let got = psnr(&pred, &truth, None).unwrap();
        assert!((got - 20.0).abs() < 1e-6, "{got}");
    }

    #[test]
    fn psnr_matches_brute_force_and_is_symmetric() {
        let a = random_image(41, 23, 2);
        let b = random_image(41, 23, 3);
        // Independent straightforward accumulation.
        let mut se = 0.0f64;
        for (x, y) in a.data().iter().zip(b.data()) {
            se += (*x as f64 - *y as f64).powi(2);
        }
        let mse = se / a.data().len() as f64;
        let expect = 10.0 * (1.0 / mse).log10();
        let got = psnr(&a, &b, None).unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
        assert_eq!(got, psnr(&b, &a, None).unwrap());
    }

    #[test]
    fn psnr_respects_mask() {
        let truth = ImageBuffer::filled(8, 8, [0.5, 0.5, 0.5]);
        let mut pred = truth.clone();
        pred.set(0, 0, [1.0, 1.0, 1.0]); // error only at a masked-out pixel
        let mask = PixelMask::from_fn(8, 8, |c, r| !(c == 0 && r == 0));
        assert_eq!(psnr(&pred, &truth, Some(&mask)).unwrap(), PSNR_CAP_DB);
        let empty = PixelMask::filled(8, 8, false);
        assert!(matches!(
            psnr(&pred, &truth, Some(&empty)),
            Err(MetricsError::EmptyMask)
        ));
    }

    #[test]
    fn ms_ssim_self_is_one() {
        let img = random_image(200, 200, 4);
        let got = ms_ssim(&img, &img).unwrap();
        assert!((got - 1.0).abs() < 1e-9, "{got}");
    }

    #[test]
    fn ms_ssim_inverted_scores_low() {
        let img = random_image(200, 200, 5);
        let inv = ImageBuffer::from_raw(
            200,
            200,
            img.data().iter().map(|v| 1.0 - v).collect(),
        );
        let got = ms_ssim(&inv, &img).unwrap();
        assert!(got < 0.5, "{got}");
    }

    #[test]
    fn ms_ssim_constant_pair_matches_hand_derived_luminance() {
        let a = ImageBuffer::filled(200, 200, [0.25, 0.25, 0.25]);
        let b = ImageBuffer::filled(200, 200, [0.75, 0.75, 0.75]);
        // Constant images: contrast-structure terms are exactly 1 at every
        // scale, so only the coarsest-scale luminance term remains.
        let c1 = SSIM_K1 * SSIM_K1;
        let (x, y) = (0.25f64, 0.75f64);
        let l = (2.0 * x * y + c1) / (x * x + y * y + c1);
        let expect = l.powf(MS_SSIM_WEIGHTS[4]);
        let got = ms_ssim(&a, &b).unwrap();
        assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn ms_ssim_too_small_is_rejected_with_minimum() {
        let img = random_image(160, 200, 6);
        let err = ms_ssim(&img, &img).unwrap_err();
        assert!(err.to_string().contains("176"), "{err}");
    }

    #[test]
    fn depth_metrics_trivial_ratios() {
        let truth = random_depth(32, 24, 7);
        assert_eq!(depth_metrics(&truth, &truth).unwrap(), (0.0, 1.0));

        let scale = |f: f64| {
            DepthMap::from_values(
                32,
                24,
                truth.values().iter().map(|v| v * f).collect(),
            )
        };
        let (abs_rel, d1) = depth_metrics(&scale(1.1), &truth).unwrap();
        assert!((abs_rel - 0.1).abs() < 1e-9, "{abs_rel}");
        assert_eq!(d1, 1.0);
        let (abs_rel, d1) = depth_metrics(&scale(1.3), &truth).unwrap();
        assert!((abs_rel - 0.3).abs() < 1e-9, "{abs_rel}");
        assert_eq!(d1, 0.0);
    }

    #[test]
    fn depth_metrics_ignore_jointly_invalid_pixels() {
        let truth = random_depth(16, 16, 8);
        let mut pred = truth.clone();
        let base = depth_metrics(&pred, &truth).unwrap();
        // Invalidate some pixels in pred only: they drop out of the joint set.
        pred.set_invalid(0, 0);
        pred.set_invalid(5, 9);
        let masked = depth_metrics(&pred, &truth).unwrap();
        assert_eq!(base, masked);
        // Empty joint set errors.
        let invalid = DepthMap::new_invalid(16, 16);
        assert!(matches!(
            depth_metrics(&invalid, &truth),
            Err(MetricsError::EmptyJointMask)
        ));
    }

    #[test]
    fn si_loss_constant_scale_cancels_exactly_at_lambda_one() {
        // Power-of-two pixel count and a power-of-two scale: the log ratio is
        // bitwise constant and pairwise summation introduces no rounding.
        let truth = random_depth(16, 16, 9);
        let pred = DepthMap::from_values(
            16,
            16,
            truth.values().iter().map(|v| v * 2.0).collect(),
        );
        assert_eq!(si_loss(&pred, &truth, 1.0).unwrap(), 0.0);
        assert_eq!(si_loss(&truth, &truth, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn si_loss_lambda_zero_is_rms_of_log_ratio() {
        let truth = random_depth(16, 16, 10);
        let pred = DepthMap::from_values(
            16,
            16,
            truth.values().iter().map(|v| v * 2.0).collect(),
        );
        let got = si_loss(&pred, &truth, 0.0).unwrap();
        assert!((got - 2.0f64.ln()).abs() < 1e-12, "{got}");
    }

    #[test]
    fn si_loss_matches_brute_force_and_decreases_in_lambda() {
        let truth = random_depth(24, 24, 11);
        let pred = random_depth(24, 24, 12);
        // Naive single-pass evaluation of the published formula.
        let mut s1 = 0.0f64;
        let mut s2 = 0.0f64;
        let mut n = 0.0f64;
        for (p, t) in pred.values().iter().zip(truth.values()) {
            let d = (p / t).ln();
            s1 += d;
            s2 += d * d;
            n += 1.0;
        }
        let lambda = 0.85;
        let expect = (s2 / n - lambda * (s1 / n).powi(2)).sqrt();
        let got = si_loss(&pred, &truth, lambda).unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");

        let mut prev = f64::INFINITY;
        for lambda in [0.0, 0.25, 0.5, 0.85, 1.0] {
            let v = si_loss(&pred, &truth, lambda).unwrap();
            assert!(v <= prev + 1e-15, "not non-increasing at {lambda}");
            prev = v;
        }
    }
}
