//! Image-quality metrics (PSNR, SSIM, NRMSE) in their direct global-
//! statistics form, per-slice reports with CSV output, and the paired
//! t-test used for significance marking.
//!
//! Metrics are computed on images rescaled to `[0, 1]`. PSNR takes its
//! `MAX` term from the real image; SSIM is the single-window whole-image
//! formula (a windowed variant exists behind [`ssim_windowed`] but is not
//! the default).

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Kahan-compensated sum; aggregation stays order-stable to rounding.
fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

fn check_same_shape(op: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.dim(), b.dim()),
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in decibels:
/// `10·log10(A·MAX² / Σ(Y−Y′)²)` with `A` the pixel count and `MAX` the
/// maximum intensity of the real image (algebraically `MAX²/MSE`).
/// Identical images return `+∞`; callers exclude the sentinel from
/// aggregates.
pub fn psnr(real: &Array2<f64>, synth: &Array2<f64>) -> Result<f64> {
    check_same_shape("psnr", real, synth)?;
    let a = real.len() as f64;
    let max = real.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sse = kahan_sum(
        real.iter()
            .zip(synth.iter())
            .map(|(&y, &yp)| (y - yp) * (y - yp)),
    );
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (a * max * max / sse).log10())
}

/// Structural similarity in its global-statistics form with population
/// variance/covariance and `C1 = (0.01·L)²`, `C2 = (0.03·L)²`.
pub fn ssim(real: &Array2<f64>, synth: &Array2<f64>, dynamic_range: f64) -> Result<f64> {
    check_same_shape("ssim", real, synth)?;
    Ok(ssim_global(
        real.as_slice().unwrap(),
        synth.as_slice().unwrap(),
        dynamic_range,
    ))
}

fn ssim_global(real: &[f64], synth: &[f64], l: f64) -> f64 {
    let n = real.len() as f64;
    let mu_y = kahan_sum(real.iter().cloned()) / n;
    let mu_p = kahan_sum(synth.iter().cloned()) / n;
    let var_y = kahan_sum(real.iter().map(|&v| (v - mu_y) * (v - mu_y))) / n;
    let var_p = kahan_sum(synth.iter().map(|&v| (v - mu_p) * (v - mu_p))) / n;
    let cov = kahan_sum(
        real.iter()
            .zip(synth.iter())
            .map(|(&y, &p)| (y - mu_y) * (p - mu_p)),
    ) / n;
    let c1 = (0.01 * l) * (0.01 * l);
    let c2 = (0.03 * l) * (0.03 * l);
    ((2.0 * mu_y * mu_p + c1) * (2.0 * cov + c2))
        / ((mu_y * mu_y + mu_p * mu_p + c1) * (var_y + var_p + c2))
}

/// Mean SSIM over sliding square windows. Not the default reporting mode;
/// kept for comparison against the global formula.
pub fn ssim_windowed(
    real: &Array2<f64>,
    synth: &Array2<f64>,
    dynamic_range: f64,
    window: usize,
) -> Result<f64> {
    check_same_shape("ssim_windowed", real, synth)?;
    let (h, w) = real.dim();
    if window == 0 || window > h || window > w {
        return Err(Error::Config(format!(
            "ssim window {window} invalid for {h}x{w} image"
        )));
    }
    let mut acc = Vec::with_capacity((h - window + 1) * (w - window + 1));
    for y0 in 0..=h - window {
        for x0 in 0..=w - window {
            let mut ry = Vec::with_capacity(window * window);
            let mut sy = Vec::with_capacity(window * window);
            for dy in 0..window {
                for dx in 0..window {
                    ry.push(real[[y0 + dy, x0 + dx]]);
                    sy.push(synth[[y0 + dy, x0 + dx]]);
                }
            }
            acc.push(ssim_global(&ry, &sy, dynamic_range));
        }
    }
    Ok(kahan_sum(acc.iter().cloned()) / acc.len() as f64)
}

/// Normalized root-mean-square error: `sqrt(Σ(Ŷ−Y)² / ΣY²)`.
/// Undefined (error) for an all-zero real image.
pub fn nrmse(real: &Array2<f64>, synth: &Array2<f64>) -> Result<f64> {
    check_same_shape("nrmse", real, synth)?;
    let denom = kahan_sum(real.iter().map(|&v| v * v));
    if denom == 0.0 {
        return Err(Error::Degenerate {
            op: "nrmse",
            detail: "real image is all zeros; normalizer undefined".into(),
        });
    }
    let num = kahan_sum(
        real.iter()
            .zip(synth.iter())
            .map(|(&y, &yp)| (yp - y) * (yp - y)),
    );
    Ok((num / denom).sqrt())
}

/// Two-tailed paired t-test on `a − b`.
///
/// Degenerate conventions: all-zero differences give `(0, 1)`; zero
/// variance with a nonzero mean difference gives `(±∞, 0)`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "paired_t_test",
            format!("{} vs {} samples", a.len(), b.len()),
        ));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Degenerate {
            op: "paired_t_test",
            detail: format!("needs at least 2 pairs, got {n}"),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b.iter()).map(|(&x, &y)| x - y).collect();
    let mean = kahan_sum(diffs.iter().cloned()) / n as f64;
    let ss = kahan_sum(diffs.iter().map(|&d| (d - mean) * (d - mean)));
    let sd = (ss / (n as f64 - 1.0)).sqrt();
    if sd == 0.0 {
        if mean == 0.0 {
            return Ok((0.0, 1.0));
        }
        return Ok((mean.signum() * f64::INFINITY, 0.0));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::Config(format!("t-distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p.clamp(0.0, 1.0)))
}

/// Metric values for one evaluated slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceMetrics {
    pub subject_id: String,
    pub slice_index: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub nrmse: f64,
}

/// Mean and sample standard deviation of one metric column, with the
/// number of non-finite values excluded from the aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    pub excluded: usize,
}

fn column_stats(values: impl Iterator<Item = f64>) -> ColumnStats {
    let (finite, excluded): (Vec<f64>, Vec<f64>) = values.partition(|v| v.is_finite());
    let n = finite.len();
    if n == 0 {
        return ColumnStats {
            mean: f64::NAN,
            std: f64::NAN,
            excluded: excluded.len(),
        };
    }
    let mean = kahan_sum(finite.iter().cloned()) / n as f64;
    let std = if n > 1 {
        (kahan_sum(finite.iter().map(|&v| (v - mean) * (v - mean))) / (n as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    ColumnStats {
        mean,
        std,
        excluded: excluded.len(),
    }
}

/// Per-slice metric lists plus recomputable aggregates.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub slices: Vec<SliceMetrics>,
}

impl MetricReport {
    pub fn new(slices: Vec<SliceMetrics>) -> Self {
        Self { slices }
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn psnr_stats(&self) -> ColumnStats {
        let stats = column_stats(self.slices.iter().map(|s| s.psnr));
        if stats.excluded > 0 {
            eprintln!(
                "warning: {} slice(s) with infinite PSNR excluded from aggregates",
                stats.excluded
            );
        }
        stats
    }

    pub fn ssim_stats(&self) -> ColumnStats {
        column_stats(self.slices.iter().map(|s| s.ssim))
    }

    pub fn nrmse_stats(&self) -> ColumnStats {
        column_stats(self.slices.iter().map(|s| s.nrmse))
    }

    /// CSV with fixed column order and an aggregate footer row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject_id,slice_index,psnr,ssim,nrmse\n");
        for s in &self.slices {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6}",
                s.subject_id, s.slice_index, s.psnr, s.ssim, s.nrmse
            )
            .unwrap();
        }
        let p = self.psnr_stats();
        let s = self.ssim_stats();
        let n = self.nrmse_stats();
        writeln!(
            out,
            "aggregate,mean±std,{:.4} ± {:.4},{:.4} ± {:.4},{:.4} ± {:.4}",
            p.mean, p.std, s.mean, s.std, n.mean, n.std
        )
        .unwrap();
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Evaluate all three metrics for one real/synthesized pair in `[0, 1]`.
pub fn evaluate_pair(real: &Array2<f64>, synth: &Array2<f64>) -> Result<(f64, f64, f64)> {
    Ok((
        psnr(real, synth)?,
        ssim(real, synth, 1.0)?,
        nrmse(real, synth)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psnr_hand_cases() {
        let real = array![[0.0, 1.0]];
        let synth = array![[0.0, 0.0]];
        assert!((psnr(&real, &synth).unwrap() - 3.010299956639812).abs() < 1e-12);

        let real = Array2::from_elem((2, 2), 0.5);
        let synth = Array2::from_elem((2, 2), 0.25);
        assert!((psnr(&real, &synth).unwrap() - 6.020599913279624).abs() < 1e-12);
    }

    #[test]
    fn psnr_identical_images_give_infinity_sentinel() {
        let real = array![[0.1, 0.9], [0.3, 0.7]];
        assert!(psnr(&real, &real.clone()).unwrap().is_infinite());
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let real = Array2::from_elem((4, 4), 1.0);
        let near = Array2::from_elem((4, 4), 0.9);
        let far = Array2::from_elem((4, 4), 0.5);
        assert!(psnr(&real, &near).unwrap() > psnr(&real, &far).unwrap());
    }

    #[test]
    fn ssim_hand_case() {
        let real = array![[0.0, 1.0]];
        let synth = array![[1.0, 0.0]];
        let got = ssim(&real, &synth, 1.0).unwrap();
        assert!((got - (-0.9964064683569573)).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn ssim_identical_nonconstant_is_one() {
        let x = array![[0.1, 0.4], [0.8, 0.2]];
        assert!((ssim(&x, &x.clone(), 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_equal_constants_is_one() {
        let a = Array2::from_elem((3, 3), 0.42);
        assert!((ssim(&a, &a.clone(), 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Array2::from_shape_fn((5, 5), |_| rng.random_range(0.0..1.0));
        let b = Array2::from_shape_fn((5, 5), |_| rng.random_range(0.0..1.0));
        assert_eq!(ssim(&a, &b, 1.0).unwrap(), ssim(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn nrmse_hand_cases() {
        let real = array![[3.0, 4.0]];
        let synth = array![[3.0, 0.0]];
        assert!((nrmse(&real, &synth).unwrap() - 0.8).abs() < 1e-12);

        assert_eq!(nrmse(&real, &real.clone()).unwrap(), 0.0);

        let zeros = Array2::zeros((1, 2));
        assert!((nrmse(&real, &zeros).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nrmse_all_zero_real_rejected() {
        let real = Array2::<f64>::zeros((2, 2));
        let synth = Array2::from_elem((2, 2), 0.5);
        assert!(nrmse(&real, &synth).is_err());
    }

    #[test]
    fn t_test_equal_lists_give_p_one() {
        let a = [1.0, 2.0, 3.0];
        let (t, p) = paired_t_test(&a, &a).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn t_test_constant_nonzero_difference_gives_p_zero() {
        let a = [2.0, 3.0, 4.0, 5.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let (t, p) = paired_t_test(&a, &b).unwrap();
        assert!(t.is_infinite() && t > 0.0);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn t_test_matches_reference_oracle() {
        // diffs {0.5, 0.7, 0.3, 0.6, 0.4} against zero
        let a = [0.5, 0.7, 0.3, 0.6, 0.4];
        let b = [0.0; 5];
        let (t, p) = paired_t_test(&a, &b).unwrap();
        assert!((t - 7.0710678118654755).abs() < 1e-9, "t={t}");
        assert!((p - 0.0021106458450912712).abs() < 1e-9, "p={p}");
    }

    #[test]
    fn t_test_rejects_bad_inputs() {
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let report = MetricReport::new(vec![
            SliceMetrics {
                subject_id: "s01".into(),
                slice_index: 0,
                psnr: 24.0,
                ssim: 0.9,
                nrmse: 0.2,
            },
            SliceMetrics {
                subject_id: "s01".into(),
                slice_index: 1,
                psnr: 26.0,
                ssim: 0.8,
                nrmse: 0.3,
            },
        ]);
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "subject_id,slice_index,psnr,ssim,nrmse");
        assert!(lines.next().unwrap().starts_with("s01,0,24.0"));
        assert!(lines.next().unwrap().starts_with("s01,1,26.0"));
        let footer = lines.next().unwrap();
        assert!(footer.starts_with("aggregate,mean±std,25.0000 ± 1.4142,"), "{footer}");
    }

    #[test]
    fn aggregates_exclude_infinite_psnr() {
        let report = MetricReport::new(vec![
            SliceMetrics {
                subject_id: "a".into(),
                slice_index: 0,
                psnr: f64::INFINITY,
                ssim: 1.0,
                nrmse: 0.0,
            },
            SliceMetrics {
                subject_id: "a".into(),
                slice_index: 1,
                psnr: 30.0,
                ssim: 0.9,
                nrmse: 0.1,
            },
        ]);
        let stats = report.psnr_stats();
        assert_eq!(stats.excluded, 1);
        assert_eq!(stats.mean, 30.0);
    }

    proptest! {
        #[test]
        fn ssim_self_similarity_is_one(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((6, 6), |_| rng.random_range(0.0..1.0));
            let v = ssim(&x, &x.clone(), 1.0).unwrap();
            prop_assert!((v - 1.0).abs() < 1e-12);
        }

        #[test]
        fn nrmse_against_zero_prediction_is_one(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((4, 4), |_| rng.random_range(0.1..1.0));
            let zeros = Array2::zeros((4, 4));
            prop_assert!((nrmse(&x, &zeros).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
