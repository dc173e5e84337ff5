//! Evaluation metrics comparing an observed and a predicted system state:
//! windowed structural similarity, histogram correlation, and mean-absolute-
//! error accuracy.

use crate::error::{Error, Result};
use crate::grid::{Field2D, GridState};

/// Per-comparison scores, pooled over species and broken out per species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub ssim: f64,
    pub hist: f64,
    pub mae_accuracy: f64,
    pub ssim_u: f64,
    pub ssim_v: f64,
    pub hist_u: f64,
    pub hist_v: f64,
    pub mae_accuracy_u: f64,
    pub mae_accuracy_v: f64,
}

/// Default histogram bin count for state comparisons.
pub const DEFAULT_HIST_BINS: usize = 64;

const SSIM_WINDOW: usize = 7;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (idx, item) in k.iter_mut().enumerate() {
        let d = idx as isize - half;
        *item = (-((d * d) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *item;
    }
    for item in &mut k {
        *item /= sum;
    }
    k
}

/// Structural similarity between two fields: mean over Gaussian-weighted
/// 7x7 windows (sigma 1.5) with periodic padding, constants
/// `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2` for the given dynamic range `L`.
pub fn ssim(x: &Field2D, y: &Field2D, dynamic_range: f64) -> Result<f64> {
    if x.n_rows() != y.n_rows() || x.n_cols() != y.n_cols() {
        return Err(Error::domain(format!(
            "ssim: dimension mismatch {}x{} vs {}x{}",
            x.n_rows(),
            x.n_cols(),
            y.n_rows(),
            y.n_cols()
        )));
    }
    if dynamic_range < 0.0 || !dynamic_range.is_finite() {
        return Err(Error::domain(format!("ssim: bad dynamic range {dynamic_range}")));
    }
    if dynamic_range == 0.0 {
        // Zero range means both fields are one identical constant.
        return Ok(1.0);
    }
    let c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    let c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    let kernel = gaussian_kernel();
    let half = (SSIM_WINDOW / 2) as isize;
    let (nr, nc) = (x.n_rows(), x.n_cols());

    // Separable Gaussian filtering with periodic wrap: rows then columns.
    let blur = |f: &[f64]| -> Vec<f64> {
        let mut tmp = vec![0.0; f.len()];
        for i in 0..nr {
            for j in 0..nc {
                let mut acc = 0.0;
                for (t, &w) in kernel.iter().enumerate() {
                    let jj = (j as isize + t as isize - half).rem_euclid(nc as isize) as usize;
                    acc += w * f[i * nc + jj];
                }
                tmp[i * nc + j] = acc;
            }
        }
        let mut out = vec![0.0; f.len()];
        for i in 0..nr {
            for j in 0..nc {
                let mut acc = 0.0;
                for (t, &w) in kernel.iter().enumerate() {
                    let ii = (i as isize + t as isize - half).rem_euclid(nr as isize) as usize;
                    acc += w * tmp[ii * nc + j];
                }
                out[i * nc + j] = acc;
            }
        }
        out
    };

    let xv = x.values();
    let yv = y.values();
    let xx: Vec<f64> = xv.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = yv.iter().map(|a| a * a).collect();
    let xy: Vec<f64> = xv.iter().zip(yv).map(|(a, b)| a * b).collect();

    let mu_x = blur(xv);
    let mu_y = blur(yv);
    let m_xx = blur(&xx);
    let m_yy = blur(&yy);
    let m_xy = blur(&xy);

    let mut total = 0.0;
    for k in 0..xv.len() {
        let var_x = m_xx[k] - mu_x[k] * mu_x[k];
        let var_y = m_yy[k] - mu_y[k] * mu_y[k];
        let cov = m_xy[k] - mu_x[k] * mu_y[k];
        let num = (2.0 * mu_x[k] * mu_y[k] + c1) * (2.0 * cov + c2);
        let den = (mu_x[k] * mu_x[k] + mu_y[k] * mu_y[k] + c1) * (var_x + var_y + c2);
        total += num / den;
    }
    Ok(total / xv.len() as f64)
}

/// Equal-width histogram of `bins` counts over `[lo, hi]`; the top edge is
/// inclusive, values outside the range are clamped into the edge bins.
pub fn histogram(f: &Field2D, bins: usize, lo: f64, hi: f64) -> Result<Vec<u64>> {
    if bins < 2 {
        return Err(Error::domain("histogram: need at least 2 bins"));
    }
    if lo >= hi {
        return Err(Error::domain(format!("histogram: need lo < hi, got [{lo}, {hi}]")));
    }
    let mut counts = vec![0u64; bins];
    let scale = bins as f64 / (hi - lo);
    for &v in f.values() {
        let b = (((v - lo) * scale).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    Ok(counts)
}

/// Pearson-style correlation of two histograms' bin counts.
/// Both-degenerate inputs (zero count variance) compare as 1 when the
/// histograms are identical and 0 otherwise; `flagged` reports that case.
pub struct HistAccuracy {
    pub value: f64,
    pub flagged: bool,
}

pub fn hist_correlation(h1: &[u64], h2: &[u64]) -> Result<HistAccuracy> {
    if h1.len() != h2.len() || h1.is_empty() {
        return Err(Error::domain("hist_correlation: length mismatch"));
    }
    let n = h1.len() as f64;
    let mean1 = h1.iter().sum::<u64>() as f64 / n;
    let mean2 = h2.iter().sum::<u64>() as f64 / n;
    let mut num = 0.0;
    let mut den1 = 0.0;
    let mut den2 = 0.0;
    for (&a, &b) in h1.iter().zip(h2) {
        let d1 = a as f64 - mean1;
        let d2 = b as f64 - mean2;
        num += d1 * d2;
        den1 += d1 * d1;
        den2 += d2 * d2;
    }
    if den1 == 0.0 || den2 == 0.0 {
        return Ok(HistAccuracy { value: if h1 == h2 { 1.0 } else { 0.0 }, flagged: true });
    }
    Ok(HistAccuracy { value: num / (den1 * den2).sqrt(), flagged: false })
}

/// Histogram-based accuracy of two fields over a shared binning range.
pub fn hist_accuracy(
    x: &Field2D,
    y: &Field2D,
    bins: usize,
    range: (f64, f64),
) -> Result<f64> {
    let h1 = histogram(x, bins, range.0, range.1)?;
    let h2 = histogram(y, bins, range.0, range.1)?;
    Ok(hist_correlation(&h1, &h2)?.value)
}

/// `1 - MAE` pooled over all cells and both species.
pub fn mae_accuracy(x: &GridState, y: &GridState) -> Result<f64> {
    if x.n_rows() != y.n_rows() || x.n_cols() != y.n_cols() {
        return Err(Error::domain("mae_accuracy: dimension mismatch"));
    }
    Ok(1.0 - mae(x, y))
}

fn mae_field(x: &Field2D, y: &Field2D) -> f64 {
    x.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).sum::<f64>()
        / x.len() as f64
}

fn mae(x: &GridState, y: &GridState) -> f64 {
    let sum_u: f64 =
        x.u.values().iter().zip(y.u.values()).map(|(a, b)| (a - b).abs()).sum();
    let sum_v: f64 =
        x.v.values().iter().zip(y.v.values()).map(|(a, b)| (a - b).abs()).sum();
    (sum_u + sum_v) / (2 * x.n_cells()) as f64
}

fn union_range(x: &Field2D, y: &Field2D) -> (f64, f64) {
    (x.min().min(y.min()), x.max().max(y.max()))
}

/// Full comparison of two states: per-species SSIM / histogram correlation /
/// MAE accuracy plus pooled values. Dynamic range and histogram range are the
/// min-max over the union of the compared fields, per species.
pub fn compare_states(observed: &GridState, predicted: &GridState) -> Result<MetricReport> {
    if observed.n_rows() != predicted.n_rows() || observed.n_cols() != predicted.n_cols() {
        return Err(Error::domain("compare_states: dimension mismatch"));
    }
    let per_species = |x: &Field2D, y: &Field2D| -> Result<(f64, f64, f64)> {
        let (lo, hi) = union_range(x, y);
        let s = ssim(x, y, hi - lo)?;
        let h = if hi > lo {
            hist_accuracy(x, y, DEFAULT_HIST_BINS, (lo, hi))?
        } else {
            1.0 // both fields are the same constant
        };
        Ok((s, h, 1.0 - mae_field(x, y)))
    };
    let (ssim_u, hist_u, mae_u) = per_species(&observed.u, &predicted.u)?;
    let (ssim_v, hist_v, mae_v) = per_species(&observed.v, &predicted.v)?;
    Ok(MetricReport {
        ssim: 0.5 * (ssim_u + ssim_v),
        hist: 0.5 * (hist_u + hist_v),
        mae_accuracy: mae_accuracy(observed, predicted)?,
        ssim_u,
        ssim_v,
        hist_u,
        hist_v,
        mae_accuracy_u: mae_u,
        mae_accuracy_v: mae_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::random_init;
    use approx::assert_abs_diff_eq;

    fn pattern(n: usize, seed: u64) -> Field2D {
        let s = random_init(seed, n, -1.0, 1.0).unwrap();
        s.u
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let x = pattern(16, 3);
        assert_eq!(ssim(&x, &x, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn ssim_is_symmetric() {
        let x = pattern(12, 1);
        let y = pattern(12, 2);
        let a = ssim(&x, &y, 2.0).unwrap();
        let b = ssim(&y, &x, 2.0).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn ssim_constant_fields_match_closed_form() {
        // Two constant fields c and c + L/2: variances vanish, so every
        // window evaluates to the closed-form luminance term.
        let c = 0.3;
        let l = 1.0;
        let x = Field2D::constant(10, 10, c);
        let y = Field2D::constant(10, 10, c + l / 2.0);
        let c1 = (0.01 * l) * (0.01 * l);
        let expected = (2.0 * c * (c + l / 2.0) + c1)
            / (c * c + (c + l / 2.0) * (c + l / 2.0) + c1);
        let got = ssim(&x, &y, l).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-9);
    }

    #[test]
    fn ssim_stays_in_range_and_rejects_mismatch() {
        let x = pattern(10, 5);
        let y = pattern(10, 6);
        let s = ssim(&x, &y, 2.0).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        assert!(ssim(&x, &pattern(11, 6), 2.0).is_err());
    }

    #[test]
    fn hist_identity_and_permutation_invariance() {
        let x = pattern(12, 9);
        assert_eq!(hist_accuracy(&x, &x, 16, (-1.0, 1.0)).unwrap(), 1.0);

        // A spatially shuffled copy has the same histogram.
        let mut shuffled = x.values().to_vec();
        shuffled.reverse();
        shuffled.swap(0, 71);
        let y = Field2D::from_values(12, 12, shuffled).unwrap();
        assert_eq!(hist_accuracy(&x, &y, 16, (-1.0, 1.0)).unwrap(), 1.0);
    }

    #[test]
    fn hist_hand_computed_case() {
        // counts (4,0,0,0) vs (0,0,0,4) -> correlation -1/3
        let x = Field2D::from_values(2, 2, vec![0.0, 0.01, 0.02, 0.03]).unwrap();
        let y = Field2D::from_values(2, 2, vec![0.9, 0.91, 0.92, 0.93]).unwrap();
        let r = hist_accuracy(&x, &y, 4, (0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(r, -1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn hist_degenerate_inputs_are_flagged() {
        let flat = vec![5u64, 5, 5, 5];
        let other = vec![5u64, 5, 5, 5];
        let r = hist_correlation(&flat, &other).unwrap();
        assert!(r.flagged);
        assert_eq!(r.value, 1.0);
        let different = vec![4u64, 6, 5, 5];
        let r = hist_correlation(&flat, &different).unwrap();
        assert!(r.flagged);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn mae_accuracy_cases() {
        let n = 8;
        let zeros = GridState::new(Field2D::zeros(n, n), Field2D::zeros(n, n), 0.0).unwrap();
        let ones = GridState::new(
            Field2D::constant(n, n, 1.0),
            Field2D::constant(n, n, 1.0),
            0.0,
        )
        .unwrap();
        assert_eq!(mae_accuracy(&zeros, &zeros).unwrap(), 1.0);
        assert_eq!(mae_accuracy(&zeros, &ones).unwrap(), 0.0);
    }

    #[test]
    fn mae_accuracy_decreases_with_perturbation() {
        let n = 8;
        let base = random_init(2, n, 0.0, 1.0).unwrap();
        let mut prev = 1.0;
        for amp in [0.05, 0.1, 0.2, 0.4] {
            let mut shifted = base.clone();
            for x in shifted.u.values_mut() {
                *x += amp;
            }
            for x in shifted.v.values_mut() {
                *x += amp;
            }
            let acc = mae_accuracy(&base, &shifted).unwrap();
            assert!(acc < prev, "acc {acc} should drop below {prev} at amp {amp}");
            prev = acc;
        }
    }

    #[test]
    fn compare_states_identity_is_all_ones() {
        let s = random_init(4, 10, 0.0, 1.0).unwrap();
        let r = compare_states(&s, &s).unwrap();
        assert_eq!(r.mae_accuracy, 1.0);
        assert_eq!(r.ssim, 1.0);
        assert_eq!(r.hist, 1.0);
        assert_eq!(r.ssim_u, 1.0);
        assert_eq!(r.hist_v, 1.0);
    }
}
