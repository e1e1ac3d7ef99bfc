//! Small statistical toolkit: moment summaries, Kolmogorov-Smirnov tests,
//! normal tail probabilities and a Poisson goodness-of-fit test.

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{invalid, Result};

/// Mean and standard error of a sample, accumulated in index order.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    (mean, sd / (n as f64).sqrt())
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Two-sided p-value of a standard normal statistic.
pub fn two_sided_normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    (2.0 * Normal::standard().sf(z.abs())).min(1.0)
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if (k as i64) % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS distance against a distribution with CDF `cdf` and left
/// limit `cdf_left` (equal to `cdf` where the distribution has no atom).
pub fn ks_one_sample_with_atoms(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64,
    cdf_left: impl Fn(f64) -> f64,
) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(invalid("KS test needs at least one sample"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(invalid("KS sample contains NaN"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let v = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == v {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        d = d.max((upto - cdf(v)).abs()).max((cdf_left(v) - below).abs());
        i = j;
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, n),
        n: xs.len(),
    })
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    ks_one_sample_with_atoms(samples, &cdf, &cdf)
}

/// Two-sample KS test; ties are handled by stepping over equal values together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("two-sample KS test needs nonempty samples"));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, na * nb / (na + nb)),
        n: xa.len() + xb.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of nonnegative integer counts to Poisson(`mean`).
/// Cells are merged from the tails until each expects at least 5 observations.
pub fn poisson_chi_square(counts: &[u64], mean: f64) -> Result<ChiSquareResult> {
    if counts.is_empty() || !(mean > 0.0) {
        return Err(invalid("chi-square test needs counts and a positive mean"));
    }
    let n = counts.len() as f64;
    let kmax = *counts.iter().max().unwrap() as usize;
    let mut observed = vec![0.0; kmax + 1];
    for &c in counts {
        observed[c as usize] += 1.0;
    }
    let mut pmf = Vec::with_capacity(kmax + 1);
    let mut p = (-mean).exp();
    for k in 0..=kmax {
        pmf.push(p);
        p *= mean / (k + 1) as f64;
    }
    // cells: [lo, hi] inclusive, last one open to infinity
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for k in 0..=kmax {
        acc_o += observed[k];
        acc_e += pmf[k] * n;
        if acc_e >= 5.0 {
            cells.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    let tail_e = n * (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    acc_e += tail_e;
    if let Some(last) = cells.last_mut() {
        last.0 += acc_o;
        last.1 += acc_e;
    } else {
        cells.push((acc_o, acc_e));
    }
    if cells.len() < 2 {
        return Err(invalid("too few cells for a chi-square test"));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Permutation test of association between `x` and `y` using |Pearson correlation|.
/// Returns `(observed statistic, p-value)` with the usual +1 correction.
pub fn permutation_correlation_test<R: Rng>(
    x: &[f64],
    y: &[f64],
    permutations: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(invalid("permutation test needs two equal-length samples of size >= 3"));
    }
    let observed = abs_correlation(x, y);
    let mut shuffled = y.to_vec();
    let mut exceed = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(rng);
        if abs_correlation(x, &shuffled) >= observed - 1e-12 {
            exceed += 1;
        }
    }
    Ok((observed, (exceed + 1) as f64 / (permutations + 1) as f64))
}

/// |Pearson correlation|; 0 when either sample is constant.
pub fn abs_correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(mean_and_se(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn kolmogorov_tail_values() {
        // standard table values
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_sf(1.63) - 0.0098).abs() < 5e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_uniform_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.statistic - 0.0005).abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn ks_with_atom_at_zero() {
        // half the mass at 0, the rest uniform on (1, 2)
        let mut xs = vec![0.0; 500];
        xs.extend((0..500).map(|i| 1.0 + (i as f64 + 0.5) / 500.0));
        let cdf = |x: f64| {
            if x < 0.0 {
                0.0
            } else if x < 1.0 {
                0.5
            } else {
                0.5 + 0.5 * (x - 1.0).min(1.0)
            }
        };
        let left = |x: f64| if x <= 0.0 { 0.0 } else { cdf(x) };
        let r = ks_one_sample_with_atoms(&xs, cdf, left).unwrap();
        assert!(r.statistic < 1e-3);
    }

    #[test]
    fn ks_two_sample_shift_detected() {
        let a: Vec<f64> = (0..400).map(|i| i as f64 / 400.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!((r.statistic - 0.2).abs() < 1e-2);
        assert!(r.p_value < 1e-5);
        let same = ks_two_sample(&a, &a).unwrap();
        assert_eq!(same.statistic, 0.0);
    }

    #[test]
    fn chi_square_on_exact_frequencies() {
        let mean: f64 = 2.0;
        let mut counts = Vec::new();
        let n = 10_000.0;
        let mut p = (-mean).exp();
        for k in 0..12u64 {
            let m = (p * n).round() as usize;
            counts.extend(std::iter::repeat_n(k, m));
            p *= mean / (k + 1) as f64;
        }
        let r = poisson_chi_square(&counts, mean).unwrap();
        assert!(r.p_value > 0.9, "{r:?}");
        let r_bad = poisson_chi_square(&counts, 2.5).unwrap();
        assert!(r_bad.p_value < 1e-6);
    }

    #[test]
    fn permutation_test_detects_and_ignores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 2.0 + 1.0).collect();
        let (_, p) = permutation_correlation_test(&x, &y, 199, &mut rng).unwrap();
        assert!(p <= 0.01);
        let constant = vec![1.0; 200];
        let (stat, p) = permutation_correlation_test(&x, &constant, 99, &mut rng).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }
}
