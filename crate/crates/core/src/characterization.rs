//! Statistical checks of the structural results: strict stability, the
//! Fréchet-mixture maxmod law, regular variation of the max-law tail and
//! scale-unique support of the scaled Laplace functional.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functionals::{self, EstimateWithError, FrechetMixture};
use crate::point_measure::TestFunction;
use crate::rng::SeedSpec;
use crate::sampler::{self, Carrier, ProcessSpec, ScaleLaw};
use crate::stats;

/// One hypothesis check inside a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCheck {
    pub name: String,
    pub null_hypothesis: String,
    pub statistic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// Rejection threshold: a p-value level, or a bound on the statistic.
    pub threshold: f64,
    pub passed: bool,
}

/// Per-function outcome of the template fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub f_id: String,
    /// `c` in `g(y c)`; 0 for the zero function.
    pub fitted_c: f64,
    pub residual_sup: f64,
    pub pooled_std_error: f64,
    pub estimates: Vec<EstimateWithError>,
    pub trivial: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test_name: String,
    pub passed: bool,
    pub n_reps: u64,
    pub master_seed: u64,
    /// Inputs and tolerances of the run.
    pub parameters: serde_json::Value,
    pub checks: Vec<SubCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<FitResult>,
}

impl TestReport {
    pub fn from_checks(
        test_name: &str,
        n_reps: u64,
        master_seed: u64,
        parameters: serde_json::Value,
        checks: Vec<SubCheck>,
    ) -> Self {
        Self {
            test_name: test_name.into(),
            passed: checks.iter().all(|c| c.passed),
            n_reps,
            master_seed,
            parameters,
            checks,
            fits: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIndexEstimate {
    pub alpha_hat: f64,
    pub k: usize,
    /// Half-width of the asymptotic 95% interval, `1.96 alpha_hat / sqrt(k)`.
    pub ci_half_width: f64,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("level must be in (0, 1), got {level}")));
    }
    Ok(())
}

fn scale_params(spec: &ProcessSpec) -> Result<(f64, f64)> {
    if spec.carrier() != Carrier::Scale {
        return Err(Error::Unsupported("this test needs a scale family".into()));
    }
    let alpha = spec
        .index()
        .ok_or_else(|| Error::Unsupported("this test needs a single-family spec".into()))?;
    Ok((alpha, spec.window().expect("scale family")))
}

fn check_battery_window(battery: &[(TestFunction, f64)], window: f64) -> Result<Vec<TestFunction>> {
    battery
        .iter()
        .map(|(f, y)| {
            let g = f.scale_fn(1.0 / y)?;
            if let Some((inner, _)) = g.support_bounds() {
                if inner < window {
                    return Err(Error::WindowViolation {
                        what: format!("support of f(./{y}) starts at {inner}"),
                        required: inner,
                        actual: window,
                    });
                }
            }
            Ok(g)
        })
        .collect()
}

/// `S_{b1} N_1 + S_{b2} N_2` against `S_b N`, `b = (b1^alpha + b2^alpha)^(1/alpha)`.
pub fn stability_test(
    spec: &ProcessSpec,
    b1: f64,
    b2: f64,
    battery: &[(TestFunction, f64)],
    n_reps: u64,
    level: f64,
    master_seed: u64,
) -> Result<TestReport> {
    stability_test_scaled_rhs(spec, b1, b2, 1.0, battery, n_reps, level, master_seed)
}

/// As [`stability_test`] with the right-hand scale multiplied by `rhs_factor`
/// (1 for the true identity; other values give negative controls).
#[allow(clippy::too_many_arguments)]
pub fn stability_test_scaled_rhs(
    spec: &ProcessSpec,
    b1: f64,
    b2: f64,
    rhs_factor: f64,
    battery: &[(TestFunction, f64)],
    n_reps: u64,
    level: f64,
    master_seed: u64,
) -> Result<TestReport> {
    check_level(level)?;
    spec.validate()?;
    if n_reps < 2 {
        return Err(invalid("at least two replicas are needed"));
    }
    for (b, name) in [(b1, "b1"), (b2, "b2"), (rhs_factor, "rhs_factor")] {
        if !(b.is_finite() && b > 0.0) {
            return Err(invalid(format!("{name} must be positive, got {b}")));
        }
    }
    let (alpha, eps) = scale_params(spec)?;
    let b = (b1.powf(alpha) + b2.powf(alpha)).powf(1.0 / alpha) * rhs_factor;
    let fns = check_battery_window(battery, eps)?;
    let (s1, s2) = (spec.with_window(eps / b1), spec.with_window(eps / b2));
    let rhs_spec = spec.with_window(eps / b);
    let seeds = SeedSpec::new(master_seed, 0);
    let (m1, m2, m3) = (
        seeds.derive(1).master_seed,
        seeds.derive(2).master_seed,
        seeds.derive(3).master_seed,
    );

    // per replica: battery values then maxmod, for each side
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let n1 = sampler::sample_process(&s1, SeedSpec::new(m1, i))?.scale(b1)?;
            let n2 = sampler::sample_process(&s2, SeedSpec::new(m2, i))?.scale(b2)?;
            let lhs = n1.superpose(&n2);
            let rhs = sampler::sample_process(&rhs_spec, SeedSpec::new(m3, i))?.scale(b)?;
            let row = |m: &crate::point_measure::PointMeasure| {
                let mut v: Vec<f64> = fns.iter().map(|g| (-m.integrate(g)).exp()).collect();
                v.push(m.maxmod());
                v
            };
            Ok((row(&lhs), row(&rhs)))
        })
        .collect::<Result<_>>()?;

    let k = fns.len();
    let corrected = level / (k + 1) as f64;
    let mut checks = Vec::with_capacity(k + 1);
    let col = |side: usize, j: usize| -> Vec<f64> {
        rows.iter()
            .map(|r| if side == 0 { r.0[j] } else { r.1[j] })
            .collect()
    };
    for (j, (_, y)) in battery.iter().enumerate() {
        let l = EstimateWithError::from_samples(&col(0, j));
        let r = EstimateWithError::from_samples(&col(1, j));
        let se = (l.std_error.powi(2) + r.std_error.powi(2)).sqrt();
        let z = if se > 0.0 {
            (l.value - r.value) / se
        } else if l.value == r.value {
            0.0
        } else {
            f64::INFINITY
        };
        let p = stats::two_sided_normal_p(z);
        checks.push(SubCheck {
            name: format!("laplace[{j}] y={y}"),
            null_hypothesis: "equal scaled Laplace functionals on both sides".into(),
            statistic: z,
            p_value: Some(p),
            threshold: corrected,
            passed: p >= corrected,
        });
    }
    let ks = stats::ks_two_sample(&col(0, k), &col(1, k))?;
    checks.push(SubCheck {
        name: "maxmod_ks".into(),
        null_hypothesis: "equal maxmod laws on both sides".into(),
        statistic: ks.statistic,
        p_value: Some(ks.p_value),
        threshold: corrected,
        passed: ks.p_value >= corrected,
    });
    Ok(TestReport::from_checks(
        "stability",
        n_reps,
        master_seed,
        serde_json::json!({
            "spec": spec,
            "b1": b1,
            "b2": b2,
            "rhs_scale": b,
            "rhs_factor": rhs_factor,
            "level": level,
            "bonferroni_level": corrected,
            "battery_y": battery.iter().map(|p| p.1).collect::<Vec<_>>(),
        }),
        checks,
    ))
}

/// CDF of the observed maxmod with empty windows reported as 0: an atom of
/// mass `F(eps)` at 0 and the analytic law above `eps`. Returns `(cdf, left limit)`.
pub fn censored_maxmod_cdf(spec: &ProcessSpec) -> Result<(impl Fn(f64) -> f64 + '_, impl Fn(f64) -> f64 + '_)> {
    let eps = spec
        .window()
        .ok_or_else(|| Error::Unsupported("maxmod law needs a scale family".into()))?;
    if spec.maxmod_cdf(1.0).is_none() {
        return Err(Error::Unsupported(
            "no closed-form maxmod law for this decoration".into(),
        ));
    }
    let cdf = move |y: f64| {
        if y < 0.0 {
            0.0
        } else {
            spec.maxmod_cdf(y.max(eps)).expect("checked")
        }
    };
    let left = move |y: f64| {
        if y <= 0.0 {
            0.0
        } else {
            spec.maxmod_cdf(y.max(eps)).expect("checked")
        }
    };
    Ok((cdf, left))
}

/// One-sample KS of sampled maxmod against `E_W exp(-y^-alpha W^alpha E[maxmod(P)^alpha])`.
pub fn maxmod_law_test(spec: &ProcessSpec, n_reps: u64, level: f64, master_seed: u64) -> Result<TestReport> {
    check_level(level)?;
    spec.validate()?;
    let (cdf, left) = censored_maxmod_cdf(spec)?;
    let samples: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|i| Ok(sampler::sample_process(spec, SeedSpec::new(master_seed, i))?.maxmod()))
        .collect::<Result<_>>()?;
    let ks = stats::ks_one_sample_with_atoms(&samples, cdf, left)?;
    Ok(TestReport::from_checks(
        "maxlaw",
        n_reps,
        master_seed,
        serde_json::json!({ "spec": spec, "level": level, "maxmod_constant": spec.maxmod_constant() }),
        vec![SubCheck {
            name: "maxmod_ks".into(),
            null_hypothesis: "maxmod follows the Frechet-mixture law".into(),
            statistic: ks.statistic,
            p_value: Some(ks.p_value),
            threshold: level,
            passed: ks.p_value >= level,
        }],
    ))
}

/// Hill estimator on the top `k` order statistics.
pub fn tail_index_estimate(samples: &[f64], k: usize) -> Result<TailIndexEstimate> {
    if k < 10 {
        return Err(invalid(format!("Hill estimator needs k >= 10, got {k}")));
    }
    if k >= samples.len() {
        return Err(invalid(format!("k = {k} must be below the sample size {}", samples.len())));
    }
    if samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(invalid("Hill estimator needs positive finite samples"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| b.total_cmp(a));
    let base = xs[k].ln();
    let sum: f64 = xs[..k].iter().map(|x| x.ln() - base).sum();
    if !(sum > 0.0) {
        return Err(invalid("zero log-spacings: the tail index is undefined"));
    }
    let alpha_hat = k as f64 / sum;
    Ok(TailIndexEstimate {
        alpha_hat,
        k,
        ci_half_width: 1.96 * alpha_hat / (k as f64).sqrt(),
    })
}

/// Default number of order statistics, `floor(sqrt(n))`.
pub fn default_hill_k(n: usize) -> usize {
    (n as f64).sqrt().floor() as usize
}

/// Hill estimate from a process's maxmod samples; empty windows (maxmod 0) are dropped.
pub fn tail_index_for_spec(spec: &ProcessSpec, n_reps: u64, k: usize, master_seed: u64) -> Result<TailIndexEstimate> {
    spec.validate()?;
    let samples: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|i| Ok(sampler::sample_process(spec, SeedSpec::new(master_seed, i))?.maxmod()))
        .collect::<Result<_>>()?;
    let positive: Vec<f64> = samples.into_iter().filter(|&x| x > 0.0).collect();
    tail_index_estimate(&positive, k)
}

/// Least-squares `c` minimizing `sum_j (e_j - g(y_j c))^2` over `ln c`.
pub(crate) fn fit_scale(template: &FrechetMixture, ys: &[f64], values: &[f64]) -> f64 {
    let loss = |theta: f64| -> f64 {
        let c = theta.exp();
        ys.iter()
            .zip(values)
            .map(|(y, v)| {
                let d = v - template.cdf(y * c);
                d * d
            })
            .sum()
    };
    let (lo, hi, step) = (-20.0, 20.0, 0.02);
    let n = ((hi - lo) / step) as usize;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=n {
        let t = lo + step * i as f64;
        let l = loss(t);
        if l < best.1 {
            best = (t, l);
        }
    }
    // golden-section refinement around the grid minimum
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (loss(c), loss(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = loss(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = loss(d);
        }
    }
    (0.5 * (a + b)).exp()
}

/// Fits each `y -> Psi(f || y)` to `g(y c)` and checks the sup residual
/// against three pooled standard errors.
///
/// `template` defaults to `g(y) = E_W Phi_alpha(y / W)` built from the spec.
pub fn scale_unique_support_test(
    spec: &ProcessSpec,
    battery: &[(String, TestFunction)],
    y_grid: &[f64],
    n_reps: u64,
    master_seed: u64,
    template: Option<FrechetMixture>,
) -> Result<TestReport> {
    spec.validate()?;
    if y_grid.len() < 2 {
        return Err(invalid("the template fit needs at least two grid points"));
    }
    if battery.is_empty() {
        return Err(invalid("empty battery"));
    }
    let template = match template {
        Some(t) => t,
        None => {
            let (alpha, _) = scale_params(spec)?;
            FrechetMixture::new(alpha, 1.0, spec.scale_law().unwrap_or(ScaleLaw::Deterministic { value: 1.0 }))?
        }
    };
    let pairs: Vec<(TestFunction, f64)> = battery
        .iter()
        .flat_map(|(_, f)| y_grid.iter().map(move |&y| (f.clone(), y)))
        .collect();
    let est = functionals::estimate_scaled_laplace_battery(spec, &pairs, n_reps, master_seed)?;
    let mut fits = Vec::with_capacity(battery.len());
    for (i, (id, f)) in battery.iter().enumerate() {
        let e = est[i * y_grid.len()..(i + 1) * y_grid.len()].to_vec();
        let pooled = (e.iter().map(|x| x.std_error * x.std_error).sum::<f64>() / e.len() as f64).sqrt();
        if f.is_zero() {
            fits.push(FitResult {
                f_id: id.clone(),
                fitted_c: 0.0,
                residual_sup: 0.0,
                pooled_std_error: pooled,
                estimates: e,
                trivial: true,
                passed: true,
            });
            continue;
        }
        let values: Vec<f64> = e.iter().map(|x| x.value).collect();
        let c = fit_scale(&template, y_grid, &values);
        let residual = y_grid
            .iter()
            .zip(&values)
            .map(|(y, v)| (v - template.cdf(y * c)).abs())
            .fold(0.0, f64::max);
        fits.push(FitResult {
            f_id: id.clone(),
            fitted_c: c,
            residual_sup: residual,
            pooled_std_error: pooled,
            estimates: e,
            trivial: false,
            passed: residual < 3.0 * pooled,
        });
    }
    let checks = fits
        .iter()
        .map(|r| SubCheck {
            name: format!("template_fit[{}]", r.f_id),
            null_hypothesis: "Psi(f || .) is a scale shift of the template".into(),
            statistic: r.residual_sup,
            p_value: None,
            threshold: 3.0 * r.pooled_std_error,
            passed: r.passed,
        })
        .collect();
    let mut report = TestReport::from_checks(
        "support",
        n_reps,
        master_seed,
        serde_json::json!({ "spec": spec, "y_grid": y_grid, "template": template }),
        checks,
    );
    report.fits = fits;
    Ok(report)
}
