//! Empirical scale-decoration: condition on `maxmod(N) > y`, split each
//! accepted sample into its radial part `maxmod(N) / y` and the max-normalized
//! measure, and check the Pareto law, independence and the rebuilt process.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterization::{self, SubCheck, TestReport};
use crate::error::{invalid, Error, Result};
use crate::functionals::{self, EstimateWithError, FrechetMixture};
use crate::point_measure::{Atom, PointMeasure, TestFunction};
use crate::rng::SeedSpec;
use crate::sampler::{self, Carrier, DecorationSpec, ProcessSpec, ScaleLaw, TableEntry};
use crate::stats;

/// Attempts evaluated per parallel block; acceptance is decided in attempt order.
const BLOCK: u64 = 4096;

fn default_permutations() -> usize {
    999
}

fn default_calibration_reps() -> u64 {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionConfig {
    /// Conditioning threshold `y >= 1`.
    pub threshold: f64,
    /// Inner radius `eps'` in `(0, 1)` of the normalized measures.
    pub window_ratio: f64,
    pub n_accepted: usize,
    pub max_attempts: u64,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    /// Samples used to fit `c_max`.
    #[serde(default = "default_calibration_reps")]
    pub calibration_reps: u64,
}

impl ExtractionConfig {
    pub fn new(threshold: f64, window_ratio: f64, n_accepted: usize, max_attempts: u64) -> Self {
        Self {
            threshold,
            window_ratio,
            n_accepted,
            max_attempts,
            permutations: default_permutations(),
            calibration_reps: default_calibration_reps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold >= 1.0) {
            return Err(invalid(format!("threshold must be >= 1, got {}", self.threshold)));
        }
        if !(self.window_ratio > 0.0 && self.window_ratio < 1.0) {
            return Err(invalid(format!("window ratio must be in (0, 1), got {}", self.window_ratio)));
        }
        if self.n_accepted < 100 {
            return Err(invalid("at least 100 accepted samples are required"));
        }
        if self.max_attempts < self.n_accepted as u64 {
            return Err(invalid("max_attempts is below the accepted-sample target"));
        }
        if self.permutations < 99 {
            return Err(invalid("at least 99 permutations are required"));
        }
        if self.calibration_reps < 1000 {
            return Err(invalid("at least 1000 calibration samples are required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub spec: ProcessSpec,
    pub config: ExtractionConfig,
    pub master_seed: u64,
    pub alpha: f64,
    /// Max-normalized samples restricted to `{|x| > eps'}`; each has maxmod 1.
    pub decorations: Vec<PointMeasure>,
    /// `maxmod(N) / y` for each accepted sample.
    pub radial: Vec<f64>,
    pub pareto_ks: f64,
    pub pareto_ks_p: f64,
    /// Permutation p-value for |corr(radial, atom count)|.
    pub independence_p: f64,
    pub independence_statistic: f64,
    /// Permutation p-value for |corr(radial, tent integral)|.
    pub tent_independence_p: f64,
    /// Fraction of normalized samples with exactly one atom.
    pub single_atom_fraction: f64,
    pub attempts: u64,
    pub acceptance_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_acceptance_rate: Option<f64>,
    /// Fitted `c` in `P(maxmod <= y) = g(c y)`, `g(y) = E_W Phi_alpha(y / W)`.
    pub c_max_hat: f64,
}

/// Accepted samples (maxmod > y) in attempt order, exact on `{|x| > ratio * y}`.
fn accept(
    spec: &ProcessSpec,
    y: f64,
    ratio: f64,
    n_accepted: usize,
    max_attempts: u64,
    master_seed: u64,
) -> Result<(Vec<PointMeasure>, u64)> {
    let windowed = spec.with_window(ratio * y);
    let mut accepted = Vec::with_capacity(n_accepted);
    let mut start = 0u64;
    while start < max_attempts {
        let end = (start + BLOCK).min(max_attempts);
        let block: Vec<Option<PointMeasure>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let m = sampler::sample_process(&windowed, SeedSpec::new(master_seed, i))?;
                Ok((m.maxmod() > y).then_some(m))
            })
            .collect::<Result<_>>()?;
        for (offset, m) in block.into_iter().enumerate() {
            if let Some(m) = m {
                accepted.push(m);
                if accepted.len() == n_accepted {
                    return Ok((accepted, start + offset as u64 + 1));
                }
            }
        }
        start = end;
    }
    let expected_rate = spec
        .maxmod_cdf(y)
        .map(|p| 1.0 - p)
        .unwrap_or(accepted.len() as f64 / max_attempts as f64);
    Err(Error::AcceptanceStarvation {
        accepted: accepted.len(),
        target: n_accepted,
        attempts: max_attempts,
        expected_rate,
    })
}

/// `S_{1/maxmod} m` restricted to `{|x| > ratio}`; the top atom lands exactly on +-1.
fn normalize(m: &PointMeasure, ratio: f64) -> PointMeasure {
    let mm = m.maxmod();
    PointMeasure::from_valid_atoms(
        m.atoms()
            .iter()
            .map(|a| Atom {
                location: a.location / mm,
                multiplicity: a.multiplicity,
            })
            .filter(|a| a.location.abs() > ratio)
            .collect(),
    )
}

fn single_index(spec: &ProcessSpec) -> Result<f64> {
    if spec.carrier() != Carrier::Scale {
        return Err(Error::Unsupported(
            "extraction runs in the scale world; map shift families first".into(),
        ));
    }
    spec.index()
        .ok_or_else(|| Error::Unsupported("extraction needs a single-family spec".into()))
}

/// `c` with `P(maxmod <= y) = g(c y)`, fitted at 19 empirical quantiles of a
/// dedicated sample on a window covering the bulk of the maxmod law.
pub fn estimate_c_max(spec: &ProcessSpec, n_reps: u64, master_seed: u64) -> Result<f64> {
    let alpha = single_index(spec)?;
    let law = spec.scale_law().expect("scale family");
    let bound = spec.decoration().expect("single family").bound(Carrier::Scale);
    if !(bound > 0.0) {
        return Err(invalid("decoration has no atoms; c_max is undefined"));
    }
    // about 20 series points above eta at the median scale
    let w_ref = law.expect(|w| w.ln()).exp();
    let window = bound * w_ref * 20f64.powf(-1.0 / alpha);
    let calib = spec.with_window(window);
    let mut samples: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|i| Ok(sampler::sample_process(&calib, SeedSpec::new(master_seed, i))?.maxmod()))
        .collect::<Result<_>>()?;
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let (mut ys, mut ps) = (Vec::new(), Vec::new());
    for j in 1..20 {
        let p = j as f64 / 20.0;
        let y = samples[((p * n as f64) as usize).min(n - 1)];
        if y > window {
            ys.push(y);
            ps.push(p);
        }
    }
    if ys.len() < 2 {
        return Err(invalid("calibration sample is censored below its window"));
    }
    let template = FrechetMixture::new(alpha, 1.0, law)?;
    Ok(characterization::fit_scale(&template, &ys, &ps))
}

/// Rejection-samples `N | maxmod(N) > y` and extracts radial and normalized parts.
pub fn extract_decoration(spec: &ProcessSpec, config: &ExtractionConfig, master_seed: u64) -> Result<ExtractionReport> {
    spec.validate()?;
    config.validate()?;
    let alpha = single_index(spec)?;
    let y = config.threshold;
    let seeds = SeedSpec::new(master_seed, 0);
    let (accepted, attempts) = accept(
        spec,
        y,
        config.window_ratio,
        config.n_accepted,
        config.max_attempts,
        seeds.derive(10).master_seed,
    )?;
    let radial: Vec<f64> = accepted.iter().map(|m| m.maxmod() / y).collect();
    let decorations: Vec<PointMeasure> = accepted.iter().map(|m| normalize(m, config.window_ratio)).collect();

    let ks = stats::ks_one_sample(&radial, |r| if r <= 1.0 { 0.0 } else { 1.0 - r.powf(-alpha) })?;
    let counts: Vec<f64> = decorations.iter().map(|d| d.total_count() as f64).collect();
    let tent = sensitivity_tent(config.window_ratio)?;
    let tents: Vec<f64> = decorations.iter().map(|d| d.integrate(&tent)).collect();
    let mut rng = seeds.derive(11).rng();
    let (stat, p) = stats::permutation_correlation_test(&radial, &counts, config.permutations, &mut rng)?;
    let mut rng = seeds.derive(12).rng();
    let (_, p_tent) = stats::permutation_correlation_test(&radial, &tents, config.permutations, &mut rng)?;
    let single = counts.iter().filter(|&&c| c == 1.0).count() as f64 / counts.len() as f64;
    let c_max_hat = estimate_c_max(spec, config.calibration_reps, seeds.derive(13).master_seed)?;

    Ok(ExtractionReport {
        spec: spec.clone(),
        config: config.clone(),
        master_seed,
        alpha,
        decorations,
        radial,
        pareto_ks: ks.statistic,
        pareto_ks_p: ks.p_value,
        independence_p: p,
        independence_statistic: stat,
        tent_independence_p: p_tent,
        single_atom_fraction: single,
        attempts,
        acceptance_rate: config.n_accepted as f64 / attempts as f64,
        expected_acceptance_rate: spec.maxmod_cdf(y).map(|p| 1.0 - p),
        c_max_hat,
    })
}

/// Two-sided tent on `eps' < |x| < 1` peaking midway.
fn sensitivity_tent(ratio: f64) -> Result<TestFunction> {
    let mid = 0.5 * (1.0 + ratio);
    TestFunction::from_knots(vec![(-1.0, 0.0), (-mid, 1.0), (-ratio, 0.0), (ratio, 0.0), (mid, 1.0), (1.0, 0.0)])
}

/// The rebuilt process: decoration drawn uniformly from the extracted samples
/// scaled by `1 / c_max_hat`, with the original scale law.
pub fn rebuilt_spec(report: &ExtractionReport, c_max_hat: f64, window: f64) -> Result<ProcessSpec> {
    if report.decorations.is_empty() {
        return Err(invalid("extraction report has no decoration samples"));
    }
    if !(c_max_hat.is_finite() && c_max_hat > 0.0) {
        return Err(invalid("c_max_hat must be positive"));
    }
    let p = 1.0 / report.decorations.len() as f64;
    let decoration = DecorationSpec::UserTable {
        entries: report
            .decorations
            .iter()
            .map(|d| TableEntry {
                atoms: d.atoms().iter().map(|a| (a.location / c_max_hat, a.multiplicity)).collect(),
                probability: p,
            })
            .collect(),
        maxmod_bound: None,
    };
    let alpha = report.alpha;
    Ok(match report.spec.scale_law() {
        Some(ScaleLaw::Deterministic { value: 1.0 }) => ProcessSpec::scdppp(alpha, decoration, window),
        Some(law) => ProcessSpec::sscdppp(alpha, decoration, law, window),
        None => ProcessSpec::scdppp(alpha, decoration, window),
    })
}

/// Compares the built-in battery at `y in {1, 2, 4}` between the original
/// process and the rebuilt one; each pair must agree within 3 pooled s.e.
pub fn rebuild_process(
    report: &ExtractionReport,
    alpha: f64,
    c_max_hat: f64,
    n_reps: u64,
    master_seed: u64,
) -> Result<TestReport> {
    if report.decorations.len() < 100 {
        return Err(invalid(format!(
            "rebuilding needs at least 100 decoration samples, got {}",
            report.decorations.len()
        )));
    }
    if alpha != report.alpha {
        return Err(invalid("alpha differs from the extraction report"));
    }
    let window = 1.0;
    let rebuilt = rebuilt_spec(report, c_max_hat, window)?;
    let original = report.spec.with_window(window);
    let ys = [1.0, 2.0, 4.0];
    let named = functionals::builtin_battery();
    let battery: Vec<(TestFunction, f64)> = named
        .iter()
        .flat_map(|(_, f)| ys.iter().map(move |&y| (f.clone(), y)))
        .collect();
    let seeds = SeedSpec::new(master_seed, 0);
    let a = functionals::estimate_scaled_laplace_battery(&original, &battery, n_reps, seeds.derive(20).master_seed)?;
    let b = functionals::estimate_scaled_laplace_battery(&rebuilt, &battery, n_reps, seeds.derive(21).master_seed)?;
    let checks = battery_agreement(&named, &ys, &a, &b);
    Ok(TestReport {
        test_name: "rebuild".into(),
        passed: checks.iter().all(|c| c.passed),
        n_reps,
        master_seed,
        parameters: serde_json::json!({
            "original": report.spec,
            "c_max_hat": c_max_hat,
            "alpha": alpha,
            "y_grid": ys,
            "decoration_samples": report.decorations.len(),
        }),
        checks,
        fits: Vec::new(),
    })
}

fn battery_agreement(
    named: &[(String, TestFunction)],
    ys: &[f64],
    a: &[EstimateWithError],
    b: &[EstimateWithError],
) -> Vec<SubCheck> {
    let mut checks = Vec::new();
    for (i, (id, _)) in named.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let (ea, eb) = (a[i * ys.len() + j], b[i * ys.len() + j]);
            let pooled = (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt();
            let diff = (ea.value - eb.value).abs();
            checks.push(SubCheck {
                name: format!("{id} y={y}"),
                null_hypothesis: "original and rebuilt scaled Laplace functionals agree".into(),
                statistic: diff,
                p_value: None,
                threshold: 3.0 * pooled,
                passed: diff <= 3.0 * pooled,
            });
        }
    }
    checks
}

/// `E[exp(-N^{(y)}(f(./x))) | maxmod(N) > y]` on an `x` grid against the exact
/// finite-`y` value `1 - (1 - e^{-(xy)^-alpha k_f}) / (1 - e^{-y^-alpha k_max})`,
/// with the limit `1 - x^-alpha k_f / k_max` and the fitted slope reported.
///
/// Battery functions must vanish on `{|x| <= 1}`. Requires a deterministic
/// scale and a decoration admitting quadrature.
pub fn nstar_functional_check(
    spec: &ProcessSpec,
    x_grid: &[f64],
    battery: &[(String, TestFunction)],
    y: f64,
    n_reps: u64,
    master_seed: u64,
) -> Result<TestReport> {
    spec.validate()?;
    let alpha = single_index(spec)?;
    if !(y.is_finite() && y >= 1.0) {
        return Err(invalid("threshold must be >= 1"));
    }
    if x_grid.is_empty() || x_grid.iter().any(|&x| !(x.is_finite() && x >= 1.0)) {
        return Err(invalid("x grid must be nonempty with x >= 1"));
    }
    let w = match spec.scale_law() {
        Some(ScaleLaw::Deterministic { value }) => value,
        _ => return Err(Error::Unsupported("the finite-y closed form needs a deterministic scale".into())),
    };
    let decoration = spec.decoration().expect("single family");
    for (id, f) in battery {
        if let Some((inner, _)) = f.support_bounds() {
            if inner < 1.0 {
                return Err(invalid(format!("battery function {id} is not supported in |x| > 1")));
            }
        }
    }
    let k_max = decoration
        .maxmod_moment(alpha)
        .ok_or_else(|| Error::Unsupported("no closed-form maxmod moment".into()))?
        * w.powf(alpha);
    let n = usize::try_from(n_reps).map_err(|_| invalid("too many replicas"))?;
    let seeds = SeedSpec::new(master_seed, 0);
    let (accepted, _) = accept(spec, y, 0.5, n, n_reps.saturating_mul(100_000), seeds.derive(30).master_seed)?;

    // P(maxmod > y), as a negative number to pair with exp_m1 above
    let accept_mass = (-y.powf(-alpha) * k_max).exp_m1();
    let mut checks = Vec::new();
    let mut fits = Vec::new();
    let mut predicted_slopes = Vec::new();
    for (id, f) in battery {
        let k_f = functionals::cf_quadrature(decoration, f, alpha)?.c_f * w.powf(alpha);
        let mut estimates = Vec::with_capacity(x_grid.len());
        for &x in x_grid {
            let g = f.scale_fn(1.0 / (x * y))?;
            let vals: Vec<f64> = accepted.iter().map(|m| (-m.integrate(&g)).exp()).collect();
            let e = EstimateWithError::from_samples(&vals);
            let exact = 1.0 - (-(x * y).powf(-alpha) * k_f).exp_m1() / accept_mass;
            let diff = (e.value - exact).abs();
            // values lie in [0, 1]; a sample with no spread still carries binomial-scale noise
            let se_floor = (exact * (1.0 - exact) / vals.len() as f64).max(0.0).sqrt();
            let tol = 3.0 * e.std_error.max(se_floor) + 1e-6;
            checks.push(SubCheck {
                name: format!("{id} x={x}"),
                null_hypothesis: "conditional functional equals its finite-y closed form".into(),
                statistic: diff,
                p_value: None,
                threshold: tol,
                passed: diff <= tol,
            });
            estimates.push(e);
        }
        // least-squares slope s in 1 - s x^-alpha
        let (num, den) = x_grid.iter().zip(&estimates).fold((0.0, 0.0), |(n, d), (x, e)| {
            let t = x.powf(-alpha);
            (n + t * (1.0 - e.value), d + t * t)
        });
        let slope = num / den;
        let predicted = k_f / k_max;
        predicted_slopes.push(predicted);
        let pooled = (estimates.iter().map(|e| e.std_error.powi(2)).sum::<f64>() / estimates.len() as f64).sqrt();
        fits.push(characterization::FitResult {
            f_id: id.clone(),
            fitted_c: slope,
            residual_sup: (slope - predicted).abs(),
            pooled_std_error: pooled,
            estimates,
            trivial: f.is_zero(),
            passed: true,
        });
    }
    Ok(TestReport {
        test_name: "nstar".into(),
        passed: checks.iter().all(|c| c.passed),
        n_reps,
        master_seed,
        parameters: serde_json::json!({
            "spec": spec,
            "x_grid": x_grid,
            "threshold": y,
            "k_max": k_max,
            "predicted_limit_slopes": predicted_slopes,
        }),
        checks,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_measure::IndicatorShape;

    fn delta1(alpha: f64) -> ProcessSpec {
        ProcessSpec::scdppp(alpha, DecorationSpec::dirac(&[1.0]), 1.0)
    }

    fn quick(y: f64, n: usize) -> ExtractionConfig {
        ExtractionConfig {
            calibration_reps: 20_000,
            ..ExtractionConfig::new(y, 0.5, n, 10_000_000)
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExtractionConfig::new(0.5, 0.5, 500, 1_000_000).validate().is_err());
        assert!(ExtractionConfig::new(10.0, 1.0, 500, 1_000_000).validate().is_err());
        assert!(ExtractionConfig::new(10.0, 0.5, 99, 1_000_000).validate().is_err());
        assert!(ExtractionConfig::new(10.0, 0.5, 500, 1_000_000).validate().is_ok());
        let json = r#"{"threshold": 10, "window_ratio": 0.5, "n_accepted": 100, "max_attempts": 1000, "extra": 1}"#;
        assert!(serde_json::from_str::<ExtractionConfig>(json).is_err());
    }

    #[test]
    fn normalized_samples_have_unit_maxmod() {
        let spec = ProcessSpec::scdppp(1.0, DecorationSpec::dirac(&[1.0, -0.7, 0.3]), 1.0);
        let r = extract_decoration(&spec, &quick(10.0, 200), 3).unwrap();
        assert_eq!(r.decorations.len(), 200);
        for (d, r) in r.decorations.iter().zip(&r.radial) {
            assert_eq!(d.maxmod(), 1.0);
            assert!(*r > 1.0);
            assert!(d.atoms().iter().all(|a| a.location.abs() > 0.5));
        }
    }

    #[test]
    fn alpha_two_radial_law_is_pareto() {
        let r = extract_decoration(&delta1(2.0), &quick(10.0, 500), 5).unwrap();
        assert!(r.pareto_ks_p > 1e-3, "{} {}", r.pareto_ks, r.pareto_ks_p);
        assert!((r.c_max_hat - 1.0).abs() < 0.02, "{}", r.c_max_hat);
    }

    #[test]
    fn acceptance_rate_matches_the_max_law() {
        let spec = delta1(1.0);
        let r = extract_decoration(&spec, &quick(20.0, 400), 8).unwrap();
        let p = r.expected_acceptance_rate.unwrap();
        assert!((p - (1.0 - (-1.0f64 / 20.0).exp())).abs() < 1e-15);
        let se = (p * (1.0 - p) / r.attempts as f64).sqrt();
        assert!((r.acceptance_rate - p).abs() < 3.0 * se, "{} vs {p}", r.acceptance_rate);
    }

    #[test]
    fn starvation_is_reported() {
        let cfg = ExtractionConfig::new(1e9, 0.5, 100, 20_000);
        match extract_decoration(&delta1(1.0), &cfg, 0) {
            Err(Error::AcceptanceStarvation { accepted, target, expected_rate, .. }) => {
                assert_eq!(target, 100);
                assert!(accepted < 100);
                assert!(expected_rate < 1e-8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let cfg = quick(5.0, 100);
        let a = extract_decoration(&delta1(1.0), &cfg, 42).unwrap();
        let b = extract_decoration(&delta1(1.0), &cfg, 42).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn rebuild_requires_samples() {
        let mut r = extract_decoration(&delta1(1.0), &quick(5.0, 100), 1).unwrap();
        r.decorations.clear();
        assert!(rebuild_process(&r, 1.0, 1.0, 100, 0).is_err());
        assert!(rebuilt_spec(&r, 1.0, 1.0).is_err());
    }

    #[test]
    fn nstar_matches_the_finite_threshold_form() {
        let f = TestFunction::indicator(IndicatorShape { level: 50.0, inner: 1.0, ramp: 1e-3, outer: 1e12, two_sided: true }).unwrap();
        let battery = vec![("max".to_string(), f)];
        let r = nstar_functional_check(&delta1(1.0), &[1.0, 2.0, 4.0], &battery, 100.0, 2000, 6).unwrap();
        assert!(r.passed, "{r:#?}");
        let limits = [0.0, 0.5, 0.75];
        for (e, l) in r.fits[0].estimates.iter().zip(limits) {
            assert!((e.value - l).abs() < 3.0 * e.std_error + 0.01, "{e:?} vs {l}");
        }
        assert!((r.fits[0].fitted_c - 1.0).abs() < 0.05);
    }
}
