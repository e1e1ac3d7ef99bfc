//! Laplace functionals: Monte-Carlo estimators, the decoration constant `c_f`
//! by quadrature or simulation, and the closed-form Fréchet-mixture predictions.
//!
//! Canonical prediction for a scale family with random scale `W`:
//! `Psi(f || y) = E_W exp(-y^-alpha W^alpha c_f)`,
//! `c_f = int (1 - Psi_P(S_x f)) m_alpha(dx)`.
//! For a shift family with random shift `U`:
//! `L(f | y) = E_U exp(-K_f e^{-c (y - U)})`,
//! `K_f = int (1 - E exp(-sum_j f(w + q_j))) e^{-c w} dw`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::point_measure::{Atom, IndicatorShape, TestFunction};
use crate::quadrature;
use crate::rng::SeedSpec;
use crate::sampler::{self, Carrier, DecorationSpec, ProcessSpec, ScaleLaw, ShiftLaw};
use crate::stats;
use crate::transform::ShiftTestFunction;

/// Absolute tolerance requested from the `c_f` quadrature.
pub const CF_ABS_TOL: f64 = 1e-9;
const CF_MAX_PANELS: usize = 20_000;

/// Monte-Carlo estimate with its standard error (sample sd / sqrt(n_reps)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n_reps: u64,
}

impl EstimateWithError {
    pub fn from_samples(values: &[f64]) -> Self {
        let (value, std_error) = stats::mean_and_se(values);
        Self {
            value,
            std_error,
            n_reps: values.len() as u64,
        }
    }

    pub fn exact(value: f64, n_reps: u64) -> Self {
        Self {
            value,
            std_error: 0.0,
            n_reps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfResult {
    pub c_f: f64,
    pub quadrature_error_bound: f64,
    pub alpha: f64,
}

/// `g(y) = E_W Phi_alpha(y c / W) = E_W exp(-y^-alpha c^-alpha W^alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetMixture {
    pub alpha: f64,
    pub c: f64,
    pub scale_law: ScaleLaw,
}

impl FrechetMixture {
    pub fn new(alpha: f64, c: f64, scale_law: ScaleLaw) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid("mixture index must be positive"));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid("mixture scale constant must be positive"));
        }
        scale_law.validate()?;
        Ok(Self { alpha, c, scale_law })
    }

    /// The mixture matching a decoration constant: `c = c_f^(-1/alpha)`.
    pub fn from_cf(alpha: f64, c_f: f64, scale_law: ScaleLaw) -> Result<Self> {
        Self::new(alpha, c_f.powf(-1.0 / alpha), scale_law)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let k = (y * self.c).powf(-self.alpha);
        let a = self.alpha;
        self.scale_law.expect(|w| (-k * w.powf(a)).exp())
    }
}

/// `Phi_alpha(x) = exp(-x^-alpha)`.
pub fn frechet_cdf(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid(format!("Frechet index must be positive, got {alpha}")));
    }
    if !(x > 0.0) {
        return Err(invalid(format!("Frechet CDF needs x > 0, got {x}")));
    }
    Ok((-x.powf(-alpha)).exp())
}

/// `E_W exp(-y^-alpha W^alpha c_f)`; 1 when `c_f = 0`.
pub fn predict_scaled_laplace(alpha: f64, c_f: f64, scale_law: &ScaleLaw, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(invalid(format!("prediction needs y > 0, got {y}")));
    }
    if c_f == 0.0 {
        return Ok(1.0);
    }
    let k = y.powf(-alpha) * c_f;
    Ok(scale_law.expect(|w| (-k * w.powf(alpha)).exp()))
}

/// `E_U exp(-K_f e^{-c (y - U)})`; 1 when `K_f = 0`.
pub fn predict_shift_laplace(c: f64, k_f: f64, shift_law: &ShiftLaw, y: f64) -> f64 {
    if k_f == 0.0 {
        return 1.0;
    }
    shift_law.expect(|u| (-k_f * (-c * (y - u)).exp()).exp())
}

fn check_reps(n_reps: u64) -> Result<()> {
    if n_reps < 2 {
        return Err(invalid("at least two replicas are needed for a standard error"));
    }
    Ok(())
}

/// `f(./y)`, checked against the exactly sampled window.
fn window_function(spec: &ProcessSpec, f: &TestFunction, y: f64) -> Result<TestFunction> {
    if !(y.is_finite() && y > 0.0) {
        return Err(invalid(format!("y must be positive and finite, got {y}")));
    }
    let g = f.scale_fn(1.0 / y)?;
    let window = spec.window().ok_or_else(|| {
        Error::Unsupported("scaled Laplace functionals need a scale family".into())
    })?;
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
}

/// `Psi_N(f || y) = E exp(-N(f(./y)))` over `n_reps` replicas of `spec`.
pub fn estimate_scaled_laplace(
    spec: &ProcessSpec,
    f: &TestFunction,
    y: f64,
    n_reps: u64,
    master_seed: u64,
) -> Result<EstimateWithError> {
    Ok(estimate_scaled_laplace_battery(spec, &[(f.clone(), y)], n_reps, master_seed)?[0])
}

/// Estimates a whole battery of `(f, y)` pairs on shared replicas.
pub fn estimate_scaled_laplace_battery(
    spec: &ProcessSpec,
    battery: &[(TestFunction, f64)],
    n_reps: u64,
    master_seed: u64,
) -> Result<Vec<EstimateWithError>> {
    check_reps(n_reps)?;
    spec.validate()?;
    let fns: Vec<TestFunction> = battery
        .iter()
        .map(|(f, y)| window_function(spec, f, *y))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let m = sampler::sample_process(spec, SeedSpec::new(master_seed, i))?;
            Ok(fns.iter().map(|g| (-m.integrate(g)).exp()).collect())
        })
        .collect::<Result<_>>()?;
    Ok(columns(&rows, fns.len()))
}

fn columns(rows: &[Vec<f64>], width: usize) -> Vec<EstimateWithError> {
    (0..width)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            EstimateWithError::from_samples(&col)
        })
        .collect()
}

/// `L_T(f | y) = E exp(-int f(x - y) dT)` for a shift family.
pub fn estimate_shift_laplace(
    spec: &ProcessSpec,
    f: &ShiftTestFunction,
    y: f64,
    n_reps: u64,
    master_seed: u64,
) -> Result<EstimateWithError> {
    Ok(estimate_shift_laplace_battery(spec, &[(f.clone(), y)], n_reps, master_seed)?[0])
}

pub fn estimate_shift_laplace_battery(
    spec: &ProcessSpec,
    battery: &[(ShiftTestFunction, f64)],
    n_reps: u64,
    master_seed: u64,
) -> Result<Vec<EstimateWithError>> {
    check_reps(n_reps)?;
    spec.validate()?;
    let cutoff = spec
        .cutoff()
        .ok_or_else(|| Error::Unsupported("shift Laplace functionals need a shift family".into()))?;
    let fns: Vec<ShiftTestFunction> = battery
        .iter()
        .map(|(f, y)| {
            let g = f.translated(*y)?;
            if let Some((lo, _)) = g.support_hull() {
                if lo < cutoff {
                    return Err(Error::WindowViolation {
                        what: format!("support of f(. - {y}) starts at {lo}"),
                        required: lo,
                        actual: cutoff,
                    });
                }
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let t = sampler::sample_shift_process(spec, SeedSpec::new(master_seed, i))?;
            Ok(fns.iter().map(|g| (-t.integrate(g)).exp()).collect())
        })
        .collect::<Result<_>>()?;
    Ok(columns(&rows, fns.len()))
}

fn enumerated(decoration: &DecorationSpec, carrier: Carrier) -> Result<Vec<(Vec<Atom>, f64)>> {
    decoration.validate(carrier)?;
    decoration.enumerate().ok_or_else(|| {
        Error::Unsupported(
            "quadrature needs a DiracSet or UserTable decoration; use the Monte-Carlo estimate".into(),
        )
    })
}

/// `c_f` by adaptive quadrature in `u = x^-alpha`, split at every point where
/// a decoration atom crosses a knot of `f`.
pub fn cf_quadrature(decoration: &DecorationSpec, f: &TestFunction, alpha: f64) -> Result<CfResult> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    let table = enumerated(decoration, Carrier::Scale)?;
    let zero = CfResult {
        c_f: 0.0,
        quadrature_error_bound: 0.0,
        alpha,
    };
    let Some((inner, outer)) = f.support_bounds() else {
        return Ok(zero);
    };
    let moduli = table.iter().flat_map(|(a, _)| a.iter().map(|x| x.location.abs()));
    let (m_min, m_max) = moduli.fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
    if m_max == 0.0 {
        return Ok(zero);
    }
    // x ranges over (inner / m_max, outer / m_min)
    let u_lo = (outer / m_min).powf(-alpha);
    let u_hi = (inner / m_max).powf(-alpha);
    let mut breaks = Vec::new();
    for (atoms, _) in &table {
        for a in atoms {
            for &(k, _) in f.shape().knots() {
                let x = k / a.location;
                if x > 0.0 {
                    breaks.push(x.powf(-alpha));
                }
            }
        }
    }
    let inv = -1.0 / alpha;
    let integrand = |u: f64| {
        let x = u.powf(inv);
        table
            .iter()
            .map(|(atoms, p)| {
                let s: f64 = atoms
                    .iter()
                    .map(|a| a.multiplicity as f64 * f.eval(x * a.location))
                    .sum();
                p * -(-s).exp_m1()
            })
            .sum::<f64>()
    };
    let r = quadrature::integrate(integrand, u_lo, u_hi, &breaks, CF_ABS_TOL, CF_MAX_PANELS)?;
    Ok(CfResult {
        c_f: r.value.max(0.0),
        quadrature_error_bound: r.error,
        alpha,
    })
}

/// Monte-Carlo `c_f` for any decoration: `U_max * E[1 - exp(-P(f(x(u) .)))]`
/// with `u ~ Uniform(0, U_max)`, `x(u) = u^(-1/alpha)`, `U_max = (inner/M)^-alpha`.
/// The value is in `[0, U_max]`, not `[0, 1]`.
pub fn cf_estimate(
    decoration: &DecorationSpec,
    f: &TestFunction,
    alpha: f64,
    n_reps: u64,
    master_seed: u64,
) -> Result<EstimateWithError> {
    check_reps(n_reps)?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    decoration.validate(Carrier::Scale)?;
    let Some((inner, _)) = f.support_bounds() else {
        return Ok(EstimateWithError::exact(0.0, n_reps));
    };
    let bound = decoration.bound(Carrier::Scale);
    if !(bound > 0.0) {
        return Ok(EstimateWithError::exact(0.0, n_reps));
    }
    let u_max = (inner / bound).powf(-alpha);
    let inv = -1.0 / alpha;
    let vals: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = SeedSpec::new(master_seed, i).rng();
            // (0, u_max]
            let u = u_max * (1.0 - rng.random::<f64>());
            let p = decoration.sample_atoms(Carrier::Scale, &mut rng)?;
            let x = u.powf(inv);
            let s: f64 = p
                .iter()
                .map(|a| a.multiplicity as f64 * f.eval(x * a.location))
                .sum();
            Ok(u_max * -(-s).exp_m1())
        })
        .collect::<Result<_>>()?;
    Ok(EstimateWithError::from_samples(&vals))
}

/// Bound on `|c_f(approximant) - c_f(level * indicator)|` for an indicator
/// approximant: `(1 - e^-level) * E sum_j m_alpha({x : x |p_j| in bias zones})`.
pub fn indicator_correction_bound(decoration: &DecorationSpec, shape: &IndicatorShape, alpha: f64) -> Result<f64> {
    let table = enumerated(decoration, Carrier::Scale)?;
    let zone_mass: f64 = shape
        .bias_zones()
        .iter()
        .map(|&(a, b)| a.powf(-alpha) - if b.is_finite() { b.powf(-alpha) } else { 0.0 })
        .sum();
    let moment: f64 = table
        .iter()
        .map(|(atoms, p)| {
            p * atoms
                .iter()
                .map(|a| a.multiplicity as f64 * a.location.abs().powf(alpha))
                .sum::<f64>()
        })
        .sum();
    Ok(-(-shape.level).exp_m1() * zone_mass * moment)
}

/// `K_f` for a shift-carrier decoration by adaptive quadrature in `w`.
pub fn shift_kf_quadrature(decoration: &DecorationSpec, f: &ShiftTestFunction, c: f64) -> Result<CfResult> {
    if !(c.is_finite() && c > 0.0) {
        return Err(invalid("c must be positive"));
    }
    let table = enumerated(decoration, Carrier::Shift)?;
    let zero = CfResult {
        c_f: 0.0,
        quadrature_error_bound: 0.0,
        alpha: c,
    };
    let Some((lo, hi)) = f.support_hull() else {
        return Ok(zero);
    };
    let locs = table.iter().flat_map(|(a, _)| a.iter().map(|x| x.location));
    let (q_min, q_max) = locs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q), b.max(q)));
    if q_min > q_max {
        return Ok(zero);
    }
    let mut breaks = Vec::new();
    for (atoms, _) in &table {
        for a in atoms {
            breaks.extend(f.shape().knots().iter().map(|&(k, _)| k - a.location));
        }
    }
    let integrand = |w: f64| {
        let s: f64 = table
            .iter()
            .map(|(atoms, p)| {
                let s: f64 = atoms
                    .iter()
                    .map(|a| a.multiplicity as f64 * f.eval(w + a.location))
                    .sum();
                p * -(-s).exp_m1()
            })
            .sum();
        s * (-c * w).exp()
    };
    let r = quadrature::integrate(integrand, lo - q_max, hi - q_min, &breaks, CF_ABS_TOL, CF_MAX_PANELS)?;
    Ok(CfResult {
        c_f: r.value.max(0.0),
        quadrature_error_bound: r.error,
        alpha: c,
    })
}

/// Closed-form `Psi(f || y)` for scale families whose decoration admits
/// quadrature; `None` otherwise. Mixtures combine their components.
pub fn predict_for_spec(spec: &ProcessSpec, f: &TestFunction, y: f64) -> Result<Option<f64>> {
    match spec {
        ProcessSpec::Mixture { components } => {
            let mut total = 0.0;
            for c in components {
                match predict_for_spec(&c.process, f, y)? {
                    Some(v) => total += c.weight * v,
                    None => return Ok(None),
                }
            }
            Ok(Some(total))
        }
        _ if spec.carrier() == Carrier::Scale => {
            let (Some(alpha), Some(dec), Some(law)) = (spec.index(), spec.decoration(), spec.scale_law()) else {
                return Ok(None);
            };
            if dec.enumerate().is_none() {
                return Ok(None);
            }
            let cf = cf_quadrature(dec, f, alpha)?;
            predict_scaled_laplace(alpha, cf.c_f, &law, y).map(Some)
        }
        _ => Ok(None),
    }
}

/// Closed-form `L(f | y)` for shift families with enumerable decorations.
pub fn predict_shift_for_spec(spec: &ProcessSpec, f: &ShiftTestFunction, y: f64) -> Result<Option<f64>> {
    let (c, decoration, law) = match spec {
        ProcessSpec::Dppp { c, decoration, .. } => (*c, decoration, ShiftLaw::Deterministic { value: 0.0 }),
        ProcessSpec::SDppp {
            c, decoration, shift, ..
        } => (*c, decoration, shift.clone()),
        _ => return Ok(None),
    };
    if decoration.enumerate().is_none() {
        return Ok(None);
    }
    let k = shift_kf_quadrature(decoration, f, c)?;
    Ok(Some(predict_shift_laplace(c, k.c_f, &law, y)))
}

/// A default battery of five test functions, all supported in `{|x| >= 1}`.
pub fn builtin_battery() -> Vec<(String, TestFunction)> {
    let f = |r: Result<TestFunction>| r.expect("builtin battery functions are valid");
    vec![
        (
            "indicator_ln2".into(),
            f(TestFunction::indicator(IndicatorShape {
                level: std::f64::consts::LN_2,
                inner: 1.0,
                ramp: 1e-3,
                outer: 1e12,
                two_sided: true,
            })),
        ),
        ("tent_2".into(), f(TestFunction::tent(2.0, 1.0, 1.0))),
        ("tent_1p5_high".into(), f(TestFunction::tent(1.5, 0.5, 3.0))),
        ("tent_family_5".into(), f(TestFunction::tent_family(5, 1e12))),
        (
            "asymmetric".into(),
            f(TestFunction::from_knots(vec![
                (-3.0, 0.0),
                (-2.0, 1.0),
                (-1.2, 0.0),
                (1.2, 0.0),
                (2.0, 0.5),
                (4.0, 0.0),
            ])),
        ),
    ]
}
