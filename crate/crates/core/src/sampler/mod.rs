//! Exact sampling of the truncated stable Poisson series and of the four
//! process families on their observation windows.
//!
//! For a scale family with decoration bound `M` and realized scale `w`, the
//! series is truncated at `eta = window / (M * w)`: a Poisson point `lambda <= eta`
//! puts every decoration atom at modulus `<= window`, so the restriction to
//! `{|x| > window}` is exact. Shift families are sampled in the scale world and
//! mapped through `Log`.

mod spec;

pub use spec::{
    Carrier, DecorationSpec, LocationLaw, MixtureComponent, ProcessSpec, ScaleLaw, ShiftLaw,
    TableEntry,
};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::point_measure::{Atom, PointMeasure};
use crate::rng::SeedSpec;
use crate::transform::{self, ShiftPointMeasure};

/// Expected Poisson counts above this are refused rather than silently slow.
pub const MAX_EXPECTED_POINTS: f64 = 5.0e7;

/// The stable intensity `m_alpha` on `(0, inf)`, `m_alpha((x, inf)) = x^-alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableIntensity {
    pub alpha: f64,
}

impl StableIntensity {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid(format!("tail index must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    /// `m_alpha((x, inf))`.
    pub fn tail_mass(&self, x: f64) -> f64 {
        x.powf(-self.alpha)
    }
}

/// Per-replica truncation record: the realized scale and the series cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub scale: f64,
    pub eta: f64,
    /// Mixture component drawn for this replica, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
}

/// Poisson points of `m_alpha` above `eta`, in generation order (not sorted).
fn truncated_poisson_points<R: Rng>(alpha: f64, eta: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mean = eta.powf(-alpha);
    if !mean.is_finite() || mean > MAX_EXPECTED_POINTS {
        return Err(Error::Unsupported(format!(
            "truncation eta = {eta:e} needs {mean:e} expected points; widen the window"
        )));
    }
    let k = if mean > 0.0 {
        Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
    } else {
        0
    };
    let inv = -1.0 / alpha;
    Ok((0..k)
        // 1 - U lies in (0, 1], so the Pareto draw is finite and >= 1.
        .map(|_| eta * (1.0 - rng.random::<f64>()).powf(inv))
        .collect())
}

/// `K ~ Poisson(eta^-alpha)` points `eta * X_i` with `X_i ~ Pareto(alpha)`.
pub fn sample_truncated_poisson(
    intensity: StableIntensity,
    eta: f64,
    seed: SeedSpec,
) -> Result<PointMeasure> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(invalid(format!("truncation level must be positive, got {eta}")));
    }
    let pts = truncated_poisson_points(intensity.alpha, eta, &mut seed.rng())?;
    Ok(PointMeasure::from_valid_atoms(
        pts.into_iter()
            .map(|location| Atom {
                location,
                multiplicity: 1,
            })
            .collect(),
    ))
}

/// One realization of a scale-carrier decoration.
pub fn sample_decoration(spec: &DecorationSpec, seed: SeedSpec) -> Result<PointMeasure> {
    spec.validate(Carrier::Scale)?;
    Ok(PointMeasure::from_valid_atoms(
        spec.sample_atoms(Carrier::Scale, &mut seed.rng())?,
    ))
}

fn sample_scale_rng(spec: &ProcessSpec, rng: &mut ChaCha8Rng) -> Result<(PointMeasure, Truncation)> {
    let (alpha, decoration, window, w) = match spec {
        ProcessSpec::ScDppp {
            alpha,
            decoration,
            window,
        } => (*alpha, decoration, *window, 1.0),
        ProcessSpec::SScDppp {
            alpha,
            decoration,
            scale,
            window,
        } => (*alpha, decoration, *window, scale.sample(rng)),
        ProcessSpec::Mixture { components } => {
            let weights = WeightedIndex::new(components.iter().map(|c| c.weight))
                .map_err(|e| invalid(format!("mixture weights: {e}")))?;
            let i = weights.sample(rng);
            let (m, t) = sample_scale_rng(&components[i].process, rng)?;
            return Ok((
                m,
                Truncation {
                    component: Some(i),
                    ..t
                },
            ));
        }
        _ => {
            return Err(Error::Unsupported(
                "shift families are sampled with sample_shift_process".into(),
            ))
        }
    };
    let bound = decoration.bound(Carrier::Scale);
    if !(bound > 0.0) {
        // A decoration with no atoms: the process is empty.
        return Ok((
            PointMeasure::empty(),
            Truncation {
                scale: w,
                eta: f64::INFINITY,
                component: None,
            },
        ));
    }
    let eta = window / (bound * w);
    let lambdas = truncated_poisson_points(alpha, eta, rng)?;
    let mut atoms = Vec::new();
    for lambda in lambdas {
        let factor = lambda * w;
        for a in decoration.sample_atoms(Carrier::Scale, rng)? {
            let x = factor * a.location;
            if !x.is_finite() {
                return Err(Error::Range(format!("atom {lambda} * {w} * {} overflows", a.location)));
            }
            if x.abs() > window {
                atoms.push(Atom {
                    location: x,
                    multiplicity: a.multiplicity,
                });
            }
        }
    }
    Ok((
        PointMeasure::from_valid_atoms(atoms),
        Truncation {
            scale: w,
            eta,
            component: None,
        },
    ))
}

/// A scale-family sample restricted exactly to `{|x| > window}`, with its truncation record.
///
/// Draw order within a replica: scale `W`, Poisson count, then per point its
/// Pareto draw followed by its decoration.
pub fn sample_process_with_truncation(
    spec: &ProcessSpec,
    seed: SeedSpec,
) -> Result<(PointMeasure, Truncation)> {
    spec.validate()?;
    sample_scale_rng(spec, &mut seed.rng())
}

/// A scale-family sample restricted exactly to `{|x| > window}`.
pub fn sample_process(spec: &ProcessSpec, seed: SeedSpec) -> Result<PointMeasure> {
    sample_process_with_truncation(spec, seed).map(|(m, _)| m)
}

/// A shift-family sample restricted exactly to `{x > cutoff}`, obtained as
/// `Log` of the corresponding scale-family sample.
pub fn sample_shift_process(spec: &ProcessSpec, seed: SeedSpec) -> Result<ShiftPointMeasure> {
    spec.validate()?;
    if spec.carrier() != Carrier::Shift {
        return Err(Error::Unsupported(
            "scale families are sampled with sample_process".into(),
        ));
    }
    let image = transform::map_process_spec(spec)?;
    let m = sample_scale_rng(&image, &mut seed.rng())?.0;
    transform::log_transform(&m)
}

/// Either carrier's sample, for callers that handle both.
#[derive(Debug, Clone, PartialEq)]
pub enum Realization {
    Scale(PointMeasure),
    Shift(ShiftPointMeasure),
}

impl Realization {
    pub fn to_json_line(&self) -> String {
        match self {
            Realization::Scale(m) => m.to_json_line(),
            Realization::Shift(t) => t.to_json_line(),
        }
    }
}

/// Samples either family; the truncation record refers to the scale-world image.
pub fn sample_any(spec: &ProcessSpec, seed: SeedSpec) -> Result<(Realization, Truncation)> {
    spec.validate()?;
    match spec.carrier() {
        Carrier::Scale => {
            let (m, t) = sample_scale_rng(spec, &mut seed.rng())?;
            Ok((Realization::Scale(m), t))
        }
        Carrier::Shift => {
            let image = transform::map_process_spec(spec)?;
            let (m, t) = sample_scale_rng(&image, &mut seed.rng())?;
            Ok((Realization::Shift(transform::log_transform(&m)?), t))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn dirac(locs: &[f64]) -> DecorationSpec {
        DecorationSpec::dirac(locs)
    }

    #[test]
    fn mean_counts() {
        // mean eta^-alpha: 1 for (1, 1), 4 for (2, 0.5)
        for (alpha, eta, mean) in [(1.0, 1.0, 1.0), (2.0, 0.5, 4.0)] {
            let n = 20_000;
            let counts: Vec<f64> = (0..n)
                .map(|i| {
                    sample_truncated_poisson(StableIntensity { alpha }, eta, SeedSpec::new(3, i))
                        .unwrap()
                        .total_count() as f64
                })
                .collect();
            let (m, se) = stats::mean_and_se(&counts);
            assert!((m - mean).abs() < 4.0 * se, "alpha {alpha}: {m} +- {se}");
        }
    }

    #[test]
    fn points_lie_above_eta_with_pareto_tail() {
        let n = 100_000u64;
        let mut above = 0u64;
        let mut total = 0u64;
        for i in 0..n {
            let m = sample_truncated_poisson(StableIntensity { alpha: 1.0 }, 1.0, SeedSpec::new(11, i)).unwrap();
            for a in m.atoms() {
                assert!(a.location > 1.0);
                total += a.multiplicity as u64;
                if a.location > 2.0 {
                    above += a.multiplicity as u64;
                }
            }
        }
        let p = above as f64 / total as f64;
        let se = (0.25 / total as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * se, "{p}");
    }

    #[test]
    fn count_law_chi_square() {
        let n = 100_000u64;
        let counts: Vec<u64> = (0..n)
            .map(|i| {
                sample_truncated_poisson(StableIntensity { alpha: 2.0 }, 0.5, SeedSpec::new(5, i))
                    .unwrap()
                    .total_count()
            })
            .collect();
        let r = stats::poisson_chi_square(&counts, 4.0).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
    }

    #[test]
    fn determinism_and_stream_separation() {
        let spec = ProcessSpec::sscdppp(
            1.5,
            dirac(&[1.0, -0.3]),
            ScaleLaw::LogNormal { mu: 0.0, sigma: 0.5 },
            0.2,
        );
        let a = sample_process(&spec, SeedSpec::new(9, 4)).unwrap();
        let b = sample_process(&spec, SeedSpec::new(9, 4)).unwrap();
        assert_eq!(a.to_json_line(), b.to_json_line());
        let c = sample_process(&spec, SeedSpec::new(9, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn window_restriction_is_respected() {
        let spec = ProcessSpec::scdppp(1.0, dirac(&[1.0, -0.5]), 0.7);
        for i in 0..2000 {
            let m = sample_process(&spec, SeedSpec::new(1, i)).unwrap();
            assert!(m.atoms().iter().all(|a| a.location.abs() > 0.7));
        }
    }

    #[test]
    fn empty_probability_matches_frechet() {
        // ScDPPP(1, delta_1) on window 1: P(no atoms) = exp(-1)
        let spec = ProcessSpec::scdppp(1.0, dirac(&[1.0]), 1.0);
        let n = 100_000;
        let empties: Vec<f64> = (0..n)
            .map(|i| sample_process(&spec, SeedSpec::new(21, i)).unwrap().is_empty() as u8 as f64)
            .collect();
        let (m, se) = stats::mean_and_se(&empties);
        assert!((m - (-1.0f64).exp()).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn deterministic_scale_two() {
        // P(maxmod <= 2) = exp(-2/2)
        let spec = ProcessSpec::sscdppp(1.0, dirac(&[1.0]), ScaleLaw::Deterministic { value: 2.0 }, 1.0);
        let n = 100_000;
        let hits: Vec<f64> = (0..n)
            .map(|i| (sample_process(&spec, SeedSpec::new(22, i)).unwrap().maxmod() <= 2.0) as u8 as f64)
            .collect();
        let (m, se) = stats::mean_and_se(&hits);
        assert!((m - (-1.0f64).exp()).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn maxmod_law_ks_for_bounded_and_lognormal_scales() {
        for spec in [
            ProcessSpec::scdppp(1.0, dirac(&[1.0]), 0.05),
            ProcessSpec::sscdppp(2.0, dirac(&[1.0, -0.5]), ScaleLaw::DiscreteTable { values: vec![1.0, 2.0], probabilities: vec![0.5, 0.5] }, 0.05),
            ProcessSpec::sscdppp(1.0, dirac(&[0.8]), ScaleLaw::LogNormal { mu: 0.1, sigma: 0.4 }, 0.05),
        ] {
            let eps = spec.window().unwrap();
            let samples: Vec<f64> = (0..10_000)
                .map(|i| sample_process(&spec, SeedSpec::new(31, i)).unwrap().maxmod())
                .collect();
            // empty windows report maxmod 0: an atom of mass F(eps) at 0
            let cdf = |y: f64| if y < 0.0 { 0.0 } else { spec.maxmod_cdf(y.max(eps)).unwrap() };
            let left = |y: f64| if y <= 0.0 { 0.0 } else { cdf(y) };
            let r = stats::ks_one_sample_with_atoms(&samples, cdf, left).unwrap();
            assert!(r.statistic < 0.02, "{spec:?}: {r:?}");
        }
    }

    #[test]
    fn decoration_sampling() {
        let d = sample_decoration(&dirac(&[1.0, -0.5]), SeedSpec::new(0, 0)).unwrap();
        assert_eq!(d, PointMeasure::from_locations(&[-0.5, 1.0]).unwrap());
        let r = DecorationSpec::RandomAtoms {
            count_probabilities: vec![0.5, 0.5],
            location: LocationLaw::Fixed { value: 1.0 },
            maxmod_bound: None,
        };
        let n = 40_000;
        let twos: Vec<f64> = (0..n)
            .map(|i| {
                let m = sample_decoration(&r, SeedSpec::new(2, i)).unwrap();
                assert_eq!(m.atoms().len(), 1);
                (m.total_count() == 2) as u8 as f64
            })
            .collect();
        let (m, se) = stats::mean_and_se(&twos);
        assert!((m - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn declared_bound_violation_is_a_hard_error() {
        let bad = DecorationSpec::DiracSet {
            locations: vec![2.0],
            maxmod_bound: Some(1.0),
        };
        assert!(matches!(
            sample_decoration(&bad, SeedSpec::new(0, 0)),
            Err(Error::BoundViolation { .. })
        ));
        let spec = ProcessSpec::scdppp(1.0, bad, 0.01);
        let errs = (0..50).filter(|&i| sample_process(&spec, SeedSpec::new(0, i)).is_err()).count();
        assert!(errs > 0);
    }

    #[test]
    fn mixture_picks_one_component_per_replica() {
        let spec = ProcessSpec::Mixture {
            components: vec![
                MixtureComponent { weight: 0.5, process: ProcessSpec::scdppp(1.0, dirac(&[1.0]), 0.1) },
                MixtureComponent { weight: 0.5, process: ProcessSpec::scdppp(2.0, dirac(&[1.0]), 0.1) },
            ],
        };
        let picks: Vec<f64> = (0..4000)
            .map(|i| sample_process_with_truncation(&spec, SeedSpec::new(8, i)).unwrap().1.component.unwrap() as f64)
            .collect();
        let (m, se) = stats::mean_and_se(&picks);
        assert!((m - 0.5).abs() < 4.0 * se);
        let mismatched = ProcessSpec::Mixture {
            components: vec![
                MixtureComponent { weight: 0.5, process: ProcessSpec::scdppp(1.0, dirac(&[1.0]), 0.1) },
                MixtureComponent { weight: 0.5, process: ProcessSpec::scdppp(2.0, dirac(&[1.0]), 0.2) },
            ],
        };
        assert!(mismatched.validate().is_err());
    }

    #[test]
    fn dppp_max_is_gumbel() {
        let spec = ProcessSpec::Dppp { c: 1.0, decoration: dirac(&[0.0]), cutoff: -3.0 };
        let samples: Vec<f64> = (0..10_000)
            .map(|i| sample_shift_process(&spec, SeedSpec::new(41, i)).unwrap().max().unwrap_or(-3.0))
            .collect();
        let g = |u: f64| if u < -3.0 { 0.0 } else { (-(-u).exp()).exp() };
        let left = |u: f64| if u <= -3.0 { 0.0 } else { g(u) };
        let r = stats::ks_one_sample_with_atoms(&samples, g, left).unwrap();
        assert!(r.statistic < 0.02, "{r:?}");
    }

    #[test]
    fn unsupported_family_dispatch() {
        let shift = ProcessSpec::Dppp { c: 1.0, decoration: dirac(&[0.0]), cutoff: 0.0 };
        assert!(matches!(sample_process(&shift, SeedSpec::new(0, 0)), Err(Error::Unsupported(_))));
        let scale = ProcessSpec::scdppp(1.0, dirac(&[1.0]), 1.0);
        assert!(sample_shift_process(&scale, SeedSpec::new(0, 0)).is_err());
        let tiny = ProcessSpec::scdppp(2.0, dirac(&[1.0]), 1e-6);
        assert!(matches!(sample_process(&tiny, SeedSpec::new(0, 0)), Err(Error::Unsupported(_))));
    }
}
