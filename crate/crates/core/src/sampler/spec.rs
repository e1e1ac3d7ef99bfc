//! Declarative descriptions of decorations, random scales/shifts and the
//! process families, with the JSON schema used by the command-line tool.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::point_measure::{canonicalize, validate_raw, Atom};
use crate::quadrature;

fn check_probabilities(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(invalid(format!("{what}: empty probability vector")));
    }
    if p.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(invalid(format!("{what}: probabilities must be finite and nonnegative")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("{what}: probabilities sum to {s}, not 1")));
    }
    Ok(())
}

fn weighted_index(p: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(p.iter().copied()).expect("probabilities validated")
}

/// Which line an object lives on: the punctured line (scale world) or the
/// real line with `-inf` removed (shift world).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Carrier {
    Scale,
    Shift,
}

/// Law of the location of a single decoration atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum LocationLaw {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `exp(Uniform(ln lo, ln hi))`, positive.
    LogUniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probabilities: Vec<f64> },
}

impl LocationLaw {
    fn validate(&self, carrier: Carrier) -> Result<()> {
        let nonzero = |x: f64| carrier == Carrier::Shift || x != 0.0;
        match self {
            LocationLaw::Fixed { value } => {
                if !value.is_finite() || !nonzero(*value) {
                    return Err(invalid(format!("fixed location {value} not allowed")));
                }
            }
            LocationLaw::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(invalid("uniform location law needs finite lo < hi"));
                }
                if carrier == Carrier::Scale && *lo <= 0.0 && *hi >= 0.0 {
                    return Err(invalid("uniform location law must exclude 0 on the punctured line"));
                }
            }
            LocationLaw::LogUniform { lo, hi } => {
                if !(*lo > 0.0 && hi.is_finite() && lo < hi) {
                    return Err(invalid("log-uniform location law needs 0 < lo < hi < inf"));
                }
            }
            LocationLaw::Discrete {
                values,
                probabilities,
            } => {
                if values.len() != probabilities.len() {
                    return Err(invalid("discrete location law: values/probabilities length mismatch"));
                }
                check_probabilities(probabilities, "discrete location law")?;
                if values.iter().any(|&v| !v.is_finite() || !nonzero(v)) {
                    return Err(invalid("discrete location law has a forbidden value"));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            LocationLaw::Fixed { value } => *value,
            LocationLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            LocationLaw::LogUniform { lo, hi } => {
                (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
            }
            LocationLaw::Discrete {
                values,
                probabilities,
            } => values[weighted_index(probabilities).sample(rng)],
        }
    }

    /// `[min, max]` of the support.
    fn range(&self) -> (f64, f64) {
        match self {
            LocationLaw::Fixed { value } => (*value, *value),
            LocationLaw::Uniform { lo, hi } | LocationLaw::LogUniform { lo, hi } => (*lo, *hi),
            LocationLaw::Discrete { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        }
    }

    fn max_abs(&self) -> f64 {
        let (lo, hi) = self.range();
        lo.abs().max(hi.abs())
    }

    fn map_exp(&self) -> Result<Self> {
        Ok(match self {
            LocationLaw::Fixed { value } => LocationLaw::Fixed { value: value.exp() },
            LocationLaw::Uniform { lo, hi } => LocationLaw::LogUniform {
                lo: lo.exp(),
                hi: hi.exp(),
            },
            LocationLaw::LogUniform { .. } => {
                return Err(Error::Unsupported(
                    "Exp image of a log-uniform location law is not a supported law".into(),
                ))
            }
            LocationLaw::Discrete {
                values,
                probabilities,
            } => LocationLaw::Discrete {
                values: values.iter().map(|v| v.exp()).collect(),
                probabilities: probabilities.clone(),
            },
        })
    }

    fn map_log(&self) -> Result<Self> {
        let (lo, _) = self.range();
        if lo <= 0.0 {
            return Err(Error::Unsupported(
                "Log image needs strictly positive decoration atoms".into(),
            ));
        }
        Ok(match self {
            LocationLaw::Fixed { value } => LocationLaw::Fixed { value: value.ln() },
            LocationLaw::LogUniform { lo, hi } => LocationLaw::Uniform {
                lo: lo.ln(),
                hi: hi.ln(),
            },
            LocationLaw::Uniform { .. } => {
                return Err(Error::Unsupported(
                    "Log image of a uniform location law is not a supported law".into(),
                ))
            }
            LocationLaw::Discrete {
                values,
                probabilities,
            } => LocationLaw::Discrete {
                values: values.iter().map(|v| v.ln()).collect(),
                probabilities: probabilities.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub atoms: Vec<(f64, u32)>,
    pub probability: f64,
}

/// Law of the decoration `P`.
///
/// On the scale carrier `maxmod_bound` is an almost-sure bound on `maxmod(P)`;
/// on the shift carrier it bounds the largest atom. When omitted it is derived
/// from the law's support. Declared bounds are checked on every realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecorationSpec {
    DiracSet {
        locations: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        maxmod_bound: Option<f64>,
    },
    /// `count_probabilities[k - 1] = P(#atoms = k)`, atoms i.i.d. from `location`.
    RandomAtoms {
        count_probabilities: Vec<f64>,
        location: LocationLaw,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        maxmod_bound: Option<f64>,
    },
    UserTable {
        entries: Vec<TableEntry>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        maxmod_bound: Option<f64>,
    },
}

impl DecorationSpec {
    pub fn dirac(locations: &[f64]) -> Self {
        DecorationSpec::DiracSet {
            locations: locations.to_vec(),
            maxmod_bound: None,
        }
    }

    fn declared_bound(&self) -> Option<f64> {
        match self {
            DecorationSpec::DiracSet { maxmod_bound, .. }
            | DecorationSpec::RandomAtoms { maxmod_bound, .. }
            | DecorationSpec::UserTable { maxmod_bound, .. } => *maxmod_bound,
        }
    }

    fn with_declared_bound(mut self, bound: Option<f64>) -> Self {
        match &mut self {
            DecorationSpec::DiracSet { maxmod_bound, .. }
            | DecorationSpec::RandomAtoms { maxmod_bound, .. }
            | DecorationSpec::UserTable { maxmod_bound, .. } => *maxmod_bound = bound,
        }
        self
    }

    pub fn validate(&self, carrier: Carrier) -> Result<()> {
        let allow_zero = carrier == Carrier::Shift;
        match self {
            DecorationSpec::DiracSet { locations, .. } => {
                validate_raw(&locations.iter().map(|&x| (x, 1)).collect::<Vec<_>>(), allow_zero)?;
            }
            DecorationSpec::RandomAtoms {
                count_probabilities,
                location,
                ..
            } => {
                check_probabilities(count_probabilities, "atom-count law")?;
                location.validate(carrier)?;
            }
            DecorationSpec::UserTable { entries, .. } => {
                if entries.is_empty() {
                    return Err(invalid("user table decoration has no entries"));
                }
                for e in entries {
                    validate_raw(&e.atoms, allow_zero)?;
                }
                check_probabilities(
                    &entries.iter().map(|e| e.probability).collect::<Vec<_>>(),
                    "user table",
                )?;
            }
        }
        if let Some(b) = self.declared_bound() {
            let ok = match carrier {
                Carrier::Scale => b.is_finite() && b > 0.0,
                Carrier::Shift => b.is_finite(),
            };
            if !ok {
                return Err(invalid(format!("declared decoration bound {b} is not valid")));
            }
        }
        Ok(())
    }

    /// Largest value the bounded statistic (maxmod on the scale carrier, max on
    /// the shift carrier) can take according to the law's support.
    fn derived_bound(&self, carrier: Carrier) -> f64 {
        let stat = |x: f64| match carrier {
            Carrier::Scale => x.abs(),
            Carrier::Shift => x,
        };
        let fold = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
        match self {
            DecorationSpec::DiracSet { locations, .. } => fold(&mut locations.iter().map(|&x| stat(x))),
            DecorationSpec::RandomAtoms { location, .. } => match carrier {
                Carrier::Scale => location.max_abs(),
                Carrier::Shift => location.range().1,
            },
            DecorationSpec::UserTable { entries, .. } => {
                fold(&mut entries.iter().flat_map(|e| e.atoms.iter().map(|a| stat(a.0))))
            }
        }
    }

    /// The bound used for truncation: the declared one if present, else derived.
    pub fn bound(&self, carrier: Carrier) -> f64 {
        self.declared_bound()
            .unwrap_or_else(|| self.derived_bound(carrier))
    }

    /// Draws one realization as raw canonical atoms, checking the bound.
    pub(crate) fn sample_atoms<R: Rng>(&self, carrier: Carrier, rng: &mut R) -> Result<Vec<Atom>> {
        let raw: Vec<Atom> = match self {
            DecorationSpec::DiracSet { locations, .. } => locations
                .iter()
                .map(|&location| Atom {
                    location,
                    multiplicity: 1,
                })
                .collect(),
            DecorationSpec::RandomAtoms {
                count_probabilities,
                location,
                ..
            } => {
                let k = weighted_index(count_probabilities).sample(rng) + 1;
                (0..k)
                    .map(|_| Atom {
                        location: location.sample(rng),
                        multiplicity: 1,
                    })
                    .collect()
            }
            DecorationSpec::UserTable { entries, .. } => {
                let p: Vec<f64> = entries.iter().map(|e| e.probability).collect();
                let e = &entries[weighted_index(&p).sample(rng)];
                e.atoms
                    .iter()
                    .map(|&(location, multiplicity)| Atom {
                        location,
                        multiplicity,
                    })
                    .collect()
            }
        };
        if let Some(bound) = self.declared_bound() {
            let realized = match carrier {
                Carrier::Scale => raw.iter().map(|a| a.location.abs()).fold(0.0, f64::max),
                Carrier::Shift => raw
                    .iter()
                    .map(|a| a.location)
                    .fold(f64::NEG_INFINITY, f64::max),
            };
            if realized > bound {
                return Err(Error::BoundViolation { realized, bound });
            }
        }
        Ok(canonicalize(raw))
    }

    /// For decorations with finitely many equally-describable realizations:
    /// the list of `(atoms, probability)`.
    pub fn enumerate(&self) -> Option<Vec<(Vec<Atom>, f64)>> {
        match self {
            DecorationSpec::DiracSet { locations, .. } => Some(vec![(
                canonicalize(
                    locations
                        .iter()
                        .map(|&location| Atom {
                            location,
                            multiplicity: 1,
                        })
                        .collect(),
                ),
                1.0,
            )]),
            DecorationSpec::UserTable { entries, .. } => Some(
                entries
                    .iter()
                    .map(|e| {
                        (
                            canonicalize(
                                e.atoms
                                    .iter()
                                    .map(|&(location, multiplicity)| Atom {
                                        location,
                                        multiplicity,
                                    })
                                    .collect(),
                            ),
                            e.probability,
                        )
                    })
                    .collect(),
            ),
            DecorationSpec::RandomAtoms { .. } => None,
        }
    }

    /// `E[maxmod(P)^alpha]` when available in closed form.
    pub fn maxmod_moment(&self, alpha: f64) -> Option<f64> {
        let mm = |atoms: &[Atom]| atoms.iter().map(|a| a.location.abs()).fold(0.0, f64::max);
        if let Some(table) = self.enumerate() {
            return Some(table.iter().map(|(a, p)| p * mm(a).powf(alpha)).sum());
        }
        match self {
            DecorationSpec::RandomAtoms {
                count_probabilities,
                location,
                ..
            } => match location {
                LocationLaw::Fixed { value } => Some(value.abs().powf(alpha)),
                LocationLaw::Discrete {
                    values,
                    probabilities,
                } => {
                    // P(max |X_i| <= m) for k i.i.d. draws, summed over distinct |values|.
                    let mut levels: Vec<(f64, f64)> = values
                        .iter()
                        .zip(probabilities)
                        .map(|(v, p)| (v.abs(), *p))
                        .collect();
                    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let mut moment = 0.0;
                    let mut cdf_prev = 0.0;
                    let mut i = 0;
                    while i < levels.len() {
                        let m = levels[i].0;
                        let mut cdf = cdf_prev;
                        while i < levels.len() && levels[i].0 == m {
                            cdf += levels[i].1;
                            i += 1;
                        }
                        let mass: f64 = count_probabilities
                            .iter()
                            .enumerate()
                            .map(|(j, pk)| {
                                let k = (j + 1) as i32;
                                pk * (cdf.powi(k) - cdf_prev.powi(k))
                            })
                            .sum();
                        moment += mass * m.powf(alpha);
                        cdf_prev = cdf;
                    }
                    Some(moment)
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// Atomwise `exp`: a shift-carrier decoration to its scale-carrier image.
    pub fn map_exp(&self) -> Result<Self> {
        let bound = self.declared_bound().map(f64::exp);
        let mapped = match self {
            DecorationSpec::DiracSet { locations, .. } => DecorationSpec::DiracSet {
                locations: locations.iter().map(|x| x.exp()).collect(),
                maxmod_bound: None,
            },
            DecorationSpec::RandomAtoms {
                count_probabilities,
                location,
                ..
            } => DecorationSpec::RandomAtoms {
                count_probabilities: count_probabilities.clone(),
                location: location.map_exp()?,
                maxmod_bound: None,
            },
            DecorationSpec::UserTable { entries, .. } => DecorationSpec::UserTable {
                entries: entries
                    .iter()
                    .map(|e| TableEntry {
                        atoms: e.atoms.iter().map(|&(x, m)| (x.exp(), m)).collect(),
                        probability: e.probability,
                    })
                    .collect(),
                maxmod_bound: None,
            },
        };
        Ok(mapped.with_declared_bound(bound))
    }

    /// Atomwise `ln`: a positive scale-carrier decoration to its shift-carrier image.
    pub fn map_log(&self) -> Result<Self> {
        let positive = |x: f64| {
            if x > 0.0 {
                Ok(x.ln())
            } else {
                Err(Error::Unsupported(format!(
                    "decoration atom {x} has no Log image (shift world is one-sided)"
                )))
            }
        };
        let bound = self.declared_bound().map(f64::ln);
        let mapped = match self {
            DecorationSpec::DiracSet { locations, .. } => DecorationSpec::DiracSet {
                locations: locations.iter().map(|&x| positive(x)).collect::<Result<_>>()?,
                maxmod_bound: None,
            },
            DecorationSpec::RandomAtoms {
                count_probabilities,
                location,
                ..
            } => DecorationSpec::RandomAtoms {
                count_probabilities: count_probabilities.clone(),
                location: location.map_log()?,
                maxmod_bound: None,
            },
            DecorationSpec::UserTable { entries, .. } => DecorationSpec::UserTable {
                entries: entries
                    .iter()
                    .map(|e| {
                        Ok(TableEntry {
                            atoms: e
                                .atoms
                                .iter()
                                .map(|&(x, m)| Ok((positive(x)?, m)))
                                .collect::<Result<_>>()?,
                            probability: e.probability,
                        })
                    })
                    .collect::<Result<_>>()?,
                maxmod_bound: None,
            },
        };
        Ok(mapped.with_declared_bound(bound))
    }
}

/// Law of the random scale `W` (scale world).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleLaw {
    Deterministic { value: f64 },
    LogNormal { mu: f64, sigma: f64 },
    DiscreteTable { values: Vec<f64>, probabilities: Vec<f64> },
}

/// Law of the random shift `U` (shift world).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShiftLaw {
    Deterministic { value: f64 },
    Normal { mu: f64, sigma: f64 },
    DiscreteTable { values: Vec<f64>, probabilities: Vec<f64> },
}

impl ScaleLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScaleLaw::Deterministic { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(invalid(format!("deterministic scale {value} must be positive")));
                }
            }
            ScaleLaw::LogNormal { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && *sigma >= 0.0) {
                    return Err(invalid("log-normal scale needs finite mu and sigma >= 0"));
                }
            }
            ScaleLaw::DiscreteTable {
                values,
                probabilities,
            } => {
                if values.len() != probabilities.len() {
                    return Err(invalid("scale table: values/probabilities length mismatch"));
                }
                check_probabilities(probabilities, "scale table")?;
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(invalid("scale table values must be positive and finite"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ScaleLaw::Deterministic { value } => *value,
            ScaleLaw::LogNormal { mu, sigma } => {
                if *sigma == 0.0 {
                    mu.exp()
                } else {
                    LogNormal::new(*mu, *sigma).expect("validated").sample(rng)
                }
            }
            ScaleLaw::DiscreteTable {
                values,
                probabilities,
            } => values[weighted_index(probabilities).sample(rng)],
        }
    }

    /// `E[h(W)]` for `|h| <= 1`, exact for finite laws and by quadrature otherwise.
    pub fn expect(&self, h: impl Fn(f64) -> f64) -> f64 {
        match self {
            ScaleLaw::Deterministic { value } => h(*value),
            ScaleLaw::DiscreteTable {
                values,
                probabilities,
            } => values.iter().zip(probabilities).map(|(v, p)| p * h(*v)).sum(),
            ScaleLaw::LogNormal { mu, sigma } => {
                quadrature::normal_expectation(|z| h((mu + sigma * z).exp()), 1e-12)
                    .expect("finite bounds")
                    .value
            }
        }
    }

    /// `E[W^alpha]`.
    pub fn moment(&self, alpha: f64) -> f64 {
        match self {
            ScaleLaw::LogNormal { mu, sigma } => (alpha * mu + 0.5 * alpha * alpha * sigma * sigma).exp(),
            _ => self.expect(|w| w.powf(alpha)),
        }
    }

    /// An almost-sure upper bound when the law is bounded.
    pub fn upper_bound(&self) -> Option<f64> {
        match self {
            ScaleLaw::Deterministic { value } => Some(*value),
            ScaleLaw::DiscreteTable { values, .. } => Some(values.iter().copied().fold(0.0, f64::max)),
            ScaleLaw::LogNormal { sigma, mu } => (*sigma == 0.0).then(|| mu.exp()),
        }
    }

    /// The law of `ln W + offset`.
    pub fn to_shift(&self, offset: f64) -> ShiftLaw {
        match self {
            ScaleLaw::Deterministic { value } => ShiftLaw::Deterministic {
                value: value.ln() + offset,
            },
            ScaleLaw::LogNormal { mu, sigma } => ShiftLaw::Normal {
                mu: mu + offset,
                sigma: *sigma,
            },
            ScaleLaw::DiscreteTable {
                values,
                probabilities,
            } => ShiftLaw::DiscreteTable {
                values: values.iter().map(|v| v.ln() + offset).collect(),
                probabilities: probabilities.clone(),
            },
        }
    }
}

impl ShiftLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ShiftLaw::Deterministic { value } => {
                if !value.is_finite() {
                    return Err(invalid("deterministic shift must be finite"));
                }
            }
            ShiftLaw::Normal { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && *sigma >= 0.0) {
                    return Err(invalid("normal shift needs finite mu and sigma >= 0"));
                }
            }
            ShiftLaw::DiscreteTable {
                values,
                probabilities,
            } => {
                if values.len() != probabilities.len() {
                    return Err(invalid("shift table: values/probabilities length mismatch"));
                }
                check_probabilities(probabilities, "shift table")?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("shift table values must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ShiftLaw::Deterministic { value } => *value,
            ShiftLaw::Normal { mu, sigma } => {
                if *sigma == 0.0 {
                    *mu
                } else {
                    Normal::new(*mu, *sigma).expect("validated").sample(rng)
                }
            }
            ShiftLaw::DiscreteTable {
                values,
                probabilities,
            } => values[weighted_index(probabilities).sample(rng)],
        }
    }

    /// `E[h(U)]` for `|h| <= 1`.
    pub fn expect(&self, h: impl Fn(f64) -> f64) -> f64 {
        match self {
            ShiftLaw::Deterministic { value } => h(*value),
            ShiftLaw::DiscreteTable {
                values,
                probabilities,
            } => values.iter().zip(probabilities).map(|(v, p)| p * h(*v)).sum(),
            ShiftLaw::Normal { mu, sigma } => {
                quadrature::normal_expectation(|z| h(mu + sigma * z), 1e-12)
                    .expect("finite bounds")
                    .value
            }
        }
    }

    /// The law of `exp(U - offset)`.
    pub fn to_scale(&self, offset: f64) -> ScaleLaw {
        match self {
            ShiftLaw::Deterministic { value } => ScaleLaw::Deterministic {
                value: (value - offset).exp(),
            },
            ShiftLaw::Normal { mu, sigma } => ScaleLaw::LogNormal {
                mu: mu - offset,
                sigma: *sigma,
            },
            ShiftLaw::DiscreteTable {
                values,
                probabilities,
            } => ScaleLaw::DiscreteTable {
                values: values.iter().map(|v| (v - offset).exp()).collect(),
                probabilities: probabilities.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub process: ProcessSpec,
}

/// One of the process families, with its observation window.
///
/// Scale families are observed exactly on `{|x| > window}`; shift families on
/// `{x > cutoff}`. Shift families use Poisson intensity `exp(-c x) dx`.
/// `Mixture` picks one component per replica (used for negative controls).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum ProcessSpec {
    #[serde(rename = "ScDPPP")]
    ScDppp {
        alpha: f64,
        decoration: DecorationSpec,
        window: f64,
    },
    #[serde(rename = "SScDPPP")]
    SScDppp {
        alpha: f64,
        decoration: DecorationSpec,
        scale: ScaleLaw,
        window: f64,
    },
    #[serde(rename = "DPPP")]
    Dppp {
        c: f64,
        decoration: DecorationSpec,
        cutoff: f64,
    },
    #[serde(rename = "SDPPP")]
    SDppp {
        c: f64,
        decoration: DecorationSpec,
        shift: ShiftLaw,
        cutoff: f64,
    },
    #[serde(rename = "mixture")]
    Mixture { components: Vec<MixtureComponent> },
}

impl ProcessSpec {
    pub fn scdppp(alpha: f64, decoration: DecorationSpec, window: f64) -> Self {
        ProcessSpec::ScDppp {
            alpha,
            decoration,
            window,
        }
    }

    pub fn sscdppp(alpha: f64, decoration: DecorationSpec, scale: ScaleLaw, window: f64) -> Self {
        ProcessSpec::SScDppp {
            alpha,
            decoration,
            scale,
            window,
        }
    }

    pub fn carrier(&self) -> Carrier {
        match self {
            ProcessSpec::ScDppp { .. } | ProcessSpec::SScDppp { .. } => Carrier::Scale,
            ProcessSpec::Dppp { .. } | ProcessSpec::SDppp { .. } => Carrier::Shift,
            ProcessSpec::Mixture { components } => components
                .first()
                .map(|c| c.process.carrier())
                .unwrap_or(Carrier::Scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{what} must be positive and finite, got {x}")))
            }
        };
        match self {
            ProcessSpec::ScDppp {
                alpha,
                decoration,
                window,
            } => {
                positive(*alpha, "alpha")?;
                positive(*window, "window")?;
                decoration.validate(Carrier::Scale)
            }
            ProcessSpec::SScDppp {
                alpha,
                decoration,
                scale,
                window,
            } => {
                positive(*alpha, "alpha")?;
                positive(*window, "window")?;
                scale.validate()?;
                decoration.validate(Carrier::Scale)
            }
            ProcessSpec::Dppp {
                c,
                decoration,
                cutoff,
            } => {
                positive(*c, "c")?;
                if !cutoff.is_finite() {
                    return Err(invalid("cutoff must be finite"));
                }
                decoration.validate(Carrier::Shift)
            }
            ProcessSpec::SDppp {
                c,
                decoration,
                shift,
                cutoff,
            } => {
                positive(*c, "c")?;
                if !cutoff.is_finite() {
                    return Err(invalid("cutoff must be finite"));
                }
                shift.validate()?;
                decoration.validate(Carrier::Shift)
            }
            ProcessSpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(invalid("mixture needs at least one component"));
                }
                check_probabilities(
                    &components.iter().map(|c| c.weight).collect::<Vec<_>>(),
                    "mixture weights",
                )?;
                let carrier = components[0].process.carrier();
                for c in components {
                    if matches!(c.process, ProcessSpec::Mixture { .. }) {
                        return Err(invalid("nested mixtures are not supported"));
                    }
                    if c.process.carrier() != carrier {
                        return Err(invalid("mixture components must share a carrier"));
                    }
                    c.process.validate()?;
                }
                let w0 = components[0].process.window().or(components[0].process.cutoff());
                if components
                    .iter()
                    .any(|c| c.process.window().or(c.process.cutoff()) != w0)
                {
                    return Err(invalid("mixture components must share one observation window"));
                }
                Ok(())
            }
        }
    }

    /// Inner radius of the exactly sampled window (scale families).
    pub fn window(&self) -> Option<f64> {
        match self {
            ProcessSpec::ScDppp { window, .. } | ProcessSpec::SScDppp { window, .. } => Some(*window),
            ProcessSpec::Mixture { components } if self.carrier() == Carrier::Scale => components
                .iter()
                .filter_map(|c| c.process.window())
                .reduce(f64::max),
            _ => None,
        }
    }

    /// Lower cutoff of the exactly sampled region (shift families).
    pub fn cutoff(&self) -> Option<f64> {
        match self {
            ProcessSpec::Dppp { cutoff, .. } | ProcessSpec::SDppp { cutoff, .. } => Some(*cutoff),
            ProcessSpec::Mixture { components } if self.carrier() == Carrier::Shift => components
                .iter()
                .filter_map(|c| c.process.cutoff())
                .reduce(f64::max),
            _ => None,
        }
    }

    /// Tail index `alpha` (scale) or `c` (shift); `None` for mixtures.
    pub fn index(&self) -> Option<f64> {
        match self {
            ProcessSpec::ScDppp { alpha, .. } | ProcessSpec::SScDppp { alpha, .. } => Some(*alpha),
            ProcessSpec::Dppp { c, .. } | ProcessSpec::SDppp { c, .. } => Some(*c),
            ProcessSpec::Mixture { .. } => None,
        }
    }

    pub fn decoration(&self) -> Option<&DecorationSpec> {
        match self {
            ProcessSpec::ScDppp { decoration, .. }
            | ProcessSpec::SScDppp { decoration, .. }
            | ProcessSpec::Dppp { decoration, .. }
            | ProcessSpec::SDppp { decoration, .. } => Some(decoration),
            ProcessSpec::Mixture { .. } => None,
        }
    }

    /// The random scale of a scale family (`W = 1` for ScDPPP).
    pub fn scale_law(&self) -> Option<ScaleLaw> {
        match self {
            ProcessSpec::ScDppp { .. } => Some(ScaleLaw::Deterministic { value: 1.0 }),
            ProcessSpec::SScDppp { scale, .. } => Some(scale.clone()),
            _ => None,
        }
    }

    /// Same process observed on a different window (scale) or cutoff (shift).
    pub fn with_window(&self, new: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            ProcessSpec::ScDppp { window, .. } | ProcessSpec::SScDppp { window, .. } => *window = new,
            ProcessSpec::Dppp { cutoff, .. } | ProcessSpec::SDppp { cutoff, .. } => *cutoff = new,
            ProcessSpec::Mixture { components } => {
                for c in components {
                    c.process = c.process.with_window(new);
                }
            }
        }
        s
    }

    /// `E[(W * maxmod(P))^alpha]`, the constant in the maxmod law
    /// `P(maxmod <= y) = E_W exp(-y^-alpha W^alpha E[maxmod(P)^alpha])`.
    pub fn maxmod_constant(&self) -> Option<f64> {
        let alpha = self.index()?;
        if self.carrier() != Carrier::Scale {
            return None;
        }
        let m = self.decoration()?.maxmod_moment(alpha)?;
        Some(m * self.scale_law()?.moment(alpha))
    }

    /// Analytic `P(maxmod(N) <= y)` for scale families with closed-form decorations.
    pub fn maxmod_cdf(&self, y: f64) -> Option<f64> {
        match self {
            ProcessSpec::Mixture { components } => components
                .iter()
                .map(|c| c.process.maxmod_cdf(y).map(|v| v * c.weight))
                .sum(),
            _ => {
                let alpha = self.index()?;
                if self.carrier() != Carrier::Scale {
                    return None;
                }
                let m = self.decoration()?.maxmod_moment(alpha)?;
                if y <= 0.0 {
                    return Some(if m == 0.0 { 1.0 } else { 0.0 });
                }
                let law = self.scale_law()?;
                Some(law.expect(|w| (-(y.powf(-alpha)) * w.powf(alpha) * m).exp()))
            }
        }
    }
}
