//! The Exp/Log dictionary between the scale world (punctured line) and the
//! shift world (real line).
//!
//! Measures map atomwise. Test functions map by composition, `u -> u o exp`
//! and `f -> f o ln`, and are re-knotted so the piecewise-linear result stays
//! within a declared sup-norm tolerance of the exact composition. Process
//! specifications map with the intensity normalization described at
//! [`normalization_shift`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::point_measure::{canonicalize, validate_raw, Atom, AtomsWire, PiecewiseLinear, PointMeasure, TestFunction};
use crate::sampler::{MixtureComponent, ProcessSpec, ScaleLaw, ShiftLaw};

/// Per-direction re-knotting tolerance; a roundtrip stays within twice this.
pub const DEFAULT_TRANSFORM_TOL: f64 = 5e-7;

const MAX_PIECES: usize = 1 << 20;

/// A finite point measure on the real line (0 allowed, no mass at `-inf`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "AtomsWire", into = "AtomsWire")]
pub struct ShiftPointMeasure {
    atoms: Vec<Atom>,
}

impl TryFrom<AtomsWire> for ShiftPointMeasure {
    type Error = Error;
    fn try_from(w: AtomsWire) -> Result<Self> {
        ShiftPointMeasure::new(w.atoms)
    }
}

impl From<ShiftPointMeasure> for AtomsWire {
    fn from(m: ShiftPointMeasure) -> Self {
        AtomsWire {
            atoms: m.atoms.iter().map(|a| (a.location, a.multiplicity)).collect(),
        }
    }
}

impl ShiftPointMeasure {
    pub fn new(atoms: impl IntoIterator<Item = (f64, u32)>) -> Result<Self> {
        let raw: Vec<(f64, u32)> = atoms.into_iter().collect();
        Ok(Self {
            atoms: canonicalize(validate_raw(&raw, true)?),
        })
    }

    pub fn from_locations(locations: &[f64]) -> Result<Self> {
        Self::new(locations.iter().map(|&x| (x, 1)))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.atoms.iter().map(|a| a.multiplicity as u64).sum()
    }

    /// Largest location; `None` for the empty measure.
    pub fn max(&self) -> Option<f64> {
        self.atoms.last().map(|a| a.location)
    }

    /// `theta_x t`: every location translated by `x`.
    pub fn shift(&self, x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(invalid(format!("shift must be finite, got {x}")));
        }
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|a| Atom {
                location: a.location + x,
                multiplicity: a.multiplicity,
            })
            .collect();
        if atoms.iter().any(|a| !a.location.is_finite()) {
            return Err(Error::Range(format!("shift by {x} overflowed")));
        }
        Ok(Self {
            atoms: canonicalize(atoms),
        })
    }

    pub fn superpose(&self, other: &ShiftPointMeasure) -> ShiftPointMeasure {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self {
            atoms: canonicalize(atoms),
        }
    }

    /// Restriction to `{x > cutoff}`.
    pub fn restrict_above(&self, cutoff: f64) -> ShiftPointMeasure {
        Self {
            atoms: self.atoms.iter().copied().filter(|a| a.location > cutoff).collect(),
        }
    }

    pub fn integrate(&self, f: &ShiftTestFunction) -> f64 {
        self.integrate_with(|x| f.eval(x))
    }

    pub fn integrate_with(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.multiplicity as f64 * f(a.location))
            .sum()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("shift point measure serializes")
    }
}

/// A nonnegative continuous piecewise-linear function with compact support on
/// the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTestFunction {
    shape: PiecewiseLinear,
}

impl ShiftTestFunction {
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self {
            shape: PiecewiseLinear::new(knots)?,
        })
    }

    pub fn zero() -> Self {
        Self {
            shape: PiecewiseLinear::default(),
        }
    }

    /// Approximant of `level * 1{x > inner}`: ramp of width `ramp`, plateau to
    /// `outer`, back to 0 at `outer + ramp`.
    pub fn indicator(level: f64, inner: f64, ramp: f64, outer: f64) -> Result<Self> {
        if !(ramp > 0.0 && outer > inner + ramp) {
            return Err(invalid("shift indicator needs ramp > 0 and inner + ramp < outer"));
        }
        Self::from_knots(vec![
            (inner, 0.0),
            (inner + ramp, level),
            (outer, level),
            (outer + ramp, 0.0),
        ])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.shape.eval(x)
    }

    pub fn shape(&self) -> &PiecewiseLinear {
        &self.shape
    }

    pub fn is_zero(&self) -> bool {
        self.shape.is_zero()
    }

    /// `[lo, hi]` hull of the positive set.
    pub fn support_hull(&self) -> Option<(f64, f64)> {
        self.shape.support_hull()
    }

    /// `x -> f(x - y)`: knots moved right by `y`.
    pub fn translated(&self, y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(invalid("translation must be finite"));
        }
        Ok(Self {
            shape: self.shape.map_locations(|x| x + y)?,
        })
    }
}

/// Atomwise `exp`.
pub fn exp_transform(t: &ShiftPointMeasure) -> Result<PointMeasure> {
    let mut atoms = Vec::with_capacity(t.atoms.len());
    for a in &t.atoms {
        let location = a.location.exp();
        if !location.is_finite() || location == 0.0 {
            return Err(Error::Range(format!("exp({}) is not representable", a.location)));
        }
        atoms.push(Atom {
            location,
            multiplicity: a.multiplicity,
        });
    }
    Ok(PointMeasure::from_valid_atoms(atoms))
}

/// Atomwise `ln`; every atom must be positive.
pub fn log_transform(n: &PointMeasure) -> Result<ShiftPointMeasure> {
    let mut atoms = Vec::with_capacity(n.atoms().len());
    for a in n.atoms() {
        if a.location <= 0.0 {
            return Err(Error::DomainViolation(format!(
                "atom {} has no logarithm",
                a.location
            )));
        }
        atoms.push(Atom {
            location: a.location.ln(),
            multiplicity: a.multiplicity,
        });
    }
    Ok(ShiftPointMeasure {
        atoms: canonicalize(atoms),
    })
}

/// `max_s |chord(s) - e^s|` on `[a, b]`.
fn exp_chord_deviation(a: f64, b: f64) -> f64 {
    let h = b - a;
    // q = (e^h - 1)/h = 1 + r; deviation = e^a ((1 + r) ln(1 + r) - r)
    let r = (h.exp_m1() - h) / h;
    let d = (1.0 + r) * r.ln_1p() - r;
    a.exp() * d.max(0.0)
}

/// `max_x |ln x - chord(x)|` on `[p, q]`, `0 < p < q`.
fn log_chord_deviation(p: f64, q: f64) -> f64 {
    let rho = q / p;
    let z = (rho - 1.0) / rho.ln();
    (z.ln() - 1.0 + 1.0 / z).max(0.0)
}

/// Subdivides `[lo, hi]` by bisection until `dev(piece) <= tol`, pushing the
/// interior break points (in increasing order) into `out`.
fn refine(lo: f64, hi: f64, dev: &dyn Fn(f64, f64) -> f64, tol: f64, out: &mut Vec<f64>) -> Result<()> {
    let mut stack = vec![(lo, hi)];
    let mut done: Vec<(f64, f64)> = Vec::new();
    while let Some((a, b)) = stack.pop() {
        if dev(a, b) <= tol {
            done.push((a, b));
            continue;
        }
        let m = 0.5 * (a + b);
        if !(m > a && m < b) || done.len() + stack.len() > MAX_PIECES {
            return Err(Error::Range(
                "re-knotting did not reach the requested tolerance".into(),
            ));
        }
        // right half first so the left half is processed first
        stack.push((m, b));
        stack.push((a, m));
    }
    out.extend(done.iter().skip(1).map(|p| p.0));
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid("transform tolerance must be positive"));
    }
    Ok(())
}

/// `u o exp` as a shift-carrier function, exact at the mapped knots and within
/// `tol` of the composition everywhere. `u` must vanish on `(-inf, 0]`.
pub fn function_transform(u: &TestFunction, tol: f64) -> Result<ShiftTestFunction> {
    check_tol(tol)?;
    let knots = u.shape().knots();
    for w in knots.windows(2) {
        if w[0].0 <= 0.0 && (w[0].1 > 0.0 || w[1].1 > 0.0) {
            return Err(Error::DomainViolation(
                "function is positive on the negative half-line; Log has no image there".into(),
            ));
        }
    }
    let pos: Vec<(f64, f64)> = knots.iter().copied().filter(|k| k.0 > 0.0).collect();
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pos.len());
    for (i, &(x0, v0)) in pos.iter().enumerate() {
        out.push((x0.ln(), v0));
        let Some(&(x1, v1)) = pos.get(i + 1) else {
            break;
        };
        if v0 == v1 {
            continue;
        }
        let k = (v1 - v0) / (x1 - x0);
        let mut inner = Vec::new();
        refine(x0.ln(), x1.ln(), &|a, b| k.abs() * exp_chord_deviation(a, b), tol, &mut inner)?;
        out.extend(
            inner
                .into_iter()
                .map(|s| (s, (v0 + k * (s.exp() - x0)).clamp(v0.min(v1), v0.max(v1)))),
        );
    }
    ShiftTestFunction::from_knots(out)
}

/// `f o ln` as a scale-carrier function on `(0, inf)`, within `tol` of the
/// composition.
pub fn inverse_function_transform(f: &ShiftTestFunction, tol: f64) -> Result<TestFunction> {
    check_tol(tol)?;
    let knots = f.shape().knots();
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(knots.len());
    for (i, &(s0, v0)) in knots.iter().enumerate() {
        let x0 = s0.exp();
        if !x0.is_finite() || x0 == 0.0 {
            return Err(Error::Range(format!("exp({s0}) is not representable")));
        }
        out.push((x0, v0));
        let Some(&(s1, v1)) = knots.get(i + 1) else {
            break;
        };
        if v0 == v1 {
            continue;
        }
        let k = (v1 - v0) / (s1 - s0);
        let mut inner = Vec::new();
        refine(x0, s1.exp(), &|p, q| k.abs() * log_chord_deviation(p, q), tol, &mut inner)?;
        out.extend(
            inner
                .into_iter()
                .map(|x| (x, (v0 + k * (x.ln() - s0)).clamp(v0.min(v1), v0.max(v1)))),
        );
    }
    TestFunction::from_knots(out)
}

/// The exact composition `x -> u(e^x)`.
pub fn compose_exp(u: &TestFunction) -> impl Fn(f64) -> f64 + '_ {
    move |x| u.eval(x.exp())
}

/// The exact composition `x -> f(ln x)` on `(0, inf)`, 0 elsewhere.
pub fn compose_ln(f: &ShiftTestFunction) -> impl Fn(f64) -> f64 + '_ {
    move |x| if x > 0.0 { f.eval(x.ln()) } else { 0.0 }
}

/// `ln(alpha) / alpha`.
///
/// `Log` pushes `m_alpha` to `alpha e^{-alpha u} du`, which is the shift by
/// `ln(alpha)/alpha` of a Poisson process with intensity `e^{-alpha u} du`.
/// Hence `Log SScDPPP(alpha, P, W) = SDPPP(alpha, Log P, ln W + ln(alpha)/alpha)`.
pub fn normalization_shift(alpha: f64) -> f64 {
    alpha.ln() / alpha
}

fn shift_family(c: f64, decoration: crate::sampler::DecorationSpec, shift: ShiftLaw, cutoff: f64) -> ProcessSpec {
    match shift {
        ShiftLaw::Deterministic { value: 0.0 } => ProcessSpec::Dppp {
            c,
            decoration,
            cutoff,
        },
        shift => ProcessSpec::SDppp {
            c,
            decoration,
            shift,
            cutoff,
        },
    }
}

fn scale_family(alpha: f64, decoration: crate::sampler::DecorationSpec, scale: ScaleLaw, window: f64) -> ProcessSpec {
    match scale {
        ScaleLaw::Deterministic { value: 1.0 } => ProcessSpec::ScDppp {
            alpha,
            decoration,
            window,
        },
        scale => ProcessSpec::SScDppp {
            alpha,
            decoration,
            scale,
            window,
        },
    }
}

/// Scale family to shift family and back.
///
/// `SScDPPP(alpha, P, W)` on window `eps` maps to `SDPPP(alpha, Log P, U)` on
/// cutoff `ln eps` with `U = ln W + ln(alpha)/alpha`; the inverse uses
/// `W = exp(U - ln(c)/c)`. Results with `W = 1` or `U = 0` exactly are
/// reported as the unscaled/unshifted family.
pub fn map_process_spec(spec: &ProcessSpec) -> Result<ProcessSpec> {
    Ok(match spec {
        ProcessSpec::ScDppp {
            alpha,
            decoration,
            window,
        } => shift_family(
            *alpha,
            decoration.map_log()?,
            ScaleLaw::Deterministic { value: 1.0 }.to_shift(normalization_shift(*alpha)),
            window.ln(),
        ),
        ProcessSpec::SScDppp {
            alpha,
            decoration,
            scale,
            window,
        } => shift_family(
            *alpha,
            decoration.map_log()?,
            scale.to_shift(normalization_shift(*alpha)),
            window.ln(),
        ),
        ProcessSpec::Dppp {
            c,
            decoration,
            cutoff,
        } => scale_family(
            *c,
            decoration.map_exp()?,
            ShiftLaw::Deterministic { value: 0.0 }.to_scale(normalization_shift(*c)),
            cutoff.exp(),
        ),
        ProcessSpec::SDppp {
            c,
            decoration,
            shift,
            cutoff,
        } => scale_family(
            *c,
            decoration.map_exp()?,
            shift.to_scale(normalization_shift(*c)),
            cutoff.exp(),
        ),
        ProcessSpec::Mixture { components } => ProcessSpec::Mixture {
            components: components
                .iter()
                .map(|c| {
                    Ok(MixtureComponent {
                        weight: c.weight,
                        process: map_process_spec(&c.process)?,
                    })
                })
                .collect::<Result<_>>()?,
        },
    })
}
