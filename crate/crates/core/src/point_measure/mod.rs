//! Finite point measures on the punctured line and the test functions they
//! are integrated against.
//!
//! A [`PointMeasure`] is kept in canonical form: atoms sorted by location,
//! equal locations (bit-for-bit) merged into one atom with summed
//! multiplicity. No atom may sit at 0 and every location is finite.

mod test_function;

pub use test_function::{IndicatorShape, PiecewiseLinear, TestFunction};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub multiplicity: u32,
}

/// Sort by location and merge bit-identical locations. `-0.0` is folded into `0.0`.
pub(crate) fn canonicalize(mut raw: Vec<Atom>) -> Vec<Atom> {
    for a in raw.iter_mut() {
        if a.location == 0.0 {
            a.location = 0.0;
        }
    }
    raw.sort_by(|a, b| a.location.total_cmp(&b.location));
    let mut out: Vec<Atom> = Vec::with_capacity(raw.len());
    for a in raw {
        match out.last_mut() {
            Some(last) if last.location.to_bits() == a.location.to_bits() => {
                last.multiplicity += a.multiplicity;
            }
            _ => out.push(a),
        }
    }
    out
}

pub(crate) fn validate_raw(atoms: &[(f64, u32)], allow_zero: bool) -> Result<Vec<Atom>> {
    atoms
        .iter()
        .map(|&(location, multiplicity)| {
            if !location.is_finite() {
                return Err(invalid(format!("atom location {location} is not finite")));
            }
            if !allow_zero && location == 0.0 {
                return Err(Error::DomainViolation(
                    "atom at 0 on the punctured line".into(),
                ));
            }
            if multiplicity == 0 {
                return Err(invalid(format!("atom at {location} has multiplicity 0")));
            }
            Ok(Atom {
                location,
                multiplicity,
            })
        })
        .collect()
}

/// Wire form shared by both carriers: `{"atoms": [[location, multiplicity], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct AtomsWire {
    pub atoms: Vec<(f64, u32)>,
}

/// A finite point measure on `[-inf, inf] \ {0}` with no mass at infinity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "AtomsWire", into = "AtomsWire")]
pub struct PointMeasure {
    atoms: Vec<Atom>,
}

impl TryFrom<AtomsWire> for PointMeasure {
    type Error = Error;
    fn try_from(w: AtomsWire) -> Result<Self> {
        PointMeasure::new(w.atoms)
    }
}

impl From<PointMeasure> for AtomsWire {
    fn from(m: PointMeasure) -> Self {
        AtomsWire {
            atoms: m
                .atoms
                .iter()
                .map(|a| (a.location, a.multiplicity))
                .collect(),
        }
    }
}

impl PointMeasure {
    pub fn new(atoms: impl IntoIterator<Item = (f64, u32)>) -> Result<Self> {
        let raw: Vec<(f64, u32)> = atoms.into_iter().collect();
        Ok(Self {
            atoms: canonicalize(validate_raw(&raw, false)?),
        })
    }

    /// Unit-multiplicity atoms at the given locations.
    pub fn from_locations(locations: &[f64]) -> Result<Self> {
        Self::new(locations.iter().map(|&x| (x, 1)))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds from atoms already known to be valid; canonicalizes.
    pub(crate) fn from_valid_atoms(raw: Vec<Atom>) -> Self {
        debug_assert!(raw
            .iter()
            .all(|a| a.location.is_finite() && a.location != 0.0 && a.multiplicity > 0));
        Self {
            atoms: canonicalize(raw),
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total number of points counted with multiplicity.
    pub fn total_count(&self) -> u64 {
        self.atoms.iter().map(|a| a.multiplicity as u64).sum()
    }

    /// `S_b m`: every location multiplied by `b`.
    pub fn scale(&self, b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(invalid(format!("scale factor must be positive and finite, got {b}")));
        }
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|a| Atom {
                location: a.location * b,
                multiplicity: a.multiplicity,
            })
            .collect();
        if atoms.iter().any(|a| !a.location.is_finite() || a.location == 0.0) {
            return Err(Error::Range(format!(
                "scaling by {b} overflowed or underflowed an atom"
            )));
        }
        // Multiplication by b > 0 is monotone, but distinct locations may round together.
        Ok(Self {
            atoms: canonicalize(atoms),
        })
    }

    /// `theta_x m`: every location translated by `x`. Landing on 0 is an error.
    pub fn shift(&self, x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(invalid(format!("shift must be finite, got {x}")));
        }
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let location = a.location + x;
            if location == 0.0 {
                return Err(Error::DomainViolation(format!(
                    "shifting atom {} by {x} lands at 0",
                    a.location
                )));
            }
            if !location.is_finite() {
                return Err(Error::Range(format!("shifting atom {} by {x} overflowed", a.location)));
            }
            atoms.push(Atom {
                location,
                multiplicity: a.multiplicity,
            });
        }
        Ok(Self {
            atoms: canonicalize(atoms),
        })
    }

    /// Multiset union.
    pub fn superpose(&self, other: &PointMeasure) -> PointMeasure {
        let mut atoms = Vec::with_capacity(self.atoms.len() + other.atoms.len());
        atoms.extend_from_slice(&self.atoms);
        atoms.extend_from_slice(&other.atoms);
        Self {
            atoms: canonicalize(atoms),
        }
    }

    /// Restriction to `{x : |x| > radius}`.
    pub fn restrict_outside(&self, radius: f64) -> PointMeasure {
        Self {
            atoms: self
                .atoms
                .iter()
                .copied()
                .filter(|a| a.location.abs() > radius)
                .collect(),
        }
    }

    /// Points (with multiplicity) in `{x : |x| > radius}`.
    pub fn count_outside(&self, radius: f64) -> u64 {
        self.atoms
            .iter()
            .filter(|a| a.location.abs() > radius)
            .map(|a| a.multiplicity as u64)
            .sum()
    }

    /// Largest absolute location; 0 for the empty measure.
    pub fn maxmod(&self) -> f64 {
        match (self.atoms.first(), self.atoms.last()) {
            (Some(lo), Some(hi)) => lo.location.abs().max(hi.location.abs()),
            _ => 0.0,
        }
    }

    /// `m(f) = sum of multiplicity * f(location)`.
    pub fn integrate(&self, f: &TestFunction) -> f64 {
        self.integrate_with(|x| f.eval(x))
    }

    pub fn integrate_with(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.multiplicity as f64 * f(a.location))
            .sum()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("point measure serializes")
    }
}
