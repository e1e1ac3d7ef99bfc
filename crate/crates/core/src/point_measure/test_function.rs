use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A continuous piecewise-linear function: linear between consecutive knots,
/// zero outside the knot range. The first and last knot values are 0, so the
/// extension by zero is continuous. No knots means the zero function.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        for &(x, v) in &knots {
            if !x.is_finite() || !v.is_finite() {
                return Err(invalid(format!("knot ({x}, {v}) is not finite")));
            }
            if v < 0.0 {
                return Err(invalid(format!("knot ({x}, {v}) has a negative value")));
            }
        }
        if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid("knot locations must be strictly increasing"));
        }
        if let (Some(first), Some(last)) = (knots.first(), knots.last()) {
            if first.1 != 0.0 || last.1 != 0.0 {
                return Err(invalid(
                    "first and last knot values must be 0 for a compactly supported continuous function",
                ));
            }
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn is_zero(&self) -> bool {
        self.knots.iter().all(|k| k.1 == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let n = k.len();
        if n < 2 || x <= k[0].0 || x >= k[n - 1].0 {
            return 0.0;
        }
        // first index with knot.x > x; in 1..n
        let j = k.partition_point(|p| p.0 <= x);
        let (x0, v0) = k[j - 1];
        let (x1, v1) = k[j];
        if v0 == v1 {
            return v0;
        }
        v0 + (v1 - v0) * ((x - x0) / (x1 - x0))
    }

    /// Knots pushed through a strictly increasing map; values unchanged.
    pub(crate) fn map_locations(&self, map: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.knots.iter().map(|&(x, v)| (map(x), v)).collect())
    }

    /// `[lo, hi]` hull of the positive set, `None` for the zero function.
    pub fn support_hull(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for w in self.knots.windows(2) {
            if w[0].1 > 0.0 || w[1].1 > 0.0 {
                lo = lo.min(w[0].0);
                hi = hi.max(w[1].0);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Largest value attained.
    pub fn sup(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(0.0, f64::max)
    }
}

/// Shape parameters of a piecewise-linear approximant of `level * 1{|x| > inner}`
/// (or `1{x > inner}` when one-sided): zero up to `inner`, a linear ramp of width
/// `ramp`, a plateau at `level` up to `outer`, and a ramp back to 0 at `2 * outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorShape {
    pub level: f64,
    pub inner: f64,
    pub ramp: f64,
    pub outer: f64,
    #[serde(default)]
    pub two_sided: bool,
}

impl IndicatorShape {
    /// Zones (in `|x|`) where the approximant differs from the exact indicator.
    pub fn bias_zones(&self) -> [(f64, f64); 2] {
        [
            (self.inner, self.inner + self.ramp),
            (self.outer, f64::INFINITY),
        ]
    }

    fn scaled(&self, y: f64) -> Self {
        Self {
            inner: self.inner / y,
            ramp: self.ramp / y,
            outer: self.outer / y,
            ..*self
        }
    }
}

/// A nonnegative continuous piecewise-linear function with compact support
/// bounded away from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    shape: PiecewiseLinear,
    support: Option<(f64, f64)>,
    indicator: Option<IndicatorShape>,
}

impl TestFunction {
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_shape(PiecewiseLinear::new(knots)?)
    }

    pub fn from_shape(shape: PiecewiseLinear) -> Result<Self> {
        let mut inner = f64::INFINITY;
        let mut outer: f64 = 0.0;
        for w in shape.knots.windows(2) {
            let ((x0, v0), (x1, v1)) = (w[0], w[1]);
            if v0 == 0.0 && v1 == 0.0 {
                continue;
            }
            if x0 < 0.0 && x1 > 0.0 {
                return Err(invalid(format!(
                    "test function is positive on a segment [{x0}, {x1}] containing 0"
                )));
            }
            let near = x0.abs().min(x1.abs());
            if near == 0.0 {
                return Err(invalid("test function support touches 0"));
            }
            inner = inner.min(near);
            outer = outer.max(x0.abs().max(x1.abs()));
        }
        let support = inner.is_finite().then_some((inner, outer));
        Ok(Self {
            shape,
            support,
            indicator: None,
        })
    }

    pub fn zero() -> Self {
        Self {
            shape: PiecewiseLinear::default(),
            support: None,
            indicator: None,
        }
    }

    /// Symmetric tent of the given height peaking at `center`.
    pub fn tent(center: f64, half_width: f64, height: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(invalid("tent half-width must be positive"));
        }
        if !(height >= 0.0) {
            return Err(invalid("tent height must be nonnegative"));
        }
        Self::from_knots(vec![
            (center - half_width, 0.0),
            (center, height),
            (center + half_width, 0.0),
        ])
    }

    /// Approximant of `level * 1{|x| > inner}` (or one-sided), see [`IndicatorShape`].
    pub fn indicator(shape: IndicatorShape) -> Result<Self> {
        let IndicatorShape {
            level,
            inner,
            ramp,
            outer,
            two_sided,
        } = shape;
        if !(level.is_finite() && level >= 0.0) {
            return Err(invalid("indicator level must be finite and nonnegative"));
        }
        if !(inner > 0.0 && ramp > 0.0 && outer > inner + ramp && outer.is_finite()) {
            return Err(invalid(
                "indicator needs 0 < inner, 0 < ramp and inner + ramp < outer < inf",
            ));
        }
        let right = [
            (inner, 0.0),
            (inner + ramp, level),
            (outer, level),
            (2.0 * outer, 0.0),
        ];
        let mut knots: Vec<(f64, f64)> = Vec::with_capacity(8);
        if two_sided {
            knots.extend(right.iter().rev().map(|&(x, v)| (-x, v)));
        }
        knots.extend(right);
        let mut f = Self::from_knots(knots)?;
        f.indicator = Some(shape);
        Ok(f)
    }

    /// The tent family `f_n`: plateau `n` on `|x| >= 1 + 1/n`, linear ramp from
    /// `|x| = 1`, cut off at `outer`. Increases pointwise to `inf * 1{|x| > 1}`.
    pub fn tent_family(n: u32, outer: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("tent family index starts at 1"));
        }
        let n = n as f64;
        Self::indicator(IndicatorShape {
            level: n,
            inner: 1.0,
            ramp: 1.0 / n,
            outer,
            two_sided: true,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.shape.eval(x)
    }

    pub fn shape(&self) -> &PiecewiseLinear {
        &self.shape
    }

    /// `(inner radius, outer radius)` of the support; `None` for the zero function.
    pub fn support_bounds(&self) -> Option<(f64, f64)> {
        self.support
    }

    pub fn indicator_shape(&self) -> Option<&IndicatorShape> {
        self.indicator.as_ref()
    }

    /// Plateau value for indicator approximants.
    pub fn plateau(&self) -> Option<f64> {
        self.indicator.map(|s| s.level)
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_none()
    }

    /// `S_y f = f(y .)`: knots divided by `y`.
    pub fn scale_fn(&self, y: f64) -> Result<Self> {
        if !(y.is_finite() && y > 0.0) {
            return Err(invalid(format!("function scale must be positive and finite, got {y}")));
        }
        let shape = self.shape.map_locations(|x| x / y)?;
        Ok(Self {
            shape,
            support: self.support.map(|(a, b)| (a / y, b / y)),
            indicator: self.indicator.map(|s| s.scaled(y)),
        })
    }

    /// `f * c` for a constant `c >= 0`.
    pub fn times(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(invalid("multiplier must be finite and nonnegative"));
        }
        let shape = PiecewiseLinear::new(self.shape.knots.iter().map(|&(x, v)| (x, v * c)).collect())?;
        let mut f = Self::from_shape(shape)?;
        f.indicator = self.indicator.map(|s| IndicatorShape {
            level: s.level * c,
            ..s
        });
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_is_exact_on_pieces() {
        let f = TestFunction::from_knots(vec![(1.0, 0.0), (2.0, 4.0), (3.0, 4.0), (5.0, 0.0)]).unwrap();
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.eval(1.5), 2.0);
        assert_eq!(f.eval(2.0), 4.0);
        assert_eq!(f.eval(2.7), 4.0);
        assert_eq!(f.eval(4.0), 2.0);
        assert_eq!(f.eval(5.0), 0.0);
        assert_eq!(f.eval(-2.0), 0.0);
        assert_eq!(f.support_bounds(), Some((1.0, 5.0)));
    }

    #[test]
    fn support_must_avoid_zero() {
        assert!(TestFunction::from_knots(vec![(-1.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).is_err());
        assert!(TestFunction::from_knots(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).is_err());
        assert!(TestFunction::from_knots(vec![(1.0, 0.0), (2.0, 1.0)]).is_err());
        assert!(TestFunction::from_knots(vec![(1.0, 0.0), (2.0, -1.0), (3.0, 0.0)]).is_err());
        let ok = TestFunction::from_knots(vec![(-3.0, 0.0), (-2.0, 1.0), (-0.5, 0.0), (0.5, 0.0), (1.0, 2.0), (4.0, 0.0)])
            .unwrap();
        assert_eq!(ok.support_bounds(), Some((0.5, 4.0)));
        assert_eq!(ok.eval(0.0), 0.0);
    }

    #[test]
    fn scale_fn_cases() {
        let f = TestFunction::tent(2.0, 1.0, 3.0).unwrap();
        assert_eq!(f.scale_fn(1.0).unwrap(), f);
        let g = f.scale_fn(2.0).unwrap();
        assert_eq!(g.support_bounds(), Some((0.5, 1.5)));
        assert_eq!(g.eval(1.0), f.eval(2.0));
        let back = g.scale_fn(0.5).unwrap();
        assert_eq!(back, f);
        assert!(f.scale_fn(0.0).is_err());
    }

    #[test]
    fn tent_family_matches_definition() {
        let n = 4;
        let f = TestFunction::tent_family(n, 1e6).unwrap();
        assert_eq!(f.eval(0.9), 0.0);
        assert_eq!(f.eval(1.0), 0.0);
        assert!((f.eval(1.125) - 16.0 * 0.125).abs() < 1e-12);
        assert_eq!(f.eval(1.25), 4.0);
        assert_eq!(f.eval(-3.0), 4.0);
        assert!((f.eval(-1.125) - 2.0).abs() < 1e-12);
        assert_eq!(f.plateau(), Some(4.0));
    }

    #[test]
    fn tent_family_is_monotone_in_n() {
        let xs: Vec<f64> = (0..400).map(|i| -5.0 + i as f64 * 0.025).collect();
        for n in 1..8 {
            let a = TestFunction::tent_family(n, 1e6).unwrap();
            let b = TestFunction::tent_family(n + 1, 1e6).unwrap();
            for &x in &xs {
                assert!(a.eval(x) <= b.eval(x) + 1e-12, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn zero_function() {
        let z = TestFunction::zero();
        assert!(z.is_zero());
        assert_eq!(z.eval(1.0), 0.0);
        assert_eq!(z.support_bounds(), None);
        assert!(z.scale_fn(3.0).unwrap().is_zero());
    }
}
