//! Pointwise convex terms `j` and their subdifferentials `β = ∂j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A proper convex lower semicontinuous `j : ℝ → (−∞, +∞]` with `j(0) = 0`
/// and `0 ∈ ∂j(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    #[default]
    None,
    /// `j(u) = |u|`, `β = sign`.
    AbsoluteValue,
    /// Indicator of `[lower, upper]`; a missing bound is infinite.
    IndicatorInterval {
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
    },
    /// `j(u) = |u|^q / q`, `q ≥ 1`.
    Power { exponent: f64 },
    /// `j(u) = max(u, 0)`.
    PositivePart,
    /// A nondecreasing relation given by knots `(u, β)`. Knots are sorted by
    /// `u`; a repeated abscissa encodes a vertical jump. Outside the knot
    /// range `β` continues with the slope of the outermost segment.
    CustomMonotone { knots: Vec<[f64; 2]> },
}

/// Closed subinterval `[lo, hi]` of the extended reals.
pub type Interval = (f64, f64);

impl GraphSpec {
    pub fn indicator(lower: f64, upper: f64) -> GraphSpec {
        GraphSpec::IndicatorInterval {
            lower: lower.is_finite().then_some(lower),
            upper: upper.is_finite().then_some(upper),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GraphSpec::None | GraphSpec::AbsoluteValue | GraphSpec::PositivePart => Ok(()),
            GraphSpec::IndicatorInterval { .. } => {
                let (a, b) = self.bounds();
                if a.is_nan() || b.is_nan() || a > 0.0 || b < 0.0 {
                    return Err(Error::InvalidEnergy(format!(
                        "indicator interval [{a}, {b}] must contain 0"
                    )));
                }
                Ok(())
            }
            GraphSpec::Power { exponent } => {
                if !(exponent.is_finite() && *exponent >= 1.0) {
                    return Err(Error::InvalidEnergy(format!(
                        "power graph needs exponent >= 1, got {exponent}"
                    )));
                }
                Ok(())
            }
            GraphSpec::CustomMonotone { knots } => {
                if knots.is_empty() {
                    return Err(Error::InvalidEnergy("custom graph needs at least one knot".into()));
                }
                if knots.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidEnergy("custom graph knots must be finite".into()));
                }
                for w in knots.windows(2) {
                    if w[1][0] < w[0][0] || w[1][1] < w[0][1] {
                        return Err(Error::InvalidEnergy(
                            "custom graph knots must be nondecreasing in both coordinates".into(),
                        ));
                    }
                }
                let (lo, hi) = self
                    .subdifferential(0.0)
                    .expect("custom graphs are finite everywhere");
                if lo > 0.0 || hi < 0.0 {
                    return Err(Error::InvalidEnergy("custom graph must pass through (0, 0)".into()));
                }
                Ok(())
            }
        }
    }

    /// Effective domain `[a, b]` of `j`.
    pub fn bounds(&self) -> Interval {
        match self {
            GraphSpec::IndicatorInterval { lower, upper } => (
                lower.unwrap_or(f64::NEG_INFINITY),
                upper.unwrap_or(f64::INFINITY),
            ),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, GraphSpec::None)
    }

    /// `j(u)`, possibly `+∞`.
    pub fn value(&self, u: f64) -> f64 {
        match self {
            GraphSpec::None => 0.0,
            GraphSpec::AbsoluteValue => u.abs(),
            GraphSpec::IndicatorInterval { .. } => {
                let (a, b) = self.bounds();
                if u >= a && u <= b {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            GraphSpec::Power { exponent } => u.abs().powf(*exponent) / exponent,
            GraphSpec::PositivePart => u.max(0.0),
            GraphSpec::CustomMonotone { knots } => Piecewise::new(knots).integral(u),
        }
    }

    /// `β(u) = ∂j(u)` as a closed interval, `None` outside the domain.
    pub fn subdifferential(&self, u: f64) -> Option<Interval> {
        let sign = |u: f64, at_zero: Interval| {
            if u > 0.0 {
                (1.0, 1.0)
            } else if u < 0.0 {
                (-1.0, -1.0)
            } else {
                at_zero
            }
        };
        match self {
            GraphSpec::None => Some((0.0, 0.0)),
            GraphSpec::AbsoluteValue => Some(sign(u, (-1.0, 1.0))),
            GraphSpec::IndicatorInterval { .. } => {
                let (a, b) = self.bounds();
                if u < a || u > b {
                    None
                } else {
                    let lo = if u == a { f64::NEG_INFINITY } else { 0.0 };
                    let hi = if u == b { f64::INFINITY } else { 0.0 };
                    Some((lo, hi))
                }
            }
            GraphSpec::Power { exponent } => {
                if *exponent == 1.0 {
                    Some(sign(u, (-1.0, 1.0)))
                } else {
                    let v = u.signum() * u.abs().powf(exponent - 1.0);
                    let v = if u == 0.0 { 0.0 } else { v };
                    Some((v, v))
                }
            }
            GraphSpec::PositivePart => Some(if u > 0.0 {
                (1.0, 1.0)
            } else if u < 0.0 {
                (0.0, 0.0)
            } else {
                (0.0, 1.0)
            }),
            GraphSpec::CustomMonotone { knots } => Some(Piecewise::new(knots).bounds(u)),
        }
    }

    /// Distance from `y` to `β(u)`; infinite when `u` is outside the domain.
    pub fn distance_to_subdifferential(&self, u: f64, y: f64) -> f64 {
        match self.subdifferential(u) {
            None => f64::INFINITY,
            Some((lo, hi)) => {
                if y < lo {
                    lo - y
                } else if y > hi {
                    y - hi
                } else {
                    0.0
                }
            }
        }
    }
}

/// Piecewise-linear view of the knots of a custom graph.
struct Piecewise<'a> {
    knots: &'a [[f64; 2]],
    left_slope: f64,
    right_slope: f64,
}

impl<'a> Piecewise<'a> {
    fn new(knots: &'a [[f64; 2]]) -> Self {
        let slope = |a: &[f64; 2], b: &[f64; 2]| (b[1] - a[1]) / (b[0] - a[0]);
        let left_slope = knots
            .windows(2)
            .find(|w| w[1][0] > w[0][0])
            .map_or(0.0, |w| slope(&w[0], &w[1]));
        let right_slope = knots
            .windows(2)
            .rev()
            .find(|w| w[1][0] > w[0][0])
            .map_or(0.0, |w| slope(&w[0], &w[1]));
        Piecewise { knots, left_slope, right_slope }
    }

    /// Left and right limits of β at `u`.
    fn bounds(&self, u: f64) -> Interval {
        let k = self.knots;
        let first = k[0];
        let last = k[k.len() - 1];
        if u < first[0] {
            let v = first[1] + self.left_slope * (u - first[0]);
            return (v, v);
        }
        if u > last[0] {
            let v = last[1] + self.right_slope * (u - last[0]);
            return (v, v);
        }
        let at: Vec<f64> = k.iter().filter(|p| p[0] == u).map(|p| p[1]).collect();
        if !at.is_empty() {
            let lo = at.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = at.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            return (lo, hi);
        }
        let i = k.iter().position(|p| p[0] > u).expect("u is inside the knot range");
        let (a, b) = (k[i - 1], k[i]);
        let v = a[1] + (b[1] - a[1]) * (u - a[0]) / (b[0] - a[0]);
        (v, v)
    }

    /// Single-valued representative of β, used for integration.
    fn eval(&self, u: f64) -> f64 {
        self.bounds(u).0
    }

    /// `∫₀ᵘ β(s) ds`. Exact: β is linear between consecutive breakpoints.
    fn integral(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let (a, b, sign) = if u > 0.0 { (0.0, u, 1.0) } else { (u, 0.0, -1.0) };
        let mut points = vec![a];
        points.extend(self.knots.iter().map(|p| p[0]).filter(|&x| x > a && x < b));
        points.push(b);
        points.dedup();
        let mut total = 0.0;
        for w in points.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let mid = 0.5 * (x0 + x1);
            // β restricted to (x0, x1) is affine, so midpoint rule is exact
            total += (x1 - x0) * self.eval(mid);
        }
        sign * total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_graphs() -> Vec<GraphSpec> {
        vec![
            GraphSpec::None,
            GraphSpec::AbsoluteValue,
            GraphSpec::indicator(-0.5, 1.0),
            GraphSpec::indicator(0.0, f64::INFINITY),
            GraphSpec::Power { exponent: 1.0 },
            GraphSpec::Power { exponent: 3.0 },
            GraphSpec::PositivePart,
            GraphSpec::CustomMonotone {
                knots: vec![[-1.0, -2.0], [0.0, 0.0], [0.0, 0.5], [1.0, 1.0]],
            },
        ]
    }

    #[test]
    fn normalized_at_zero() {
        for g in all_graphs() {
            g.validate().unwrap();
            assert_eq!(g.value(0.0), 0.0, "{g:?}");
            let (lo, hi) = g.subdifferential(0.0).unwrap();
            assert!(lo <= 0.0 && hi >= 0.0, "{g:?}");
        }
    }

    #[test]
    fn indicator_value() {
        let g = GraphSpec::indicator(0.0, 1.0);
        assert_eq!(g.value(1.5), f64::INFINITY);
        assert_eq!(g.value(0.5), 0.0);
        assert!(g.subdifferential(-0.1).is_none());
        assert_eq!(g.subdifferential(1.0), Some((0.0, f64::INFINITY)));
    }

    #[test]
    fn validation_errors() {
        assert!(GraphSpec::indicator(0.5, 1.0).validate().is_err());
        assert!(GraphSpec::Power { exponent: 0.5 }.validate().is_err());
        assert!(GraphSpec::CustomMonotone { knots: vec![[0.0, 1.0], [1.0, 0.0]] }
            .validate()
            .is_err());
        assert!(GraphSpec::CustomMonotone { knots: vec![[1.0, 1.0], [2.0, 3.0]] }
            .validate()
            .is_err());
    }

    #[test]
    fn custom_integral_matches_closed_form() {
        // β(u) = 2u for u < 0, jump [0, 0.5] at 0, then 0.5 + 0.5u on (0, 1]
        let g = GraphSpec::CustomMonotone {
            knots: vec![[-1.0, -2.0], [0.0, 0.0], [0.0, 0.5], [1.0, 1.0]],
        };
        assert!((g.value(-1.0) - 1.0).abs() < 1e-14);
        assert!((g.value(1.0) - 0.75).abs() < 1e-14);
        // extrapolated with slope 0.5 beyond u = 1
        assert!((g.value(2.0) - (0.75 + 1.0 + 0.25)).abs() < 1e-14);
        assert_eq!(g.subdifferential(0.0), Some((0.0, 0.5)));
    }

    #[test]
    fn power_subdifferential() {
        let g = GraphSpec::Power { exponent: 3.0 };
        assert_eq!(g.subdifferential(-2.0), Some((-4.0, -4.0)));
        assert!((g.value(-2.0) - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn serde_shape() {
        let g: GraphSpec = serde_json::from_str(r#"{"kind":"indicator_interval","lower":0.0}"#)
            .unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(g.bounds(), (0.0, f64::INFINITY));
    }
}
