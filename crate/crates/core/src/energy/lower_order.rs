//! Lipschitz lower-order terms `f₁(x, u)` and their antiderivatives
//! `F₁(x, u) = ∫₀ᵘ f₁(x, s) ds`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::space::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LowerOrderKind {
    /// `c·u`; semiconvex with shift `|c|` when `c < 0`.
    Linear { coefficient: f64 },
    /// `a·sin(u)`.
    Sine { amplitude: f64 },
    /// `a·tanh(u)`.
    Tanh { amplitude: f64 },
    /// `a·u / (1 + u²)`.
    Rational { amplitude: f64 },
    /// `a·cos(πx)·sin(u)`, the only entry depending on the position.
    ModulatedSine { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerOrderSpec {
    #[serde(flatten)]
    pub kind: LowerOrderKind,
    /// Declared Lipschitz constant in `u`. Defaults to the documented
    /// constant of the catalog entry.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    /// Evaluate `F₁` by 32-point Gauss-Legendre quadrature even when a
    /// closed form exists.
    #[serde(default)]
    pub numeric_antiderivative: bool,
}

impl LowerOrderSpec {
    pub fn new(kind: LowerOrderKind) -> Self {
        LowerOrderSpec { kind, lipschitz: None, numeric_antiderivative: false }
    }

    pub fn numeric(mut self) -> Self {
        self.numeric_antiderivative = true;
        self
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = Some(lipschitz);
        self
    }

    /// Lipschitz constant that holds for the catalog entry.
    pub fn documented_lipschitz(&self) -> f64 {
        match self.kind {
            LowerOrderKind::Linear { coefficient } => coefficient.abs(),
            LowerOrderKind::Sine { amplitude }
            | LowerOrderKind::Tanh { amplitude }
            | LowerOrderKind::Rational { amplitude }
            | LowerOrderKind::ModulatedSine { amplitude } => amplitude.abs(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz.unwrap_or_else(|| self.documented_lipschitz())
    }

    #[inline]
    pub fn value(&self, x: Point, u: f64) -> f64 {
        match self.kind {
            LowerOrderKind::Linear { coefficient } => coefficient * u,
            LowerOrderKind::Sine { amplitude } => amplitude * u.sin(),
            LowerOrderKind::Tanh { amplitude } => amplitude * u.tanh(),
            LowerOrderKind::Rational { amplitude } => amplitude * u / (1.0 + u * u),
            LowerOrderKind::ModulatedSine { amplitude } => amplitude * (PI * x[0]).cos() * u.sin(),
        }
    }

    pub fn antiderivative(&self, x: Point, u: f64) -> f64 {
        if self.numeric_antiderivative {
            return gauss_antiderivative(|s| self.value(x, s), u);
        }
        match self.kind {
            LowerOrderKind::Linear { coefficient } => 0.5 * coefficient * u * u,
            LowerOrderKind::Sine { amplitude } => amplitude * (1.0 - u.cos()),
            LowerOrderKind::Tanh { amplitude } => amplitude * log_cosh(u),
            LowerOrderKind::Rational { amplitude } => 0.5 * amplitude * (u * u).ln_1p(),
            LowerOrderKind::ModulatedSine { amplitude } => {
                amplitude * (PI * x[0]).cos() * (1.0 - u.cos())
            }
        }
    }
}

fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    // ln cosh a = a + ln(1 + e^{-2a}) - ln 2, stable for large a
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

const GAUSS_POINTS: usize = 32;

/// Nodes and weights of the Gauss-Legendre rule on `[-1, 1]`.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_POINTS;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

/// `∫₀ᵘ f(s) ds` by 32-point Gauss-Legendre quadrature.
pub fn gauss_antiderivative(f: impl Fn(f64) -> f64, u: f64) -> f64 {
    let half = 0.5 * u;
    half * gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(half * (x + 1.0)))
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let total: f64 = gauss_legendre().iter().map(|p| p.1).sum();
        assert!((total - 2.0).abs() < 1e-14);
        // exact up to degree 63
        let got = gauss_antiderivative(|s| s.powi(9) - 3.0 * s * s, 1.7);
        let exact = 1.7f64.powi(10) / 10.0 - 1.7f64.powi(3);
        assert!((got - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn numeric_antiderivative_matches_closed_forms() {
        let kinds = [
            LowerOrderKind::Linear { coefficient: -1.5 },
            LowerOrderKind::Sine { amplitude: 0.7 },
            LowerOrderKind::Tanh { amplitude: 2.0 },
            LowerOrderKind::Rational { amplitude: -1.0 },
            LowerOrderKind::ModulatedSine { amplitude: 1.0 },
        ];
        for kind in kinds {
            let closed = LowerOrderSpec::new(kind.clone());
            let numeric = LowerOrderSpec::new(kind).numeric();
            for &u in &[-3.0, -0.2, 0.0, 0.5, 2.5] {
                let x = [0.3, 0.0];
                let a = closed.antiderivative(x, u);
                let b = numeric.antiderivative(x, u);
                assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{closed:?} {u}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn log_cosh_is_stable() {
        assert!((log_cosh(0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }
}
