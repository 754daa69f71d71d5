//! Declarative space-time forcings `f(t, x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::evolution::TimeMesh;
use crate::space::{Element, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `a·cos(ω t)·sin(kπx)·cos(kπy)`.
    Mode {
        amplitude: f64,
        k: u32,
        #[serde(default)]
        frequency: f64,
    },
}

impl ForcingSpec {
    pub fn is_zero(&self) -> bool {
        match self {
            ForcingSpec::Zero => true,
            ForcingSpec::Constant { value } => *value == 0.0,
            ForcingSpec::Mode { amplitude, .. } => *amplitude == 0.0,
        }
    }

    pub fn value(&self, t: f64, x: Point) -> f64 {
        match *self {
            ForcingSpec::Zero => 0.0,
            ForcingSpec::Constant { value } => value,
            ForcingSpec::Mode { amplitude, k, frequency } => {
                let k = k as f64 * PI;
                amplitude * (frequency * t).cos() * (k * x[0]).sin() * (k * x[1]).cos()
            }
        }
    }

    /// `sup_x |f(t, x)|`, an upper bound valid for every `t`.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            ForcingSpec::Zero => 0.0,
            ForcingSpec::Constant { value } => value.abs(),
            ForcingSpec::Mode { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn sample<S: Element>(&self, like: &S, t: f64) -> S {
        let values = (0..like.len()).map(|i| self.value(t, like.point(i))).collect();
        like.with_values(values)
    }

    /// One sample per mesh node.
    pub fn samples<S: Element>(&self, like: &S, mesh: &TimeMesh) -> Vec<S> {
        mesh.nodes().iter().map(|&t| self.sample(like, t)).collect()
    }
}
