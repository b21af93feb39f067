//! Evaluation environments: a hyperparameter schema plus an objective that
//! trains the target learner on a split and returns test accuracy.

mod learners;

pub use learners::{toy_learner_env, LearnerEnv, ToyLearner};

use alloc::string::String;
use alloc::vec::Vec;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::{SplitPair, TabularDataset};
use crate::error::{Error, Result};
use crate::stable_hash::{StableHash, StableHasher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    Real,
    Integer,
}

/// Working scale of a hyperparameter: optimization and label transforms act
/// on `log10(value)` for `Log10`-scaled parameters ("u-space").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log10,
}

/// Output activation of the prediction head serving this hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadActivation {
    Tanh,
    Elu,
}

/// One bounded, scale-annotated hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpec {
    pub name: String,
    pub dtype: Dtype,
    pub min: f64,
    pub max: f64,
    pub scale: Scale,
    pub head_activation: HeadActivation,
}

impl HyperparamSpec {
    pub fn real(name: &str, min: f64, max: f64, scale: Scale) -> Self {
        Self {
            name: name.into(),
            dtype: Dtype::Real,
            min,
            max,
            scale,
            head_activation: HeadActivation::Tanh,
        }
    }

    pub fn integer(name: &str, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            dtype: Dtype::Integer,
            min,
            max,
            scale: Scale::Linear,
            head_activation: HeadActivation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min < self.max) {
            return Err(Error::InvalidConfig(alloc::format!(
                "{}: min {} not below max {}",
                self.name,
                self.min,
                self.max
            )));
        }
        if matches!(self.scale, Scale::Log10) && self.min <= 0.0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "{}: log10 scale requires positive min, got {}",
                self.name,
                self.min
            )));
        }
        Ok(())
    }

    /// Raw value to working scale.
    pub fn to_u(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }

    /// Working scale back to a legal raw value: clamps to bounds and rounds
    /// integer parameters to the nearest in-bounds integer.
    pub fn from_u(&self, u: f64) -> f64 {
        let raw = match self.scale {
            Scale::Linear => u,
            Scale::Log10 => Float::powf(10.0f64, u),
        };
        let clamped = raw.clamp(self.min, self.max);
        match self.dtype {
            Dtype::Real => clamped,
            Dtype::Integer => clamped.round().clamp(self.min, self.max),
        }
    }

    pub fn u_min(&self) -> f64 {
        self.to_u(self.min)
    }

    pub fn u_max(&self) -> f64 {
        self.to_u(self.max)
    }

    /// Is `v` a legal value (in bounds; integral for integer dtypes)?
    pub fn contains(&self, v: f64) -> bool {
        if !v.is_finite() || v < self.min || v > self.max {
            return false;
        }
        match self.dtype {
            Dtype::Real => true,
            Dtype::Integer => v.fract() == 0.0,
        }
    }
}

impl StableHash for HyperparamSpec {
    fn stable_hash(&self, h: &mut StableHasher) {
        h.write_str(&self.name);
        h.write_u8(match self.dtype {
            Dtype::Real => 0,
            Dtype::Integer => 1,
        });
        h.write_f64(self.min);
        h.write_f64(self.max);
        h.write_u8(match self.scale {
            Scale::Linear => 0,
            Scale::Log10 => 1,
        });
        h.write_u8(match self.head_activation {
            HeadActivation::Tanh => 0,
            HeadActivation::Elu => 1,
        });
    }
}

/// A concrete assignment aligned with an ordered spec list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamVector {
    pub values: Vec<f64>,
}

impl HyperparamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Check every coordinate against its spec; out-of-range values are
    /// rejected, never clamped.
    pub fn validate_against(&self, specs: &[HyperparamSpec]) -> Result<()> {
        if self.values.len() != specs.len() {
            return Err(Error::InvalidConfig(alloc::format!(
                "vector has {} values for {} specs",
                self.values.len(),
                specs.len()
            )));
        }
        for (i, (v, spec)) in self.values.iter().zip(specs).enumerate() {
            if !spec.contains(*v) {
                return Err(Error::OutOfBounds {
                    index: i,
                    value: *v,
                    min: spec.min,
                    max: spec.max,
                });
            }
        }
        Ok(())
    }
}

/// The objective being tuned: deterministic test accuracy in `[0, 1]` as a
/// function of a hyperparameter vector and a train/test split.
pub trait Environment {
    fn specs(&self) -> &[HyperparamSpec];

    fn evaluate(
        &self,
        p: &HyperparamVector,
        split: &SplitPair<TabularDataset>,
    ) -> Result<f64>;
}

/// Separable concave surrogate with a known argmax:
/// `max(0, 1 - sum_i c_i (v_i - opt_i)^2)`. Ignores the split; it exists to
/// give the local optimizer a landscape with a checkable optimum.
#[derive(Debug, Clone)]
pub struct QuadraticEnv {
    specs: Vec<HyperparamSpec>,
    optimum: Vec<f64>,
    curvature: Vec<f64>,
}

impl QuadraticEnv {
    pub fn new(
        specs: Vec<HyperparamSpec>,
        optimum: Vec<f64>,
        curvature: Vec<f64>,
    ) -> Result<Self> {
        for s in &specs {
            s.validate()?;
        }
        if optimum.len() != specs.len() || curvature.len() != specs.len() {
            return Err(Error::InvalidConfig(
                "optimum/curvature must match spec count".into(),
            ));
        }
        let env = Self {
            specs,
            optimum,
            curvature,
        };
        HyperparamVector::new(env.optimum.clone()).validate_against(&env.specs)?;
        Ok(env)
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }
}

impl Environment for QuadraticEnv {
    fn specs(&self) -> &[HyperparamSpec] {
        &self.specs
    }

    fn evaluate(&self, p: &HyperparamVector, _split: &SplitPair<TabularDataset>) -> Result<f64> {
        p.validate_against(&self.specs)?;
        let mut penalty = 0.0;
        for ((v, opt), c) in p.values.iter().zip(&self.optimum).zip(&self.curvature) {
            let d = v - opt;
            penalty += c * d * d;
        }
        Ok((1.0 - penalty).max(0.0))
    }
}

/// Two-parameter concave quadratic whose principal axes are rotated by
/// `angle` radians; at angle 0 it coincides with [`QuadraticEnv`]. The
/// cross-coordinate coupling makes it a stress case for coordinate search.
#[derive(Debug, Clone)]
pub struct RotatedQuadraticEnv {
    specs: Vec<HyperparamSpec>,
    optimum: [f64; 2],
    curvature: [f64; 2],
    angle: f64,
}

impl RotatedQuadraticEnv {
    pub fn new(
        specs: Vec<HyperparamSpec>,
        optimum: [f64; 2],
        curvature: [f64; 2],
        angle: f64,
    ) -> Result<Self> {
        if specs.len() != 2 {
            return Err(Error::InvalidConfig(
                "rotated environment needs exactly 2 parameters".into(),
            ));
        }
        for s in &specs {
            s.validate()?;
        }
        let env = Self {
            specs,
            optimum,
            curvature,
            angle,
        };
        HyperparamVector::new(env.optimum.to_vec()).validate_against(&env.specs)?;
        Ok(env)
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }
}

impl Environment for RotatedQuadraticEnv {
    fn specs(&self) -> &[HyperparamSpec] {
        &self.specs
    }

    fn evaluate(&self, p: &HyperparamVector, _split: &SplitPair<TabularDataset>) -> Result<f64> {
        p.validate_against(&self.specs)?;
        let d0 = p.values[0] - self.optimum[0];
        let d1 = p.values[1] - self.optimum[1];
        let (sin, cos) = self.angle.sin_cos();
        let q0 = cos * d0 + sin * d1;
        let q1 = -sin * d0 + cos * d1;
        let penalty = self.curvature[0] * q0 * q0 + self.curvature[1] * q1 * q1;
        Ok((1.0 - penalty).max(0.0))
    }
}
