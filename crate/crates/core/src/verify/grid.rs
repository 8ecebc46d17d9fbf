use crate::parallel::Execution;
use crate::{Error, Result, Vector};
use serde::{Deserialize, Serialize};

/// One grid axis: `count` equally spaced samples on `[min, max]`, or a single
/// fixed value when `count == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn range(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn fixed(value: f64) -> Self {
        Self {
            min: value,
            max: value,
            count: 1,
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        if self.count <= 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * k as f64 / (self.count - 1) as f64
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidArgument(format!("grid axis {name} has a non-finite range")));
        }
        match self.count {
            0 => Err(Error::InvalidArgument(format!("grid axis {name} has no samples"))),
            1 if self.min != self.max => Err(Error::InvalidArgument(format!(
                "grid axis {name} is active (min != max) and needs at least 2 samples"
            ))),
            c if c >= 2 && self.min > self.max => {
                Err(Error::InvalidArgument(format!("grid axis {name} has min > max")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationGrid {
    /// One axis per state.
    pub x: Vec<Axis>,
    /// One axis per extended-matched parameter.
    #[serde(default)]
    pub theta: Vec<Axis>,
    /// Largest eigenvalue accepted as "≤ 0".
    #[serde(default = "default_eps_psd")]
    pub eps_psd: f64,
    #[serde(default)]
    pub execution: Execution,
}

fn default_eps_psd() -> f64 {
    1e-8
}

impl VerificationGrid {
    /// 61 × 41 grid over `x₁ ∈ [−3, 3]`, `θ₁ ∈ [−2, 2]` with `x₂ = x₃ = 0`,
    /// sufficient for metrics depending on `x₁` and `θ₁` only.
    pub fn example_default() -> Self {
        Self {
            x: vec![Axis::range(-3.0, 3.0, 61), Axis::fixed(0.0), Axis::fixed(0.0)],
            theta: vec![Axis::range(-2.0, 2.0, 41)],
            eps_psd: default_eps_psd(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.x.len() != n {
            return Err(Error::Dimension(format!("grid has {} state axes, system has {n} states", self.x.len())));
        }
        if self.theta.len() != p {
            return Err(Error::Dimension(format!(
                "grid has {} parameter axes, system has {p} extended-matched parameters",
                self.theta.len()
            )));
        }
        for (i, a) in self.x.iter().enumerate() {
            a.validate(&format!("x{}", i + 1))?;
        }
        for (i, a) in self.theta.iter().enumerate() {
            a.validate(&format!("theta{}", i + 1))?;
        }
        if self.eps_psd.is_nan() || self.eps_psd < 0.0 {
            return Err(Error::InvalidArgument("eps_psd must be non-negative".into()));
        }
        Ok(())
    }

    fn axes(&self) -> impl Iterator<Item = &Axis> {
        self.x.iter().chain(self.theta.iter())
    }

    pub fn len(&self) -> usize {
        self.axes().map(|a| a.count.max(1)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample `index` in lexicographic order (first axis most significant).
    pub fn point(&self, index: usize) -> (Vector, Vector) {
        let axes: Vec<&Axis> = self.axes().collect();
        let mut vals = vec![0.0; axes.len()];
        let mut rem = index;
        for (slot, a) in axes.iter().enumerate().rev() {
            let c = a.count.max(1);
            vals[slot] = a.value(rem % c);
            rem /= c;
        }
        let n = self.x.len();
        (
            Vector::from_column_slice(&vals[..n]),
            Vector::from_column_slice(&vals[n..]),
        )
    }
}
