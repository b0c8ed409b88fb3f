//! Sub-density of the Brownian-scale statistic at analysis `j` among paths
//! that continued through analyses `1..j`, computed by the Armitage-style
//! convolution recursion on per-analysis Simpson grids.
//!
//! Each closed stage stores the sub-density on its continuation interval,
//! clipped to `mu_j ± half_width * sqrt(f_j)`, with the interval endpoints
//! as grid nodes. Quantities at the next analysis (pointwise density, tail
//! masses, conditional means) are integrals against that grid with an
//! analytic Gaussian kernel, so they are smooth in their argument.

use serde::{Deserialize, Serialize};

use crate::normal;
use crate::quadrature::simpson_weights;
use crate::{Error, Result};

/// Grid resolution on the Brownian scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Target node spacing.
    #[serde(default = "GridSpec::default_step")]
    pub step: f64,
    /// Half-width of the per-analysis window, in standard deviations.
    #[serde(default = "GridSpec::default_half_width")]
    pub half_width: f64,
}

impl GridSpec {
    fn default_step() -> f64 {
        16.0 / 4000.0
    }

    fn default_half_width() -> f64 {
        8.0
    }

    /// Divides the spacing by `factor`.
    pub fn refined(self, factor: f64) -> Self {
        Self {
            step: self.step / factor,
            ..self
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            step: Self::default_step(),
            half_width: Self::default_half_width(),
        }
    }
}

/// Continuation interval `(lo, hi)` on the Brownian scale; either end may be
/// infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lo: f64,
    pub hi: f64,
}

impl Region {
    pub const ALL: Region = Region {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn below(hi: f64) -> Self {
        Region {
            lo: f64::NEG_INFINITY,
            hi,
        }
    }
}

#[derive(Debug, Clone)]
struct Stage {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    moment: Vec<f64>,
    weights: Vec<f64>,
}

impl Stage {
    fn node(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }
}

// kernel support in standard deviations for pointwise convolutions
const KERNEL_SD: f64 = 10.0;
// coarsest admissible spacing relative to the smallest kernel sd
const MIN_NODES_PER_SD: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct StoppingDensity {
    fractions: Vec<f64>,
    drift: Vec<f64>,
    grid: GridSpec,
    moment_divisor: Option<f64>,
    stages: Vec<Stage>,
}

impl StoppingDensity {
    /// Starts a recursion for the given information fractions and drift
    /// values (both indexed by analysis).
    pub fn new(fractions: &[f64], drift: &[f64], grid: GridSpec) -> Result<Self> {
        if fractions.is_empty() || fractions.len() != drift.len() {
            return Err(Error::invalid("fractions and drift must be non-empty and of equal length"));
        }
        if !(grid.step > 0.0 && grid.half_width > 0.0) {
            return Err(Error::invalid("grid step and half-width must be > 0"));
        }
        let mut prev = 0.0;
        for (j, &f) in fractions.iter().enumerate() {
            if !(f - prev > 0.0) || !f.is_finite() {
                return Err(Error::NonIncreasingInformation { analysis: j + 1 });
            }
            let sd = (f - prev).sqrt();
            if grid.step * MIN_NODES_PER_SD > sd {
                return Err(Error::GridTooCoarse {
                    analysis: j + 1,
                    step: grid.step,
                    sd,
                });
            }
            prev = f;
        }
        Ok(Self {
            fractions: fractions.to_vec(),
            drift: drift.to_vec(),
            grid,
            moment_divisor: None,
            stages: Vec::new(),
        })
    }

    /// Also carries `E[X_1 / divisor ; path]` through the recursion, so that
    /// [`conditional_mean`](Self::conditional_mean) is available.
    pub fn with_conditional_mean(mut self, divisor: f64) -> Self {
        assert!(self.stages.is_empty(), "must be enabled before closing stages");
        self.moment_divisor = Some(divisor);
        self
    }

    pub fn analyses(&self) -> usize {
        self.fractions.len()
    }

    pub fn fraction(&self, j: usize) -> f64 {
        self.fractions[j - 1]
    }

    /// Number of analyses whose continuation region has been fixed.
    pub fn closed(&self) -> usize {
        self.stages.len()
    }

    fn increment(&self, j: usize) -> f64 {
        if j == 1 {
            self.fractions[0]
        } else {
            self.fractions[j - 1] - self.fractions[j - 2]
        }
    }

    fn drift_step(&self, j: usize) -> f64 {
        if j == 1 {
            self.drift[0]
        } else {
            self.drift[j - 1] - self.drift[j - 2]
        }
    }

    fn check_open(&self, j: usize) {
        assert!(
            j >= 1 && j <= self.stages.len() + 1 && j <= self.fractions.len(),
            "analysis {j} not available (closed through {})",
            self.stages.len()
        );
    }

    /// Fixes the continuation region of the next analysis and tabulates its
    /// sub-density there.
    pub fn close(&mut self, region: Region) -> Result<()> {
        let j = self.stages.len() + 1;
        if j > self.fractions.len() {
            return Err(Error::invalid("all analyses already closed"));
        }
        let centre = self.drift[j - 1];
        let sd = self.fractions[j - 1].sqrt();
        let lo = region.lo.max(centre - self.grid.half_width * sd);
        let hi = region.hi.min(centre + self.grid.half_width * sd);
        let stage = if !(hi > lo) {
            Stage {
                lo: 0.0,
                step: 0.0,
                values: Vec::new(),
                moment: Vec::new(),
                weights: Vec::new(),
            }
        } else {
            let mut m = ((hi - lo) / self.grid.step).ceil() as usize;
            m = m.max(2);
            if m % 2 == 1 {
                m += 1;
            }
            let step = (hi - lo) / m as f64;
            let nodes: Vec<f64> = (0..=m).map(|k| lo + k as f64 * step).collect();
            let (values, moment): (Vec<f64>, Vec<f64>) = if j == 1 {
                let f1 = self.fractions[0];
                nodes
                    .iter()
                    .map(|&x| {
                        let p = normal::pdf_var(x - centre, f1);
                        let g = self.moment_divisor.map_or(0.0, |c| x / c * p);
                        (p, g)
                    })
                    .unzip()
            } else {
                nodes.iter().map(|&x| self.convolve(j, x)).unzip()
            };
            Stage {
                lo,
                step,
                values,
                moment,
                weights: simpson_weights(m + 1, step),
            }
        };
        self.stages.push(stage);
        Ok(())
    }

    /// (density, moment) at analysis `j >= 2` by convolving stage `j - 1`.
    fn convolve(&self, j: usize, x: f64) -> (f64, f64) {
        let prev = &self.stages[j - 2];
        if prev.values.is_empty() {
            return (0.0, 0.0);
        }
        let var = self.increment(j);
        let sd = var.sqrt();
        let shift = self.drift_step(j);
        let centre = x - shift;
        let last = prev.values.len() - 1;
        let k_lo = (((centre - KERNEL_SD * sd) - prev.lo) / prev.step).floor().max(0.0) as usize;
        let k_hi_f = (((centre + KERNEL_SD * sd) - prev.lo) / prev.step).ceil();
        if k_hi_f < 0.0 || k_lo > last {
            return (0.0, 0.0);
        }
        let k_hi = (k_hi_f as usize).min(last);
        let with_moment = self.moment_divisor.is_some();
        let (mut dens, mut mom) = (0.0, 0.0);
        for k in k_lo..=k_hi {
            let kern = normal::pdf((centre - prev.node(k)) / sd) / sd;
            let w = prev.weights[k] * kern;
            dens += w * prev.values[k];
            if with_moment {
                mom += w * prev.moment[k];
            }
        }
        (dens, mom)
    }

    /// Sub-density `pi((j, x))`.
    pub fn density(&self, j: usize, x: f64) -> f64 {
        self.check_open(j);
        if j == 1 {
            normal::pdf_var(x - self.drift[0], self.fractions[0])
        } else {
            self.convolve(j, x).0
        }
    }

    /// `E[X_1 / divisor | J >= j, X_j = x]` for paths continuing through
    /// analyses before `j`. Requires [`with_conditional_mean`](Self::with_conditional_mean).
    pub fn conditional_mean(&self, j: usize, x: f64) -> Option<f64> {
        self.check_open(j);
        let c = self.moment_divisor?;
        if j == 1 {
            return Some(x / c);
        }
        let (d, m) = self.convolve(j, x);
        (d > 0.0).then(|| m / d)
    }

    fn kernel_sum(&self, j: usize, tail: impl Fn(f64) -> f64) -> f64 {
        let prev = &self.stages[j - 2];
        prev.values
            .iter()
            .zip(&prev.weights)
            .enumerate()
            .map(|(k, (v, w))| w * v * tail(prev.node(k)))
            .sum()
    }

    /// `int_x^inf pi((j, xi)) dxi`.
    pub fn tail_mass(&self, j: usize, x: f64) -> f64 {
        self.check_open(j);
        let sd = self.increment(j).sqrt();
        let shift = self.drift_step(j);
        if j == 1 {
            return normal::sf((x - shift) / sd);
        }
        self.kernel_sum(j, |xi| normal::sf((x - xi - shift) / sd))
    }

    /// `int_-inf^x pi((j, xi)) dxi`.
    pub fn lower_mass(&self, j: usize, x: f64) -> f64 {
        self.check_open(j);
        let sd = self.increment(j).sqrt();
        let shift = self.drift_step(j);
        if j == 1 {
            return normal::cdf((x - shift) / sd);
        }
        self.kernel_sum(j, |xi| normal::cdf((x - xi - shift) / sd))
    }

    /// Total mass of the sub-density at analysis `j`, i.e. the probability of
    /// reaching analysis `j`.
    pub fn total_mass(&self, j: usize) -> f64 {
        self.check_open(j);
        if j == 1 {
            return 1.0;
        }
        self.continuation_mass(j - 1)
    }

    /// Mass on the closed continuation region of analysis `j`.
    pub fn continuation_mass(&self, j: usize) -> f64 {
        let s = &self.stages[j - 1];
        s.values.iter().zip(&s.weights).map(|(v, w)| v * w).sum()
    }

    /// Grid nodes and sub-density values of a closed analysis.
    pub fn grid(&self, j: usize) -> (Vec<f64>, &[f64]) {
        let s = &self.stages[j - 1];
        ((0..s.values.len()).map(|k| s.node(k)).collect(), &s.values)
    }
}
