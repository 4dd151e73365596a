//! Weighted particle ensembles, log-space weight arithmetic and resampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Direction, Result, SmcError};

/// `log(sum(exp(xs)))`, exact for all `-inf` input (returns `-inf`).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Single-pass log-sum-exp accumulator for streamed terms.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Effective sample size `1 / sum(w_i^2)` from normalized log-weights.
pub fn ess(log_norm_weights: &[f64]) -> f64 {
    let s: f64 = log_norm_weights.iter().map(|&l| (2.0 * l).exp()).sum();
    1.0 / s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    /// I.i.d. categorical draws.
    #[default]
    Multinomial,
    Systematic,
}

/// Inverse-CDF sampler over a finite set of nonnegative weights.
#[derive(Debug, Clone)]
pub struct Categorical {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl Categorical {
    /// `None` when every weight is zero.
    pub fn from_log_weights(log_w: &[f64]) -> Option<Self> {
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        Self::from_weights(log_w.iter().map(|&l| (l - max).exp()))
    }

    pub fn from_weights(weights: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut acc = 0.0;
        let mut last_positive = None;
        let cdf: Vec<f64> = weights
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                if w > 0.0 {
                    last_positive = Some(i);
                    acc += w;
                }
                acc
            })
            .collect();
        let last_positive = last_positive?;
        Some(Categorical { cdf, last_positive })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cdf[self.cdf.len() - 1]
    }

    /// Index whose cumulative interval contains `u * total`, `u` in `[0, 1)`.
    pub fn invert(&self, u: f64) -> usize {
        let target = u * self.total();
        self.cdf
            .partition_point(|&c| c <= target)
            .min(self.last_positive)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.invert(rng.random::<f64>())
    }
}

/// Draw `count` ancestor indices from normalized log-weights.
pub fn resample<R: Rng + ?Sized>(
    scheme: Resampling,
    rng: &mut R,
    log_norm_weights: &[f64],
    count: usize,
) -> Vec<usize> {
    let cat = Categorical::from_log_weights(log_norm_weights)
        .expect("resampling requires at least one positive weight");
    match scheme {
        Resampling::Multinomial => (0..count).map(|_| cat.sample(rng)).collect(),
        Resampling::Systematic => {
            let offset: f64 = rng.random();
            let step = 1.0 / count as f64;
            let mut out = Vec::with_capacity(count);
            let mut idx = 0;
            for k in 0..count {
                let target = (offset + k as f64) * step * cat.total();
                while idx < cat.last_positive && cat.cdf[idx] <= target {
                    idx += 1;
                }
                out.push(idx);
            }
            out
        }
    }
}

/// Weighted ensemble at one time step of a forward or backward filter.
#[derive(Debug, Clone)]
pub struct ParticleSystem<S> {
    pub time: usize,
    pub particles: Vec<S>,
    /// Incremental (un-normalized) log-weights `log W_n^i`.
    pub log_weights: Vec<f64>,
    /// `log w_n^i`, log-sum-exp equal to zero.
    pub log_norm_weights: Vec<f64>,
    /// Index of the particle in the previous system (time `n - 1` forward,
    /// `n + 1` backward) that particle `i` was propagated from. Empty for
    /// the first system of a run.
    pub parents: Vec<usize>,
    /// Resampling draws `a_n^i`. The identity permutation when `resampled` is false.
    pub ancestors: Vec<usize>,
    pub resampled: bool,
    /// `log((1/N) sum_l W_n^l)`.
    pub log_nc_factor: f64,
    pub ess: f64,
}

impl<S> ParticleSystem<S> {
    pub(crate) fn from_weights<R: Rng + ?Sized>(
        time: usize,
        direction: Direction,
        particles: Vec<S>,
        log_weights: Vec<f64>,
        parents: Vec<usize>,
        resampling: Option<Resampling>,
        rng: &mut R,
    ) -> Result<Self> {
        debug_assert_eq!(particles.len(), log_weights.len());
        if log_weights.iter().any(|w| w.is_nan()) {
            return Err(SmcError::NanWeight { time, direction });
        }
        let total = log_sum_exp(&log_weights);
        if total == f64::NEG_INFINITY {
            return Err(SmcError::Degenerate { time, direction });
        }
        if total == f64::INFINITY {
            return Err(SmcError::Numerical(format!(
                "{direction} filter weight overflow at time {time}"
            )));
        }
        let n = particles.len();
        let log_norm_weights: Vec<f64> = log_weights.iter().map(|&w| w - total).collect();
        let ess = ess(&log_norm_weights);
        let (ancestors, resampled) = match resampling {
            Some(scheme) => (resample(scheme, rng, &log_norm_weights, n), true),
            None => ((0..n).collect(), false),
        };
        Ok(ParticleSystem {
            time,
            particles,
            log_weights,
            log_norm_weights,
            parents,
            ancestors,
            resampled,
            log_nc_factor: total - (n as f64).ln(),
            ess,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// `sum_i w_n^i phi(x_n^i)`.
    pub fn weighted_mean(&self, phi: impl Fn(&S) -> f64) -> f64 {
        self.particles
            .iter()
            .zip(&self.log_norm_weights)
            .map(|(x, &l)| l.exp() * phi(x))
            .sum()
    }
}
