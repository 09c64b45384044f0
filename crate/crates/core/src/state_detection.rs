//! Bright/dark state discrimination by thresholding photon counts.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::detection_chain::{noise_budget, AmplifierChain};
use crate::error::{Error, Result};

/// Background plus detector dark counts assumed when none is given, 1/s.
pub const DEFAULT_DARK_RATE: f64 = 1e3;

/// Largest bright-state mean the time search will explore.
const MAX_BRIGHT_MEAN: f64 = 1e6;

fn default_dark_rate() -> f64 {
    DEFAULT_DARK_RATE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    /// Detected photons/s from a bright ion.
    #[serde(rename = "bright_rate_s")]
    pub bright_rate: f64,
    /// Detected counts/s with the ion dark.
    #[serde(rename = "dark_rate_s", default = "default_dark_rate")]
    pub dark_rate: f64,
    #[serde(rename = "integration_time_s")]
    pub integration_time: f64,
}

impl CountModel {
    /// Rates from scatter rate and total detection efficiency.
    pub fn from_efficiency(scatter_rate: f64, efficiency: f64, dark_rate: f64, integration_time: f64) -> Self {
        CountModel {
            bright_rate: scatter_rate * efficiency,
            dark_rate,
            integration_time,
        }
    }

    pub fn bright_mean(&self) -> f64 {
        self.bright_rate * self.integration_time
    }

    pub fn dark_mean(&self) -> f64 {
        self.dark_rate * self.integration_time
    }

    fn check_rates(&self) -> Result<()> {
        if !(self.bright_rate >= 0.0 && self.dark_rate >= 0.0) || !self.bright_rate.is_finite() || !self.dark_rate.is_finite() {
            return Err(Error::Domain("count rates must be finite and non-negative".into()));
        }
        if !(self.integration_time >= 0.0) || !self.integration_time.is_finite() {
            return Err(Error::Domain(format!("integration time must be non-negative, got {}", self.integration_time)));
        }
        Ok(())
    }
}

/// Threshold decision: counts ≥ `threshold` read as bright.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationResult {
    pub threshold: u64,
    pub fidelity: f64,
    /// Bright read as dark.
    pub p_miss: f64,
    /// Dark read as bright.
    pub p_false: f64,
}

/// Poisson pmf for k = 0..len.
fn poisson_pmf(mean: f64, len: usize) -> Vec<f64> {
    if mean == 0.0 {
        let mut v = vec![0.0; len];
        if len > 0 {
            v[0] = 1.0;
        }
        return v;
    }
    let ln_mean = mean.ln();
    (0..len)
        .map(|k| (k as f64 * ln_mean - mean - ln_gamma(k as f64 + 1.0)).exp())
        .collect()
}

/// P(N < n) for n = 0..=len, summed from below.
pub fn poisson_cdf_below(mean: f64, len: usize) -> Vec<f64> {
    let pmf = poisson_pmf(mean, len);
    let mut out = Vec::with_capacity(len + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for p in pmf {
        acc += p;
        out.push(acc.min(1.0));
    }
    out
}

/// P(N ≥ n) for n = 0..=len, summed from the far tail so small tails keep
/// their relative precision.
pub fn poisson_tail_from(mean: f64, len: usize) -> Vec<f64> {
    // extend well past `len` so the truncated tail is negligible
    let extra = (10.0 * mean.sqrt()).ceil() as usize + 50;
    let upper = len.max((mean + 12.0 * mean.sqrt()).ceil() as usize + 50) + extra;
    let pmf = poisson_pmf(mean, upper);
    let mut tail = vec![0.0; upper + 1];
    for k in (0..upper).rev() {
        tail[k] = tail[k + 1] + pmf[k];
    }
    tail.truncate(len + 1);
    tail[0] = 1.0;
    for t in tail.iter_mut() {
        *t = t.min(1.0);
    }
    tail
}

fn scan(bright_mean: f64, dark_mean: f64) -> DiscriminationResult {
    let n_max = (bright_mean + 10.0 * bright_mean.sqrt()).ceil() as usize;
    let miss = poisson_cdf_below(bright_mean, n_max);
    let false_pos = poisson_tail_from(dark_mean, n_max);
    let mut best = DiscriminationResult {
        threshold: 0,
        fidelity: f64::NEG_INFINITY,
        p_miss: 0.0,
        p_false: 1.0,
    };
    let mut best_err = f64::INFINITY;
    for n in 0..=n_max {
        let err = 0.5 * (miss[n] + false_pos[n]);
        // strict comparison keeps the smallest threshold on ties
        if err < best_err {
            best_err = err;
            best = DiscriminationResult {
                threshold: n as u64,
                fidelity: 1.0 - err,
                p_miss: miss[n],
                p_false: false_pos[n],
            };
        }
    }
    best
}

/// Threshold minimising the mean error over bright and dark states.
pub fn optimal_threshold(m: &CountModel) -> Result<DiscriminationResult> {
    m.check_rates()?;
    let (b, d) = (m.bright_mean(), m.dark_mean());
    if !(b > d) {
        return Err(Error::NotDiscriminable { bright: b, dark: d });
    }
    Ok(scan(b, d))
}

pub fn fidelity_at_time(bright_rate: f64, dark_rate: f64, t: f64) -> Result<f64> {
    let m = CountModel {
        bright_rate,
        dark_rate,
        integration_time: t,
    };
    m.check_rates()?;
    if !(bright_rate > dark_rate) {
        return Err(Error::NotDiscriminable {
            bright: bright_rate,
            dark: dark_rate,
        });
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    Ok(optimal_threshold(&m)?.fidelity)
}

/// Shortest integration time reaching `target` fidelity, to 1 % relative.
pub fn min_integration_time(bright_rate: f64, dark_rate: f64, target: f64) -> Result<f64> {
    if !(target > 0.5 && target < 1.0) {
        return Err(Error::Domain(format!("target fidelity {target} outside (0.5, 1)")));
    }
    let f = |t: f64| fidelity_at_time(bright_rate, dark_rate, t);
    f(0.0)?;

    let t_cap = MAX_BRIGHT_MEAN / bright_rate;
    let mut hi = 1.0 / bright_rate;
    while f(hi)? < target {
        if hi >= t_cap {
            return Err(Error::Infeasible {
                target,
                supremum: f(t_cap)?,
            });
        }
        hi = (2.0 * hi).min(t_cap);
    }
    let mut lo = 0.5 * hi;
    while f(lo)? >= target {
        hi = lo;
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Ok(hi);
        }
    }
    while hi - lo > 0.01 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Gaussian-approximation fidelity for analog readout: photocurrents
/// integrated for `t` with the amplifier's noise over bandwidth 1/(2t).
/// The threshold equalises the two z-scores.
pub fn analog_fidelity(
    chain: &AmplifierChain,
    bright_current: f64,
    dark_current: f64,
    temperature: f64,
    t: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("integration time must be positive, got {t}")));
    }
    if !(bright_current > dark_current) {
        return Err(Error::NotDiscriminable {
            bright: bright_current,
            dark: dark_current,
        });
    }
    let bw = 1.0 / (2.0 * t);
    let sb = noise_budget(chain, bright_current, bw, temperature)?.total_a;
    let sd = noise_budget(chain, dark_current.max(0.0), bw, temperature)?.total_a;
    if sb + sd == 0.0 {
        return Ok(1.0);
    }
    let z = (bright_current - dark_current) / (sb + sd);
    Ok(1.0 - 0.5 * erfc(z / std::f64::consts::SQRT_2))
}
